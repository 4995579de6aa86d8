"""Coefficient fields on the frequency lattice and the operators acting on them.

A :class:`QpField` holds ``u_hat(k)`` for every ``k`` in the box of its basis,
stored as a dense complex array of shape ``(2K+1,) * N`` whose row-major
flattening follows :func:`qpbo.lattice.enumerate_box`.  Operators are pure
functions returning new fields.

Products are lattice convolutions.  ``multiply(u, v, full=True)`` keeps the
whole Minkowski-sum box (radius ``K_u + K_v``) so the result is the exact
coefficient array of the pointwise product; the default projects back onto
the larger of the two input boxes.  Both routes are alias-free.  Passing
``dealias=False`` instead performs a cyclic convolution on the input grid,
which is what a naive pseudospectral product does; it exists only as a
negative control for the identity checks.

``|alpha . k| <= max_i |alpha_i| * sqrt(N) * |k|`` is the constant that links
the physical and lattice magnitudes; the fractional Leibniz audit reports
its empirical constant without folding this in.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.fft as sfft

from .lattice import FrequencyBasis, make_basis

#: Tolerance for the Hermitian-symmetry invariant of real fields.
HERMITIAN_TOL = 1e-12

FORMAT_VERSION = 1


class BasisMismatch(ValueError):
    pass


def _reflect(c: np.ndarray) -> np.ndarray:
    """Array of ``c(-k)`` for a centered box array."""
    return c[(slice(None, None, -1),) * c.ndim]


def _symmetrize(c: np.ndarray) -> np.ndarray:
    return 0.5 * (c + np.conj(_reflect(c)))


def _resize(c: np.ndarray, radius: int) -> np.ndarray:
    """Pad with zeros or truncate a centered box array to ``radius``."""
    old = (c.shape[0] - 1) // 2
    if radius == old:
        return c
    if radius < old:
        cut = old - radius
        return c[(slice(cut, c.shape[0] - cut),) * c.ndim]
    pad = radius - old
    return np.pad(c, pad)


@dataclass(frozen=True, eq=False)
class QpField:
    basis: FrequencyBasis
    coeffs: np.ndarray
    is_real: bool = True

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.shape != self.basis.shape:
            raise ValueError(f"coefficient shape {c.shape} does not match box {self.basis.shape}")
        if not np.all(np.isfinite(c)):
            raise FloatingPointError("field has non-finite coefficients")
        if self.is_real:
            c = _symmetrize(c)
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)

    @property
    def radius(self) -> int:
        return self.basis.box_radius

    def __getitem__(self, k: Sequence[int]) -> complex:
        try:
            return complex(self.coeffs[self.basis.index(k)])
        except IndexError:
            return 0j

    @property
    def mean(self) -> complex:
        return complex(self.coeffs.flat[self.basis.center])

    def _new(self, coeffs: np.ndarray, is_real: bool | None = None,
             basis: FrequencyBasis | None = None) -> "QpField":
        return QpField(basis or self.basis, coeffs, self.is_real if is_real is None else is_real)

    def support_radius(self, tol: float = 0.0) -> int:
        """Largest ``max_i |k_i|`` over coefficients with modulus > tol."""
        idx = np.nonzero(np.abs(self.coeffs) > tol)
        if len(idx[0]) == 0:
            return 0
        return int(max(np.abs(i - self.radius).max() for i in idx))

    def hermitian_defect(self) -> float:
        return float(np.abs(self.coeffs - np.conj(_reflect(self.coeffs))).max())

    # arithmetic; fields of different radius are embedded in the larger box

    def _align(self, other: "QpField") -> tuple[FrequencyBasis, np.ndarray, np.ndarray]:
        if not self.basis.compatible(other.basis):
            raise BasisMismatch("fields live on different frequency bases")
        r = max(self.radius, other.radius)
        return (self.basis.with_radius(r), _resize(self.coeffs, r), _resize(other.coeffs, r))

    def __add__(self, other: "QpField") -> "QpField":
        basis, a, b = self._align(other)
        return QpField(basis, a + b, self.is_real and other.is_real)

    def __sub__(self, other: "QpField") -> "QpField":
        basis, a, b = self._align(other)
        return QpField(basis, a - b, self.is_real and other.is_real)

    def __neg__(self) -> "QpField":
        return self._new(-self.coeffs)

    def __mul__(self, scalar) -> "QpField":
        if isinstance(scalar, QpField):
            return multiply(self, scalar)
        scalar = complex(scalar)
        return self._new(self.coeffs * scalar, self.is_real and scalar.imag == 0)

    __rmul__ = __mul__

    def __truediv__(self, scalar) -> "QpField":
        return self * (1.0 / scalar)

    def __repr__(self) -> str:
        nnz = int(np.count_nonzero(self.coeffs))
        return (f"QpField(N={self.basis.dim}, K={self.radius}, is_real={self.is_real}, "
                f"nonzero={nnz}, L2={sobolev_norm(self, 0):.6g})")


def zeros(basis: FrequencyBasis, is_real: bool = True) -> QpField:
    return QpField(basis, np.zeros(basis.shape, dtype=complex), is_real)


def make_field(basis: FrequencyBasis, modes: Iterable[tuple[Sequence[int], complex]] = (),
               is_real: bool = True) -> QpField:
    """Build a field from ``(k, amplitude)`` entries.

    With ``is_real`` every entry whose reflection ``-k`` is not listed gets the
    conjugate amplitude there, so ``[((1, 0), 0.5)]`` is ``cos(alpha_1 x)``.
    """
    c = np.zeros(basis.shape, dtype=complex)
    given = set()
    for k, amp in modes:
        idx = basis.index(k)
        c[idx] += complex(amp)
        given.add(tuple(int(v) for v in k))
    if is_real:
        for k in given:
            mk = tuple(-v for v in k)
            if mk not in given:
                c[basis.index(mk)] = np.conj(c[basis.index(k)])
    return QpField(basis, c, is_real)


def from_function_modes(basis: FrequencyBasis, cos_modes=(), sin_modes=(), constant=0.0) -> QpField:
    """Real field ``c + sum a cos(alpha.k x) + sum b sin(alpha.k x)``."""
    entries = [((0,) * basis.dim, constant)] if constant else []
    for k, a in cos_modes:
        entries.append((k, 0.5 * a))
    for k, b in sin_modes:
        entries.append((k, -0.5j * b))
    return make_field(basis, entries, True)


def random_field(basis: FrequencyBasis, rng: np.random.Generator, *, decay: float = 0.0,
                 support: int | None = None, zero_mean: bool = False,
                 is_real: bool = True) -> QpField:
    """Gaussian coefficients with profile ``<k>^-decay`` on ``|k_i| <= support``."""
    shape = basis.shape
    c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    c *= (1.0 + basis.norm_sq) ** (-0.5 * decay)
    if support is not None:
        mask = np.ones(shape, dtype=bool)
        for g in basis.grids:
            mask &= np.abs(g) <= support
        c *= mask
    if zero_mean:
        c.flat[basis.center] = 0.0
    return QpField(basis, c, is_real)


def without_mean(u: QpField) -> QpField:
    c = u.coeffs.copy()
    c.flat[u.basis.center] = 0.0
    return u._new(c)


def project(u: QpField, radius: int) -> QpField:
    """Restrict to (or zero-pad into) the box of the given radius."""
    return u._new(_resize(u.coeffs, int(radius)), basis=u.basis.with_radius(int(radius)))


def evaluate(u: QpField, x) -> complex | np.ndarray:
    """Point values ``sum_k u_hat(k) exp(i (alpha.k) x)``."""
    x = np.asarray(x, dtype=float)
    nz = np.nonzero(u.coeffs.reshape(-1))[0]
    freq = u.basis.physical.reshape(-1)[nz]
    amp = u.coeffs.reshape(-1)[nz]
    vals = np.exp(1j * np.multiply.outer(x, freq)) @ amp
    return complex(vals) if vals.ndim == 0 else vals


def imaginary_residual(u: QpField, x) -> float:
    return float(np.max(np.abs(np.imag(evaluate(u, x)))))


# Fourier multipliers

def apply_multiplier(u: QpField, symbol: np.ndarray, preserves_real: bool = True) -> QpField:
    return u._new(u.coeffs * symbol, u.is_real and preserves_real)


def hilbert(u: QpField) -> QpField:
    """Multiplier ``-i sgn(alpha.k)``; the mean is annihilated."""
    return apply_multiplier(u, -1j * u.basis.sign)


def d_dx(u: QpField, order: int = 1) -> QpField:
    return apply_multiplier(u, (1j * u.basis.physical) ** order)


def frac_deriv(u: QpField, s: float) -> QpField:
    """``|k|^s`` multiplier (lattice norm).  ``s = 0`` is the identity."""
    if s < 0:
        raise ValueError(f"fractional order must be nonnegative, got {s}")
    return apply_multiplier(u, u.basis.euclid(s))


def chi_mask(basis: FrequencyBasis, n: float) -> np.ndarray:
    return np.abs(basis.physical) < n


def chi_cutoff(u: QpField, n: float) -> QpField:
    """Keep modes with ``|alpha.k| < n``; ``n = inf`` is the identity."""
    if not n > 0:
        raise ValueError(f"cutoff level must be positive, got {n}")
    if math.isinf(n):
        return u
    return apply_multiplier(u, chi_mask(u.basis, n))


def delta_mask(basis: FrequencyBasis, delta: float) -> np.ndarray:
    return basis.norm <= delta


def delta_regularize(u: QpField, delta: float) -> QpField:
    """Keep modes with Euclidean ``|k| <= delta``."""
    if not delta > 0:
        raise ValueError(f"regularization radius must be positive, got {delta}")
    if math.isinf(delta):
        return u
    return apply_multiplier(u, delta_mask(u.basis, delta))


# products

def convolve_direct(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Full lattice convolution by explicit double sum (reference route)."""
    ra, rb = (a.shape[0] - 1) // 2, (b.shape[0] - 1) // 2
    out = np.zeros((2 * (ra + rb) + 1,) * a.ndim, dtype=complex)
    for idx in zip(*np.nonzero(a)):
        sl = tuple(slice(i, i + b.shape[0]) for i in idx)
        out[sl] += a[idx] * b
    return out


def convolve_fft(a: np.ndarray, b: np.ndarray, out_radius: int | None = None) -> np.ndarray:
    """Lattice convolution by zero-padded FFT, restricted to ``|k_i| <= out_radius``.

    The grid has at least ``ra + rb + out_radius + 1`` points per axis, so no
    wrapped term lands inside the requested window.
    """
    ra, rb = (a.shape[0] - 1) // 2, (b.shape[0] - 1) // 2
    full = ra + rb
    r = full if out_radius is None else min(int(out_radius), full)
    m = sfft.next_fast_len(full + r + 1)
    axes = tuple(range(a.ndim))
    fa = sfft.fftn(a, s=(m,) * a.ndim, axes=axes)
    fb = sfft.fftn(b, s=(m,) * b.ndim, axes=axes)
    c = sfft.ifftn(fa * fb, axes=axes)
    win = slice(full - r, full + r + 1)
    out = c[(win,) * a.ndim]
    if out_radius is not None and out_radius > full:
        out = _resize(out, int(out_radius))
    return out


def convolve_cyclic(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Aliased product: cyclic convolution on the ``2K+1`` grid of the inputs."""
    if a.shape != b.shape:
        raise ValueError("cyclic product needs equal boxes")
    r = (a.shape[0] - 1) // 2
    axes = tuple(range(a.ndim))
    c = sfft.ifftn(sfft.fftn(a, axes=axes) * sfft.fftn(b, axes=axes), axes=axes)
    return np.roll(c, (-r,) * a.ndim, axis=axes)


def multiply(u: QpField, v: QpField, *, full: bool = False, dealias: bool = True,
             method: str = "fft") -> QpField:
    """Coefficients of the pointwise product ``u v``.

    ``full`` returns the whole Minkowski-sum box; otherwise the exact product
    is projected onto ``max(K_u, K_v)``.  ``dealias=False`` is the aliased
    negative control.
    """
    if not u.basis.compatible(v.basis):
        raise BasisMismatch("cannot multiply fields on different frequency bases")
    is_real = u.is_real and v.is_real
    if not dealias:
        basis, a, b = u._align(v)
        return QpField(basis, convolve_cyclic(a, b), is_real)
    if full:
        out_r = u.radius + v.radius
    else:
        out_r = max(u.radius, v.radius)
    if method == "direct":
        c = _resize(convolve_direct(u.coeffs, v.coeffs), out_r)
    elif method == "fft":
        c = convolve_fft(u.coeffs, v.coeffs, out_r)
    else:
        raise ValueError(f"unknown convolution method {method!r}")
    return QpField(u.basis.with_radius(out_r), c, is_real)


def power(u: QpField, n: int, *, full: bool = True) -> QpField:
    """``u^n``; ``n = 0`` is the constant 1 on u's box."""
    if n < 0:
        raise ValueError("negative powers are not supported")
    if n == 0:
        return make_field(u.basis, [((0,) * u.basis.dim, 1.0)], u.is_real)
    out = u
    for _ in range(n - 1):
        out = multiply(out, u, full=full)
    return out


# norms and pairings

def sobolev_norm(u: QpField, s: float = 0.0) -> float:
    w = u.basis.bracket(s) if s else 1.0
    return math.sqrt(float(np.sum(w * (u.coeffs.real ** 2 + u.coeffs.imag ** 2))))


def l1_coeff_norm(u: QpField) -> float:
    return float(np.sum(np.abs(u.coeffs)))


def pair(u: QpField, v: QpField) -> complex:
    """``sum_k u_hat(k) v_hat(-k)``, the averaged integral of ``u v``."""
    if not u.basis.compatible(v.basis):
        raise BasisMismatch("cannot pair fields on different frequency bases")
    r = min(u.radius, v.radius)
    a = _resize(u.coeffs, r)
    b = _resize(v.coeffs, r)
    return complex(np.sum(a * _reflect(b)))


def conj_reflect(u: QpField) -> QpField:
    """Coefficients of ``conj(u(x))``: ``k -> conj(u_hat(-k))``."""
    return u._new(np.conj(_reflect(u.coeffs)))


def leibniz_commutator(u: QpField, v: QpField, s: float) -> QpField:
    """``D^s(u v) - u D^s v`` with exact products on the Minkowski box."""
    if s <= 1:
        raise ValueError(f"commutator estimate needs s > 1, got {s}")
    return frac_deriv(multiply(u, v, full=True), s) - multiply(u, frac_deriv(v, s), full=True)


# serialization

def to_dict(u: QpField) -> dict:
    flat = u.coeffs.reshape(-1)
    return {
        "format": "qpbo-field",
        "version": FORMAT_VERSION,
        "N": u.basis.dim,
        "alpha": list(u.basis.alpha),
        "K": u.radius,
        "is_real": bool(u.is_real),
        # repr of a Python float round-trips exactly; hex keeps it explicit
        "coefficients": [[float(z.real).hex(), float(z.imag).hex()] for z in flat],
    }


def from_dict(data: dict) -> QpField:
    if data.get("format") != "qpbo-field":
        raise ValueError("not a qpbo field record")
    basis = make_basis(data["alpha"], data["K"])
    if int(data["N"]) != basis.dim:
        raise ValueError("N disagrees with alpha length")
    coeffs = np.array([complex(float.fromhex(re), float.fromhex(im))
                       for re, im in data["coefficients"]], dtype=complex)
    if coeffs.size != basis.size:
        raise ValueError(f"expected {basis.size} coefficients, got {coeffs.size}")
    c = coeffs.reshape(basis.shape)
    field = QpField.__new__(QpField)
    # bypass re-symmetrization so the round trip is bit exact
    if not np.all(np.isfinite(c)):
        raise FloatingPointError("field has non-finite coefficients")
    c.flags.writeable = False
    object.__setattr__(field, "basis", basis)
    object.__setattr__(field, "coeffs", c)
    object.__setattr__(field, "is_real", bool(data["is_real"]))
    return field


def dumps(u: QpField) -> str:
    return json.dumps(to_dict(u))


def loads(text: str) -> QpField:
    return from_dict(json.loads(text))


def save(u: QpField, path: str | Path) -> None:
    Path(path).write_text(dumps(u) + "\n")


def load(path: str | Path) -> QpField:
    return loads(Path(path).read_text())
