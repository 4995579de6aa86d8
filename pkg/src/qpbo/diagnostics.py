"""Conserved functionals, exact-identity residuals and inequality audits.

All functionals are Fourier sums over the coefficient lattice; products
entering them are taken on the full Minkowski box so no truncation error is
introduced by the monitor itself.

CSV column order for :class:`DiagnosticsReport` rows::

    time, mass, momentum, energy, h1_law, h1_law_proof, hs_<s>..., res_<name>...

``hs_<s>`` columns follow the configured s-list order; residual columns are
sorted by name.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .field import (
    QpField, chi_cutoff, d_dx, delta_regularize, frac_deriv, hilbert, l1_coeff_norm,
    leibniz_commutator, multiply, pair, power, random_field, sobolev_norm, project, without_mean,
)
from .lattice import FrequencyBasis

#: Coefficient of the ``u_x^2`` term in the H^1-level law as stated.
H1_STATED_COEFF = -1.5
#: Coefficient used in the conservation argument for the same law.
H1_PROOF_COEFF = 2.0

IDENTITY_NAMES = ("shift", "annihilation", "integration_by_parts", "cotlar", "linear_term")


def mass(u: QpField) -> float:
    return float(u.mean.real)


def momentum(u: QpField) -> float:
    c = u.coeffs
    return float(np.sum(c.real ** 2 + c.imag ** 2))


def energy(u: QpField) -> float:
    """``sum (1/3) F{u^2}(k) u(-k) + F{H u_x}(k) u(-k)``."""
    sq = multiply(u, u, full=True)
    return float((pair(sq, u) / 3.0 + pair(hilbert(d_dx(u)), u)).real)


def h1_law_terms(u: QpField) -> tuple[float, float, float]:
    """Averages of ``u^4``, ``u^2 H u_x`` and ``u_x^2``.

    ``sum F{u^3}(k) u(-k)`` equals ``sum F{u^2}(k) F{u^2}(-k)``; the latter
    needs only the 2K box.
    """
    sq = multiply(u, u, full=True)
    ux = d_dx(u)
    quartic = pair(sq, sq).real
    cubic = pair(sq, hilbert(ux)).real
    quadratic = pair(ux, ux).real
    return float(quartic), float(cubic), float(quadratic)


def h1_law(u: QpField, ux_coeff: float = H1_STATED_COEFF) -> float:
    q4, q3, q2 = h1_law_terms(u)
    return 0.25 * q4 + 1.5 * q3 + ux_coeff * q2


@dataclass
class DiagnosticsReport:
    time: float
    mass: float
    momentum: float
    energy: float
    h1_law: float
    h1_law_proof: float
    sobolev_norms: dict = field(default_factory=dict)
    identity_residuals: dict = field(default_factory=dict)

    def columns(self) -> list[str]:
        cols = ["time", "mass", "momentum", "energy", "h1_law", "h1_law_proof"]
        cols += [f"hs_{s:g}" for s in self.sobolev_norms]
        cols += [f"res_{k}" for k in sorted(self.identity_residuals)]
        return cols

    def values(self) -> list[float]:
        vals = [self.time, self.mass, self.momentum, self.energy, self.h1_law, self.h1_law_proof]
        vals += list(self.sobolev_norms.values())
        vals += [self.identity_residuals[k] for k in sorted(self.identity_residuals)]
        return vals

    def is_finite(self) -> bool:
        return all(math.isfinite(v) for v in self.values())


def diagnostics_report(u: QpField, t: float = 0.0, s_list: Sequence[float] = (),
                       residuals: bool = False, s_identity: float = 2.0) -> DiagnosticsReport:
    q4, q3, q2 = h1_law_terms(u)
    return DiagnosticsReport(
        time=float(t),
        mass=mass(u),
        momentum=momentum(u),
        energy=energy(u),
        h1_law=0.25 * q4 + 1.5 * q3 + H1_STATED_COEFF * q2,
        h1_law_proof=0.25 * q4 + 1.5 * q3 + H1_PROOF_COEFF * q2,
        sobolev_norms={float(s): sobolev_norm(u, s) for s in s_list},
        identity_residuals=identity_suite(u, s_identity) if residuals else {},
    )


# exact identities

def _rel(diff: float, scale: float) -> float:
    return 0.0 if scale == 0 else abs(diff) / scale


def _abs_pair(u: QpField, v: QpField) -> float:
    """``sum |u(k)| |v(-k)|``: magnitude scale of a pairing sum."""
    return pair(u._new(np.abs(u.coeffs), False), v._new(np.abs(v.coeffs), False)).real


def identity_suite(u: QpField, s: float = 2.0, exact: bool = True) -> dict[str, float]:
    """Normalized residuals of the exact Fourier-sum identities.

    With ``exact=False`` products are aliased cyclic convolutions on u's own
    box (negative control).  Cotlar's identity is applied to ``u`` minus its
    mean, since ``sgn(0) = 0`` breaks it on the constant mode.
    """
    if exact:
        mul = lambda a, b: multiply(a, b, full=True)
    else:
        mul = lambda a, b: multiply(project(a, u.radius), project(b, u.radius), dealias=False)

    out = {}
    f, g, h = u, hilbert(u), d_dx(u)
    terms = [pair(mul(f, g), h), pair(f, mul(g, h)), pair(g, mul(f, h))]
    scale = max(_abs_pair(mul(f, g), h), _abs_pair(f, mul(g, h)), _abs_pair(g, mul(f, h)))
    out["shift"] = _rel(max(abs(a - b) for a in terms for b in terms), scale)

    ux = d_dx(u)
    worst = 0.0
    p = None
    for n in range(4):
        p = power(u, 0) if n == 0 else (u if n == 1 else mul(p, u))
        worst = max(worst, _rel(abs(pair(p, ux)), _abs_pair(p, ux)))
    out["annihilation"] = worst

    v = hilbert(u)
    lhs = pair(mul(v, ux), u)
    rhs = -0.5 * pair(mul(d_dx(v), u), u)
    scale = max(_abs_pair(mul(v, ux), u), 0.5 * _abs_pair(mul(d_dx(v), u), u))
    out["integration_by_parts"] = _rel(abs(lhs - rhs), scale)

    f0 = without_mean(u)
    hf = hilbert(f0)
    left = mul(hf, hf) - mul(f0, f0)
    right = 2.0 * hilbert(mul(f0, hf))
    scale = max(np.abs(mul(hf, hf).coeffs).max(), np.abs(mul(f0, f0).coeffs).max())
    out["cotlar"] = _rel(float(np.abs((left - right).coeffs).max()), scale)

    ds = frac_deriv(u, s)
    lin = hilbert(d_dx(ds, 2))
    out["linear_term"] = _rel(abs(pair(lin, ds)), _abs_pair(lin, ds))
    return out


# inequality audits

@dataclass
class AuditReport:
    seed: int
    trials: int
    s: float
    worst: dict = field(default_factory=dict)

    def exact_ok(self, tol: float = 1e-12) -> bool:
        return all(self.worst[k] <= 1 + tol for k in EXACT_INEQUALITIES)


#: Audited ratios that are exact inequalities for every basis (must stay <= 1).
EXACT_INEQUALITIES = ("interpolation", "difference_est_scaled", "rd1", "rd2")


def inequality_audit(seed: int, trials: int, s: float, basis: FrequencyBasis,
                     decay: float | None = None) -> AuditReport:
    """Worst-case left/right ratios over seeded random real fields.

    Fields have Gaussian coefficients with profile ``<k>^-(s+1)`` on the
    whole box.  Ratios of inequalities with unspecified constants (Sobolev
    l1 bound, algebra property, fractional Leibniz) are reported as the
    empirical constant; the rest are exact and must not exceed 1.

    ``difference_est`` is the band estimate
    ``||(chi_n - chi_m) v|| <= max(1/n, 1/m)^l ||D^l v||``, which relies on
    ``|alpha.k| <= |k|`` and so can exceed 1 when ``|alpha| > 1``;
    ``difference_est_scaled`` carries the missing ``|alpha|^l`` and is exact.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if s <= basis.dim / 2 + 1:
        raise ValueError(f"need s > N/2 + 1 = {basis.dim / 2 + 1:g}")
    rng = np.random.default_rng(seed)
    decay = s + 1 if decay is None else decay
    s0 = s - 1
    top = basis.max_frequency
    worst = {k: 0.0 for k in ("sobolev_l1", "algebra", "leibniz", "difference_est")
             + EXACT_INEQUALITIES}
    alpha_norm = math.sqrt(sum(a * a for a in basis.alpha))
    for _ in range(trials):
        u = random_field(basis, rng, decay=decay)
        v = random_field(basis, rng, decay=decay)
        hs = sobolev_norm(u, s)
        worst["sobolev_l1"] = max(worst["sobolev_l1"], l1_coeff_norm(u) / hs)
        worst["algebra"] = max(worst["algebra"],
                               sobolev_norm(multiply(u, v, full=True), s) / (hs * sobolev_norm(v, s)))
        comm = sobolev_norm(leibniz_commutator(u, v, s), 0)
        bound = hs * sobolev_norm(v, s0) + sobolev_norm(u, s0 + 1) * sobolev_norm(v, s - 1)
        worst["leibniz"] = max(worst["leibniz"], comm / bound)

        l = rng.uniform(0.1, s + 2)
        p = rng.uniform(0, l)
        interp = sobolev_norm(u, p) / (sobolev_norm(u, l) ** (p / l) * sobolev_norm(u, 0) ** (1 - p / l))
        worst["interpolation"] = max(worst["interpolation"], interp)

        n, m = rng.uniform(0.5, top, size=2)
        diff = chi_cutoff(v, n) - chi_cutoff(v, m)
        for lev in (0.5, 1.0, 2.0):
            rhs = max(1 / n, 1 / m) ** lev * sobolev_norm(frac_deriv(v, lev), 0)
            lhs = sobolev_norm(diff, 0)
            worst["difference_est"] = max(worst["difference_est"], lhs / rhs)
            worst["difference_est_scaled"] = max(worst["difference_est_scaled"],
                                                 lhs / (alpha_norm ** lev * rhs))

        delta = rng.uniform(1.0, basis.box_radius)
        ud = delta_regularize(u, delta)
        base = sobolev_norm(ud, s)
        for j in (1, 2):
            worst["rd1"] = max(worst["rd1"], sobolev_norm(ud, s + j) / ((2 * delta ** 2) ** (j / 2) * base))
        tail = np.sum((basis.norm > delta) * basis.norm ** (2 * s) * np.abs(u.coeffs) ** 2)
        if tail > 0:
            worst["rd2"] = max(worst["rd2"],
                               sobolev_norm(ud - u, 0) * delta ** s / math.sqrt(tail))
    return AuditReport(seed, trials, s, worst)
