"""Regularized Benjamin-Ono flow: right-hand side, steppers, Picard map, envelopes.

The evolution is

    u_t = chi_n[(chi_n u)(chi_n u)_x] + chi_n[H u_xx]

on the Galerkin box.  The quadratic term is evaluated in conservative form,
``d/dx (v^2 / 2)`` with ``v = chi_n u``, from an alias-free product; the
``alpha . 0 = 0`` multiplier then makes the mean of the right-hand side
exactly zero in floating point.
"""
from __future__ import annotations

import logging
import math
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .field import (
    QpField, chi_mask, convolve_fft, delta_regularize, sobolev_norm, frac_deriv,
)
from .lattice import FrequencyBasis

log = logging.getLogger(__name__)

INTEGRATORS = ("rk4", "ifrk4")

#: Simpson sub-intervals used by the Picard map.
PICARD_NODES = 16


class BlowUpError(FloatingPointError):
    """Non-finite coefficients appeared during time stepping."""

    def __init__(self, time: float, trajectory: "TrajectoryRecord | None" = None):
        super().__init__(f"solution blew up at t = {time:.6g}")
        self.time = time
        self.trajectory = trajectory


class PicardDivergence(RuntimeError):
    pass


@dataclass(frozen=True)
class FlowParams:
    n: float
    delta: float = math.inf
    s: float = 2.5
    dt: float = 1e-3
    t_end: float = 0.5
    integrator: str = "ifrk4"
    gronwall_C: float = 1.0
    nonlinear: bool = True
    linear: bool = True
    regularize_data: bool = True

    def __post_init__(self):
        if not self.n > 0:
            raise ValueError(f"n must be positive, got {self.n}")
        if not self.delta > 0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        if not self.dt >= 0:
            raise ValueError(f"dt must be nonnegative, got {self.dt}")
        if not self.t_end >= 0:
            raise ValueError(f"t_end must be nonnegative, got {self.t_end}")
        if self.integrator not in INTEGRATORS:
            raise ValueError(f"integrator must be one of {INTEGRATORS}, got {self.integrator!r}")
        if not self.gronwall_C > 0:
            raise ValueError("gronwall_C must be positive")

    def check_basis(self, basis: FrequencyBasis) -> None:
        if not self.s > basis.dim / 2 + 1:
            raise ValueError(f"need s > N/2 + 1 = {basis.dim / 2 + 1:g}, got s = {self.s:g}")

    def replace(self, **changes) -> "FlowParams":
        return replace(self, **changes)


def linear_symbol(basis: FrequencyBasis, n: float = math.inf) -> np.ndarray:
    """Symbol of ``chi_n H d^2/dx^2``: ``i sgn(a.k) (a.k)^2`` on the cutoff set."""
    sym = 1j * basis.sign * basis.physical ** 2
    if not math.isinf(n):
        sym = sym * chi_mask(basis, n)
    return sym


def stable_dt(basis: FrequencyBasis, n: float, integrator: str = "rk4") -> float:
    """Default step: ``0.5 / max|a.k|^2`` over active modes, 10x looser for ifrk4."""
    freq = np.abs(basis.physical)
    if not math.isinf(n):
        freq = freq[freq < n]
    top = float(freq.max()) if freq.size else 0.0
    dt = 0.5 / top ** 2 if top > 0 else 1.0
    return dt * 10 if integrator == "ifrk4" else dt


def nonlinear_term(u: QpField, n: float) -> np.ndarray:
    basis = u.basis
    mask = None if math.isinf(n) else chi_mask(basis, n)
    v = u.coeffs if mask is None else u.coeffs * mask
    sq = convolve_fft(v, v, basis.box_radius)
    out = 0.5j * basis.physical * sq
    return out if mask is None else out * mask


def _rhs_coeffs(u: QpField, n: float, nonlinear: bool, linear: bool,
                symbol: Optional[np.ndarray] = None) -> np.ndarray:
    out = np.zeros(u.basis.shape, dtype=complex)
    if nonlinear:
        out += nonlinear_term(u, n)
    if linear:
        out += (linear_symbol(u.basis, n) if symbol is None else symbol) * u.coeffs
    return out


def bo_rhs(u: QpField, n: float, *, nonlinear: bool = True, linear: bool = True) -> QpField:
    """Right-hand side of the regularized flow, Galerkin-projected onto u's box."""
    return u._new(_rhs_coeffs(u, n, nonlinear, linear))


def linear_phase(u: QpField, t: float, n: float = math.inf) -> QpField:
    """Exact solution operator of ``u_t = chi_n H u_xx``."""
    return u._new(np.exp(linear_symbol(u.basis, n) * t) * u.coeffs)


@contextmanager
def _stage_guard(t: float):
    """Report an intermediate stage overflowing as a blow-up at ``t``."""
    try:
        yield
    except BlowUpError:
        raise
    except FloatingPointError as err:
        raise BlowUpError(t) from err


def _checked(u: QpField, c: np.ndarray, t: float) -> QpField:
    if not np.isfinite(c).all():
        raise BlowUpError(t)
    return u._new(c)


def step_rk4(u: QpField, params: FlowParams, t: float = 0.0, dt: float | None = None) -> QpField:
    h = params.dt if dt is None else dt
    if h == 0:
        return u
    n, nl, li = params.n, params.nonlinear, params.linear
    sym = linear_symbol(u.basis, n)
    f = lambda c: _rhs_coeffs(u._new(c), n, nl, li, sym)
    c0 = u.coeffs
    with np.errstate(over="ignore", invalid="ignore"), _stage_guard(t + h):
        k1 = f(c0)
        k2 = f(c0 + 0.5 * h * k1)
        k3 = f(c0 + 0.5 * h * k2)
        k4 = f(c0 + h * k3)
        c = c0 + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
    return _checked(u, c, t + h)


def step_ifrk4(u: QpField, params: FlowParams, t: float = 0.0, dt: float | None = None) -> QpField:
    """Integrating-factor RK4: the linear part is advanced exactly."""
    h = params.dt if dt is None else dt
    if h == 0:
        return u
    n = params.n
    sym = linear_symbol(u.basis, n) if params.linear else np.zeros(u.basis.shape)
    e_half = np.exp(0.5 * h * sym)
    e_full = np.exp(h * sym)
    c0 = u.coeffs
    if not params.nonlinear:
        return _checked(u, e_full * c0, t + h)
    f = lambda c: nonlinear_term(u._new(c), n)
    with np.errstate(over="ignore", invalid="ignore"), _stage_guard(t + h):
        k1 = f(c0)
        k2 = f(e_half * (c0 + 0.5 * h * k1))
        k3 = f(e_half * c0 + 0.5 * h * k2)
        k4 = f(e_full * c0 + h * e_half * k3)
        c = e_full * c0 + (h / 6.0) * (e_full * k1 + 2.0 * e_half * (k2 + k3) + k4)
    return _checked(u, c, t + h)


STEPPERS = {"rk4": step_rk4, "ifrk4": step_ifrk4}


@dataclass
class TrajectoryRecord:
    times: list[float] = field(default_factory=list)
    states: list[QpField] = field(default_factory=list)
    diagnostics: list = field(default_factory=list)

    def append(self, t: float, u: QpField, report=None) -> None:
        if self.times and not t > self.times[-1]:
            raise ValueError("snapshot times must increase")
        self.times.append(t)
        self.states.append(u)
        self.diagnostics.append(report)

    @property
    def final(self) -> QpField:
        return self.states[-1]


Monitor = Callable[[float, QpField], object]


def initial_state(u0: QpField, params: FlowParams) -> QpField:
    if params.regularize_data and not math.isinf(params.delta):
        return delta_regularize(u0, params.delta)
    return u0


def step_count(params: FlowParams) -> int:
    if params.t_end == 0:
        return 0
    if params.dt == 0:
        raise ValueError("dt = 0 with t_end > 0 never terminates")
    return max(1, int(math.ceil(params.t_end / params.dt - 1e-9)))


def evolve(u0: QpField, params: FlowParams, snapshot_stride: int = 1,
           monitor: Monitor | None = None, keep_states: bool = True) -> TrajectoryRecord:
    """Integrate from 0 to ``t_end`` with uniform steps ``t_end / ceil(t_end / dt)``.

    ``monitor(t, u)`` is evaluated at every snapshot (default: the standard
    diagnostics report at ``params.s``).
    """
    if not u0.is_real:
        raise ValueError("evolve expects real-valued initial data")
    if snapshot_stride < 1:
        raise ValueError("snapshot_stride must be >= 1")
    if monitor is None:
        from .diagnostics import diagnostics_report

        monitor = lambda t, u: diagnostics_report(u, t, s_list=(params.s,))
    stepper = STEPPERS[params.integrator]
    steps = step_count(params)
    h = params.t_end / steps if steps else 0.0
    u = initial_state(u0, params)
    rec = TrajectoryRecord()
    rec.append(0.0, u if keep_states else None, monitor(0.0, u))
    for i in range(1, steps + 1):
        t_prev = (i - 1) * h
        try:
            u = stepper(u, params, t_prev, h)
        except BlowUpError as err:
            err.trajectory = rec
            log.warning("blow-up at t=%g after %d steps", err.time, i)
            raise
        if i % snapshot_stride == 0 or i == steps:
            t = i * h
            rec.append(t, u if keep_states else None, monitor(t, u))
    return rec


@dataclass
class PicardResult:
    state: QpField
    residual: float
    residuals: list[float]
    path: list[QpField]


def _cumulative_simpson(values: np.ndarray, h: float) -> np.ndarray:
    """Running integral from node 0 on an even number of equal sub-intervals."""
    m = values.shape[0] - 1
    out = np.zeros_like(values)
    for j in range(2, m + 1, 2):
        out[j] = out[j - 2] + (h / 3.0) * (values[j - 2] + 4.0 * values[j - 1] + values[j])
    for j in range(1, m, 2):
        out[j] = out[j - 1] + (h / 12.0) * (5.0 * values[j - 1] + 8.0 * values[j] - values[j + 1])
    return out


def picard_iterate(u0: QpField, params: FlowParams, t: float, iters: int = 50,
                   tol: float = 0.0, nodes: int = PICARD_NODES) -> PicardResult:
    """Iterate ``u -> u0 + int_0^tau F(u)`` on a fixed Simpson grid of [0, t].

    Stops early once the sup-in-time H^s residual is at or below ``tol``;
    raises :class:`PicardDivergence` if it grows three iterations in a row.
    """
    if nodes % 2:
        raise ValueError("Simpson grid needs an even number of sub-intervals")
    h = t / nodes
    n, s = params.n, params.s
    path = np.broadcast_to(u0.coeffs, (nodes + 1,) + u0.coeffs.shape).copy()
    residuals: list[float] = []
    growth = 0
    for _ in range(max(1, iters)):
        rhs = np.stack([_rhs_coeffs(u0._new(c), n, params.nonlinear, params.linear) for c in path])
        new = u0.coeffs + _cumulative_simpson(rhs, h)
        if not np.isfinite(new).all():
            raise PicardDivergence("non-finite Picard iterate")
        diff = new - path
        w = u0.basis.bracket(s)
        res = float(max(np.sqrt(np.sum(w * np.abs(d) ** 2)) for d in diff))
        path = np.stack([u0._new(c).coeffs for c in new])
        if residuals and res > residuals[-1]:
            growth += 1
            if growth >= 3:
                raise PicardDivergence(f"Picard residual grew three times in a row (t = {t:g})")
        else:
            growth = 0
        residuals.append(res)
        if res <= tol:
            break
    states = [u0._new(c) for c in path]
    return PicardResult(states[-1], residuals[-1], residuals, states)


def envelope_base(u0: QpField, s: float) -> float:
    """``||D^s u0||_{L^2} + ||u0||_{L^2}``."""
    return sobolev_norm(frac_deriv(u0, s), 0) + sobolev_norm(u0, 0)


def time_of_existence(u0: QpField, s: float, C: float) -> float:
    if not C > 0:
        raise ValueError("C must be positive")
    base = envelope_base(u0, s)
    return math.inf if base == 0 else 1.0 / (C * base)


def derivative_envelope(u0: QpField, s: float, C: float, t: float) -> float:
    """Gronwall bound on ``||D^s u(t)||``: ``((base)^-1 - C t)^-1``."""
    base = envelope_base(u0, s)
    if base == 0:
        return 0.0
    denom = 1.0 / base - C * t
    if denom <= 0:
        raise ValueError(f"t = {t:g} is beyond the envelope blow-up time {1 / (C * base):g}")
    return 1.0 / denom


def apriori_envelope(u0: QpField, s: float, C: float, t: float) -> float:
    """``||u0||_{H^s} + ((||u0||_{H^s})^-1 - C t)^-1``."""
    a = sobolev_norm(u0, s)
    if a == 0:
        return 0.0
    denom = 1.0 / a - C * t
    if denom <= 0:
        raise ValueError(f"t = {t:g} is beyond the envelope blow-up time {1 / (C * a):g}")
    return a + 1.0 / denom
