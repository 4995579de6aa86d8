"""Desk-scale studies of the a priori bounds, Cauchy estimates and conservation laws.

Each study returns a :class:`StudyResult` (table rows, pass flag, fitted
numbers) and can write itself out as one CSV plus one JSON summary.  Every
study is a deterministic function of its :class:`StudyConfig`.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .diagnostics import energy, h1_law_terms, H1_PROOF_COEFF, H1_STATED_COEFF
from .dynamics import (
    FlowParams, derivative_envelope, evolve, time_of_existence, apriori_envelope,
)
from .field import (
    QpField, delta_regularize, frac_deriv, make_field, project, random_field, sobolev_norm,
)
from .lattice import FrequencyBasis, make_basis

C_GRID = tuple(2.0 ** j for j in range(-10, 11))


class CalibrationError(RuntimeError):
    pass


@dataclass
class StudyConfig:
    alpha: tuple = (1.0, math.sqrt(2.0))
    K: int = 32
    s: float = 4.0
    n: float = 8.0
    delta: float = math.inf
    dt: float = 1e-3
    t_end: float = 0.5
    integrator: str = "ifrk4"
    initial: str = "two-cosine"
    modes: list = field(default_factory=list)
    amplitude: float = 1.0
    seed: int = 0
    snapshot_stride: int = 10
    gronwall_C: float | None = None

    def __post_init__(self):
        self.alpha = tuple(float(a) for a in self.alpha)
        if not self.s > len(self.alpha) / 2 + 1:
            raise ValueError(f"s must exceed N/2 + 1 = {len(self.alpha) / 2 + 1:g} (got {self.s:g})")
        if self.initial not in ("two-cosine", "modes", "random"):
            raise ValueError(f"unknown initial data {self.initial!r}")

    @property
    def basis(self) -> FrequencyBasis:
        return make_basis(self.alpha, self.K)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["alpha"] = list(self.alpha)
        d["delta"] = None if math.isinf(self.delta) else self.delta
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def params(self, **over) -> FlowParams:
        kw = dict(n=self.n, delta=self.delta, s=self.s, dt=self.dt, t_end=self.t_end,
                  integrator=self.integrator)
        kw.update(over)
        return FlowParams(**kw)


def initial_data(cfg: StudyConfig, basis: FrequencyBasis | None = None) -> QpField:
    """Initial field named by the config.

    ``two-cosine`` is ``amplitude * sum_j cos(alpha_j x)``; ``random`` draws
    Gaussian coefficients with profile ``<k>^-(s+1)`` rescaled to L2 norm
    ``amplitude``; ``modes`` takes explicit ``[[k...], re, im]`` entries.
    """
    basis = basis or cfg.basis
    dim = basis.dim
    if cfg.initial == "two-cosine":
        entries = []
        for j in range(dim):
            k = [0] * dim
            k[j] = 1
            entries.append((k, 0.5 * cfg.amplitude))
        return make_field(basis, entries)
    if cfg.initial == "modes":
        return make_field(basis, [(k, complex(re, im)) for k, re, im in cfg.modes])
    # drawn on the configured box, so a different simulation box sees the same modes
    rng = np.random.default_rng(cfg.seed)
    u = random_field(basis.with_radius(cfg.K), rng, decay=cfg.s + 1)
    u = u * (cfg.amplitude / sobolev_norm(u, 0))
    return project(u, basis.box_radius)


@dataclass
class StudyResult:
    study: str
    columns: list[str]
    rows: list[list]
    passed: bool
    summary: dict = field(default_factory=dict)
    messages: list[str] = field(default_factory=list)

    def write(self, out_dir: str | Path, cfg: StudyConfig) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / f"{self.study}.csv"
        write_csv(csv_path, self.columns, self.rows)
        summary = {
            "study": self.study,
            "config_hash": cfg.config_hash(),
            "passed": bool(self.passed),
            **self.summary,
            "messages": self.messages,
        }
        json_path = out / f"{self.study}.json"
        json_path.write_text(json.dumps(summary, indent=2, sort_keys=True, default=_jsonable) + "\n")
        return csv_path, json_path


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.bool_):
        return bool(x)
    raise TypeError(type(x))


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return format(float(x), ".17g")


def write_csv(path: str | Path, columns: Sequence[str], rows: Sequence[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def loglog_slope(x: Sequence[float], y: Sequence[float]) -> float:
    slope, _ = np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)
    return float(slope)


# calibration

def _norm_monitor(s: float):
    def monitor(t, u):
        return (sobolev_norm(frac_deriv(u, s), 0), sobolev_norm(u, s))
    return monitor


def calibrate_gronwall_C(u0: QpField, s: float, runs: Sequence[FlowParams],
                         grid: Sequence[float] = C_GRID, stride: int = 10) -> tuple[float, list]:
    """Smallest grid C for which every run stays under both Gronwall envelopes.

    The derivative envelope ``((||D^s v0|| + ||v0||)^-1 - C t)^-1`` (with
    ``v0`` the run's regularized data) bounds ``||D^s u(t)||`` and the
    a priori envelope in terms of ``||u0||_{H^s}`` bounds ``||u(t)||_{H^s}``.
    C is also required to keep ``t_end`` inside both envelopes' lifetime.
    """
    samples = []
    for p in runs:
        rec = evolve(u0, p, snapshot_stride=stride, monitor=_norm_monitor(s), keep_states=False)
        v0 = delta_regularize(u0, p.delta) if p.regularize_data and not math.isinf(p.delta) else u0
        samples.append((p, v0, rec.times, rec.diagnostics))

    def admissible(C: float) -> bool:
        for p, v0, times, norms in samples:
            if p.t_end >= time_of_existence(v0, s, C):
                return False
            a = sobolev_norm(u0, s)
            if a > 0 and p.t_end >= 1.0 / (C * a):
                return False
            for t, (ds, hs) in zip(times, norms):
                if ds > derivative_envelope(v0, s, C, t) or hs > apriori_envelope(u0, s, C, t):
                    return False
        return True

    for C in grid:
        if admissible(C):
            return float(C), samples
    raise CalibrationError(f"no C in [{grid[0]:g}, {grid[-1]:g}] bounds the runs")


def calibrate_study(cfg: StudyConfig, n_list: Sequence[float] = (4, 8, 16, 32)) -> StudyResult:
    u0 = initial_data(cfg)
    runs = [cfg.params(n=n) for n in n_list]
    try:
        C, samples = calibrate_gronwall_C(u0, cfg.s, runs, stride=cfg.snapshot_stride)
    except CalibrationError as err:
        return StudyResult("calibrate-C", ["n", "t", "ds_norm", "hs_norm"], [], False,
                           {"C": None}, [str(err)])
    rows = []
    for p, v0, times, norms in samples:
        for t, (ds, hs) in zip(times, norms):
            rows.append([p.n, t, ds, hs, derivative_envelope(v0, cfg.s, C, t),
                         apriori_envelope(u0, cfg.s, C, t)])
    cols = ["n", "t", "ds_norm", "hs_norm", "ds_envelope", "hs_envelope"]
    return StudyResult("calibrate-C", cols, rows, True,
                       {"C": C, "T_existence": time_of_existence(u0, cfg.s, C)})


# studies

def uniform_bound_study(cfg: StudyConfig, C: float, n_list: Sequence[float] = (4, 8, 16, 32)) -> StudyResult:
    """Measured ``||u_n(t)||_{H^s}`` against the a priori envelope for each n."""
    u0 = initial_data(cfg)
    s = cfg.s
    rows, msgs, ok = [], [], True
    finals = []
    for n in n_list:
        p = cfg.params(n=n)
        rec = evolve(u0, p, snapshot_stride=cfg.snapshot_stride,
                     monitor=lambda t, u: sobolev_norm(u, s), keep_states=False)
        finals.append(rec.times[-1])
        for t, hs in zip(rec.times, rec.diagnostics):
            try:
                env = apriori_envelope(u0, s, C, t)
            except ValueError:
                env = math.inf
                ok = False
                msgs.append(f"envelope blew up before t={t:g} (n={n:g})")
            good = hs <= env
            if not good:
                ok = False
                msgs.append(f"bound violated at n={n:g}, t={t:g}: {hs:.6g} > {env:.6g}")
            rows.append([n, t, hs, env, good])
    common = all(f == finals[0] for f in finals)
    if not common:
        ok = False
        msgs.append("runs did not reach a common final time")
    return StudyResult("uniform-bound", ["n", "t", "hs_norm", "envelope", "ok"], rows, ok,
                       {"C": C, "n_list": list(n_list), "t_end": finals[0] if finals else None,
                        "common_interval": common}, msgs)


def refined_bound_study(cfg: StudyConfig, l: float = 1.0,
                        deltas: Sequence[float] = (2, 4, 8, 16)) -> StudyResult:
    """Growth in delta of ``max_t ||u_{n,delta}||_{H^{s+l}}``; slope must be <= l + 0.2."""
    if l < 0:
        raise ValueError("l must be nonnegative")
    u0 = initial_data(cfg)
    s = cfg.s
    base = sobolev_norm(u0, s)
    rows, measured, msgs = [], [], []
    rd1_ok = True
    for d in deltas:
        p = cfg.params(delta=d)
        ud = delta_regularize(u0, d)
        rd1_lhs = sobolev_norm(ud, s + l)
        rd1_rhs = (2 * d * d) ** (l / 2) * sobolev_norm(ud, s)
        if rd1_lhs > rd1_rhs:
            rd1_ok = False
            msgs.append(f"RD1 constant violated at delta={d:g}")
        rec = evolve(u0, p, snapshot_stride=cfg.snapshot_stride,
                     monitor=lambda t, u: sobolev_norm(u, s + l), keep_states=False)
        peak = max(rec.diagnostics)
        measured.append(peak)
        rows.append([d, peak, d ** l * base, rd1_lhs, rd1_rhs])
    slope = loglog_slope(deltas, measured) if all(m > 0 for m in measured) else 0.0
    ok = rd1_ok and slope <= l + 0.2
    if slope > l + 0.2:
        msgs.append(f"fitted exponent {slope:.4f} exceeds {l + 0.2:g}")
    cols = ["delta", "max_hs_l_norm", "delta_l_u0_hs", "rd1_lhs_t0", "rd1_rhs_t0"]
    return StudyResult("refined-bound", cols, rows, ok,
                       {"l": l, "fitted_exponent": slope, "rd1_ok": rd1_ok})


def epsilon_interval(s: float) -> tuple[float, float]:
    r = (s - 2) / s
    return (2.0 / 3.0 * r, r)


def default_epsilon(s: float) -> float:
    lo, hi = epsilon_interval(s)
    return 0.5 * (lo + hi)


def coupled_delta(n: float, s: float, eps: float) -> float:
    return n ** ((s - 2) / s - eps)


def _sup_diff(a: list[QpField], b: list[QpField], s: float) -> float:
    return max(sobolev_norm(x - y, s) for x, y in zip(a, b))


def cauchy_study(cfg: StudyConfig, epsilon: float | None = None,
                 n_list: Sequence[float] = (4, 8, 16, 32), slack: float = 1.2) -> StudyResult:
    """Sup-in-time differences of consecutive coupled levels ``(n, n^((s-2)/s - eps))``."""
    s = cfg.s
    eps = default_epsilon(s) if epsilon is None else float(epsilon)
    lo, hi = epsilon_interval(s)
    if not lo < eps < hi:
        raise ValueError(f"epsilon must lie in ({lo:.6g}, {hi:.6g}) for s = {s:g}, got {eps:g}")
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("n_list must be strictly increasing")
    u0 = initial_data(cfg)
    levels = [(float(n), coupled_delta(n, s, eps)) for n in n_list]
    trajs = []
    for n, d in levels:
        rec = evolve(u0, cfg.params(n=n, delta=d), snapshot_stride=cfg.snapshot_stride,
                     monitor=lambda t, u: None)
        trajs.append(rec)
    norms = (0.0, s - 1, s)
    rows, diffs = [], []
    for (n1, d1), (n2, d2), a, b in zip(levels, levels[1:], trajs, trajs[1:]):
        if a.times != b.times:
            raise RuntimeError("levels did not share snapshot times")
        row = [_sup_diff(a.states, b.states, q) for q in norms]
        diffs.append(row)
        rows.append([n1, d1, n2, d2] + row)
    msgs, ok = [], True
    cols = np.array(diffs) if diffs else np.zeros((0, 3))
    onset = None
    for j, name in enumerate(("L2", "Hs-1", "Hs")):
        col = cols[:, j]
        for i in range(len(col) - 1):
            if col[i + 1] > slack * col[i]:
                ok = False
                msgs.append(f"{name} difference increased at level {i + 1}: {col[i + 1]:.3e} > {slack}x{col[i]:.3e}")
    l2 = cols[:, 0]
    rate = 2.0 ** (s - 2)
    ratios = [float(l2[i] / l2[i + 1]) if l2[i + 1] > 0 else math.inf for i in range(len(l2) - 1)]
    for i, (n1, n2) in enumerate(zip(n_list[1:], n_list[2:])):
        need = (n2 / n1) ** (s - 2) / 2.0
        if ratios[i] < need:
            ok = False
            msgs.append(f"L2 difference decayed by {ratios[i]:.3g} < {need:.3g} between levels {i} and {i + 1}")
        elif onset is None:
            onset = i
    summary = {"epsilon": eps, "epsilon_interval": [lo, hi],
               "levels": [[n, d] for n, d in levels], "l2_decay_ratios": ratios,
               "predicted_ratio_per_doubling": rate, "decay_onset_pair": onset,
               "hs_final_below_first": bool(len(cols) > 1 and cols[-1, 2] < cols[0, 2])}
    if len(cols) > 1 and not cols[-1, 2] < cols[0, 2]:
        ok = False
        msgs.append("final H^s difference is not below the first")
    return StudyResult("cauchy", ["n1", "delta1", "n2", "delta2", "diff_l2", "diff_hs_minus_1", "diff_hs"],
                       rows, ok, summary, msgs)


DRIFT_QUANTITIES = ("mass", "momentum", "energy", "h1_law", "h1_law_proof")


def _functionals(t, u):
    q4, q3, q2 = h1_law_terms(u)
    c = u.coeffs
    return (u.mean.real, float(np.sum(c.real ** 2 + c.imag ** 2)), energy(u),
            0.25 * q4 + 1.5 * q3 + H1_STATED_COEFF * q2,
            0.25 * q4 + 1.5 * q3 + H1_PROOF_COEFF * q2)


def drift_run(u0: QpField, params: FlowParams, stride: int) -> dict:
    """Max-in-time and end-time drift of each conserved functional.

    Mass drift is absolute; the others are relative to their initial value.
    """
    rec = evolve(u0, params, snapshot_stride=stride, monitor=_functionals, keep_states=False)
    vals = np.array(rec.diagnostics)
    q0 = vals[0]
    scale = np.array([1.0] + [abs(q) if q != 0 else 1.0 for q in q0[1:]])
    dev = (vals - q0) / scale
    return {"max": np.abs(dev).max(axis=0), "end": dev[-1], "initial": q0}


def fitted_order(d4: float, d2: float, d1: float) -> float:
    """Observed order from three end drifts at dt = 4h, 2h, h."""
    num, den = abs(d4 - d2), abs(d2 - d1)
    if den == 0 or num == 0:
        return math.inf if den == 0 else 0.0
    return math.log2(num / den)


def conservation_drift_study(cfg: StudyConfig,
                             levels: Sequence[tuple[float, int]] = ((8, 32), (16, 48), (32, 64)),
                             h: float | None = None, min_order: float = 3.5) -> StudyResult:
    """dt sweep {4h, 2h, h} of conservation drift at each (n, K) truncation level.

    Orders come from successive differences of the end-time drift, which works
    whether or not the functional is an exact invariant of the truncated
    system.  The truncation-induced part is the Richardson limit
    ``D(h) + (D(h) - D(2h)) / 15``; its magnitude must not increase with
    (n, K) beyond a roundoff floor of ``100 * steps * eps`` (relative), below
    which an exactly conserved functional cannot be resolved.
    """
    h = cfg.dt if h is None else h
    rows, msgs, ok = [], [], True
    summary: dict = {"levels": [], "orders": {}, "momentum_ratio": {}, "truncation_drift": {}}
    trunc = {q: [] for q in DRIFT_QUANTITIES}
    for n, K in levels:
        basis = make_basis(cfg.alpha, K)
        u0 = initial_data(cfg, basis)
        res = {}
        for dt in (4 * h, 2 * h, h):
            stride = max(1, int(round(cfg.snapshot_stride * h / dt)))
            res[dt] = drift_run(u0, cfg.params(n=n, dt=dt), stride)
            rows.append([n, K, dt] + list(res[dt]["max"]) + list(res[dt]["end"]))
        e4, e2, e1 = (res[d]["end"] for d in (4 * h, 2 * h, h))
        key = f"n={n:g},K={K}"
        summary["levels"].append([n, K])
        orders = {q: fitted_order(e4[i], e2[i], e1[i]) for i, q in enumerate(DRIFT_QUANTITIES)}
        summary["orders"][key] = orders
        m2, m1 = res[2 * h]["max"][1], res[h]["max"][1]
        summary["momentum_ratio"][key] = float(m2 / m1) if m1 > 0 else math.inf
        for i, q in enumerate(DRIFT_QUANTITIES):
            trunc[q].append(float(e1[i] + (e1[i] - e2[i]) / 15.0))
        if res[h]["max"][0] > 1e-13:
            ok = False
            msgs.append(f"mass drift {res[h]['max'][0]:.3e} at {key}")
        for q in ("momentum", "energy", "h1_law_proof"):
            if orders[q] < min_order:
                ok = False
                msgs.append(f"{q} drift order {orders[q]:.2f} < {min_order} at {key}")
    floor = 100 * math.ceil(cfg.t_end / h) * np.finfo(float).eps
    summary["roundoff_floor"] = floor
    summary["truncation_drift"] = trunc
    for q in ("energy", "h1_law_proof"):
        mags = [abs(v) for v in trunc[q]]
        for a, b in zip(mags, mags[1:]):
            if b > max(a, floor):
                ok = False
                msgs.append(f"{q} truncation drift grew with (n, K): {a:.3e} -> {b:.3e}")
    summary["stated_h1_truncation_drift"] = trunc["h1_law"]
    cols = (["n", "K", "dt"] + [f"{q}_max_drift" for q in DRIFT_QUANTITIES]
            + [f"{q}_end_drift" for q in DRIFT_QUANTITIES])
    return StudyResult("conservation-drift", cols, rows, ok, summary, msgs)


STUDIES = ("uniform-bound", "refined-bound", "cauchy", "conservation-drift", "calibrate-C")
