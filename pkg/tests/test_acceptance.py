"""Acceptance criteria at desk scale.

N = 2, alpha = (1, sqrt 2), K = 32, dt = 1e-3, t_end = 0.5 unless a criterion
says otherwise.  Each test prints one ``ACCEPT <id> PASS|FAIL`` line straight
to the terminal, then asserts.
"""
import math

import numpy as np
import pytest

from qpbo import experiments as ex
from qpbo.diagnostics import identity_suite, inequality_audit, mass, momentum
from qpbo.dynamics import FlowParams, evolve, linear_phase, linear_symbol, picard_iterate, step_ifrk4
from qpbo.field import (
    convolve_direct, convolve_fft, l1_coeff_norm, make_field, random_field, sobolev_norm,
)
from qpbo.lattice import make_basis

ALPHA = (1.0, math.sqrt(2.0))
DESK = make_basis(ALPHA, 32)
U0 = make_field(DESK, [((1, 0), 0.5), ((0, 1), 0.5)])
QUIET = lambda t, u: None


@pytest.fixture
def report(capsys):
    def emit(cid, ok, detail):
        with capsys.disabled():
            print(f"\nACCEPT {cid:>2} {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, detail
    return emit


def test_01_exact_identities(report):
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(50):
        u = random_field(DESK, rng, decay=2.0, support=10)
        worst = max(worst, max(identity_suite(u, 2.5).values()))
    control = 0.0
    rng = np.random.default_rng(2)
    for _ in range(5):
        u = random_field(DESK, rng, decay=2.0)
        control = max(control, max(identity_suite(u, 2.5, exact=False).values()))
    report(1, worst <= 1e-12 and control > 1e-6,
           f"identities worst residual {worst:.2e} (<= 1e-12); aliased control {control:.2e} (> 1e-6)")


def test_02_convolution_oracle(report):
    rng = np.random.default_rng(3)
    worst = 0.0
    for support in np.linspace(1, 32, 20).round().astype(int):
        a = random_field(DESK, rng, decay=2.0, support=int(support))
        b = random_field(DESK, rng, decay=2.0, support=int(support))
        diff = np.abs(convolve_fft(a.coeffs, b.coeffs) - convolve_direct(a.coeffs, b.coeffs)).max()
        worst = max(worst, diff)
    report(2, worst <= 1e-13, f"FFT vs direct max-abs {worst:.2e} over 20 pairs (<= 1e-13)")


def _momentum_drift(dt):
    p = FlowParams(n=8, delta=4, s=2.5, dt=dt, t_end=0.5)
    stride = int(round(1e-2 / dt))
    rec = evolve(U0, p, snapshot_stride=stride, monitor=lambda t, u: (mass(u), momentum(u)))
    m = np.array(rec.diagnostics)
    return np.abs(m[:, 0] - m[0, 0]).max(), np.abs(m[:, 1] - m[0, 1]).max() / m[0, 1]


def test_03_semidiscrete_conservation(report):
    mass_drift, mom = _momentum_drift(1e-3)
    _, mom_half = _momentum_drift(5e-4)
    ratio = mom / mom_half
    ok = mass_drift <= 1e-13 and mom <= 1e-8 and 11 <= ratio <= 21
    report(3, ok, f"mass drift {mass_drift:.1e} (<= 1e-13); momentum rel drift {mom:.2e} (<= 1e-8); "
                  f"Richardson ratio {ratio:.2f} (in [11, 21])")


def test_04_linear_exactness(report):
    u = random_field(DESK, np.random.default_rng(4), decay=3.5)
    worst = 0.0
    for v in (U0, u):
        p = FlowParams(n=8, dt=1e-3, t_end=0.5, nonlinear=False)
        final = evolve(v, p, snapshot_stride=100, monitor=QUIET).final
        worst = max(worst, sobolev_norm(final - linear_phase(v, 0.5, 8), 0))
    report(4, worst <= 1e-10, f"L2 error vs phase rotation {worst:.2e} (<= 1e-10)")


def test_05_exact_inequalities(report):
    audit = inequality_audit(0, 100, 2.5, DESK)
    w = audit.worst
    tol = 1 + 1e-12
    ok = w["interpolation"] <= tol and w["difference_est"] <= tol and w["rd1"] <= tol
    report(5, ok, f"interpolation {w['interpolation']:.6f}, DifferenceEst {w['difference_est']:.6f}, "
                  f"RD1 {w['rd1']:.6f} (each <= 1 + 1e-12); "
                  f"DifferenceEst with |alpha|^l factor {w['difference_est_scaled']:.6f}")


def test_06_apriori_envelope(report):
    cfg = ex.StudyConfig(s=2.5)
    cal = ex.calibrate_study(cfg)
    C = cal.summary["C"]
    res = ex.uniform_bound_study(cfg, C) if C is not None else cal
    ok = res.passed and C is not None and res.summary.get("common_interval", False)
    report(6, ok, f"calibrated C = {C}; {len(res.rows)} snapshots for n in (4, 8, 16, 32) "
                  f"under the envelope; common t_end {res.summary.get('t_end')}")


def test_07_cauchy_decay(report):
    cfg = ex.StudyConfig(s=4.0)
    res = ex.cauchy_study(cfg, epsilon=0.4)
    l2 = [r[4] for r in res.rows]
    hs = [r[6] for r in res.rows]
    decay = [a / b for a, b in zip(l2, l2[1:])]
    ok = all(d >= 2 for d in decay) and all(b <= 1.2 * a for a, b in zip(hs, hs[1:]))
    report(7, ok, f"L2 decay per doubling {', '.join(f'{d:.3g}' for d in decay)} (>= 2); "
                  f"H^s differences {', '.join(f'{h:.3g}' for h in hs)} (non-increasing within 1.2x)")


def test_08_refined_bound(report):
    cfg = ex.StudyConfig(s=4.0, initial="random", seed=8)
    res = ex.refined_bound_study(cfg, l=1.0, deltas=(2, 4, 8, 16))
    slope = res.summary["fitted_exponent"]
    report(8, slope <= 1.2, f"fitted exponent {slope:.4f} for l = 1 (<= 1.2)")


def test_09_picard_cross_check(report):
    dt = 1e-3
    p = FlowParams(n=8, s=2.5, dt=dt)
    pic = picard_iterate(U0, p, dt, iters=40, tol=1e-16)
    err = sobolev_norm(pic.state - step_ifrk4(U0, p), 0)
    bound = 10 * dt ** 5 * sobolev_norm(U0, 0)
    contract = True
    for t in (dt, 1e-2):
        q = t * (np.abs(linear_symbol(DESK, 8)).max() + 8 * l1_coeff_norm(U0))
        r = picard_iterate(U0, p, t, iters=40, tol=1e-15).residuals
        ratios = [b / a for a, b in zip(r, r[1:]) if a > 1e-13]
        contract &= q < 1 and bool(ratios) and max(ratios) <= q
    report(9, err <= bound and contract,
           f"Picard vs ifrk4 step {err:.2e} (<= {bound:.1e}); geometric contraction below bound: {contract}")


def test_10_conservation_monitors(report):
    res = ex.conservation_drift_study(ex.StudyConfig(s=2.5))
    orders = res.summary["orders"]
    trunc = res.summary["truncation_drift"]
    low = min(min(o["energy"], o["h1_law"], o["h1_law_proof"]) for o in orders.values())
    fmt = lambda xs: ", ".join(f"{x:.2e}" for x in xs)
    report(10, res.passed and low >= 3.5,
           f"min dt-order {low:.2f} (>= 3.5); truncation drift energy [{fmt(trunc['energy'])}] "
           f"(roundoff floor {res.summary['roundoff_floor']:.1e}), H1 proof form "
           f"[{fmt(trunc['h1_law_proof'])}], H1 stated form [{fmt(trunc['h1_law'])}]")


def test_11_determinism(report, tmp_path):
    cfg = ex.StudyConfig(s=4.0)
    blobs = []
    for sub in ("first", "second"):
        csv_path, _ = ex.cauchy_study(cfg, epsilon=0.4).write(tmp_path / sub, cfg)
        blobs.append(csv_path.read_bytes())
    report(11, blobs[0] == blobs[1], f"cauchy CSV rerun byte-identical ({len(blobs[0])} bytes)")
