"""Command-line driver: ``qpbo simulate|identities|study <name>``.

Every command reads one JSON config, writes CSV/JSON under ``--out`` and
finishes with a single ``RESULT {...}`` line.  Exit codes: 0 pass,
1 config error, 2 blow-up, 3 identity or property failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from . import experiments as ex
from .diagnostics import IDENTITY_NAMES, diagnostics_report, identity_suite, inequality_audit
from .dynamics import BlowUpError, FlowParams, evolve
from .field import make_field, random_field, save, sobolev_norm, project
from .lattice import ResonanceError, make_basis

log = logging.getLogger("qpbo")

EXIT_OK, EXIT_CONFIG, EXIT_BLOWUP, EXIT_FAIL = 0, 1, 2, 3
IDENTITY_TOL = 1e-12
LOCKFILE = "gronwall_C.lock.json"


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid")


class BasisSpec(_Model):
    N: int = Field(2, ge=1)
    alpha: list[float] = Field(default_factory=lambda: [1.0, math.sqrt(2.0)])
    K: int = Field(32, ge=1)

    @model_validator(mode="after")
    def _dims(self):
        if len(self.alpha) != self.N:
            raise ValueError(f"alpha has {len(self.alpha)} entries but N = {self.N}")
        return self


class RandomSpec(_Model):
    seed: Optional[int] = None
    amplitude: float = Field(1.0, gt=0)


class InitialSpec(_Model):
    preset: Optional[Literal["two-cosine"]] = None
    modes: Optional[list[tuple[list[int], float, float]]] = None
    random: Optional[RandomSpec] = None
    amplitude: float = 1.0

    @model_validator(mode="after")
    def _one_kind(self):
        kinds = [k for k in (self.preset, self.modes, self.random) if k is not None]
        if len(kinds) > 1:
            raise ValueError("initial: give exactly one of preset, modes, random")
        if not kinds:
            self.preset = "two-cosine"
        return self

    @property
    def kind(self) -> str:
        if self.modes is not None:
            return "modes"
        if self.random is not None:
            return "random"
        return "two-cosine"


class FlowSpec(_Model):
    n: float = Field(8.0, gt=0)
    delta: Optional[float] = Field(4.0, gt=0)
    s: float = 2.5
    dt: float = Field(1e-3, gt=0)
    t_end: float = Field(0.5, ge=0)
    integrator: Literal["rk4", "ifrk4"] = "ifrk4"
    gronwall_C: Optional[float] = Field(None, gt=0)
    nonlinear: bool = True


class DiagnosticsSpec(_Model):
    s_list: list[float] = Field(default_factory=lambda: [0.0, 1.0, 2.5])
    stride: int = Field(10, ge=1)


class IdentitiesSpec(_Model):
    trials: int = 50
    exact: bool = True
    support: Optional[int] = None
    audit_trials: int = 100


class StudySpec(_Model):
    epsilon: Optional[float] = None
    n_list: list[float] = Field(default_factory=lambda: [4.0, 8.0, 16.0, 32.0])
    l: float = 1.0
    deltas: list[float] = Field(default_factory=lambda: [2.0, 4.0, 8.0, 16.0])
    levels: list[tuple[float, int]] = Field(default_factory=lambda: [(8.0, 32), (16.0, 48), (32.0, 64)])
    s: Optional[float] = None


class RunConfig(_Model):
    basis: BasisSpec = Field(default_factory=BasisSpec)
    initial: InitialSpec = Field(default_factory=InitialSpec)
    flow: FlowSpec = Field(default_factory=FlowSpec)
    diagnostics: DiagnosticsSpec = Field(default_factory=DiagnosticsSpec)
    identities: IdentitiesSpec = Field(default_factory=IdentitiesSpec)
    study: StudySpec = Field(default_factory=StudySpec)
    output: Optional[str] = None
    seed: int = 0

    @model_validator(mode="after")
    def _admissible_parameters(self):
        lim = self.basis.N / 2 + 1
        if not self.flow.s > lim:
            raise ValueError(f"flow.s: need s > N/2 + 1 = {lim:g}, got {self.flow.s:g}")
        if self.study.s is not None and not self.study.s > lim:
            raise ValueError(f"study.s: need s > N/2 + 1 = {lim:g}, got {self.study.s:g}")
        if self.study.epsilon is not None:
            s = self.study.s if self.study.s is not None else 4.0
            lo, hi = ex.epsilon_interval(s)
            if not lo < self.study.epsilon < hi:
                raise ValueError(f"study.epsilon: need (2/3)(s-2)/s < epsilon < (s-2)/s, "
                                 f"i.e. {lo:.6g} < epsilon < {hi:.6g}")
        return self


class ConfigError(Exception):
    pass


def load_config(path: Optional[str]) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as err:
        msgs = []
        for e in err.errors():
            loc = ".".join(str(p) for p in e["loc"]) or "<root>"
            msgs.append(f"{loc}: {e['msg']}")
        raise ConfigError("invalid config: " + "; ".join(msgs)) from err


def build_initial(cfg: RunConfig, seed: int):
    basis = make_basis(cfg.basis.alpha, cfg.basis.K)
    init = cfg.initial
    if init.kind == "modes":
        try:
            return make_field(basis, [(k, complex(re, im)) for k, re, im in init.modes])
        except (IndexError, ValueError) as err:
            raise ConfigError(f"initial.modes: {err}") from err
    if init.kind == "random":
        rng = np.random.default_rng(init.random.seed if init.random.seed is not None else seed)
        u = random_field(basis, rng, decay=cfg.flow.s + 1)
        return u * (init.random.amplitude / sobolev_norm(u, 0))
    entries = []
    for j in range(basis.dim):
        k = [0] * basis.dim
        k[j] = 1
        entries.append((k, 0.5 * init.amplitude))
    return make_field(basis, entries)


def flow_params(cfg: RunConfig) -> FlowParams:
    f = cfg.flow
    return FlowParams(n=f.n, delta=math.inf if f.delta is None else f.delta, s=f.s, dt=f.dt,
                      t_end=f.t_end, integrator=f.integrator,
                      gronwall_C=f.gronwall_C or 1.0, nonlinear=f.nonlinear)


def study_config(cfg: RunConfig, name: str, seed: int) -> ex.StudyConfig:
    s = cfg.study.s
    if s is None:
        s = 2.5 if name in ("uniform-bound", "calibrate-C") else 4.0
    init = cfg.initial
    kw = dict(alpha=tuple(cfg.basis.alpha), K=cfg.basis.K, s=s, n=cfg.flow.n,
              delta=math.inf if cfg.flow.delta is None else cfg.flow.delta,
              dt=cfg.flow.dt, t_end=cfg.flow.t_end, integrator=cfg.flow.integrator,
              initial=init.kind, amplitude=init.amplitude, seed=seed,
              snapshot_stride=cfg.diagnostics.stride, gronwall_C=cfg.flow.gronwall_C)
    if name == "refined-bound" and "initial" not in cfg.model_fields_set:
        # band-limited presets sit inside every delta ball; use rough data instead
        kw["initial"] = "random"
    if init.kind == "modes":
        kw["modes"] = [list(m) for m in init.modes]
    if init.kind == "random":
        kw["amplitude"] = init.random.amplitude
        if init.random.seed is not None:
            kw["seed"] = init.random.seed
    return ex.StudyConfig(**kw)


def finish(status: str, summary_path: Optional[Path], code: int, **extra) -> int:
    payload = {"status": status, "summary_path": None if summary_path is None else str(summary_path)}
    payload.update(extra)
    print("RESULT " + json.dumps(payload, sort_keys=True, default=str))
    return code


def cmd_simulate(cfg: RunConfig, out: Path, seed: int) -> int:
    u0 = build_initial(cfg, seed)
    params = flow_params(cfg)
    params.check_basis(u0.basis)
    s_list = tuple(cfg.diagnostics.s_list)
    monitor = lambda t, u: diagnostics_report(u, t, s_list=s_list)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "trajectory.csv"
    summary_path = out / "simulate.json"
    try:
        rec = evolve(u0, params, snapshot_stride=cfg.diagnostics.stride, monitor=monitor)
        status, code = "ok", EXIT_OK
    except BlowUpError as err:
        rec = err.trajectory
        status, code = "blow-up", EXIT_BLOWUP
        print(f"blow-up at t = {err.time:.6g}", file=sys.stderr)
    reports = rec.diagnostics
    cols = reports[0].columns()
    ex.write_csv(csv_path, cols, [r.values() for r in reports])
    save(rec.states[-1], out / "final_state.json")
    summary = {"status": status, "t_last": rec.times[-1], "snapshots": len(rec.times),
               "csv": csv_path.name, "final_state": "final_state.json",
               "all_finite": all(r.is_finite() for r in reports)}
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return finish(status, summary_path, code)


def cmd_identities(cfg: RunConfig, out: Path, seed: int) -> int:
    ident = cfg.identities
    if ident.trials < 1:
        raise ConfigError(f"identities.trials: must be >= 1, got {ident.trials}")
    basis = make_basis(cfg.basis.alpha, cfg.basis.K)
    support = ident.support if ident.support is not None else (basis.box_radius // 3 if ident.exact else basis.box_radius)
    rng = np.random.default_rng(seed)
    worst = {name: 0.0 for name in IDENTITY_NAMES}
    rows = []
    for trial in range(ident.trials):
        u = random_field(basis, rng, decay=2.0, support=support)
        res = identity_suite(u, cfg.flow.s, exact=ident.exact)
        rows.append([trial] + [res[k] for k in IDENTITY_NAMES])
        for k in IDENTITY_NAMES:
            worst[k] = max(worst[k], res[k])
    audit = inequality_audit(seed, max(1, ident.audit_trials), cfg.flow.s, basis)
    out.mkdir(parents=True, exist_ok=True)
    ex.write_csv(out / "identities.csv", ["trial"] + list(IDENTITY_NAMES), rows)
    for k in IDENTITY_NAMES:
        print(f"{k:>22s}  worst residual {worst[k]:.3e}")
    for k, v in audit.worst.items():
        print(f"{'audit ' + k:>28s}  worst ratio {v:.6g}")
    ok = all(v <= IDENTITY_TOL for v in worst.values())
    summary_path = out / "identities.json"
    summary_path.write_text(json.dumps({
        "exact": ident.exact, "trials": ident.trials, "support": support,
        "worst_residuals": worst, "tolerance": IDENTITY_TOL, "passed": ok,
        "audit": audit.worst, "audit_exact_ok": audit.exact_ok(),
    }, indent=2, sort_keys=True) + "\n")
    return finish("pass" if ok else "identity-failure", summary_path, EXIT_OK if ok else EXIT_FAIL)


def _read_lock(out: Path) -> Optional[float]:
    lock = out / LOCKFILE
    if lock.exists():
        return float(json.loads(lock.read_text())["C"])
    return None


def cmd_study(cfg: RunConfig, name: str, out: Path, seed: int) -> int:
    if name not in ex.STUDIES:
        raise ConfigError(f"unknown study {name!r}; choose from {', '.join(ex.STUDIES)}")
    sc = study_config(cfg, name, seed)
    st = cfg.study
    if name == "calibrate-C":
        res = ex.calibrate_study(sc, st.n_list)
        if res.passed:
            out.mkdir(parents=True, exist_ok=True)
            (out / LOCKFILE).write_text(json.dumps(
                {"C": res.summary["C"], "config_hash": sc.config_hash(), "s": sc.s}, sort_keys=True) + "\n")
            print(f"C = {res.summary['C']:g}")
    elif name == "uniform-bound":
        C = sc.gronwall_C or _read_lock(out)
        res = None
        if C is None:
            cal = ex.calibrate_study(sc, st.n_list)
            if cal.passed:
                C = cal.summary["C"]
            else:
                cal.study = "uniform-bound"
                res = cal
        if res is None:
            res = ex.uniform_bound_study(sc, C, st.n_list)
    elif name == "refined-bound":
        res = ex.refined_bound_study(sc, st.l, st.deltas)
    elif name == "cauchy":
        res = ex.cauchy_study(sc, st.epsilon, st.n_list)
    else:
        res = ex.conservation_drift_study(sc, [tuple(l) for l in st.levels])
    csv_path, json_path = res.write(out, sc)
    for m in res.messages:
        print(m, file=sys.stderr)
    return finish("pass" if res.passed else "study-failure", json_path,
                  EXIT_OK if res.passed else EXIT_FAIL, study=name)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qpbo", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON run config (defaults to the desk run)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="overrides the config seed")

    common(sub.add_parser("simulate", help="evolve the regularized flow"))
    common(sub.add_parser("identities", help="exact identity suite and inequality audit"))
    p = sub.add_parser("study", help="run one of the scripted studies")
    p.add_argument("name", help=" | ".join(ex.STUDIES))
    common(p)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        seed = cfg.seed if args.seed is None else args.seed
        out = Path(args.out or cfg.output or "qpbo-out")
        if args.command == "simulate":
            return cmd_simulate(cfg, out, seed)
        if args.command == "identities":
            return cmd_identities(cfg, out, seed)
        return cmd_study(cfg, args.name, out, seed)
    except (ConfigError, ResonanceError) as err:
        print(str(err), file=sys.stderr)
        return finish("config-error", None, EXIT_CONFIG, error=str(err))
    except ValueError as err:
        print(str(err), file=sys.stderr)
        return finish("config-error", None, EXIT_CONFIG, error=str(err))


if __name__ == "__main__":
    sys.exit(main())
