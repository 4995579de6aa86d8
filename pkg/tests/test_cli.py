import json

import pytest

from qpbo.cli import main

SHORT = {"basis": {"K": 8}, "flow": {"t_end": 0.02, "dt": 2e-3}, "diagnostics": {"stride": 5}}


def run(tmp_path, capsys, argv, config=None):
    args = list(argv) + ["--out", str(tmp_path / "out")]
    if config is not None:
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(config))
        args += ["--config", str(path)]
    code = main(args)
    out = capsys.readouterr().out.strip().splitlines()
    assert out[-1].startswith("RESULT ")
    return code, json.loads(out[-1][len("RESULT "):])


def test_simulate_writes_outputs(tmp_path, capsys):
    code, res = run(tmp_path, capsys, ["simulate"], SHORT)
    assert code == 0 and res["status"] == "ok"
    lines = (tmp_path / "out" / "trajectory.csv").read_text().splitlines()
    assert lines[0] == "time,mass,momentum,energy,h1_law,h1_law_proof,hs_0,hs_1,hs_2.5"
    assert len(lines) == 1 + 3
    assert (tmp_path / "out" / "final_state.json").exists()
    summary = json.loads((tmp_path / "out" / "simulate.json").read_text())
    assert summary["all_finite"] and summary["t_last"] == pytest.approx(0.02)


def test_malformed_config(tmp_path, capsys):
    code, res = run(tmp_path, capsys, ["simulate"], {"flow": {"dt": -1}})
    assert code == 1 and res["status"] == "config-error" and "flow.dt" in res["error"]
    code, res = run(tmp_path, capsys, ["simulate"], {"flow": {"integrator": "euler"}})
    assert code == 1 and "flow.integrator" in res["error"]
    code, res = run(tmp_path, capsys, ["simulate"], {"bogus": 1})
    assert code == 1


def test_sobolev_and_epsilon_constraints(tmp_path, capsys):
    code, res = run(tmp_path, capsys, ["simulate"], {"flow": {"s": 2.0}})
    assert code == 1 and "s > N/2 + 1" in res["error"]
    code, res = run(tmp_path, capsys, ["study", "cauchy"], {"study": {"epsilon": 0.6}})
    assert code == 1 and "epsilon" in res["error"]


def test_resonant_basis_is_config_error(tmp_path, capsys):
    code, res = run(tmp_path, capsys, ["simulate"], {"basis": {"alpha": [1.0, 2.0], "K": 4}})
    assert code == 1


def test_missing_config_file(tmp_path, capsys):
    code = main(["simulate", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)])
    assert code == 1


def test_blow_up_exit_code(tmp_path, capsys):
    cfg = {"basis": {"K": 16}, "flow": {"integrator": "rk4", "dt": 1.0, "t_end": 50.0, "n": 100,
                                        "delta": None}}
    code, res = run(tmp_path, capsys, ["simulate"], cfg)
    assert code == 2 and res["status"] == "blow-up"
    assert (tmp_path / "out" / "trajectory.csv").exists()


def test_identities_exit_codes(tmp_path, capsys):
    cfg = {"basis": {"K": 8}, "identities": {"trials": 3, "audit_trials": 3}}
    code, res = run(tmp_path, capsys, ["identities"], cfg)
    assert code == 0 and res["status"] == "pass"
    summary = json.loads((tmp_path / "out" / "identities.json").read_text())
    assert summary["audit_exact_ok"]
    cfg["identities"]["exact"] = False
    code, res = run(tmp_path, capsys, ["identities"], cfg)
    assert code == 3 and res["status"] == "identity-failure"
    cfg["identities"]["trials"] = 0
    code, res = run(tmp_path, capsys, ["identities"], cfg)
    assert code == 1


def test_unknown_study(tmp_path, capsys):
    code, res = run(tmp_path, capsys, ["study", "bogus"])
    assert code == 1 and "unknown study" in res["error"]


def test_calibrate_then_uniform_bound(tmp_path, capsys):
    cfg = {"basis": {"K": 8}, "flow": {"dt": 2e-3}, "study": {"n_list": [4, 8]}}
    code, res = run(tmp_path, capsys, ["study", "calibrate-C"], cfg)
    assert code == 0
    lock = json.loads((tmp_path / "out" / "gronwall_C.lock.json").read_text())
    assert lock["C"] == 0.5 and lock["s"] == 2.5
    code, res = run(tmp_path, capsys, ["study", "uniform-bound"], cfg)
    assert code == 0
    summary = json.loads((tmp_path / "out" / "uniform-bound.json").read_text())
    assert summary["C"] == 0.5 and summary["passed"]


def test_study_rerun_is_byte_identical(tmp_path, capsys):
    cfg = {"basis": {"K": 8}, "flow": {"dt": 2e-3, "t_end": 0.1}, "study": {"deltas": [2, 4]}}
    outs = []
    for sub in ("a", "b"):
        (tmp_path / sub).mkdir()
        code, _ = run(tmp_path / sub, capsys, ["study", "refined-bound", "--seed", "3"], cfg)
        assert code in (0, 3)
        outs.append((tmp_path / sub / "out" / "refined-bound.csv").read_bytes())
    assert outs[0] == outs[1]
