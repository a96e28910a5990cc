import json
import math

import numpy as np
import pytest

from toruspot import cli, riesz, verify


def run(args, capsys):
    code = cli.main(args)
    out = capsys.readouterr().out
    return code, (json.loads(out) if out.strip() else None)


def write(tmp_path, name, obj):
    p = tmp_path / name
    p.write_text(obj if isinstance(obj, str) else json.dumps(obj))
    return str(p)


def test_oracle_fixtures_roundtrip(tmp_path, capsys):
    cfg = write(tmp_path, "o.json", {"count": 8})
    code, res = run(["oracle", "--config", cfg, "--out", str(tmp_path / "fx"), "--seed", "5"], capsys)
    assert code == 0
    for name in res["fixtures"]:
        code, out = run(["dinfty", "--config", str(tmp_path / "fx" / f"{name}.json"),
                         "--out", str(tmp_path / "d")], capsys)
        assert code == 0 and out["matches_expected"]
        if name == "antipodal":
            assert out["result"]["r_star"] == 0.5
        if name == "self":
            assert out["result"]["r_star"] == 0.0


def test_dinfty_exit_codes(tmp_path, capsys):
    bad = write(tmp_path, "bad.json", "{not json")
    assert run(["dinfty", "--config", bad, "--out", str(tmp_path)], capsys)[0] == 2
    assert run(["dinfty", "--config", str(tmp_path / "missing.json")], capsys)[0] == 2
    unnorm = write(tmp_path, "u.json", {"rho1": {"points": [[0.0]], "weights": [0.4]},
                                        "rho2": {"points": [[0.1]], "weights": [1.0]}})
    assert run(["dinfty", "--config", unnorm, "--out", str(tmp_path)], capsys)[0] == 1
    extra = write(tmp_path, "e.json", {"bogus": 1})
    assert run(["dinfty", "--config", extra], capsys)[0] == 2
    assert run(["nosuchcommand"], capsys)[0] == 2


def test_dinfty_to_uniform(tmp_path, capsys):
    cfg = write(tmp_path, "c.json", {"rho1": {"points": [[0.0]], "weights": [1.0]}, "to_uniform": True, "N": 32})
    code, out = run(["dinfty", "--config", cfg, "--out", str(tmp_path)], capsys)
    enc = out["enclosure"]
    assert code == 0 and enc["lo"] <= 0.5 <= enc["hi"]


def test_scaling_outputs_and_singleton(tmp_path, capsys):
    cfg = write(tmp_path, "s.json", {"eps": [0.125, 0.0625], "with_dinfty": False})
    code, out = run(["scaling", "--config", cfg, "--out", str(tmp_path / "a")], capsys)
    assert code == 0
    assert out["norm_slope"] == pytest.approx(1.0, abs=0.05)
    for f in ("scaling.csv", "scaling.json", "scaling.svg"):
        assert (tmp_path / "a" / f).exists()
    cfg = write(tmp_path, "t.json", {"eps": [0.125], "with_dinfty": False})
    code, out = run(["scaling", "--config", cfg, "--out", str(tmp_path / "b")], capsys)
    assert code == 0 and out["norm_slope"] is None and out["flags"]


def test_scaling_d2_p1_target(tmp_path, capsys):
    cfg = write(tmp_path, "s.json", {"d": 2, "p": 1, "s": 1, "eps": [0.125, 0.0625], "with_dinfty": False,
                                     "jobs": 2})
    code, out = run(["scaling", "--config", cfg, "--out", str(tmp_path)], capsys)
    assert out["target"] == 3 and out["norm_slope"] == pytest.approx(3.0, rel=0.1)


def test_flow_deterministic_and_hash(tmp_path, capsys):
    cfg = write(tmp_path, "f.json", {"T": 0.05, "n": 12, "record_every": 5})
    outs = []
    for sub in ("r1", "r2"):
        code, res = run(["flow", "--config", cfg, "--seed", "11", "--out", str(tmp_path / sub)], capsys)
        assert code == 0
        outs.append(res)
    assert outs[0] == outs[1] and len(outs[0]["config_hash"]) == 16
    for f in sorted((tmp_path / "r1").iterdir()):
        assert f.read_bytes() == (tmp_path / "r2" / f.name).read_bytes()
    header = (tmp_path / "r1" / "run_trajectory.csv").read_text().splitlines()[0].split(",")
    assert header[0] == "t" and header[-1] == "energy" and len(header) == 2 + 12 * 2


def test_flow_missing_seed_generated(tmp_path, capsys, caplog):
    cfg = write(tmp_path, "f.json", {"T": 0.01, "n": 6, "snapshots": False})
    code, res = run(["flow", "--config", cfg, "--out", str(tmp_path)], capsys)
    assert code == 0 and isinstance(res["seed"], int)
    assert any("generated seed" in r.message for r in caplog.records)


def test_flow_fig1_recipe_panels(tmp_path, capsys):
    cfg = write(tmp_path, "f.json", {"panels": "fig1", "T": 0.01, "n": 10, "snapshots": False})
    code, res = run(["flow", "--config", cfg, "--seed", "1", "--out", str(tmp_path)], capsys)
    names = [p["name"] for p in res["panels"]]
    assert code == 0 and names == ["pure", "eps0.05", "eps0.1", "eps0.2"]
    assert [p["config"]["eps"] for p in res["panels"][1:]] == [0.05, 0.1, 0.2]


def test_verify_default_green(tmp_path, capsys):
    cfg = write(tmp_path, "v.json", {"scale": 0.1})
    code, res = run(["verify", "--config", cfg, "--out", str(tmp_path)], capsys)
    assert code == 0 and res["passed"]
    assert {s["name"] for s in res["suites"]} >= {"gradient_fd", "regularization", "diagnostics"}


def test_verify_detects_gradient_sign_error(tmp_path, capsys, monkeypatch):
    orig = riesz.grad_Ws
    monkeypatch.setattr(riesz, "grad_Ws", lambda spec, x: -orig(spec, x))
    cfg = write(tmp_path, "v.json", {"scale": 0.1, "suites": ["gradient_fd"]})
    code, res = run(["verify", "--config", cfg, "--out", str(tmp_path)], capsys)
    assert code == 1 and not res["passed"]
    assert res["suites"][0]["name"] == "gradient_fd" and not res["suites"][0]["passed"]


def test_verify_calibration_file(tmp_path, capsys):
    cfg = write(tmp_path, "v.json", {"scale": 0.05, "calibrate": True, "calibration_count": 20})
    code, res = run(["verify", "--config", cfg, "--out", str(tmp_path)], capsys)
    cal = json.loads((tmp_path / "calibration.json").read_text())
    assert code == 0 and cal["count"] == 20 and cal["layer_bound"] >= cal["layer_max"]
    shipped = verify.load_calibration()
    assert shipped["count"] == 500 and shipped["N"] == 64 and shipped["d"] == 2


def test_potential_discrepancy_energy(tmp_path, capsys):
    code, res = run(["potential", "--out", str(tmp_path / "p")], capsys)
    assert code == 0 and set(res["norms"]) == {"1", "2", "inf"}
    assert abs(res["mean"]) < 1e-12
    code, res = run(["discrepancy", "--out", str(tmp_path / "q")], capsys)
    assert code == 0 and res["dinfty"] == pytest.approx(res["discrepancy"] / 2)
    cfg = write(tmp_path, "e.json", {"sweep": [0.0, 0.5], "N": 64})
    code, res = run(["energy", "--config", cfg, "--out", str(tmp_path / "e")], capsys)
    assert code == 0 and res["rows"][0]["energy"] == 0.0 and res["rows"][0]["lo"] == 0.0
    pts = write(tmp_path, "x.json", {"positions": (np.random.default_rng(0).random((5, 2))).tolist()})
    cfg = write(tmp_path, "e2.json", {"particles": pts, "s": -1.0})
    code, res = run(["energy", "--config", cfg, "--out", str(tmp_path / "e2")], capsys)
    assert code == 0 and math.isfinite(res["energy_discrete"])


def test_rejects_bad_precondition(tmp_path, capsys):
    cfg = write(tmp_path, "p.json", {"family": "laplacian", "eps": 0.01, "N": 64})
    assert run(["potential", "--config", cfg, "--out", str(tmp_path)], capsys)[0] == 1
    cfg = write(tmp_path, "q.json", {"seed": -4})
    assert run(["flow", "--config", cfg, "--out", str(tmp_path)], capsys)[0] == 2
