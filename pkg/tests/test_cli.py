import csv
import json
import math

import pytest

from crystalstab import cli
from crystalstab.dynamics import NumericalAbort

PI = math.pi


def call(tmp_path, command, cfg, *extra, name="out"):
    path = tmp_path / f"{command}.json"
    path.write_text(json.dumps(cfg, indent=1))
    out = tmp_path / name
    code = cli.main([command, "--config", str(path), "--out", str(out), "--workers", "1", *extra])
    return code, out


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def manifest(out):
    return json.loads((out / "run.json").read_text())


def test_jellium_check(tmp_path):
    code, out = call(tmp_path, "jellium-check", {"model": {"kind": "box"}, "N": 2, "P": 8})
    assert code == 0
    s = json.loads((out / "jellium.json").read_text())
    assert s["passed"] and s["max_abs"] < 1e-12
    assert s["periodized_density"]["passed"]
    assert len(read_csv(out / "jellium.csv")) > 100


def test_wiener_scan_flags_degenerate_plane(tmp_path):
    cfg = {"model": {"kind": "box"}, "thetas": [[0.0, PI, PI], [1.0, 2.0, 3.0]]}
    code, out = call(tmp_path, "wiener-scan", cfg)
    assert code == 0
    rows = read_csv(out / "wiener_scan.csv")
    assert [r["degenerate"] for r in rows] == ["1", "0"]
    assert float(rows[0]["sigma0"]) < 1e-10


def test_ground_state_with_arrangement(tmp_path):
    cfg = {"model": {"kind": "box"}, "N": 2, "P": 4, "arrangement": {"mode": "box_shear"}}
    code, out = call(tmp_path, "ground-state", cfg)
    assert code == 0
    s = json.loads((out / "ground_state.json").read_text())
    assert abs(s["energy"]) < 1e-12 and s["arrangement"]["flat"]
    assert (out / "state.json").exists() and (out / "arrangement.json").exists()


def test_minimize_cell(tmp_path):
    code, out = call(tmp_path, "minimize-cell", {"model": {"kind": "box"}, "P": 4, "iters": 200})
    assert code == 0
    s = json.loads((out / "minimizer.json").read_text())
    assert s["converged"] and abs(s["energy"]) < 1e-10
    assert list(read_csv(out / "convergence.csv")[0]) == ["iter", "E", "residual"]


def test_evolve_conservation_and_manifest(tmp_path):
    cfg = {"model": {"kind": "gaussian_sinc"}, "N": 2, "P": 4, "dt": 1e-2, "T_end": 0.2, "snapshot_every": 10}
    code, out = call(tmp_path, "evolve", cfg, "--seed", "7")
    assert code == 0
    d = json.loads((out / "drifts.json").read_text())
    assert d["dV_max"] < 1e-9 and d["E_abs_max"] < 1e-10 and d["Q_rel_drift"] < 1e-10
    assert list(read_csv(out / "evolve.csv")[0]) == ["t", "E", "Q", "dV"]
    m = manifest(out)
    assert m["seed"] == 7 and m["exit_code"] == 0 and m["status"] == "ok"
    assert len(m["config_sha256"]) == 64 and "numpy" in m["versions"]
    assert "evolve.csv" in m["outputs"] and any(o.startswith("snapshots/") for o in m["outputs"])
    assert "--seed 7" in m["rerun"]


def test_identical_runs_are_byte_identical(tmp_path):
    cfg = {"model": {"kind": "sheared_mix"}, "N": 2, "P": 4, "dt": 1e-2, "T_end": 0.1,
           "perturbation": {"delta": 1e-3, "direction": "random"}}
    _, a = call(tmp_path, "evolve", cfg, "--seed", "3", name="a")
    _, b = call(tmp_path, "evolve", cfg, "--seed", "3", name="b")
    _, c = call(tmp_path, "evolve", cfg, "--seed", "4", name="c")
    assert (a / "evolve.csv").read_bytes() == (b / "evolve.csv").read_bytes()
    assert (a / "evolve.csv").read_bytes() != (c / "evolve.csv").read_bytes()


def test_csv_floats_round_trip(tmp_path):
    _, out = call(tmp_path, "bloch-spectrum", {"model": {"kind": "gaussian_sinc"}, "theta": [PI, PI, PI], "K_cut": 1})
    text = (out / "spectrum.csv").read_text().splitlines()
    assert text[0] == "index,omega"
    values = [row.split(",")[1] for row in text[1:]]
    assert all(repr(float(v)) == v or float(v) == float(repr(float(v))) for v in values)
    s = json.loads((out / "bloch.json").read_text())
    assert s["sandwich_passed"] and s["hermiticity_K"] < 1e-10


def test_orbital_stability(tmp_path):
    cfg = {"model": {"kind": "gaussian_sinc"}, "deltas": [1e-3, 5e-4], "T_end": 0.2, "N": 2, "P": 4}
    code, out = call(tmp_path, "orbital-stability", cfg)
    assert code == 0
    rows = read_csv(out / "orbital_stability.csv")
    assert len(rows) == 2 and float(rows[0]["sup_d"]) > float(rows[1]["sup_d"])


def test_hessian(tmp_path):
    code, out = call(tmp_path, "hessian", {"model": {"kind": "sheared_mix"}, "N": 2, "P": 4})
    assert code == 0
    s = json.loads((out / "hessian.json").read_text())
    assert s["kernel_dimension"] == s["expected_kernel_dimension"] == 5
    assert len(read_csv(out / "spectrum.csv")) > 5


def test_bloch_spectrum_on_degenerate_point(tmp_path):
    cfg = {"model": {"kind": "box"}, "theta": [0.0, PI, PI], "K_cut": 1}
    code, out = call(tmp_path, "bloch-spectrum", cfg)
    assert code == 0
    s = json.loads((out / "bloch.json").read_text())
    assert s["sigma0"] < 1e-10


def test_dispersion_path(tmp_path):
    cfg = {"model": {"kind": "sheared_mix"}, "path": {"start": [2.5, 2.5, 2.5], "end": [PI, PI, PI], "n": 4},
           "n_eigs": 4, "K_cut": 1}
    code, out = call(tmp_path, "dispersion", cfg)
    assert code == 0
    assert len(read_csv(out / "dispersion.csv")) == 16


def test_decay(tmp_path):
    code, out = call(tmp_path, "decay", {"model": {"kind": "gaussian_sinc"}, "L": 8, "n_times": 2})
    assert code == 0
    assert len(read_csv(out / "decay.csv")) == 2


def test_fermion_density_with_oracle(tmp_path):
    state = {"d": 1, "N": 2, "Z": 2.0, "terms": [{"c": [1, 0], "k": [[0], [1]]}, {"c": [0.5, 0], "k": [[0], [2]]}]}
    code, out = call(tmp_path, "fermion-density", {"state": state, "oracle": True, "quad_res": 12})
    assert code == 0
    s = json.loads((out / "fermion.json").read_text())
    assert not s["pair_distance_ok"] and s["max_deviation"] > 0
    assert s["oracle_max_mismatch"] < 1e-6


@pytest.mark.parametrize(
    "text, line",
    [
        ('{\n  "model": {"kind": "box"},\n  "n": 3,\n}\n', 4),
        ('{\n  "model": {"kind": "box"},\n  "bogus": 1\n}\n', 3),
        ('{\n  "model": {"kind": "box"},\n  "n": "nine"\n}\n', 3),
        ('{\n  "model": {"kind": "cube"}\n}\n', 2),
        ('{\n  "thetas": null\n}\n', 1),
    ],
    ids=["syntax", "unknown-key", "wrong-type", "bad-model", "missing-key"],
)
def test_malformed_config_is_line_anchored(tmp_path, capsys, text, line):
    path = tmp_path / "bad.json"
    path.write_text(text)
    code = cli.main(["wiener-scan", "--config", str(path), "--out", str(tmp_path / "o")])
    assert code == 2
    err = capsys.readouterr().err
    assert err.startswith(f"{path}:{line}") and "error:" in err


def test_usage_errors(tmp_path, capsys):
    assert cli.main(["no-such-command", "--config", "x", "--out", "y"]) == 2
    assert cli.main(["wiener-scan", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 2
    assert cli.run("no-such-command", "x", str(tmp_path)) == 2
    assert "cannot read config" in capsys.readouterr().err


def test_decay_guard_is_a_config_error(tmp_path):
    code, out = call(tmp_path, "decay", {"model": {"kind": "gaussian_sinc"}, "L": 8, "alpha": -1.0})
    assert code == 2
    assert manifest(out)["exit_code"] == 2


def test_numerical_abort_exit_code(tmp_path, monkeypatch):
    def boom(cfg, out, ctx):
        raise NumericalAbort("non-finite state at t=0.5")

    monkeypatch.setitem(cli.COMMANDS, "evolve", boom)
    code, out = call(tmp_path, "evolve", {"model": {"kind": "box"}})
    assert code == 3
    assert manifest(out)["status"].startswith("numerical abort")


def test_workers_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("CSL_WORKERS", "2")
    path = tmp_path / "j.json"
    path.write_text(json.dumps({"model": {"kind": "box"}, "N": 2, "P": 4}))
    assert cli.main(["jellium-check", "--config", str(path), "--out", str(tmp_path / "o")]) == 0
    assert manifest(tmp_path / "o")["workers"] == 2


def test_print_schema(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.build_parser().parse_args(["hessian", "--print-schema"])
    assert exc.value.code == 0
    schema = json.loads(capsys.readouterr().out)
    assert schema["required"] == ["model"] and schema["additionalProperties"] is False
    assert schema["properties"]["N"]["default"] == 4
