import json
import subprocess
import sys

import numpy as np

from curvedflats.algebra import sun_son
from curvedflats.cli import main
from curvedflats.export import read_grid_csv, sha256

from test_algebra import custom_block

SMALL = {"grid": {"extents": [[-1.6, 1.6], [-1.6, 1.6]], "N": [33, 33]}}


def run(tmp_path, command, cfg=None, *extra, name="out"):
    argv = [command, "--out", str(tmp_path / name)]
    if cfg is not None:
        p = tmp_path / f"{name}.json"
        p.write_text(json.dumps(cfg))
        argv += ["--config", str(p)]
    return main(argv + list(extra)), tmp_path / name


def load(path):
    return json.loads(path.read_text())


def test_pair_check_default(tmp_path):
    code, out = run(tmp_path, "pair-check")
    assert code == 0
    rep = load(out / "pair_check.json")
    assert rep["passed"] and rep["pair"] == "sun_son/3"


def test_pair_check_noncommuting_involutions(tmp_path):
    block = custom_block(sun_son(2), sigma_J=np.array([[1.0, 2.0], [0.0, -1.0]]))
    cfg = {"pair": block, "grid": {"extents": [[-1, 1]], "N": [9]}, "loop": None}
    code, out = run(tmp_path, "pair-check", cfg)
    assert code == 1
    checks = {c["name"]: c for c in load(out / "pair_check.json")["checks"]}
    assert not checks["tau_sigma_commute"]["passed"]


def test_config_error_exit_code(tmp_path, capsys):
    code, _ = run(tmp_path, "dress", {"grid": {"N": [10, 65]}})
    assert code == 2
    assert "grid.N[0]" in capsys.readouterr().err
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert main(["dress", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2


SINGULAR = {"grid": {"extents": [[-6, 6], [-6, 6]], "N": [33, 33]},
            "loop": {"poles": [[0.5, 3.0]], "seed": 0, "rank": 1}}


def test_singular_strict_exit_3(tmp_path, capsys):
    code, _ = run(tmp_path, "dress", SINGULAR, "--strict")
    assert code == 3
    assert "singular" in capsys.readouterr().err


def test_singular_holes_policy_reports_holes(tmp_path):
    code, out = run(tmp_path, "dress", SINGULAR)
    assert code in (0, 1)
    fact = load(out / "factorization.json")
    assert len(fact["holes"]) > 0
    assert fact["max_cond"] <= 1e12


def test_dress_outputs_and_determinism(tmp_path):
    code1, out1 = run(tmp_path, "dress", SMALL, name="a")
    code2, out2 = run(tmp_path, "dress", SMALL, "--threads", "1", name="b")
    assert code1 == code2 == 0
    for f in ("v.csv", "psi.csv", "f.csv", "Y.csv", "factorization.json", "report.json", "manifest.json"):
        assert (out1 / f).exists()
    assert (out1 / "manifest.json").read_text() == (out2 / "manifest.json").read_text()
    man = load(out1 / "manifest.json")
    for e in man["files"]:
        assert e["sha256"] == sha256(out1 / e["file"])
    _, _, psi = read_grid_csv(out1 / "psi.csv")
    # sigma(psi) psi = I means psi is symmetric for sun_son
    assert np.allclose(psi, np.swapaxes(psi, -1, -2), atol=1e-8)


def test_flows_outputs(tmp_path):
    cfg = dict(SMALL, flow={"b_index": 0, "j": 3, "t_range": [-0.08, 0.08], "M": 5})
    code, out = run(tmp_path, "flows", cfg)
    assert code == 0
    header = (out / "conserved.csv").read_text().splitlines()[0].split(",")
    assert header == ["t", "integral_1", "integral_2"]
    h, coords, _ = read_grid_csv(out / "v_t4.csv")
    assert h[2] == "t" and np.allclose(coords[:, 2], 0.08)
    rep = load(out / "flows.json")
    assert len(rep["times"]) == 5


def test_flows_needs_flow_block(tmp_path):
    code, _ = run(tmp_path, "flows", dict(SMALL, flow=None))
    assert code == 2


def test_eds_report(tmp_path):
    code, out = run(tmp_path, "eds-report", {"pair": {"pair": "sun_son", "n": 4},
                                            "grid": {"extents": [[-1, 1]] * 3, "N": [9] * 3}})
    assert code == 0
    rep = load(out / "eds.json")
    assert rep["characters"] == [6, 6, 0, 0] and rep["codim"] == rep["c_F"] == 30


def test_export(tmp_path):
    cfg = dict(SMALL, export={"lambda": [[1.0, 0.0], [0.0, 0.5]], "q_index": 1, "q_depth": 3})
    code, out = run(tmp_path, "export", cfg)
    assert code == 0
    names = {e["file"] for e in load(out / "manifest.json")["files"]}
    assert names == {"v.csv", "E_0.csv", "E_1.csv", "Q_0.csv", "Q_1.csv", "Q_2.csv", "Q_3.csv", "export.json"}


def test_verify_detects_tampering(tmp_path, capsys):
    cfg = {"verification": {"tamper": {"node": [30, 40], "amount": 1e-3}}}
    code, out = run(tmp_path, "verify", cfg)
    assert code == 1
    rep = load(out / "report.json")
    assert rep["tampered_node"] == [30, 40]
    failed = {c["name"]: c for c in rep["checks"] if not c["passed"]}
    assert "dressed.uu0_order" in failed
    fine_node = failed["dressed.uu0_order"]["measured"]["worst_node_fine"]
    assert abs(fine_node[0] - 60) <= 2 and abs(fine_node[1] - 80) <= 2
    assert "tampered node [30, 40]" in capsys.readouterr().err
    man = {e["file"]: e for e in load(out / "manifest.json")["files"]}
    assert man["timings.json"]["volatile"]


def test_console_script_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "curvedflats.cli", "pair-check", "--out", str(tmp_path / "o")],
                         capture_output=True, text=True)
    assert res.returncode == 0
    bad = subprocess.run([sys.executable, "-m", "curvedflats.cli", "nope"], capture_output=True, text=True)
    assert bad.returncode == 2
