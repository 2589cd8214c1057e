import json

import numpy as np
import pytest

from curvedflats.config import OUT_ENV, load_config
from curvedflats.errors import ConfigError
from curvedflats.export import grid_csv, read_grid_csv, series_csv, sha256, write_json, write_manifest
from curvedflats.grid import Grid


def write_cfg(tmp_path, data):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(data))
    return str(p)


def test_defaults():
    cfg = load_config()
    assert cfg.pair.name == "sun_son/3"
    assert cfg.grid.N == (65, 65)
    assert not cfg.strict
    b, j, M, h_t, t0 = cfg.flow_params()
    assert (j, M) == (3, 9)
    assert np.isclose(h_t, 0.04) and t0 == 0.0


def test_overrides_merge(tmp_path):
    cfg = load_config(write_cfg(tmp_path, {"grid": {"N": [33, 33]}, "policy": "strict"}))
    assert cfg.grid.N == (33, 33)
    assert cfg.grid.extents == ((-1.6, 1.6), (-1.6, 1.6))
    assert cfg.strict


@pytest.mark.parametrize("data, field", [
    ({"grid": {"N": [10, 65]}}, "grid.N[0]"),
    ({"grid": {"N": [65]}}, "grid"),
    ({"bogus": 1}, "bogus"),
    ({"verification": {"depth": 20}}, "verification.depth"),
    ({"flow": {"j": 2}}, "flow.j"),
    ({"policy": "maybe"}, "policy"),
    ({"loop": {"poles": [[1.0, 0.0]]}}, "loop.poles[0]"),
    ({"eds": {"flag": [0, 0]}}, "eds.flag"),
    ({"pair": {"pair": "sun_son", "n": 1}}, "pair.n"),
])
def test_config_errors_name_the_field(tmp_path, data, field):
    with pytest.raises(ConfigError) as info:
        load_config(write_cfg(tmp_path, data))
    assert info.value.field == field
    assert str(info.value).startswith(field)


def test_malformed_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{oops")
    with pytest.raises(ConfigError, match="line 1"):
        load_config(str(p))
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(str(tmp_path / "missing.json"))


def test_output_env(monkeypatch, tmp_path):
    monkeypatch.setenv(OUT_ENV, str(tmp_path / "x"))
    assert load_config().output == str(tmp_path / "x")


def test_grid_csv_roundtrip(tmp_path, rng):
    g = Grid.square(1.0, 9)
    vals = rng.normal(size=g.N + (2, 2)) + 1j * rng.normal(size=g.N + (2, 2))
    p = tmp_path / "v.csv"
    grid_csv(p, g, vals, t=0.25)
    header, coords, mats = read_grid_csv(p)
    assert header[:3] == ["x1", "x2", "t"] and header[3:5] == ["re_0_0", "im_0_0"]
    assert np.array_equal(mats.reshape(vals.shape), vals)
    assert np.array_equal(coords[:, :2].reshape(g.N + (2,)), g.points)
    assert np.all(coords[:, 2] == 0.25)


def test_json_and_manifest(tmp_path):
    write_json(tmp_path / "a.json", {"b": np.float64(1.5), "a": [1 + 2j], "ok": np.bool_(True)})
    assert json.loads((tmp_path / "a.json").read_text()) == {"a": [[1.0, 2.0]], "b": 1.5, "ok": True}
    series_csv(tmp_path / "s.csv", {"t": [0.0, 1.0], "y": [2.0, 3.0]})
    write_json(tmp_path / "timings.json", {"x": 0.1})
    write_manifest(tmp_path, ["a.json", "s.csv", "timings.json"], volatile=["timings.json"])
    man = json.loads((tmp_path / "manifest.json").read_text())
    entries = {e["file"]: e for e in man["files"]}
    assert entries["a.json"]["sha256"] == sha256(tmp_path / "a.json")
    assert entries["timings.json"]["volatile"] and "sha256" not in entries["timings.json"]
