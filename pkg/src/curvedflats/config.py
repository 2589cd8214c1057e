"""Run configuration: JSON parsing, defaults and validation."""
from __future__ import annotations

import copy
import json
import os
from dataclasses import dataclass

import numpy as np

from .algebra import pair_from_config
from .dressing import loop_from_config
from .errors import ConfigError, CurvedFlatsError
from .grid import Grid

OUT_ENV = "CURVEDFLATS_OUT"

DEFAULTS = {
    "seed": 0,
    "pair": {"pair": "sun_son", "n": 3},
    "grid": {"extents": [[-1.6, 1.6], [-1.6, 1.6]], "N": [65, 65]},
    "loop": {"poles": [[1.0, 1.0]], "seed": 0, "rank": 1},
    "flow": {"b_index": 0, "j": 3, "t_range": [-0.16, 0.16], "M": 9},
    "verification": {
        "lambda_samples": [[1.3, 0.4], [-0.7, 1.1], [0.5, -0.9], [2.1, 0.2]],
        "depth": 4,
        "series_depth": 6,
        "convergence_study": True,
        "order_band": [12.8, 19.2],
        "margin": 0.2,
        "delta": 0.01,
        "tolerances": {
            "algebra": 1e-12,
            "form_invariance": 1e-10,
            "vacuum": 1e-10,
            "product": 1e-9,
            "entirety": 1e-9,
            "reality": 1e-9,
            "membership": 1e-9,
            "orbit": 1e-8,
            "parity": 1e-9,
            "series": 1e-9,
            "commuting_flows": 1e-9,
        },
        "tamper": None,
    },
    "eds": {"flag": None, "samples": 50},
    "export": {"lambda": [[1.0, 0.0], [-1.0, 0.0], [0.0, 0.0]], "q_index": 0, "q_depth": 4},
    "policy": "holes",
    "output": "out",
}


def _merge(base, override, path=""):
    out = copy.deepcopy(base)
    for key, val in override.items():
        if key not in base and path not in ("pair", "loop"):
            raise ConfigError("unknown key", f"{path}.{key}" if path else key)
        if isinstance(val, dict) and isinstance(base.get(key), dict) and key not in ("pair", "loop"):
            out[key] = _merge(base[key], val, f"{path}.{key}" if path else key)
        else:
            out[key] = copy.deepcopy(val)
    return out


@dataclass(eq=False)
class RunConfig:
    """A validated run configuration.  ``raw`` keeps the merged JSON data."""

    raw: dict
    pair: object
    grid: Grid
    output: str

    @property
    def seed(self):
        return self.raw["seed"]

    @property
    def loop(self):
        return self.raw["loop"]

    @property
    def flow(self):
        return self.raw["flow"]

    @property
    def verification(self):
        return self.raw["verification"]

    @property
    def strict(self):
        return self.raw["policy"] == "strict"

    def lambda_samples(self):
        return np.array([complex(re, im) for re, im in self.verification["lambda_samples"]])

    def flow_params(self):
        """``(b, j, M, h_t, t_center)`` from the flow block."""
        fl = self.flow
        lo, hi = fl["t_range"]
        M = fl["M"]
        return self.pair.basis_A[fl["b_index"]], fl["j"], M, (hi - lo) / (M - 1), (hi + lo) / 2


def _require(cond, message, field):
    if not cond:
        raise ConfigError(message, field)


def validate(raw):
    """Check a merged configuration dict and build the pair and grid."""
    _require(isinstance(raw["seed"], int), "seed must be an integer", "seed")
    pair = pair_from_config(raw["pair"])
    g = raw["grid"]
    _require(isinstance(g.get("extents"), list) and isinstance(g.get("N"), list),
             "grid needs 'extents' and 'N' lists", "grid")
    _require(len(g["extents"]) == pair.rank == len(g["N"]),
             f"grid must have one axis per element of the regular basis ({pair.rank})", "grid")
    for k, N in enumerate(g["N"]):
        _require(isinstance(N, int) and N % 2 == 1 and N >= 9,
                 "points per axis must be an odd integer >= 9", f"grid.N[{k}]")
    try:
        grid = Grid(tuple(tuple(e) for e in g["extents"]), tuple(g["N"]))
    except (CurvedFlatsError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc), "grid") from None
    loop = raw["loop"]
    if loop is not None:
        _require(isinstance(loop.get("poles", []), list), "poles must be a list", "loop.poles")
        loop_from_config(loop, pair)  # raises ConfigError naming the offending pole
    fl = raw["flow"]
    if fl is not None:
        _require(isinstance(fl["j"], int) and fl["j"] >= 1 and fl["j"] % 2 == 1,
                 "flow degree j must be an odd positive integer", "flow.j")
        _require(isinstance(fl["b_index"], int) and 0 <= fl["b_index"] < pair.rank,
                 "b_index out of range", "flow.b_index")
        _require(isinstance(fl["M"], int) and fl["M"] >= 5, "M must be an integer >= 5", "flow.M")
        lo, hi = fl["t_range"]
        _require(hi > lo, "t_range must be increasing", "flow.t_range")
    ver = raw["verification"]
    _require(isinstance(ver["depth"], int) and 1 <= ver["depth"] <= 12, "depth must be in [1, 12]",
             "verification.depth")
    _require(isinstance(ver["series_depth"], int) and 1 <= ver["series_depth"] <= 12,
             "series_depth must be in [1, 12]", "verification.series_depth")
    flag = raw["eds"]["flag"]
    if flag is not None:
        _require(isinstance(flag, list) and all(isinstance(i, int) and 0 <= i < pair.rank for i in flag)
                 and len(set(flag)) == len(flag), "flag must list distinct indices into the regular basis",
                 "eds.flag")
    ex = raw["export"]
    _require(isinstance(ex["q_index"], int) and 0 <= ex["q_index"] < pair.rank, "q_index out of range",
             "export.q_index")
    _require(isinstance(ex["q_depth"], int) and 1 <= ex["q_depth"] <= 12, "q_depth must be in [1, 12]",
             "export.q_depth")
    _require(raw["policy"] in ("strict", "holes"), "policy must be 'strict' or 'holes'", "policy")
    output = os.environ.get(OUT_ENV, raw["output"])
    return RunConfig(raw, pair, grid, output)


def load_config(path=None, overrides=None):
    """Read a JSON config (``None`` gives the defaults) and validate it."""
    data = {}
    if path is not None:
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}", "config") from None
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}",
                              "config") from None
        if not isinstance(data, dict):
            raise ConfigError("top level must be an object", "config")
    raw = _merge(DEFAULTS, data)
    if overrides:
        raw = _merge(raw, overrides)
    return validate(raw)
