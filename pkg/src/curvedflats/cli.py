"""Command-line driver: ``curvedflats <command> [--config PATH] [--out DIR] ...``.

Exit codes: 0 pass, 1 failed criteria, 2 configuration error, 3 singular
factorization under the strict policy.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time

from .algebra import check_pair
from .config import load_config
from .conservation import (
    conserved_quantity,
    flow_family,
    flow_residual,
    flux_identity_residual,
)
from .dressing import dress, loop_from_config
from .eds import Flag, involutivity_report
from .errors import ConfigError, FactorizationSingular
from .export import grid_csv, series_csv, write_json, write_manifest
from .lax import cartan_lift, curved_flat, flat_abelian, uu0_residual
from .verify import run_verify

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_SINGULAR = 0, 1, 2, 3


def _log(msg):
    print(msg, file=sys.stderr)


class Run:
    """Output directory bookkeeping for one command."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.dir = cfg.output
        os.makedirs(self.dir, exist_ok=True)
        self.files = []
        self.volatile = []

    def path(self, name):
        self.files.append(name)
        return os.path.join(self.dir, name)

    def json(self, name, data, volatile=False):
        write_json(self.path(name), data)
        if volatile:
            self.volatile.append(name)

    def finish(self):
        return write_manifest(self.dir, self.files, self.volatile)


def cmd_pair_check(cfg, run):
    res = check_pair(cfg.pair, cfg.verification["tolerances"]["algebra"])
    checks = [{"name": k, "passed": ok, "measured": v} for k, (ok, v) in res.items()]
    passed = all(c["passed"] for c in checks)
    run.json("pair_check.json", {"pair": cfg.pair.name, "checks": checks, "passed": passed})
    for c in checks:
        if not c["passed"]:
            _log(f"FAIL {c['name']} ({c['measured']:.3e})")
    return EXIT_OK if passed else EXIT_FAIL


def _dressed(cfg):
    loop = loop_from_config(cfg.loop, cfg.pair)
    return loop, dress(loop, cfg.pair, cfg.grid, strict=cfg.strict)


def cmd_dress(cfg, run):
    pair, grid = cfg.pair, cfg.grid
    loop, sol = _dressed(cfg)

    def frames(lam):
        return sol.frame(lam)

    psi = curved_flat(sol.v, pair, frames=frames)
    lift = cartan_lift(sol.v, pair, frames=frames)
    Y = flat_abelian(sol.v, pair, frames=frames, delta=cfg.verification["delta"])
    for name, field in (("v", sol.v), ("psi", psi.field), ("f", lift.field), ("Y", Y.field)):
        grid_csv(run.path(f"{name}.csv"), grid, field.values)
    rep = sol.report(cfg.lambda_samples())
    fact = {
        "poles": loop.singular_points(),
        "cond": sol.fact.cond,
        "holes": rep["holes"],
        "max_cond": rep["max_cond"],
    }
    run.json("factorization.json", fact)
    uu0 = uu0_residual(sol.v, pair)
    report = {
        "factorization": rep,
        "uu0_residual": uu0.max,
        "curved_flat": psi.diagnostics,
        "cartan_lift": lift.diagnostics,
        "flat_abelian": Y.diagnostics,
    }
    tol = cfg.verification["tolerances"]
    report["passed"] = bool(rep["product_residual"] <= tol["product"]
                            and rep["entirety_residual"] <= tol["entirety"]
                            and rep["reality_residual"] <= tol["reality"]
                            and psi.diagnostics["sigma_orbit"] <= tol["orbit"])
    run.json("report.json", report)
    return EXIT_OK if report["passed"] else EXIT_FAIL


def cmd_verify(cfg, run):
    report, timings = run_verify(cfg, log=_log)
    run.json("report.json", report)
    run.json("timings.json", timings, volatile=True)
    for rec in report["checks"]:
        if not rec["passed"]:
            _log(f"FAIL {rec['name']}: {json.dumps(rec['measured'])}")
    if "tampered_node" in report:
        _log(f"tampered node {report['tampered_node']}")
    return EXIT_OK if report["passed"] else EXIT_FAIL


def cmd_flows(cfg, run):
    if cfg.flow is None:
        raise ConfigError("the flows command needs a flow block", "flow")
    pair, grid = cfg.pair, cfg.grid
    loop = loop_from_config(cfg.loop, pair)
    b, j, M, h_t, t0 = cfg.flow_params()
    F = flow_family(loop, pair, grid, b, j, M=M, h_t=h_t, t_center=t0)
    c = pair.basis_A[-1]
    n_density = 2
    margin = cfg.verification["margin"]
    tm = (M - 1) // 4
    report = {
        "b_index": cfg.flow["b_index"], "j": j, "times": F.times,
        "flow": flow_residual(F, pair, margin=margin, t_margin=tm),
        "flux": [flux_identity_residual(F, c, n_density, i, pair, margin=margin, t_margin=tm)
                 for i in range(pair.rank)],
    }
    cq = [conserved_quantity(F, c, n_density, i, pair) for i in range(pair.rank)]
    report["conserved"] = cq
    cols = {"t": F.times}
    for i, q in enumerate(cq):
        cols[f"integral_{i + 1}"] = q["values"]
    series_csv(run.path("conserved.csv"), cols)
    for m, (t, sol) in enumerate(zip(F.times, F.solutions)):
        grid_csv(run.path(f"v_t{m}.csv"), grid, sol.v.values, t=t)
    run.json("flows.json", report)
    return EXIT_OK


def cmd_eds_report(cfg, run):
    flag = cfg.raw["eds"]["flag"]
    F = Flag.from_indices(cfg.pair, flag) if flag is not None else None
    rep = involutivity_report(cfg.pair, F, samples=cfg.raw["eds"]["samples"], seed=cfg.seed)
    data = rep.as_dict()
    data["pair"] = cfg.pair.name
    run.json("eds.json", data)
    _log(f"characters {rep.characters}, codim {rep.codim}, c(F) {rep.c_F}, involutive {rep.involutive}")
    return EXIT_OK if rep.involutive else EXIT_FAIL


def cmd_export(cfg, run):
    pair, grid = cfg.pair, cfg.grid
    _, sol = _dressed(cfg)
    ex = cfg.raw["export"]
    grid_csv(run.path("v.csv"), grid, sol.v.values)
    for k, (re, im) in enumerate(ex["lambda"]):
        grid_csv(run.path(f"E_{k}.csv"), grid, sol.frame(complex(re, im)))
    Q = sol.Q(pair.basis_A[ex["q_index"]], ex["q_depth"])
    for k in range(len(Q)):
        grid_csv(run.path(f"Q_{k}.csv"), grid, Q[k])
    run.json("export.json", {"lambda": ex["lambda"], "q_index": ex["q_index"], "q_depth": ex["q_depth"]})
    return EXIT_OK


COMMANDS = {
    "pair-check": cmd_pair_check,
    "dress": cmd_dress,
    "verify": cmd_verify,
    "flows": cmd_flows,
    "eds-report": cmd_eds_report,
    "export": cmd_export,
}


def build_parser():
    p = argparse.ArgumentParser(prog="curvedflats", description="Curved flats by dressing: runs and checks.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="JSON run configuration (defaults when omitted)")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--threads", type=int, help="cap on BLAS worker threads")
    p.add_argument("--strict", action="store_true", help="fail on the first singular node")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    overrides = {}
    if args.out:
        overrides["output"] = args.out
    if args.strict:
        overrides["policy"] = "strict"
    try:
        cfg = load_config(args.config, overrides)
        if args.out:
            cfg.output = args.out
    except ConfigError as exc:
        _log(f"config error: {exc}")
        return EXIT_CONFIG
    limiter = None
    if args.threads:
        from threadpoolctl import threadpool_limits

        limiter = threadpool_limits(args.threads)
    start = time.perf_counter()
    try:
        run = Run(cfg)
        code = COMMANDS[args.command](cfg, run)
        run.finish()
    except ConfigError as exc:
        _log(f"config error: {exc}")
        return EXIT_CONFIG
    except FactorizationSingular as exc:
        _log(f"singular factorization: {exc}")
        return EXIT_SINGULAR
    finally:
        if limiter is not None:
            limiter.restore_original_limits()
    _log(f"{args.command}: exit {code} after {time.perf_counter() - start:.1f} s")
    return code


if __name__ == "__main__":
    sys.exit(main())
