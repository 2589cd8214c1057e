"""Acceptance criteria, each at its stated tolerance.

The suite runs the full ``verify`` pipeline on the default configuration
(twice, for the determinism criterion) and prints one PASS/FAIL line per
criterion; the lines are repeated in the pytest terminal summary.
"""
import time

import pytest

from curvedflats.config import load_config
from curvedflats.verify import run_verify

from conftest import ACCEPTANCE_LINES

RUNTIME_LIMIT = 300.0


@pytest.fixture(scope="module")
def verify_run():
    cfg = load_config()
    start = time.perf_counter()
    report, timings = run_verify(cfg)
    total = time.perf_counter() - start
    return cfg, report, timings, total


def checks_with(report, prefix):
    return [c for c in report["checks"] if c["name"].startswith(prefix)]


def record(number, title, failed, extra=""):
    status = "PASS" if not failed else "FAIL"
    detail = f" [{extra}]" if extra else ""
    line = f"criterion {number} {status}: {title}{detail}"
    if failed:
        line += " failing: " + ", ".join(failed)
    ACCEPTANCE_LINES[number] = line
    print(line)
    return not failed


def suite_criterion(verify_run, number, title, prefix, time_limit=None, expected=None):
    _, report, timings, _ = verify_run
    recs = checks_with(report, prefix)
    failed = [c["name"] for c in recs if not c["passed"]]
    if expected is not None:
        names = {c["name"] for c in recs}
        failed += [f"missing {n}" for n in expected if n not in names]
    if not recs:
        failed.append("no checks ran")
    suite = prefix.rstrip(".")
    extra = f"{len(recs)} checks, {timings[suite]:.1f} s"
    if time_limit is not None and timings[suite] > time_limit:
        failed.append(f"runtime {timings[suite]:.1f} s > {time_limit} s")
    assert record(number, title, failed, extra), ACCEPTANCE_LINES[number]


def test_criterion_1_algebra(verify_run):
    suite_criterion(verify_run, 1, "algebra invariants for sun_son n = 2, 3, 4 and ad-invariance", "algebra.",
                    time_limit=5.0,
                    expected=[f"algebra.sun_son{n}.{k}" for n in (2, 3, 4) for k in ("invariants", "form_invariance")])


def test_criterion_2_vacuum(verify_run):
    suite_criterion(verify_run, 2, "vacuum exactness on 33 x 33", "vacuum.", time_limit=10.0,
                    expected=["vacuum.v_zero", "vacuum.frame_factorized", "vacuum.psi", "vacuum.Y"])


def test_criterion_3_dressed(verify_run):
    suite_criterion(verify_run, 3, "dressed solution: 4th order, product identity, reality", "dressed.",
                    time_limit=120.0,
                    expected=["dressed.v_nonzero", "dressed.uu0_order", "dressed.product_identity",
                              "dressed.factor_reality"])


def test_criterion_4_geometry(verify_run):
    suite_criterion(verify_run, 4, "geometry: Cartan embedding, lift equations, flat abelian immersion",
                    "geometry.",
                    expected=["geometry.sigma_orbit", "geometry.bi_space_order", "geometry.bi_bracket_order",
                              "geometry.bj_f_order", "geometry.bj_g_order", "geometry.Y_bracket_order",
                              "geometry.Y_gram_drift_order"])


def test_criterion_5_q(verify_run):
    suite_criterion(verify_run, 5, "Q sequences: generation order, recursion, closedness, parity, series",
                    "q.",
                    expected=["q.generate_level2_order", "q.generate_level3_order", "q.generate_level4_order",
                              "q.parity", "q.commuting_series", "q.closedness_level2_order"])


def test_criterion_6_flows(verify_run):
    suite_criterion(verify_run, 6, "flows: joint 4th order, conserved quantity, commutation", "flows.",
                    expected=["flows.flow_order", "flows.flux_order", "flows.conserved_quantity",
                              "flows.commuting"])


def test_criterion_7_eds(verify_run):
    suite_criterion(verify_run, 7, "Cartan characters and test for n = 2, 3, 4; degenerate flag fails", "eds.",
                    time_limit=10.0,
                    expected=[f"eds.sun_son{n}.{k}" for n in (2, 3, 4) for k in ("characters", "cartan_test")]
                    + ["eds.degenerate_flag"])


def test_criterion_8_determinism(verify_run):
    cfg, report, _, total = verify_run
    again, _ = run_verify(load_config())
    failed = [] if again == report else ["reports differ"]
    if total > RUNTIME_LIMIT:
        failed.append(f"verify took {total:.1f} s > {RUNTIME_LIMIT} s")
    assert record(8, "repeated verify runs give identical reports; full run under 5 min", failed,
                  f"first run {total:.1f} s"), ACCEPTANCE_LINES[8]
