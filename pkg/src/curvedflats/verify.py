"""The verification suite behind ``curvedflats verify``.

Each suite returns a list of check records ``{"name", "criterion",
"measured", "passed"}``.  Records hold no timings, so reports of repeated
runs with the same configuration are identical; floats are rounded to ten
significant digits to absorb reduction-order noise.
"""
from __future__ import annotations

import time

import numpy as np

from .algebra import bracket, check_pair, inner, sun_son
from .conservation import (
    closedness_residual,
    commuting_flows,
    conserved_quantity,
    flow_family,
    flow_residual,
    flux_identity_residual,
    parity_residual,
    q_generate,
    q_recursion_residual,
)
from .dressing import (
    RationalLoop,
    birkhoff_factor,
    dress,
    loop_from_config,
    VacuumExponent,
)
from .eds import Flag, involutivity_report
from .grid import Grid, GridField
from .lax import cartan_lift, curved_flat, flat_abelian, parallel_frame, uu0_residual


def _round(x):
    if isinstance(x, dict):
        return {k: _round(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_round(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return float(f"{float(x):.10g}")
    return x


def check(name, criterion, measured, passed):
    return {"name": name, "criterion": criterion, "measured": _round(measured), "passed": bool(passed)}


def in_band(ratio, band):
    return band[0] <= ratio <= band[1]


def ratio(coarse, fine):
    return float(coarse) / float(fine) if fine > 0 else float("inf")


def order_check(name, coarse, fine, band, what):
    r = ratio(coarse, fine)
    return check(name, f"{what}: h-halving ratio in [{band[0]}, {band[1]}]",
                 {"coarse": coarse, "fine": fine, "ratio": r}, in_band(r, band))


def random_U(pair, rng, count):
    B = pair.U.basis
    return np.tensordot(rng.normal(size=(count, len(B))), B, axes=(1, 0))


def form_invariance(pair, rng, count=1000):
    """Largest relative ``|(ad_X Y, Z) + (Y, ad_X Z)|`` over random triples."""
    X, Y, Z = (random_U(pair, rng, count) for _ in range(3))
    val = inner(bracket(X, Y), Z, pair.form_normalization) + inner(Y, bracket(X, Z), pair.form_normalization)
    scale = np.prod([np.linalg.norm(M, axis=(-2, -1)) for M in (X, Y, Z)], axis=0)
    return float(np.max(np.abs(val) / scale))


def suite_algebra(cfg):
    tol = cfg.verification["tolerances"]
    out = []
    rng = np.random.default_rng(cfg.seed)
    for n in (2, 3, 4):
        pair = sun_son(n)
        res = check_pair(pair, tol["algebra"])
        failed = [k for k, (ok, _) in res.items() if not ok]
        out.append(check(f"algebra.sun_son{n}.invariants", "all pair invariants hold",
                         {"failed": failed, "count": len(res)}, not failed))
        worst = form_invariance(pair, rng)
        out.append(check(f"algebra.sun_son{n}.form_invariance",
                         f"ad-invariance over 1000 triples <= {tol['form_invariance']}",
                         worst, worst <= tol["form_invariance"]))
    return out


def _expm_stack(M):
    from scipy.linalg import expm

    return expm(M)


def suite_vacuum(cfg):
    """``f = I`` on a 33 x 33 grid against closed forms."""
    tol = cfg.verification["tolerances"]["vacuum"]
    pair = cfg.pair
    ext = cfg.grid.extents
    grid = Grid(ext, (33,) * pair.rank)
    sol = dress(RationalLoop.identity(pair.n), pair, grid)
    X = np.tensordot(grid.points, pair.basis_A, axes=(-1, 0))
    out = [check("vacuum.v_zero", f"v = 0 (<= {tol})", float(np.max(np.abs(sol.v.values))),
                 np.max(np.abs(sol.v.values)) <= tol)]
    worst_f, worst_i = 0.0, 0.0
    for lam in (1.0, -1.0, 0.5 + 0.5j):
        exact = _expm_stack(lam * X)
        worst_f = max(worst_f, float(np.max(np.abs(sol.frame(lam) - exact))))
        integ = parallel_frame(sol.v, lam, pair).values
        worst_i = max(worst_i, float(np.max(np.abs(integ - exact))))
    out.append(check("vacuum.frame_factorized", f"E = exp(lam a.x) (<= {tol})", worst_f, worst_f <= tol))
    out.append(check("vacuum.frame_integrated", f"E = exp(lam a.x) (<= {tol})", worst_i, worst_i <= tol))
    psi = curved_flat(sol.v, pair).field.values
    e_psi = float(np.max(np.abs(psi - _expm_stack(2 * X))))
    out.append(check("vacuum.psi", f"psi = exp(2 a.x) (<= {tol})", e_psi, e_psi <= tol))
    Y = flat_abelian(sol.v, pair, delta=cfg.verification["delta"]).field.values
    e_Y = float(np.max(np.abs(Y - X)))
    out.append(check("vacuum.Y", f"Y = a.x (<= {tol})", e_Y, e_Y <= tol))
    return out


class Scenario:
    """Dressed solutions on the configured grid and its refinement (shared by suites)."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.pair = cfg.pair
        self.loop = loop_from_config(cfg.loop, cfg.pair)
        self.grids = [cfg.grid] + ([cfg.grid.refine()] if cfg.verification["convergence_study"] else [])
        self.solutions = [dress(self.loop, self.pair, g, strict=cfg.strict) for g in self.grids]
        tamper = cfg.verification.get("tamper")
        self.tampered = None
        if tamper:
            self._tamper(tamper)

    def _tamper(self, tamper):
        node = tuple(tamper["node"])
        amount = float(tamper.get("amount", 1e-3))
        basis = self.pair.U1_perpA.basis[0]
        for level, sol in enumerate(self.solutions):
            idx = tuple(k * 2 ** level for k in node)
            vals = sol.v.values.copy()
            vals[idx] = vals[idx] + amount * basis
            sol.v = GridField(sol.grid, vals, sol.v.space)
        self.tampered = node

    def frames(self, level):
        sol = self.solutions[level]
        cache = {}

        def E(lam):
            key = complex(lam)
            if key not in cache:
                cache[key] = sol.frame(key)
            return cache[key]
        return E


def suite_dressed(cfg, sc):
    tol = cfg.verification["tolerances"]
    band = cfg.verification["order_band"]
    pair = sc.pair
    base = sc.solutions[0]
    out = []
    rep = sc.loop.check_invariants(pair)
    out.append(check("dressed.loop_reality", f"loop reality <= {tol['reality']}",
                     rep["reality"], rep["ok"] and rep["reality"] <= tol["reality"]))
    res = [uu0_residual(s.v, pair) for s in sc.solutions]
    vnorm = base.v.norm()
    out.append(check("dressed.v_nonzero", "dressed v is not identically zero", vnorm, vnorm > 1e-3))
    if len(res) > 1:
        rec = order_check("dressed.uu0_order", res[0].max, res[1].max, band, "uu0 residual")
        rec["measured"]["worst_node"] = list(res[0].argmax[1])
        rec["measured"]["worst_node_fine"] = list(res[1].argmax[1])
        out.append(rec)
    contour = 2.5 * np.exp(2j * np.pi * np.arange(16) / 16)
    prod = float(np.max(base.fact.product_residual(contour)))
    out.append(check("dressed.product_identity", f"f^-1 e^A = E m^-1 on 16 contour points, every node <= {tol['product']}",
                     prod, prod <= tol["product"]))
    ent = float(np.max(base.fact.entirety_residual()))
    out.append(check("dressed.entirety", f"residues of E at all singular points <= {tol['entirety']}",
                     ent, ent <= tol["entirety"]))
    samples = cfg.lambda_samples()
    real = float(np.max(base.fact.reality_residual(samples)))
    out.append(check("dressed.factor_reality", f"reality of E and m on lambda quadruples <= {tol['reality']}",
                     real, real <= tol["reality"]))
    m1 = base.fact.m_minus1
    memb = float(max(np.max(np.abs(pair.sigma(m1) + m1)), np.max(np.abs(pair.tau(m1) - m1))))
    out.append(check("dressed.m_minus1_in_U1", f"m_-1 in U1 <= {tol['membership']}", memb, memb <= tol["membership"]))
    X = VacuumExponent(pair, base.grid.points)
    qr = birkhoff_factor(sc.loop, X, method="qr", strict=False)
    uniq = float(np.max(np.abs(qr.S - base.fact.S)))
    out.append(check("dressed.uniqueness", "SVD and pivoted-QR solves agree <= 1e-10", uniq, uniq <= 1e-10))
    out.append(check("dressed.factorizable", "no node above the condition cutoff",
                     {"holes": int(np.sum(base.fact.holes)), "max_cond": float(np.max(base.fact.cond))},
                     not np.any(base.fact.holes)))
    return out


def suite_geometry(cfg, sc):
    tol = cfg.verification["tolerances"]
    band = cfg.verification["order_band"]
    pair = sc.pair
    delta = cfg.verification["delta"]
    out = []
    diags = []
    for level, sol in enumerate(sc.solutions):
        E = sc.frames(level)
        d = {}
        d.update({f"psi_{k}": v for k, v in curved_flat(sol.v, pair, frames=E).diagnostics.items()})
        d.update(cartan_lift(sol.v, pair, frames=E).diagnostics)
        fa = flat_abelian(sol.v, pair, frames=E, delta=delta).diagnostics
        d.update({f"Y_{k}": v for k, v in fa.items() if k != "gram_origin"})
        diags.append(d)
    d0 = diags[0]
    out.append(check("geometry.sigma_orbit", f"sigma(psi) psi = I <= {tol['orbit']}",
                     d0["psi_sigma_orbit"], d0["psi_sigma_orbit"] <= tol["orbit"]))
    out.append(check("geometry.Y_in_U1", f"Y in U1 <= {tol['membership']}", d0["Y_space"],
                     d0["Y_space"] <= tol["membership"]))
    base = sc.solutions[0]
    integ = parallel_frame(base.v, 1.0, pair)
    gap = float(np.max(np.abs(integ.values - base.frame(1.0))))
    psi_i = curved_flat(base.v, pair).diagnostics["sigma_orbit"]
    out.append(check("geometry.sigma_orbit_integrated", f"sigma(psi) psi = I with integrated frames <= {tol['orbit']}",
                     psi_i, psi_i <= tol["orbit"]))
    if len(diags) > 1:
        for key, what in (("bi_space", "f^-1 df in U1"), ("bi_bracket", "[f^-1 f_i, f^-1 f_j] = 0"),
                          ("bj_f", "f^-1 f_i = g a_i g^-1"), ("bj_g", "g^-1 g_i = [a_i, v]"),
                          ("Y_bracket", "[Y_i, Y_j] = 0"), ("Y_gram_drift", "Gram matrix of dY constant")):
            out.append(order_check(f"geometry.{key}_order", diags[0][key], diags[1][key], band, what))
        integ_f = parallel_frame(sc.solutions[1].v, 1.0, pair, check_paths=False)
        gap_f = float(np.max(np.abs(integ_f.values - sc.solutions[1].frame(1.0))))
        out.append(order_check("geometry.integrated_frame_order", gap, gap_f, band,
                               "integrated vs factorized frame"))
    return out


def _series_coefficients(Q1, Q2, depth):
    """``sum_{a+b=k} [Q1_a, Q2_b]`` for ``k = 0..depth``."""
    return [sum(bracket(Q1[a], Q2[k - a]) for a in range(k + 1)) for k in range(depth + 1)]


def suite_q(cfg, sc):
    tol = cfg.verification["tolerances"]
    band = cfg.verification["order_band"]
    depth = cfg.verification["depth"]
    sdepth = cfg.verification["series_depth"]
    margin = cfg.verification["margin"]
    pair = sc.pair
    a = pair.basis_A
    out = []
    per_level = []
    for sol in sc.solutions:
        grid = sol.grid
        Q = sol.Q(a[-1], depth + 1)
        G = q_generate(sol.v, a[-1], depth, pair, edge=Q)
        mask = grid.interior(margin)
        gen = [float(np.max(np.abs(G[k] - Q[k])[mask])) for k in range(depth + 1)]
        rec = q_recursion_residual(sol.v, Q, pair)
        per_level.append({
            "generate": gen,
            "recursion": [rec[k].max for k in range(depth)],
            "kernel": [rec["kernel"][k].max for k in range(depth)],
            "closedness": [closedness_residual(Q, k, pair, grid).max for k in range(depth + 1)],
        })
    L0 = per_level[0]
    exact = max(L0["generate"][:2])
    out.append(check("q.generate_low_levels", "levels 0, 1 reproduced exactly (Q_1 = [c, v]) <= 1e-9",
                     exact, exact <= 1e-9))
    if len(per_level) > 1:
        L1 = per_level[1]
        for k in range(2, depth + 1):
            out.append(order_check(f"q.generate_level{k}_order", L0["generate"][k], L1["generate"][k], band,
                                   f"q_generate vs q_expand, level {k}, interior"))
        for k in range(1, depth):
            out.append(order_check(f"q.recursion_level{k}_order", L0["recursion"][k], L1["recursion"][k], band,
                                   f"recursion residual, level {k}"))
        for k in range(2, depth + 1, 2):
            out.append(order_check(f"q.closedness_level{k}_order", L0["closedness"][k], L1["closedness"][k], band,
                                   f"closedness residual, level {k}"))
        for k in range(2, depth, 2):
            out.append(order_check(f"q.kernel_level{k}_order", L0["kernel"][k], L1["kernel"][k], band,
                                   f"kernel part of the recursion, level {k}"))
    odd_closed = max([L0["closedness"][k] for k in range(1, depth + 1, 2)] + [L0["closedness"][0]])
    out.append(check("q.closedness_trivial_levels", "levels 0 and odd levels vanish identically <= 1e-9",
                     odd_closed, odd_closed <= 1e-9))
    base = sc.solutions[0]
    par, series = 0.0, 0.0
    for c in a:
        par = max(par, parity_residual(base.Q(c, sdepth), pair))
    Qs = [base.Q(c, sdepth) for c in a]
    for i in range(len(a)):
        for j in range(len(a)):
            coeffs = _series_coefficients(Qs[i], Qs[j], sdepth)
            series = max(series, max(float(np.max(np.abs(C))) for C in coeffs))
    out.append(check("q.parity", f"sigma Q_n = (-1)^(n+1) Q_n for n <= {sdepth} <= {tol['parity']}",
                     par, par <= tol["parity"]))
    out.append(check("q.commuting_series", f"coefficients of [m^-1 c1 m, m^-1 c2 m] up to {sdepth} <= {tol['series']}",
                     series, series <= tol["series"]))
    return out


def suite_flows(cfg, sc):
    tol = cfg.verification["tolerances"]
    band = cfg.verification["order_band"]
    margin = cfg.verification["margin"]
    pair = sc.pair
    b, j, M, h_t, t0 = cfg.flow_params()
    c = pair.basis_A[-1]
    n_density = 2
    out = []
    fams = [flow_family(sc.loop, pair, sc.grids[0], b, j, M=M, h_t=h_t, t_center=t0)]
    if len(sc.grids) > 1:
        fams.append(flow_family(sc.loop, pair, sc.grids[1], b, j, M=2 * M - 1, h_t=h_t / 2, t_center=t0))
    stats = []
    for lev, F in enumerate(fams):
        tm = (len(F.times) - 1) // 4
        fr = flow_residual(F, pair, margin=margin, t_margin=tm)
        fl = [flux_identity_residual(F, c, n_density, i, pair, margin=margin, t_margin=tm) for i in range(pair.rank)]
        stats.append({"flow": fr["flow"], "x_system": fr["x_system"],
                      "flux": max(f["flux"] for f in fl),
                      "stepping": max(f["stepping"] for f in fl),
                      "bracket_form": max(f["bracket_form"] for f in fl)})
    if len(stats) > 1:
        for key, what in (("flow", "flow equation"), ("flux", "flux identity"),
                          ("stepping", "stepping identity"), ("bracket_form", "density derivative as brackets")):
            out.append(order_check(f"flows.{key}_order", stats[0][key], stats[1][key], band,
                                   f"{what}, joint (h, h_t) halving, interior"))
    cqs = [conserved_quantity(F, c, n_density, 0, pair) for F in fams]
    F, cq = fams[-1], cqs[-1]
    h = max(F.grid.h)
    disc = h ** 4 + F.h_t ** 4
    out.append(check("flows.conserved_quantity",
                     "relative drift <= boundary-flux bound + h^4 + h_t^4",
                     {"relative_drift": cq["relative_drift"], "flux_bound": cq["flux_bound"],
                      "discretization": disc, "budget": cq["budget"],
                      "boundary_density": cq["boundary_density"]},
                     cq["relative_drift"] <= cq["flux_bound"] + disc))
    if len(cqs) > 1:
        out.append(order_check("flows.flux_budget_order", cqs[0]["budget"], cqs[1]["budget"], band,
                               "change of the integral minus integrated boundary flux"))
    neg = flow_residual(fams[0], pair, j_override=1, margin=margin)["flow"]
    out.append(check("flows.mismatched_degree", "wrong level of the b-sequence gives an O(1) residual",
                     neg, neg > 1e-2))
    flows2 = [(pair.basis_A[0], 3, 0.1), (pair.basis_A[-1], 5, 0.05)]
    comm = commuting_flows(sc.loop, pair, sc.grids[0], *flows2)
    out.append(check("flows.commuting", f"v independent of flow order <= {tol['commuting_flows']}",
                     comm, comm <= tol["commuting_flows"]))
    return out


def suite_eds(cfg):
    out = []
    for n in (2, 3, 4):
        pair = sun_son(n)
        rep = involutivity_report(pair, seed=cfg.seed)
        expected = [pair.dim_U - pair.dim_U1, pair.dim_U1 - pair.rank] + [0] * (pair.rank - 1)
        out.append(check(f"eds.sun_son{n}.characters", f"s = {expected}", rep.characters,
                         rep.characters == expected))
        out.append(check(f"eds.sun_son{n}.cartan_test", "codim = c(F) at the canonical flag",
                         {"codim": rep.codim, "c_F": rep.c_F}, rep.codim == rep.c_F))
        out.append(check(f"eds.sun_son{n}.involutive", "involutive verdict", rep.involutive, rep.involutive))
    pair = sun_son(3)
    x = 1j * np.diag([1.0, 1.0, -2.0])
    F = Flag(pair, [x, 1j * np.diag([1.0, -1.0, 0.0])])
    rep = involutivity_report(pair, F, seed=cfg.seed)
    out.append(check("eds.degenerate_flag", "flag through a non-regular element fails the test",
                     {"codim": rep.codim, "c_F": rep.c_F, "involutive": rep.involutive},
                     rep.codim != rep.c_F and not rep.involutive))
    return out


SUITES = ("algebra", "vacuum", "dressed", "geometry", "q", "flows", "eds")


def run_verify(cfg, suites=SUITES, log=None):
    """Run the suites; returns ``(report, timings)``."""
    checks, timings = [], {}
    sc = None
    for name in suites:
        start = time.perf_counter()
        if name in ("dressed", "geometry", "q", "flows") and sc is None:
            sc = Scenario(cfg)
        fn = globals()[f"suite_{name}"]
        recs = fn(cfg, sc) if name in ("dressed", "geometry", "q", "flows") else fn(cfg)
        checks.extend(recs)
        timings[name] = time.perf_counter() - start
        if log:
            log(f"{name}: {sum(r['passed'] for r in recs)}/{len(recs)} passed in {timings[name]:.1f} s")
    report = {
        "pair": cfg.pair.name,
        "grid": {"extents": cfg.grid.extents, "N": cfg.grid.N},
        "seed": cfg.seed,
        "checks": checks,
        "passed": all(r["passed"] for r in checks),
    }
    if sc is not None and sc.tampered is not None:
        report["tampered_node"] = list(sc.tampered)
    return report, timings
