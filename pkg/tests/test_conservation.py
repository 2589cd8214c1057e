import numpy as np
import pytest

from curvedflats.algebra import bracket
from curvedflats.conservation import (
    closedness_residual,
    commuting_flows,
    conserved_quantity,
    densities,
    eds_conservation_form,
    flow_family,
    flow_residual,
    flux,
    flux_identity_residual,
    parity_residual,
    q_generate,
    q_recursion_residual,
    stepping_base_case,
)
from curvedflats.errors import NonRegularBasis, UnsupportedRank
from curvedflats.grid import Grid, GridField

from conftest import interior_max

BAND = (12.8, 19.2)


def order_ratio(coarse_sol, fine_sol, make):
    """Ratio of interior maxima of ``make(sol)`` on a grid and its refinement."""
    return (interior_max(make(coarse_sol), coarse_sol.grid)
            / interior_max(make(fine_sol), fine_sol.grid))


@pytest.fixture(scope="module")
def flows_small(default_loop, pair3, small_grid):
    return flow_family(default_loop, pair3, small_grid, pair3.basis_A[0], 3, M=9, h_t=0.04)


def test_low_levels_exact(small_solution, pair3):
    c = pair3.basis_A[1]
    Q = small_solution.Q(c, 2)
    assert np.allclose(Q[0], c)
    assert np.max(np.abs(Q[1] - bracket(c, small_solution.v.values))) < 1e-12


def test_vacuum_sequence_is_constant(pair3):
    g = Grid.square(1.0, 17)
    v = GridField(g, np.zeros(g.N + (3, 3), dtype=complex))
    G = q_generate(v, pair3.basis_A[1], 3, pair3)
    assert np.allclose(G[0], pair3.basis_A[1])
    assert np.max(np.abs(G[1:])) < 1e-14


def test_parity_rule(small_solution, pair3):
    for c in pair3.basis_A:
        Q = small_solution.Q(c, 6)
        assert parity_residual(Q, pair3) < 1e-9
        # odd levels in U0, even levels (from 2 on) in U1
        assert np.max(pair3.U0.distance(Q[3])) < 1e-9
        assert np.max(pair3.U1.distance(Q[4])) < 1e-9


def test_odd_densities_vanish(small_solution, pair3):
    Q = small_solution.Q(pair3.basis_A[1], 5)
    for n in (1, 3, 5):
        assert np.max(np.abs(densities(Q[n], pair3))) < 1e-12
    assert np.max(np.abs(densities(Q[2], pair3))) > 1e-3


def test_q_generate_matches_q_expand(pair3, default_loop):
    from curvedflats.dressing import dress

    errs = []
    for N in (33, 65):
        grid = Grid.square(1.6, N)
        sol = dress(default_loop, pair3, grid)
        Q = sol.Q(pair3.basis_A[1], 4)
        G = q_generate(sol.v, pair3.basis_A[1], 3, pair3, edge=Q)
        mask = grid.interior(0.2)
        assert np.max(np.abs(G[1] - Q[1])) < 1e-9
        errs.append(np.max(np.abs(G[2] - Q[2])[mask]))
    assert 12.8 <= errs[0] / errs[1] <= 19.2


def test_recursion_residual_order(default_solution, fine_solution, pair3):
    c = pair3.basis_A[0]
    res = q_recursion_residual(default_solution.v, default_solution.Q(c, 2), pair3)
    assert res[0].max < 1e-9  # level 0 involves no derivative of Q

    def make(sol):
        return q_recursion_residual(sol.v, sol.Q(c, 3), pair3)[2].fields[0]

    assert BAND[0] <= order_ratio(default_solution, fine_solution, make) <= BAND[1]


def test_recursion_detects_wrong_sequence(small_solution, pair3):
    Q = small_solution.Q(pair3.basis_A[0], 3).copy()
    Q[2] = Q[2] * 1.1
    assert q_recursion_residual(small_solution.v, Q, pair3)[1].max > 1e-3


def test_closedness_levels(default_solution, fine_solution, pair3):
    c = pair3.basis_A[1]
    grid = default_solution.grid
    Q = default_solution.Q(c, 4)
    assert closedness_residual(Q, 3, pair3, grid).max < 1e-10

    def make(sol):
        return closedness_residual(sol.Q(c, 2), 2, pair3, sol.grid).fields[(0, 1)]

    assert BAND[0] <= order_ratio(default_solution, fine_solution, make) <= BAND[1]


def test_conservation_form_rank_two(default_solution, fine_solution, pair3):
    c = pair3.basis_A[1]
    form = eds_conservation_form(default_solution.Q(c, 2), 2, 0, 1, pair3, default_solution.grid)
    assert set(form.components) == {0, 1}

    def make(sol):
        return eds_conservation_form(sol.Q(c, 2), 2, 0, 1, pair3, sol.grid).d_residual.fields[(0, 1)]

    assert BAND[0] <= order_ratio(default_solution, fine_solution, make) <= BAND[1]


def test_conservation_form_rank_three_and_four():
    from curvedflats.algebra import sun_son
    from curvedflats.dressing import dress, loop_from_config

    pair = sun_son(4)
    grid = Grid.square(0.5, 9, r=3)
    sol = dress(loop_from_config({"poles": [[1.0, 1.0]], "seed": 2}, pair), pair, grid)
    Q = sol.Q(pair.basis_A[0], 2)
    form = eds_conservation_form(Q, 2, 0, 1, pair, grid)
    assert set(form.components) == {(0, 1), (0, 2), (1, 2)}
    assert np.allclose(form.components[(0, 1)], 0.0)
    pair5 = sun_son(5)
    g4 = Grid.square(0.5, 9, r=4)
    with pytest.raises(UnsupportedRank):
        eds_conservation_form(np.zeros((3,) + g4.N + (5, 5)), 2, 0, 1, pair5, g4)


def test_non_regular_first_basis_element(pair3):
    from curvedflats.algebra import SymmetricPair

    bad = SymmetricPair(3, pair3.tau, pair3.sigma, pair3.basis_U0, pair3.basis_U1,
                        np.array([1j * np.diag([1.0, 1.0, -2.0]), pair3.basis_A[1]]))
    g = Grid.square(1.0, 9)
    v = GridField(g, np.zeros(g.N + (3, 3), dtype=complex))
    with pytest.raises(NonRegularBasis):
        q_generate(v, pair3.basis_A[0], 2, bad)


def test_flux_sum_small_case(pair3, rng):
    Qc = rng.normal(size=(6, 3, 3)) + 0j
    Qb = rng.normal(size=(4, 3, 3)) + 0j
    # j = 1: single term (Q_{c,n}, Q_{b,0})
    assert np.isclose(flux(Qc, Qb, 2, 1, pair3), pair3.inner(Qc[2], Qb[0]))
    # j = 2: (Q_n, Q_b1) + (Q_{n+1}, Q_b0) + (Q_{n+1}, Q_b0)
    expected = pair3.inner(Qc[2], Qb[1]) + 2 * pair3.inner(Qc[3], Qb[0])
    assert np.isclose(flux(Qc, Qb, 2, 2, pair3), expected)


def test_stepping_base_case(default_solution, fine_solution, pair3):
    b = pair3.basis_A[0]
    errs = []
    for sol in (default_solution, fine_solution):
        Q = sol.Q(pair3.basis_A[1], 3)
        Qb = sol.Q(b, 1)
        errs.append(stepping_base_case(Q, Qb[1], b, 0, pair3, sol.grid, 2))
    assert errs[1] < errs[0] / 8


def test_flow_residuals(flows_small, pair3):
    r = flow_residual(flows_small, pair3, margin=0.2, t_margin=2)
    wrong = flow_residual(flows_small, pair3, j_override=1, margin=0.2, t_margin=2)
    assert wrong["flow"] > 100 * r["flow"]
    fl = flux_identity_residual(flows_small, pair3.basis_A[1], 2, 0, pair3, margin=0.2, t_margin=2)
    assert fl["flux"] < 0.05 * fl["density_scale"]


def test_conserved_quantity_budget(flows_small, pair3):
    cq = conserved_quantity(flows_small, pair3.basis_A[1], 2, 0, pair3)
    assert len(cq["values"]) == 9
    assert cq["relative_drift"] <= cq["flux_bound"] + 1e-3
    assert cq["budget"] < 1e-3


def test_flows_commute(default_loop, pair3):
    g = Grid.square(1.0, 17)
    d = commuting_flows(default_loop, pair3, g, (pair3.basis_A[0], 3, 0.1), (pair3.basis_A[1], 5, -0.05))
    assert d < 1e-9


def test_level_zero_integral_constant(flows_small, pair3):
    cq = conserved_quantity(flows_small, pair3.basis_A[1], 0, 0, pair3)
    assert cq["drift"] < 1e-12 * cq["scale"]


def test_closedness_negative(small_solution, pair3, rng):
    g = small_solution.grid
    x = g.points
    Q = np.zeros((3,) + g.N + (3, 3), dtype=complex)
    Q[2] = np.sin(2 * x[..., 1])[..., None, None] * pair3.basis_A[0]
    assert closedness_residual(Q, 2, pair3, g).max > 0.1
