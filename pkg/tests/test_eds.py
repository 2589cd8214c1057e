import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from curvedflats.algebra import sun_son
from curvedflats.eds import (
    Flag,
    IntegralElement,
    cartan_characters,
    cartan_test,
    involutivity_report,
    polar_rank,
    polar_space,
    regularity_probe,
)
from curvedflats.errors import InvalidFlag, NotIntegral

import oracles


@pytest.mark.parametrize("n", [2, 3, 4])
def test_characters_and_cartan_test(n):
    pair = sun_son(n)
    rep = involutivity_report(pair, samples=20)
    assert rep.characters == oracles.CHARACTERS[n]
    # closed form: (dim U - dim U1, dim U1 - r, 0, ...)
    assert rep.characters[:2] == [pair.dim_U - pair.dim_U1, pair.dim_U1 - pair.rank]
    assert rep.c_F == oracles.C_F[n]
    assert rep.codim == rep.c_F
    assert rep.involutive
    assert rep.monotone


def test_polar_spaces_along_flag(pair3):
    F = Flag.canonical(pair3)
    dims = [polar_space(E).dim for E in F.elements]
    assert dims == [pair3.dim_U1, pair3.rank, pair3.rank]
    assert polar_rank(F.elements[-1]) == -1


def test_degenerate_flag_fails(pair3):
    F = Flag(pair3, np.array([1j * np.diag([1.0, 1.0, -2.0]), 1j * np.diag([1.0, -1.0, 0.0])]))
    rep = cartan_test(F)
    assert rep.c_F == oracles.DEGENERATE["c_F"]
    assert rep.codim == oracles.DEGENERATE["codim"]
    assert not rep.regular_flag
    ok, dims = regularity_probe(F.elements[1], samples=20)
    assert not ok
    assert involutivity_report(pair3, F, samples=20).involutive is False


def test_non_integral_elements_rejected(pair3):
    with pytest.raises(NotIntegral):
        IntegralElement(pair3, pair3.basis_U0[:1])
    with pytest.raises(NotIntegral):
        IntegralElement(pair3, pair3.basis_U1[:2])  # two non-commuting vectors
    with pytest.raises(InvalidFlag):
        Flag(pair3, pair3.basis_U1[:2])
    with pytest.raises(InvalidFlag):
        Flag.from_indices(pair3, [0, 5])


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_generic_abelian_line_is_regular(seed):
    """A generic element of U1 spans a regular one-dimensional integral element."""
    pair = sun_son(3)
    rng = np.random.default_rng(seed)
    x = pair.U1.combine(rng.normal(size=pair.dim_U1))
    E = IntegralElement(pair, x[None])
    assert polar_space(E).dim == pair.rank
    ok, _ = regularity_probe(E, samples=5, seed=seed)
    assert ok


def test_characters_sum_to_dim(pair3):
    rep = cartan_characters(Flag.canonical(pair3))
    # the last polar space is A itself
    assert sum(rep.characters) == pair3.dim_U - pair3.rank
