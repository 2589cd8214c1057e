"""Integral elements, polar spaces and Cartan's test for the system ``I_sigma``.

By homogeneity everything is computed in the tangent space at the identity,
where integral elements are abelian subspaces of ``U1``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .algebra import (
    Subspace,
    bracket,
    matrix_rank,
    null_space,
    orth_complement,
    realify,
    TOL_ALG,
    TOL_RANK,
)
from .errors import InvalidFlag, NotIntegral, ProbeFailed


@dataclass(frozen=True, eq=False)
class IntegralElement:
    """Span of ``basis`` (shape ``(k, n, n)``): an abelian subspace of ``U1``."""

    pair: object
    basis: np.ndarray

    def __post_init__(self):
        B = np.asarray(self.basis, dtype=complex).reshape(-1, self.pair.n, self.pair.n)
        object.__setattr__(self, "basis", B)
        if len(B) and matrix_rank(realify(B).T) < len(B):
            raise NotIntegral("basis vectors are linearly dependent")
        scale = max(1.0, float(np.max(np.abs(B), initial=0.0)))
        if len(B) and float(np.max(self.pair.U1.distance(B))) > 1e-10 * scale:
            raise NotIntegral("element is not contained in U1")
        if self.bracket_residual() > TOL_ALG * scale ** 2 * 10:
            raise NotIntegral(f"basis does not commute (residual {self.bracket_residual():.3e})")

    @property
    def k(self):
        return len(self.basis)

    def bracket_residual(self):
        B = self.basis
        if len(B) < 2:
            return 0.0
        return float(np.max(np.abs(bracket(B[:, None], B[None, :]))))

    def subspace(self):
        return Subspace(self.basis, f"E{self.k}")


def polar_space(E):
    """``H(E) = {y in U1 : [x, y] = 0 for x in E}``; ``U1`` itself for ``E = 0``."""
    pair = E.pair
    U1 = pair.U1
    if E.k == 0:
        return Subspace(U1.basis.copy(), "H")
    # rows: real coordinates of [x_a, y_b] for each x_a, columns: basis y_b of U1
    blocks = [realify(bracket(x[None], U1.basis)).T for x in E.basis]
    M = np.concatenate(blocks, axis=0)
    N = null_space(M)
    if N.size == 0:
        return Subspace(np.zeros((0, pair.n, pair.n)), "H")
    return Subspace(U1.combine(N.T.real), "H")


def polar_rank(E):
    """``r(E) = dim H(E) - dim E - 1`` (negative at a terminus)."""
    return polar_space(E).dim - E.k - 1


@dataclass(frozen=True, eq=False)
class Flag:
    """Nested integral elements ``E_0 = 0 < E_1 < ... < E_n``; ``E_j`` spans the first ``j`` vectors."""

    pair: object
    vectors: np.ndarray

    def __post_init__(self):
        V = np.asarray(self.vectors, dtype=complex).reshape(-1, self.pair.n, self.pair.n)
        object.__setattr__(self, "vectors", V)
        try:
            object.__setattr__(self, "elements", [IntegralElement(self.pair, V[:j]) for j in range(len(V) + 1)])
        except NotIntegral as exc:
            raise InvalidFlag(f"flag levels are not integral elements: {exc}") from None

    @property
    def length(self):
        return len(self.vectors)

    @classmethod
    def canonical(cls, pair):
        return cls(pair, pair.basis_A)

    @classmethod
    def from_indices(cls, pair, indices):
        """Flag spanned by ``basis_A[i]`` for the listed indices, in order."""
        try:
            return cls(pair, pair.basis_A[list(indices)])
        except IndexError:
            raise InvalidFlag(f"indices {indices} out of range for rank {pair.rank}") from None


@dataclass
class CartanReport:
    """Polar data along a flag and the outcome of Cartan's test."""

    dims_H: list
    polar_ranks: list
    c_levels: list
    characters: list
    c_F: int
    codim: int = None
    regular_flag: bool = None
    probes: list = field(default_factory=list)
    involutive: bool = None
    higher_characters_vanish: bool = None
    monotone: bool = None

    def as_dict(self):
        return {k: v for k, v in self.__dict__.items()}


def cartan_characters(F):
    """Characters ``s_j = dim H(E_{j-1}) - dim H(E_j)`` with ``H(E_{-1}) = U``."""
    pair = F.pair
    Hs = [polar_space(E) for E in F.elements]
    dims = [H.dim for H in Hs]
    prev = [pair.dim_U] + dims[:-1]
    chars = [p - d for p, d in zip(prev, dims)]
    c_levels = [pair.dim_U - d for d in dims]
    monotone = all(Hs[j].contains(Hs[j + 1]) for j in range(len(Hs) - 1))
    return CartanReport(
        dims_H=dims,
        polar_ranks=[d - E.k - 1 for d, E in zip(dims, F.elements)],
        c_levels=c_levels,
        characters=chars,
        c_F=int(sum(c_levels[:-1])),
        monotone=bool(monotone),
    )


def _bracket_constraints(X, U1):
    """Jacobian of ``(y_1..y_k) -> ([y_a, y_b])_{a<b}`` at ``X``, in U1 coordinates."""
    k, d = len(X), U1.dim
    pairs = [(a, b) for a in range(k) for b in range(a + 1, k)]
    rows = []
    for a, b in pairs:
        blocks = np.zeros((2 * X.shape[-1] ** 2, k * d))
        # d/dy_b of [x_a, y_b] and d/dy_a of [y_a, x_b]
        blocks[:, b * d:(b + 1) * d] += realify(bracket(X[a][None], U1.basis)).T
        blocks[:, a * d:(a + 1) * d] += realify(bracket(U1.basis, X[b][None])).T
        rows.append(blocks)
    values = [realify(bracket(X[a], X[b])) for a, b in pairs]
    return np.concatenate(rows, axis=0), np.concatenate(values)


def _newton_project(X, U1, tol=1e-10, max_iter=20):
    """Return ``X`` moved to a commuting tuple by least-norm Newton steps inside ``U1``."""
    X = X.copy()
    if len(X) < 2:
        return X
    for _ in range(max_iter):
        J, val = _bracket_constraints(X, U1)
        if np.max(np.abs(val)) < tol:
            return X
        step = np.linalg.lstsq(J, -val, rcond=None)[0].reshape(len(X), U1.dim)
        X = X + U1.combine(step)
    J, val = _bracket_constraints(X, U1)
    if np.max(np.abs(val)) >= tol:
        raise ProbeFailed(f"bracket constraints not met after {max_iter} Newton steps")
    return X


def regularity_probe(E, samples=50, eps=1e-3, seed=0):
    """Whether ``dim H`` stays constant on nearby integral elements of the same dimension.

    Each sample perturbs the basis randomly inside ``U1`` and restores the
    bracket constraints by Newton steps.  Returns ``(regular, dims)``.
    """
    pair = E.pair
    base = polar_space(E).dim
    if E.k == 0:
        return True, [base]
    rng = np.random.default_rng(seed)
    U1 = pair.U1
    dims = []
    for _ in range(samples):
        noise = U1.combine(rng.normal(size=(E.k, U1.dim)))
        X = _newton_project(E.basis + eps * noise, U1)
        dims.append(polar_space(IntegralElement(pair, X)).dim)
    return all(d == base for d in dims), dims


def _tangent_constraints(E):
    """Linearized conditions on ``phi: E -> E^perp`` at an integral element."""
    pair = E.pair
    W = orth_complement(E.subspace(), pair.U, pair.form_normalization)
    k, d = E.k, W.dim
    X = E.basis
    rows = []
    # phi(x_b) must stay in U1: its U0 part vanishes
    P0 = realify(pair.U0.basis).T
    for b in range(k):
        block = np.zeros((pair.dim_U0, k * d))
        comp = realify(W.basis).T
        block[:, b * d:(b + 1) * d] = np.linalg.lstsq(P0, comp, rcond=None)[0]
        rows.append(block)
    for a in range(k):
        for b in range(a + 1, k):
            block = np.zeros((2 * pair.n ** 2, k * d))
            block[:, b * d:(b + 1) * d] += realify(bracket(X[a][None], W.basis)).T
            block[:, a * d:(a + 1) * d] += realify(bracket(W.basis, X[b][None])).T
            rows.append(block)
    return np.concatenate(rows, axis=0)


def cartan_test(F):
    """Characters plus the codimension of ``v_n`` at the terminus of the flag.

    The codimension is the rank of the linearized integral-element
    conditions on ``Hom(E_n, E_n^perp)``; the flag is regular iff it equals
    ``c(F)``.
    """
    report = cartan_characters(F)
    En = F.elements[-1]
    if En.k == 0:
        raise InvalidFlag("the terminus of the flag must be nonzero")
    report.codim = int(matrix_rank(_tangent_constraints(En), TOL_RANK))
    report.regular_flag = report.codim == report.c_F
    return report


def involutivity_report(pair, flag=None, samples=50, seed=0):
    """Canonical flag through ``A``: characters, probes, Cartan test and verdict."""
    F = Flag.canonical(pair) if flag is None else flag
    report = cartan_test(F)
    probes = []
    for E in F.elements[:-1]:
        ok, dims = regularity_probe(E, samples=samples, seed=seed)
        probes.append({"k": E.k, "regular": bool(ok), "dims": sorted(set(dims))})
    report.probes = probes
    report.higher_characters_vanish = all(s == 0 for s in report.characters[2:])
    report.involutive = bool(report.regular_flag and all(p["regular"] for p in probes))
    return report
