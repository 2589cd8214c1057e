"""Dressing by rational loops: Birkhoff factorization ``f^-1 e^A = E m^-1``.

A :class:`RationalLoop` ``f(lam) = I + sum_k R_k / (lam - p_k)`` carries its
inverse in the same partial-fraction form.  Reality loops are built as
products of simple elements ``h(lam) = I + (conj(al) - al) / (lam - conj(al)) P``
with ``P`` an orthogonal projection; these satisfy the tau-reality
condition for the compact real form, and a pair of them is arranged so that
the sigma-reality condition holds as well.

The negative factor ``m`` is posited with the poles of ``f``.  Requiring
``E = f^-1 e^A m`` to have no principal part at the poles of ``f`` and of
``f^-1`` gives a linear system for the residues of ``m``, solved per grid
node by a singular value decomposition.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .algebra import project
from .errors import (
    ConfigError,
    DepthOverflow,
    FactorizationSingular,
    RealityUnsolvable,
    SpaceViolation,
)
from .grid import GridField

COND_LIMIT = 1e12
MAX_DEPTH = 12


@dataclass(frozen=True, eq=False)
class RationalLoop:
    """``f(lam) = I + sum_k residues[k] / (lam - poles[k])``, equal to I at infinity."""

    n: int
    poles: np.ndarray
    residues: np.ndarray
    inverse: "RationalLoop" = field(default=None, repr=False)

    def __post_init__(self):
        poles = np.atleast_1d(np.asarray(self.poles, dtype=complex))
        res = np.asarray(self.residues, dtype=complex).reshape(-1, self.n, self.n)
        if len(poles) != len(res):
            raise ValueError("one residue per pole required")
        if len(np.unique(np.round(poles, 12))) != len(poles):
            raise ValueError("poles must be distinct")
        object.__setattr__(self, "poles", poles)
        object.__setattr__(self, "residues", res)

    @classmethod
    def identity(cls, n):
        empty = cls(n, np.zeros(0), np.zeros((0, n, n)))
        object.__setattr__(empty, "inverse", empty)
        return empty

    @property
    def K(self):
        return len(self.poles)

    def __call__(self, lam):
        lam = np.asarray(lam, dtype=complex)
        out = np.broadcast_to(np.eye(self.n, dtype=complex), lam.shape + (self.n, self.n)).copy()
        for p, R in zip(self.poles, self.residues):
            out += R / (lam - p)[..., None, None]
        return out

    def inv(self):
        if self.inverse is None:
            raise ValueError("inverse loop not available")
        return self.inverse

    def with_inverse(self, inverse):
        obj = RationalLoop(self.n, self.poles, self.residues, inverse)
        if inverse.inverse is None:
            object.__setattr__(inverse, "inverse", obj)
        return obj

    def __matmul__(self, other):
        """Product of loops with disjoint pole sets (residues stay simple)."""
        prod = _plain_product(self, other)
        if self.inverse is not None and other.inverse is not None:
            prod = prod.with_inverse(_plain_product(other.inverse, self.inverse))
        return prod

    def singular_points(self):
        pts = list(self.poles)
        if self.inverse is not None:
            pts += list(self.inverse.poles)
        return np.array(pts, dtype=complex)

    def sigma_hat(self, pair):
        """The loop ``lam -> sigma(f(-lam))`` in partial-fraction form."""
        inv = pair.sigma
        if inv.conjugates:
            raise RealityUnsolvable("sigma must be complex linear on loops")
        J, Ji = inv.J, inv.J_inv
        if inv.transpose:
            src = self.inv()
            res = [-J @ R.T @ Ji for R in src.residues]
            poles = -src.poles
            ires = [-J @ R.T @ Ji for R in self.residues]
            ipoles = -self.poles
        else:
            res = [-J @ R @ Ji for R in self.residues]
            poles = -self.poles
            ires = [-J @ R @ Ji for R in self.inv().residues]
            ipoles = -self.inv().poles
        out = RationalLoop(self.n, poles, np.array(res).reshape(-1, self.n, self.n))
        return out.with_inverse(RationalLoop(self.n, ipoles, np.array(ires).reshape(-1, self.n, self.n)))

    def reality_residual(self, pair, samples):
        worst = 0.0
        for lam in samples:
            F = self(lam)
            worst = max(worst,
                        float(np.max(np.abs(pair.tau.on_group(self(np.conj(lam))) - F))),
                        float(np.max(np.abs(pair.sigma.on_group(self(-lam)) - F))))
        return worst

    def check_invariants(self, pair, samples=None, tol=1e-9):
        """Invertibility, inverse consistency, mirrored singular set and reality."""
        samples = default_samples() if samples is None else samples
        out = {}
        F = self(samples)
        dets = np.abs(np.linalg.det(F))
        out["min_abs_det"] = float(np.min(dets))
        if self.inverse is not None:
            out["inverse"] = float(np.max(np.abs(F @ self.inverse(samples) - np.eye(self.n))))
        pts = np.round(self.singular_points(), 10)
        s = set(pts)
        out["mirrored"] = all(np.round(np.conj(p), 10) in s and np.round(-p, 10) in s for p in pts)
        out["reality"] = self.reality_residual(pair, samples)
        out["ok"] = bool(out["min_abs_det"] > tol and out.get("inverse", 0.0) <= tol
                         and out["mirrored"] and out["reality"] <= tol)
        return out


def _plain_product(a, b):
    if a.K == 0:
        return RationalLoop(b.n, b.poles, b.residues)
    if b.K == 0:
        return RationalLoop(a.n, a.poles, a.residues)
    if set(np.round(a.poles, 12)) & set(np.round(b.poles, 12)):
        raise ValueError("product of loops with a shared pole is not simple")
    poles = np.concatenate([a.poles, b.poles])
    res = [R @ b(p) for p, R in zip(a.poles, a.residues)]
    res += [a(p) @ R for p, R in zip(b.poles, b.residues)]
    return RationalLoop(a.n, poles, np.array(res))


def default_samples(count=8, radius=2.7, seed=11):
    """Generic sample points for loop identities (fixed for reproducibility)."""
    rng = np.random.default_rng(seed)
    ang = rng.uniform(0, 2 * np.pi, count)
    rad = radius * rng.uniform(0.3, 1.0, count)
    return rad * np.exp(1j * ang)


def _projection(U):
    U = np.asarray(U, dtype=complex)
    if U.ndim == 1:
        U = U[:, None]
    q, r = np.linalg.qr(U)
    keep = np.abs(np.diag(r)) > 1e-12 * max(1.0, np.max(np.abs(r)))
    q = q[:, keep]
    return q @ q.conj().T


def simple_element(alpha, U, n):
    """``h(lam) = I + (conj(al) - al)/(lam - conj(al)) P_U`` and its inverse."""
    alpha = complex(alpha)
    P = _projection(U)
    if abs(alpha.imag) < 1e-12:
        raise RealityUnsolvable("simple elements need a non-real pole")
    h = RationalLoop(n, [np.conj(alpha)], [(np.conj(alpha) - alpha) * P])
    return h.with_inverse(RationalLoop(n, [alpha], [(alpha - np.conj(alpha)) * P]))


def _as_simple(loop):
    """Read ``(alpha, P)`` back from a one-pole loop ``I + (b - conj b)/(lam - b) P``."""
    pole = loop.poles[0]
    alpha = np.conj(pole)
    P = loop.residues[0] / (pole - alpha)
    return alpha, P


def _is_compact_tau(pair):
    tau = pair.tau
    return tau.conjugates and tau.transpose and np.allclose(tau.J, np.eye(pair.n))


def make_reality_loop(pole, direction, pair, mirror=True, samples=None, tol=1e-9):
    """Rational loop satisfying both reality conditions, seeded by one pole.

    The first factor is the simple element with zero at ``pole`` and
    projection onto ``direction`` (a vector or the columns of a matrix).
    With ``mirror`` a second simple element at ``-conj(pole)`` is chosen so
    that the product is fixed by the sigma-twist; the singular set is then
    ``{p, conj p, -p, -conj p}``.  A zero direction returns the identity.
    """
    n = pair.n
    direction = np.asarray(direction, dtype=complex)
    if not np.any(direction):
        return RationalLoop.identity(n)
    if not _is_compact_tau(pair):
        raise RealityUnsolvable("reality loops are implemented for tau(X) = -X^H only")
    pole = complex(pole)
    if abs(pole.imag) < 1e-12:
        raise RealityUnsolvable("pole on the real axis gives a trivial simple element")
    h1 = simple_element(pole, direction, n)
    if mirror:
        h1s = h1.sigma_hat(pair)
        beta, Q = _as_simple(h1s)
        if abs(beta - pole) < 1e-12:
            # imaginary pole: h1 must already be sigma-fixed
            if np.max(np.abs(Q - _projection(direction))) > tol:
                raise RealityUnsolvable("an imaginary pole needs a direction fixed by the sigma-twist "
                                        "(a real direction for sun_son)")
            f = h1
        else:
            W = h1(beta) @ Q
            f = simple_element(beta, W, n) @ h1
    else:
        f = h1
    samples = default_samples() if samples is None else samples
    report = f.check_invariants(pair, samples, tol)
    if not report["ok"]:
        raise RealityUnsolvable(f"reality conditions fail for this seed: {report}")
    return f


def loop_from_config(block, pair):
    """Loop block ``{"poles": [[re, im], ...], "seed": int, "rank": 1}``.

    Each listed pole seeds one mirrored factor; directions are drawn from the
    seeded generator (real ones for imaginary poles).  An empty pole list
    gives ``f = I``.
    """
    if block is None:
        return RationalLoop.identity(pair.n)
    poles = block.get("poles", [])
    rank = block.get("rank", 1)
    if not isinstance(rank, int) or not 1 <= rank < pair.n:
        raise ConfigError(f"rank must be an integer in [1, {pair.n - 1}]", "loop.rank")
    rng = np.random.default_rng(block.get("seed", 0))
    f = RationalLoop.identity(pair.n)
    for i, p in enumerate(poles):
        try:
            pole = complex(p[0], p[1])
        except (TypeError, IndexError):
            raise ConfigError("poles must be [re, im] pairs", f"loop.poles[{i}]") from None
        if "directions" in block:
            d = np.array(block["directions"][i], dtype=float)
            direction = d[..., 0] + 1j * d[..., 1]
        else:
            direction = rng.normal(size=(pair.n, rank)) + 1j * rng.normal(size=(pair.n, rank))
            if abs(pole.real) < 1e-12:
                direction = direction.real + 0j
        try:
            g = make_reality_loop(pole, direction, pair, mirror=block.get("mirror", True))
        except RealityUnsolvable as exc:
            raise ConfigError(str(exc), f"loop.poles[{i}]") from None
        f = g if f.K == 0 else f @ g
    return f


class AbelianExp:
    """Exponentials of complex combinations of commuting elements of ``A``.

    The elements are diagonalized once by a common eigenbasis.
    """

    def __init__(self, elements, seed=5):
        E = np.asarray(elements, dtype=complex)
        n = E.shape[-1]
        w = np.random.default_rng(seed).uniform(0.5, 1.5, len(E))
        _, V = np.linalg.eig(np.tensordot(w, E, axes=(0, 0)))
        Vi = np.linalg.inv(V)
        D = Vi @ E @ V
        off = D - np.einsum("kii->ki", D)[..., None] * np.eye(n)
        if np.max(np.abs(off), initial=0.0) > 1e-10 * max(1.0, np.max(np.abs(E))):
            raise ValueError("elements are not simultaneously diagonalizable")
        self.V, self.Vi = V, Vi
        self.eigs = np.einsum("kii->ki", D)  # (k, n)

    def __call__(self, weights):
        """``exp(sum_k weights[..., k] * elements[k])`` for weights of shape (..., k)."""
        d = np.exp(np.asarray(weights, dtype=complex) @ self.eigs)
        return (self.V * d[..., None, :]) @ self.Vi


@dataclass(frozen=True, eq=False)
class VacuumExponent:
    """``e^A(lam) = exp((sum a_i x_i) lam + sum_f b_f lam**j_f t_f)`` at points ``x``.

    ``x`` has shape ``(..., r)``; ``flows`` is a sequence of ``(b, j, t)``
    with ``b`` in A and odd ``j > 1`` (``j = 1`` is allowed for testing).
    """

    pair: object
    x: np.ndarray
    flows: tuple = ()
    order: tuple = None

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.shape[-1] != self.pair.rank:
            raise ValueError("points must have one coordinate per element of the regular basis")
        object.__setattr__(self, "x", x)
        flows = tuple((np.asarray(b, dtype=complex), int(j), float(t)) for b, j, t in self.flows)
        for b, j, _ in flows:
            if j < 1 or j % 2 == 0:
                raise ValueError(f"flow degree must be odd, got {j}")
            if self.pair.A.distance(b) > 1e-10 * max(1.0, np.max(np.abs(b))):
                raise ValueError("flow generator must lie in A")
        object.__setattr__(self, "flows", flows)
        elements = [a for a in self.pair.basis_A] + [b for b, _, _ in flows]
        object.__setattr__(self, "_exp", AbelianExp(elements))

    def weights(self, lam):
        lam = complex(lam)
        parts = [self.x * lam]
        for _, j, t in self.flows:
            parts.append(np.full(self.x.shape[:-1] + (1,), lam ** j * t))
        return np.concatenate(parts, axis=-1)

    def __call__(self, lam):
        if self.order is not None:
            return self.ordered_product(lam, self.order)
        return self._exp(self.weights(lam))

    def ordered_product(self, lam, order=None):
        """Same value as a product of separate exponentials in the given flow order."""
        base = self._exp(np.concatenate([self.x * complex(lam),
                                         np.zeros(self.x.shape[:-1] + (len(self.flows),))], axis=-1))
        r = self.pair.rank
        order = range(len(self.flows)) if order is None else order
        out = base
        for k in order:
            _, j, t = self.flows[k]
            w = np.zeros(self.x.shape[:-1] + (r + len(self.flows),), dtype=complex)
            w[..., r + k] = complex(lam) ** j * t
            out = out @ self._exp(w)
        return out


def _solve_batch(M, b, method):
    """Least-squares solve of ``M X = B`` over leading batch axes; returns (X, cond).

    ``B`` may hold several right-hand sides as columns.
    """
    U, s, Vh = np.linalg.svd(M, full_matrices=False)
    cond = s[..., 0] / np.maximum(s[..., -1], np.finfo(float).tiny)
    if method == "svd":
        coef = (np.swapaxes(U.conj(), -1, -2) @ b) / s[..., None]
        sol = np.swapaxes(Vh.conj(), -1, -2) @ coef
    elif method == "qr":
        flatM = M.reshape((-1,) + M.shape[-2:])
        flatb = b.reshape((-1,) + b.shape[-2:])
        sol = np.stack([scipy.linalg.lstsq(Mi, bi, lapack_driver="gelsy")[0]
                        for Mi, bi in zip(flatM, flatb)]).reshape(M.shape[:-2] + (M.shape[-1], b.shape[-1]))
    else:
        raise ValueError(f"unknown method {method!r}")
    return sol, cond


def _residue_system(f, X):
    """Assemble the linear conditions for the residues of ``m``.

    Every condition multiplies the unknowns from the left, so the columns of
    the residues decouple: the system is ``M [S_1; ..; S_K] = B`` with
    ``M`` of shape ``(..., (K + L) n, K n)`` and ``n`` right-hand sides.
    Each block row is scaled to unit Frobenius norm.
    """
    n, K = f.n, f.K
    finv = f.inv()
    if set(np.round(f.poles, 12)) & set(np.round(finv.poles, 12)):
        raise FactorizationSingular("poles of f and f^-1 coincide; only simple structure is supported")
    batch = X.x.shape[:-1]
    rows, rhs = [], []
    for k, p in enumerate(f.poles):
        row = np.zeros(batch + (n, K * n), dtype=complex)
        row[..., k * n:(k + 1) * n] = finv(p) @ X(p)
        rows.append(row)
        rhs.append(np.zeros(batch + (n, n), dtype=complex))
    for q, C in zip(finv.poles, finv.residues):
        Mq = C @ X(q)
        row = np.zeros(batch + (n, K * n), dtype=complex)
        for k, p in enumerate(f.poles):
            row[..., k * n:(k + 1) * n] = Mq / (q - p)
        rows.append(row)
        rhs.append(-Mq)
    M, B = [], []
    for row, r in zip(rows, rhs):
        scale = np.linalg.norm(row, axis=(-2, -1))
        scale = np.where(scale > 0, scale, 1.0)[..., None, None]
        M.append(row / scale)
        B.append(r / scale)
    return np.concatenate(M, axis=-2), np.concatenate(B, axis=-2)


@dataclass(eq=False)
class Factorization:
    """Result of factoring ``f^-1 e^A = E m^-1`` at a batch of points.

    ``S`` has shape ``(..., K, n, n)``: the residues of ``m`` at the poles of
    ``f``.  ``E`` and ``m`` are evaluated on demand at any ``lam`` away from
    the singular set.
    """

    loop: RationalLoop
    exponent: VacuumExponent
    S: np.ndarray
    cond: np.ndarray
    holes: np.ndarray

    @property
    def n(self):
        return self.loop.n

    def m(self, lam):
        lam = complex(lam)
        out = np.broadcast_to(np.eye(self.n, dtype=complex), self.S.shape[:-3] + (self.n, self.n)).copy()
        for k, p in enumerate(self.loop.poles):
            out += self.S[..., k, :, :] / (lam - p)
        return out

    def E(self, lam):
        lam = complex(lam)
        return self.loop.inv()(lam) @ self.exponent(lam) @ self.m(lam)

    @property
    def m_minus1(self):
        return self.S.sum(axis=-3)

    def m_series(self, depth):
        """Coefficients ``M_1..M_depth`` of ``m = I + sum M_k lam^-k``."""
        shape = self.S.shape[:-3] + (self.n, self.n)
        out = []
        for k in range(1, depth + 1):
            acc = np.zeros(shape, dtype=complex)
            for idx, p in enumerate(self.loop.poles):
                acc += self.S[..., idx, :, :] * p ** (k - 1)
            out.append(acc)
        return out

    def product_residual(self, samples):
        """``max |f^-1 e^A - E m^-1|`` over sample ``lam`` (per point)."""
        worst = np.zeros(self.S.shape[:-3])
        finv = self.loop.inv()
        for lam in samples:
            lhs = finv(lam) @ self.exponent(lam)
            rhs = self.E(lam) @ np.linalg.inv(self.m(lam))
            scale = np.maximum(1.0, np.max(np.abs(lhs), axis=(-2, -1)))
            worst = np.maximum(worst, np.max(np.abs(lhs - rhs), axis=(-2, -1)) / scale)
        return worst

    def entirety_residual(self, radius=0.25, count=32):
        """Residues of ``E`` at every singular point, by trapezoidal contour integrals."""
        worst = np.zeros(self.S.shape[:-3])
        theta = 2 * np.pi * np.arange(count) / count
        for p in self.loop.singular_points():
            acc = 0.0
            scale = np.ones(self.S.shape[:-3])
            for th in theta:
                lam = p + radius * np.exp(1j * th)
                Ev = self.E(lam)
                acc = acc + Ev * (radius * np.exp(1j * th)) / count
                scale = np.maximum(scale, np.max(np.abs(Ev), axis=(-2, -1)))
            worst = np.maximum(worst, np.max(np.abs(acc), axis=(-2, -1)) / scale)
        return worst

    def reality_residual(self, samples):
        """Reality of both factors ``E`` and ``m`` (per point)."""
        pair = self.exponent.pair
        worst = np.zeros(self.S.shape[:-3])
        for get in (self.E, self.m):
            for lam in samples:
                F = get(lam)
                r1 = np.max(np.abs(pair.tau.on_group(get(np.conj(lam))) - F), axis=(-2, -1))
                r2 = np.max(np.abs(pair.sigma.on_group(get(-lam)) - F), axis=(-2, -1))
                scale = np.maximum(1.0, np.max(np.abs(F), axis=(-2, -1)))
                worst = np.maximum(worst, np.maximum(r1, r2) / scale)
        return worst


def birkhoff_factor(f, X, method="svd", cond_limit=COND_LIMIT, strict=True):
    """Factor ``f^-1 e^A = E m^-1`` at every point of the exponent ``X``.

    ``m`` shares the poles of ``f``.  Points whose residue system has
    condition number above ``cond_limit`` are holes; with ``strict`` the
    first hole raises :class:`FactorizationSingular`.
    """
    batch = X.x.shape[:-1]
    n = f.n
    if f.K == 0:
        S = np.zeros(batch + (0, n, n), dtype=complex)
        return Factorization(f, X, S, np.ones(batch), np.zeros(batch, dtype=bool))
    M, b = _residue_system(f, X)
    sol, cond = _solve_batch(M, b, method)
    holes = ~np.isfinite(cond) | (cond > cond_limit)
    if strict and np.any(holes):
        where = tuple(int(i) for i in np.argwhere(holes)[0])
        raise FactorizationSingular(f"residue system singular at node {where} (cond {cond[where]:.3e})",
                                    cond=float(cond[where]), node=where)
    S = sol.reshape(batch + (f.K, n, n))  # rows k*n..(k+1)*n hold S_k
    S[holes] = np.nan
    return Factorization(f, X, S, cond, holes)


def extract_solution(fact, pair, grid, tol=1e-9, strict=True):
    """``v = (m_{-1})^perp`` as a grid field in ``U1 & A^perp``.

    Raises :class:`SpaceViolation` when ``m_{-1}`` leaves ``U1``.  Without
    ``strict`` the offending nodes are added to the holes of ``fact``
    instead (ill-conditioned nodes lose the reality of their residues).
    """
    m1 = fact.m_minus1
    ok = ~fact.holes
    node_scale = np.maximum(1.0, np.max(np.abs(np.nan_to_num(m1)), axis=(-2, -1)))
    dev = np.maximum(np.max(np.abs(pair.sigma(m1) + m1), axis=(-2, -1)),
                     np.max(np.abs(pair.tau(m1) - m1), axis=(-2, -1))) / node_scale
    bad = ok & ~(dev <= tol)
    if np.any(bad):
        if strict:
            worst = float(np.max(dev[bad]))
            raise SpaceViolation(f"m_-1 leaves U1 by {worst:.3e} (relative) at {int(bad.sum())} nodes")
        fact.holes = fact.holes | bad
        fact.S[bad] = np.nan
        m1 = fact.m_minus1
    v = project(np.nan_to_num(m1), pair.U1_perpA, pair.form_normalization)
    v[fact.holes] = np.nan
    return GridField(grid, v, "U1_perpA")


def q_expand(fact, c, depth, max_depth=MAX_DEPTH):
    """Exact coefficients ``Q_0..Q_depth`` of ``m^-1 c m`` at ``lam = infinity``.

    Uses the partial fractions of ``m`` and a power-series inversion; no
    differentiation is involved.  Returns an array ``(depth + 1, ..., n, n)``.
    """
    if depth < 1:
        raise DepthOverflow("depth must be at least 1")
    if depth > max_depth:
        raise DepthOverflow(f"depth {depth} exceeds the series bound {max_depth}")
    n = fact.n
    c = np.asarray(c, dtype=complex)
    Ms = [np.broadcast_to(np.eye(n, dtype=complex), fact.S.shape[:-3] + (n, n))] + fact.m_series(depth)
    Ns = [Ms[0]]
    for k in range(1, depth + 1):
        acc = np.zeros_like(Ms[0])
        for j in range(1, k + 1):
            acc = acc - Ms[j] @ Ns[k - j]
        Ns.append(acc)
    Q = []
    for k in range(depth + 1):
        acc = np.zeros_like(Ms[0])
        for j in range(k + 1):
            acc = acc + Ns[j] @ c @ Ms[k - j]
        Q.append(acc)
    return np.stack(Q)


@dataclass(eq=False)
class DressedSolution:
    """A dressed solution on a grid: factorization, ``v`` and frame access."""

    pair: object
    grid: object
    loop: RationalLoop
    fact: Factorization
    v: GridField
    flows: tuple = ()

    def frame(self, lam):
        return self.fact.E(lam)

    def Q(self, c, depth):
        return q_expand(self.fact, c, depth)

    def report(self, samples=None):
        samples = default_samples(16) if samples is None else samples
        ok = ~self.fact.holes
        return {
            "max_cond": float(np.max(self.fact.cond[ok], initial=0.0)),
            "holes": [list(map(int, idx)) for idx in np.argwhere(self.fact.holes)],
            "product_residual": float(np.max(self.fact.product_residual(samples)[ok], initial=0.0)),
            "entirety_residual": float(np.max(self.fact.entirety_residual()[ok], initial=0.0)),
            "reality_residual": float(np.max(self.fact.reality_residual(samples[:8])[ok], initial=0.0)),
            "v_norm": float(np.max(np.linalg.norm(self.v.values[ok], axis=(-2, -1)), initial=0.0)),
        }


def dress(loop, pair, grid, flows=(), method="svd", strict=True, order=None):
    """Factor at every grid node and extract ``v``.

    ``flows`` is a sequence of ``(b, j, t)`` added to the vacuum exponent;
    ``order`` applies them as separate exponential factors in that order.
    """
    X = VacuumExponent(pair, grid.points, tuple(flows), order)
    fact = birkhoff_factor(loop, X, method=method, strict=strict)
    v = extract_solution(fact, pair, grid, strict=strict)
    return DressedSolution(pair, grid, loop, fact, v, tuple(flows))


def frame_equation_check(sol, lam_samples, t_step=None, t_solutions=None):
    """Compare finite-difference ``E^-1 E_{x_i}`` with ``a_i lam + [a_i, v]``.

    With ``t_solutions`` (five solutions at ``t - 2dt .. t + 2dt`` for the
    same flow, the middle one being ``sol``) the t-equation
    ``E^-1 E_t = sum_k Q_{b,k} lam^{j-k}`` is checked at the middle slice.
    """
    from .algebra import bracket  # local: keeps module import light

    grid, pair = sol.grid, sol.pair
    a = pair.basis_A
    out = {"x": 0.0}
    for lam in lam_samples:
        E = sol.frame(lam)
        Einv = np.linalg.inv(E)
        for i in range(grid.r):
            res = Einv @ grid.diff(E, i) - (a[i] * lam + bracket(a[i], sol.v.values))
            out["x"] = max(out["x"], float(np.max(np.linalg.norm(res, axis=(-2, -1)))))
    if t_solutions is not None:
        b, j, _ = sol.flows[0]
        weights = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / (12.0 * t_step)
        Q = q_expand(sol.fact, b, j)
        out["t"] = 0.0
        for lam in lam_samples:
            Es = [s.frame(lam) for s in t_solutions]
            Et = sum(w * Ek for w, Ek in zip(weights, Es))
            expected = sum(Q[k] * lam ** (j - k) for k in range(j + 1))
            res = np.linalg.inv(Es[2]) @ Et - expected
            out["t"] = max(out["t"], float(np.max(np.linalg.norm(res, axis=(-2, -1)))))
    return out
