"""Uniform grids, matrix-valued grid fields and fourth-order stencils."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.integrate import simpson

from .errors import GridMismatch, GridTooSmall, WrongValueSpace

# one-sided fourth-order first-derivative weights for the two edge nodes
_EDGE0 = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0
_EDGE1 = np.array([-3.0, -10.0, 18.0, -6.0, 1.0]) / 12.0


def diff(F, axis, h):
    """Fourth-order first derivative of ``F`` along ``axis`` with spacing ``h``.

    Central five-point stencil inside, one-sided five-point stencils on the
    two outermost nodes at each end.
    """
    F = np.moveaxis(np.asarray(F), axis, 0)
    N = F.shape[0]
    if N < 5:
        raise GridTooSmall(f"need at least 5 nodes along axis {axis}, got {N}")
    D = np.empty(F.shape, dtype=np.result_type(F, float))
    D[2:-2] = (F[:-4] - 8.0 * F[1:-3] + 8.0 * F[3:-1] - F[4:]) / 12.0
    D[0] = np.tensordot(_EDGE0, F[:5], axes=(0, 0))
    D[1] = np.tensordot(_EDGE1, F[:5], axes=(0, 0))
    D[-1] = -np.tensordot(_EDGE0, F[::-1][:5], axes=(0, 0))
    D[-2] = -np.tensordot(_EDGE1, F[::-1][:5], axes=(0, 0))
    return np.moveaxis(D / h, 0, axis)


def lagrange_weights(offsets, t):
    """Weights of the Lagrange interpolant through ``offsets`` evaluated at ``t``."""
    offsets = np.asarray(offsets, dtype=float)
    w = np.ones(len(offsets))
    for k, ok in enumerate(offsets):
        for m, om in enumerate(offsets):
            if m != k:
                w[k] *= (t - om) / (ok - om)
    return w


def interpolate_intervals(F, axis, c):
    """Cubic interpolation of ``F`` at fractional positions ``idx + c``.

    Returns an array whose ``axis`` has length ``N - 1``; entry ``idx`` is
    the value between nodes ``idx`` and ``idx + 1``.
    """
    F = np.moveaxis(np.asarray(F), axis, 0)
    N = F.shape[0]
    if N < 4:
        raise GridTooSmall("cubic interpolation needs 4 nodes")
    out = np.empty((N - 1,) + F.shape[1:], dtype=np.result_type(F, float))
    w_mid = lagrange_weights([-1, 0, 1, 2], c)
    out[1:-1] = (w_mid[0] * F[:-3] + w_mid[1] * F[1:-2]
                 + w_mid[2] * F[2:-1] + w_mid[3] * F[3:])
    w_lo = lagrange_weights([0, 1, 2, 3], c)
    out[0] = np.tensordot(w_lo, F[:4], axes=(0, 0))
    w_hi = lagrange_weights([-2, -1, 0, 1], c)
    out[-1] = np.tensordot(w_hi, F[-4:], axes=(0, 0))
    return np.moveaxis(out, 0, axis)


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform tensor grid on a box containing the origin as a node."""

    extents: tuple
    N: tuple

    def __post_init__(self):
        ext = tuple((float(lo), float(hi)) for lo, hi in self.extents)
        N = tuple(int(k) for k in self.N)
        object.__setattr__(self, "extents", ext)
        object.__setattr__(self, "N", N)
        if len(ext) != len(N):
            raise GridMismatch("extents and N differ in length")
        for (lo, hi), k in zip(ext, N):
            if k < 9:
                raise GridTooSmall(f"need at least 9 points per axis, got {k}")
            if k % 2 == 0:
                raise GridMismatch(f"points per axis must be odd, got {k}")
            if not lo < 0.0 < hi:
                raise GridMismatch("the box must contain the origin in its interior")
        for ax in range(len(N)):
            i0 = self.origin_index[ax]
            if abs(self.axes[ax][i0]) > 1e-12 * max(1.0, self.h[ax]):
                raise GridMismatch(f"origin is not a node along axis {ax}")

    @classmethod
    def square(cls, half_width, N, r=2):
        return cls(((-half_width, half_width),) * r, (N,) * r)

    @property
    def r(self):
        return len(self.N)

    @property
    def shape(self):
        return self.N

    @cached_property
    def h(self):
        return tuple((hi - lo) / (k - 1) for (lo, hi), k in zip(self.extents, self.N))

    @cached_property
    def axes(self):
        return tuple(np.linspace(lo, hi, k) for (lo, hi), k in zip(self.extents, self.N))

    @cached_property
    def origin_index(self):
        return tuple(int(round(-lo / h)) for (lo, _), h in zip(self.extents, self.h))

    @cached_property
    def points(self):
        """Node coordinates, shape ``(*N, r)``."""
        return np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1)

    def refine(self):
        """Same box with the spacing halved."""
        return Grid(self.extents, tuple(2 * k - 1 for k in self.N))

    def coarse_view(self, fine_values):
        """Restrict values on ``self.refine()`` to the nodes of ``self``."""
        sl = (slice(None, None, 2),) * self.r
        return np.asarray(fine_values)[sl]

    def interior(self, margin):
        """Boolean node mask at distance at least ``margin`` from every face."""
        mask = np.ones(self.N, dtype=bool)
        for ax, ((lo, hi), x) in enumerate(zip(self.extents, self.axes)):
            keep = (x >= lo + margin - 1e-12) & (x <= hi - margin + 1e-12)
            shape = [1] * self.r
            shape[ax] = -1
            mask &= keep.reshape(shape)
        return mask

    def diff(self, F, axis):
        return diff(F, axis, self.h[axis])

    def same_as(self, other):
        return self.extents == other.extents and self.N == other.N

    def integrate(self, F):
        """Composite Simpson integral of ``F`` over the box (grid axes first)."""
        out = np.asarray(F)
        for ax in range(self.r):
            out = simpson(out, x=self.axes[ax], axis=0)
        return out


SPACES = ("U", "U0", "U1", "U1_perpA", "group", "any")


def space_residual(values, space, pair):
    """Per-node distance of ``values`` from the tagged space."""
    values = np.asarray(values, dtype=complex)
    if space == "any":
        return np.zeros(values.shape[:-2])
    if space == "group":
        return np.abs(np.linalg.det(values) - 1.0)
    sub = {"U": pair.U, "U0": pair.U0, "U1": pair.U1, "U1_perpA": pair.U1_perpA}[space]
    return sub.distance(values)


@dataclass(frozen=True, eq=False)
class GridField:
    """Matrix values at every node of ``grid``; ``values`` has shape ``(*N, n, n)``."""

    grid: Grid
    values: np.ndarray
    space: str = "any"

    def __post_init__(self):
        vals = np.asarray(self.values)
        if vals.shape[: self.grid.r] != self.grid.N:
            raise GridMismatch(f"values of shape {vals.shape} do not fit grid {self.grid.N}")
        if self.space not in SPACES:
            raise ValueError(f"unknown value space {self.space!r}")
        object.__setattr__(self, "values", vals)

    @property
    def n(self):
        return self.values.shape[-1]

    def check_space(self, pair, tol=1e-9):
        res = space_residual(self.values, self.space, pair)
        worst = float(np.max(res, initial=0.0))
        scale = max(1.0, float(np.max(np.abs(self.values), initial=0.0)))
        if worst > tol * scale:
            raise WrongValueSpace(f"field leaves {self.space} by {worst:.3e}")
        return worst

    def norm(self):
        return float(np.max(np.linalg.norm(self.values, axis=(-2, -1)), initial=0.0))


@dataclass(frozen=True, eq=False)
class ConnectionField:
    """Coefficients of ``sum_i A_i dx_i``; ``coeffs`` has shape ``(r, *N, n, n)``."""

    grid: Grid
    coeffs: np.ndarray
    tag: str = "constant"

    def __post_init__(self):
        c = np.asarray(self.coeffs)
        if c.shape[0] != self.grid.r or c.shape[1: 1 + self.grid.r] != self.grid.N:
            raise GridMismatch(f"coefficients of shape {c.shape} do not fit grid {self.grid.N}")
        object.__setattr__(self, "coeffs", c)


@dataclass(frozen=True, eq=False)
class FrameField:
    """Parallel frame ``E(x, lam)`` on a grid with ``E(0, lam) = I``."""

    grid: Grid
    lam: complex
    values: np.ndarray
    diagnostics: dict = None

    def at_origin(self):
        return self.values[self.grid.origin_index]


def max_norm(F):
    """Largest Frobenius norm over all nodes of a matrix field."""
    F = np.asarray(F)
    if F.size == 0:
        return 0.0
    return float(np.max(np.linalg.norm(F, axis=(-2, -1))))


def argmax_node(F):
    """Grid index of the node with the largest Frobenius norm."""
    norms = np.linalg.norm(np.asarray(F), axis=(-2, -1))
    return tuple(int(i) for i in np.unravel_index(np.argmax(norms), norms.shape))
