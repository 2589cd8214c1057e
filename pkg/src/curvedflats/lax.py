"""Lax connections, curvature residuals and parallel frames on grids.

Also builds the geometric objects attached to a solution ``v`` of the
U/U0-system: the curved flat ``psi``, the Cartan lift ``f`` and the flat
abelian immersion ``Y``.  All residual functions accept arbitrary input and
report large residuals instead of failing, so negative tests are possible.
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .algebra import bracket
from .errors import EvaluationFailure, GridTooSmall, SingularFrame, StepRejected, WrongValueSpace
from .grid import ConnectionField, FrameField, GridField, interpolate_intervals

# Gauss nodes and weights of the two-exponential fourth-order commutator-free scheme
_C1 = 0.5 - math.sqrt(3.0) / 6.0
_C2 = 0.5 + math.sqrt(3.0) / 6.0
_W1 = 0.25 + math.sqrt(3.0) / 6.0
_W2 = 0.25 - math.sqrt(3.0) / 6.0


@dataclass
class Residual:
    """Residual fields keyed by label, with the worst node."""

    fields: dict
    max: float
    argmax: tuple = None
    label: str = ""

    @classmethod
    def from_fields(cls, fields, label="", matrix=True):
        """Worst node by Frobenius norm (``matrix``) or absolute value; NaN nodes (holes) are skipped."""
        worst, where = 0.0, None
        for key, F in fields.items():
            F = np.asarray(F)
            if F.size == 0:
                continue
            norms = np.linalg.norm(F, axis=(-2, -1)) if matrix else np.abs(F)
            if np.all(np.isnan(norms)):
                continue
            m = float(np.nanmax(norms))
            if m > worst or where is None:
                worst, where = m, (key, tuple(int(i) for i in np.unravel_index(np.nanargmax(norms), norms.shape)))
        return cls(fields, worst, where, label)


@dataclass
class Construction:
    """A constructed grid field together with its diagnostic residuals."""

    field: GridField
    diagnostics: dict = field(default_factory=dict)


def _nanmax(x):
    """Maximum skipping NaN entries (factorization holes); 0 when nothing is left."""
    x = np.asarray(x, dtype=float)
    return float(np.nanmax(x)) if np.any(~np.isnan(x)) else 0.0


def _pairs(r):
    return list(itertools.combinations(range(r), 2))


def curvature(C):
    """``F_ij = d_i A_j - d_j A_i + [A_i, A_j]`` for every ``i < j``."""
    g = C.grid
    if g.r < 2:
        raise GridTooSmall("curvature needs at least two axes")
    A = C.coeffs
    fields = {}
    for i, j in _pairs(g.r):
        fields[(i, j)] = g.diff(A[j], i) - g.diff(A[i], j) + bracket(A[i], A[j])
    return Residual.from_fields(fields, "curvature")


def uu0_residual(v, pair):
    """Pointwise residual of ``[a_i, v_j] - [a_j, v_i] = [[a_i, v], [a_j, v]]``."""
    g = v.grid
    if pair.rank != g.r:
        raise WrongValueSpace(f"grid has {g.r} axes but the pair has rank {pair.rank}")
    V = v.values
    a = pair.basis_A
    dV = [g.diff(V, k) for k in range(g.r)]
    u = [bracket(a[k], V) for k in range(g.r)]
    fields = {}
    for i, j in _pairs(g.r):
        fields[(i, j)] = bracket(a[i], dV[j]) - bracket(a[j], dV[i]) - bracket(u[i], u[j])
    return Residual.from_fields(fields, "uu0")


def lax_theta(v, lam, pair):
    """Coefficients ``a_i lam + [a_i, v]`` of the Lax connection."""
    a = pair.basis_A
    V = v.values
    coeffs = np.stack([a[i] * lam + bracket(a[i], V) for i in range(v.grid.r)])
    return ConnectionField(v.grid, coeffs, "affine-in-lambda")


def curvedflat_omega(A, lam):
    """``omega_lam = sum lam A_i dx_i`` for a tuple ``A`` of U1-valued fields."""
    return ConnectionField(A.grid, lam * A.coeffs, "linear-in-lambda")


def curved_flat_system_residual(A):
    """Separate ``d_i A_j - d_j A_i`` and ``[A_i, A_j]`` from curvatures at lam = 1, 2."""
    F1 = curvature(curvedflat_omega(A, 1.0)).fields
    F2 = curvature(curvedflat_omega(A, 2.0)).fields
    closed, commute = {}, {}
    for key in F1:
        B = (F2[key] - 2.0 * F1[key]) / 2.0
        commute[key] = B
        closed[key] = F1[key] - B
    return Residual.from_fields(closed, "closedness"), Residual.from_fields(commute, "commutation")


def reality_residual(evaluator, lam_samples, pair, level="group"):
    """Largest violation of ``tau(F(conj lam)) = F(lam)`` and ``sigma(F(-lam)) = F(lam)``."""
    if level == "group":
        tau, sigma = pair.tau.on_group, pair.sigma.on_group
    else:
        tau, sigma = pair.tau, pair.sigma
    worst = 0.0
    for lam in lam_samples:
        try:
            F = np.asarray(evaluator(lam))
            Fc = np.asarray(evaluator(np.conj(lam)))
            Fm = np.asarray(evaluator(-lam))
        except (np.linalg.LinAlgError, ValueError, ZeroDivisionError) as exc:
            raise EvaluationFailure(f"evaluation failed at lambda={lam}: {exc}") from exc
        worst = max(worst,
                    float(np.max(np.abs(tau(Fc) - F))),
                    float(np.max(np.abs(sigma(Fm) - F))))
    return worst


def _propagators(A, axis, h, max_arg, max_substeps):
    """Interval propagators ``P`` with ``E(x_{k+1}) = E(x_k) P_k`` along ``axis``."""
    N = A.shape[axis]
    if N < 4:
        raise GridTooSmall("frame integration needs at least 4 nodes per axis")
    n = A.shape[-1]
    peak = float(np.max(np.linalg.norm(A, axis=(-2, -1)))) * h
    sub = max(1, math.ceil(peak / max_arg)) if max_arg else 1
    if sub > max_substeps:
        raise StepRejected(f"step argument {peak:.3g} needs {sub} substeps (limit {max_substeps})")
    hs = h / sub
    shape = list(A.shape)
    shape[axis] = N - 1
    P = np.broadcast_to(np.eye(n, dtype=complex), shape).copy()
    for m in range(sub):
        A1 = interpolate_intervals(A, axis, (m + _C1) / sub)
        A2 = interpolate_intervals(A, axis, (m + _C2) / sub)
        P = P @ expm(hs * (_W1 * A1 + _W2 * A2)) @ expm(hs * (_W2 * A1 + _W1 * A2))
    return P


def _staircase(props, inv_props, order, grid, n):
    E = np.full(grid.N + (n, n), np.nan, dtype=complex)
    o = grid.origin_index
    E[o] = np.eye(n)
    done = []
    for ax in order:
        def index(k):
            return tuple(k if d == ax else (slice(None) if d in done else o[d])
                         for d in range(grid.r))
        for k in range(o[ax], grid.N[ax] - 1):
            E[index(k + 1)] = E[index(k)] @ props[ax][index(k)]
        for k in range(o[ax], 0, -1):
            E[index(k - 1)] = E[index(k)] @ inv_props[ax][index(k - 1)]
        done.append(ax)
    return E


def integrate_frame(C, lam=None, check_paths=True, max_arg=2.0, max_substeps=64):
    """Solve ``E^{-1} dE = C`` with ``E(0) = I`` along staircase paths.

    Paths run along axis 0 first, then axis 1, and so on; with
    ``check_paths`` the reverse axis order is integrated as well and the
    largest discrepancy is reported as ``path_independence``.
    """
    g = C.grid
    n = C.coeffs.shape[-1]
    props, inv_props = [], []
    for ax in range(g.r):
        P = _propagators(C.coeffs[ax], ax, g.h[ax], max_arg, max_substeps)
        props.append(P)
        inv_props.append(np.linalg.inv(P))
    E = _staircase(props, inv_props, list(range(g.r)), g, n)
    diag = {}
    if check_paths and g.r > 1:
        E2 = _staircase(props, inv_props, list(range(g.r))[::-1], g, n)
        diag["path_independence"] = float(np.max(np.abs(E - E2)))
    Einv = np.linalg.inv(E)
    logd = {ax: Einv @ g.diff(E, ax) - C.coeffs[ax] for ax in range(g.r)}
    diag["log_derivative_residual"] = Residual.from_fields(logd).max
    return FrameField(g, lam, E, diag)


def parallel_frame(v, lam, pair, check_paths=True, warn_tol=None, **opts):
    """Parallel frame of the Lax connection of ``v`` at spectral parameter ``lam``."""
    if warn_tol is not None and v.grid.r > 1:
        res = uu0_residual(v, pair).max
        if res > warn_tol:
            warnings.warn(f"v is not a solution (residual {res:.3e}); frame is path dependent",
                          RuntimeWarning, stacklevel=2)
    return integrate_frame(lax_theta(v, lam, pair), lam, check_paths, **opts)


class IntegratedFrames:
    """Callable ``lam -> E(., lam)`` integrating frames from ``v`` on demand."""

    def __init__(self, v, pair, check_paths=False, **opts):
        self.v = v
        self.pair = pair
        self.check_paths = check_paths
        self.opts = opts
        self._cache = {}

    def __call__(self, lam):
        key = complex(lam)
        if key not in self._cache:
            self._cache[key] = parallel_frame(self.v, key, self.pair, self.check_paths, **self.opts).values
        return self._cache[key]


def gauge(g, C):
    """Gauge transform ``g A_i g^-1 - (d_i g) g^-1``."""
    G = g.values
    try:
        Ginv = np.linalg.inv(G)
    except np.linalg.LinAlgError as exc:
        raise SingularFrame("gauge field is singular at some node") from exc
    coeffs = np.stack([G @ C.coeffs[i] @ Ginv - g.grid.diff(G, i) @ Ginv for i in range(g.grid.r)])
    return ConnectionField(C.grid, coeffs, C.tag)


def _frames_or_default(v, pair, frames):
    return frames if frames is not None else IntegratedFrames(v, pair)


def curved_flat(v, pair, frames=None):
    """``psi = E(., 1) E(., -1)^{-1}`` with its Cartan-embedding residual."""
    frames = _frames_or_default(v, pair, frames)
    Ep, Em = frames(1.0), frames(-1.0)
    psi = Ep @ np.linalg.inv(Em)
    n = psi.shape[-1]
    orbit = pair.sigma.on_group(psi) @ psi - np.eye(n)
    diag = {
        "sigma_orbit": _nanmax(np.abs(orbit)),
        "origin": float(np.max(np.abs(psi[v.grid.origin_index] - np.eye(n)))),
    }
    return Construction(GridField(v.grid, psi, "group"), diag)


def cartan_lift(v, pair, frames=None):
    """``f = E(., 1) E(., 0)^{-1}`` with the residuals of its defining equations.

    Reports the U1-membership and commutation of ``f^-1 df``, and both gauge
    relations ``f^-1 f_i = g a_i g^-1`` and ``g^-1 g_i = [a_i, v]`` with
    ``g = E(., 0)``.
    """
    frames = _frames_or_default(v, pair, frames)
    grid = v.grid
    E1, g = frames(1.0), frames(0.0)
    ginv = np.linalg.inv(g)
    f = E1 @ ginv
    finv = np.linalg.inv(f)
    a = pair.basis_A
    mc = [finv @ grid.diff(f, i) for i in range(grid.r)]
    space = {i: pair.U1.distance(mc[i]) for i in range(grid.r)}
    commute = {(i, j): bracket(mc[i], mc[j]) for i, j in _pairs(grid.r)}
    conj = {i: mc[i] - g @ a[i] @ ginv for i in range(grid.r)}
    g_eq = {i: ginv @ grid.diff(g, i) - bracket(a[i], v.values) for i in range(grid.r)}
    diag = {
        "bi_space": max(_nanmax(s) for s in space.values()),
        "bi_bracket": Residual.from_fields(commute).max if commute else 0.0,
        "bj_f": Residual.from_fields(conj).max,
        "bj_g": Residual.from_fields(g_eq).max,
    }
    return Construction(GridField(grid, f, "group"), diag)


def lambda_derivative_at_zero(frames, delta=1e-2, levels=2):
    """``dE/dlam E^-1`` at ``lam = 0`` by central differences with Richardson extrapolation.

    ``levels`` counts extrapolation stages (step sizes ``delta / 2**k``);
    the truncation error is ``O(delta**(2 * levels + 2))``.
    """
    E0inv = np.linalg.inv(frames(0.0))
    table = []
    for k in range(levels + 1):
        d = delta / 2 ** k
        table.append((frames(d) - frames(-d)) / (2 * d) @ E0inv)
    for lev in range(1, levels + 1):
        factor = 4.0 ** lev
        table = [(factor * table[k + 1] - table[k]) / (factor - 1) for k in range(len(table) - 1)]
    return table[0]


def flat_abelian(v, pair, frames=None, delta=1e-2, levels=2):
    """Flat abelian immersion ``Y = dE/dlam E^-1 |_{lam=0}`` with its checks."""
    frames = _frames_or_default(v, pair, frames)
    grid = v.grid
    Y = lambda_derivative_at_zero(frames, delta, levels)
    dY = [grid.diff(Y, i) for i in range(grid.r)]
    commute = {(i, j): bracket(dY[i], dY[j]) for i, j in _pairs(grid.r)}
    gram = np.array([[pair.inner(dY[i], dY[j]) for j in range(grid.r)] for i in range(grid.r)])
    ref = gram[(slice(None), slice(None)) + grid.origin_index]
    drift = _nanmax(np.abs(gram - ref[(...,) + (None,) * grid.r]))
    diag = {
        "space": _nanmax(pair.U1.distance(Y)),
        "bracket": Residual.from_fields(commute).max if commute else 0.0,
        "gram_drift": drift,
        "gram_origin": ref.tolist(),
    }
    return Construction(GridField(grid, Y, "U1"), diag)
