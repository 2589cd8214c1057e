"""Q-recursion, closed one-forms, commuting flows and conserved quantities.

``Q`` sequences are arrays of shape ``(N + 1, *grid, n, n)`` holding
``Q_{c,0} .. Q_{c,N}``.  The exact ones come from
:func:`curvedflats.dressing.q_expand`; :func:`q_generate` rebuilds them from
``v`` alone by running the recursion along the first axis.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_simpson, simpson

from .algebra import bracket, centralizer, project
from .dressing import dress
from .errors import DepthOverflow, GridMismatch, NonRegularBasis, UnsupportedRank
from .grid import diff, interpolate_intervals
from .lax import Residual, _pairs, uu0_residual


def _check_Q(Q, grid):
    Q = np.asarray(Q)
    if Q.shape[1: 1 + grid.r] != grid.N:
        raise GridMismatch(f"Q of shape {Q.shape} does not fit grid {grid.N}")
    return Q


def q_recursion_residual(v, Q, pair):
    """``(Q_n)_{x_i} + [[a_i, v], Q_n] - [Q_{n+1}, a_i]`` for every level and axis.

    Returns a dict ``{n: Residual}`` (keys of each residual are axes) and,
    under the key ``"kernel"``, the part of the left side lying in the
    centralizer of each ``a_i`` (it must vanish for solutions).
    """
    grid = v.grid
    Q = _check_Q(Q, grid)
    a = pair.basis_A
    u = [bracket(a[i], v.values) for i in range(grid.r)]
    out, kern = {}, {}
    ker = [centralizer(a[i], pair.U) for i in range(grid.r)]
    for n in range(len(Q) - 1):
        fields, kfields = {}, {}
        for i in range(grid.r):
            lhs = grid.diff(Q[n], i) + bracket(u[i], Q[n])
            fields[i] = lhs - bracket(Q[n + 1], a[i])
            kfields[i] = project(lhs, ker[i], pair.form_normalization)
        out[n] = Residual.from_fields(fields, f"recursion level {n}")
        kern[n] = Residual.from_fields(kfields, f"kernel level {n}")
    out["kernel"] = kern
    return out


class _AdInverse:
    """Pseudo-inverse of ``ad(a)`` on ``U`` and the projection onto its kernel."""

    def __init__(self, a, pair):
        from .algebra import realify, unrealify

        self.n = pair.n
        self._realify, self._unrealify = realify, unrealify
        B = pair.U.basis
        imgs = realify(bracket(np.asarray(a)[None], B)).T  # (2n^2, dim U)
        coords = realify(B).T
        self.kernel = centralizer(a, pair.U)
        if pair.dim_U - self.kernel.dim != 2 * (pair.dim_U1 - pair.rank):
            raise NonRegularBasis(
                f"ad(a) has kernel of dimension {self.kernel.dim} in U; not regular")
        self._imgs_pinv = np.linalg.pinv(imgs, rcond=1e-10)
        self._coords = coords
        self.norm = pair.form_normalization

    def solve(self, Y):
        """``X`` orthogonal to the kernel with ``[a, X] = Y`` (least squares)."""
        c = self._realify(Y) @ self._imgs_pinv.T
        X = self._unrealify(c @ self._coords.T, self.n)
        return X - project(X, self.kernel, self.norm)

    def kernel_part(self, X):
        return project(X, self.kernel, self.norm)


def q_generate(v, c, N, pair, edge=None):
    """Rebuild ``Q_{c,0} .. Q_{c,N}`` from ``v`` by the recursion along axis 0.

    The component of ``Q_{c,n+1}`` transverse to the centralizer of ``a_1``
    is ``-ad(a_1)^+`` applied to ``(Q_n)_{x_1} + [[a_1, v], Q_n]``.  The
    centralizer component ``K`` obeys ``K' = -P([[a_1, v], Q_{n+1}])`` along
    ``x_1``, integrated by the classical Runge-Kutta scheme from the left
    edge.  ``edge`` supplies ``Q`` on that edge (shape ``(>= N+1, *rest, n, n)``
    or a full Q array on the grid); zero is used otherwise.
    """
    grid = v.grid
    if N < 0:
        raise DepthOverflow("depth must be non-negative")
    a1 = pair.basis_A[0]
    ad = _AdInverse(a1, pair)
    n = pair.n
    c = np.asarray(c, dtype=complex)
    V = v.values
    u1 = bracket(a1, V)
    u1_mid = interpolate_intervals(u1, 0, 0.5)
    if edge is not None:
        edge = np.asarray(edge)
        if edge.ndim == grid.r + 3:
            edge = edge[:, 0]
        if len(edge) < N + 1:
            raise DepthOverflow("edge data shallower than the requested depth")
    Q = [np.broadcast_to(c, grid.N + (n, n)).astype(complex)]
    for k in range(N):
        src = grid.diff(Q[k], 0) + bracket(u1, Q[k])
        perp = -ad.solve(src)
        K0 = ad.kernel_part(edge[k + 1]) if edge is not None else np.zeros(grid.N[1:] + (n, n), dtype=complex)
        K = _integrate_kernel(ad, u1, u1_mid, perp, K0, grid.h[0])
        Q.append(perp + K)
    return np.stack(Q)


def _integrate_kernel(ad, u1, u1_mid, perp, K0, h):
    """RK4 for ``K' = -P([u1, perp + K])`` along axis 0, starting at ``K0``."""
    perp_mid = interpolate_intervals(perp, 0, 0.5)
    N0 = u1.shape[0]
    K = np.empty(u1.shape, dtype=complex)
    K[0] = K0

    def rhs(u, p, k):
        return -ad.kernel_part(bracket(u, p + k))

    for m in range(N0 - 1):
        k1 = rhs(u1[m], perp[m], K[m])
        k2 = rhs(u1_mid[m], perp_mid[m], K[m] + 0.5 * h * k1)
        k3 = rhs(u1_mid[m], perp_mid[m], K[m] + 0.5 * h * k2)
        k4 = rhs(u1[m + 1], perp[m + 1], K[m] + h * k3)
        K[m + 1] = K[m] + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
    return K


def parity_residual(Q, pair):
    """Largest ``|sigma(Q_n) - (-1)**(n+1) Q_n|``: even levels lie in U1, odd in U0."""
    Q = np.asarray(Q)
    return max(float(np.max(np.abs(pair.sigma(Q[k]) - (-1) ** (k + 1) * Q[k]), initial=0.0))
               for k in range(len(Q)))


def densities(Qn, pair):
    """``phi_i = (Q_n, a_i)`` as scalar fields, shape ``(r, *grid)``."""
    return np.stack([pair.inner(Qn, a) for a in pair.basis_A])


def closedness_residual(Q, n, pair, grid):
    """``d_j (Q_n, a_i) - d_i (Q_n, a_j)`` for every ``i < j``."""
    if grid.r < 2:
        raise UnsupportedRank("closedness needs at least two axes")
    Q = _check_Q(Q, grid)
    phi = densities(Q[n], pair)
    fields = {(i, j): grid.diff(phi[i], j) - grid.diff(phi[j], i) for i, j in _pairs(grid.r)}
    return Residual.from_fields(fields, f"closedness level {n}", matrix=False)


@dataclass
class ConservationForm:
    """``psi^{ij}`` built from the closed form ``phi`` and its exterior derivative."""

    c: np.ndarray
    n: int
    phi: np.ndarray
    components: dict
    d_residual: Residual


def eds_conservation_form(Q, n, i, j, pair, grid):
    """``psi^{ij} = phi ^ *(dx_i ^ dx_j)`` for ``r = 2`` or ``r = 3``.

    For ``r = 2`` this is ``phi`` itself (components keyed by axis).  For
    ``r = 3`` it is the two-form ``phi ^ dx_k`` with ``k`` completing
    ``(i, j)`` positively, keyed by ordered axis pairs.
    """
    Q = _check_Q(Q, grid)
    phi = densities(Q[n], pair)
    r = grid.r
    if r == 2:
        comps = {0: phi[0], 1: phi[1]}
        d = {(0, 1): grid.diff(phi[1], 0) - grid.diff(phi[0], 1)}
    elif r == 3:
        if i == j:
            raise ValueError("need two distinct axes")
        k = 3 - i - j
        sign = 1.0 if (i, j, k) in ((0, 1, 2), (1, 2, 0), (2, 0, 1)) else -1.0
        comps = {}
        for p, q in _pairs(3):
            val = np.zeros(grid.N)
            if q == k:
                val = val + sign * phi[p]
            if p == k:
                val = val - sign * phi[q]
            comps[(p, q)] = val
        # d of a two-form in three variables: d0 w12 - d1 w02 + d2 w01
        d = {(0, 1, 2): grid.diff(comps[(1, 2)], 0) - grid.diff(comps[(0, 2)], 1)
             + grid.diff(comps[(0, 1)], 2)}
    else:
        raise UnsupportedRank(f"conservation forms are implemented for r <= 3, got {r}")
    return ConservationForm(None, n, phi, comps, Residual.from_fields(d, "d psi", matrix=False))


@dataclass
class FlowFamily:
    """Dressed solutions at equally spaced times along the flow ``(b, j)``."""

    pair: object
    grid: object
    b: np.ndarray
    j: int
    times: np.ndarray
    solutions: list = field(repr=False)
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def h_t(self):
        return float(self.times[1] - self.times[0])

    def v(self):
        return np.stack([s.v.values for s in self.solutions])

    def Q(self, c, depth):
        """``Q_{c,0..depth}`` at every slice, shape ``(M, depth + 1, *grid, n, n)``."""
        key = (np.asarray(c, dtype=complex).tobytes(), depth)
        if key not in self._cache:
            self._cache[key] = np.stack([s.Q(c, depth) for s in self.solutions])
        return self._cache[key]


def flow_family(loop, pair, grid, b, j, M=9, h_t=0.02, t_center=0.0):
    """Dress ``loop`` at ``M`` times centered on ``t_center`` with spacing ``h_t``."""
    if M < 5:
        raise ValueError("at least five time samples are needed")
    b = np.asarray(b, dtype=complex)
    times = t_center + h_t * (np.arange(M) - (M - 1) / 2)
    sols = [dress(loop, pair, grid, flows=[(b, j, t)]) for t in times]
    return FlowFamily(pair, grid, b, j, times, sols)


def t_derivative(F, h_t):
    """Fourth-order derivative along the leading (time) axis."""
    return diff(F, 0, h_t)


def _window(F, margin, t_margin):
    """Node mask and time-slice range used for a residual maximum."""
    M = len(F.times)
    if 2 * t_margin >= M:
        raise ValueError("time margin leaves no slices")
    return F.grid.interior(margin), range(t_margin, M - t_margin)


def _masked_max(values, mask, matrix):
    vals = np.asarray(values)
    mags = np.linalg.norm(vals, axis=(-2, -1)) if matrix else np.abs(vals)
    return float(np.max(mags[mask], initial=0.0))


def flow_residual(F, pair, j_override=None, margin=0.0, t_margin=0):
    """``[a_i, v_t] - (Q_{b,j})_{x_i} - [[a_i, v], Q_{b,j}]`` at every time and node.

    Also re-checks the x-system for each time slice.  ``j_override`` uses a
    different level of the b-sequence (negative test).  ``margin`` (box
    units) and ``t_margin`` (slices) restrict the maximum to the interior.
    """
    grid = F.grid
    j = F.j if j_override is None else j_override
    mask, slices = _window(F, margin, t_margin)
    V = F.v()
    Vt = t_derivative(V, F.h_t)
    a = pair.basis_A
    Qb = F.Q(F.b, max(j, F.j))
    flow, x_res = 0.0, 0.0
    for m in slices:
        for i in range(grid.r):
            res = (bracket(a[i], Vt[m]) - grid.diff(Qb[m, j], i)
                   - bracket(bracket(a[i], V[m]), Qb[m, j]))
            flow = max(flow, _masked_max(res, mask, True))
        for R in uu0_residual(F.solutions[m].v, pair).fields.values():
            x_res = max(x_res, _masked_max(R, mask, True))
    return {"flow": flow, "x_system": x_res}


def flux(Qc, Qb, n, j, pair):
    """``sum_{l<j} sum_{s=1}^{j-l} (Q_{c,n+l+s-1}, Q_{b,j-l-s})``."""
    total = 0.0
    for l in range(j):
        for s in range(1, j - l + 1):
            total = total + pair.inner(Qc[n + l + s - 1], Qb[j - l - s])
    return total


def flux_identity_residual(F, c, n, i, pair, stepping=True, margin=0.0, t_margin=0):
    """Time derivative of ``(Q_{c,n}, a_i)`` against the ``x_i``-derivative of its flux.

    With ``stepping`` also checks, per slice and for ``k = 1..j``, the
    identity ``([Q_{c,n}, Q_{b,k}], a_i) = sum_{s=1}^{k} (Q_{c,n+s-1}, Q_{b,k-s})_{x_i}``
    and the bracket form ``(Q_{c,n}, a_i)_t = sum_{l<j} ([Q_{c,n+l}, Q_{b,j-l}], a_i)``.
    """
    grid = F.grid
    j = F.j
    mask, slices = _window(F, margin, t_margin)
    c = np.asarray(c, dtype=complex)
    a = pair.basis_A[i]
    Qc = F.Q(c, n + j)
    Qb = F.Q(F.b, j)
    rho = pair.inner(Qc[:, n], a)  # (M, *grid)
    rho_t = t_derivative(rho, F.h_t)
    out = {"flux": 0.0, "density_scale": 0.0}
    step, brk = 0.0, 0.0
    for m in slices:
        div = grid.diff(flux(Qc[m], Qb[m], n, j, pair), i)
        out["flux"] = max(out["flux"], _masked_max(rho_t[m] - div, mask, False))
        out["density_scale"] = max(out["density_scale"], _masked_max(rho_t[m], mask, False))
        if stepping:
            for k in range(1, j + 1):
                lhs = pair.inner(bracket(Qc[m, n], Qb[m, k]), a)
                rhs = sum(pair.inner(Qc[m, n + s - 1], Qb[m, k - s]) for s in range(1, k + 1))
                step = max(step, _masked_max(lhs - grid.diff(rhs, i), mask, False))
            br = sum(pair.inner(bracket(Qc[m, n + l], Qb[m, j - l]), a) for l in range(j))
            brk = max(brk, _masked_max(rho_t[m] - br, mask, False))
    if stepping:
        out["stepping"] = step
        out["bracket_form"] = brk
    return out


def stepping_base_case(Q, Qb1, b, i, pair, grid, n):
    """``([Q_{c,n}, Q_{b,1}], a_i)`` against ``((Q_{c,n})_{x_i}, b)`` on one slice."""
    a = pair.basis_A[i]
    lhs = pair.inner(bracket(Q[n], Qb1), a)
    rhs = pair.inner(grid.diff(Q[n], i), np.asarray(b, dtype=complex))
    return float(np.max(np.abs(lhs - rhs)))


def conserved_quantity(F, c, n, i, pair):
    """Integral of ``(Q_{c,n}, a_i)`` over the box at each time, with its flux budget.

    ``drift`` is the largest change from the first time; ``flux_bound`` is
    the time integral of the absolute net boundary flux through the faces
    normal to ``x_i``; ``budget`` is the mismatch between the change of the
    integral and the integrated boundary flux.  Relative values divide by the
    integral of ``|density|`` at the first time.
    """
    grid = F.grid
    c = np.asarray(c, dtype=complex)
    depth = n + F.j
    Qc = F.Q(c, depth)
    Qb = F.Q(F.b, F.j)
    a = pair.basis_A[i]
    M = len(F.times)
    values = np.array([float(grid.integrate(pair.inner(Qc[m, n], a))) for m in range(M)])
    scale = float(grid.integrate(np.abs(pair.inner(Qc[0, n], a))))
    rest = [ax for ax in range(grid.r) if ax != i]
    net = []
    for m in range(M):
        fl = flux(Qc[m], Qb[m], n, F.j, pair)
        hi = np.take(fl, -1, axis=i)
        lo = np.take(fl, 0, axis=i)
        face = hi - lo
        for ax in reversed(rest):
            face = simpson(face, x=grid.axes[ax], axis=rest.index(ax))
        net.append(float(face))
    net = np.array(net)
    predicted = cumulative_simpson(net, x=F.times, initial=0.0)
    bound = cumulative_simpson(np.abs(net), x=F.times, initial=0.0)
    drift = values - values[0]
    boundary = max(float(np.max(np.abs(np.take(np.stack([pair.inner(Qc[m, n], a) for m in range(M)]),
                                               idx, axis=ax + 1))))
                   for ax in range(grid.r) for idx in (0, -1))
    scale = scale if scale > 0 else 1.0
    return {
        "times": F.times.tolist(),
        "values": values.tolist(),
        "drift": float(np.max(np.abs(drift))),
        "relative_drift": float(np.max(np.abs(drift))) / scale,
        "flux_bound": float(np.max(bound)) / scale,
        "budget": float(np.max(np.abs(drift - predicted))) / scale,
        "boundary_density": boundary,
        "scale": scale,
    }


def commuting_flows(loop, pair, grid, flow1, flow2):
    """Largest difference of ``v`` between the two orders of two flow exponentials."""
    s12 = dress(loop, pair, grid, flows=[flow1, flow2], order=(0, 1))
    s21 = dress(loop, pair, grid, flows=[flow1, flow2], order=(1, 0))
    return float(np.max(np.abs(s12.v.values - s21.v.values)))
