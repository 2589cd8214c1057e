"""Matrix realizations of symmetric pairs (U, U0).

Algebra elements are plain complex numpy arrays of shape ``(n, n)``; every
function here also accepts stacks of shape ``(..., n, n)`` so grid fields can
be processed without Python loops.  A :class:`SymmetricPair` bundles the two
involutions, bases of the Cartan decomposition ``U = U0 + U1`` and a regular
basis ``a_1..a_r`` of a maximal abelian subspace ``A`` of ``U1``.

Linear algebra on the real vector space ``U`` goes through
:func:`realify`, which flattens a matrix into the real vector
``(Re X, Im X)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import (
    ConfigError,
    DegenerateForm,
    DimensionMismatch,
    NotInRealForm,
    NotInU1,
    UnknownPair,
)

TOL_ALG = 1e-12
TOL_RANK = 1e-9


def _check_same(X, Y):
    X = np.asarray(X)
    Y = np.asarray(Y)
    if X.shape[-2:] != Y.shape[-2:] or X.shape[-1] != X.shape[-2]:
        raise DimensionMismatch(f"shapes {X.shape} and {Y.shape} do not match")
    return X, Y


def bracket(X, Y):
    """Matrix commutator ``XY - YX`` (broadcasts over leading axes)."""
    X, Y = _check_same(X, Y)
    return X @ Y - Y @ X


def inner(X, Y, normalization=1.0):
    """Ad-invariant form ``normalization * Re tr(XY)``."""
    X, Y = _check_same(X, Y)
    return normalization * np.einsum("...ij,...ji->...", X, Y).real


def realify(X):
    """Flatten ``(..., n, n)`` complex matrices to real vectors of length 2n^2."""
    X = np.asarray(X, dtype=complex)
    flat = X.reshape(X.shape[:-2] + (-1,))
    return np.concatenate([flat.real, flat.imag], axis=-1)


def unrealify(v, n):
    v = np.asarray(v, dtype=float)
    half = v.shape[-1] // 2
    return (v[..., :half] + 1j * v[..., half:]).reshape(v.shape[:-1] + (n, n))


def null_space(M, rtol=TOL_RANK):
    """Orthonormal basis (columns) of the null space of ``M``.

    Singular values below ``rtol`` times the largest one count as zero.
    """
    M = np.atleast_2d(M)
    if M.size == 0:
        return np.eye(M.shape[1])
    _, s, vh = np.linalg.svd(M)
    smax = s[0] if s.size else 0.0
    if smax == 0.0:
        return np.eye(M.shape[1])
    rank = int(np.sum(s > rtol * smax))
    return vh[rank:].conj().T


def matrix_rank(M, rtol=TOL_RANK):
    M = np.atleast_2d(M)
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rtol * s[0]))


@dataclass(frozen=True, eq=False)
class InvolutionSpec:
    """An involution of the form ``X -> sign * J op(X) J^-1``.

    ``op`` is entrywise conjugation (``conjugates``) optionally followed by
    transposition (``transpose``).  A Lie algebra automorphism needs
    ``sign == -1`` exactly when ``transpose`` is set, e.g. ``X -> -X^T``.
    """

    J: np.ndarray
    conjugates: bool = False
    sign: int = 1
    transpose: bool = False

    def __post_init__(self):
        J = np.asarray(self.J, dtype=complex)
        object.__setattr__(self, "J", J)
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        if (self.sign == -1) != self.transpose:
            raise ValueError("sign -1 requires transpose (and vice versa) for an automorphism")

    @cached_property
    def J_inv(self):
        return np.linalg.inv(self.J)

    def __call__(self, X):
        """Action on the Lie algebra."""
        Y = np.asarray(X, dtype=complex)
        if self.conjugates:
            Y = Y.conj()
        if self.transpose:
            Y = -np.swapaxes(Y, -1, -2)
        return self.J @ Y @ self.J_inv

    def on_group(self, g):
        """Lift to the group: ``exp(X) -> exp(self(X))``."""
        Y = np.asarray(g, dtype=complex)
        if self.conjugates:
            Y = Y.conj()
        if self.transpose:
            Y = np.linalg.inv(np.swapaxes(Y, -1, -2))
        return self.J @ Y @ self.J_inv


@dataclass(frozen=True, eq=False)
class Subspace:
    """Real span of a stack of matrices ``basis`` with shape ``(k, n, n)``."""

    basis: np.ndarray
    name: str = ""

    def __post_init__(self):
        B = np.asarray(self.basis, dtype=complex)
        if B.ndim == 2:
            B = B[None]
        object.__setattr__(self, "basis", B)

    @property
    def dim(self):
        return self.basis.shape[0]

    @property
    def n(self):
        return self.basis.shape[-1]

    @cached_property
    def _real(self):
        return realify(self.basis).T  # (2n^2, k)

    def is_independent(self, rtol=TOL_RANK):
        return matrix_rank(self._real, rtol) == self.dim

    def coords(self, X):
        """Least-squares real coordinates of ``X`` (broadcasts)."""
        if self.dim == 0:
            return np.zeros(np.shape(X)[:-2] + (0,))
        v = realify(X)
        c, *_ = np.linalg.lstsq(self._real, v.reshape(-1, v.shape[-1]).T, rcond=None)
        return c.T.reshape(v.shape[:-1] + (self.dim,))

    def combine(self, c):
        return np.tensordot(np.asarray(c, dtype=float), self.basis, axes=(-1, 0))

    def distance(self, X):
        """Frobenius distance from ``X`` to the subspace."""
        X = np.asarray(X, dtype=complex)
        if self.dim == 0:
            return np.linalg.norm(X, axis=(-2, -1))
        return np.linalg.norm(X - self.combine(self.coords(X)), axis=(-2, -1))

    def contains(self, other, tol=1e-9):
        if other.dim == 0:
            return True
        scale = max(1.0, float(np.max(np.abs(other.basis))))
        return bool(np.all(self.distance(other.basis) <= tol * scale))


def _orthonormalize(B, rtol=TOL_RANK):
    """Frobenius-orthonormal basis for the real span of ``B``."""
    if len(B) == 0:
        return np.zeros((0,) + np.shape(B)[1:], dtype=complex)
    B = np.asarray(B, dtype=complex)
    n = B.shape[-1]
    q, r = np.linalg.qr(realify(B).T)
    keep = np.abs(np.diag(r)) > rtol * max(1.0, np.max(np.abs(r)))
    return unrealify(q[:, keep].T, n)


@dataclass(frozen=True, eq=False)
class SymmetricPair:
    """A symmetric pair ``(G, tau, sigma)`` with a Cartan decomposition."""

    n: int
    tau: InvolutionSpec
    sigma: InvolutionSpec
    basis_U0: np.ndarray
    basis_U1: np.ndarray
    basis_A: np.ndarray
    basis_U1_perpA: np.ndarray = None
    form_normalization: float = 1.0
    name: str = "custom"
    orthogonalize: bool = field(default=True, repr=False)

    def __post_init__(self):
        setattr_ = object.__setattr__
        U0 = np.asarray(self.basis_U0, dtype=complex).reshape(-1, self.n, self.n)
        U1 = np.asarray(self.basis_U1, dtype=complex).reshape(-1, self.n, self.n)
        if self.orthogonalize:
            U0 = _orthonormalize(U0)
            U1 = _orthonormalize(U1)
        setattr_(self, "basis_U0", U0)
        setattr_(self, "basis_U1", U1)
        setattr_(self, "basis_A", np.asarray(self.basis_A, dtype=complex).reshape(-1, self.n, self.n))
        if self.basis_U1_perpA is None:
            perp = orth_complement(Subspace(self.basis_A), Subspace(U1), self.form_normalization)
            setattr_(self, "basis_U1_perpA", perp.basis)
        else:
            setattr_(self, "basis_U1_perpA",
                     np.asarray(self.basis_U1_perpA, dtype=complex).reshape(-1, self.n, self.n))

    @property
    def rank(self):
        return self.basis_A.shape[0]

    @property
    def dim_U0(self):
        return self.basis_U0.shape[0]

    @property
    def dim_U1(self):
        return self.basis_U1.shape[0]

    @property
    def dim_U(self):
        return self.dim_U0 + self.dim_U1

    @cached_property
    def U0(self):
        return Subspace(self.basis_U0, "U0")

    @cached_property
    def U1(self):
        return Subspace(self.basis_U1, "U1")

    @cached_property
    def U(self):
        return Subspace(np.concatenate([self.basis_U0, self.basis_U1]), "U")

    @cached_property
    def A(self):
        return Subspace(self.basis_A, "A")

    @cached_property
    def U1_perpA(self):
        return Subspace(self.basis_U1_perpA, "U1 & A^perp")

    def inner(self, X, Y):
        return inner(X, Y, self.form_normalization)


def sigma_split(X, pair, tol=1e-10):
    """Split ``X`` in ``U`` into its ``U0`` and ``U1`` components."""
    X = np.asarray(X, dtype=complex)
    scale = max(1.0, float(np.max(np.abs(X)))) if X.size else 1.0
    if np.max(np.abs(pair.tau(X) - X), initial=0.0) > tol * scale:
        raise NotInRealForm("element is not fixed by tau")
    sX = pair.sigma(X)
    return (X + sX) / 2, (X - sX) / 2


def centralizer(a, S, rtol=TOL_RANK):
    """Subspace of ``S`` commuting with ``a``."""
    a = np.asarray(a, dtype=complex)
    if S.dim == 0:
        return Subspace(np.zeros((0, S.n, S.n)), "centralizer")
    images = realify(bracket(a[None], S.basis)).T
    if not np.any(images):
        return Subspace(S.basis.copy(), "centralizer")
    N = null_space(images, rtol)
    return Subspace(S.combine(N.T.real) if N.size else np.zeros((0, S.n, S.n)), "centralizer")


def ad_rank(a, source, rtol=TOL_RANK):
    """Rank of ``ad(a)`` restricted to the subspace ``source``."""
    if source.dim == 0:
        return 0
    return matrix_rank(realify(bracket(np.asarray(a)[None], source.basis)).T, rtol)


def is_regular(a, pair, rtol=TOL_RANK):
    """Regularity test of ``a`` in ``U1``.

    Returns ``(ok, diagnostics)``; ``ok`` requires the centralizer of ``a`` in
    ``U1`` to have dimension ``r`` and ``ad(a): U0 -> U1`` to have rank
    ``dim U1 - r`` (the orbit through ``a`` is open in the transverse
    directions).
    """
    a = np.asarray(a, dtype=complex)
    scale = max(1.0, float(np.max(np.abs(a))))
    if np.max(np.abs(pair.sigma(a) + a)) > 1e-10 * scale:
        raise NotInU1("sigma(a) != -a")
    cdim = centralizer(a, pair.U1, rtol).dim
    rk = ad_rank(a, pair.U0, rtol)
    ok = cdim == pair.rank and rk == pair.dim_U1 - pair.rank
    return ok, {"centralizer_dim": cdim, "ad_rank": rk,
                "expected_centralizer_dim": pair.rank,
                "expected_ad_rank": pair.dim_U1 - pair.rank}


def _gram(S, T, normalization):
    return inner(S.basis[:, None], T.basis[None, :], normalization)


def orth_complement(S, within, normalization=1.0, rtol=TOL_RANK):
    """Inner-orthogonal complement of ``S`` inside ``within``."""
    if within.dim == 0:
        return Subspace(np.zeros((0, within.n, within.n)))
    Gw = _gram(within, within, normalization)
    if matrix_rank(Gw, rtol) < within.dim:
        raise DegenerateForm("form is degenerate on the ambient subspace")
    if S.dim == 0:
        return Subspace(within.basis.copy())
    N = null_space(_gram(S, within, normalization), rtol)
    if N.size == 0:
        return Subspace(np.zeros((0, within.n, within.n)))
    return Subspace(_orthonormalize(within.combine(N.T.real)))


def project(X, S, normalization=1.0, rtol=TOL_RANK):
    """Inner-orthogonal projection of ``X`` (or a stack) onto ``S``."""
    X = np.asarray(X, dtype=complex)
    if S.dim == 0:
        return np.zeros_like(X)
    G = _gram(S, S, normalization)
    if matrix_rank(G, rtol) < S.dim:
        raise DegenerateForm("form is degenerate on the target subspace")
    rhs = inner(S.basis, X[..., None, :, :], normalization)  # (..., k)
    c = np.linalg.solve(G, rhs[..., None])[..., 0]
    return S.combine(c)


def regular_diagonal(n, k):
    """Distinct traceless real diagonal entries ``j**k - mean``, scaled to max 1."""
    d = np.arange(1, n + 1, dtype=float) ** k
    d -= d.mean()
    return d / np.max(np.abs(d))


def sun_son(n):
    """The SU(n)/SO(n) pair: tau X = -conj(X)^T, sigma X = -X^T."""
    if n < 2:
        raise UnknownPair(f"sun_son needs n >= 2, got {n}")
    I = np.eye(n)
    U0, U1 = [], []
    for j in range(n):
        for k in range(j + 1, n):
            E = np.zeros((n, n), dtype=complex)
            E[j, k], E[k, j] = 1, -1
            U0.append(E / np.sqrt(2))
            S = np.zeros((n, n), dtype=complex)
            S[j, k] = S[k, j] = 1j
            U1.append(S / np.sqrt(2))
    for k in range(1, n):
        d = np.zeros(n)
        d[:k] = 1
        d[k] = -k
        U1.append(1j * np.diag(d) / np.linalg.norm(d))
    A = [1j * np.diag(regular_diagonal(n, k)) for k in range(1, n)]
    perp = [b for b in U1 if np.count_nonzero(np.diag(b)) == 0]
    return SymmetricPair(
        n=n,
        tau=InvolutionSpec(I, conjugates=True, sign=-1, transpose=True),
        sigma=InvolutionSpec(I, conjugates=False, sign=-1, transpose=True),
        basis_U0=np.array(U0) if U0 else np.zeros((0, n, n)),
        basis_U1=np.array(U1),
        basis_A=np.array(A),
        basis_U1_perpA=np.array(perp) if perp else np.zeros((0, n, n)),
        name=f"sun_son/{n}",
    )


BUILTIN_PAIRS = {"sun_son": sun_son}


def builtin_pair(name, n):
    try:
        return BUILTIN_PAIRS[name](n)
    except KeyError:
        raise UnknownPair(f"unknown pair {name!r}") from None


def _matrix_from_json(entries, n=None, field=""):
    """Parse a matrix given as nested lists of ``[re, im]`` pairs."""
    try:
        M = np.array(entries, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"cannot parse matrix ({exc})", field) from None
    if M.ndim != 3 or M.shape[-1] != 2 or M.shape[0] != M.shape[1]:
        raise ConfigError("matrix must be an n x n array of [re, im] pairs", field)
    if n is not None and M.shape[0] != n:
        raise ConfigError(f"expected {n}x{n} matrix", field)
    return M[..., 0] + 1j * M[..., 1]


def _involution_from_json(block, n, field):
    J = _matrix_from_json(block["J"], n, field + ".J") if "J" in block else np.eye(n)
    try:
        return InvolutionSpec(J, conjugates=bool(block.get("conjugates", False)),
                              sign=int(block.get("sign", 1)),
                              transpose=bool(block.get("transpose", False)))
    except ValueError as exc:
        raise ConfigError(str(exc), field) from None


def pair_from_config(block):
    """Build a pair from ``{"pair": "sun_son", "n": 3}`` or a custom block.

    A custom block has ``"pair": "custom"``, ``n``, ``tau`` and ``sigma``
    (each ``{"J": ..., "conjugates": bool, "sign": +-1, "transpose": bool}``)
    and ``U0``, ``U1``, ``A`` as lists of matrices of ``[re, im]`` entries.
    """
    if not isinstance(block, dict) or "pair" not in block:
        raise ConfigError("missing 'pair'", "pair")
    name = block["pair"]
    n = block.get("n")
    if not isinstance(n, int) or n < 2:
        raise ConfigError("n must be an integer >= 2", "pair.n")
    if name != "custom":
        try:
            return builtin_pair(name, n)
        except UnknownPair as exc:
            raise ConfigError(str(exc), "pair.pair") from None
    for key in ("tau", "sigma", "U0", "U1", "A"):
        if key not in block:
            raise ConfigError("required for custom pairs", f"pair.{key}")
    tau = _involution_from_json(block["tau"], n, "pair.tau")
    sigma = _involution_from_json(block["sigma"], n, "pair.sigma")
    mats = {key: np.array([_matrix_from_json(m, n, f"pair.{key}[{i}]")
                           for i, m in enumerate(block[key])]).reshape(-1, n, n)
            for key in ("U0", "U1", "A")}
    try:
        return SymmetricPair(n=n, tau=tau, sigma=sigma, basis_U0=mats["U0"],
                             basis_U1=mats["U1"], basis_A=mats["A"],
                             form_normalization=float(block.get("form_normalization", 1.0)),
                             name=str(block.get("name", "custom")))
    except DegenerateForm as exc:
        raise ConfigError(str(exc), "pair") from None


def check_pair(pair, tol=TOL_ALG):
    """Evaluate every structural invariant of ``pair``.

    Returns an ordered dict ``name -> (passed, measured)``.
    """
    out = {}
    n = pair.n
    allb = pair.U.basis
    scale = max(1.0, float(np.max(np.abs(allb))))

    def record(name, value, limit=tol):
        out[name] = (bool(value <= limit * scale), float(value))

    record("traceless", float(np.max(np.abs(np.trace(allb, axis1=1, axis2=2)))))
    for name, inv in (("tau", pair.tau), ("sigma", pair.sigma)):
        record(f"{name}_involutive", float(np.max(np.abs(inv(inv(allb)) - allb))))
    probe = np.concatenate([allb, 1j * allb])
    record("tau_sigma_commute", float(np.max(np.abs(pair.tau(pair.sigma(probe)) - pair.sigma(pair.tau(probe))))))
    record("U_fixed_by_tau", float(np.max(np.abs(pair.tau(allb) - allb))))
    if pair.dim_U0:
        record("U0_fixed_by_sigma", float(np.max(np.abs(pair.sigma(pair.basis_U0) - pair.basis_U0))))
    record("U1_negated_by_sigma", float(np.max(np.abs(pair.sigma(pair.basis_U1) + pair.basis_U1))))
    out["U0_U1_independent"] = (Subspace(allb).is_independent(), float(Subspace(allb).dim))

    def closure(S, T, target):
        if S.dim == 0 or T.dim == 0:
            return 0.0
        br = bracket(S.basis[:, None], T.basis[None, :]).reshape(-1, n, n)
        return float(np.max(target.distance(br)))

    record("bracket_U0_U0_in_U0", closure(pair.U0, pair.U0, pair.U0), 1e-10)
    record("bracket_U0_U1_in_U1", closure(pair.U0, pair.U1, pair.U1), 1e-10)
    record("bracket_U1_U1_in_U0", closure(pair.U1, pair.U1, pair.U0), 1e-10)
    A = pair.basis_A
    record("A_in_U1", float(np.max(pair.U1.distance(A))), 1e-10)
    record("A_abelian", float(np.max(np.abs(bracket(A[:, None], A[None, :])))))
    for i, a in enumerate(A):
        try:
            ok, diag = is_regular(a, pair)
            out[f"a{i + 1}_regular"] = (ok, float(diag["centralizer_dim"]))
        except NotInU1:
            out[f"a{i + 1}_regular"] = (False, float("nan"))
    G = _gram(pair.U, pair.U, pair.form_normalization)
    s = np.linalg.svd(G, compute_uv=False)
    out["form_nondegenerate"] = (bool(s[-1] > TOL_RANK * s[0]), float(s[-1] / s[0]))
    out["U1_split_A_perp"] = (pair.A.dim + pair.U1_perpA.dim == pair.dim_U1,
                              float(pair.A.dim + pair.U1_perpA.dim))
    return out
