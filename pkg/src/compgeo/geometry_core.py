"""Chart-defined manifolds and curvature extraction.

Metrics are numpy-vectorised callables: an array of points with shape
(..., n) maps to metric matrices with shape (..., n, n). All curvature comes
from central differences of the metric, Richardson-extrapolated, so that any
user chart is handled the same way as the builtins.

Curvature convention: Rm(X, Y, Z, W) = <R(X, Y)Z, W> with
R(X, Y) = [nabla_X, nabla_Y] - nabla_[X, Y], so that the sectional curvature
is K(w, v) = Rm(w, v, v, w) / |w ^ v|^2 and the round sphere is positive.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .scalar_models import CurvatureProfile, ScalarBasis, first_zero, solve_basis

__all__ = [
    "ManifoldChart",
    "KahlerStructure",
    "CurvatureAtPoint",
    "Embedding",
    "KahlerSplitModel",
    "GeometryError",
    "NearBoundaryError",
    "MetricNotSPDError",
    "DegeneratePlaneError",
    "NotJInvariantError",
    "FrameDegenerateError",
    "metric_derivatives",
    "christoffel",
    "christoffel_batch",
    "riemann",
    "riemann_batch",
    "sectional",
    "k_sectional",
    "hat_curvatures",
    "kahler_curvatures",
    "model_tensors",
    "b_tensor",
    "c_tensor",
    "g_orthonormalize",
    "euclidean",
    "sphere",
    "hyperbolic",
    "warped_product",
    "product",
    "fubini_study",
    "complex_hyperbolic",
    "ellipsoid",
    "kahler_split_model",
    "builtin",
    "from_spec",
    "list_builtins",
    "make_embedding",
    "check_parallel_J",
]

DEFAULT_FD_STEP = 2e-3


class GeometryError(ValueError):
    pass


class NearBoundaryError(GeometryError):
    pass


class MetricNotSPDError(GeometryError):
    pass


class DegeneratePlaneError(GeometryError):
    pass


class NotJInvariantError(GeometryError):
    pass


class FrameDegenerateError(GeometryError):
    pass


# ---------------------------------------------------------------------------
# data types


@dataclass(frozen=True)
class KahlerStructure:
    J: Callable[[np.ndarray], np.ndarray]

    def at(self, x) -> np.ndarray:
        return np.asarray(self.J(np.asarray(x, dtype=float)), dtype=float)

    def check(self, M: "ManifoldChart", points: np.ndarray, seed: int = 0) -> dict:
        """Residuals of J^2 = -1 and of J-invariance of the metric."""
        rng = np.random.default_rng(seed)
        sq, inv = 0.0, 0.0
        for x in np.atleast_2d(points):
            J = self.at(x)
            g = M.metric_at(x)
            n = M.dim
            sq = max(sq, float(np.max(np.abs(J @ J + np.eye(n)))))
            X, Y = rng.standard_normal(n), rng.standard_normal(n)
            a = (J @ X) @ g @ (J @ Y)
            b = X @ g @ Y
            inv = max(inv, abs(a - b) / max(1.0, abs(b)))
        return {"J2_plus_id": sq, "metric_invariance": inv}


@dataclass(frozen=True)
class ManifoldChart:
    dim: int
    metric: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    domain: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    label: str = "chart"
    spec: dict = field(default_factory=dict, compare=False)
    kahler: KahlerStructure | None = field(default=None, repr=False)
    christoffel_analytic: Callable | None = field(default=None, repr=False)
    fd_step: float = DEFAULT_FD_STEP
    inj_radius: float = math.inf
    basepoint: tuple = ()
    # optional positive factor on the finite-difference step, per point
    fd_scale: Callable[[np.ndarray], np.ndarray] | None = field(default=None, repr=False)

    @property
    def origin(self) -> np.ndarray:
        return np.asarray(self.basepoint if self.basepoint else np.zeros(self.dim), dtype=float)

    @property
    def is_kahler(self) -> bool:
        return self.kahler is not None

    def metric_at(self, x) -> np.ndarray:
        return np.asarray(self.metric(np.asarray(x, dtype=float)), dtype=float)

    def inside(self, x) -> np.ndarray:
        return np.asarray(self.domain(np.asarray(x, dtype=float)), dtype=bool)

    def J(self, x) -> np.ndarray:
        if self.kahler is None:
            raise GeometryError(f"{self.label} carries no Kahler structure")
        return self.kahler.at(x)

    def check_spd(self, points) -> float:
        """Smallest metric eigenvalue over the sample (raises if not positive)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        ev = np.linalg.eigvalsh(self.metric_at(pts))
        lo = float(np.min(ev))
        if not lo > 0:
            raise MetricNotSPDError(f"{self.label}: metric not positive definite (min eigenvalue {lo:.3g})")
        return lo

    def with_step(self, h: float) -> "ManifoldChart":
        return ManifoldChart(self.dim, self.metric, self.domain, self.label, self.spec, self.kahler,
                             self.christoffel_analytic, h, self.inj_radius, self.basepoint, self.fd_scale)


@dataclass(frozen=True)
class CurvatureAtPoint:
    point: np.ndarray
    g: np.ndarray
    Rm: np.ndarray
    ric: np.ndarray
    scalar: float
    fd_error: float = 0.0

    @property
    def dim(self) -> int:
        return self.g.shape[0]

    def rm(self, X, Y, Z, W) -> float:
        return float(np.einsum("ijkl,i,j,k,l->", self.Rm, X, Y, Z, W))

    def inner(self, X, Y) -> float:
        return float(X @ self.g @ Y)

    def ricci(self, v) -> float:
        return float(v @ self.ric @ v)

    def sectional(self, w, v) -> float:
        den = self.inner(w, w) * self.inner(v, v) - self.inner(w, v) ** 2
        if den < 1e-24:
            raise DegeneratePlaneError("|w ^ v| below 1e-12")
        return self.rm(w, v, v, w) / den


# ---------------------------------------------------------------------------
# finite differences


def _stencil(n: int):
    """Offsets for first and second derivatives: centre, +-e_a, +-e_a+-e_b."""
    offs = [np.zeros(n)]
    for a in range(n):
        for sgn in (1.0, -1.0):
            e = np.zeros(n)
            e[a] = sgn
            offs.append(e)
    for a in range(n):
        for b in range(a + 1, n):
            for sa in (1.0, -1.0):
                for sb in (1.0, -1.0):
                    e = np.zeros(n)
                    e[a], e[b] = sa, sb
                    offs.append(e)
    return np.array(offs)


_STENCILS: dict[int, np.ndarray] = {}


def _get_stencil(n: int) -> np.ndarray:
    if n not in _STENCILS:
        _STENCILS[n] = _stencil(n)
    return _STENCILS[n]


def _raw_derivs(vals: np.ndarray, n: int, h: float, second: bool):
    """vals: (P, S, n, n) metric values on the stencil."""
    g0 = vals[:, 0]
    dg = np.empty((vals.shape[0], n, n, n))
    for a in range(n):
        dg[:, a] = (vals[:, 1 + 2 * a] - vals[:, 2 + 2 * a]) / (2 * h)
    if not second:
        return g0, dg, None
    ddg = np.empty((vals.shape[0], n, n, n, n))
    for a in range(n):
        ddg[:, a, a] = (vals[:, 1 + 2 * a] - 2 * g0 + vals[:, 2 + 2 * a]) / (h * h)
    idx = 1 + 2 * n
    for a in range(n):
        for b in range(a + 1, n):
            pp, pm, mp, mm = vals[:, idx], vals[:, idx + 1], vals[:, idx + 2], vals[:, idx + 3]
            d = (pp - pm - mp + mm) / (4 * h * h)
            ddg[:, a, b] = d
            ddg[:, b, a] = d
            idx += 4
    return g0, dg, ddg


def metric_derivatives(M: ManifoldChart, X, h: float | None = None, second: bool = True):
    """g, dg[a,i,j] = d_a g_ij and ddg[a,b,i,j] at points X (P, n).

    Returns Richardson-extrapolated derivatives and the size of the
    extrapolation correction (step-halving error estimate).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = M.dim
    h = M.fd_step if h is None else h
    if M.fd_scale is not None:
        h = h * np.asarray(M.fd_scale(X), dtype=float).reshape(-1, 1, 1)
    st = _get_stencil(n) if second else _get_stencil(n)[: 1 + 2 * n]
    pts = np.concatenate([X[:, None, :] + h * st[None], X[:, None, :] + 0.5 * h * st[None]], axis=1)
    flat = pts.reshape(-1, n)
    inside = M.inside(flat)
    if not np.all(inside):
        bad = flat[np.flatnonzero(~inside)[0]]
        raise NearBoundaryError(f"{M.label}: finite-difference stencil leaves the chart domain near {bad.tolist()}")
    vals = M.metric_at(flat).reshape(X.shape[0], 2 * st.shape[0], n, n)
    S = st.shape[0]
    g0, dg1, ddg1 = _raw_derivs(vals[:, :S], n, h, second)
    _, dg2, ddg2 = _raw_derivs(vals[:, S:], n, 0.5 * h, second)
    dg = (4.0 * dg2 - dg1) / 3.0
    err = float(np.max(np.abs(dg2 - dg1))) / 3.0
    ddg = None
    if second:
        ddg = (4.0 * ddg2 - ddg1) / 3.0
        err = max(err, float(np.max(np.abs(ddg2 - ddg1))) / 3.0)
    chol_ok = np.all(np.linalg.eigvalsh(g0) > 0)
    if not chol_ok:
        raise MetricNotSPDError(f"{M.label}: metric not positive definite")
    return g0, dg, ddg, err


def _christoffel_from(g, dg):
    gi = np.linalg.inv(g)
    low = 0.5 * (np.einsum("pjmk->pmjk", dg) + np.einsum("pkmj->pmjk", dg) - dg)
    return gi, low, np.einsum("plm,pmjk->pljk", gi, low)


def christoffel_batch(M: ManifoldChart, X, h: float | None = None) -> np.ndarray:
    """Gamma[p, l, j, k] at points X."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if M.christoffel_analytic is not None and h is None:
        return np.asarray(M.christoffel_analytic(X), dtype=float).reshape(X.shape[0], M.dim, M.dim, M.dim)
    g, dg, _, _ = metric_derivatives(M, X, h, second=False)
    return _christoffel_from(g, dg)[2]


def christoffel(M: ManifoldChart, x, h: float | None = None, analytic: bool = False) -> np.ndarray:
    """Christoffel symbols Gamma[l, j, k] (upper index first)."""
    x = np.asarray(x, dtype=float)
    if analytic and M.christoffel_analytic is not None:
        return np.asarray(M.christoffel_analytic(x[None]), dtype=float)[0]
    g, dg, _, _ = metric_derivatives(M, x[None], h, second=False)
    return _christoffel_from(g, dg)[2][0]


def _riemann_from(g, dg, ddg):
    gi, low, gam = _christoffel_from(g, dg)
    # d_i of the lowered symbols and of the inverse metric
    dlow = 0.5 * (np.einsum("pijmk->pimjk", ddg) + np.einsum("pikmj->pimjk", ddg) - ddg)
    dgi = -np.einsum("pla,piab,pbm->pilm", gi, dg, gi)
    dgam = np.einsum("pilm,pmjk->piljk", dgi, low) + np.einsum("plm,pimjk->piljk", gi, dlow)
    # R^m_{ijk}
    Rup = (
        np.einsum("pimjk->pmijk", dgam)
        - np.einsum("pjmik->pmijk", dgam)
        + np.einsum("pmiq,pqjk->pmijk", gam, gam)
        - np.einsum("pmjq,pqik->pmijk", gam, gam)
    )
    Rm = np.einsum("plm,pmijk->pijkl", g, Rup)
    ric = np.einsum("pil,pijkl->pjk", gi, Rm)
    ric = 0.5 * (ric + np.swapaxes(ric, 1, 2))
    scal = np.einsum("pjk,pjk->p", gi, ric)
    return Rm, ric, scal, gam


def riemann_batch(M: ManifoldChart, X, h: float | None = None):
    """Rm (P,n,n,n,n), Ricci (P,n,n), scalar (P,), Gamma (P,n,n,n), g (P,n,n), fd error."""
    g, dg, ddg, err = metric_derivatives(M, X, h, second=True)
    Rm, ric, scal, gam = _riemann_from(g, dg, ddg)
    return Rm, ric, scal, gam, g, err


def riemann(M: ManifoldChart, x, h: float | None = None, error_estimate: bool = True) -> CurvatureAtPoint:
    x = np.asarray(x, dtype=float)
    Rm, ric, scal, _, g, err = riemann_batch(M, x[None], h)
    fd_err = 0.0
    if error_estimate:
        hh = (M.fd_step if h is None else h) * 2.0
        try:
            Rm2, _, _, _, _, _ = riemann_batch(M, x[None], hh)
            fd_err = float(np.max(np.abs(Rm2[0] - Rm[0])))
        except NearBoundaryError:
            fd_err = err
    return CurvatureAtPoint(point=x, g=g[0], Rm=Rm[0], ric=ric[0], scalar=float(scal[0]), fd_error=fd_err)


# ---------------------------------------------------------------------------
# frames and curvature notions


def g_orthonormalize(g: np.ndarray, vectors: np.ndarray, against: np.ndarray | None = None,
                     tol: float = 1e-12) -> np.ndarray:
    """Gram-Schmidt (columns) in the inner product g, after removing ``against``."""
    V = np.array(vectors, dtype=float, ndmin=2)
    if V.shape[0] != g.shape[0]:
        V = V.T
    basis: list[np.ndarray] = []
    pre: list[np.ndarray] = []
    if against is not None:
        A = np.array(against, dtype=float, ndmin=2)
        if A.shape[0] != g.shape[0]:
            A = A.T
        for a in A.T:
            for b in pre:
                a = a - (a @ g @ b) * b
            na = math.sqrt(max(a @ g @ a, 0.0))
            if na > tol:
                pre.append(a / na)
    for v in V.T:
        w = v.copy()
        for _ in range(2):
            for b in pre + basis:
                w = w - (w @ g @ b) * b
        nw = math.sqrt(max(w @ g @ w, 0.0))
        if nw <= tol * max(1.0, math.sqrt(abs(v @ g @ v))):
            raise FrameDegenerateError("vectors are linearly dependent")
        basis.append(w / nw)
    return np.array(basis).T if basis else np.zeros((g.shape[0], 0))


def _adjustment(g, W, E):
    """How far the orthonormalised span moved from the supplied span."""
    if W.shape[1] == 0:
        return 0.0
    P = E @ E.T @ g  # g-orthogonal projector onto span(E)
    Wn = W / np.sqrt(np.einsum("ia,ij,ja->a", W, g, W))
    R = Wn - P @ Wn
    return float(np.max(np.sqrt(np.abs(np.einsum("ia,ij,ja->a", R, g, R)))))


def _as_columns(W, n):
    if W is None:
        return np.zeros((n, 0))
    W = np.array(W, dtype=float, ndmin=2)
    if W.size == 0:
        return np.zeros((n, 0))
    return W if W.shape[0] == n else W.T


def _curv(M, x, curv):
    return curv if curv is not None else riemann(M, x, error_estimate=False)


def sectional(M: ManifoldChart, x, w, v, curv: CurvatureAtPoint | None = None) -> float:
    return _curv(M, x, curv).sectional(np.asarray(w, float), np.asarray(v, float))


def k_sectional(M: ManifoldChart, x, W, v, curv: CurvatureAtPoint | None = None) -> float:
    """K^l(W, v) = sum_i <R(e_i, v)v, e_i> over a g-orthonormal basis of W.

    W is orthogonalised against v internally; the value scales with |v|^2
    (for unit v it is the sum of sectional curvatures).
    """
    C = _curv(M, x, curv)
    v = np.asarray(v, dtype=float)
    W = _as_columns(W, C.dim)
    if W.shape[1] == 0:
        return 0.0
    E = g_orthonormalize(C.g, W, against=v[:, None])
    adj = _adjustment(C.g, W, E)
    if adj > 1e-8:
        warnings.warn(f"subspace W adjusted by {adj:.2e} to be orthogonal to v", stacklevel=2)
    return float(sum(C.rm(e, v, v, e) for e in E.T))


def _kval(k, t):
    if isinstance(k, ScalarBasis):
        return float(k.k(t))
    if isinstance(k, CurvatureProfile):
        return float(k(t))
    if callable(k):
        return float(k(t))
    return float(k)


def hat_curvatures(M: ManifoldChart, x, k, t: float | None, v, W=None,
                   curv: CurvatureAtPoint | None = None) -> dict:
    """Ric_hat_k(v) and, if W is given, K^l_hat_k(W, v), using k(t)."""
    C = _curv(M, x, curv)
    if not isinstance(k, (int, float)) and t is None:
        raise ValueError("t is required when k is a profile")
    kv = _kval(k, 0.0 if t is None else t)
    v = np.asarray(v, dtype=float)
    vv = C.inner(v, v)
    n = C.dim
    out = {"ric_hat": C.ricci(v) - (n - 1) * kv * vv, "k": kv}
    if W is not None:
        Wc = _as_columns(W, n)
        out["k_hat"] = k_sectional(M, x, Wc, v, curv=C) - Wc.shape[1] * kv * vv
        out["ell"] = Wc.shape[1]
    return out


def _j_invariant_basis(g, J, W):
    E = g_orthonormalize(g, W)
    JE = J @ E
    P = E @ E.T @ g
    res = JE - P @ JE
    err = float(np.max(np.sqrt(np.abs(np.einsum("ia,ij,ja->a", res, g, res))))) if E.shape[1] else 0.0
    if err > 1e-8:
        raise NotJInvariantError(f"W is not J-invariant (residual {err:.2e})")
    if E.shape[1] % 2:
        raise NotJInvariantError("J-invariant subspace must have even real dimension")
    return E


def kahler_curvatures(M: ManifoldChart, x, v, W=None, pi1=None, pi2=None,
                      curv: CurvatureAtPoint | None = None) -> dict:
    """H(v), Ric^perp(v), H^l(W, v) and bisectional B(pi1, pi2).

    pi1 and pi2 are vectors spanning the J-invariant planes span(u, Ju).
    """
    C = _curv(M, x, curv)
    J = M.J(x)
    v = np.asarray(v, dtype=float)
    Jv = J @ v
    vv = C.inner(v, v)
    hol = C.rm(v, Jv, Jv, v)
    out = {"H": hol / vv, "ric_perp": C.ricci(v) - hol / vv}
    if W is not None:
        E = _j_invariant_basis(C.g, J, _as_columns(W, C.dim))
        out["H_ell"] = float(sum(C.rm(e, v, v, e) for e in E.T))
        out["ell"] = E.shape[1] // 2
    if pi1 is not None and pi2 is not None:
        u1 = np.asarray(pi1, float)
        u2 = np.asarray(pi2, float)
        u1 = u1 / math.sqrt(C.inner(u1, u1))
        u2 = u2 / math.sqrt(C.inner(u2, u2))
        out["bisectional"] = C.rm(u1, J @ u1, J @ u2, u2)
    return out


def b_tensor(g: np.ndarray) -> np.ndarray:
    """B(X,Y,Z,W) = <X,W><Y,Z> - <X,Z><Y,W> as a 4-array."""
    return np.einsum("il,jk->ijkl", g, g) - np.einsum("ik,jl->ijkl", g, g)


def c_tensor(g: np.ndarray, J: np.ndarray) -> np.ndarray:
    """The complex space form tensor C as a 4-array (index order X, Y, Z, W)."""
    gJ = g @ J  # gJ[a, b] = <e_a, J e_b>
    return 0.5 * (
        np.einsum("il,jk->ijkl", g, g)
        - np.einsum("ik,jl->ijkl", g, g)
        + np.einsum("il,jk->ijkl", gJ, gJ)
        - np.einsum("ik,jl->ijkl", gJ, gJ)
        + 2.0 * np.einsum("ij,lk->ijkl", gJ, gJ)
    )


def model_tensors(M: ManifoldChart, x, k: float, X, Y, Z, W, curv: CurvatureAtPoint | None = None) -> dict:
    C = _curv(M, x, curv)
    vecs = [np.asarray(a, dtype=float) for a in (X, Y, Z, W)]
    B = b_tensor(C.g)
    rm = C.rm(*vecs)
    b = float(np.einsum("ijkl,i,j,k,l->", B, *vecs))
    out = {"B": b, "R_hat_riemannian": rm - k * b, "Rm": rm}
    if M.is_kahler:
        Ct = c_tensor(C.g, M.J(x))
        cval = float(np.einsum("ijkl,i,j,k,l->", Ct, *vecs))
        out["C"] = cval
        # k multiplies C directly; C(v,Jv,Jv,v) = 2|v|^4, so Fubini-Study (H = 4) vanishes at k = 2
        out["R_hat_kahler"] = rm - k * cval
    return out


def check_parallel_J(M: ManifoldChart, x, h: float | None = None) -> float:
    """max |nabla J| at x by finite differences of the chart matrix J."""
    x = np.asarray(x, dtype=float)
    n = M.dim
    h = M.fd_step if h is None else h
    gam = christoffel(M, x)
    out = 0.0
    for a in range(n):
        e = np.zeros(n)
        e[a] = h
        dJ = (M.J(x + e) - M.J(x - e)) / (2 * h)
        J = M.J(x)
        # (nabla_a J)^i_j = d_a J^i_j + Gamma^i_{a m} J^m_j - J^i_m Gamma^m_{a j}
        cov = dJ + gam[:, a, :] @ J - J @ gam[:, a, :]
        out = max(out, float(np.max(np.abs(cov))))
    return out


# ---------------------------------------------------------------------------
# builtin charts


def _ball(radius: float):
    r2 = radius * radius

    def dom(x):
        x = np.asarray(x, dtype=float)
        return np.sum(x * x, axis=-1) < r2

    return dom


def _everywhere(x):
    x = np.asarray(x, dtype=float)
    return np.ones(x.shape[:-1], dtype=bool)


def _conformal_scale(c: float):
    # length over which a factor (1 + c|x|^2)^-2 changes by O(1), capped at 1 near the origin
    rc = math.sqrt(abs(c))

    def scale(X):
        q = np.sum(np.atleast_2d(X) ** 2, axis=-1)
        if c > 0:
            return (1.0 + c * q) / (1.0 + rc * np.sqrt(q))
        return np.clip(1.0 + c * q, 1e-12, None)

    return scale


def _eye_like(x, n):
    return np.broadcast_to(np.eye(n), x.shape[:-1] + (n, n)).copy()


def euclidean(n: int) -> ManifoldChart:
    if n < 1:
        raise GeometryError("dimension must be >= 1")

    def christ(X):
        return np.zeros((np.atleast_2d(X).shape[0], n, n, n))

    return ManifoldChart(n, lambda x: _eye_like(np.asarray(x, float), n), _everywhere, label=f"R^{n}",
                         spec={"type": "euclidean", "dim": n}, christoffel_analytic=christ)


def sphere(n: int, curvature: float = 1.0, chart: str = "stereo") -> ManifoldChart:
    """Round sphere of constant curvature > 0.

    ``stereo``: conformal chart 4|dx|^2/(1 + K|x|^2)^2 centred at a pole.
    ``polar`` (n = 2 only): (theta, phi) with metric diag(R^2, R^2 sin^2 theta).
    """
    if n < 1 or not curvature > 0:
        raise GeometryError("sphere needs n >= 1 and curvature > 0")
    K = float(curvature)
    spec = {"type": "sphere", "dim": n, "curvature": K, "chart": chart}
    inj = math.pi / math.sqrt(K)
    if chart == "polar":
        if n != 2:
            raise GeometryError("polar chart is provided for n = 2 only")
        R2 = 1.0 / K

        def metric(x):
            x = np.asarray(x, dtype=float)
            out = np.zeros(x.shape[:-1] + (2, 2))
            out[..., 0, 0] = R2
            out[..., 1, 1] = R2 * np.sin(x[..., 0]) ** 2
            return out

        def dom(x):
            x = np.asarray(x, dtype=float)
            return (x[..., 0] > 0) & (x[..., 0] < math.pi)

        def christ(X):
            X = np.atleast_2d(X)
            out = np.zeros((X.shape[0], 2, 2, 2))
            th = X[:, 0]
            out[:, 0, 1, 1] = -np.sin(th) * np.cos(th)
            out[:, 1, 0, 1] = out[:, 1, 1, 0] = np.cos(th) / np.sin(th)
            return out

        return ManifoldChart(2, metric, dom, label=f"S^2({K:g}) polar", spec=spec, christoffel_analytic=christ,
                             inj_radius=inj, basepoint=(math.pi / 2, 0.0))
    if chart != "stereo":
        raise GeometryError(f"unknown sphere chart {chart!r}")

    def metric(x):
        x = np.asarray(x, dtype=float)
        f = 4.0 / (1.0 + K * np.sum(x * x, axis=-1)) ** 2
        return f[..., None, None] * np.eye(n)

    return ManifoldChart(n, metric, _ball(1e6), label=f"S^{n}({K:g})", spec=spec, inj_radius=inj,
                         fd_scale=_conformal_scale(K))


def hyperbolic(n: int, curvature: float = -1.0) -> ManifoldChart:
    """Poincare ball of constant curvature -|curvature|."""
    K = -abs(float(curvature))
    if n < 1 or K == 0:
        raise GeometryError("hyperbolic space needs n >= 1 and nonzero curvature")
    a = -K

    def metric(x):
        x = np.asarray(x, dtype=float)
        f = 4.0 / (1.0 - a * np.sum(x * x, axis=-1)) ** 2
        return f[..., None, None] * np.eye(n)

    return ManifoldChart(n, metric, _ball(1.0 / math.sqrt(a)), label=f"H^{n}({K:g})",
                         spec={"type": "hyperbolic", "dim": n, "curvature": K}, fd_scale=_conformal_scale(-a))


def warped_product(profile: CurvatureProfile | ScalarBasis, n: int, T: float | None = None) -> ManifoldChart:
    """dt^2 + s_k(t)^2 g_{S^{n-1}} in Cartesian-like coordinates x = t * u.

    g_ij = (s/t)^2 delta_ij + (1 - (s/t)^2) x_i x_j / t^2, smooth through the pole.
    """
    if isinstance(profile, ScalarBasis):
        basis = profile
    else:
        if T is None:
            T = min(profile.t_max, 10.0)
        basis = solve_basis(profile, T, 1e-12)
    T = basis.T
    r0 = first_zero(basis)
    rmax = min(T, r0 if r0 is not None else math.inf)

    def metric(x):
        x = np.asarray(x, dtype=float)
        t2 = np.sum(x * x, axis=-1)
        t = np.sqrt(t2)
        safe = np.where(t > 0, t, 1.0)
        phi = np.where(t > 0, basis.s(np.clip(t, 0, T)) / safe, 1.0)
        coef = np.where(t > 0, (1.0 - phi * phi) / np.where(t2 > 0, t2, 1.0), 0.0)
        return phi[..., None, None] ** 2 * np.eye(n) + coef[..., None, None] * x[..., :, None] * x[..., None, :]

    spec = {"type": "warped", "dim": n}
    try:
        spec["profile"] = basis.profile.to_json()
    except ValueError:
        spec["profile"] = {"kind": "callable", "label": basis.profile.label}
    return ManifoldChart(n, metric, _ball(rmax), label=f"warped(n={n})", spec=spec, inj_radius=rmax)


def product(M1: ManifoldChart, M2: ManifoldChart) -> ManifoldChart:
    n1, n2 = M1.dim, M2.dim
    n = n1 + n2

    def metric(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1] + (n, n))
        out[..., :n1, :n1] = M1.metric(x[..., :n1])
        out[..., n1:, n1:] = M2.metric(x[..., n1:])
        return out

    def dom(x):
        x = np.asarray(x, dtype=float)
        return M1.domain(x[..., :n1]) & M2.domain(x[..., n1:])

    def scale(X):
        X = np.atleast_2d(X)
        out = np.ones(X.shape[0])
        if M1.fd_scale is not None:
            out = np.minimum(out, M1.fd_scale(X[:, :n1]))
        if M2.fd_scale is not None:
            out = np.minimum(out, M2.fd_scale(X[:, n1:]))
        return out

    has_scale = M1.fd_scale is not None or M2.fd_scale is not None
    base = tuple(np.concatenate([M1.origin, M2.origin]).tolist())
    return ManifoldChart(n, metric, dom, label=f"{M1.label}x{M2.label}",
                         spec={"type": "product", "factors": [M1.spec, M2.spec]},
                         inj_radius=min(M1.inj_radius, M2.inj_radius), basepoint=base,
                         fd_scale=scale if has_scale else None)


def _complex_J(m: int) -> np.ndarray:
    J = np.zeros((2 * m, 2 * m))
    J[:m, m:] = -np.eye(m)
    J[m:, :m] = np.eye(m)
    return J


def _hermitian_real(H: np.ndarray) -> np.ndarray:
    """Real 2m x 2m matrix of a Hermitian form in coordinates (x_1..x_m, y_1..y_m)."""
    A, B = H.real, H.imag
    top = np.concatenate([A, B], axis=-1)
    bot = np.concatenate([-B, A], axis=-1)
    return np.concatenate([top, bot], axis=-2)


def _kahler_chart(m: int, sign: float, label: str, spec: dict) -> ManifoldChart:
    n = 2 * m
    Jm = _complex_J(m)

    def metric(x):
        x = np.asarray(x, dtype=float)
        z = x[..., :m] + 1j * x[..., m:]
        a2 = np.abs(z) ** 2
        q = 1.0 + sign * np.sum(a2, axis=-1)
        outer = np.conj(z)[..., :, None] * z[..., None, :]
        # I/q - sign zz*/q^2 = (I + sign B)/q^2 with B = |z|^2 I - zz*; the diagonal of B is
        # summed without the i-th term so that far from the origin nothing cancels
        B = -outer
        off = a2 @ (1.0 - np.eye(m))
        idx = np.arange(m)
        B[..., idx, idx] = off
        H = (np.eye(m) + sign * B) / (q * q)[..., None, None]
        return _hermitian_real(H)

    dom = _everywhere if sign > 0 else _ball(1.0)
    return ManifoldChart(n, metric, dom if sign < 0 else _ball(1e6), label=label, spec=spec,
                         kahler=KahlerStructure(lambda x: Jm.copy()),
                         inj_radius=math.pi / 2 if sign > 0 else math.inf, fd_scale=_conformal_scale(sign))


def fubini_study(cdim: int) -> ManifoldChart:
    """Affine chart of CP^n: |dz|^2/(1+|z|^2) - |conj(z).dz|^2/(1+|z|^2)^2."""
    if cdim < 1:
        raise GeometryError("complex dimension must be >= 1")
    return _kahler_chart(cdim, 1.0, f"CP^{cdim}", {"type": "fubini_study", "cdim": cdim})


def complex_hyperbolic(cdim: int) -> ManifoldChart:
    """Ball model: |dz|^2/(1-|z|^2) + |conj(z).dz|^2/(1-|z|^2)^2."""
    if cdim < 1:
        raise GeometryError("complex dimension must be >= 1")
    return _kahler_chart(cdim, -1.0, f"CH^{cdim}", {"type": "complex_hyperbolic", "cdim": cdim})


def complex_euclidean(cdim: int) -> ManifoldChart:
    M = euclidean(2 * cdim)
    Jm = _complex_J(cdim)
    return ManifoldChart(M.dim, M.metric, M.domain, label=f"C^{cdim}", spec={"type": "complex_euclidean", "cdim": cdim},
                         kahler=KahlerStructure(lambda x: Jm.copy()), christoffel_analytic=M.christoffel_analytic)


def ellipsoid(a: float, b: float, c: float) -> ManifoldChart:
    """Ellipsoid x^2/a^2 + y^2/b^2 + z^2/c^2 = 1 in a scaled stereographic chart."""
    a, b, c = float(a), float(b), float(c)

    def emb_jac(x):
        x = np.asarray(x, dtype=float)
        u, v = x[..., 0], x[..., 1]
        q = 1.0 + u * u + v * v
        # sphere point (2u/q, 2v/q, (1 - u^2 - v^2)/q) and its Jacobian
        d = np.zeros(x.shape[:-1] + (3, 2))
        d[..., 0, 0] = 2 * (q - 2 * u * u) / q ** 2
        d[..., 0, 1] = -4 * u * v / q ** 2
        d[..., 1, 0] = -4 * u * v / q ** 2
        d[..., 1, 1] = 2 * (q - 2 * v * v) / q ** 2
        d[..., 2, 0] = -4 * u / q ** 2
        d[..., 2, 1] = -4 * v / q ** 2
        scale = np.array([a, b, c])
        return d * scale[:, None]

    def metric(x):
        D = emb_jac(x)
        return np.einsum("...ki,...kj->...ij", D, D)

    return ManifoldChart(2, metric, _ball(1e6), label=f"ellipsoid({a:g},{b:g},{c:g})",
                         spec={"type": "ellipsoid", "axes": [a, b, c]})


def ellipsoid_gauss_curvature(a, b, c, x) -> float:
    """Closed-form Gauss curvature of the ellipsoid at chart point x."""
    u, v = x
    q = 1.0 + u * u + v * v
    X = np.array([a * 2 * u / q, b * 2 * v / q, c * (1 - u * u - v * v) / q])
    s = X[0] ** 2 / a ** 4 + X[1] ** 2 / b ** 4 + X[2] ** 2 / c ** 4
    return 1.0 / (a * a * b * b * c * c * s * s)


@dataclass(frozen=True)
class KahlerSplitModel:
    """dt^2 + s1^2 g_H + s2^2 g_V on [0, t0) x S^{2n-1}, by closed formulas only."""

    basis1: ScalarBasis
    basis2: ScalarBasis
    n: int

    def density(self, r):
        return self.basis1.s(r) ** (2 * self.n - 2) * self.basis2.s(r)

    def laplacian(self, r):
        return (2 * self.n - 2) * self.basis1.ds(r) / self.basis1.s(r) + self.basis2.ds(r) / self.basis2.s(r)

    def t0(self) -> float | None:
        return first_zero(self.basis1, "product", self.basis2)


def kahler_split_model(k1, k2, cdim: int, T: float = 3.0) -> KahlerSplitModel:
    p1 = k1 if isinstance(k1, CurvatureProfile) else CurvatureProfile.constant(k1)
    p2 = k2 if isinstance(k2, CurvatureProfile) else CurvatureProfile.constant(k2)
    return KahlerSplitModel(solve_basis(p1, T), solve_basis(p2, T), cdim)


_BUILTINS = {
    "euclidean": {"type": "euclidean", "dim": 3},
    "sphere": {"type": "sphere", "dim": 2, "curvature": 1.0},
    "hyperbolic": {"type": "hyperbolic", "dim": 3, "curvature": -1.0},
    "warped": {"type": "warped", "dim": 3, "profile": {"kind": "expr", "a": 1.0, "b_sin": 0.3, "t_max": 3.0}},
    "product": {"type": "product", "factors": [{"type": "hyperbolic", "dim": 2}, {"type": "sphere", "dim": 2}]},
    "fubini_study": {"type": "fubini_study", "cdim": 2},
    "complex_hyperbolic": {"type": "complex_hyperbolic", "cdim": 2},
    "complex_euclidean": {"type": "complex_euclidean", "cdim": 2},
    "ellipsoid": {"type": "ellipsoid", "axes": [1.0, 1.2, 0.8]},
}


def list_builtins() -> dict:
    return {k: dict(v) for k, v in _BUILTINS.items()}


def from_spec(spec: dict) -> ManifoldChart:
    """Build a chart from its JSON description."""
    if not isinstance(spec, dict) or "type" not in spec:
        raise GeometryError("manifold spec must be an object with a 'type' field")
    t = spec["type"]
    if t == "euclidean":
        return euclidean(int(spec.get("dim", 2)))
    if t == "sphere":
        return sphere(int(spec.get("dim", 2)), float(spec.get("curvature", 1.0)), spec.get("chart", "stereo"))
    if t == "hyperbolic":
        return hyperbolic(int(spec.get("dim", 2)), float(spec.get("curvature", -1.0)))
    if t == "warped":
        prof = CurvatureProfile.from_json(spec["profile"])
        T = float(spec.get("T", min(prof.t_max, 10.0)))
        return warped_product(prof, int(spec.get("dim", 2)), T)
    if t == "product":
        f = spec.get("factors", [])
        if len(f) != 2:
            raise GeometryError("product needs exactly two factors")
        return product(from_spec(f[0]), from_spec(f[1]))
    if t == "fubini_study":
        return fubini_study(int(spec.get("cdim", 1)))
    if t == "complex_hyperbolic":
        return complex_hyperbolic(int(spec.get("cdim", 1)))
    if t == "complex_euclidean":
        return complex_euclidean(int(spec.get("cdim", 1)))
    if t == "ellipsoid":
        a, b, c = spec.get("axes", [1.0, 1.0, 1.0])
        return ellipsoid(a, b, c)
    raise GeometryError(f"unknown manifold type {t!r}")


def builtin(name: str, **params) -> ManifoldChart:
    spec = dict(_BUILTINS.get(name, {"type": name}))
    spec.update(params)
    return from_spec(spec)


# ---------------------------------------------------------------------------
# embeddings


@dataclass(frozen=True)
class Embedding:
    """An l-dimensional submanifold given by a parametrisation z -> chart point.

    ``param_rule`` returns (nodes, weights) on the parameter domain; the
    induced measure is applied on top of these weights.
    """

    M: ManifoldChart
    ell: int
    map: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    kind: str = "custom"
    param_rule: Callable[[int], tuple[np.ndarray, np.ndarray]] | None = field(default=None, repr=False)
    complex: bool = False
    spec: dict = field(default_factory=dict, compare=False)
    fd_step: float = 1e-3

    def point(self, z) -> np.ndarray:
        return np.asarray(self.map(np.atleast_1d(np.asarray(z, dtype=float))), dtype=float)

    def _jets(self, z):
        z = np.atleast_1d(np.asarray(z, dtype=float))
        h = self.fd_step
        ell = self.ell
        x0 = self.point(z)
        if ell == 0:
            return x0, np.zeros((self.M.dim, 0)), np.zeros((self.M.dim, 0, 0))

        def d1(hh):
            cols = []
            for a in range(ell):
                e = np.zeros(ell)
                e[a] = hh
                cols.append((self.point(z + e) - self.point(z - e)) / (2 * hh))
            return np.array(cols).T

        def d2(hh):
            out = np.zeros((self.M.dim, ell, ell))
            for a in range(ell):
                ea = np.zeros(ell)
                ea[a] = hh
                out[:, a, a] = (self.point(z + ea) - 2 * x0 + self.point(z - ea)) / hh ** 2
                for b in range(a + 1, ell):
                    eb = np.zeros(ell)
                    eb[b] = hh
                    v = (self.point(z + ea + eb) - self.point(z + ea - eb) - self.point(z - ea + eb)
                         + self.point(z - ea - eb)) / (4 * hh * hh)
                    out[:, a, b] = out[:, b, a] = v
            return out

        D = (4 * d1(h / 2) - d1(h)) / 3
        D2 = (4 * d2(h / 2) - d2(h)) / 3
        return x0, D, D2

    def frames(self, z):
        """(point, tangent frame T (n x l), normal frame N (n x (n-l)), induced volume factor)."""
        x, D, _ = self._jets(z)
        g = self.M.metric_at(x)
        n = self.M.dim
        T = g_orthonormalize(g, D) if self.ell else np.zeros((n, 0))
        N = _complete_basis(g, T)
        vol = math.sqrt(max(np.linalg.det(D.T @ g @ D), 0.0)) if self.ell else 1.0
        return x, T, N, vol

    def second_fundamental(self, z, v) -> np.ndarray:
        """A_v(e_i, e_j) = <v, -nabla_{e_i} e_j> in the orthonormal tangent frame."""
        x, D, D2 = self._jets(z)
        if self.ell == 0:
            return np.zeros((0, 0))
        g = self.M.metric_at(x)
        gam = christoffel(self.M, x)
        cov = D2 + np.einsum("ljk,ja,kb->lab", gam, D, D)
        A_coord = -np.einsum("l,lm,mab->ab", np.asarray(v, float), g, cov)
        T = g_orthonormalize(g, D)
        L = np.linalg.lstsq(D, T, rcond=None)[0]  # T = D L
        A = L.T @ A_coord @ L
        return 0.5 * (A + A.T)

    def mean_curvature(self, z) -> np.ndarray:
        """H = (1/l) sum_i (nabla_{e_i} e_i)^perp as a chart vector."""
        x, T, N, _ = self.frames(z)
        if self.ell == 0:
            return np.zeros(self.M.dim)
        H = np.zeros(self.M.dim)
        for nu in N.T:
            H += -np.trace(self.second_fundamental(z, nu)) / self.ell * nu
        return H

    def check_complex(self, z, tol: float = 1e-8) -> float:
        x, T, _, _ = self.frames(z)
        if T.shape[1] == 0:
            return 0.0
        try:
            _j_invariant_basis(self.M.metric_at(x), self.M.J(x), T)
        except NotJInvariantError as exc:
            raise NotJInvariantError(f"submanifold is not complex: {exc}") from None
        return 0.0

    def rule(self, m: int = 8):
        if self.param_rule is None:
            return np.zeros((1, max(self.ell, 1))), np.ones(1)
        return self.param_rule(m)


def _complete_basis(g, T):
    n = g.shape[0]
    cands = np.eye(n)
    basis = [t for t in T.T]
    out = []
    for e in cands.T:
        w = e.copy()
        for _ in range(2):
            for b in basis + out:
                w = w - (w @ g @ b) * b
        nw = math.sqrt(max(w @ g @ w, 0.0))
        if nw > 1e-6:
            out.append(w / nw)
        if len(basis) + len(out) == n:
            break
    if len(basis) + len(out) != n:
        raise FrameDegenerateError("could not complete the normal frame")
    return np.array(out).T if out else np.zeros((n, 0))


def _uniform_rule(a, b, periodic=False):
    def rule(m):
        if periodic:
            z = a + (b - a) * (np.arange(m) + 0.5) / m
            return z[:, None], np.full(m, (b - a) / m)
        x, w = np.polynomial.legendre.leggauss(m)
        return (a + 0.5 * (b - a) * (x + 1))[:, None], 0.5 * (b - a) * w

    return rule


def make_embedding(M: ManifoldChart, spec: dict) -> Embedding:
    """Builtin submanifolds: point, equator, latitude, line, geodesic_line, cp_line."""
    kind = spec.get("kind", "point")
    n = M.dim
    if kind == "point":
        p = np.asarray(spec.get("at", M.origin), dtype=float)
        return Embedding(M, 0, lambda z: p.copy(), kind="point", spec=dict(spec))
    if kind in ("equator", "latitude"):
        if M.spec.get("type") != "sphere" or M.spec.get("chart", "stereo") != "stereo":
            raise GeometryError(f"{kind} embedding needs a stereographic sphere chart")
        K = M.spec["curvature"]
        ell = int(spec.get("ell", n - 1))
        if kind == "latitude":
            if n != 2:
                raise GeometryError("latitude circles are provided on S^2")
            theta0 = float(spec["theta0"])
            rho = math.tan(math.sqrt(K) * theta0 / 2) / math.sqrt(K)
        else:
            rho = 1.0 / math.sqrt(K)
        if ell == 1 and n >= 2:
            def f(z, rho=rho):
                x = np.zeros(n)
                x[0], x[1] = rho * math.cos(z[0]), rho * math.sin(z[0])
                return x
            return Embedding(M, 1, f, kind=kind, param_rule=_uniform_rule(0.0, 2 * math.pi, periodic=True),
                             spec=dict(spec))
        if ell == n - 1 and n == 3:
            def f(z, rho=rho):
                a, b = z[0], z[1]
                return rho * np.array([math.sin(a) * math.cos(b), math.sin(a) * math.sin(b), math.cos(a)])

            def rule(m):
                xa, wa = np.polynomial.legendre.leggauss(m)
                a = 0.5 * math.pi * (xa + 1)
                b = 2 * math.pi * (np.arange(2 * m) + 0.5) / (2 * m)
                Z = np.array([[ai, bj] for ai in a for bj in b])
                W = np.array([0.5 * math.pi * wi * 2 * math.pi / (2 * m) for wi in wa for _ in b])
                return Z, W
            return Embedding(M, 2, f, kind=kind, param_rule=rule, spec=dict(spec))
        raise GeometryError("equator embeddings are provided for l = 1 or (n = 3, l = 2)")
    if kind in ("line", "geodesic_line"):
        length = float(spec.get("length", 2.0))
        if kind == "geodesic_line":
            if M.spec.get("type") != "hyperbolic" or n != 2:
                raise GeometryError("geodesic_line is provided in H^2")
            a = math.sqrt(-M.spec["curvature"])

            def f(z):
                x = np.zeros(2)
                x[0] = math.tanh(a * z[0] / 2) / a
                return x
        else:
            def f(z):
                x = np.zeros(n)
                x[0] = z[0]
                return x
        return Embedding(M, 1, f, kind=kind, param_rule=_uniform_rule(-length / 2, length / 2), spec=dict(spec))
    if kind == "cp_line":
        if not M.is_kahler or n != 4:
            raise GeometryError("cp_line is the totally geodesic CP^1 inside a complex surface chart")

        def f(z):
            # z = (rho, phi): complex coordinate tan(rho) e^{i phi} in the first slot
            w = math.tan(z[0]) if M.spec.get("type") == "fubini_study" else z[0]
            return np.array([w * math.cos(z[1]), 0.0, w * math.sin(z[1]), 0.0])

        if M.spec.get("type") == "fubini_study":
            # the chart coordinate tan(rho) degenerates as rho -> pi/2; every footpoint is
            # equivalent under isometries, so a geodesic disk of radius pi/4 is the default piece
            top = float(spec.get("radius", math.pi / 4))
            if not 0 < top < math.pi / 2:
                raise GeometryError("cp_line radius must lie in (0, pi/2)")
        elif M.spec.get("type") == "complex_hyperbolic":
            top = float(spec.get("radius", 0.9))
        else:
            top = float(spec.get("radius", 1.0))

        def rule(m):
            xa, wa = np.polynomial.legendre.leggauss(m)
            a = 0.5 * top * (xa + 1)
            b = 2 * math.pi * (np.arange(m) + 0.5) / m
            Z = np.array([[ai, bj] for ai in a for bj in b])
            W = np.array([0.5 * top * wi * 2 * math.pi / m for wi in wa for _ in b])
            return Z, W
        return Embedding(M, 2, f, kind=kind, param_rule=rule, complex=True, spec=dict(spec))
    raise GeometryError(f"unknown embedding kind {kind!r}")
