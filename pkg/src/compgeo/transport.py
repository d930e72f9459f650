"""Geodesics, parallel frames and matrix Jacobi fields.

A geodesic is shot together with a parallel orthonormal frame E_1..E_n
(E_n = gamma'). Jacobi fields are written in that frame as columns of a
matrix J(t), so that J'' = -R(t) J with R(t)_ab = Rm(E_a, g', g', E_b).
The curvature matrix is rebuilt from the chart metric at every integrator
stage.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate as _integrate
from scipy import optimize as _optimize

from .geometry_core import (
    Embedding,
    FrameDegenerateError,
    GeometryError,
    ManifoldChart,
    NearBoundaryError,
    _complete_basis,
    christoffel_batch,
    g_orthonormalize,
    riemann_batch,
)
from .scalar_models import IntegratorError

__all__ = [
    "GeodesicRecord",
    "JacobiMatrixSolution",
    "LeftChartDomainError",
    "PastConjugatePointError",
    "SingularJacobiError",
    "shoot_geodesic",
    "shoot_normal",
    "shoot_many",
    "shoot_normal_many",
    "jacobi",
    "frame_curvature",
    "curvature_matrix",
    "volume_density",
    "laplacian_distance",
    "index_form",
    "first_conjugate_radius",
    "boundary_normalized",
    "density_csv",
    "polar_angles_to_direction",
    "beta_form_Q",
]


class LeftChartDomainError(GeometryError):
    pass


class PastConjugatePointError(ValueError):
    pass


class SingularJacobiError(ValueError):
    pass


@dataclass(frozen=True)
class GeodesicRecord:
    M: ManifoldChart = field(repr=False)
    p: np.ndarray
    theta: np.ndarray
    r: float
    ts: np.ndarray = field(repr=False)
    xs: np.ndarray = field(repr=False)
    vs: np.ndarray = field(repr=False)
    frames: np.ndarray = field(repr=False)
    tol: float = 1e-10
    achieved: dict = field(default_factory=dict, compare=False)
    sol: Callable = field(default=None, repr=False, compare=False)
    embedding: Embedding | None = field(default=None, repr=False)
    z: np.ndarray | None = None
    ell: int = 0
    A_theta: np.ndarray | None = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.M.dim

    def state(self, t):
        """Position, velocity and frame (columns) at arclength t (scalar or array)."""
        t = np.asarray(t, dtype=float)
        if np.any(t < -1e-12) or np.any(t > self.r * (1 + 1e-12) + 1e-12):
            raise ValueError(f"t outside [0, {self.r}]")
        y = self.sol(np.clip(t, 0.0, self.r))
        n = self.dim
        y = y[None] if t.ndim == 0 else y.T
        x = y[..., :n]
        v = y[..., n:2 * n]
        E = y[..., 2 * n:].reshape(y.shape[:-1] + (n, n))
        if t.ndim == 0:
            return x[0], v[0], E[0]
        return x, v, E

    def endpoint(self) -> np.ndarray:
        return self.xs[-1]


def _geo_rhs(M: ManifoldChart, n: int):
    def rhs(t, y):
        x = y[:n]
        v = y[n:2 * n]
        E = y[2 * n:].reshape(n, n)
        try:
            gam = christoffel_batch(M, x[None])[0]
        except NearBoundaryError as exc:
            raise LeftChartDomainError(f"geodesic left the chart domain at t={t:.6g}: {exc}") from None
        acc = -np.einsum("ljk,j,k->l", gam, v, v)
        dE = -np.einsum("ljk,j,ka->la", gam, v, E)
        return np.concatenate([v, acc, dE.reshape(-1)])

    return rhs


def _unit(M: ManifoldChart, p, theta):
    g = M.metric_at(p)
    theta = np.asarray(theta, dtype=float)
    nrm = math.sqrt(theta @ g @ theta)
    if abs(nrm - 1.0) > 1e-6:
        raise ValueError(f"initial direction must be unit (|theta| = {nrm:.8g})")
    return theta / nrm, g


def _initial_frame(M: ManifoldChart, p, theta, g, lead=None):
    n = M.dim
    cands = []
    if lead is not None:
        lead = np.asarray(lead, dtype=float).reshape(n, -1)
        cands = [c for c in lead.T]
    elif M.is_kahler:
        cands = [M.J(p) @ theta]
    basis = []
    for c in cands:
        w = c - (c @ g @ theta) * theta
        for b in basis:
            w = w - (w @ g @ b) * b
        nw = math.sqrt(max(w @ g @ w, 0.0))
        if nw > 1e-8:
            basis.append(w / nw)
    pre = np.array(basis + [theta]).T
    rest = _complete_basis(g, pre)
    E = np.concatenate([np.array(basis).T.reshape(n, len(basis)), rest, theta[:, None]], axis=1)
    return E


def shoot_geodesic(M: ManifoldChart, p, theta, r: float, tol: float = 1e-10, frame=None,
                   samples: int = 65) -> GeodesicRecord:
    """Unit-speed geodesic of length r from p with a parallel orthonormal frame.

    ``frame`` optionally fixes the leading frame vectors (they are
    orthonormalised against theta); the last frame vector is always gamma'.
    """
    p = np.asarray(p, dtype=float)
    if not M.inside(p[None])[0]:
        raise LeftChartDomainError("start point outside chart domain")
    theta, g = _unit(M, p, theta)
    E0 = _initial_frame(M, p, theta, g, frame)
    return _shoot(M, p, theta, E0, r, tol, samples)


def _shoot(M, p, theta, E0, r, tol, samples, **extra):
    n = M.dim
    y0 = np.concatenate([p, theta, E0.reshape(-1)])
    if r <= 0:
        raise ValueError("length must be positive")
    sol = _integrate.solve_ivp(_geo_rhs(M, n), (0.0, r), y0, method="DOP853", rtol=tol, atol=tol * 1e-2,
                               dense_output=True)
    if sol.status != 0:
        raise IntegratorError(f"geodesic integration failed: {sol.message}")
    ts = np.linspace(0.0, r, samples)
    Y = sol.sol(ts).T
    xs, vs = Y[:, :n], Y[:, n:2 * n]
    Es = Y[:, 2 * n:].reshape(-1, n, n)
    G = M.metric_at(xs)
    speed = np.sqrt(np.einsum("pi,pij,pj->p", vs, G, vs))
    gram = np.einsum("pia,pij,pjb->pab", Es, G, Es)
    ach = {
        "speed_dev": float(np.max(np.abs(speed - 1.0))),
        "frame_dev": float(np.max(np.abs(gram - np.eye(n)))),
        "steps": int(sol.t.size - 1),
    }
    return GeodesicRecord(M=M, p=p, theta=theta, r=float(r), ts=ts, xs=xs, vs=vs, frames=Es, tol=tol,
                          achieved=ach, sol=sol.sol, **extra)


def shoot_normal(emb: Embedding, z, u, r: float, tol: float = 1e-10, samples: int = 65) -> GeodesicRecord:
    """Normal geodesic from the footpoint z of emb in the unit normal direction N u.

    The frame is ordered: tangent frame of the submanifold (l vectors),
    the remaining unit normals, then gamma'.
    """
    x, theta, E0, extra = _normal_setup(emb, z, u)
    return _shoot(emb.M, x, theta, E0, r, tol, samples, **extra)


def _normal_setup(emb: Embedding, z, u):
    M = emb.M
    x, T, N, _ = emb.frames(z)
    u = np.asarray(u, dtype=float)
    if N.shape[1] != u.size:
        raise ValueError(f"normal direction needs {N.shape[1]} coefficients")
    u = u / np.linalg.norm(u)
    q, _ = np.linalg.qr(np.column_stack([u, np.eye(u.size)]))
    if q[:, 0] @ u < 0:
        q = -q
    theta = N @ u
    others = N @ q[:, 1:u.size]
    if M.is_kahler and others.shape[1]:
        # put J theta first among the remaining normals (it is normal when the submanifold is complex)
        g = M.metric_at(x)
        others = _lead_frame(g, M.J(x) @ theta, others, np.column_stack([T, theta]))
    E0 = np.concatenate([T, others, theta[:, None]], axis=1)
    A = emb.second_fundamental(z, theta) if emb.ell else np.zeros((0, 0))
    return x, theta, E0, dict(embedding=emb, z=np.atleast_1d(np.asarray(z, float)), ell=emb.ell, A_theta=A)


def _batch_rhs(M: ManifoldChart, n: int, P: int):
    w = 2 * n + n * n

    def rhs(t, y):
        Y = y.reshape(P, w)
        x = Y[:, :n]
        v = Y[:, n:2 * n]
        E = Y[:, 2 * n:].reshape(P, n, n)
        try:
            gam = christoffel_batch(M, x)
        except NearBoundaryError as exc:
            raise LeftChartDomainError(f"geodesic left the chart domain at t={t:.6g}: {exc}") from None
        acc = -np.einsum("pljk,pj,pk->pl", gam, v, v)
        dE = -np.einsum("pljk,pj,pka->pla", gam, v, E)
        return np.concatenate([v, acc, dE.reshape(P, -1)], axis=1).reshape(-1)

    return rhs


class _Slice:
    def __init__(self, sol, lo, hi):
        self.sol, self.lo, self.hi = sol, lo, hi

    def __call__(self, t):
        return self.sol(t)[self.lo:self.hi]


def _shoot_batch(M, starts, r, tol, samples):
    """Integrate several geodesics as one system; starts: list of (p, theta, E0, extra)."""
    n = M.dim
    P = len(starts)
    w = 2 * n + n * n
    y0 = np.concatenate([np.concatenate([p, th, E0.reshape(-1)]) for p, th, E0, _ in starts])
    # the solver controls an RMS norm over all components; scale so each geodesic keeps its own tolerance
    btol = tol / math.sqrt(P)
    sol = _integrate.solve_ivp(_batch_rhs(M, n, P), (0.0, r), y0, method="DOP853", rtol=btol, atol=btol * 1e-2,
                               dense_output=True)
    if sol.status != 0:
        raise IntegratorError(f"geodesic integration failed: {sol.message}")
    ts = np.linspace(0.0, r, samples)
    Yall = sol.sol(ts).T
    out = []
    for i, (p, theta, E0, extra) in enumerate(starts):
        Y = Yall[:, i * w:(i + 1) * w]
        xs, vs = Y[:, :n], Y[:, n:2 * n]
        Es = Y[:, 2 * n:].reshape(-1, n, n)
        G = M.metric_at(xs)
        speed = np.sqrt(np.einsum("pi,pij,pj->p", vs, G, vs))
        gram = np.einsum("pia,pij,pjb->pab", Es, G, Es)
        ach = {"speed_dev": float(np.max(np.abs(speed - 1.0))), "frame_dev": float(np.max(np.abs(gram - np.eye(n)))),
               "steps": int(sol.t.size - 1), "batch": P}
        out.append(GeodesicRecord(M=M, p=np.asarray(p, float), theta=theta, r=float(r), ts=ts, xs=xs, vs=vs,
                                  frames=Es, tol=tol, achieved=ach, sol=_Slice(sol.sol, i * w, (i + 1) * w), **extra))
    return out


def shoot_many(M: ManifoldChart, p, thetas, r: float, tol: float = 1e-10, samples: int = 65) -> list:
    """shoot_geodesic for several unit directions at once (one vectorised ODE system)."""
    p = np.asarray(p, dtype=float)
    if not M.inside(p[None])[0]:
        raise LeftChartDomainError("start point outside chart domain")
    starts = []
    for th in thetas:
        theta, g = _unit(M, p, th)
        starts.append((p, theta, _initial_frame(M, p, theta, g), {}))
    return _shoot_batch(M, starts, r, tol, samples)


def shoot_normal_many(emb: Embedding, items, r: float, tol: float = 1e-10, samples: int = 65) -> list:
    """shoot_normal for several (z, u) pairs at once."""
    return _shoot_batch(emb.M, [_normal_setup(emb, z, u) for z, u in items], r, tol, samples)


def _lead_frame(g, lead, others, against):
    """Orthonormal basis of span(others) whose first vector is the part of lead in it."""
    cand = np.column_stack([lead, others])
    out = []
    for c in cand.T:
        w = c.copy()
        for _ in range(2):
            for b in list(against.T) + out:
                w = w - (w @ g @ b) * b
        nw = math.sqrt(max(w @ g @ w, 0.0))
        if nw > 1e-8:
            out.append(w / nw)
        if len(out) == others.shape[1]:
            break
    if len(out) != others.shape[1]:
        raise FrameDegenerateError("could not rebuild the normal frame")
    return np.array(out).T


def frame_curvature(record: GeodesicRecord, ts) -> np.ndarray:
    """Rm in the parallel frame at the given arclengths: shape (P, n, n, n, n)."""
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    x, v, E = record.state(ts)
    Rm = riemann_batch(record.M, x)[0]
    return np.einsum("pijkl,pia,pjb,pkc,pld->pabcd", Rm, E, E, E, E, optimize=True)


def curvature_matrix(record: GeodesicRecord, ts) -> np.ndarray:
    """R(t)_ab = Rm(E_a, g', g', E_b) for a, b < n: shape (P, n-1, n-1)."""
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    x, v, E = record.state(ts)
    Rm = riemann_batch(record.M, x)[0]
    Ef = E[:, :, :-1]
    Rv = np.einsum("pijkl,pj,pk->pil", Rm, v, v)
    return np.einsum("pia,pil,plb->pab", Ef, Rv, Ef)


@dataclass(frozen=True)
class JacobiMatrixSolution:
    record: GeodesicRecord = field(repr=False)
    init: str
    ts: np.ndarray = field(repr=False)
    J: np.ndarray = field(repr=False)
    Jp: np.ndarray = field(repr=False)
    sol: Callable = field(default=None, repr=False, compare=False)
    ell: int = 0
    achieved: dict = field(default_factory=dict, compare=False)
    _conj: list = field(default_factory=list, repr=False, compare=False)

    @property
    def m(self) -> int:
        return self.J.shape[-1]

    def at(self, t):
        """(J(t), J'(t))."""
        t = np.asarray(t, dtype=float)
        if np.any(t > self.record.r * (1 + 1e-12) + 1e-12) or np.any(t < -1e-12):
            raise ValueError(f"t outside [0, {self.record.r}]")
        y = self.sol(np.clip(t, 0.0, self.record.r))
        m = self.m
        if t.ndim == 0:
            return y[: m * m].reshape(m, m), y[m * m:].reshape(m, m)
        y = y.T
        return y[:, : m * m].reshape(-1, m, m), y[:, m * m:].reshape(-1, m, m)

    def symplectic_defect(self) -> float:
        W = np.einsum("pba,pbc->pac", self.J, self.Jp) - np.einsum("pba,pbc->pac", self.Jp, self.J)
        return float(np.max(np.abs(W)))

    def conjugate_radius(self):
        if not self._conj:
            self._conj.append(first_conjugate_radius(self))
        return self._conj[0]


class _CurvatureInterpolant:
    """R(t) from one batched evaluation at Chebyshev-Lobatto nodes per segment."""

    def __init__(self, record: GeodesicRecord, segment: float, nodes: int):
        r = record.r
        k = max(1, int(math.ceil(r / segment - 1e-9)))
        self.edges = np.linspace(0.0, r, k + 1)
        self.x = -np.cos(np.pi * np.arange(nodes + 1) / nodes)
        a, b = self.edges[:-1, None], self.edges[1:, None]
        ts = 0.5 * (a + b) + 0.5 * (b - a) * self.x[None]
        R = curvature_matrix(record, ts.reshape(-1))
        R = 0.5 * (R + np.swapaxes(R, 1, 2))
        self.R = R.reshape(k, nodes + 1, *R.shape[1:])
        w = (-1.0) ** np.arange(nodes + 1)
        w[0] *= 0.5
        w[-1] *= 0.5
        self.w = w
        self.k = k

    def __call__(self, t: float) -> np.ndarray:
        i = min(max(int(np.searchsorted(self.edges, t, side="right")) - 1, 0), self.k - 1)
        a, b = self.edges[i], self.edges[i + 1]
        u = (2.0 * t - a - b) / (b - a)
        d = u - self.x
        hit = np.flatnonzero(d == 0.0)
        if hit.size:
            return self.R[i, hit[0]]
        q = self.w / d
        return np.tensordot(q, self.R[i], axes=1) / q.sum()


def jacobi(record: GeodesicRecord, init: str = "point", samples: int | None = None,
           curvature: str = "interpolate", segment: float = 0.125, nodes: int = 16) -> JacobiMatrixSolution:
    """Fundamental matrix solution along the record.

    ``point``: J(0) = 0, J'(0) = I. ``adapted``: the record must come from
    shoot_normal; tangential block J(0) = I, J'(0) = A_theta, normal block
    J(0) = 0, J'(0) = I.

    ``curvature="interpolate"`` samples R once at Chebyshev nodes (segments
    of length ``segment``) and interpolates; ``"direct"`` evaluates the
    curvature tensor at every solver stage.
    """
    n = record.dim
    m = n - 1
    J0 = np.zeros((m, m))
    Jp0 = np.eye(m)
    ell = 0
    if init == "adapted":
        if record.embedding is None:
            raise ValueError("adapted initial conditions need a geodesic shot from an embedding")
        ell = record.ell
        if ell:
            J0[:ell, :ell] = np.eye(ell)
            Jp0[:ell, :ell] = record.A_theta
    elif init != "point":
        raise ValueError("init must be 'point' or 'adapted'")
    M = record.M
    sol_g = record.sol

    if curvature == "interpolate":
        Rt = _CurvatureInterpolant(record, segment, nodes)
    elif curvature == "direct":
        def Rt(t):
            st = sol_g(min(max(t, 0.0), record.r))
            x, v = st[:n], st[n:2 * n]
            E = st[2 * n:].reshape(n, n)[:, :m]
            Rm = riemann_batch(M, x[None])[0][0]
            return E.T @ np.einsum("ijkl,j,k->il", Rm, v, v) @ E
    else:
        raise ValueError("curvature must be 'interpolate' or 'direct'")

    def rhs(t, y):
        J = y[: m * m].reshape(m, m)
        return np.concatenate([y[m * m:], (-Rt(t) @ J).reshape(-1)])

    y0 = np.concatenate([J0.reshape(-1), Jp0.reshape(-1)])
    # the curvature carries finite-difference noise near 1e-9, so the absolute
    # tolerance is not tightened below the relative one
    sol = _integrate.solve_ivp(rhs, (0.0, record.r), y0, method="DOP853", rtol=record.tol, atol=record.tol,
                               dense_output=True)
    if sol.status != 0:
        raise IntegratorError(f"Jacobi integration failed: {sol.message}")
    ts = record.ts if samples is None else np.linspace(0.0, record.r, samples)
    Y = sol.sol(ts).T
    out = JacobiMatrixSolution(record=record, init=init, ts=ts, J=Y[:, : m * m].reshape(-1, m, m),
                               Jp=Y[:, m * m:].reshape(-1, m, m), sol=sol.sol, ell=ell,
                               achieved={"steps": int(sol.t.size - 1)})
    return out


def _det_scale(J, Jp):
    s = np.linalg.svd(J, compute_uv=False)
    big = np.linalg.norm(np.concatenate([J, Jp], axis=0), 2)
    return s[-1] / big if big > 0 else 0.0


def first_conjugate_radius(jac: JacobiMatrixSolution, T: float | None = None, tol: float = 1e-10,
                           grid: int = 512):
    """Smallest t in (0, T] with det J(t) = 0, or None."""
    T = jac.record.r if T is None else min(T, jac.record.r)
    if jac.m == 0:
        return None
    t0 = T * 1e-3
    ts = np.linspace(t0, T, grid)
    J, Jp = jac.at(ts)
    det = np.linalg.det(J)
    sv = np.linalg.svd(J, compute_uv=False)[:, -1]
    big = np.linalg.norm(np.concatenate([J, Jp], axis=1), 2, axis=(1, 2))
    q = np.where(big > 0, sv / np.where(big > 0, big, 1.0), 0.0)
    qf = lambda t: _det_scale(*jac.at(t))  # noqa: E731
    detf = lambda t: float(np.linalg.det(jac.at(t)[0]))  # noqa: E731
    # adapted fields start with det J = 0 only in the normal block; skip the start region
    for i in range(1, grid):
        if det[i - 1] != 0 and np.sign(det[i]) != np.sign(det[i - 1]) and det[i] != 0:
            return float(_optimize.brentq(detf, ts[i - 1], ts[i], xtol=tol, rtol=1e-15))
        if det[i] == 0:
            return float(ts[i])
        lo = i - 1
        hi = min(i + 1, grid - 1)
        if q[i] <= q[lo] and (i == grid - 1 or q[i] <= q[hi]) and q[i] < 0.05:
            a, b = ts[lo], ts[hi]
            res = _optimize.minimize_scalar(qf, bounds=(a, b), method="bounded",
                                            options={"xatol": tol})
            if res.fun < 1e-6:
                return float(res.x)
    return None


def _guard(jac: JacobiMatrixSolution, r: float):
    c = jac.conjugate_radius()
    if c is not None and r >= c - 1e-9:
        raise PastConjugatePointError(f"radius {r:.6g} is at or past the first conjugate/focal point {c:.6g}")


def volume_density(jac: JacobiMatrixSolution) -> Callable[[float], float]:
    """r -> F(r) = det J(r) (point or Fermi density)."""

    def F(r):
        r = float(r)
        if r <= 0:
            return 0.0 if jac.m and jac.ell < jac.m else 1.0
        _guard(jac, r)
        return float(np.linalg.det(jac.at(r)[0]))

    return F


def laplacian_distance(jac: JacobiMatrixSolution, r: float) -> float:
    """(log F)'(r) = trace(J'(r) J(r)^-1)."""
    _guard(jac, r)
    J, Jp = jac.at(float(r))
    if jac.m == 0:
        return 0.0
    return float(np.trace(np.linalg.solve(J.T, Jp.T).T))


def boundary_normalized(jac: JacobiMatrixSolution, r: float, ts) -> np.ndarray:
    """Frame coefficients of the Jacobi fields with Y_i(r) = E_i(r): J(t) J(r)^-1."""
    J_r, Jp_r = jac.at(float(r))
    # relative to the size of (J, J'); cond() alone is blind when m = 1
    if _det_scale(J_r, Jp_r) < 1e-8:
        raise SingularJacobiError(f"J({r:.6g}) is singular: conjugate or focal point at or before r")
    Jt = jac.at(np.atleast_1d(ts))[0]
    return np.einsum("pab,bc->pac", Jt, np.linalg.inv(J_r))


def index_form(record: GeodesicRecord, Y: Callable, embedding: Embedding | None = None,
               dY: Callable | None = None, r: float | None = None, rtol: float = 1e-8) -> float:
    """I(Y, Y) = int (|Y'|^2 - <R(Y, g')g', Y>) + A_theta(Y(0), Y(0)).

    Y(t) returns frame coefficients (length n-1, or n with the last along
    gamma'). With an embedding, the first l coefficients at t = 0 are taken
    as the tangential part.
    """
    n = record.dim
    r = record.r if r is None else float(r)

    def coeffs(t):
        y = np.asarray(Y(t), dtype=float)
        return y[: n - 1]

    def deriv(t):
        if dY is not None:
            return np.asarray(dY(t), dtype=float)[: n - 1]
        h = 1e-5 * max(1.0, r)
        a, b = max(t - h, 0.0), min(t + h, r)
        return (coeffs(b) - coeffs(a)) / (b - a)

    def integrand(t):
        y, yp = coeffs(t), deriv(t)
        R = curvature_matrix(record, t)[0]
        return float(yp @ yp - y @ R @ y)

    val, _ = _integrate.quad(integrand, 0.0, r, epsabs=1e-12, epsrel=rtol, limit=200)
    emb = embedding if embedding is not None else record.embedding
    if emb is not None and record.ell:
        y0 = coeffs(0.0)[: record.ell]
        val += float(y0 @ record.A_theta @ y0)
    return float(val)


def density_csv(jac: JacobiMatrixSolution, rs) -> str:
    F = volume_density(jac)
    lines = ["t,F,logF_prime"]
    for r in rs:
        lines.append(f"{r:.12g},{F(r):.12g},{laplacian_distance(jac, r):.12g}")
    return "\n".join(lines) + "\n"


def polar_angles_to_direction(phi) -> np.ndarray:
    """Hyperspherical angles (phi_1..phi_{n-1}) to a unit vector of R^n."""
    phi = np.asarray(phi, dtype=float)
    n = phi.size + 1
    u = np.empty(n)
    s = 1.0
    for i in range(n - 1):
        u[i] = s * math.cos(phi[i])
        s *= math.sin(phi[i])
    u[n - 1] = s
    return u


def beta_form_Q(M: ManifoldChart, p, basis: np.ndarray, phi, r: float, k: float, h: float = 1e-4,
                nodes: int = 24, tol: float = 1e-11) -> float:
    """sum_ij beta^ij(r) int_0^r R_hat_k(d_i, d_t, d_t, d_j) dt from geodesic polar coordinates.

    The coordinate fields d_i = d exp_p(t u(phi)) / d phi_i are obtained by
    central differences of geodesics in the angles, with Richardson
    extrapolation; R_hat_k = Rm - k B uses the chart curvature tensor.
    """
    from .geometry_core import b_tensor

    p = np.asarray(p, dtype=float)
    phi = np.asarray(phi, dtype=float)
    d = phi.size
    tq, wq = np.polynomial.legendre.leggauss(nodes)
    tq = 0.5 * r * (tq + 1.0)
    wq = 0.5 * r * wq
    ts = np.concatenate([tq, [r]])

    def pos(ph):
        th = basis @ polar_angles_to_direction(ph)
        rec = shoot_geodesic(M, p, th, r, tol=tol)
        x, v, _ = rec.state(ts)
        return x, v

    x0, v0 = pos(phi)

    def dpos(step):
        cols = []
        for i in range(d):
            e = np.zeros(d)
            e[i] = step
            cols.append((pos(phi + e)[0] - pos(phi - e)[0]) / (2 * step))
        return np.stack(cols, axis=-1)  # (P, n, d)

    D = (4.0 * dpos(h / 2) - dpos(h)) / 3.0
    Rm, _, _, _, G, _ = riemann_batch(M, x0)
    Rh = Rm - k * np.array([b_tensor(g) for g in G])
    vals = np.einsum("pijkl,pia,pj,pk,plb->pab", Rh, D, v0, v0, D, optimize=True)
    integral = np.einsum("p,pab->ab", wq, vals[:-1])
    beta_r = np.einsum("ia,ij,jb->ab", D[-1], G[-1], D[-1])
    return float(np.trace(np.linalg.solve(beta_r, integral)))
