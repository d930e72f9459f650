"""Comparison checks: each theorem is evaluated as LHS against RHS on a radius grid.

Curvature is integrated along geodesics in the parallel frame built by
transport and over the sphere of initial directions with a rule from
quadrature. Every check returns a ComparisonReport whose rows carry lhs, rhs,
slack (>= 0 when the inequality holds) and a numerical error bound.

Radial integrals use a fixed table of Chebyshev-Lobatto nodes: the interval
[0, max r] is cut at every grid radius (and into pieces of bounded length),
and cumulative integrals on each piece come from one precomputed matrix. Grid
radii are nodes, so nothing is interpolated.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Callable, Sequence

import numpy as np
from scipy import integrate as _integrate

from .geometry_core import (
    Embedding,
    GeometryError,
    ManifoldChart,
    NearBoundaryError,
    NotJInvariantError,
    _complete_basis,
    c_tensor,
    riemann,
    riemann_batch,
)
from .quadrature import parallel_map, sphere_area, sphere_rule
from .scalar_models import CurvatureProfile, ScalarBasis, first_zero, solve_basis
from .transport import (
    JacobiMatrixSolution,
    LeftChartDomainError,
    PastConjugatePointError,
    curvature_matrix,
    first_conjugate_radius,
    jacobi,
    shoot_geodesic,
    shoot_many,
    shoot_normal,
    shoot_normal_many,
)

__all__ = [
    "SCHEMA_VERSION",
    "ORIENTATION",
    "ConfigError",
    "LambdaZeroCrossingError",
    "AsymmetricProfileError",
    "NonBracketingError",
    "PhiNotMonotoneError",
    "YVanishesError",
    "GridTooCoarseError",
    "SubmanifoldNotComplexError",
    "QuadSettings",
    "RadialTable",
    "Row",
    "Hypothesis",
    "ComparisonReport",
    "check_laplacian_point",
    "check_area_volume",
    "check_isoperimetric",
    "check_bonnet_myers",
    "extract_conjugate_profile",
    "check_tube",
    "check_kahler_point",
    "check_kahler_myers",
    "check_kahler_tube",
    "check_gunther_point",
    "check_gunther_tube",
    "check_kahler_gunther",
    "check_scalar_expansion",
    "model_ball_eigenvalue",
    "model_eigenfunction",
    "check_cheng",
    "check_cheng_closed",
    "check_max_diameter",
    "check_radial_identity",
    "jacobi_form_Q",
    "geodesic_distance",
    "clear_cache",
]

SCHEMA_VERSION = "1.0"


class ConfigError(ValueError):
    """A scenario or precondition problem (not a verdict on the theorem)."""


class LambdaZeroCrossingError(ConfigError):
    pass


class AsymmetricProfileError(ConfigError):
    pass


class PhiNotMonotoneError(ConfigError):
    pass


class SubmanifoldNotComplexError(ConfigError):
    pass


class NonBracketingError(ValueError):
    pass


class YVanishesError(ValueError):
    pass


class GridTooCoarseError(ValueError):
    pass


# Slack orientation of every row kind. "upper": the theorem bounds lhs from
# above (slack = rhs - lhs); "lower": slack = lhs - rhs; "equality": slack =
# -|lhs - rhs|.
ORIENTATION: dict[str, dict[str, str]] = {
    "laplacian": {"laplacian": "upper", "density": "upper", "density_constant_k": "upper",
                  "weight_identity": "equality"},
    "area_volume": {"area": "upper", "volume": "upper", "area_ratio_derivative": "upper",
                    "area_ratio_derivative_sphere": "upper", "volume_ratio_derivative": "upper",
                    "volume_ratio_derivative_sphere": "upper", "volume_ratio_monotone": "upper",
                    "ball_volume": "upper"},
    "isoperimetric": {"isoperimetric_ratio": "lower"},
    "bonnet_myers": {"conjugate_radius": "upper"},
    "conjugate_profile": {"profile_integral": "lower"},
    "tube": {"laplacian": "upper", "density": "upper", "area_fine": "upper", "volume_fine": "upper",
             "area_coarse": "upper", "f_monotone": "lower", "area_ratio_derivative": "upper",
             "volume_ratio_derivative": "upper", "area_deficit": "upper", "area_deficit_growth": "upper",
             "volume_deficit": "upper"},
    "kahler": {"laplacian": "upper", "density": "upper", "area": "upper", "volume": "upper",
               "area_ratio_derivative": "upper", "area_ratio_derivative_sphere": "upper",
               "volume_ratio_derivative": "upper", "volume_ratio_derivative_sphere": "upper"},
    "kahler_myers": {"conjugate_radius": "upper", "volume_ratio_monotone": "upper"},
    "kahler_tube": {"laplacian": "upper", "density": "upper", "area_fine": "upper", "volume_fine": "upper",
                    "area_coarse": "upper", "area_ratio_derivative": "upper",
                    "volume_ratio_derivative": "upper", "area_ratio_monotone": "upper"},
    "gunther": {"laplacian": "lower", "density": "lower", "area_ratio_derivative": "lower",
                "area_ratio_derivative_sphere": "lower", "volume_ratio_derivative": "lower",
                "volume_ratio_derivative_sphere": "lower", "isoperimetric_ratio": "upper"},
    "gunther_tube": {"laplacian": "lower", "density": "lower", "area_excess": "lower",
                     "area_excess_growth": "lower", "volume_excess": "lower"},
    "kahler_gunther": {"laplacian": "lower", "density": "lower", "area_ratio_derivative": "lower",
                       "area_ratio_derivative_sphere": "lower", "volume_ratio_derivative": "lower",
                       "volume_ratio_derivative_sphere": "lower", "volume_ratio_monotone": "lower"},
    "kahler_gunther_tube": {"laplacian": "lower", "density": "lower"},
    "scalar_expansion": {"expansion_coefficient": "equality", "r4_coefficient": "equality"},
    "cheng": {"rayleigh": "upper"},
    "cheng_closed": {"eigenvalue": "upper"},
    "max_diameter": {"ball_lower": "lower", "disjoint_balls": "upper"},
    "radial_identity": {"radial_identity": "upper", "radial_identity_boundary": "upper"},
}


# ---------------------------------------------------------------------------
# settings


@dataclass(frozen=True)
class QuadSettings:
    """Quadrature and tolerance settings shared by all checks.

    ``rtol``/``atol`` form the transport floor of every error bound
    (err = atol + rtol*scale + sphere-rule error); ``jobs`` only changes
    scheduling and never the numbers.
    """

    sphere: str = "gauss"
    degree: int = 7
    seed: int = 0
    count: int = 512
    radial_nodes: int = 16
    segment: float = 0.25
    z_nodes: int = 8
    ode_tol: float = 1e-10
    rtol: float = 1e-7
    atol: float = 1e-9
    curv_tol: float = 1e-7
    jobs: int = 1

    @classmethod
    def from_dict(cls, d: dict | None) -> "QuadSettings":
        d = dict(d or {})
        names = set(cls.__dataclass_fields__)
        bad = sorted(set(d) - names)
        if bad:
            raise ConfigError(f"unknown quadrature settings: {bad}")
        q = cls(**d)
        q.validate()
        return q

    def validate(self):
        if self.sphere not in ("gauss", "mc"):
            raise ConfigError("sphere must be 'gauss' or 'mc'")
        for name in ("degree", "count", "radial_nodes", "z_nodes", "jobs"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be positive")
        for name in ("segment", "ode_tol", "rtol", "curv_tol"):
            if not float(getattr(self, name)) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.atol < 0:
            raise ConfigError("atol must be non-negative")

    def replace(self, **kw) -> "QuadSettings":
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d.update({k: v for k, v in kw.items() if v is not None})
        return QuadSettings.from_dict(d)

    def describe(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "jobs"}
        if self.sphere == "gauss":
            d.pop("seed")
            d.pop("count")
        else:
            d.pop("degree")
        return d


# ---------------------------------------------------------------------------
# radial table

_CHEB: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _cheb(m: int):
    if m not in _CHEB:
        x = -np.cos(np.pi * np.arange(m + 1) / m)
        V = np.polynomial.chebyshev.chebvander(x, m)
        P = np.empty_like(V)
        for i in range(m + 1):
            c = np.zeros(m + 1)
            c[i] = 1.0
            P[:, i] = np.polynomial.chebyshev.chebval(x, np.polynomial.chebyshev.chebint(c, lbnd=-1))
        _CHEB[m] = (x, P @ np.linalg.inv(V))
    return _CHEB[m]


class RadialTable:
    """Chebyshev-Lobatto nodes on [0, max r] with every grid radius a segment end."""

    def __init__(self, r_grid: Sequence[float], m: int = 16, segment: float = 0.25):
        r = np.asarray(r_grid, dtype=float).reshape(-1)
        if r.size == 0 or np.any(~np.isfinite(r)) or np.any(r <= 0) or np.any(np.diff(r) <= 0):
            raise ConfigError("r_grid must be positive and strictly increasing")
        edges = [0.0]
        ends = []
        for ri in r:
            a = edges[-1]
            k = max(1, int(math.ceil((ri - a) / segment - 1e-9)))
            edges.extend((a + (ri - a) * np.arange(1, k + 1) / k).tolist())
            edges[-1] = float(ri)
            ends.append(len(edges) - 2)
        self.a = np.array(edges[:-1])
        self.b = np.array(edges[1:])
        x, C = _cheb(m)
        self.half = 0.5 * (self.b - self.a)
        self.t = 0.5 * (self.a + self.b)[:, None] + self.half[:, None] * x[None]
        self.t[:, 0] = self.a
        self.t[:, -1] = self.b
        self.C = C
        self.grid = r
        self.end = np.array(ends)
        self.m = m
        self.key = (m, float(segment), tuple(r.tolist()))

    @property
    def r_max(self) -> float:
        return float(self.grid[-1])

    @property
    def flat(self) -> np.ndarray:
        return self.t.reshape(-1)

    def shape(self, v):
        v = np.asarray(v)
        return v.reshape(self.t.shape + v.shape[1:])

    def cum(self, f):
        """Cumulative integral from 0 at every node; f has leading node axes (S, K)."""
        f = np.asarray(f, dtype=float)
        S, K = self.t.shape
        g = f.reshape(S, K, -1)
        loc = np.einsum("ij,sjk->sik", self.C, g) * self.half[:, None, None]
        tot = loc[:, -1, :]
        off = np.concatenate([np.zeros((1, g.shape[2])), np.cumsum(tot, axis=0)[:-1]], axis=0)
        return (loc + off[:, None, :]).reshape(f.shape)

    def at_grid(self, f):
        f = np.asarray(f)
        return f[self.end, -1]

    def weights_to(self, i: int):
        """Node weights (S, K) integrating over [0, grid[i]] (zero beyond)."""
        w = self.C[-1][None, :] * self.half[:, None]
        w = np.where(np.arange(self.t.shape[0])[:, None] <= self.end[i], w, 0.0)
        return w


# ---------------------------------------------------------------------------
# report types


def _num(x):
    x = float(x)
    return x if math.isfinite(x) else None


@dataclass
class Row:
    check: str
    r: float
    lhs: float
    rhs: float
    slack: float
    err: float
    orientation: str
    needs: tuple = ()
    detail: dict = field(default_factory=dict)
    verdict: str = ""

    def to_dict(self) -> dict:
        out = {"check": self.check, "r": _num(self.r), "lhs": _num(self.lhs), "rhs": _num(self.rhs),
               "slack": _num(self.slack), "err": _num(self.err), "orientation": self.orientation,
               "verdict": self.verdict}
        if self.needs:
            out["needs"] = list(self.needs)
        if self.detail:
            out["detail"] = self.detail
        return out


@dataclass
class Hypothesis:
    name: str
    statement: str
    status: str  # "sampled", "checked" or "assumed"
    kind: str = "hypothesis"  # "hypothesis" flips the report, "gate" only switches rows off
    holds: bool | None = None
    worst: float | None = None
    err: float | None = None
    samples: int = 0

    def to_dict(self) -> dict:
        return {"name": self.name, "statement": self.statement, "status": self.status, "kind": self.kind,
                "holds": self.holds, "worst": None if self.worst is None else _num(self.worst),
                "err": None if self.err is None else _num(self.err), "samples": self.samples}


@dataclass
class ComparisonReport:
    theorem: str
    descriptors: dict
    r_grid: list
    rows: list
    hypotheses: list
    quadrature: dict
    errors: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    wall_time: float = 0.0
    timestamp: str = ""

    @property
    def verdict(self) -> str:
        if any(r.verdict == "fail" for r in self.rows):
            return "fail"
        if any(h.kind == "hypothesis" and h.holds is False for h in self.hypotheses):
            return "hypothesis-violated"
        return "pass"

    def finalize(self):
        status = {h.name: h for h in self.hypotheses}
        for row in self.rows:
            ok = row.slack >= -row.err
            gate_off = any(status[n].kind == "gate" and status[n].holds is False for n in row.needs if n in status)
            hyp_off = any(status[n].kind == "hypothesis" and status[n].holds is False
                          for n in row.needs if n in status)
            if gate_off:
                row.verdict = "not-applicable"
            elif ok:
                row.verdict = "pass"
            elif hyp_off:
                row.verdict = "hypothesis-violated"
            else:
                row.verdict = "fail"
        return self

    def min_slack(self, check: str | None = None) -> float:
        vals = [r.slack for r in self.rows if check is None or r.check == check]
        return min(vals) if vals else math.nan

    def select(self, check: str) -> list:
        return [r for r in self.rows if r.check == check]

    def to_dict(self, include_run: bool = True) -> dict:
        out = {
            "schema_version": SCHEMA_VERSION,
            "theorem": self.theorem,
            "verdict": self.verdict,
            "descriptors": self.descriptors,
            "r_grid": [_num(r) for r in self.r_grid],
            "quadrature": self.quadrature,
            "hypotheses": [h.to_dict() for h in self.hypotheses],
            "rows": [r.to_dict() for r in self.rows],
            "errors": {k: _num(v) if isinstance(v, (int, float)) else v for k, v in self.errors.items()},
            "diagnostics": self.diagnostics,
        }
        if include_run:
            out["run"] = {"timestamp": self.timestamp, "wall_time": round(self.wall_time, 6)}
        return out

    def to_json(self, include_run: bool = True, indent: int | None = 1) -> str:
        return json.dumps(self.to_dict(include_run), indent=indent, sort_keys=False)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["r", "lhs", "rhs", "slack", "err", "check", "verdict"])
        for r in self.rows:
            w.writerow([_fmt(r.r), _fmt(r.lhs), _fmt(r.rhs), _fmt(r.slack), _fmt(r.err), r.check, r.verdict])
        return buf.getvalue()

    def summary_line(self) -> str:
        worst = self.min_slack()
        n_fail = sum(r.verdict == "fail" for r in self.rows)
        return (f"{self.theorem:<18} {self.verdict:<20} rows={len(self.rows):<4} fail={n_fail:<3} "
                f"min_slack={worst:+.3e}")


def _fmt(x) -> str:
    x = float(x)
    return repr(x) if math.isfinite(x) else ""


class _Builder:
    def __init__(self, theorem: str, quad: "QuadSettings", descriptors: dict, r_grid):
        self.theorem = theorem
        self.quad = quad
        self.rows: list[Row] = []
        self.hyps: list[Hypothesis] = []
        self.desc = descriptors
        self.grid = [float(r) for r in r_grid]
        self.diag: dict = {}
        self.errors: dict = {}
        self.t0 = time.perf_counter()

    def orient(self, check):
        try:
            return ORIENTATION[self.theorem][check]
        except KeyError:
            raise KeyError(f"no orientation for {self.theorem}/{check}") from None

    def _slack(self, o, lhs, rhs):
        if o == "upper":
            return rhs - lhs
        if o == "lower":
            return lhs - rhs
        return -abs(lhs - rhs)

    def row(self, check, r, lhs, rhs, slack=None, extra_err=0.0, err=None, needs=(), detail=None, scale=None):
        o = self.orient(check)
        lhs, rhs = float(lhs), float(rhs)
        if slack is None:
            slack = self._slack(o, lhs, rhs)
        if err is None:
            sc = max(abs(lhs), abs(rhs)) if scale is None else scale
            if not math.isfinite(sc):
                sc = 0.0
            err = self.quad.atol + self.quad.rtol * sc + float(extra_err)
        self.rows.append(Row(check, float(r), lhs, rhs, float(slack), float(err), o, tuple(needs), detail or {}))

    def per_direction(self, check, lhs, rhs, slack=None, needs=(), radii=None):
        """lhs, rhs: (D, G); one row per radius with the tightest direction."""
        lhs = np.asarray(lhs, float)
        rhs = np.asarray(rhs, float)
        o = self.orient(check)
        if slack is None:
            slack = self._slack(o, lhs, rhs)
        err = self.quad.atol + self.quad.rtol * np.maximum(np.abs(lhs), np.abs(rhs))
        radii = self.grid if radii is None else radii
        for i, r in enumerate(radii):
            d = int(np.argmin(slack[:, i] + err[:, i]))
            self.row(check, r, lhs[d, i], rhs[d, i], slack=slack[d, i], err=err[d, i], needs=needs,
                     detail={"direction": d, "directions": int(lhs.shape[0])})

    def hyp(self, name, statement, values=None, errs=None, status="sampled", kind="hypothesis", holds=None):
        if values is not None:
            v = np.asarray(values, float).reshape(-1)
            e = np.broadcast_to(np.asarray(errs, float), np.shape(values)).reshape(-1)
            i = int(np.argmin(v + e)) if v.size else 0
            holds = bool(np.all(v >= -e)) if v.size else True
            h = Hypothesis(name, statement, status, kind, holds, float(v[i]) if v.size else None,
                           float(e[i]) if v.size else None, int(v.size))
        else:
            h = Hypothesis(name, statement, status, kind, holds)
        self.hyps.append(h)
        return h

    def report(self) -> ComparisonReport:
        rep = ComparisonReport(self.theorem, self.desc, self.grid, self.rows, self.hyps, self.quad.describe(),
                               self.errors, self.diag, time.perf_counter() - self.t0,
                               datetime.now(timezone.utc).isoformat(timespec="seconds"))
        return rep.finalize()


# ---------------------------------------------------------------------------
# helpers for inputs


def _as_profile(profile) -> CurvatureProfile | ScalarBasis:
    if isinstance(profile, (CurvatureProfile, ScalarBasis)):
        return profile
    if isinstance(profile, (int, float)):
        return CurvatureProfile.constant(float(profile))
    if isinstance(profile, dict):
        return CurvatureProfile.from_json(profile)
    raise ConfigError(f"cannot interpret comparison profile {profile!r}")


def _basis(profile, T: float) -> ScalarBasis:
    prof = _as_profile(profile)
    if isinstance(prof, ScalarBasis):
        if prof.T < T * (1 - 1e-12):
            raise ConfigError(f"basis covers [0, {prof.T}] but {T} is needed")
        return prof
    top = prof.t_max if math.isfinite(prof.t_max) else T * 1.25 + 0.5
    if top < T * (1 - 1e-12):
        raise ConfigError(f"profile defined on [0, {prof.t_max}] but radii up to {T} are needed")
    return solve_basis(prof, min(top, max(T * 1.25 + 0.5, T)), 1e-12)


def _profile_desc(profile) -> dict:
    prof = profile.profile if isinstance(profile, ScalarBasis) else _as_profile(profile)
    try:
        return prof.to_json()
    except ValueError:
        return {"kind": "callable", "label": prof.label}


def _const_k(profile) -> float:
    prof = profile.profile if isinstance(profile, ScalarBasis) else _as_profile(profile)
    if not prof.is_constant:
        raise ConfigError("this theorem is stated for constant k")
    return float(prof.k)


def _manifold_desc(M: ManifoldChart) -> dict:
    return {"label": M.label, "dim": M.dim, "spec": M.spec, "kahler": M.is_kahler}


def _check_positive(basis: ScalarBasis, r: float, what: str = "s", other=None):
    z = first_zero(basis, what, other)
    if z is not None and z <= r * (1 + 1e-12):
        raise ConfigError(f"{what}_k vanishes at {z:.6g}, not after the largest radius {r:.6g}")


def _check_inj(M: ManifoldChart, r: float, inj: float | None):
    lim = M.inj_radius if inj is None else float(inj)
    if r >= lim:
        raise ConfigError(f"radius {r:.6g} is not below the injectivity radius {lim:.6g}")


def _point(M, p):
    p = M.origin if p is None else np.asarray(p, dtype=float)
    if p.shape != (M.dim,):
        raise ConfigError(f"base point needs {M.dim} coordinates")
    if not M.inside(p[None])[0]:
        raise ConfigError("base point outside the chart domain")
    return p


# ---------------------------------------------------------------------------
# geodesic tracks

_SHOTS: dict = {}
_EVALS: dict = {}
_CACHE_LIMIT = 4096


def clear_cache():
    _SHOTS.clear()
    _EVALS.clear()


def _shot_key(M, T, tol, p=None, theta=None, emb=None, z=None, u=None):
    if emb is None:
        return ("pt", id(M), M.fd_step, p.tobytes(), theta.tobytes(), float(T), tol)
    return ("nm", id(emb), np.asarray(z, float).tobytes(), np.asarray(u, float).tobytes(), float(T), tol)


def _store(key, owner, record, init):
    jac = jacobi(record, init)
    val = (record, jac, first_conjugate_radius(jac))
    if len(_SHOTS) > _CACHE_LIMIT:
        _SHOTS.clear()
        _EVALS.clear()
    _SHOTS[key] = (owner, val)
    return val


def _shot(M, T, tol, p=None, theta=None, emb=None, z=None, u=None):
    key = _shot_key(M, T, tol, p, theta, emb, z, u)
    hit = _SHOTS.get(key)
    if hit is not None:
        return hit[1]
    try:
        if emb is None:
            record = shoot_geodesic(M, p, theta, T, tol=tol)
        else:
            record = shoot_normal(emb, z, u, T, tol=tol)
    except (LeftChartDomainError, NearBoundaryError) as exc:
        raise ConfigError(f"geodesic of length {T:.6g} leaves the chart: {exc}") from None
    return _store(key, (M, emb), record, "point" if emb is None else "adapted")


_BATCH = 64


def _prefetch(M, T, quad, p=None, thetas=None, emb=None, items=None):
    """Shoot all uncached geodesics in fixed-size batches, then solve Jacobi fields."""
    tol = quad.ode_tol
    if emb is None:
        todo = [th for th in thetas if _shot_key(M, T, tol, p, th) not in _SHOTS]
    else:
        todo = [it for it in items if _shot_key(M, T, tol, emb=emb, z=it[0], u=it[1]) not in _SHOTS]
    records = []
    try:
        for i in range(0, len(todo), _BATCH):
            chunk = todo[i:i + _BATCH]
            if emb is None:
                records += shoot_many(M, p, chunk, T, tol=tol)
            else:
                records += shoot_normal_many(emb, chunk, T, tol=tol)
    except (LeftChartDomainError, NearBoundaryError) as exc:
        raise ConfigError(f"geodesic of length {T:.6g} leaves the chart: {exc}") from None

    def solve(args):
        item, rec = args
        if emb is None:
            key = _shot_key(M, T, tol, p, item)
        else:
            key = _shot_key(M, T, tol, emb=emb, z=item[0], u=item[1])
        _store(key, (M, emb), rec, "point" if emb is None else "adapted")

    parallel_map(solve, list(zip(todo, records)), quad.jobs)


@dataclass
class _Track:
    t: np.ndarray
    R: np.ndarray
    J: np.ndarray
    Jp: np.ndarray
    Jf: np.ndarray | None
    A: np.ndarray
    ell: int
    conj: float | None
    fd_err: float
    weight: float = 1.0
    xz: np.ndarray | None = None


def _frame_J(M, record):
    if not M.is_kahler:
        return None
    E0 = record.frames[0]
    g = M.metric_at(record.xs[0])
    return E0.T @ g @ M.J(record.xs[0]) @ E0


def _make_track(M, radial: RadialTable, tol, p=None, theta=None, emb=None, z=None, u=None,
                allow_end: bool = False) -> _Track:
    T = radial.r_max
    record, jac, conj = _shot(M, T, tol, p, theta, emb, z, u)
    if conj is not None and not (allow_end and conj >= T * (1 - 1e-7)):
        what = "focal" if emb is not None and emb.ell else "conjugate"
        raise PastConjugatePointError(f"{what} point at t={conj:.6g} within the radius range (max {T:.6g})")
    ekey = (id(record), radial.key)
    hit = _EVALS.get(ekey)
    if hit is None:
        ts = radial.flat
        x, v, E = record.state(ts)
        Rm, _, _, _, _, err = riemann_batch(M, x)
        Ef = E[:, :, :-1]
        Rv = np.einsum("pijkl,pj,pk->pil", Rm, v, v)
        R = np.einsum("pia,pil,plb->pab", Ef, Rv, Ef)
        R = 0.5 * (R + np.swapaxes(R, 1, 2))
        J, Jp = jac.at(ts)
        hit = (radial.shape(R), radial.shape(J), radial.shape(Jp), float(err))
        _EVALS[ekey] = (record, hit)
    else:
        hit = hit[1]
    R, J, Jp, err = hit
    A = record.A_theta if record.A_theta is not None else np.zeros((0, 0))
    return _Track(radial.t, R, J, Jp, _frame_J(M, record), A, record.ell, conj, err,
                  xz=None if z is None else np.asarray(z, float))


@dataclass
class _Sample:
    tracks: list
    weights: np.ndarray
    kind: str
    lower: "_Sample | None" = None
    info: dict = field(default_factory=dict)


def _sphere(d: int, quad: QuadSettings, min_degree: int = 1):
    if quad.sphere == "gauss":
        return sphere_rule(d, "gauss", max(quad.degree, min_degree))
    return sphere_rule(d, "mc", quad.seed, quad.count)


def _point_sample(M, p, radial, quad, allow_end=False) -> _Sample:
    n = M.dim
    g = M.metric_at(p)
    B = _complete_basis(g, np.zeros((n, 0)))
    rule = _sphere(n - 1, quad)

    def build(rule):
        thetas = rule.nodes @ B.T
        _prefetch(M, radial.r_max, quad, p=p, thetas=list(thetas))
        tracks = parallel_map(lambda th: _make_track(M, radial, quad.ode_tol, p=p, theta=th, allow_end=allow_end),
                              list(thetas), quad.jobs)
        return _Sample(tracks, np.asarray(rule.weights, float), "gauss" if rule.kind == "product-gauss" else "mc",
                       info={"sphere": rule.describe()})

    main = build(rule)
    if rule.lower is not None:
        main.lower = build(rule.lower)
    return main


def _tube_sample(emb: Embedding, radial, quad) -> _Sample:
    M = emb.M
    d = M.dim - emb.ell - 1
    rule = _sphere(d, quad)

    def build(zm, rule):
        Z, WZ = emb.rule(zm)
        items = []
        weights = []
        for z, wz in zip(Z, WZ):
            _, _, _, vol = emb.frames(z)
            for u, wu in zip(rule.nodes, rule.weights):
                items.append((z, u))
                weights.append(wz * vol * wu)
        _prefetch(M, radial.r_max, quad, emb=emb, items=items)
        tracks = parallel_map(lambda it: _make_track(M, radial, quad.ode_tol, emb=emb, z=it[0], u=it[1]),
                              items, quad.jobs)
        return _Sample(tracks, np.asarray(weights, float), "gauss" if rule.kind == "product-gauss" else "mc",
                       info={"normal_sphere": rule.describe(), "z_nodes": int(len(Z))})

    main = build(quad.z_nodes, rule)
    low_rule = rule.lower if rule.lower is not None else rule
    if rule.kind == "product-gauss":
        main.lower = build(max(2, quad.z_nodes // 2), low_rule)
    return main


def _with_error(fn: Callable, sample: _Sample, curv_tol: float = 0.0):
    """fn(tracks, weights) -> dict of arrays; returns (values, error estimates).

    When the values carry unit-curvature scales U_A / U_V, curv_tol times those
    scales is added to the ratio-derivative errors (finite-difference noise).
    """
    val = fn(sample.tracks, sample.weights)
    if sample.kind == "gauss" and sample.lower is not None:
        low = fn(sample.lower.tracks, sample.lower.weights)
        err = {k: np.abs(np.asarray(val[k]) - np.asarray(low[k])) for k in val}
    elif sample.kind == "mc" and len(sample.tracks) >= 4:
        # split-half estimate of the standard error
        ev = fn(sample.tracks[0::2], 2.0 * sample.weights[0::2])
        od = fn(sample.tracks[1::2], 2.0 * sample.weights[1::2])
        err = {k: 0.5 * np.abs(np.asarray(ev[k]) - np.asarray(od[k])) for k in val}
    else:
        err = {k: np.zeros_like(np.asarray(val[k], float)) for k in val}
    for unit, keys in (("U_A", ("D_A", "slack_D_A_lit", "slack_D_A_sph")),
                       ("U_V", ("D_V", "slack_D_V_lit", "slack_D_V_sph"))):
        if curv_tol and unit in val:
            for k in keys:
                err[k] = err[k] + curv_tol * np.abs(val[unit])
    return val, err


# ---------------------------------------------------------------------------
# block analysis (upper-bound theorems)


@dataclass(frozen=True)
class _Block:
    """Frame indices compared against the weight u (u = s_k or c_k + lam s_k)."""

    name: str
    idx: tuple
    kind: str
    basis: ScalarBasis
    lam: float = 0.0

    def funcs(self, t):
        b = self.basis
        s, ds, c, dc = b.s(t), b.ds(t), b.c(t), b.dc(t)
        kap = np.asarray(b.k(t), dtype=float) * np.ones_like(t)
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.kind == "s":
                # U is an antiderivative of 1/u^2, V = U u^2
                return s, ds, -c / s, -c * s, kap
            u = c + self.lam * s
            return u, dc + self.lam * ds, s / u, s * u, kap


def _logdet(J):
    if J.shape[-1] == 0:
        return np.ones(J.shape[:-2]), np.zeros(J.shape[:-2])
    return np.linalg.slogdet(J)


def _trace_solve(Jp, J, mask):
    out = np.full(J.shape[:-2], np.nan)
    if J.shape[-1] == 0:
        return np.where(mask, 0.0, np.nan)
    X = np.linalg.solve(np.swapaxes(J[mask], -1, -2), np.swapaxes(Jp[mask], -1, -2))
    out[mask] = np.trace(X, axis1=-2, axis2=-1)
    return out


def _analyze(tr: _Track, radial: RadialTable, blocks: list) -> dict:
    t = radial.t
    pos = t > 0
    diagR = np.einsum("...ii->...i", tr.R)
    sign, logabs = _logdet(tr.J)
    F = sign * np.exp(logabs)
    logFb = np.zeros_like(t)
    lapb = np.zeros_like(t)
    psi = np.zeros_like(t)
    phi = np.zeros_like(t)
    lit = np.zeros_like(t)
    lit_abs = np.zeros_like(t)
    lit_unit = np.zeros_like(t)
    Au_list, Au_abs_list, h_list, u_list = [], [], [], []
    with np.errstate(divide="ignore", invalid="ignore"):
        for b in blocks:
            nb = len(b.idx)
            if nb == 0:
                z0 = np.zeros_like(t)
                Au_list.append(z0)
                Au_abs_list.append(z0)
                h_list.append(z0)
                u_list.append(np.ones_like(t))
                continue
            u, du, U, V, kap = b.funcs(t)
            h = diagR[..., list(b.idx)].sum(-1) - nb * kap
            Au = radial.cum(u * u * h)
            Au_abs = radial.cum(u * u * np.abs(h))
            Bv = radial.cum(V * h)
            u2 = u * u
            psi += np.where(pos | (u2 > 0), Au / u2, 0.0)
            phi += np.where(pos, U * Au - Bv, 0.0)
            logFb += nb * np.log(u)
            lapb += nb * du / u
            Fl = radial.cum(F * u * u * h)
            Fa = radial.cum(np.abs(F) * u * u * np.abs(h))
            Fu = radial.cum(np.abs(F) * u * u) * nb
            lit += np.where(pos | (u2 > 0), Fl / u2, 0.0)
            lit_abs += np.where(pos | (u2 > 0), Fa / u2, 0.0)
            lit_unit += np.where(pos | (u2 > 0), Fu / u2, 0.0)
            Au_list.append(Au)
            Au_abs_list.append(Au_abs)
            h_list.append(h)
            u_list.append(u)
        psi = np.nan_to_num(psi)
        phi = np.nan_to_num(phi)
        lit = np.nan_to_num(lit)
        lit_abs = np.nan_to_num(lit_abs)
        lit_unit = np.nan_to_num(lit_unit)
        Fb = np.exp(logFb)
        rel = np.where(np.isfinite(logabs) & np.isfinite(logFb), np.expm1(logabs - logFb), 0.0)
    dF = np.where(np.isfinite(logFb), Fb * rel, 0.0)
    lap = _trace_solve(tr.Jp, tr.J, pos)
    if tr.J.shape[-1] and np.any(sign[pos] <= 0):
        raise PastConjugatePointError("Jacobi determinant changes sign within the radius range")
    return {"F": F, "Fb": Fb, "dF": dF, "rel": rel, "logF": logabs, "logFb": logFb, "lap": lap, "lapb": lapb,
            "psi": psi, "phi": phi, "lit": lit, "lit_abs": lit_abs, "lit_unit": lit_unit, "Au": Au_list, "Au_abs": Au_abs_list,
            "h": h_list, "u": u_list}


def _aggregate(datas: list, w: np.ndarray, radial: RadialTable) -> dict:
    """Sphere (or Fermi) integrals of the per-direction node arrays, at the grid."""
    t = radial.t
    pos = t > 0

    def X(key, f=None):
        arr = np.stack([d[key] if f is None else f(d) for d in datas])
        return np.einsum("d,d...->...", w, arr)

    A = X("F")
    Ab = X("Fb")
    dA = X("dF")
    V, Vb, dV = radial.cum(A), radial.cum(Ab), radial.cum(dA)
    area_exc = X(None, lambda d: d["Fb"] * np.expm1(-d["phi"]))
    vol_exc = radial.cum(area_exc)
    FL = X(None, lambda d: np.where(pos, d["F"] * (d["lap"] - d["lapb"]), 0.0))
    Gs = X(None, lambda d: d["F"] * d["psi"])
    Gl = X("lit")
    Gl_abs = X("lit_abs")
    Gl_unit = X("lit_unit")
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(pos & (Ab > 0), Vb / Ab, 0.0)
    Il = radial.cum(ratio * Gl)
    Is = radial.cum(ratio * Gs)
    g = radial.at_grid
    Ag, Abg, dAg, Vg, Vbg, dVg = g(A), g(Ab), g(dA), g(V), g(Vb), g(dV)
    out = {
        "A": Ag, "Ab": Abg, "dA": dAg, "V": Vg, "Vb": Vbg, "dV": dVg,
        "area_bound": Abg + g(area_exc), "area_slack": g(area_exc) - dAg,
        "vol_bound": Vbg + g(vol_exc), "vol_slack": g(vol_exc) - dVg,
        "D_A": g(FL) / Abg, "R_lit": -g(Gl) / Abg, "R_sph": -g(Gs) / Abg,
        "D_V": (dAg * Vbg - dVg * Abg) / Vbg ** 2,
        "RV_lit": -(Abg / Vbg ** 2) * g(Il), "RV_sph": -(Abg / Vbg ** 2) * g(Is),
        "iso": Vg / Ag, "iso_bar": Vbg / Abg, "iso_slack": (Vbg / Abg) * (dVg / Vbg - dAg / Abg) / (1 + dAg / Abg),
        "Gl_nodes": Gl[pos], "Gl_abs_nodes": Gl_abs[pos], "Gl_unit_nodes": Gl_unit[pos], "Gl": g(Gl), "Gl_abs": g(Gl_abs),
    }
    out["U_A"] = g(Gl_unit) / Abg
    out["U_V"] = (Abg / Vbg ** 2) * g(radial.cum(ratio * Gl_unit))
    out["slack_D_A_lit"] = out["R_lit"] - out["D_A"]
    out["slack_D_A_sph"] = out["R_sph"] - out["D_A"]
    out["slack_D_V_lit"] = out["RV_lit"] - out["D_V"]
    out["slack_D_V_sph"] = out["RV_sph"] - out["D_V"]
    return out


def _hyp_nodes(radial):
    return radial.t[radial.t > 0]


# ---------------------------------------------------------------------------
# Riemannian point theorems


def _riemann_blocks(M, basis):
    return [_Block("ric", tuple(range(M.dim - 1)), "s", basis)]


def _point_setup(M, p, profile, r_grid, quad, inj=None):
    quad = quad or QuadSettings()
    p = _point(M, p)
    radial = RadialTable(r_grid, quad.radial_nodes, quad.segment)
    _check_inj(M, radial.r_max, inj)
    basis = _basis(profile, radial.r_max)
    _check_positive(basis, radial.r_max)
    return quad, p, radial, basis


def _desc_point(M, p, profile, extra=None):
    d = {"manifold": _manifold_desc(M), "point": [float(x) for x in p], "profile": _profile_desc(profile)}
    if extra:
        d.update(extra)
    return d


def _assumed_cut(b, inj):
    b.hyp("no_cut_point", "there is no cut point of p along the sampled geodesics on [0, r] "
          f"(radii below the asserted injectivity radius {inj})", status="assumed", holds=None)


def check_laplacian_point(M: ManifoldChart, p, profile, r_grid, quad: QuadSettings | None = None,
                          inj: float | None = None) -> ComparisonReport:
    """Laplacian of d_p and the volume-density bound along each sampled direction."""
    quad, p, radial, basis = _point_setup(M, p, profile, r_grid, quad, inj)
    b = _Builder("laplacian", quad, _desc_point(M, p, profile), radial.grid)
    _assumed_cut(b, inj if inj is not None else M.inj_radius)
    b.hyp("s_positive", "s_k > 0 on (0, max r]", status="checked", holds=True)
    sample = _point_sample(M, p, radial, quad)
    blocks = _riemann_blocks(M, basis)
    datas = [_analyze(tr, radial, blocks) for tr in sample.tracks]
    g = radial.at_grid
    s_r = basis.s(radial.grid)
    lap = np.array([g(d["lap"]) for d in datas])
    rhs = np.array([g(d["lapb"] - d["psi"]) for d in datas])
    b.per_direction("laplacian", lap, rhs)
    F = np.array([g(d["F"]) for d in datas])
    Fb = g(datas[0]["Fb"])
    bound = Fb * np.exp(-np.array([g(d["phi"]) for d in datas]))
    slack = np.array([Fb * (np.expm1(-g(d["phi"])) - g(d["rel"])) for d in datas])
    b.per_direction("density", F, bound, slack)
    prof = basis.profile
    if prof.is_constant:
        # single-integral form with the weight s(t) s(r - t) / s(r)
        psi2 = np.zeros((len(datas), radial.grid.size))
        for i, r in enumerate(radial.grid):
            W = radial.weights_to(i)
            tt = np.minimum(radial.t, r)
            kern = basis.s(tt) * basis.s(r - tt) / s_r[i]
            for j, d in enumerate(datas):
                psi2[j, i] = float(np.sum(W * kern * d["h"][0]))
        phi = np.array([g(d["phi"]) for d in datas])
        bound2 = Fb * np.exp(-psi2)
        slack2 = np.array([Fb * (np.expm1(-psi2[j]) - g(d["rel"])) for j, d in enumerate(datas)])
        b.per_direction("density_constant_k", F, bound2, slack2)
        dev = np.abs(phi - psi2)
        for i, r in enumerate(radial.grid):
            j = int(np.argmax(dev[:, i]))
            b.row("weight_identity", r, phi[j, i], psi2[j, i], err=1e-9 * max(1.0, abs(phi[j, i])),
                  detail={"direction": j})
        b.diag["weight_identity_max_dev"] = float(np.max(dev))
    b.errors = {"fd_curvature": max(t.fd_err for t in sample.tracks), "ode_tol": quad.ode_tol}
    b.diag["directions"] = len(sample.tracks)
    return b.report()


def _area_rows(b, agg, err, grid, conditional, literal_label="literal"):
    for i, r in enumerate(grid):
        b.row("area", r, agg["A"][i], agg["area_bound"][i], slack=agg["area_slack"][i], extra_err=err["area_slack"][i])
        b.row("volume", r, agg["V"][i], agg["vol_bound"][i], slack=agg["vol_slack"][i], extra_err=err["vol_slack"][i])
        b.row("area_ratio_derivative", r, agg["D_A"][i], agg["R_lit"][i], slack=agg["slack_D_A_lit"][i],
              extra_err=err["slack_D_A_lit"][i], detail={"form": literal_label})
        b.row("area_ratio_derivative_sphere", r, agg["D_A"][i], agg["R_sph"][i], slack=agg["slack_D_A_sph"][i],
              extra_err=err["slack_D_A_sph"][i], detail={"form": "sphere-weighted"})
        b.row("volume_ratio_derivative", r, agg["D_V"][i], agg["RV_lit"][i], slack=agg["slack_D_V_lit"][i],
              extra_err=err["slack_D_V_lit"][i], detail={"form": literal_label})
        b.row("volume_ratio_derivative_sphere", r, agg["D_V"][i], agg["RV_sph"][i], slack=agg["slack_D_V_sph"][i],
              extra_err=err["slack_D_V_sph"][i], detail={"form": "sphere-weighted"})


def _sign_hyp(b, agg, err, quad, name, statement, kind="hypothesis", sign=1.0):
    vals = sign * agg["Gl_nodes"]
    # floor for finite-difference noise in the curvature: curv_tol per unit of |R_hat|
    errs = quad.atol + quad.rtol * agg["Gl_abs_nodes"] + quad.curv_tol * agg["Gl_unit_nodes"] + err["Gl_nodes"]
    return b.hyp(name, statement, vals, errs, kind=kind)


def check_area_volume(M: ManifoldChart, p, profile, r_grid, quad: QuadSettings | None = None,
                      inj: float | None = None) -> ComparisonReport:
    """Area/volume estimates, ratio-derivative bounds and conditional monotonicity."""
    quad, p, radial, basis = _point_setup(M, p, profile, r_grid, quad, inj)
    b = _Builder("area_volume", quad, _desc_point(M, p, profile), radial.grid)
    _assumed_cut(b, inj if inj is not None else M.inj_radius)
    sample = _point_sample(M, p, radial, quad)
    blocks = _riemann_blocks(M, basis)
    datas = {id(tr): _analyze(tr, radial, blocks) for tr in _all_tracks(sample)}
    agg, err = _with_error(lambda trs, w: _aggregate([datas[id(t)] for t in trs], w, radial), sample, quad.curv_tol)
    _area_rows(b, agg, err, radial.grid, ())
    hname = "ball_ricci_sign"
    _sign_hyp(b, agg, err, quad, hname,
              "int over B_g(rho) of Ric_hat_k(s_k(t) d_t) dV >= 0 for rho in (0, max r] (sampled at radial nodes)")
    for i, r in enumerate(radial.grid):
        b.row("volume_ratio_monotone", r, agg["D_V"][i], 0.0, slack=-agg["D_V"][i], extra_err=err["D_V"][i],
              needs=(hname,), scale=abs(agg["D_V"][i]))
        b.row("ball_volume", r, agg["V"][i], agg["Vb"][i], slack=-agg["dV"][i], extra_err=err["dV"][i],
              needs=(hname,))
    b.errors = {"fd_curvature": max(t.fd_err for t in sample.tracks), "ode_tol": quad.ode_tol,
                "sphere_max": float(max(np.max(np.abs(v)) for k, v in err.items() if k.startswith("slack")))}
    b.diag["volume_excess_ratio"] = [float(x) for x in agg["dV"] / agg["Vb"]]
    b.diag["directions"] = len(sample.tracks)
    return b.report()


def _all_tracks(sample):
    out = list(sample.tracks)
    if sample.lower is not None:
        out += sample.lower.tracks
    return out


def check_isoperimetric(M: ManifoldChart, p, profile, r_grid, quad: QuadSettings | None = None,
                        inj: float | None = None) -> ComparisonReport:
    """|B|/|S| >= |B_bar|/|S_bar| under the sampled sign hypothesis."""
    quad, p, radial, basis = _point_setup(M, p, profile, r_grid, quad, inj)
    b = _Builder("isoperimetric", quad, _desc_point(M, p, profile), radial.grid)
    _assumed_cut(b, inj if inj is not None else M.inj_radius)
    sample = _point_sample(M, p, radial, quad)
    blocks = _riemann_blocks(M, basis)
    datas = {id(tr): _analyze(tr, radial, blocks) for tr in _all_tracks(sample)}
    agg, err = _with_error(lambda trs, w: _aggregate([datas[id(t)] for t in trs], w, radial), sample, quad.curv_tol)
    hname = "ball_ricci_sign"
    _sign_hyp(b, agg, err, quad, hname,
              "int over B_g(rho) of Ric_hat_k(s_k(t) d_t) dV >= 0 for rho in (0, max r] (sampled at radial nodes)")
    for i, r in enumerate(radial.grid):
        b.row("isoperimetric_ratio", r, agg["iso"][i], agg["iso_bar"][i], slack=agg["iso_slack"][i],
              extra_err=err["iso_slack"][i], needs=(hname,))
    return b.report()


# ---------------------------------------------------------------------------
# conjugate points


def _reach_shot(M, p, theta, T, tol):
    """Shoot as far as the chart allows (up to T); returns (record, jac, reached length)."""
    last = None
    for j in range(8):
        L = T if j == 0 else T - 5e-3 * max(1.0, T) * 2 ** (j - 1)
        if L <= 0:
            break
        try:
            rec = shoot_geodesic(M, p, theta, L, tol=tol)
            return rec, jacobi(rec, "point"), L
        except (LeftChartDomainError, NearBoundaryError, GeometryError) as exc:
            last = exc
    raise ConfigError(f"geodesic cannot be followed inside the chart: {last}")


def _extrapolated_zero(jac: JacobiMatrixSolution, L: float):
    """First-order estimate of where det J vanishes beyond L."""
    J, Jp = jac.at(L)
    mu = np.linalg.eigvals(np.linalg.solve(J, Jp))
    cand = [-1.0 / m.real for m in mu if abs(m.imag) < 1e-9 and m.real < 0]
    return L + min(cand) if cand else None


def _conj_search(M, p, theta, r0, search, tol):
    T = max(search, r0 + max(1e-3, 0.01 * r0))
    rec, jac, L = _reach_shot(M, p, theta, T, tol)
    conj = first_conjugate_radius(jac)
    how = "located"
    if conj is None and L < T:
        est = _extrapolated_zero(jac, L)
        if est is not None and est - L < 0.05:
            conj, how = est, "extrapolated"
    return rec, jac, conj, how, L


def check_bonnet_myers(M: ManifoldChart, p, profile, directions=None, quad: QuadSettings | None = None,
                       search: float | None = None) -> ComparisonReport:
    """Conjugate radius <= r0 wherever the finitary integral condition holds."""
    quad = quad or QuadSettings()
    p = _point(M, p)
    prof = _as_profile(profile)
    T0 = prof.T if isinstance(prof, ScalarBasis) else (prof.t_max if math.isfinite(prof.t_max) else 40.0)
    basis0 = _basis(profile, T0)
    r0 = first_zero(basis0)
    if r0 is None:
        raise ConfigError("s_k has no positive zero; the theorem needs r0")
    g = M.metric_at(p)
    if directions is None:
        B = _complete_basis(g, np.zeros((M.dim, 0)))
        dirs = _sphere(M.dim - 1, quad).nodes @ B.T
    else:
        dirs = []
        for v in directions:
            v = np.asarray(v, float)
            dirs.append(v / math.sqrt(v @ g @ v))
        dirs = np.array(dirs)
    search = r0 if search is None else float(search)
    grid = sorted({r0 * (1 - 2.0 ** -j) for j in range(1, 9)} | {r0})
    radial = RadialTable(grid, quad.radial_nodes, quad.segment)
    b = _Builder("bonnet_myers", quad, _desc_point(M, p, profile, {"r0": r0, "search": search}), [r0])
    diag = []

    def one(theta):
        rec, jac, conj, how, L = _conj_search(M, p, theta, r0, search, quad.ode_tol)
        ts = radial.flat
        R = radial.shape(curvature_matrix(rec, np.minimum(ts, L)))
        h = np.trace(R, axis1=-2, axis2=-1) - (M.dim - 1) * basis0.k(radial.t)
        s = basis0.s(radial.t)
        Ic = radial.cum(s * s * h)
        Ia = radial.cum(s * s * (np.abs(h) + quad.curv_tol * (M.dim - 1) / quad.rtol))
        return conj, how, L, radial.at_grid(Ic), radial.at_grid(Ia)

    res = parallel_map(one, list(dirs), quad.jobs)
    sr = basis0.s(radial.grid)
    dsr = basis0.ds(radial.grid)
    for i, (conj, how, L, Ic, Ia) in enumerate(res):
        if L < r0 * (1 - 1e-9):
            note = f"integral evaluated up to {L:.6g} (chart limit)"
        else:
            note = ""
        val = Ic[-1]
        h = b.hyp(f"finitary_condition[{i}]", "int_0^r0 Ric_hat_k(s_k(t) gamma'(t)) dt >= 0 along this direction",
                  np.array([val]), np.array([quad.atol + quad.rtol * Ia[-1]]))
        lhs = math.inf if conj is None else conj
        b.row("conjugate_radius", r0, lhs, r0 + 1e-4, err=quad.atol, needs=(h.name,),
              detail={"direction": i, "conjugate": how if conj is not None else "none found", "searched_to": L,
                      **({"note": note} if note else {})})
        index = (M.dim - 1) * sr * dsr - Ic
        diag.append({"direction": [float(x) for x in dirs[i]], "integral": float(val),
                     "index_sum": {f"{r:.12g}": float(v) for r, v in zip(radial.grid, index)},
                     "index_sign_at_r0": "non-positive" if index[-1] <= quad.atol else "positive"})
    b.diag["directions"] = diag
    b.diag["r0"] = r0
    return b.report()


def extract_conjugate_profile(record, Y=None, r0: float | None = None, nodes: int = 64, tol: float = 1e-6) -> dict:
    """Scalar profile k(t) induced by a Jacobi field vanishing at 0 and r0.

    ``record`` is a GeodesicRecord (point initial data) reaching at least r0,
    or a JacobiMatrixSolution. ``Y`` is the coefficient vector c of Y = J c;
    by default the null direction of J(r0) at the first conjugate point.
    """
    jac = record if isinstance(record, JacobiMatrixSolution) else jacobi(record, "point")
    rec = jac.record
    if r0 is None:
        r0 = first_conjugate_radius(jac)
        if r0 is None:
            raise ValueError("no conjugate point along the record")
    r0 = float(r0)
    if Y is None:
        _, _, Vt = np.linalg.svd(jac.at(r0)[0])
        c = Vt[-1]
    else:
        c = np.asarray(Y, dtype=float)
    c = c / np.linalg.norm(c)  # s'(0) = |J'(0) c| = 1
    end = np.linalg.norm(jac.at(r0)[0] @ c)
    if end > 1e-5:
        raise ValueError(f"Y does not vanish at r0 (|Y(r0)| = {end:.2e})")
    x, w = np.polynomial.legendre.leggauss(nodes)
    t = 0.5 * r0 * (x + 1.0)
    w = 0.5 * r0 * w
    J, Jp = jac.at(t)
    y = J @ c
    yp = Jp @ c
    s = np.linalg.norm(y, axis=1)
    if np.any(s <= 1e-10 * np.max(s)):
        raise YVanishesError("Y vanishes inside (0, r0)")
    E = y / s[:, None]
    ds = np.einsum("pi,pi->p", yp, E)
    Ep2 = (np.einsum("pi,pi->p", yp, yp) - ds ** 2) / s ** 2
    R = curvature_matrix(rec, t)
    KE = np.einsum("pi,pij,pj->p", E, R, E)
    k = KE - Ep2
    # s^2 K_hat(E, gamma') = s^2 (K(E, gamma') - k) = s^2 |E'|^2
    integral = float(np.sum(w * s ** 2 * Ep2))
    ok = integral >= -tol
    prof = CurvatureProfile.table(np.concatenate([[0.0], t, [r0]]), np.concatenate([[k[0]], k, [k[-1]]]))
    return {"t": t, "s": s, "k": k, "E": E, "integral": integral, "holds": ok, "r0": r0, "profile": prof,
            "ds": ds}


# ---------------------------------------------------------------------------
# tubes


def _tube_setup(emb, profile, r_grid, quad, inj):
    quad = quad or QuadSettings()
    M = emb.M
    radial = RadialTable(r_grid, quad.radial_nodes, quad.segment)
    _check_inj(M, radial.r_max, inj)
    basis = _basis(profile, radial.r_max)
    _check_positive(basis, radial.r_max)
    return quad, M, radial, basis


def _tube_desc(emb, profile):
    return {"manifold": _manifold_desc(emb.M), "embedding": {"kind": emb.kind, "ell": emb.ell, "spec": emb.spec},
            "profile": _profile_desc(profile)}


def _lam(tr):
    return float(np.trace(tr.A) / tr.ell) if tr.ell else 0.0


def _f_of_h(basis, r, h, ell, d, quad):
    """f(r, h) = int_{S^d} (c(r) + h s(r) <e0, theta>)^ell dtheta."""
    rule = _sphere(d, quad, min_degree=max(ell, 1)) if d > 0 else sphere_rule(0)
    x0 = rule.nodes[:, 0]
    c, s = float(basis.c(r)), float(basis.s(r))
    return float(np.sum(rule.weights * (c + h * s * x0) ** ell))


def check_tube(emb: Embedding, profile, r_grid, quad: QuadSettings | None = None, inj: float | None = None,
               h_samples: int = 9) -> ComparisonReport:
    """Laplacian and density of d_Sigma, tube area bounds and (for H = 0) ratio derivatives."""
    quad, M, radial, basis = _tube_setup(emb, profile, r_grid, quad, inj)
    _const_k(basis)
    n, ell = M.dim, emb.ell
    d = n - ell - 1
    b = _Builder("tube", quad, _tube_desc(emb, profile), radial.grid)
    b.hyp("focal", "the first zero of c_k + lambda s_k and the focal distance lie beyond max r "
          "(user-asserted; focal points are also detected along sampled normals)", status="assumed")
    sample = _tube_sample(emb, radial, quad)
    trs = _all_tracks(sample)
    for tr in trs:
        lam = _lam(tr)
        u = basis.c(radial.t) + lam * basis.s(radial.t)
        if np.any(u[radial.t > 0] <= 0):
            raise LambdaZeroCrossingError(f"c_k + lambda s_k vanishes before {radial.r_max:.6g} (lambda={lam:.6g})")

    def blocks_for(tr):
        return [_Block("tangent", tuple(range(ell)), "c", basis, _lam(tr)),
                _Block("normal", tuple(range(ell, n - 1)), "s", basis)]

    datas = {id(tr): _analyze(tr, radial, blocks_for(tr)) for tr in trs}
    g = radial.at_grid
    main = [datas[id(tr)] for tr in sample.tracks]
    lap = np.array([g(dd["lap"]) for dd in main])
    rhs = np.array([g(dd["lapb"] - dd["psi"]) for dd in main])
    b.per_direction("laplacian", lap, rhs)
    F = np.array([g(dd["F"]) for dd in main])
    bound = np.array([g(dd["Fb"] * np.exp(-dd["phi"])) for dd in main])
    slack = np.array([g(dd["Fb"] * (np.expm1(-dd["phi"]) - dd["rel"])) for dd in main])
    b.per_direction("density", F, bound, slack)

    agg, err = _with_error(lambda ts, w: _aggregate([datas[id(t)] for t in ts], w, radial), sample, quad.curv_tol)
    hk = []
    for name, j in (("K_hat_tangent", 0), ("K_hat_normal", 1)):
        vals = np.concatenate([dd["h"][j][radial.t > 0] for dd in main]) if main else np.zeros(0)
        if ell == 0 and j == 0 or (j == 1 and d == 0):
            vals = np.zeros(0)
        hk.append(b.hyp(name, f"{name.replace('_', ' ')} >= 0 along the sampled normal geodesics",
                        vals, quad.curv_tol * (1.0 + np.abs(vals))).name)
    # |H| on the footpoint grid and the coarse bound
    Z, WZ = emb.rule(quad.z_nodes)
    Hn, vols = [], []
    for z in Z:
        x, _, _, vol = emb.frames(z)
        Hv = emb.mean_curvature(z)
        Hn.append(math.sqrt(max(Hv @ M.metric_at(x) @ Hv, 0.0)))
        vols.append(vol)
    Hn, vols = np.array(Hn), np.array(vols)
    for i, r in enumerate(radial.grid):
        sd = float(basis.s(r)) ** d
        coarse = sd * sum(wz * vz * _f_of_h(basis, r, hz, ell, d, quad) for wz, vz, hz in zip(WZ, vols, Hn))
        b.row("area_fine", r, agg["A"][i], agg["area_bound"][i], slack=agg["area_slack"][i],
              extra_err=err["area_slack"][i])
        b.row("volume_fine", r, agg["V"][i], agg["vol_bound"][i], slack=agg["vol_slack"][i],
              extra_err=err["vol_slack"][i])
        b.row("area_coarse", r, agg["A"][i], coarse, extra_err=err["A"][i], needs=tuple(hk))
        hmax = 2.0 * float(np.max(Hn)) + 1.0
        hs = np.linspace(0.0, hmax, h_samples)
        fv = [_f_of_h(basis, r, hh, ell, d, quad) for hh in hs]
        j = int(np.argmin(np.diff(fv)))
        b.row("f_monotone", r, fv[j + 1], fv[j], detail={"h": [float(hs[j]), float(hs[j + 1])]})
    minimal = float(np.max(Hn)) < 1e-7
    b.diag["max_mean_curvature"] = float(np.max(Hn))
    if minimal:
        for i, r in enumerate(radial.grid):
            b.row("area_ratio_derivative", r, agg["D_A"][i], agg["R_sph"][i], slack=agg["slack_D_A_sph"][i],
                  extra_err=err["slack_D_A_sph"][i], detail={"weight": "laplacian defect"})
            b.row("volume_ratio_derivative", r, agg["D_V"][i], agg["RV_sph"][i], slack=agg["slack_D_V_sph"][i],
                  extra_err=err["slack_D_V_sph"][i], detail={"weight": "laplacian defect"})
    # monotone-deficit statement when (log F_bar)' >= 0
    lb = np.concatenate([dd["lapb"][radial.t > 0] for dd in main])
    gate = b.hyp("log_Fbar_increasing", "(log F_bar)' >= 0 on (0, max r] for all sampled (theta, z)",
                 lb, quad.atol + quad.rtol * np.abs(lb), kind="gate").name
    Ap = np.zeros(radial.grid.size)
    Abp = np.zeros(radial.grid.size)
    for dd, w in zip(main, sample.weights):
        Ap += w * g(dd["F"] * dd["lap"])
        Abp += w * g(dd["Fb"] * dd["lapb"])
    for i, r in enumerate(radial.grid):
        b.row("area_deficit", r, agg["A"][i], agg["Ab"][i], slack=-agg["dA"][i], extra_err=err["dA"][i],
              needs=(gate,) + tuple(hk))
        b.row("area_deficit_growth", r, Ap[i], Abp[i], needs=(gate,) + tuple(hk))
        b.row("volume_deficit", r, agg["V"][i], agg["Vb"][i], slack=-agg["dV"][i], extra_err=err["dV"][i],
              needs=(gate,) + tuple(hk))
    b.errors = {"fd_curvature": max(t.fd_err for t in trs), "ode_tol": quad.ode_tol}
    b.diag["directions"] = len(sample.tracks)
    return b.report()


# ---------------------------------------------------------------------------
# Kahler point, Myers and tube


def _kahler_bases(k1, k2, T):
    b1 = _basis(k1, T)
    b2 = _basis(k2, T)
    return b1, b2


def _kahler_frame_ok(tr, lead_index: int):
    Jf = tr.Jf
    if Jf is None:
        raise ConfigError("manifold carries no Kahler structure")
    n = Jf.shape[0]
    if abs(abs(Jf[lead_index, n - 1]) - 1.0) > 1e-6:
        raise ConfigError("frame does not start with J gamma'")


def _kahler_point_blocks(M, b1, b2):
    m = M.dim - 1
    return [_Block("ric_perp", tuple(range(1, m)), "s", b1), _Block("hol", (0,), "s", b2)]


def _kdesc(M, p, k1, k2, extra=None):
    d = {"manifold": _manifold_desc(M), "point": [float(x) for x in p], "k1": _profile_desc(k1),
         "k2": _profile_desc(k2)}
    if extra:
        d.update(extra)
    return d


def check_kahler_point(M: ManifoldChart, p, k1, k2, r_grid, quad: QuadSettings | None = None,
                       inj: float | None = None) -> ComparisonReport:
    """Kahler Laplacian, density, area/volume and ratio-derivative bounds."""
    quad = quad or QuadSettings()
    if not M.is_kahler:
        raise ConfigError("check_kahler_point needs a Kahler manifold")
    p = _point(M, p)
    radial = RadialTable(r_grid, quad.radial_nodes, quad.segment)
    _check_inj(M, radial.r_max, inj)
    b1, b2 = _kahler_bases(k1, k2, radial.r_max)
    _check_positive(b1, radial.r_max)
    _check_positive(b2, radial.r_max)
    b = _Builder("kahler", quad, _kdesc(M, p, k1, k2), radial.grid)
    _assumed_cut(b, inj if inj is not None else M.inj_radius)
    sample = _point_sample(M, p, radial, quad)
    blocks = _kahler_point_blocks(M, b1, b2)
    trs = _all_tracks(sample)
    for tr in trs:
        _kahler_frame_ok(tr, 0)
    datas = {id(tr): _analyze(tr, radial, blocks) for tr in trs}
    main = [datas[id(tr)] for tr in sample.tracks]
    g = radial.at_grid
    lap = np.array([g(d["lap"]) for d in main])
    rhs = np.array([g(d["lapb"] - d["psi"]) for d in main])
    b.per_direction("laplacian", lap, rhs)
    F = np.array([g(d["F"]) for d in main])
    Fb = g(main[0]["Fb"])
    bound = Fb * np.exp(-np.array([g(d["phi"]) for d in main]))
    slack = np.array([Fb * (np.expm1(-g(d["phi"])) - g(d["rel"])) for d in main])
    b.per_direction("density", F, bound, slack)
    agg, err = _with_error(lambda ts, w: _aggregate([datas[id(t)] for t in ts], w, radial), sample, quad.curv_tol)
    _area_rows(b, agg, err, radial.grid, ())
    b.diag["volume"] = [float(v) for v in agg["V"]]
    b.diag["volume_bound"] = [float(v) for v in agg["vol_bound"]]
    b.diag["model_volume"] = [float(v) for v in agg["Vb"]]
    b.errors = {"fd_curvature": max(t.fd_err for t in trs), "ode_tol": quad.ode_tol}
    b.diag["directions"] = len(sample.tracks)
    return b.report()


def check_kahler_myers(M: ManifoldChart, p, k1, k2, directions=None, quad: QuadSettings | None = None,
                       search: float | None = None, r_grid=None) -> ComparisonReport:
    """Conjugate radius <= r0 (first zero of s_k1 s_k2) where both sampled conditions hold."""
    quad = quad or QuadSettings()
    if not M.is_kahler:
        raise ConfigError("check_kahler_myers needs a Kahler manifold")
    p = _point(M, p)
    b1, b2 = _kahler_bases(k1, k2, 40.0)
    r0 = first_zero(b1, "product", b2)
    if r0 is None:
        raise ConfigError("s_k1 s_k2 has no positive zero")
    g = M.metric_at(p)
    if directions is None:
        B = _complete_basis(g, np.zeros((M.dim, 0)))
        dirs = _sphere(M.dim - 1, quad).nodes @ B.T
    else:
        dirs = np.array([np.asarray(v, float) / math.sqrt(np.asarray(v, float) @ g @ np.asarray(v, float))
                         for v in directions])
    search = r0 if search is None else float(search)
    grid = sorted({r0 * (1 - 2.0 ** -j) for j in range(1, 9)} | {r0})
    radial = RadialTable(grid, quad.radial_nodes, quad.segment)
    b = _Builder("kahler_myers", quad, _kdesc(M, p, k1, k2, {"r0": r0}), [r0])
    blocks = _kahler_point_blocks(M, b1, b2)
    pos = radial.t > 0

    def one(theta):
        rec, jac, conj, how, L = _conj_search(M, p, theta, r0, search, quad.ode_tol)
        ts = np.minimum(radial.flat, L)
        R = radial.shape(curvature_matrix(rec, ts))
        diagR = np.einsum("...ii->...i", R)
        vals = []
        for blk in blocks:
            u, _, _, _, kap = blk.funcs(radial.t)
            nb = len(blk.idx)
            h = diagR[..., list(blk.idx)].sum(-1) - nb * kap if nb else np.zeros_like(radial.t)
            scale = np.abs(h) + quad.curv_tol * nb / quad.rtol
            vals.append((radial.cum(u * u * h)[pos], radial.cum(u * u * scale)[pos]))
        return conj, how, L, vals

    res = parallel_map(one, list(dirs), quad.jobs)
    for i, (conj, how, L, vals) in enumerate(res):
        names = []
        for (v, a), key, label in zip(vals, ("ric_perp_condition", "hol_condition"),
                                      ("int_0^r s_k1^2 Ric_perp_hat_k1 >= 0", "int_0^r s_k2^2 H_hat_{k2/2} >= 0")):
            names.append(b.hyp(f"{key}[{i}]", label + " for r in (0, r0) along this direction",
                               v, quad.atol + quad.rtol * a).name)
        lhs = math.inf if conj is None else conj
        b.row("conjugate_radius", r0, lhs, r0 + 1e-4, err=quad.atol, needs=tuple(names),
              detail={"direction": i, "conjugate": how if conj is not None else "none found", "searched_to": L})
    if r_grid is not None:
        # volume statement, evaluated literally at each grid radius
        radial2 = RadialTable(r_grid, quad.radial_nodes, quad.segment)
        if radial2.r_max >= r0:
            raise ConfigError("volume grid must stay below r0")
        sample = _point_sample(M, p, radial2, quad)
        datas = {id(tr): _analyze(tr, radial2, blocks) for tr in _all_tracks(sample)}
        agg, err = _with_error(lambda ts, w: _aggregate([datas[id(t)] for t in ts], w, radial2), sample, quad.curv_tol)
        hname = _sign_hyp(b, agg, err, quad, "ball_condition",
                          "int over B_g(r) of [(s_k1(t)/s_k1(r))^2 Ric_perp_hat_k1 + (s_k2(t)/s_k2(r))^2 "
                          "H_hat_{k2/2}] dV >= 0, checked at every radial node r").name
        for i, r in enumerate(radial2.grid):
            b.row("volume_ratio_monotone", r, agg["D_V"][i], 0.0, slack=-agg["D_V"][i], extra_err=err["D_V"][i],
                  needs=(hname,), scale=abs(agg["D_V"][i]))
        b.grid = [r0] + [float(r) for r in radial2.grid]
    b.diag["r0"] = r0
    return b.report()


def check_kahler_tube(emb: Embedding, k1, k2, r_grid, quad: QuadSettings | None = None,
                      inj: float | None = None) -> ComparisonReport:
    """Distance from a complex submanifold: Laplacian, density and tube area/volume bounds."""
    quad = quad or QuadSettings()
    M = emb.M
    if not M.is_kahler:
        raise ConfigError("check_kahler_tube needs a Kahler manifold")
    radial = RadialTable(r_grid, quad.radial_nodes, quad.segment)
    _check_inj(M, radial.r_max, inj)
    b1, b2 = _kahler_bases(k1, k2, radial.r_max)
    _check_positive(b1, radial.r_max)
    _check_positive(b1, radial.r_max, "c")
    _check_positive(b2, radial.r_max)
    Z, WZ = emb.rule(quad.z_nodes)
    try:
        for z in Z:
            emb.check_complex(z)
    except NotJInvariantError as exc:
        raise SubmanifoldNotComplexError(str(exc)) from None
    n2, l2 = M.dim, emb.ell
    desc = {"manifold": _manifold_desc(M), "embedding": {"kind": emb.kind, "ell": emb.ell, "spec": emb.spec},
            "k1": _profile_desc(k1), "k2": _profile_desc(k2)}
    b = _Builder("kahler_tube", quad, desc, radial.grid)
    b.hyp("complex", "J T Sigma = T Sigma (checked to 1e-8 on the footpoint grid)", status="checked", holds=True)
    sample = _tube_sample(emb, radial, quad)
    trs = _all_tracks(sample)
    for tr in trs:
        _kahler_frame_ok(tr, l2)
    blocks = [_Block("tangent", tuple(range(l2)), "c", b1), _Block("hol", (l2,), "s", b2),
              _Block("normal", tuple(range(l2 + 1, n2 - 1)), "s", b1)]
    datas = {id(tr): _analyze(tr, radial, blocks) for tr in trs}
    main = [datas[id(tr)] for tr in sample.tracks]
    g = radial.at_grid
    lap = np.array([g(d["lap"]) for d in main])
    rhs = np.array([g(d["lapb"] - d["psi"]) for d in main])
    b.per_direction("laplacian", lap, rhs)
    F = np.array([g(d["F"]) for d in main])
    bound = np.array([g(d["Fb"] * np.exp(-d["phi"])) for d in main])
    slack = np.array([g(d["Fb"] * (np.expm1(-d["phi"]) - d["rel"])) for d in main])
    b.per_direction("density", F, bound, slack)
    agg, err = _with_error(lambda ts, w: _aggregate([datas[id(t)] for t in ts], w, radial), sample, quad.curv_tol)
    names = []
    for j, label in enumerate(("H_hat^l_k1 (tangent)", "H_hat_{k2/2}", "H_hat^{n-l-1}_k1 (normal)")):
        vals = np.concatenate([d["h"][j][radial.t > 0] for d in main])
        if len(blocks[j].idx) == 0:
            vals = np.zeros(0)
        names.append(b.hyp(f"hat_sign_{j}", f"{label} >= 0 along the sampled normal geodesics", vals,
                           quad.curv_tol * (1.0 + np.abs(vals))).name)
    for i, r in enumerate(radial.grid):
        b.row("area_fine", r, agg["A"][i], agg["area_bound"][i], slack=agg["area_slack"][i],
              extra_err=err["area_slack"][i])
        b.row("volume_fine", r, agg["V"][i], agg["vol_bound"][i], slack=agg["vol_slack"][i],
              extra_err=err["vol_slack"][i])
        b.row("area_coarse", r, agg["A"][i], agg["Ab"][i], slack=-agg["dA"][i], extra_err=err["dA"][i],
              needs=tuple(names))
        b.row("area_ratio_derivative", r, agg["D_A"][i], agg["R_sph"][i], slack=agg["slack_D_A_sph"][i],
              extra_err=err["slack_D_A_sph"][i], detail={"weight": "laplacian defect"})
        b.row("volume_ratio_derivative", r, agg["D_V"][i], agg["RV_sph"][i], slack=agg["slack_D_V_sph"][i],
              extra_err=err["slack_D_V_sph"][i], detail={"weight": "laplacian defect"})
        b.row("area_ratio_monotone", r, agg["D_A"][i], 0.0, slack=-agg["D_A"][i], extra_err=err["D_A"][i],
              needs=tuple(names), scale=abs(agg["D_A"][i]))
    b.errors = {"fd_curvature": max(t.fd_err for t in trs), "ode_tol": quad.ode_tol}
    b.diag["directions"] = len(sample.tracks)
    return b.report()


# ---------------------------------------------------------------------------
# Guenther-type lower bounds


def _gunther_track(tr: _Track, radial: RadialTable, corr: np.ndarray, logFb, lapb) -> dict:
    """Q(r) = sum_i int_0^r R_hat(Y_i, g', g', Y_i) with Y_i(r) = E_i, and its relatives."""
    t = radial.t
    pos = t > 0
    Rh = tr.R - corr
    K = np.einsum("...ba,...bc,...cd->...ad", tr.J, Rh, tr.J)
    Kc = radial.cum(K)
    sign, logabs = _logdet(tr.J)
    F = sign * np.exp(logabs)
    FK = radial.cum(F[..., None, None] * K)
    G = np.einsum("...ba,...bc->...ac", tr.J, tr.J)
    Gc = radial.cum(G)
    FG = radial.cum(np.abs(F)[..., None, None] * G)
    Q = np.zeros_like(t)
    lit = np.zeros_like(t)
    Q_unit = np.zeros_like(t)
    lit_unit = np.zeros_like(t)
    m = tr.J.shape[-1]
    if m:
        ok = pos & (np.abs(logabs) < np.inf)
        Gi = np.linalg.inv(G[ok])
        Q[ok] = np.einsum("pij,pji->p", Kc[ok], Gi)
        lit[ok] = np.einsum("pij,pji->p", FK[ok], Gi)
        # the same traces with R_hat replaced by the identity: scale of curvature noise
        Q_unit[ok] = np.einsum("pij,pji->p", Gc[ok], Gi)
        lit_unit[ok] = np.einsum("pij,pji->p", FG[ok], Gi)
    iQ = radial.cum(Q)
    with np.errstate(invalid="ignore", over="ignore"):
        rel = np.where(np.isfinite(logabs) & np.isfinite(logFb), np.expm1(logabs - logFb), 0.0)
    Fb = np.exp(logFb)
    lap = _trace_solve(tr.Jp, tr.J, pos)
    if m and np.any(sign[pos] <= 0):
        raise PastConjugatePointError("Jacobi determinant changes sign within the radius range")
    return {"F": F, "Fb": Fb, "dF": Fb * rel, "rel": rel, "lap": lap, "lapb": lapb, "Q": Q, "iQ": iQ,
            "lit": lit, "Qabs": radial.cum(np.abs(Q)), "Q_unit": Q_unit, "lit_unit": lit_unit}


def _gunther_aggregate(datas, w, radial):
    t = radial.t
    pos = t > 0

    def X(key, f=None):
        arr = np.stack([d[key] if f is None else f(d) for d in datas])
        return np.einsum("d,d...->...", w, arr)

    A, Ab, dA = X("F"), X("Fb"), X("dF")
    V, Vb, dV = radial.cum(A), radial.cum(Ab), radial.cum(dA)
    FL = X(None, lambda d: np.where(pos, d["F"] * (d["lap"] - d["lapb"]), 0.0))
    Gs = X(None, lambda d: d["F"] * d["Q"])
    Gl = X("lit")
    Gl_unit = X("lit_unit")
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(pos & (Ab > 0), Vb / Ab, 0.0)
    g = radial.at_grid
    Abg, Vbg, dAg, dVg = g(Ab), g(Vb), g(dA), g(dV)
    out = {"A": g(A), "Ab": Abg, "dA": dAg, "V": g(V), "Vb": Vbg, "dV": dVg,
           "D_A": g(FL) / Abg, "R_lit": -g(Gl) / Abg, "R_sph": -g(Gs) / Abg,
           "D_V": (dAg * Vbg - dVg * Abg) / Vbg ** 2,
           "RV_lit": -(Abg / Vbg ** 2) * g(radial.cum(ratio * Gl)),
           "RV_sph": -(Abg / Vbg ** 2) * g(radial.cum(ratio * Gs)),
           "iso": g(V) / g(A), "iso_bar": Vbg / Abg,
           "iso_slack": (Vbg / Abg) * (dVg / Vbg - dAg / Abg) / (1 + dAg / Abg),
           "Gl_nodes": Gl[pos], "Gl_unit_nodes": Gl_unit[pos], "Gl": g(Gl)}
    out["U_A"] = g(Gl_unit) / Abg
    out["U_V"] = (Abg / Vbg ** 2) * g(radial.cum(ratio * Gl_unit))
    out["slack_D_A_lit"] = out["D_A"] - out["R_lit"]
    out["slack_D_A_sph"] = out["D_A"] - out["R_sph"]
    out["slack_D_V_lit"] = out["D_V"] - out["RV_lit"]
    out["slack_D_V_sph"] = out["D_V"] - out["RV_sph"]
    return out


def _gunther_point_rows(b, sample, datas, radial, quad, kahler=False):
    g = radial.at_grid
    main = [datas[id(tr)] for tr in sample.tracks]
    lap = np.array([g(d["lap"]) for d in main])
    rhs = np.array([g(d["lapb"] - d["Q"]) for d in main])
    b.per_direction("laplacian", lap, rhs)
    F = np.array([g(d["F"]) for d in main])
    bound = np.array([g(d["Fb"] * np.exp(-d["iQ"])) for d in main])
    slack = np.array([g(d["Fb"] * (d["rel"] - np.expm1(-d["iQ"]))) for d in main])
    b.per_direction("density", F, bound, slack)
    agg, err = _with_error(lambda ts, w: _gunther_aggregate([datas[id(t)] for t in ts], w, radial), sample, quad.curv_tol)
    for i, r in enumerate(radial.grid):
        b.row("area_ratio_derivative", r, agg["D_A"][i], agg["R_lit"][i], slack=agg["slack_D_A_lit"][i],
              extra_err=err["slack_D_A_lit"][i], detail={"form": "literal"})
        b.row("area_ratio_derivative_sphere", r, agg["D_A"][i], agg["R_sph"][i], slack=agg["slack_D_A_sph"][i],
              extra_err=err["slack_D_A_sph"][i], detail={"form": "sphere-weighted"})
        b.row("volume_ratio_derivative", r, agg["D_V"][i], agg["RV_lit"][i], slack=agg["slack_D_V_lit"][i],
              extra_err=err["slack_D_V_lit"][i], detail={"form": "literal"})
        b.row("volume_ratio_derivative_sphere", r, agg["D_V"][i], agg["RV_sph"][i], slack=agg["slack_D_V_sph"][i],
              extra_err=err["slack_D_V_sph"][i], detail={"form": "sphere-weighted"})
    vals = -agg["Gl_nodes"]
    errs = quad.atol + quad.rtol * np.abs(agg["Gl_nodes"]) + quad.curv_tol * agg["Gl_unit_nodes"] + err["Gl_nodes"]
    gname = b.hyp("ball_beta_sign", "int over B_g(rho) of sum beta^ij R_hat(d_i, d_t, d_t, d_j) dV <= 0 "
                  "for rho in (0, max r] (sampled at radial nodes)", vals, errs, kind="gate").name
    for i, r in enumerate(radial.grid):
        if kahler:
            b.row("volume_ratio_monotone", r, agg["D_V"][i], 0.0, slack=agg["D_V"][i], extra_err=err["D_V"][i],
                  needs=(gname,), scale=abs(agg["D_V"][i]))
        else:
            b.row("isoperimetric_ratio", r, agg["iso"][i], agg["iso_bar"][i], slack=-agg["iso_slack"][i],
                  extra_err=err["iso_slack"][i], needs=(gname,))
    b.diag["F"] = [float(x) for x in np.mean(F, axis=0)]
    return agg


def check_gunther_point(M: ManifoldChart, p, k, r_grid, quad: QuadSettings | None = None,
                        inj: float | None = None) -> ComparisonReport:
    """Lower bounds for the Laplacian, the density and the area/volume ratios (constant k)."""
    quad, p, radial, basis = _point_setup(M, p, k, r_grid, quad, inj)
    kk = _const_k(basis)
    b = _Builder("gunther", quad, _desc_point(M, p, k), radial.grid)
    _assumed_cut(b, inj if inj is not None else M.inj_radius)
    sample = _point_sample(M, p, radial, quad)
    m = M.dim - 1
    t = radial.t
    with np.errstate(divide="ignore"):
        logFb = m * np.log(basis.s(t))
        lapb = m * basis.ds(t) / basis.s(t)
    corr = kk * np.eye(m)
    trs = _all_tracks(sample)
    datas = {id(tr): _gunther_track(tr, radial, corr, logFb, lapb) for tr in trs}
    _gunther_point_rows(b, sample, datas, radial, quad)
    b.errors = {"fd_curvature": max(t.fd_err for t in trs), "ode_tol": quad.ode_tol}
    b.diag["directions"] = len(sample.tracks)
    return b.report()


def _kahler_corr(Jf, k):
    n = Jf.shape[0]
    C = c_tensor(np.eye(n), Jf)
    # the model with F_bar = s_k^(2n-2) s_4k has curvature tensor 2k C in this convention
    return 2.0 * k * C[: n - 1, n - 1, n - 1, : n - 1]


def check_kahler_gunther(M: ManifoldChart, p_or_emb, k, r_grid, quad: QuadSettings | None = None,
                         inj: float | None = None) -> ComparisonReport:
    """Kahler Guenther bounds with R_hat = Rm - 2k C (point or complex submanifold)."""
    quad = quad or QuadSettings()
    if not M.is_kahler:
        raise ConfigError("check_kahler_gunther needs a Kahler manifold")
    kk = _const_k(k)
    radial = RadialTable(r_grid, quad.radial_nodes, quad.segment)
    _check_inj(M, radial.r_max, inj)
    b1, b4 = _basis(kk, radial.r_max), _basis(4.0 * kk, radial.r_max)
    _check_positive(b1, radial.r_max)
    _check_positive(b4, radial.r_max)
    t = radial.t
    n2 = M.dim
    if isinstance(p_or_emb, Embedding):
        emb = p_or_emb
        for z in emb.rule(quad.z_nodes)[0]:
            try:
                emb.check_complex(z)
            except NotJInvariantError as exc:
                raise SubmanifoldNotComplexError(str(exc)) from None
        l2 = emb.ell
        desc = {"manifold": _manifold_desc(M), "embedding": {"kind": emb.kind, "ell": emb.ell, "spec": emb.spec},
                "k": _profile_desc(k)}
        b = _Builder("kahler_gunther_tube", quad, desc, radial.grid)
        b.hyp("lambda_zero", "the first zero of c_k + lambda s_k lies beyond the cut distance (user-asserted)",
              status="assumed")
        sample = _tube_sample(emb, radial, quad)
        trs = _all_tracks(sample)
        datas = {}
        for tr in trs:
            _kahler_frame_ok(tr, l2)
            s, ds, c, dc = b1.s(t), b1.ds(t), b1.c(t), b1.dc(t)
            s4, ds4 = b4.s(t), b4.ds(t)
            _lambda_check(tr, b1, radial)
            M_ = c[..., None, None] * np.eye(l2) + s[..., None, None] * tr.A
            Md = dc[..., None, None] * np.eye(l2) + ds[..., None, None] * tr.A
            with np.errstate(divide="ignore"):
                logFb = _power_log(n2 - l2 - 2, s) + np.log(s4) + (np.linalg.slogdet(M_)[1] if l2 else 0.0)
                lapb = _power_logderiv(n2 - l2 - 2, s, ds) + ds4 / s4 + (
                    np.trace(np.linalg.solve(M_, Md), axis1=-2, axis2=-1) if l2 else 0.0)
            datas[id(tr)] = _gunther_track(tr, radial, _kahler_corr(tr.Jf, kk), logFb, lapb)
        _gunther_density_rows(b, sample, datas, radial)
    else:
        p = _point(M, p_or_emb)
        b = _Builder("kahler_gunther", quad, _desc_point(M, p, k), radial.grid)
        _assumed_cut(b, inj if inj is not None else M.inj_radius)
        sample = _point_sample(M, p, radial, quad)
        trs = _all_tracks(sample)
        with np.errstate(divide="ignore"):
            logFb = (n2 - 2) * np.log(b1.s(t)) + np.log(b4.s(t))
            lapb = (n2 - 2) * b1.ds(t) / b1.s(t) + b4.ds(t) / b4.s(t)
        datas = {}
        for tr in trs:
            _kahler_frame_ok(tr, 0)
            datas[id(tr)] = _gunther_track(tr, radial, _kahler_corr(tr.Jf, kk), logFb, lapb)
        _gunther_point_rows(b, sample, datas, radial, quad, kahler=True)
    b.errors = {"fd_curvature": max(t.fd_err for t in trs), "ode_tol": quad.ode_tol}
    b.diag["directions"] = len(sample.tracks)
    return b.report()


def _power_log(m, s):
    return m * np.log(s) if m else np.zeros_like(s)


def _power_logderiv(m, s, ds):
    return m * ds / s if m else np.zeros_like(s)


def _lambda_check(tr, basis, radial):
    if not tr.ell:
        return
    lam = float(np.min(np.linalg.eigvalsh(tr.A)))
    u = basis.c(radial.t) + lam * basis.s(radial.t)
    if np.any(u[radial.t > 0] <= 0):
        raise LambdaZeroCrossingError(f"c_k + lambda s_k vanishes before {radial.r_max:.6g} (lambda={lam:.6g})")


def _gunther_density_rows(b, sample, datas, radial):
    g = radial.at_grid
    main = [datas[id(tr)] for tr in sample.tracks]
    lap = np.array([g(d["lap"]) for d in main])
    rhs = np.array([g(d["lapb"] - d["Q"]) for d in main])
    b.per_direction("laplacian", lap, rhs)
    F = np.array([g(d["F"]) for d in main])
    bound = np.array([g(d["Fb"] * np.exp(-d["iQ"])) for d in main])
    slack = np.array([g(d["Fb"] * (d["rel"] - np.expm1(-d["iQ"]))) for d in main])
    b.per_direction("density", F, bound, slack)
    return main


def check_gunther_tube(emb: Embedding, k, r_grid, quad: QuadSettings | None = None,
                       inj: float | None = None) -> ComparisonReport:
    """Guenther-type lower bounds for the distance from a submanifold (constant k)."""
    quad, M, radial, basis = _tube_setup(emb, k, r_grid, quad, inj)
    kk = _const_k(basis)
    n, ell = M.dim, emb.ell
    b = _Builder("gunther_tube", quad, _tube_desc(emb, k), radial.grid)
    b.hyp("lambda_zero", "the first zero of c_k + lambda s_k (lambda = min A_theta) lies beyond the cut distance "
          "(user-asserted; also checked numerically on the grid)", status="assumed")
    sample = _tube_sample(emb, radial, quad)
    trs = _all_tracks(sample)
    t = radial.t
    s, ds, c, dc = basis.s(t), basis.ds(t), basis.c(t), basis.dc(t)
    datas = {}
    for tr in trs:
        _lambda_check(tr, basis, radial)
        M_ = c[..., None, None] * np.eye(ell) + s[..., None, None] * tr.A
        Md = dc[..., None, None] * np.eye(ell) + ds[..., None, None] * tr.A
        with np.errstate(divide="ignore"):
            logFb = _power_log(n - ell - 1, s) + (np.linalg.slogdet(M_)[1] if ell else 0.0)
            lapb = _power_logderiv(n - ell - 1, s, ds) + (np.trace(np.linalg.solve(M_, Md), axis1=-2, axis2=-1)
                                                         if ell else 0.0)
        datas[id(tr)] = _gunther_track(tr, radial, kk * np.eye(n - 1), logFb, lapb)
    main = _gunther_density_rows(b, sample, datas, radial)
    pos = t > 0
    lb = np.concatenate([d["lapb"][pos] for d in main])
    gate1 = b.hyp("Fbar_increasing", "F_bar' >= 0 on (0, max r] for all sampled (theta, z)", lb,
                  quad.atol + quad.rtol * np.abs(lb), kind="gate").name
    qv = -np.concatenate([d["Q"][pos] for d in main])
    qe = quad.atol + np.concatenate([quad.rtol * np.abs(d["Q"][pos]) + quad.curv_tol * d["Q_unit"][pos] for d in main])
    gate2 = b.hyp("phi_nonpositive", "the Jacobi-normalized R_hat sums are <= 0 on (0, max r] (sampled)", qv, qe,
                  kind="gate").name

    def agg_fn(ts, w):
        dd = [datas[id(x)] for x in ts]
        A = sum(wi * d["F"] for wi, d in zip(w, dd))
        Ab = sum(wi * d["Fb"] for wi, d in zip(w, dd))
        dA = sum(wi * d["dF"] for wi, d in zip(w, dd))
        Ap = sum(wi * np.where(pos, d["F"] * d["lap"], 0.0) for wi, d in zip(w, dd))
        Abp = sum(wi * np.where(pos, d["Fb"] * d["lapb"], 0.0) for wi, d in zip(w, dd))
        g = radial.at_grid
        return {"A": g(A), "Ab": g(Ab), "dA": g(dA), "V": g(radial.cum(A)), "Vb": g(radial.cum(Ab)),
                "dV": g(radial.cum(dA)), "Ap": g(Ap), "Abp": g(Abp)}

    agg, err = _with_error(agg_fn, sample)
    for i, r in enumerate(radial.grid):
        b.row("area_excess", r, agg["A"][i], agg["Ab"][i], slack=agg["dA"][i], extra_err=err["dA"][i],
              needs=(gate1, gate2))
        b.row("area_excess_growth", r, agg["Ap"][i], agg["Abp"][i], extra_err=err["Ap"][i] + err["Abp"][i],
              needs=(gate1, gate2))
        b.row("volume_excess", r, agg["V"][i], agg["Vb"][i], slack=agg["dV"][i], extra_err=err["dV"][i],
              needs=(gate1, gate2))
    b.errors = {"fd_curvature": max(t.fd_err for t in trs), "ode_tol": quad.ode_tol}
    b.diag["directions"] = len(sample.tracks)
    return b.report()


def jacobi_form_Q(M: ManifoldChart, p, theta, r: float, k: float, tol: float = 1e-11) -> float:
    """Q(r) = sum_i int_0^r R_hat_k(Y_i, g', g', Y_i) dt with Y_i(r) = E_i, from the fundamental matrix."""
    p = np.asarray(p, dtype=float)
    radial = RadialTable([r], 24, 0.25)
    tr = _make_track(M, radial, tol, p=p, theta=np.asarray(theta, float))
    corr = k * np.eye(M.dim - 1)
    t = radial.t
    d = _gunther_track(tr, radial, corr, np.zeros_like(t), np.zeros_like(t))
    return float(radial.at_grid(d["Q"])[-1])


# ---------------------------------------------------------------------------
# scalar curvature expansion


def check_scalar_expansion(M: ManifoldChart, p, k, r_grid, quad: QuadSettings | None = None,
                           inj: float | None = None, r4_reference: float | None = None,
                           fit_rtol: float = 0.05, fit_atol: float = 1e-6, r4_rtol: float = 0.2,
                           residual_tol: float = 1e-3) -> ComparisonReport:
    """Small-r behaviour of the averaged density weight and of |B_g(r)|/|B_bar(r)|."""
    quad, p, radial, basis = _point_setup(M, p, k, r_grid, quad, inj)
    kk = _const_k(basis)
    n = M.dim
    if radial.grid.size < 3:
        raise GridTooCoarseError("the expansion fit needs at least three radii")
    b = _Builder("scalar_expansion", quad, _desc_point(M, p, k), radial.grid)
    sample = _point_sample(M, p, radial, quad)
    blocks = _riemann_blocks(M, basis)
    datas = {id(tr): _analyze(tr, radial, blocks) for tr in _all_tracks(sample)}
    g = radial.at_grid

    def fn(ts, w):
        dd = [datas[id(x)] for x in ts]
        avg = sum(wi * np.expm1(-g(d["phi"])) for wi, d in zip(w, dd)) / np.sum(w)
        agg = _aggregate(dd, w, radial)
        return {"one_minus_avg": -avg, "vol_excess": agg["dV"] / agg["Vb"]}

    val, err = _with_error(fn, sample)
    r = radial.grid
    y = val["one_minus_avg"]
    X = np.column_stack([r ** 2 / 6.0, r ** 4, r ** 6][: max(2, min(3, r.size - 1))])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    scale = max(float(np.max(np.abs(y))), 1e-300)
    rel_res = float(np.max(np.abs(resid))) / scale if np.max(np.abs(y)) > fit_atol * r[-1] ** 2 else 0.0
    if rel_res > residual_tol:
        raise GridTooCoarseError(f"expansion fit residual {rel_res:.2e} above {residual_tol:.1e}")
    a = float(coef[0])
    C = riemann(M, p)
    target = C.scalar / n - (n - 1) * kk
    b.row("expansion_coefficient", r[0], a, target, err=fit_atol + fit_rtol * abs(target),
          detail={"fit": "least squares in r^2/6, r^4, r^6", "residual": rel_res, "scalar_curvature": C.scalar})
    x = val["vol_excess"]
    X2 = np.column_stack([r ** 2, r ** 4, r ** 6][: max(2, min(3, r.size - 1))])
    c2, *_ = np.linalg.lstsq(X2, x, rcond=None)
    c4 = float(c2[1])
    b.diag["r2_coefficient_volume"] = float(c2[0])
    b.diag["r4_coefficient_volume"] = c4
    b.diag["volume_excess_ratio"] = [float(v) for v in x]
    b.diag["volume_excess_over_r4"] = [float(v) for v in x / r ** 4]
    if r4_reference is not None:
        b.row("r4_coefficient", r[0], c4, float(r4_reference), err=r4_rtol * abs(float(r4_reference)),
              detail={"fit": "polynomial extrapolation in r^2 of (|B_g|/|B_bar| - 1)"})
    return b.report()


# ---------------------------------------------------------------------------
# eigenvalues


def _model_logderiv(n: int, model, kahler: bool, r: float):
    """(t -> F_bar'/F_bar, real dimension)."""
    if kahler:
        k1, k2 = model
        b1, b2 = _basis(k1, r), _basis(k2, r)
        return (lambda t: (2 * n - 2) * b1.ds(t) / b1.s(t) + b2.ds(t) / b2.s(t)), 2 * n, b1.s
    basis = _basis(model, r)
    return (lambda t: (n - 1) * basis.ds(t) / basis.s(t)), n, basis.s


def _shoot_eigen(lam, fl, N, r, dense=False):
    t0 = min(1e-4, 1e-4 * r)
    y0 = [1.0 - lam * t0 * t0 / (2 * N), -lam * t0 / N]

    def rhs(t, y):
        return [y[1], -fl(t) * y[1] - lam * y[0]]

    def ev(t, y):
        return y[0]

    ev.terminal = not dense
    ev.direction = -1
    sol = _integrate.solve_ivp(rhs, (t0, r), y0, method="DOP853", rtol=1e-12, atol=1e-14, events=ev,
                               dense_output=dense)
    return sol


def model_eigenfunction(n: int, model, r: float, kahler: bool = False, rel: float = 1e-11):
    """(lambda_1, phi) for the model ball of radius r; phi(t) returns (phi, phi')."""
    r = float(r)
    fl, N, sfun = _model_logderiv(n, model, kahler, r)
    zs = np.linspace(0.0, r, 513)[1:]
    if np.any(np.asarray(sfun(zs)) <= 0):
        raise ConfigError("the model density must be positive on (0, r)")

    def has_zero(lam):
        sol = _shoot_eigen(lam, fl, N, r)
        return sol.t_events[0].size > 0 and sol.t_events[0][0] < r * (1 - 1e-13)

    lo, hi = 0.0, max(1.0, 1.0 / (r * r))
    for _ in range(80):
        if has_zero(hi):
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise NonBracketingError("no sign change of phi(r) within the lambda search range")
    while hi - lo > rel * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if has_zero(mid):
            hi = mid
        else:
            lo = mid
    lam = 0.5 * (lo + hi)
    sol = _shoot_eigen(lam, fl, N, r, dense=True)
    t0 = sol.t[0]

    def phi(t):
        t = np.asarray(t, dtype=float)
        shape = t.shape
        t = t.reshape(-1)
        y = sol.sol(np.clip(t, t0, r))
        small = t < t0
        v = np.where(small, 1.0 - lam * t * t / (2 * N), y[0])
        dv = np.where(small, -lam * t / N, y[1])
        return v.reshape(shape), dv.reshape(shape)

    return lam, phi


def model_ball_eigenvalue(n: int, model, r: float, kahler: bool = False) -> float:
    """First Dirichlet eigenvalue of phi'' + (F_bar'/F_bar) phi' on [0, r] (shooting and bisection)."""
    return model_eigenfunction(n, model, r, kahler)[0]


def check_cheng(M: ManifoldChart, p, profile, r: float, quad: QuadSettings | None = None, inj: float | None = None,
                kahler: bool = False) -> ComparisonReport:
    """Rayleigh quotient of the model eigenfunction on B_g(r) against lambda_1 of the model ball."""
    quad = quad or QuadSettings()
    p = _point(M, p)
    r = float(r)
    grid = sorted({r * j / 4 for j in range(1, 5)})
    radial = RadialTable(grid, quad.radial_nodes, quad.segment)
    _check_inj(M, r, inj)
    if kahler:
        if not M.is_kahler:
            raise ConfigError("Kahler version needs a Kahler manifold")
        k1, k2 = profile
        b1, b2 = _kahler_bases(k1, k2, r)
        _check_positive(b1, r)
        _check_positive(b2, r)
        blocks = _kahler_point_blocks(M, b1, b2)
        lam, phi = model_eigenfunction(M.dim // 2, (k1, k2), r, kahler=True)
        desc = _kdesc(M, p, k1, k2)
    else:
        basis = _basis(profile, r)
        _check_positive(basis, r)
        blocks = _riemann_blocks(M, basis)
        lam, phi = model_eigenfunction(M.dim, basis, r)
        desc = _desc_point(M, p, profile)
    b = _Builder("cheng", quad, desc, [r])
    sample = _point_sample(M, p, radial, quad)
    trs = _all_tracks(sample)
    if kahler:
        for tr in trs:
            _kahler_frame_ok(tr, 0)
    datas = {id(tr): _analyze(tr, radial, blocks) for tr in trs}
    v, dv = phi(radial.t)

    def fn(ts, w):
        dd = [datas[id(x)] for x in ts]
        agg = _aggregate(dd, w, radial)
        num = sum(wi * radial.at_grid(radial.cum(d["F"] * dv * dv)) for wi, d in zip(w, dd))
        den = sum(wi * radial.at_grid(radial.cum(d["F"] * v * v)) for wi, d in zip(w, dd))
        return {"rq": num / den, "Gl_nodes": agg["Gl_nodes"], "Gl_abs_nodes": agg["Gl_abs_nodes"],
                "Gl_unit_nodes": agg["Gl_unit_nodes"]}

    val, err = _with_error(fn, sample)
    stmt = ("int over B_g(rho) of Ric_hat_k(s_k(t) d_t) dV >= 0 for rho in (0, r] (sampled at radial nodes)"
            if not kahler else "the Kahler ball condition with s_k1/s_k2 weights at every radial node")
    h = _sign_hyp(b, val, err, quad, "ball_ricci_sign", stmt)
    b.row("rayleigh", r, val["rq"][-1], lam, extra_err=err["rq"][-1], needs=(h.name,),
          detail={"model_eigenvalue": lam})
    return b.report()


def check_cheng_closed(M: ManifoldChart | int, spectrum: Sequence[float], profile, diameter: float,
                       quad: QuadSettings | None = None, kahler: bool = False) -> ComparisonReport:
    """mu_i <= lambda_1(B_bar(d_M / 2i)) for a supplied spectrum and diameter."""
    quad = quad or QuadSettings()
    n = M if isinstance(M, int) else M.dim
    desc = {"dimension": n, "spectrum": [float(x) for x in spectrum], "diameter": float(diameter),
            "profile": _profile_desc(profile) if not kahler else [_profile_desc(x) for x in profile]}
    if not isinstance(M, int):
        desc["manifold"] = _manifold_desc(M)
    b = _Builder("cheng_closed", quad, desc, [float(diameter) / (2 * (i + 1)) for i in range(len(spectrum))])
    b.hyp("curvature_condition", "the sampled ball condition of the Cheng theorem holds around every point "
          "(global; supplied by the user)", status="assumed")
    for i, mu in enumerate(spectrum):
        rad = float(diameter) / (2 * (i + 1))
        lam = model_ball_eigenvalue(n // 2 if kahler else n, profile, rad, kahler=kahler)
        b.row("eigenvalue", rad, float(mu), lam, err=max(quad.atol, 1e-8 * abs(lam)), detail={"index": i + 1})
    return b.report()


# ---------------------------------------------------------------------------
# maximal diameter


def geodesic_distance(M: ManifoldChart, p1, p2, tol: float = 1e-10) -> float:
    """Length of a shooting solution exp_p1(v) = p2, started from the chart segment."""
    from scipy import optimize

    p1 = np.asarray(p1, float)
    p2 = np.asarray(p2, float)
    g = M.metric_at(p1)
    d0 = p2 - p1
    # chart length of the straight segment as the initial guess
    ts = np.linspace(0, 1, 65)
    pts = p1[None] + ts[:, None] * d0[None]
    L0 = float(np.trapezoid(np.sqrt(np.einsum("i,pij,j->p", d0, M.metric_at(pts), d0)), ts))
    v0 = d0 / math.sqrt(d0 @ g @ d0) * L0

    def resid(v):
        L = math.sqrt(v @ g @ v)
        rec = shoot_geodesic(M, p1, v / L, L, tol=tol)
        return rec.endpoint() - p2

    sol = optimize.least_squares(resid, v0, xtol=1e-14, ftol=1e-14, gtol=1e-14)
    if np.max(np.abs(sol.fun)) > 1e-7:
        raise ConfigError("two-point geodesic shooting did not converge; supply the distance")
    return float(math.sqrt(sol.x @ g @ sol.x))


def check_max_diameter(M: ManifoldChart, p1, p2, profile, quad: QuadSettings | None = None,
                       distance: float | None = None, total_volume: float | None = None,
                       r_grid=None, sym_tol: float = 1e-9) -> ComparisonReport:
    """The volume chain behind the maximal-diameter theorem at sampled radii."""
    quad = quad or QuadSettings()
    p1, p2 = _point(M, p1), _point(M, p2)
    prof = _as_profile(profile)
    basis = _basis(profile, prof.t_max if not isinstance(prof, ScalarBasis) and math.isfinite(prof.t_max) else 40.0)
    r0 = first_zero(basis)
    if r0 is None:
        raise ConfigError("s_k has no positive zero")
    tt = np.linspace(0.0, r0, 257)
    if np.max(np.abs(basis.s(tt) - basis.s(r0 - tt))) > sym_tol:
        raise AsymmetricProfileError("s_k(t) != s_k(r0 - t) on the sampled grid")
    d = geodesic_distance(M, p1, p2) if distance is None else float(distance)
    if abs(d - r0) > 1e-6 * max(1.0, r0):
        raise ConfigError(f"d(p1, p2) = {d:.8g} differs from r0 = {r0:.8g}")
    n = M.dim
    if r_grid is None:
        r_grid = [r0 * j / 8 for j in range(1, 8)]
    grid = np.asarray(r_grid, float)
    if np.any(grid >= r0) or np.any(grid <= 0):
        raise ConfigError("radii must lie in (0, r0)")
    full = sorted(set(grid.tolist()) | set((r0 - grid).tolist()) | {r0})
    radial = RadialTable(full, quad.radial_nodes, quad.segment)
    desc = {"manifold": _manifold_desc(M), "p1": [float(x) for x in p1], "p2": [float(x) for x in p2],
            "distance": d, "r0": r0, "profile": _profile_desc(profile)}
    b = _Builder("max_diameter", quad, desc, grid)
    b.hyp("ricci_condition", "the curvature hypothesis of the maximal-diameter theorem (user-asserted)",
          status="assumed")
    vols = []
    for p in (p1, p2):
        sample = _point_sample(M, p, radial, quad, allow_end=True)

        def fn(ts, w):
            return {"V": radial.at_grid(radial.cum(sum(wi * _det(x) for wi, x in zip(w, ts))))}

        vols.append(_with_error(fn, sample))
    (v1, e1), (v2, e2) = vols
    idx = {float(r): i for i, r in enumerate(radial.grid)}
    V1, V2 = v1["V"], v2["V"]
    Mvol = float(V1[idx[r0]]) if total_volume is None else float(total_volume)
    Vbar = sphere_area(n - 1) * radial.at_grid(radial.cum(basis.s(radial.t) ** (n - 1)))
    Mbar = float(Vbar[idx[r0]])
    eq = True
    for r in grid:
        i, j = idx[float(r)], idx[float(r0 - r)]
        lhs, rhs = float(V1[i]), Mvol / Mbar * float(Vbar[i])
        b.row("ball_lower", r, lhs, rhs, extra_err=float(e1["V"][i]))
        tot = float(V1[i] + V2[j])
        b.row("disjoint_balls", r, tot, Mvol, extra_err=float(e1["V"][i] + e2["V"][j]))
        eq &= abs(lhs - rhs) <= 1e-5 * max(1.0, abs(rhs)) and abs(tot - Mvol) <= 1e-5 * max(1.0, Mvol)
    b.diag["all_equalities"] = bool(eq)
    b.diag["total_volume"] = Mvol
    b.diag["model_total_volume"] = Mbar
    return b.report()


def _det(tr):
    sign, logabs = _logdet(tr.J)
    return sign * np.exp(logabs)


# ---------------------------------------------------------------------------
# radial functions


def _deriv(f, t, h=1e-4):
    return (8 * (f(t + h) - f(t - h)) - (f(t + 2 * h) - f(t - 2 * h))) / (12 * h)


def check_radial_identity(M: ManifoldChart, p, profile, phi: Callable, psi: Callable, r: float,
                          quad: QuadSettings | None = None, inj: float | None = None, dphi: Callable | None = None,
                          d2phi: Callable | None = None, dpsi: Callable | None = None) -> ComparisonReport:
    """int <grad psi(d), grad phi(d)> <= -int psi(d) (Delta_bar phi)(d) over B_g(r).

    phi, psi are even functions of t (vectorised); derivatives default to
    fourth-order central differences.
    """
    quad = quad or QuadSettings()
    p = _point(M, p)
    r = float(r)
    grid = sorted({r * j / 4 for j in range(1, 5)})
    radial = RadialTable(grid, quad.radial_nodes, quad.segment)
    _check_inj(M, r, inj)
    basis = _basis(profile, r)
    _check_positive(basis, r)
    t = radial.t
    dphi = dphi or (lambda x: _deriv(phi, x))
    d2phi = d2phi or (lambda x: _deriv(dphi, x))
    dpsi = dpsi or (lambda x: _deriv(psi, x))
    v1, v2, v3 = np.asarray(dphi(t), float), np.asarray(d2phi(t), float), np.asarray(dpsi(t), float)
    ps = np.asarray(psi(t), float)
    if np.any(v1 > 1e-10 * max(1.0, float(np.max(np.abs(v1))))):
        raise PhiNotMonotoneError("phi is not non-increasing on [0, r]")
    if np.any(ps < -1e-12) or np.any(np.asarray(phi(t), float) < -1e-12):
        raise ConfigError("phi and psi must be non-negative")
    b = _Builder("radial_identity", quad, _desc_point(M, p, profile), [r])
    sample = _point_sample(M, p, radial, quad)
    blocks = _riemann_blocks(M, basis)
    datas = {id(tr): _analyze(tr, radial, blocks) for tr in _all_tracks(sample)}
    n = M.dim
    with np.errstate(divide="ignore", invalid="ignore"):
        fl = np.where(t > 0, (n - 1) * basis.ds(t) / basis.s(t), 0.0)
    # at t = 0 the model Laplacian of phi is n phi''(0)
    lap_bar = np.where(t > 0, v2 + fl * v1, n * v2)
    sr = float(basis.s(r))

    def fn(ts, w):
        dd = [datas[id(x)] for x in ts]
        agg = _aggregate(dd, w, radial)
        lhs = sum(wi * radial.at_grid(radial.cum(d["F"] * v3 * v1)) for wi, d in zip(w, dd))
        rhs = -sum(wi * radial.at_grid(radial.cum(d["F"] * ps * lap_bar)) for wi, d in zip(w, dd))
        bnd = sum(wi * radial.at_grid(d["F"]) for wi, d in zip(w, dd))
        return {"lhs": lhs, "rhs": rhs, "A": bnd, "Gl_nodes": agg["Gl_nodes"], "Gl_abs_nodes": agg["Gl_abs_nodes"],
                "Gl_unit_nodes": agg["Gl_unit_nodes"]}

    val, err = _with_error(fn, sample)
    h = _sign_hyp(b, val, err, quad, "ball_ricci_sign",
                  "int over B_g(rho) of Ric_hat_k(s_k(t) d_t) dV >= 0 for rho in (0, r] (sampled at radial nodes)")
    i = -1
    pr, dr = float(psi(r)), float(dphi(r))
    boundary = pr * dr * float(val["A"][i])  # int over S_g(r) of psi phi', <= 0
    b.row("radial_identity", r, val["lhs"][i], val["rhs"][i], extra_err=err["lhs"][i] + err["rhs"][i],
          needs=(h.name,))
    b.row("radial_identity_boundary", r, val["lhs"][i] - boundary, val["rhs"][i],
          extra_err=err["lhs"][i] + err["rhs"][i] + abs(pr * dr) * err["A"][i], needs=(h.name,),
          detail={"boundary_term": boundary})
    b.diag["boundary_term"] = boundary
    b.diag["s_r"] = sr
    return b.report()
