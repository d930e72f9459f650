"""Comparison functions s_k, c_k and the scalar model quantities built on them.

s_k and c_k solve x'' = -k(t) x with (x, x') = (0, 1) and (1, 0) at t = 0.
Constant profiles use the closed forms; variable profiles are integrated with
an embedded Dormand-Prince 8(5,3) pair and stored on the accepted step grid.
Dense evaluation is piecewise quintic Hermite on (x, x', x'' = -k x), so the
interpolant has a continuous second derivative. Charts built from a basis
(warped products) are differentiated twice by the curvature code.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate as _integrate

from .quadrature import sphere_area

__all__ = [
    "CurvatureProfile",
    "ScalarBasis",
    "ProfileDomainError",
    "IntegratorError",
    "DenominatorZeroError",
    "NegativeDensityError",
    "solve_basis",
    "ct",
    "tg",
    "first_zero",
    "model_density",
    "kahler_model_density",
    "model_laplacian",
    "kahler_model_laplacian",
    "model_area_volume",
    "kahler_model_area_volume",
    "closed_form",
]


class ProfileDomainError(ValueError):
    pass


class IntegratorError(RuntimeError):
    pass


class DenominatorZeroError(ZeroDivisionError):
    def __init__(self, name: str, t: float):
        super().__init__(f"{name} has a zero denominator at t={t!r}")
        self.t = t


class NegativeDensityError(ValueError):
    pass


# ---------------------------------------------------------------------------
# profiles


@dataclass(frozen=True)
class CurvatureProfile:
    """A comparison curvature k(t), constant or tabulated (linear between knots)."""

    kind: str
    k: float | None = None
    t_knots: tuple[float, ...] | None = None
    k_knots: tuple[float, ...] | None = None
    func: Callable | None = field(default=None, compare=False, repr=False)
    t_max: float = math.inf
    modulus: float | None = None
    label: str | None = None

    def __post_init__(self):
        if self.t_knots is not None:
            # array copies of the knots so evaluation does not convert tuples on every call
            object.__setattr__(self, "_tk", np.asarray(self.t_knots, float))
            object.__setattr__(self, "_kk", np.asarray(self.k_knots, float))

    @classmethod
    def constant(cls, k: float) -> "CurvatureProfile":
        return cls(kind="constant", k=float(k))

    @classmethod
    def table(cls, t: Sequence[float], k: Sequence[float], modulus: float | None = None) -> "CurvatureProfile":
        t = tuple(float(x) for x in t)
        k = tuple(float(x) for x in k)
        if len(t) != len(k) or len(t) < 2:
            raise ValueError("table profile needs matching t and k arrays of length >= 2")
        if any(b <= a for a, b in zip(t, t[1:])):
            raise ValueError("table knots must be strictly increasing")
        if t[0] > 0.0:
            raise ProfileDomainError("table profile must start at t <= 0")
        prof = cls(kind="table", t_knots=t, k_knots=k, t_max=t[-1], modulus=modulus)
        if modulus is not None:
            prof.check_continuity(modulus)
        return prof

    @classmethod
    def from_callable(cls, f: Callable, t_max: float, modulus: float | None = None,
                      label: str | None = None) -> "CurvatureProfile":
        prof = cls(kind="callable", func=f, t_max=float(t_max), modulus=modulus, label=label)
        if modulus is not None:
            prof.check_continuity(modulus)
        return prof

    @classmethod
    def sampled(cls, f: Callable, t_max: float, step: float = 1e-3, label: str | None = None) -> "CurvatureProfile":
        """Tabulate a callable on a uniform grid (serialisable form)."""
        m = max(2, int(math.ceil(t_max / step)) + 1)
        t = np.linspace(0.0, t_max, m)
        prof = cls.table(t, np.asarray(f(t), dtype=float))
        return CurvatureProfile(kind="table", t_knots=prof.t_knots, k_knots=prof.k_knots,
                                t_max=prof.t_max, label=label)

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant"

    def __call__(self, t):
        t_arr = np.asarray(t, dtype=float)
        if self.kind == "constant":
            return np.full_like(t_arr, self.k) if t_arr.ndim else float(self.k)
        if np.any(t_arr > self.t_max * (1 + 1e-12) + 1e-12):
            raise ProfileDomainError(f"profile defined on [0, {self.t_max}] only")
        if self.kind == "table":
            out = np.interp(t_arr, self._tk, self._kk)
        else:
            out = np.asarray(self.func(t_arr), dtype=float)
        return out if t_arr.ndim else float(out)

    def check_continuity(self, modulus: float, samples: int = 4096) -> None:
        """Reject jumps larger than ``modulus`` times the sample spacing."""
        t = np.linspace(0.0, self.t_max, samples)
        k = np.asarray(self(t), dtype=float)
        jumps = np.abs(np.diff(k)) / np.diff(t)
        if np.any(jumps > modulus):
            i = int(np.argmax(jumps))
            raise ValueError(f"profile not continuous within modulus {modulus}: slope {jumps[i]:.3g} near t={t[i]:.6g}")

    def to_json(self) -> dict:
        if self.kind == "constant":
            return {"kind": "constant", "k": self.k}
        if self.kind == "table":
            out = {"kind": "table", "t": list(self.t_knots), "k": list(self.k_knots)}
            if self.modulus is not None:
                out["modulus"] = self.modulus
            return out
        raise ValueError("callable profiles are not serialisable; use CurvatureProfile.sampled")

    @classmethod
    def from_json(cls, obj: dict) -> "CurvatureProfile":
        kind = obj.get("kind")
        if kind == "constant":
            return cls.constant(obj["k"])
        if kind == "table":
            return cls.table(obj["t"], obj["k"], modulus=obj.get("modulus"))
        if kind == "expr":
            # small convenience used by scenario files: k(t) = a + b sin t + c cos t
            a, b, c = float(obj.get("a", 0.0)), float(obj.get("b_sin", 0.0)), float(obj.get("c_cos", 0.0))
            t_max = float(obj.get("t_max", 10.0))
            return cls.sampled(lambda t: a + b * np.sin(t) + c * np.cos(t), t_max, obj.get("step", 1e-3))
        raise ValueError(f"unknown profile kind {kind!r}")


# ---------------------------------------------------------------------------
# closed forms


def closed_form(k: float, t):
    """(s, s', c, c') for constant k."""
    t = np.asarray(t, dtype=float)
    if k > 0:
        w = math.sqrt(k)
        return np.sin(w * t) / w, np.cos(w * t), np.cos(w * t), -w * np.sin(w * t)
    if k < 0:
        w = math.sqrt(-k)
        return np.sinh(w * t) / w, np.cosh(w * t), np.cosh(w * t), w * np.sinh(w * t)
    return t.copy(), np.ones_like(t), np.ones_like(t), np.zeros_like(t)


# ---------------------------------------------------------------------------
# basis


def _quintic_hermite(t, t0, t1, y0, d0, a0, y1, d1, a1, deriv: int):
    h = t1 - t0
    u = (t - t0) / h
    # value basis functions in terms of u, derivatives scaled by h
    u2, u3, u4, u5 = u * u, u ** 3, u ** 4, u ** 5
    if deriv == 0:
        h0 = 1 - 10 * u3 + 15 * u4 - 6 * u5
        h1 = u - 6 * u3 + 8 * u4 - 3 * u5
        h2 = 0.5 * u2 - 1.5 * u3 + 1.5 * u4 - 0.5 * u5
        h5 = 10 * u3 - 15 * u4 + 6 * u5
        h4 = -4 * u3 + 7 * u4 - 3 * u5
        h3 = 0.5 * u3 - u4 + 0.5 * u5
        scale = 1.0
    elif deriv == 1:
        h0 = -30 * u2 + 60 * u3 - 30 * u4
        h1 = 1 - 18 * u2 + 32 * u3 - 15 * u4
        h2 = u - 4.5 * u2 + 6 * u3 - 2.5 * u4
        h5 = 30 * u2 - 60 * u3 + 30 * u4
        h4 = -12 * u2 + 28 * u3 - 15 * u4
        h3 = 1.5 * u2 - 4 * u3 + 2.5 * u4
        scale = 1.0 / h
    else:
        h0 = -60 * u + 180 * u2 - 120 * u3
        h1 = -36 * u + 96 * u2 - 60 * u3
        h2 = 1 - 9 * u + 18 * u2 - 10 * u3
        h5 = 60 * u - 180 * u2 + 120 * u3
        h4 = -24 * u + 84 * u2 - 60 * u3
        h3 = 3 * u - 12 * u2 + 10 * u3
        scale = 1.0 / (h * h)
    val = h0 * y0 + h1 * h * d0 + h2 * h * h * a0 + h5 * y1 + h4 * h * d1 + h3 * h * h * a1
    return val * scale


@dataclass(frozen=True)
class ScalarBasis:
    """Immutable solution pair (s, c) on [0, T] with dense evaluation."""

    profile: CurvatureProfile
    T: float
    tol: float
    grid: np.ndarray = field(repr=False)
    s_vals: np.ndarray = field(repr=False)
    ds_vals: np.ndarray = field(repr=False)
    c_vals: np.ndarray = field(repr=False)
    dc_vals: np.ndarray = field(repr=False)
    closed: bool = False
    interp_order: int = 5
    achieved_tol: float = 0.0

    # -- dense evaluation -------------------------------------------------
    def _check(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < -1e-12) or np.any(t > self.T * (1 + 1e-12) + 1e-12):
            raise ProfileDomainError(f"t outside basis domain [0, {self.T}]")
        return t

    def _eval(self, which: str, t, deriv: int):
        t = self._check(t)
        if self.closed:
            s, ds, c, dc = closed_form(self.profile.k, t)
            k = self.profile.k
            table = {
                ("s", 0): s, ("s", 1): ds, ("s", 2): -k * s,
                ("c", 0): c, ("c", 1): dc, ("c", 2): -k * c,
            }
            out = table[(which, deriv)]
            return out if t.ndim else float(out)
        y = self.s_vals if which == "s" else self.c_vals
        d = self.ds_vals if which == "s" else self.dc_vals
        kg = np.asarray(self.profile(self.grid), dtype=float)
        a = -kg * y
        g = self.grid
        idx = np.clip(np.searchsorted(g, t, side="right") - 1, 0, len(g) - 2)
        out = _quintic_hermite(t, g[idx], g[idx + 1], y[idx], d[idx], a[idx], y[idx + 1], d[idx + 1], a[idx + 1], deriv)
        return out if t.ndim else float(out)

    def s(self, t):
        return self._eval("s", t, 0)

    def ds(self, t):
        return self._eval("s", t, 1)

    def d2s(self, t):
        return self._eval("s", t, 2)

    def c(self, t):
        return self._eval("c", t, 0)

    def dc(self, t):
        return self._eval("c", t, 1)

    def k(self, t):
        return self.profile(t)

    def values(self, t):
        return self.s(t), self.ds(t), self.c(t), self.dc(t)

    def wronskian(self, t=None):
        """s c' - c s' (identically -1) at ``t`` or at every grid point."""
        if t is None:
            return self.s_vals * self.dc_vals - self.c_vals * self.ds_vals
        s, ds, c, dc = self.values(t)
        return s * dc - c * ds


def _rhs(profile: CurvatureProfile):
    def f(t, y):
        k = profile(t)
        return np.array([y[1], -k * y[0], y[3], -k * y[2]])

    return f


def solve_basis(profile: CurvatureProfile, T: float, tol: float = 1e-10, *,
                method: str = "auto", max_step: float | None = None) -> ScalarBasis:
    """Solve both initial-value problems on [0, T].

    ``method="auto"`` uses closed forms for constant profiles and the adaptive
    integrator otherwise; ``method="numeric"`` forces integration.
    """
    if not (T > 0):
        raise ValueError("T must be positive")
    if not (tol > 0):
        raise ValueError("tol must be positive")
    if profile.t_max < T * (1 - 1e-12):
        raise ProfileDomainError(f"profile defined on [0, {profile.t_max}] but T={T}")
    if profile.is_constant and method == "auto":
        grid = np.linspace(0.0, T, 65)
        s, ds, c, dc = closed_form(profile.k, grid)
        return ScalarBasis(profile, float(T), tol, grid, s, ds, c, dc, closed=True, achieved_tol=0.0)
    if max_step is None:
        max_step = min(T / 64.0, 0.02)
    sol = _integrate.solve_ivp(
        _rhs(profile), (0.0, float(T)), np.array([0.0, 1.0, 1.0, 0.0]),
        method="DOP853", rtol=tol, atol=tol * 1e-2, max_step=max_step,
    )
    if sol.status != 0:
        raise IntegratorError(f"integration failed: {sol.message}")
    grid = np.asarray(sol.t)
    if len(grid) < 2 or np.any(np.diff(grid) <= 0):
        raise IntegratorError("integrator step underflow")
    y = sol.y
    w = y[0] * y[3] - y[2] * y[1]
    achieved = float(np.max(np.abs(w + 1.0)))
    return ScalarBasis(profile, float(T), tol, grid, y[0].copy(), y[1].copy(), y[2].copy(), y[3].copy(),
                       closed=False, achieved_tol=achieved)


# ---------------------------------------------------------------------------
# derived scalars


def ct(basis: ScalarBasis, t):
    s = basis.s(t)
    if np.any(np.asarray(s) == 0.0):
        bad = float(np.asarray(t).reshape(-1)[np.flatnonzero(np.asarray(s).reshape(-1) == 0.0)[0]])
        raise DenominatorZeroError("ct", bad)
    return basis.c(t) / s


def tg(basis: ScalarBasis, t):
    c = basis.c(t)
    if np.any(np.asarray(c) == 0.0):
        bad = float(np.asarray(t).reshape(-1)[np.flatnonzero(np.asarray(c).reshape(-1) == 0.0)[0]])
        raise DenominatorZeroError("tg", bad)
    return basis.s(t) / c


def _target_fn(basis: ScalarBasis, target, other: ScalarBasis | None):
    if callable(target):
        return target
    if target == "s":
        return basis.s
    if target == "c":
        return basis.c
    if target == "product":
        if other is None:
            raise ValueError("product target needs a second basis")
        return lambda t: basis.s(t) * other.s(t)
    raise ValueError(f"unknown target {target!r}")


def first_zero(basis: ScalarBasis, target="s", other: ScalarBasis | None = None,
               atol: float = 1e-10, touch_tol: float = 1e-14) -> float | None:
    """Smallest positive root on (0, T], or None."""
    f = _target_fn(basis, target, other)
    T = basis.T if other is None else min(basis.T, other.T)
    h = min(T / 2048.0, 1e-2)
    m = int(math.ceil(T / h))
    grid = np.linspace(0.0, T, m + 1)[1:]
    vals = np.asarray(f(grid), dtype=float)
    touch = np.flatnonzero(np.abs(vals) <= touch_tol)
    sign = np.flatnonzero(vals[:-1] * vals[1:] < 0)
    first_touch = touch[0] if touch.size else None
    first_sign = sign[0] if sign.size else None
    if first_touch is None and first_sign is None:
        return None
    if first_sign is None or (first_touch is not None and first_touch <= first_sign):
        return float(grid[first_touch])
    a, b = float(grid[first_sign]), float(grid[first_sign + 1])
    fa = float(vals[first_sign])
    while b - a > atol:
        mid = 0.5 * (a + b)
        fm = float(f(mid))
        if fm == 0.0:
            return mid
        if (fm < 0) == (fa < 0):
            a, fa = mid, fm
        else:
            b = mid
    return 0.5 * (a + b)


def model_density(basis: ScalarBasis, n: int, r):
    return basis.s(r) ** (n - 1)


def kahler_model_density(basis1: ScalarBasis, basis2: ScalarBasis, n: int, r):
    return basis1.s(r) ** (2 * n - 2) * basis2.s(r)


def model_laplacian(basis: ScalarBasis, n: int, r):
    return (n - 1) * basis.ds(r) / basis.s(r)


def kahler_model_laplacian(basis1: ScalarBasis, basis2: ScalarBasis, n: int, r):
    return (2 * n - 2) * basis1.ds(r) / basis1.s(r) + basis2.ds(r) / basis2.s(r)


def _check_positive(fn, r: float, what: str):
    t = np.linspace(0.0, r, 2049)[1:-1]
    if t.size and np.any(np.asarray(fn(t)) <= 0.0):
        bad = float(t[np.flatnonzero(np.asarray(fn(t)) <= 0.0)[0]])
        raise NegativeDensityError(f"{what} is not positive on (0, {r}); sign change near t={bad:.6g}")


def model_area_volume(basis: ScalarBasis, n: int, r: float, rel: float = 1e-9) -> tuple[float, float]:
    """(|S(r)|, |B(r)|) for dt^2 + s(t)^2 g_{S^{n-1}}."""
    _check_positive(basis.s, r, "s")
    omega = sphere_area(n - 1)
    area = omega * float(basis.s(r)) ** (n - 1)
    vol, _ = _integrate.quad(lambda t: float(basis.s(t)) ** (n - 1), 0.0, r, epsrel=rel, epsabs=0.0, limit=400)
    return area, omega * vol


def kahler_model_area_volume(basis1: ScalarBasis, basis2: ScalarBasis, n: int, r: float,
                             rel: float = 1e-9) -> tuple[float, float]:
    """Area and volume for dt^2 + s1^2 g_H + s2^2 g_V on [0, r] x S^{2n-1}."""
    _check_positive(lambda t: basis1.s(t) * basis2.s(t), r, "s1*s2")
    omega = sphere_area(2 * n - 1)
    area = omega * float(kahler_model_density(basis1, basis2, n, r))
    vol, _ = _integrate.quad(lambda t: float(kahler_model_density(basis1, basis2, n, t)), 0.0, r,
                             epsrel=rel, epsabs=0.0, limit=400)
    return area, omega * vol
