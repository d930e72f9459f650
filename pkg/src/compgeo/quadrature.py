"""Deterministic quadrature over direction spheres and radial intervals.

Sphere rules are either product Gauss rules (sphere dimension d <= 3) or
counter-based Monte Carlo point sets (any d). Every rule is immutable, and the
value of an integral depends only on the rule, never on how node evaluations
were scheduled.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import integrate as _integrate
from scipy import special

__all__ = [
    "SphereRule",
    "NanAtNodeError",
    "sphere_area",
    "sphere_rule",
    "integrate_sphere",
    "integrate_radial",
    "gauss_legendre",
    "counter_uniform",
    "parallel_map",
    "fsum_weighted",
]

MAX_GAUSS_DIM = 3


class NanAtNodeError(ValueError):
    """An integrand returned a non-finite value at a quadrature node."""

    def __init__(self, node, value):
        super().__init__(f"non-finite integrand value {value!r} at node {np.asarray(node).tolist()}")
        self.node = node
        self.value = value


def sphere_area(d: int) -> float:
    """Area of the unit sphere S^d in R^(d+1)."""
    if d < 0:
        raise ValueError("sphere dimension must be non-negative")
    return 2.0 * math.pi ** ((d + 1) / 2.0) / math.gamma((d + 1) / 2.0)


@dataclass(frozen=True)
class SphereRule:
    d: int
    kind: str
    nodes: np.ndarray
    weights: np.ndarray
    degree: int | None = None
    seed: int | None = None
    count: int | None = None
    lower: "SphereRule | None" = field(default=None, repr=False)

    @property
    def size(self) -> int:
        return int(self.weights.shape[0])

    @property
    def error_method(self) -> str:
        return "order-difference" if self.kind == "product-gauss" else "standard-error"

    def describe(self) -> dict:
        out = {"d": self.d, "kind": self.kind, "nodes": self.size}
        if self.kind == "product-gauss":
            out["degree"] = self.degree
        else:
            out["seed"] = self.seed
            out["count"] = self.count
        return out


# ---------------------------------------------------------------------------
# product rules


def _circle(m: int):
    ang = 2.0 * math.pi * (np.arange(m) + 0.5) / m
    nodes = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    return nodes, np.full(m, 2.0 * math.pi / m)


def _product_nodes(d: int, degree: int):
    if d == 0:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    if d == 1:
        return _circle(degree + 1)
    # polar factor x = cos(angle) with weight (1 - x^2)^((d-2)/2)
    m = (degree + 2) // 2
    alpha = (d - 2) / 2.0
    x, wx = special.roots_jacobi(m, alpha, alpha)
    sub_nodes, sub_w = _product_nodes(d - 1, degree)
    rho = np.sqrt(np.clip(1.0 - x * x, 0.0, None))
    nodes = np.concatenate(
        [np.concatenate([rho[i] * sub_nodes, np.full((sub_nodes.shape[0], 1), x[i])], axis=1) for i in range(m)]
    )
    weights = np.concatenate([wx[i] * sub_w for i in range(m)])
    return nodes, weights


def _gauss_rule(d: int, degree: int, with_lower: bool = True) -> SphereRule:
    nodes, weights = _product_nodes(d, degree)
    # normalise against rounding so that the total area is exact to 1e-12
    weights = weights * (sphere_area(d) / math.fsum(weights))
    nodes = nodes / np.linalg.norm(nodes, axis=1, keepdims=True)
    lower = None
    if with_lower and degree > 1:
        lower = _gauss_rule(d, max(1, degree - 2), with_lower=False)
    return SphereRule(d=d, kind="product-gauss", nodes=nodes, weights=weights, degree=degree, lower=lower)


# ---------------------------------------------------------------------------
# counter-based random streams

_MASK = np.uint64(0xFFFFFFFFFFFFFFFF)


def _splitmix64(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = (x + np.uint64(0x9E3779B97F4A7C15)) & _MASK
        z = ((z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)) & _MASK
        z = ((z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)) & _MASK
        return z ^ (z >> np.uint64(31))


def counter_uniform(seed: int, index: np.ndarray, lane: int) -> np.ndarray:
    """Uniform (0, 1) variates keyed by (seed, index, lane) only."""
    idx = np.asarray(index, dtype=np.uint64)
    with np.errstate(over="ignore"):
        key = _splitmix64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF) ^ np.uint64(0xD1B54A32D192ED03))
        mixed = _splitmix64(key ^ _splitmix64(idx * np.uint64(0x100000001B3) + np.uint64(lane)))
    return ((mixed >> np.uint64(11)).astype(np.float64) + 0.5) / float(1 << 53)


def _mc_rule(d: int, seed: int, count: int) -> SphereRule:
    idx = np.arange(count, dtype=np.uint64)
    cols = []
    for j in range((d + 2) // 2):
        u1 = counter_uniform(seed, idx, 2 * j)
        u2 = counter_uniform(seed, idx, 2 * j + 1)
        r = np.sqrt(-2.0 * np.log(u1))
        cols.append(r * np.cos(2.0 * math.pi * u2))
        cols.append(r * np.sin(2.0 * math.pi * u2))
    g = np.stack(cols[: d + 1], axis=1)
    nodes = g / np.linalg.norm(g, axis=1, keepdims=True)
    weights = np.full(count, sphere_area(d) / count)
    return SphereRule(d=d, kind="monte-carlo", nodes=nodes, weights=weights, seed=seed, count=count)


def sphere_rule(d: int, kind: str = "gauss", order_or_seed: int = 5, count: int = 4096) -> SphereRule:
    """Build a rule on S^d.

    For ``kind="gauss"`` the integer is the polynomial degree of exactness.
    For ``kind="mc"`` it is the seed, and ``count`` nodes are drawn.
    """
    if d < 0:
        raise ValueError("sphere dimension must be non-negative")
    kind = {"gauss": "gauss", "product-gauss": "gauss", "mc": "mc", "monte-carlo": "mc"}.get(kind)
    if kind is None:
        raise ValueError("kind must be 'gauss' or 'mc'")
    if kind == "gauss":
        if d > MAX_GAUSS_DIM:
            warnings.warn(
                f"product Gauss rules are limited to d <= {MAX_GAUSS_DIM}; using Monte Carlo on S^{d}",
                stacklevel=2,
            )
            return _mc_rule(d, int(order_or_seed), count)
        if order_or_seed < 1:
            raise ValueError("degree must be >= 1")
        return _gauss_rule(d, int(order_or_seed))
    return _mc_rule(d, int(order_or_seed), int(count))


# ---------------------------------------------------------------------------
# evaluation


def parallel_map(func: Callable, items: Sequence, jobs: int = 1) -> list:
    """Map preserving input order; results never depend on ``jobs``."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [func(it) for it in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(func, items))


def fsum_weighted(weights: Iterable[float], values: Iterable[float]) -> float:
    return math.fsum(float(w) * float(v) for w, v in zip(weights, values))


def _node_values(rule: SphereRule, f, vectorized: bool, jobs: int) -> np.ndarray:
    if vectorized:
        vals = np.asarray(f(rule.nodes), dtype=float).reshape(-1)
    else:
        vals = np.asarray(parallel_map(f, list(rule.nodes), jobs), dtype=float).reshape(-1)
    bad = np.flatnonzero(~np.isfinite(vals))
    if bad.size:
        raise NanAtNodeError(rule.nodes[bad[0]], vals[bad[0]])
    return vals


def integrate_sphere(rule: SphereRule, f, vectorized: bool = False, jobs: int = 1) -> tuple[float, float]:
    """Integrate ``f`` over S^d; returns (value, error estimate)."""
    vals = _node_values(rule, f, vectorized, jobs)
    value = fsum_weighted(rule.weights, vals)
    if rule.kind == "monte-carlo":
        n = vals.size
        sd = float(np.std(vals, ddof=1)) if n > 1 else float("inf")
        return value, sphere_area(rule.d) * sd / math.sqrt(n)
    if rule.lower is None:
        return value, 0.0
    low_vals = _node_values(rule.lower, f, vectorized, jobs)
    low = fsum_weighted(rule.lower.weights, low_vals)
    return value, abs(value - low)


def integrate_radial(f: Callable[[float], float], a: float, b: float, tol: float = 1e-10) -> tuple[float, float]:
    """Adaptive radial quadrature; returns (value, error estimate)."""
    value, err = _integrate.quad(f, a, b, epsabs=tol, epsrel=tol, limit=400)
    if not math.isfinite(value):
        raise NanAtNodeError([a, b], value)
    return float(value), float(err)


def gauss_legendre(a: float, b: float, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [a, b]."""
    x, w = np.polynomial.legendre.leggauss(m)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w
