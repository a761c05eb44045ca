"""Registered quasiconvex functions.

Scenario files refer to functions by name plus a parameter object.  Each
entry knows how to evaluate ``f``, its gradient where it exists, and, when
the sublevel sets have a closed form, how to build them directly instead of
going through the generic iterative oracle.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .convex_geometry import Ball, ConvexSet, Ellipsoid, Polytope, as_point
from .errors import InputError


@dataclass(frozen=True)
class QuasiconvexFunction:
    """A scalar function whose sublevel sets are (claimed to be) convex.

    ``sublevel`` optionally builds an exact oracle for ``[f <= r]``;
    ``smooth`` declares that the level boundaries are C^1 manifolds.
    ``domain`` is the box ``(lower, upper)`` used for sampling checks.
    """

    evaluator: Callable[[np.ndarray], float]
    dim: int
    gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None
    domain: tuple = (None, None)
    witness: Optional[np.ndarray] = None
    sublevel: Optional[Callable[[float], ConvexSet]] = None
    smooth: bool = False
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __call__(self, x) -> float:
        return float(self.evaluator(np.asarray(x, float)))

    def grad(self, x) -> np.ndarray:
        if self.gradient is None:
            raise InputError(f"function {self.name!r} has no gradient")
        return np.asarray(self.gradient(np.asarray(x, float)), float)

    def domain_box(self):
        lo, hi = self.domain
        if lo is None:
            lo = -np.ones(self.dim) * 5.0
        if hi is None:
            hi = np.ones(self.dim) * 5.0
        return np.asarray(lo, float), np.asarray(hi, float)


def _center(params, dim):
    return as_point(params.get("center", [0.0] * dim), dim)


def _norm(dim, params):
    c = _center(params, dim)

    def f(x):
        d = x - c
        return math.sqrt(float(d @ d))

    def g(x):
        d = x - c
        n = math.sqrt(float(d @ d))
        return d / n if n > 0 else np.zeros_like(d)

    return QuasiconvexFunction(f, dim, g, witness=c, sublevel=lambda t: Ball(c, t), smooth=True)


def _sqnorm(dim, params):
    c = _center(params, dim)
    return QuasiconvexFunction(
        lambda x: float((x - c) @ (x - c)), dim, lambda x: 2.0 * (x - c),
        witness=c, sublevel=lambda t: Ball(c, np.sqrt(t)), smooth=True)


def _sqrt_norm(dim, params):
    c = _center(params, dim)

    def g(x):
        d = x - c
        n = math.sqrt(float(d @ d))
        return d / (2.0 * n ** 1.5) if n > 0 else np.zeros_like(d)

    return QuasiconvexFunction(
        lambda x: math.sqrt(math.sqrt(float((x - c) @ (x - c)))), dim, g,
        witness=c, sublevel=lambda t: Ball(c, t * t), smooth=True)


def _ellipsoid_quadratic(dim, params):
    c = _center(params, dim)
    if "matrix" in params:
        A = np.array(params["matrix"], float)
    else:
        w = np.array(params.get("weights", [1.0] * dim), float)
        if w.shape != (dim,):
            raise InputError(f"ellipsoid_quadratic weights must have length {dim}")
        A = np.diag(w)
    # validates symmetric positive definite
    Ellipsoid(A, c, 1.0)
    return QuasiconvexFunction(
        lambda x: float((x - c) @ A @ (x - c)), dim, lambda x: 2.0 * A @ (x - c),
        witness=c, sublevel=lambda t: Ellipsoid(A, c, np.sqrt(t)), smooth=True)


def _box_max(dim, params):
    c = _center(params, dim)

    def g(x):
        d = x - c
        k = int(np.argmax(np.abs(d)))
        out = np.zeros_like(d)
        out[k] = np.sign(d[k])
        return out

    return QuasiconvexFunction(
        lambda x: float(np.max(np.abs(x - c))), dim, g,
        witness=c, sublevel=lambda t: Polytope.box(c - t, c + t), smooth=False)


def _sqnorm_cosine(dim, params):
    # ||x||^2 - amplitude*cos(frequency*x_1): level sets lose convexity when
    # amplitude*frequency^2 > 2
    amp = float(params.get("amplitude", 1.0))
    freq = float(params.get("frequency", 4.0))
    c = _center(params, dim)

    def f(x):
        d = x - c
        return float(d @ d - amp * np.cos(freq * d[0]))

    def g(x):
        d = x - c
        out = 2.0 * d
        out[0] += amp * freq * np.sin(freq * d[0])
        return out

    return QuasiconvexFunction(f, dim, g, witness=c, smooth=True)


REGISTRY = {
    "norm": _norm,
    "sqnorm": _sqnorm,
    "sqrt_norm": _sqrt_norm,
    "ellipsoid_quadratic": _ellipsoid_quadratic,
    "box_max": _box_max,
    "sqnorm_cosine": _sqnorm_cosine,
}


def make_function(name: str, dim: int, params: Optional[dict] = None) -> QuasiconvexFunction:
    """Instantiate a registered function in dimension ``dim``."""
    if name not in REGISTRY:
        raise InputError(f"unknown function {name!r}; known: {sorted(REGISTRY)}")
    params = dict(params or {})
    fn = REGISTRY[name](dim, params)
    lo = params.get("domain_lower")
    hi = params.get("domain_upper")
    return QuasiconvexFunction(
        fn.evaluator, dim, fn.gradient, domain=(lo, hi), witness=fn.witness,
        sublevel=fn.sublevel, smooth=fn.smooth, name=name, params=params)
