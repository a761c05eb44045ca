"""Ordered convex families ``{S_t}`` indexed by ``[a, b]``.

Two constructions are supported: sublevel sets of a quasiconvex function
(``index_of(x) = f(x)``) and explicit parametric families whose boundary
index is recovered by bisection on ``t``.  Validation is by sampling.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import optimize
from scipy.spatial.distance import directed_hausdorff

from .convex_geometry import (EPS_PROJ, MEMBERSHIP_TOL, Ball, ConvexSet, Ellipsoid, Polytope,
                              SublevelSet, as_point, sphere_directions)
from .errors import DomainError, InputError, ValidationError
from .functions import QuasiconvexFunction

INDEX_TOL = 1e-12


@dataclass(frozen=True)
class ConvexFoliation:
    a: float
    b: float
    set_factory: Callable[[float], ConvexSet]
    dim: int
    index_fn: Optional[Callable[[np.ndarray], float]] = None
    function: Optional[QuasiconvexFunction] = None
    smooth: bool = False
    description: dict = field(default_factory=dict)
    member: Optional[Callable[[float, np.ndarray], bool]] = None

    @property
    def t_range(self):
        return (self.a, self.b)

    def _t_slack(self):
        return 1e-12 * max(1.0, abs(self.a), abs(self.b))

    def set_at(self, t: float) -> ConvexSet:
        t = float(t)
        if not (self.a - self._t_slack() <= t <= self.b + self._t_slack()):
            raise DomainError(f"level {t} outside [{self.a}, {self.b}]")
        return self.set_factory(t)

    def index_of(self, x) -> float:
        """The unique ``t`` with ``x`` on the boundary of ``S_t``."""
        x = as_point(x, self.dim)
        if self.index_fn is not None:
            t = float(self.index_fn(x))
            slack = 1e-9 * max(1.0, abs(self.a), abs(self.b))
            if t > self.b + slack:
                raise DomainError(f"point {x.tolist()} lies outside S_b (f = {t})")
            return t
        return self._bisect_index(x)

    def _bisect_index(self, x):
        if self.set_at(self.a).contains(x):
            return self.a
        if not self.set_at(self.b).contains(x):
            raise DomainError(f"point {x.tolist()} lies outside S_b; cannot bracket its level")
        inside = self.member or (lambda t, p: self.set_factory(t)._inside(p))
        lo, hi = self.a, self.b
        while hi - lo > INDEX_TOL:
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            if inside(mid, x):
                hi = mid
            else:
                lo = mid
        return 0.5 * (lo + hi)


def check_quasiconvex(f: QuasiconvexFunction, n_pairs: int = 1000, seed: int = 0,
                      tol: float = 1e-12):
    """Midpoint test ``f((x+y)/2) <= max(f(x), f(y)) + tol`` on random pairs.

    Returns ``(passed, worst_gap, worst_pair)``; ``worst_pair`` is ``None``
    when the test passes.
    """
    lo, hi = f.domain_box()
    rng = np.random.default_rng(seed)
    X = rng.uniform(lo, hi, size=(n_pairs, f.dim))
    Y = rng.uniform(lo, hi, size=(n_pairs, f.dim))
    worst, pair = -np.inf, None
    for x, y in zip(X, Y):
        gap = f(0.5 * (x + y)) - max(f(x), f(y))
        if gap > worst:
            worst, pair = gap, (x.tolist(), y.tolist())
    passed = worst <= tol
    return passed, float(worst), (None if passed else pair)


def make_sublevel_foliation(f: QuasiconvexFunction, a: float, b: float, witness=None,
                            validate: bool = True, n_pairs: int = 1000,
                            seed: int = 0, eps_proj: float = EPS_PROJ) -> ConvexFoliation:
    """Foliation by sublevel sets ``S_t = [f <= t]``.

    Closed-form level sets are used when ``f`` provides them; otherwise each
    level is a :class:`SublevelSet` anchored at the witness, which then must
    satisfy ``f(witness) < a``.
    """
    a, b = float(a), float(b)
    if not a < b:
        raise InputError(f"need a < b, got a={a}, b={b}")
    w = witness if witness is not None else f.witness
    if w is None:
        raise InputError("sublevel foliation needs a witness point of [f <= a]")
    w = as_point(w, f.dim)
    if not f(w) <= a:
        raise InputError(f"witness {w.tolist()} does not lie in [f <= a] (f = {f(w)})")
    if validate:
        ok, gap, pair = check_quasiconvex(f, n_pairs=n_pairs, seed=seed)
        if not ok:
            raise ValidationError(
                f"{f.name} failed midpoint quasiconvexity sampling (gap {gap:.3g})", witness=pair)

    if f.sublevel is not None:
        factory = f.sublevel
    else:
        grad = f.gradient

        def factory(t):
            return SublevelSet(f.evaluator, t, w, grad=grad, eps=eps_proj)

    return ConvexFoliation(a, b, factory, f.dim, index_fn=f, function=f, smooth=f.smooth,
                           description={"sublevel": {"name": f.name, "params": f.params}})


def _affine(spec, dim=None):
    """``{"base": c0, "rate": c1}`` becomes ``t -> c0 + c1*t``; anything else is constant."""
    if isinstance(spec, dict):
        base = np.asarray(spec.get("base", 0.0), float)
        rate = np.asarray(spec.get("rate", 0.0), float)
        return lambda t: base + rate * t
    const = np.asarray(spec, float)
    return lambda t: const


@dataclass(frozen=True)
class ParametricFamily:
    """``kind`` is ``ball``, ``ellipsoid`` or ``box``; schedules are affine in ``t``."""

    kind: str
    params: dict

    def factory(self) -> Callable[[float], ConvexSet]:
        p = self.params
        if self.kind == "ball":
            center, radius = _affine(p["center"]), _affine(p["radius"])
            return lambda t: Ball(center(t), float(radius(t)))
        if self.kind == "ellipsoid":
            A = np.asarray(p["shape"], float)
            center, radius = _affine(p["center"]), _affine(p["radius"])
            return lambda t: Ellipsoid(A, center(t), float(radius(t)))
        if self.kind == "box":
            center, half = _affine(p["center"]), _affine(p["halfwidth"])
            return lambda t: Polytope.box(center(t) - half(t), center(t) + half(t))
        raise InputError(f"unknown parametric kind {self.kind!r}")

    def member(self) -> Callable[[float, np.ndarray], bool]:
        """Exact membership ``x in S_t`` without building the set."""
        p = self.params
        center = _affine(p["center"])
        if self.kind == "ball":
            radius = _affine(p["radius"])
            return lambda t, x: float(np.linalg.norm(x - center(t))) <= float(radius(t))
        if self.kind == "ellipsoid":
            A = np.asarray(p["shape"], float)
            radius = _affine(p["radius"])

            def inside(t, x):
                d = x - center(t)
                return float(d @ A @ d) <= float(radius(t)) ** 2
            return inside
        half = _affine(p["halfwidth"])
        return lambda t, x: bool(np.all(np.abs(x - center(t)) <= half(t)))

    def dim(self) -> int:
        c = self.params["center"]
        return int(np.asarray(c["base"] if isinstance(c, dict) else c).size)


def make_parametric_foliation(family: ParametricFamily, a: float, b: float,
                              validate: bool = True, n_levels: int = 32,
                              n_points: int = 64) -> ConvexFoliation:
    a, b = float(a), float(b)
    if not a < b:
        raise InputError(f"need a < b, got a={a}, b={b}")
    factory = family.factory()
    factory(a), factory(b)
    fol = ConvexFoliation(a, b, factory, family.dim(), smooth=family.kind in ("ball", "ellipsoid"),
                          description={"parametric": {"kind": family.kind, **family.params}},
                          member=family.member())
    if validate:
        report = validate_nesting(fol, n_levels, n_points)
        if not report.passed:
            raise ValidationError(
                f"parametric {family.kind} family is not strictly nested "
                f"(min margin {report.min_margin:.3g})", witness=report.violations[:1])
    return fol


@dataclass
class NestingReport:
    passed: bool
    min_margin: float
    n_pairs: int
    n_points: int
    violations: list = field(default_factory=list)


def _refine_margin(inner: ConvexSet, outer: ConvexSet, u0: np.ndarray):
    """Locally minimise the depth in ``outer`` of boundary points of ``inner``."""
    def obj(u):
        if not np.any(u):
            return np.inf
        return outer.depth(inner.ray_exit(u))

    res = optimize.minimize(obj, u0, method="Nelder-Mead",
                            options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 400})
    return float(res.fun), inner.ray_exit(res.x)


def validate_nesting(fol: ConvexFoliation, n_levels: int = 32, n_points: int = 64,
                     strict_margin: float = MEMBERSHIP_TOL, refine: bool = True) -> NestingReport:
    """Sample ``S_{t1} subset int S_{t2}`` over consecutive levels of a grid.

    The margin of a boundary point ``p`` of ``S_{t1}`` is its distance to the
    complement of ``S_{t2}``; consecutive pairs suffice since nesting is
    transitive.  Violations are collected, never raised.
    """
    if n_levels < 2:
        raise InputError("validate_nesting needs at least two levels")
    levels = np.linspace(fol.a, fol.b, n_levels)
    dirs = sphere_directions(fol.dim, n_points)
    min_margin = np.inf
    violations = []
    for t1, t2 in zip(levels[:-1], levels[1:]):
        inner, outer = fol.set_at(t1), fol.set_at(t2)
        pts = [inner.ray_exit(u) for u in dirs]
        margins = np.array([outer.depth(p) if np.all(np.isfinite(p)) else np.inf for p in pts])
        k = int(np.argmin(margins))
        m, p = float(margins[k]), pts[k]
        if refine and np.isfinite(m) and not isinstance(outer, SublevelSet):
            m_ref, p_ref = _refine_margin(inner, outer, dirs[k])
            if m_ref < m:
                m, p = m_ref, p_ref
        min_margin = min(min_margin, m)
        if m <= strict_margin:
            violations.append({"t1": float(t1), "t2": float(t2), "point": np.asarray(p).tolist(),
                               "margin": m})
    return NestingReport(not violations, float(min_margin), n_levels - 1, n_points, violations)


@dataclass
class CoverReport:
    passed: bool
    n_checked: int
    max_index_error: float
    failures: list = field(default_factory=list)


def validate_cover(fol: ConvexFoliation, n_levels: int = 32, n_points: int = 64,
                   tol: float = 1e-8) -> CoverReport:
    """Sampled check that each boundary point of a level maps back to that
    level only: ``index_of(p) = t`` and ``p`` is off the neighbouring boundaries."""
    levels = np.linspace(fol.a, fol.b, n_levels)
    dirs = sphere_directions(fol.dim, n_points)
    worst, failures, count = 0.0, [], 0
    scale = max(1.0, fol.b - fol.a)
    for k, t in enumerate(levels):
        S = fol.set_at(t)
        nbrs = [fol.set_at(levels[j]) for j in (k - 1, k + 1) if 0 <= j < n_levels]
        for u in dirs:
            p = S.ray_exit(u)
            if not np.all(np.isfinite(p)):
                continue
            count += 1
            err = abs(fol.index_of(p) - t)
            worst = max(worst, err)
            on_other = any(abs(N.depth(p)) <= tol for N in nbrs)
            if err > tol * scale or on_other:
                failures.append({"t": float(t), "point": p.tolist(), "index_error": err,
                                 "on_neighbour_boundary": on_other})
    return CoverReport(not failures, count, float(worst), failures)


def continuity_modulus(fol: ConvexFoliation, t: float, deltas, n_points: int = 64):
    """Hausdorff distance between sampled boundaries of ``S_t`` and ``S_{t+delta}``.

    Returns a list of ``(delta, distance)`` rows; ``delta`` is flipped in
    sign when ``t + delta`` would leave ``[a, b]``.
    """
    base = fol.set_at(t).boundary_samples(n_points)
    rows = []
    for d in deltas:
        s = t + d if fol.a <= t + d <= fol.b else t - d
        other = fol.set_at(s).boundary_samples(n_points)
        h = max(directed_hausdorff(base, other)[0], directed_hausdorff(other, base)[0])
        rows.append((float(d), float(h)))
    return rows
