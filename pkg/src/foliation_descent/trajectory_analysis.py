"""Certificates for computed curves.

Each check returns a number (a worst case over samples) rather than a
boolean, so callers pick their tolerance and reports can record the value.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import math

import numpy as np
from scipy.interpolate import CubicHermiteSpline
from scipy.spatial.distance import pdist
from scipy.stats import qmc

from .catching_up import PolylineCurve, SampledCurve
from .convex_geometry import normal_residual
from .errors import DegenerateCurveError, InputError
from .foliation import ConvexFoliation
from .functions import QuasiconvexFunction

H_FD = 1e-5
GRAD_FLOOR = 1e-8
_GOLDEN = 0.5 * (np.sqrt(5.0) - 1.0)


@dataclass
class AnalysisReport:
    self_contracted_max_violation: Optional[float] = None
    length_diameter_ratio: Optional[float] = None
    inclusion_residual_max: Optional[float] = None
    inclusion_samples_skipped: Optional[int] = None
    tangent_gap_max: Optional[float] = None
    tangent_gap_coarse: Optional[float] = None
    reference_sup_distance: Optional[float] = None

    def as_dict(self):
        return asdict(self)


def _points(curve):
    if isinstance(curve, (SampledCurve, PolylineCurve)):
        return np.asarray(curve.points, float)
    return np.atleast_2d(np.asarray(curve, float))


def check_self_contracted(curve, n_triples: int = 1000, seed: int = 0,
                          exhaustive: bool = False) -> float:
    """Max of ``||g(k2) - g(k3)|| - ||g(k1) - g(k3)||`` over ordered triples
    ``k1 < k2 < k3``; ``<= tol`` certifies self-contractedness on the sample.

    ``exhaustive=True`` evaluates every triple in O(N^2): for fixed ``k3``
    the best ``k1`` is the running minimiser of the distance to ``g(k3)``.
    """
    P = _points(curve)
    N = len(P)
    if N < 3:
        raise DegenerateCurveError("self-contracted check needs at least three samples")
    if exhaustive:
        worst = -np.inf
        for k3 in range(2, N):
            d = np.linalg.norm(P[:k3] - P[k3], axis=1)
            worst = max(worst, float(np.max(d[1:] - np.minimum.accumulate(d[:-1]))))
        return worst
    u = qmc.Halton(d=3, scramble=True, seed=seed).random(n_triples)
    k = np.sort(np.floor(u * N).astype(int), axis=1)
    k[:, 1] = np.maximum(k[:, 1], k[:, 0] + 1)
    k[:, 2] = np.maximum(k[:, 2], k[:, 1] + 1)
    k = k[k[:, 2] < N]
    if len(k) == 0:
        raise DegenerateCurveError("no admissible triples")
    d13 = np.linalg.norm(P[k[:, 0]] - P[k[:, 2]], axis=1)
    d23 = np.linalg.norm(P[k[:, 1]] - P[k[:, 2]], axis=1)
    return float(np.max(d23 - d13))


def length_diameter_ratio(curve) -> float:
    """Polygonal length over diameter of the sample cloud."""
    P = _points(curve)
    if len(P) < 2:
        raise DegenerateCurveError("need at least two samples")
    diam = float(np.max(pdist(P)))
    if diam == 0:
        raise DegenerateCurveError("all samples coincide")
    return float(np.sum(np.linalg.norm(np.diff(P, axis=0), axis=1))) / diam


def inclusion_residual(curve: PolylineCurve, fol: ConvexFoliation, n_samples: int = 256,
                       h_fd: float = H_FD, n_probes: int = 128):
    """Worst normal-cone residual of ``-curve'(s)`` at ``S_{curve(s)}``.

    Samples are equispaced in the open interval; those within ``h_fd`` of a
    polygon breakpoint are skipped.  Returns ``(max_residual, n_skipped)``
    with ``max_residual = None`` if every sample was skipped.
    """
    L = curve.length
    if L <= 2 * h_fd:
        raise DegenerateCurveError("curve too short for finite differences")
    s0 = curve.s[0]
    # irrational offset keeps the grid off uniformly spaced breakpoints
    grid = s0 + L * (np.arange(n_samples) + _GOLDEN) / n_samples
    bp = curve.breakpoints
    worst, skipped = -np.inf, 0
    for s in grid:
        j = np.searchsorted(bp, s)
        near = min(abs(s - bp[max(j - 1, 0)]), abs(bp[min(j, len(bp) - 1)] - s))
        if near <= h_fd or s - h_fd < s0 or s + h_fd > curve.s[-1]:
            skipped += 1
            continue
        x = curve(s)
        v = -(curve(s + h_fd) - curve(s - h_fd)) / (2 * h_fd)
        S = fol.set_at(min(max(fol.index_of(x), fol.a), fol.b))
        worst = max(worst, normal_residual(S, x, v, S.probes(x, n=n_probes)))
    return (float(worst) if np.isfinite(worst) else None), skipped


def tangent_continuity(curve: PolylineCurve, window: float, n_samples: int = 2000) -> float:
    """Max angle between consecutive secants of length ``window`` (radians)."""
    L = curve.length
    if L <= 2 * window:
        raise DegenerateCurveError("curve shorter than two windows")
    s = np.linspace(curve.s[0], curve.s[-1] - 2 * window, n_samples)
    p0, p1, p2 = curve(s), curve(s + window), curve(s + 2 * window)
    t1, t2 = p1 - p0, p2 - p1
    n1, n2 = np.linalg.norm(t1, axis=1), np.linalg.norm(t2, axis=1)
    ok = (n1 > 0) & (n2 > 0)
    if not ok.any():
        return 0.0
    # same angle as arccos of the clamped cosine, without its 1e-8 floor near 0
    chord = np.linalg.norm(t1[ok] / n1[ok, None] - t2[ok] / n2[ok, None], axis=1)
    return float(np.max(2.0 * np.arcsin(np.clip(0.5 * chord, 0.0, 1.0))))


def _rk4_step(F, y, h):
    k1 = F(y)
    k2 = F(y + 0.5 * h * k1)
    k3 = F(y + 0.5 * h * k2)
    k4 = F(y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _integrate(F, y0, h, events, max_steps):
    """Classic RK4 at fixed step ``h``; the step on which an event function
    first becomes ``<= 0`` is shortened by bisection so it ends on the event.
    Returns ``(ys, which_event)``."""
    ys = [np.asarray(y0, float)]
    y = ys[0]
    for _ in range(max_steps):
        y_new = _rk4_step(F, y, h)
        for k, g in enumerate(events):
            if g(y_new) <= 0:
                hits = [j for j, e in enumerate(events) if e(y_new) <= 0]
                fracs = {j: _event_fraction(F, y, h, events[j]) for j in hits}
                k = min(hits, key=fracs.get)
                ys.append(_rk4_step(F, y, fracs[k] * h))
                return np.array(ys), k
        ys.append(y_new)
        y = y_new
    return np.array(ys), None


def _event_fraction(F, y, h, g):
    lo, hi = 0.0, 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if g(_rk4_step(F, y, mid * h)) <= 0:
            hi = mid
        else:
            lo = mid
    return hi


@dataclass
class ReferenceFlow:
    """Reference orbit sampled at arclength ``s`` with derivatives for
    cubic Hermite evaluation; beyond its length the curve is held constant."""

    s: np.ndarray
    points: np.ndarray
    tangents: np.ndarray
    singular: bool
    reached_level: bool

    @property
    def length(self):
        return float(self.s[-1])

    @property
    def curve(self):
        return SampledCurve(self.s, self.points)

    def __call__(self, s):
        s = np.clip(np.asarray(s, float), self.s[0], self.s[-1])
        keep = np.concatenate([[True], np.diff(self.s) > 0])
        spline = CubicHermiteSpline(self.s[keep], self.points[keep], self.tangents[keep])
        return spline(s)


def reference_flow(f: QuasiconvexFunction, x0, arclength_budget: float,
                   stop_level: Optional[float] = None, step: float = 1e-4,
                   normalized: bool = True, grad_floor: float = GRAD_FLOOR) -> ReferenceFlow:
    """Integrate ``x' = -grad f / ||grad f||`` (or ``x' = -grad f``) from ``x0``.

    Classic RK4 with fixed ``step``; the final step is shortened to land on
    whichever comes first: the arclength budget, ``f = stop_level``, or
    ``||grad f|| = grad_floor`` (the last sets ``singular`` and returns the
    partial orbit).  Arclength is carried as an extra state, so the
    unnormalized flow is returned in arclength too.
    """
    if f.gradient is None:
        raise InputError("reference_flow needs a gradient")
    x0 = np.asarray(x0, float)
    d = x0.size

    grad = f.gradient

    def F(y):
        g = grad(y[:d])
        n = math.sqrt(float(g @ g))
        if normalized:
            return np.concatenate([-g / n if n > 0 else np.zeros(d), [1.0]])
        return np.concatenate([-g, [n]])

    events = [lambda y: math.sqrt(float(grad(y[:d]) @ grad(y[:d]))) - grad_floor,
              lambda y: arclength_budget - y[d]]
    if stop_level is not None:
        events.append(lambda y: f(y[:d]) - stop_level)
    if events[0](np.concatenate([x0, [0.0]])) <= 0:
        raise InputError("gradient vanishes at the starting point")
    max_steps = int(np.ceil(arclength_budget / step)) + 1 if normalized else 10_000_000
    Y, which = _integrate(F, np.concatenate([x0, [0.0]]), step, events, max_steps)
    dY = np.array([F(y) for y in Y])
    speed = dY[:, d:d + 1]
    tangents = np.divide(dY[:, :d], speed, out=np.zeros_like(dY[:, :d]), where=speed > 0)
    return ReferenceFlow(Y[:, d], Y[:, :d], tangents, which == 0, which == 2)


def sup_distance(curve_a, curve_b, length: float, n_grid: int = 4096) -> float:
    """Sup over a grid of ``[0, length]`` of ``||a(s) - b(s)||``; both curves
    are held at their endpoints beyond their own length."""
    grid = np.linspace(0.0, length, n_grid)
    return float(np.max(np.linalg.norm(curve_a(grid) - curve_b(grid), axis=1)))
