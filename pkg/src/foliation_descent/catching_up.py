"""Catching-up recursion: project successively onto ``S_{tau_1}, S_{tau_2}, ...``.

The polygon through the projected points is the discrete trajectory.  This
module builds it, extends it to a common arclength window, refines the
partition and compares consecutive refinements.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .convex_geometry import as_point
from .errors import DegenerateCurveError, DomainError, InputError, NumericalError
from .foliation import ConvexFoliation

K_CAP = 32.0
EPS_CONV = 1e-6
N_GRID = 4096


@dataclass(frozen=True)
class Partition:
    """Strictly decreasing levels ``b = tau_0 > tau_1 > ... > tau_n = a``."""

    levels: np.ndarray

    def __post_init__(self):
        lv = np.asarray(self.levels, float)
        if lv.ndim != 1 or lv.size < 2:
            raise InputError("a partition needs at least two levels")
        if not np.all(np.diff(lv) < 0):
            raise InputError("partition levels must be strictly decreasing")
        object.__setattr__(self, "levels", lv)

    @classmethod
    def uniform(cls, a, b, n):
        if n < 1:
            raise InputError("partition size must be >= 1")
        lv = b - (b - a) * np.arange(n + 1) / n
        lv[0], lv[-1] = b, a
        return cls(lv)

    @classmethod
    def geometric(cls, a, b, n, ratio=0.5):
        """Gaps shrink geometrically toward ``a``; the last gap is ``ratio``
        times the first, so the mesh is at most ``(b - a) / (n * ratio)``."""
        if n < 1:
            raise InputError("partition size must be >= 1")
        if not 0 < ratio <= 1:
            raise InputError("geometric ratio must lie in (0, 1]")
        q = ratio ** (1.0 / max(n - 1, 1))
        gaps = q ** np.arange(n)
        gaps *= (b - a) / gaps.sum()
        lv = b - np.concatenate([[0.0], np.cumsum(gaps)])
        lv[0], lv[-1] = b, a
        return cls(lv)

    @classmethod
    def make(cls, scheme, a, b, n):
        if scheme == "uniform":
            return cls.uniform(a, b, n)
        if scheme == "geometric":
            return cls.geometric(a, b, n)
        raise InputError(f"unknown partition scheme {scheme!r}")

    @property
    def n(self):
        return self.levels.size - 1

    @property
    def a(self):
        return float(self.levels[-1])

    @property
    def b(self):
        return float(self.levels[0])

    @property
    def mesh(self):
        return float(np.max(-np.diff(self.levels)))


class PolylineCurve:
    """Piecewise-linear curve through ``points`` at arclength marks ``s``,
    held constant at the last point on ``[s[-1], end]``."""

    def __init__(self, s, points, end: Optional[float] = None):
        s = np.asarray(s, float)
        P = np.atleast_2d(np.asarray(points, float))
        keep = np.concatenate([[True], np.diff(s) > 0])
        self.s = s[keep]
        self.points = P[keep]
        self.length = float(self.s[-1] - self.s[0])
        self.end = float(self.s[-1] if end is None else max(end, self.s[-1]))

    @property
    def dim(self):
        return self.points.shape[1]

    @property
    def breakpoints(self):
        return self.s

    def __call__(self, s):
        s = np.asarray(s, float)
        out = np.column_stack([np.interp(s.ravel(), self.s, self.points[:, k])
                               for k in range(self.dim)])
        return out[0] if s.ndim == 0 else out.reshape(s.shape + (self.dim,))

    def sample(self, n: int, until: Optional[float] = None) -> "SampledCurve":
        stop = self.s[-1] if until is None else until
        grid = np.linspace(self.s[0], stop, n)
        return SampledCurve(grid, self(grid))


@dataclass
class SampledCurve:
    """Points ``points[k]`` at parameters ``s[k]`` (nondecreasing)."""

    s: np.ndarray
    points: np.ndarray
    segment: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.s)

    def polyline(self) -> PolylineCurve:
        seg = np.linalg.norm(np.diff(self.points, axis=0), axis=1)
        return PolylineCurve(np.concatenate([[0.0], np.cumsum(seg)]), self.points)


@dataclass
class PolygonalTrajectory:
    vertices: np.ndarray
    partition: Partition
    arclengths: np.ndarray
    total_length: float
    extension_length: float
    start_distance: float

    @property
    def levels(self):
        return self.partition.levels

    @property
    def length_bound_ok(self):
        return self.total_length <= self.extension_length + 1e-12

    def distinct_vertices(self):
        keep = np.concatenate([[True], np.diff(self.arclengths) > 0])
        return self.vertices[keep]

    def step_index(self, s):
        """Index ``i`` of the segment ``[x_i, x_{i+1}]`` containing arclength ``s``."""
        idx = np.searchsorted(self.arclengths, np.asarray(s, float), side="right") - 1
        return np.clip(idx, 0, max(self.partition.n - 1, 0))


def run_partition(fol: ConvexFoliation, x0, part: Partition,
                  k_cap: float = K_CAP) -> PolygonalTrajectory:
    """``x_i = proj_{S_{tau_i}}(x_{i-1})`` for every level of ``part``."""
    x0 = as_point(x0, fol.dim)
    tol = 1e-12 * max(1.0, abs(fol.a), abs(fol.b))
    if abs(part.a - fol.a) > tol or abs(part.b - fol.b) > tol:
        raise InputError(f"partition spans [{part.a}, {part.b}], foliation is [{fol.a}, {fol.b}]")
    if not fol.set_at(fol.b).contains(x0):
        raise DomainError(f"x0 = {x0.tolist()} is not in S_b")
    verts = [x0]
    for i, tau in enumerate(part.levels[1:], start=1):
        try:
            verts.append(fol.set_at(tau).project(verts[-1]))
        except NumericalError as err:
            err.context.update(level_index=i, level=float(tau))
            raise
    V = np.array(verts)
    seg = np.linalg.norm(np.diff(V, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    d0 = fol.set_at(fol.a).distance(x0)
    return PolygonalTrajectory(V, part, s, float(s[-1]), k_cap * d0, d0)


def extend(traj: PolygonalTrajectory) -> PolylineCurve:
    """Unit-speed curve on ``[0, L_n]``, constant at the last vertex up to ``L*``."""
    return PolylineCurve(traj.arclengths, traj.vertices, end=traj.extension_length)


def arclength_parametrize(traj, n_samples: int) -> SampledCurve:
    """Equispaced arclength samples of the polygon, endpoints included."""
    if traj.total_length <= 0:
        raise DegenerateCurveError("cannot arclength-parametrize a zero-length trajectory")
    if n_samples < 2:
        raise InputError("need at least two samples")
    curve = PolylineCurve(traj.arclengths, traj.vertices)
    grid = np.linspace(0.0, traj.total_length, n_samples)
    return SampledCurve(grid, curve(grid), traj.step_index(grid))


@dataclass
class RefinementLevel:
    n: int
    mesh: float
    vertex_count: int
    total_length: float
    sup_distance: Optional[float]


@dataclass
class RefinementReport:
    levels: list = field(default_factory=list)
    extension_length: float = 0.0
    eps_conv: float = EPS_CONV
    converged: bool = False

    @property
    def sup_distances(self):
        return [lv.sup_distance for lv in self.levels[1:]]

    @property
    def total_lengths(self):
        return [lv.total_length for lv in self.levels]

    def observed_rates(self):
        """``log2`` of successive sup-distance ratios (reported, not asserted)."""
        d = [x for x in self.sup_distances if x is not None]
        out = []
        for p, q in zip(d[:-1], d[1:]):
            out.append(float(np.log2(p / q)) if p > 0 and q > 0 else None)
        return out

    def last_length_change(self):
        L = self.total_lengths
        if len(L) < 2 or L[-2] == 0:
            return None
        return abs(L[-1] - L[-2]) / L[-2]


def refine(fol: ConvexFoliation, x0, schedule: Sequence[int], scheme: str = "uniform",
           eps_conv: float = EPS_CONV, n_grid: int = N_GRID, k_cap: float = K_CAP):
    """Run the recursion on successively finer partitions.

    Returns the finest trajectory and a :class:`RefinementReport` whose
    sup-distances compare consecutive extended curves on a common grid of
    ``[0, L*]``.
    """
    schedule = [int(n) for n in schedule]
    if not schedule or any(q <= p for p, q in zip(schedule[:-1], schedule[1:])):
        raise InputError(f"refinement schedule must be strictly increasing, got {schedule}")
    report = RefinementReport(eps_conv=eps_conv)
    prev, traj = None, None
    for n in schedule:
        traj = run_partition(fol, x0, Partition.make(scheme, fol.a, fol.b, n), k_cap=k_cap)
        curve = extend(traj)
        L_star = max(traj.extension_length, traj.total_length)
        grid = np.linspace(0.0, L_star, n_grid)
        here = curve(grid)
        sup = None
        if prev is not None:
            p_grid, p_points = prev
            if p_grid[-1] != grid[-1]:
                here_common = curve(p_grid)
                sup = float(np.max(np.linalg.norm(here_common - p_points, axis=1)))
            else:
                sup = float(np.max(np.linalg.norm(here - p_points, axis=1)))
        report.levels.append(RefinementLevel(n, traj.partition.mesh, len(traj.distinct_vertices()),
                                             traj.total_length, sup))
        report.extension_length = L_star
        prev = (grid, here)
    last = report.levels[-1].sup_distance
    report.converged = last is not None and last < eps_conv
    return traj, report


# ---------------------------------------------------------------------------
# discrete invariants of a single trajectory

def target_probes(fol: ConvexFoliation, n: int = 64) -> np.ndarray:
    """``n`` points of ``S_a``: boundary samples plus points halfway to the anchor."""
    S = fol.set_at(fol.a)
    nb = n - n // 4 - 1
    bnd = S.boundary_samples(nb)[:nb]
    mid = 0.5 * (S.boundary_samples(n // 4)[: n // 4] + S.anchor)
    return np.vstack([bnd, mid, S.anchor[None, :]])


def fejer_violation(traj: PolygonalTrajectory, probes: np.ndarray) -> float:
    """``max_i,z ||x_{i+1} - z|| - ||x_i - z||``; nonpositive means Fejer monotone."""
    D = np.linalg.norm(traj.vertices[:, None, :] - probes[None, :, :], axis=2)
    return float(np.max(D[1:] - D[:-1])) if len(D) > 1 else 0.0


def confinement_excess(traj: PolygonalTrajectory, fol: ConvexFoliation) -> float:
    """How far the vertices leave the ball of radius ``dist(x0, S_a)`` about ``P_{S_a}(x0)``."""
    Sa = fol.set_at(fol.a)
    c = Sa.project(traj.vertices[0])
    return float(np.max(np.linalg.norm(traj.vertices - c, axis=1)) - traj.start_distance)


def level_monotonicity(traj: PolygonalTrajectory, fol: ConvexFoliation):
    """Return ``(max |index_of(x_i) - tau_i|, strictly_decreasing)`` over the
    vertices reached by nonzero steps."""
    moved = np.concatenate([[False], np.diff(traj.arclengths) > 0])
    idx = np.array([fol.index_of(v) for v in traj.vertices])
    err = float(np.max(np.abs(idx[moved] - traj.levels[moved]))) if moved.any() else 0.0
    distinct = idx[np.concatenate([[True], moved[1:]])]
    return err, bool(np.all(np.diff(distinct) < 0))


def membership_excess(traj: PolygonalTrajectory, fol: ConvexFoliation) -> float:
    return float(max(fol.set_at(t).distance(v) for t, v in zip(traj.levels[1:], traj.vertices[1:])))


def longest_stall(curve: PolylineCurve, fol: ConvexFoliation, n_samples: int = 4096,
                  tol: float = 1e-13) -> float:
    """Longest arclength window on which ``index_of`` does not decrease."""
    if curve.length <= 0:
        return 0.0
    grid = np.linspace(curve.s[0], curve.s[-1], n_samples)
    idx = np.array([fol.index_of(p) for p in curve(grid)])
    flat = np.diff(idx) >= -tol * max(1.0, abs(fol.b))
    best = run = 0
    for f in flat:
        run = run + 1 if f else 0
        best = max(best, run)
    return float(best * (grid[1] - grid[0]))
