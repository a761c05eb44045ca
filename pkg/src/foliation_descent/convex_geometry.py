"""Closed convex sets with metric projections and normal-cone tests.

Every set exposes the same small surface:

* ``contains(x)`` -- membership up to ``MEMBERSHIP_TOL``
* ``project(x)`` -- the nearest point of the set
* ``distance(x)`` -- ``||x - project(x)||``
* ``depth(x)`` -- signed distance to the complement (positive inside)
* ``boundary_samples(n)`` -- deterministic points of the boundary
* ``probes(xbar)`` -- a probe cloud for :func:`normal_residual`

Sets are immutable once built; all methods are pure.
"""
from __future__ import annotations

import itertools
from typing import Callable, Optional

import numpy as np
from scipy import optimize
from scipy.stats import qmc, norm as _normal

from .errors import InputError, ProjectionError, ValidationError

EPS_PROJ = 1e-10
MEMBERSHIP_TOL = 1e-9
MAX_ITER = 10_000

# active-set enumeration is exact but combinatorial; beyond this many
# candidate subsets the polytope projection switches to Dykstra
_MAX_ACTIVE_SUBSETS = 20_000


def as_point(x, dim: Optional[int] = None) -> np.ndarray:
    """Return ``x`` as a finite 1-d float array, checking the dimension."""
    p = np.array(x, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise InputError(f"expected a 1-d coordinate vector, got shape {p.shape}")
    if dim is not None and p.size != dim:
        raise InputError(f"dimension mismatch: expected {dim}, got {p.size}")
    if not np.all(np.isfinite(p)):
        raise InputError(f"point has non-finite coordinates: {p}")
    return p


def sphere_directions(dim: int, n: int) -> np.ndarray:
    """Deterministic, roughly uniform unit vectors in ``R^dim``.

    ``dim == 2`` uses equispaced angles; higher dimensions push a fixed
    scrambled Sobol sequence through the Gaussian quantile function.
    """
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    if dim == 2:
        theta = 2.0 * np.pi * np.arange(n) / n
        return np.column_stack([np.cos(theta), np.sin(theta)])
    sampler = qmc.Sobol(d=dim, scramble=True, seed=20131201)
    m = int(np.ceil(np.log2(max(n, 2))))
    u = sampler.random_base2(m)[:n]
    g = _normal.ppf(np.clip(u, 1e-12, 1 - 1e-12))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


class ConvexSet:
    """Base class. Subclasses implement ``_inside``, ``_project`` and ``ray_exit``."""

    kind = "abstract"
    dim: int
    anchor: np.ndarray

    def _check(self, x) -> np.ndarray:
        return as_point(x, self.dim)

    def _inside(self, x: np.ndarray) -> bool:
        """Exact (no tolerance) membership predicate."""
        raise NotImplementedError

    def _project(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def project(self, x) -> np.ndarray:
        x = self._check(x)
        if self._inside(x):
            return x.copy()
        return self._project(x)

    def distance(self, x) -> float:
        x = self._check(x)
        if self._inside(x):
            return 0.0
        return float(np.linalg.norm(x - self._project(x)))

    def contains(self, x, tol: float = MEMBERSHIP_TOL) -> bool:
        return self.distance(x) <= tol

    def depth(self, x) -> float:
        """Distance to the complement for inside points, minus the distance otherwise."""
        x = self._check(x)
        if not self._inside(x):
            return -float(np.linalg.norm(x - self._project(x)))
        return self._interior_depth(x)

    def _interior_depth(self, x: np.ndarray) -> float:
        # upper bound from the boundary sample cloud
        b = self.boundary_samples(512)
        return float(np.min(np.linalg.norm(b - x, axis=1)))

    def ray_exit(self, u: np.ndarray) -> np.ndarray:
        """Boundary point ``anchor + rho*u`` (``rho = inf`` if the ray never exits)."""
        raise NotImplementedError

    def boundary_samples(self, n: int = 128) -> np.ndarray:
        pts = [self.ray_exit(u) for u in sphere_directions(self.dim, n)]
        pts = [p for p in pts if np.all(np.isfinite(p))]
        return np.array(pts).reshape(-1, self.dim)

    def scale(self) -> float:
        b = self.boundary_samples(64)
        if len(b) == 0:
            return 1.0
        return float(max(np.max(np.linalg.norm(b - self.anchor, axis=1)), 1e-12))

    def probes(self, xbar=None, n: int = 128, n_local: int = 16) -> np.ndarray:
        """Boundary samples, the interior anchor and, if ``xbar`` is given,
        projections of small spheres around ``xbar`` (these are what catch
        near-tangent directions)."""
        clouds = [self.boundary_samples(n), self.anchor[None, :]]
        if xbar is not None:
            xbar = self._check(xbar)
            r = self.scale()
            dirs = sphere_directions(self.dim, n_local)
            for rho in (1e-3, 1e-2, 1e-1):
                clouds.append(np.array([self.project(xbar + rho * r * u) for u in dirs]))
        return np.vstack(clouds)


class Ball(ConvexSet):
    kind = "ball"

    def __init__(self, center, radius: float):
        self.center = as_point(center)
        self.dim = self.center.size
        if not (np.isfinite(radius) and radius > 0):
            raise ValidationError(f"ball radius must be positive, got {radius}")
        self.radius = float(radius)
        self.anchor = self.center

    def __repr__(self):
        return f"Ball(center={self.center.tolist()}, radius={self.radius!r})"

    def _inside(self, x):
        return float(np.linalg.norm(x - self.center)) <= self.radius

    def _project(self, x):
        d = x - self.center
        return self.center + d * (self.radius / np.linalg.norm(d))

    def _interior_depth(self, x):
        return self.radius - float(np.linalg.norm(x - self.center))

    def ray_exit(self, u):
        u = np.asarray(u, float)
        return self.center + self.radius * u / np.linalg.norm(u)


class Halfspace(ConvexSet):
    """``{y : <normal, y> <= offset}``."""

    kind = "halfspace"

    def __init__(self, normal, offset: float, extent: float = 1.0):
        self.normal = as_point(normal)
        self.dim = self.normal.size
        nn = float(np.linalg.norm(self.normal))
        if nn == 0:
            raise ValidationError("halfspace normal must be nonzero")
        self.offset = float(offset)
        self._unit = self.normal / nn
        self._foot = self._unit * (self.offset / nn)
        self.anchor = self._foot - self._unit
        self.extent = float(extent)

    def __repr__(self):
        return f"Halfspace(normal={self.normal.tolist()}, offset={self.offset!r})"

    def _inside(self, x):
        return float(self.normal @ x) <= self.offset

    def _project(self, x):
        excess = float(self.normal @ x) - self.offset
        return x - excess * self.normal / float(self.normal @ self.normal)

    def _interior_depth(self, x):
        return (self.offset - float(self.normal @ x)) / float(np.linalg.norm(self.normal))

    def ray_exit(self, u):
        u = np.asarray(u, float)
        s = float(self._unit @ u)
        if s <= 0:
            return np.full(self.dim, np.inf)
        return self.anchor + u * (1.0 / s)

    def boundary_samples(self, n=128):
        if self.dim == 1:
            return self._foot[None, :].copy()
        if self.dim == 2:
            t = self.extent * np.linspace(-1.0, 1.0, n)
            return self._foot + t[:, None] * np.array([-self._unit[1], self._unit[0]])
        # disc of radius ``extent`` in the bounding hyperplane around the foot point
        basis = np.linalg.svd(self._unit[None, :])[2][1:]
        dirs = sphere_directions(self.dim - 1, n)
        radii = self.extent * np.sqrt((np.arange(len(dirs)) + 0.5) / len(dirs))
        return self._foot + (radii[:, None] * dirs) @ basis

    def scale(self):
        return self.extent


class Ellipsoid(ConvexSet):
    """``{y : (y - center)^T shape (y - center) <= radius^2}`` with ``shape`` SPD."""

    kind = "ellipsoid"

    def __init__(self, shape, center, radius: float = 1.0):
        A = np.array(shape, dtype=float)
        self.center = as_point(center)
        self.dim = self.center.size
        if A.shape != (self.dim, self.dim):
            raise InputError(f"shape matrix must be {self.dim}x{self.dim}, got {A.shape}")
        if not np.allclose(A, A.T, rtol=0, atol=1e-12 * max(1.0, np.abs(A).max())):
            raise ValidationError("ellipsoid shape matrix is not symmetric")
        evals, evecs = np.linalg.eigh(0.5 * (A + A.T))
        if evals[0] <= 0:
            raise ValidationError(f"ellipsoid shape matrix is not positive definite: {evals}")
        if not (np.isfinite(radius) and radius > 0):
            raise ValidationError(f"ellipsoid radius must be positive, got {radius}")
        self.shape = A
        self.radius = float(radius)
        self._evals = evals
        self._evecs = evecs
        self.anchor = self.center

    def __repr__(self):
        return (f"Ellipsoid(shape={self.shape.tolist()}, center={self.center.tolist()}, "
                f"radius={self.radius!r})")

    def _q(self, x):
        d = x - self.center
        return float(d @ self.shape @ d)

    def _inside(self, x):
        return self._q(x) <= self.radius ** 2

    def multiplier(self, x) -> float:
        """KKT multiplier ``lam`` with ``project(x) = c + (I + lam*A)^-1 (x - c)``."""
        x = self._check(x)
        if self._inside(x):
            return 0.0
        z = self._evecs.T @ (x - self.center)
        a = self._evals
        r2 = self.radius ** 2
        w = a * z * z
        # phi is convex and decreasing, so Newton from lam=0 increases monotonically
        lam = 0.0
        for _ in range(200):
            den = 1.0 + lam * a
            phi = float(np.sum(w / den ** 2)) - r2
            dphi = float(np.sum(-2.0 * a * w / den ** 3))
            step = -phi / dphi
            lam_new = lam + step
            if not step > 1e-17 * max(1.0, lam):
                break
            lam = lam_new
        else:
            raise ProjectionError("ellipsoid multiplier iteration did not settle",
                                  residual=abs(phi))
        return lam

    def _project(self, x):
        lam = self.multiplier(x)
        z = self._evecs.T @ (x - self.center)
        return self.center + self._evecs @ (z / (1.0 + lam * self._evals))

    def _interior_depth(self, x):
        # nearest boundary point solves (I - mu*A)(y - c) = x - c with 0 < mu <= 1/a_max
        z = self._evecs.T @ (x - self.center)
        a = self._evals
        r2 = self.radius ** 2
        a_max = a[-1]
        mu_cap = 1.0 / a_max
        top = np.isclose(a, a_max, rtol=1e-12, atol=0)

        def psi(mu):
            with np.errstate(divide="ignore"):
                return float(np.sum(a * z * z / (1.0 - mu * a) ** 2)) - r2

        if np.all(np.abs(z[top]) <= 1e-300):
            rest = ~top
            y = np.zeros_like(z)
            y[rest] = z[rest] / (1.0 - mu_cap * a[rest])
            filled = float(np.sum(a[rest] * y[rest] ** 2))
            if filled < r2:
                k = np.flatnonzero(top)[0]
                y[k] = np.sqrt((r2 - filled) / a_max)
                return float(np.linalg.norm(y - z))
        if psi(0.0) >= 0:
            return 0.0
        hi = mu_cap * (1.0 - 1e-15)
        if psi(hi) <= 0:
            # top components are tiny but nonzero: numerically the degenerate case
            return super()._interior_depth(x)
        mu = optimize.brentq(psi, 0.0, hi, xtol=1e-16, rtol=4 * np.finfo(float).eps)
        y = z / (1.0 - mu * a)
        return float(np.linalg.norm(y - z))

    def ray_exit(self, u):
        u = np.asarray(u, float)
        return self.center + self.radius * u / np.sqrt(float(u @ self.shape @ u))


class Polytope(ConvexSet):
    """Finite intersection of halfspaces ``G y <= h``.

    Nonemptiness is certified by ``interior_point``, which must satisfy
    ``G p < h`` strictly.
    """

    kind = "polytope"

    def __init__(self, G, h, interior_point, *, box_bounds=None):
        self.G = np.atleast_2d(np.array(G, dtype=float))
        self.h = np.array(h, dtype=float).ravel()
        p = as_point(interior_point)
        self.dim = p.size
        if self.G.shape != (self.h.size, self.dim):
            raise InputError(f"inconsistent polytope data: G {self.G.shape}, h {self.h.shape}")
        if np.any(np.linalg.norm(self.G, axis=1) == 0):
            raise ValidationError("polytope has a zero facet normal")
        if not np.all(self.G @ p < self.h):
            raise ValidationError("polytope interior point is not strictly feasible",
                                  witness=p.tolist())
        self.anchor = p
        self._box = box_bounds

    @classmethod
    def box(cls, lower, upper):
        lo, hi = as_point(lower), as_point(upper)
        if lo.size != hi.size or np.any(hi <= lo):
            raise ValidationError("box bounds must satisfy lower < upper componentwise")
        d = lo.size
        G = np.vstack([np.eye(d), -np.eye(d)])
        h = np.concatenate([hi, -lo])
        return cls(G, h, 0.5 * (lo + hi), box_bounds=(lo, hi))

    def __repr__(self):
        if self._box is not None:
            return f"Polytope.box({self._box[0].tolist()}, {self._box[1].tolist()})"
        return f"Polytope(G={self.G.tolist()}, h={self.h.tolist()})"

    @property
    def is_box(self):
        return self._box is not None

    def _inside(self, x):
        if self._box is not None:
            return bool(np.all(x >= self._box[0]) and np.all(x <= self._box[1]))
        return bool(np.all(self.G @ x <= self.h))

    def _project(self, x):
        if self._box is not None:
            return np.clip(x, self._box[0], self._box[1])
        m = self.h.size
        n_subsets = sum(_comb(m, k) for k in range(1, min(m, self.dim) + 1))
        if n_subsets > _MAX_ACTIVE_SUBSETS:
            return self._dykstra(x)
        return self._active_set(x)

    def _active_set(self, x):
        G, h = self.G, self.h
        tol = 1e-12 * max(1.0, float(np.abs(h).max()), float(np.abs(x).max()))
        best, best_d = None, np.inf
        for k in range(1, min(h.size, self.dim) + 1):
            for idx in itertools.combinations(range(h.size), k):
                GA = G[list(idx)]
                M = GA @ GA.T
                if np.linalg.matrix_rank(M) < k:
                    continue
                nu = np.linalg.solve(M, GA @ x - h[list(idx)])
                if np.any(nu < -tol):
                    continue
                y = x - GA.T @ nu
                if np.all(G @ y <= h + tol):
                    d = float(np.linalg.norm(y - x))
                    if d < best_d:
                        best, best_d = y, d
            if best is not None:
                # KKT points are unique; smaller active sets found first suffice
                break
        if best is None:
            raise ProjectionError("no KKT active set found for polytope projection")
        return best

    def _dykstra(self, x):
        m = self.h.size
        y = x.copy()
        incr = np.zeros((m, self.dim))
        gg = np.einsum("ij,ij->i", self.G, self.G)
        for it in range(MAX_ITER):
            y_prev = y.copy()
            for j in range(m):
                w = y + incr[j]
                excess = self.G[j] @ w - self.h[j]
                z = w - max(excess, 0.0) * self.G[j] / gg[j]
                incr[j] = w - z
                y = z
            if np.linalg.norm(y - y_prev) <= 0.1 * EPS_PROJ and np.all(self.G @ y <= self.h + EPS_PROJ):
                return y
        raise ProjectionError("Dykstra projection did not converge",
                              residual=float(np.linalg.norm(y - y_prev)))

    def _interior_depth(self, x):
        return float(np.min((self.h - self.G @ x) / np.linalg.norm(self.G, axis=1)))

    def ray_exit(self, u):
        u = np.asarray(u, float)
        gu = self.G @ u
        slack = self.h - self.G @ self.anchor
        pos = gu > 0
        if not np.any(pos):
            return np.full(self.dim, np.inf)
        return self.anchor + float(np.min(slack[pos] / gu[pos])) * u

    def vertices(self) -> np.ndarray:
        """All vertices (brute force over d-subsets of facets)."""
        out = []
        for idx in itertools.combinations(range(self.h.size), self.dim):
            GA = self.G[list(idx)]
            if np.linalg.matrix_rank(GA) < self.dim:
                continue
            v = np.linalg.solve(GA, self.h[list(idx)])
            if np.all(self.G @ v <= self.h + 1e-12):
                out.append(v)
        return np.unique(np.round(np.array(out), 14), axis=0) if out else np.empty((0, self.dim))

    def boundary_samples(self, n=128):
        pts = super().boundary_samples(n)
        if self.h.size <= 32:
            pts = np.vstack([pts, self.vertices()])
        return pts


def _comb(m, k):
    from math import comb
    return comb(m, k)


class SublevelSet(ConvexSet):
    """``{y : f(y) <= level}`` for a smooth convex ``f``.

    The projection minimises ``0.5*||y - x||^2 + lam*(f(y) - level)``: an
    inner damped-Newton solve for fixed ``lam`` and an outer bisection on
    ``lam`` until ``f(y(lam)) = level``.  ``anchor`` must satisfy
    ``f(anchor) < level``.
    """

    kind = "sublevel"

    def __init__(self, func: Callable, level: float, anchor, grad: Optional[Callable] = None,
                 hess: Optional[Callable] = None, eps: float = EPS_PROJ,
                 max_iter: int = MAX_ITER, ray_cap: float = 1e6):
        self.func = func
        self.level = float(level)
        self.anchor = as_point(anchor)
        self.dim = self.anchor.size
        if not float(func(self.anchor)) < self.level:
            raise ValidationError("sublevel anchor must satisfy f(anchor) < level",
                                  witness=self.anchor.tolist())
        self.grad = grad if grad is not None else _fd_gradient(func)
        self.hess = hess if hess is not None else _fd_hessian(self.grad)
        self.eps = eps
        self.max_iter = max_iter
        self.ray_cap = ray_cap

    def __repr__(self):
        return f"SublevelSet(func={getattr(self.func, '__name__', self.func)}, level={self.level!r})"

    def _inside(self, x):
        return float(self.func(x)) <= self.level

    def _penalised_min(self, x, lam, y, budget):
        """Minimise ``0.5||y-x||^2 + lam f(y)`` by damped Newton from ``y``."""
        used = 0
        I = np.eye(self.dim)

        def merit(z):
            return 0.5 * float((z - x) @ (z - x)) + lam * float(self.func(z))

        def resid(z):
            return float(np.linalg.norm(z - x + lam * self.grad(z)))

        g_prev = np.inf
        while True:
            g = y - x + lam * self.grad(y)
            gn = float(np.linalg.norm(g))
            if gn <= 1e-13 * max(1.0, np.linalg.norm(x)):
                return y, used
            if gn < 1e-9 and gn > 0.5 * g_prev:
                # Newton has hit the noise floor of the gradient
                return y, used
            g_prev = gn
            if used >= budget:
                raise ProjectionError("sublevel projection exceeded its iteration budget",
                                      residual=float(np.linalg.norm(g)))
            H = I + lam * self.hess(y)
            try:
                step = -np.linalg.solve(H, g)
            except np.linalg.LinAlgError:
                step = -g
            if float(step @ g) >= 0:
                step = -g
            m0, t = merit(y), 1.0
            # near the minimiser the merit decrease drops below rounding, so a
            # step that shrinks the optimality residual is accepted as well
            while (merit(y + t * step) > m0 + 1e-4 * t * float(step @ g)
                   and resid(y + t * step) > (1.0 - 1e-4 * t) * gn and t > 1e-12):
                t *= 0.5
            used += 1
            y_new = y + t * step
            # stalls once gradient noise dominates (finite-difference gradients)
            if np.linalg.norm(y_new - y) <= 1e-15 * max(1.0, np.linalg.norm(y)) or t <= 1e-12:
                return y_new, used
            y = y_new

    def _project(self, x):
        budget = self.max_iter
        lo, hi = 0.0, 1.0
        y_lo = x.copy()
        y_hi, used = self._penalised_min(x, hi, x.copy(), budget)
        budget -= used
        while float(self.func(y_hi)) > self.level:
            lo, y_lo = hi, y_hi
            hi *= 2.0
            y_hi, used = self._penalised_min(x, hi, y_hi, budget)
            budget -= used
            if hi > 1e300 or budget <= 0:
                raise ProjectionError("could not bracket the sublevel multiplier",
                                      residual=float(self.func(y_hi)) - self.level)
        while np.linalg.norm(y_hi - y_lo) > 0.01 * self.eps:
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            y_mid, used = self._penalised_min(x, mid, y_hi, budget)
            budget -= used
            if budget <= 0:
                raise ProjectionError("sublevel projection exceeded its iteration budget",
                                      residual=float(np.linalg.norm(y_hi - y_lo)))
            if float(self.func(y_mid)) > self.level:
                lo, y_lo = mid, y_mid
            else:
                hi, y_hi = mid, y_mid
        return y_hi

    def ray_exit(self, u):
        u = np.asarray(u, float) / np.linalg.norm(u)
        lo, hi = 0.0, 1.0
        while self._inside(self.anchor + hi * u):
            lo, hi = hi, 2.0 * hi
            if hi > self.ray_cap:
                return np.full(self.dim, np.inf)
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            if self._inside(self.anchor + mid * u):
                lo = mid
            else:
                hi = mid
        return self.anchor + lo * u

    def probes(self, xbar=None, n=64, n_local=16):
        # projections of a fixed cloud on a sphere around the anchor
        r = 2.0 * self.scale()
        cloud = self.anchor + r * sphere_directions(self.dim, n)
        clouds = [np.array([self.project(c) for c in cloud]), self.anchor[None, :]]
        if xbar is not None:
            xbar = self._check(xbar)
            dirs = sphere_directions(self.dim, n_local)
            for rho in (1e-3, 1e-2, 1e-1):
                clouds.append(np.array([self.project(xbar + rho * r * u) for u in dirs]))
        return np.vstack(clouds)


def _fd_gradient(func, h=1e-3):
    # fourth-order central stencil: truncation and rounding both near 1e-13
    def grad(x):
        x = np.asarray(x, float)
        g = np.empty_like(x)
        for i in range(x.size):
            e = np.zeros_like(x)
            e[i] = h * max(1.0, abs(x[i]))
            g[i] = (8 * (func(x + e) - func(x - e)) - (func(x + 2 * e) - func(x - 2 * e))) / (12 * e[i])
        return g
    return grad


def _fd_hessian(grad, h=1e-4):
    def hess(x):
        x = np.asarray(x, float)
        H = np.empty((x.size, x.size))
        for i in range(x.size):
            e = np.zeros_like(x)
            e[i] = h * max(1.0, abs(x[i]))
            H[:, i] = (grad(x + e) - grad(x - e)) / (2 * e[i])
        return 0.5 * (H + H.T)
    return hess


def distance(cset: ConvexSet, x) -> float:
    return cset.distance(x)


def project(cset: ConvexSet, x) -> np.ndarray:
    return cset.project(x)


def normal_residual(cset: ConvexSet, xbar, v, probes=None) -> float:
    """Largest normalised violation of ``<v, y - xbar> <= 0`` over the probes.

    A value ``<= tol`` certifies ``v`` in the normal cone at ``xbar``
    against the sample.  ``probes`` defaults to ``cset.probes(xbar)``.
    """
    xbar = cset._check(xbar)
    v = as_point(v, cset.dim)
    nv = float(np.linalg.norm(v))
    if nv == 0:
        raise InputError("normal_residual needs a nonzero direction")
    if cset.distance(xbar) > EPS_PROJ:
        raise InputError("normal_residual base point is not in the set")
    P = cset.probes(xbar) if probes is None else np.atleast_2d(np.asarray(probes, float))
    if P.size == 0:
        raise InputError("normal_residual needs at least one probe point")
    if P.shape[1] != cset.dim:
        raise InputError(f"probe dimension mismatch: expected {cset.dim}, got {P.shape[1]}")
    diff = P - xbar
    scale = np.maximum(1.0, np.linalg.norm(diff, axis=1))
    return float(np.max(diff @ v / (nv * scale)))
