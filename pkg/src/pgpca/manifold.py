"""Manifold models and the data-driven closed-spline fitting pipeline.

A manifold maps a low dimensional state z to a point in R^n and exposes
tangent vectors there. Closed curves are parameterized on [0, period) and
out-of-range states wrap around; the torus uses two angles on [0, 2pi)^2.

The spline pipeline turns a point cloud into a closed curve: k-means
centers become knots, the shortest closed tour orders them, and a periodic
cubic spline parameterized by cumulative chord length interpolates them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import (
    DegenerateKnots,
    DegenerateTangent,
    InsufficientData,
    TooManyKnots,
)

TWO_PI = 2.0 * math.pi
_TANGENT_EPS = 1e-12


def _check_tangent(t):
    norms = np.linalg.norm(t, axis=-1)
    if np.any(norms < _TANGENT_EPS):
        raise DegenerateTangent("tangent norm below 1e-12")


class Ellipse2D:
    """Planar closed curve [cos z, 2 sin z] with z in [0, 2pi)."""

    latent_dim = 1
    ambient_dim = 2
    period = TWO_PI

    def evaluate(self, z):
        z = np.asarray(z, dtype=float) % TWO_PI
        return np.stack([np.cos(z), 2.0 * np.sin(z)], axis=-1)

    def tangent(self, z):
        z = np.asarray(z, dtype=float) % TWO_PI
        t = np.stack([-np.sin(z), 2.0 * np.cos(z)], axis=-1)
        _check_tangent(t)
        return t


class TorusR3:
    """Torus of revolution in R^3, major radius 3 and minor radius 1."""

    latent_dim = 2
    ambient_dim = 3
    period = (TWO_PI, TWO_PI)

    def evaluate(self, z):
        z = np.asarray(z, dtype=float) % TWO_PI
        z1, z2 = z[..., 0], z[..., 1]
        ring = 3.0 + np.cos(z2)
        return np.stack([ring * np.cos(z1), ring * np.sin(z1), np.sin(z2)], axis=-1)

    def tangent(self, z):
        """Partial derivatives along the two angles, shape (..., 2, 3)."""
        z = np.asarray(z, dtype=float) % TWO_PI
        z1, z2 = z[..., 0], z[..., 1]
        ring = 3.0 + np.cos(z2)
        zero = np.zeros_like(z1)
        d1 = np.stack([-ring * np.sin(z1), ring * np.cos(z1), zero], axis=-1)
        d2 = np.stack(
            [-np.sin(z2) * np.cos(z1), -np.sin(z2) * np.sin(z1), np.cos(z2)], axis=-1
        )
        t = np.stack([d1, d2], axis=-2)
        _check_tangent(t)
        return t


class ClosedSplineRn:
    """Closed (periodic) cubic spline through ordered knots in R^n.

    The parameter is cumulative chord length along the knot cycle, so the
    domain is [0, L) with L the perimeter of the closed knot polygon. The
    curve and its first two derivatives are continuous across the seam.
    """

    latent_dim = 1

    def __init__(self, knots, ordering, spline):
        self.knots = np.asarray(knots, dtype=float)
        self.ordering = np.asarray(ordering, dtype=int)
        self._spline = spline
        self._deriv = spline.derivative()
        self.period = float(spline.x[-1])
        self.ambient_dim = self.knots.shape[1]

    @classmethod
    def from_ordered_knots(cls, knots, ordering=None):
        """Interpolate knots (already in traversal order) by a periodic spline."""
        knots = np.asarray(knots, dtype=float)
        if knots.ndim != 2 or knots.shape[0] < 3:
            raise ValueError("need at least 3 knots of equal dimension")
        closed = np.vstack([knots, knots[:1]])
        seg = np.linalg.norm(np.diff(closed, axis=0), axis=1)
        if np.any(seg < 1e-10):
            raise DegenerateKnots("consecutive knots closer than 1e-10")
        breaks = np.concatenate([[0.0], np.cumsum(seg)])
        spline = CubicSpline(breaks, closed, axis=0, bc_type="periodic")
        if ordering is None:
            ordering = np.arange(knots.shape[0])
        return cls(knots, ordering, spline)

    def evaluate(self, z):
        z = np.asarray(z, dtype=float) % self.period
        return self._spline(z)

    def tangent(self, z):
        z = np.asarray(z, dtype=float) % self.period
        t = self._deriv(z)
        _check_tangent(t)
        return t


@dataclass
class LandmarkSet:
    """Discretization states z_1..z_M with probability weights."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.ndim != 1 or len(self.weights) != len(self.points):
            raise ValueError("one weight per landmark required")
        if np.any(self.weights < 0):
            raise ValueError("landmark weights must be nonnegative")
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError("landmark weights must sum to 1")

    def __len__(self):
        return len(self.weights)


def _sq_distances(data, centers):
    d2 = (
        np.sum(data * data, axis=1)[:, None]
        - 2.0 * (data @ centers.T)
        + np.sum(centers * centers, axis=1)[None, :]
    )
    np.maximum(d2, 0.0, out=d2)
    return d2


def _kmeans_pp_init(data, k, rng):
    T = data.shape[0]
    centers = np.empty((k, data.shape[1]))
    centers[0] = data[rng.integers(T)]
    d2 = np.sum((data - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = rng.choice(T, p=d2 / total)
        else:
            idx = rng.integers(T)
        centers[j] = data[idx]
        np.minimum(d2, np.sum((data - centers[j]) ** 2, axis=1), out=d2)
    return centers


def kmeans(data, k, seed, max_iters=300, tol=1e-8, return_history=False):
    """Lloyd's algorithm with k-means++ seeding.

    Runs until the largest center shift drops below `tol` or `max_iters`
    passes. Empty clusters are re-seeded to the sample farthest from its
    assigned center. With `return_history` the per-iteration clustering
    objective (sum of squared distances to the nearest center) is returned
    alongside the (k, n) center array.
    """
    data = np.asarray(data, dtype=float)
    T = data.shape[0]
    if k < 1:
        raise ValueError("k must be at least 1")
    if T < k:
        raise InsufficientData(f"{T} samples but {k} clusters requested")
    rng = np.random.default_rng(seed)
    centers = _kmeans_pp_init(data, k, rng)
    history = []
    for _ in range(max_iters):
        d2 = _sq_distances(data, centers)
        labels = np.argmin(d2, axis=1)
        dmin = d2[np.arange(T), labels]
        history.append(float(dmin.sum()))
        new_centers = centers.copy()
        counts = np.bincount(labels, minlength=k)
        dmin_work = dmin.copy()
        for j in range(k):
            if counts[j] > 0:
                new_centers[j] = data[labels == j].mean(axis=0)
            else:
                far = int(np.argmax(dmin_work))
                new_centers[j] = data[far]
                dmin_work[far] = 0.0
        shift = float(np.max(np.linalg.norm(new_centers - centers, axis=1)))
        centers = new_centers
        if shift < tol:
            break
    if return_history:
        return centers, history
    return centers


def _canonical_cycle(order):
    order = np.asarray(order, dtype=int)
    start = int(np.nonzero(order == 0)[0][0])
    fwd = np.roll(order, -start)
    rev = np.concatenate([fwd[:1], fwd[1:][::-1]])
    return fwd if tuple(fwd) <= tuple(rev) else rev


def tsp_order(points):
    """Shortest closed tour through the points, by exact bitmask DP.

    Returns the visiting order as an index array in canonical form:
    starting at index 0 and taking the lexicographically smaller of the
    two traversal directions. Limited to 20 points.
    """
    points = np.asarray(points, dtype=float)
    k = points.shape[0]
    if k > 20:
        raise TooManyKnots(f"exact tour ordering supports at most 20 points, got {k}")
    if k < 2:
        raise ValueError("need at least 2 points")
    if k == 2:
        return np.array([0, 1])
    D = np.sqrt(_sq_distances(points, points))
    m = k - 1
    size = 1 << m
    dp = np.full((size, m), np.inf)
    parent = np.full((size, m), -1, dtype=np.int32)
    d0 = D[0, 1:]
    Dn = D[1:, 1:]
    bits = 1 << np.arange(m)
    for j in range(m):
        dp[1 << j, j] = d0[j]
    for mask in range(1, size):
        js = np.nonzero(mask & bits)[0]
        if len(js) < 2:
            continue
        prev = mask ^ bits[js]
        cand = dp[prev] + Dn[:, js].T
        best = np.argmin(cand, axis=1)
        dp[mask, js] = cand[np.arange(len(js)), best]
        parent[mask, js] = best
    full = size - 1
    j = int(np.argmin(dp[full] + d0))
    path = []
    mask = full
    while j >= 0:
        path.append(j + 1)
        nj = int(parent[mask, j])
        mask ^= 1 << j
        j = nj
    order = np.array([0] + path[::-1])
    return _canonical_cycle(order)


def fit_closed_spline(data, n_knots, seed):
    """Fit a closed curve to a point cloud.

    Pipeline: k-means centers as knots, shortest-closed-tour ordering, then
    a chord-length periodic cubic spline through the ordered knots.
    """
    if n_knots < 3:
        raise ValueError("a closed spline needs at least 3 knots")
    centers = kmeans(data, n_knots, seed)
    order = tsp_order(centers)
    return ClosedSplineRn.from_ordered_knots(centers[order], ordering=order)


def make_landmarks(manifold, M):
    """Uniform-in-parameter grid of M states over the manifold domain.

    Curves get M equispaced parameters on [0, period); the torus gets a
    ceil(sqrt(M)) x ceil(sqrt(M)) angular grid truncated to its first M
    points in row-major order. Weights start uniform.
    """
    if M < 1:
        raise ValueError("need at least one landmark")
    if manifold.latent_dim == 1:
        pts = np.arange(M) * (manifold.period / M)
    else:
        g = math.isqrt(M)
        if g * g < M:
            g += 1
        step = TWO_PI / g
        ii, jj = np.divmod(np.arange(M), g)
        pts = np.stack([ii * step, jj * step], axis=1)
    return LandmarkSet(pts, np.full(M, 1.0 / M))
