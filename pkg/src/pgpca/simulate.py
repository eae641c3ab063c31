"""Synthetic data from fully specified ground-truth models.

A spec fixes the manifold, the frame field, the latent-state law on the
manifold, and the frame-local deviation covariance Lambda = diag(lam).
Samples follow y = phi(z) + K(z) v with v ~ N(0, Lambda), which matches
the observation model because the isotropic part is frame invariant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .coords import EuCov, gecov_for
from .errors import IllegalPair
from .manifold import ClosedSplineRn, Ellipse2D, TorusR3, TWO_PI

LOOP2D_COV = (0.1, 0.3)
LOOP10D_COV = (20.0, 2.0, 18.0, 4.0, 16.0, 6.0, 14.0, 8.0, 12.0, 10.0)
TORUS_COV = (0.1, 0.3, 0.5)

CANONICAL_LOOP10D_SEED = 0


@dataclass(frozen=True)
class TrueModelSpec:
    """One simulation case: manifold, frames, latent law, covariance, sizes."""

    name: str
    manifold: object
    coords: str  # "eucov" or "gecov"
    latent_law: str  # "uniform", "uniang" or "unitorus"
    basic_cov: tuple
    n_samples: int
    n_landmarks: int
    em_iters: int
    seed: object = 0

    @property
    def ambient_dim(self):
        return self.manifold.ambient_dim


def coordinate_field(spec):
    """The frame field a spec prescribes (shared by sampler and fitters)."""
    if spec.coords == "eucov":
        return EuCov(spec.ambient_dim)
    if spec.coords == "gecov":
        return gecov_for(spec.manifold)
    raise ValueError(f"unknown coordinate variant {spec.coords!r}")


def _check_pair(spec):
    law, ldim = spec.latent_law, spec.manifold.latent_dim
    if law == "uniform" and ldim != 1:
        raise IllegalPair("uniform-on-parameter law needs a curve manifold")
    if law in ("uniang", "unitorus") and ldim != 2:
        raise IllegalPair(f"{law} is torus-specific")
    if law not in ("uniform", "uniang", "unitorus"):
        raise IllegalPair(f"unknown latent law {law!r}")


def _minor_angle_by_rejection(rng, size):
    # surface-uniform minor angle: density proportional to 3 + cos(z2)
    out = np.empty(size)
    have = 0
    while have < size:
        need = size - have
        draw = need + need // 2 + 16
        cand = rng.uniform(0.0, TWO_PI, draw)
        u = rng.uniform(0.0, 1.0, draw)
        acc = cand[u < (3.0 + np.cos(cand)) / 4.0][:need]
        out[have : have + len(acc)] = acc
        have += len(acc)
    return out


def sample(spec):
    """Draw (data, latent states) from the spec's true model.

    Deterministic for a fixed spec.seed; all draws come from one stream in
    a fixed order (states, then deviations).
    """
    _check_pair(spec)
    rng = np.random.default_rng(spec.seed)
    T = spec.n_samples
    mani = spec.manifold
    if spec.latent_law == "uniform":
        z = rng.uniform(0.0, mani.period, T)
    elif spec.latent_law == "uniang":
        z = rng.uniform(0.0, TWO_PI, (T, 2))
    else:
        z1 = rng.uniform(0.0, TWO_PI, T)
        z2 = _minor_angle_by_rejection(rng, T)
        z = np.stack([z1, z2], axis=1)
    lam = np.asarray(spec.basic_cov, dtype=float)
    if np.any(lam < 0):
        raise ValueError("basic covariance diagonal must be nonnegative")
    v = rng.standard_normal((T, mani.ambient_dim)) * np.sqrt(lam)
    if spec.coords == "gecov":
        K = gecov_for(mani).frames(z)
        dev = np.einsum("tij,tj->ti", K, v)
    else:
        dev = v
    return mani.evaluate(z) + dev, z


def true_landmark_weights(spec, landmarks):
    """The true latent law evaluated on a landmark grid, normalized."""
    _check_pair(spec)
    if spec.latent_law == "unitorus":
        w = 3.0 + np.cos(landmarks.points[:, 1])
    else:
        w = np.ones(len(landmarks))
    return w / w.sum()


def loop10d_manifold(seed=CANONICAL_LOOP10D_SEED, n_knots=6):
    """Smooth random closed curve in R^10 as a fitted-style spline.

    Knots sit at equal parameter spacing on a two-harmonic Fourier loop
    with seeded N(0, (12/h)^2) coefficients, then get joined by the usual
    chord-length periodic spline. The default seed is the package's
    canonical loop, so downstream numbers are reproducible.
    """
    rng = np.random.default_rng(seed)
    t = np.arange(n_knots) * (TWO_PI / n_knots)
    pts = np.zeros((n_knots, 10))
    for h in (1, 2):
        a = rng.normal(0.0, 12.0 / h, 10)
        b = rng.normal(0.0, 12.0 / h, 10)
        pts += np.outer(np.cos(h * t), a) + np.outer(np.sin(h * t), b)
    return ClosedSplineRn.from_ordered_knots(pts)


def standard_specs(seed=0):
    """The eight standard simulation cases, keyed by name.

    Loops in R^2 (ellipse) and R^10 (canonical 6-knot spline) with a
    uniform-in-parameter law, and the torus with angle-uniform or
    surface-uniform laws; each with Euclidean or geometric frames.
    """
    ellipse = Ellipse2D()
    torus = TorusR3()
    loop10 = loop10d_manifold()
    specs = {}
    for coords in ("gecov", "eucov"):
        specs[f"loop2d-{coords}"] = TrueModelSpec(
            f"loop2d-{coords}", ellipse, coords, "uniform", LOOP2D_COV, 5000, 500, 20, seed
        )
        specs[f"loop10d-{coords}"] = TrueModelSpec(
            f"loop10d-{coords}", loop10, coords, "uniform", LOOP10D_COV, 5000, 500, 40, seed
        )
        for law in ("uniang", "unitorus"):
            specs[f"torus-{law}-{coords}"] = TrueModelSpec(
                f"torus-{law}-{coords}", torus, coords, law, TORUS_COV, 50000, 1000, 40, seed
            )
    return specs


def with_seed(spec, *key):
    """Copy of a spec whose stream is derived from integer key parts."""
    return replace(spec, seed=tuple(int(k) for k in key))


def with_samples(spec, n_samples):
    return replace(spec, n_samples=int(n_samples))
