"""JSON and CSV persistence.

Floats go through Python's shortest round-trip repr, so saved models and
manifolds reload to bit-identical numbers. Fitted splines store their
breakpoints and polynomial coefficients directly; reloading rebuilds the
piecewise polynomial without re-solving anything.
"""

from __future__ import annotations

import json

import numpy as np
from scipy.interpolate import PPoly

from .coords import EuCov, gecov_for
from .manifold import ClosedSplineRn, Ellipse2D, LandmarkSet, TorusR3
from .model import PgpcaModel
from .ppca import PpcaModel

ANALYTIC_MANIFOLDS = {"ellipse": Ellipse2D, "torus": TorusR3}


def manifold_to_dict(manifold):
    if isinstance(manifold, Ellipse2D):
        return {"variant": "ellipse"}
    if isinstance(manifold, TorusR3):
        return {"variant": "torus"}
    if isinstance(manifold, ClosedSplineRn):
        return {
            "variant": "closed-spline",
            "knots": manifold.knots.tolist(),
            "ordering": manifold.ordering.tolist(),
            "breakpoints": manifold._spline.x.tolist(),
            "coefficients": manifold._spline.c.tolist(),
            "length": manifold.period,
        }
    raise TypeError(f"cannot serialize manifold of type {type(manifold).__name__}")


def manifold_from_dict(d):
    variant = d["variant"]
    if variant in ANALYTIC_MANIFOLDS:
        return ANALYTIC_MANIFOLDS[variant]()
    if variant == "closed-spline":
        ppoly = PPoly(np.asarray(d["coefficients"], dtype=float),
                      np.asarray(d["breakpoints"], dtype=float))
        return ClosedSplineRn(np.asarray(d["knots"], dtype=float),
                              np.asarray(d["ordering"], dtype=int), ppoly)
    raise ValueError(f"unknown manifold variant {variant!r}")


def save_manifold(manifold, path):
    with open(path, "w") as f:
        json.dump(manifold_to_dict(manifold), f)


def load_manifold(path):
    with open(path) as f:
        return manifold_from_dict(json.load(f))


def _points_to_lists(points):
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    return pts.tolist()


def model_to_dict(model):
    if isinstance(model, PpcaModel):
        return {
            "kind": "ppca",
            "n": model.n,
            "m": model.m,
            "mean": model.mean.tolist(),
            "C": model.C.tolist(),
            "sigma2": model.sigma2,
        }
    if isinstance(model, PgpcaModel):
        return {
            "kind": "pgpca",
            "n": model.n,
            "m": model.m,
            "C": model.C.tolist(),
            "sigma2": model.sigma2,
            "landmarks": {
                "points": _points_to_lists(model.landmarks.points),
                "weights": model.landmarks.weights.tolist(),
            },
            "manifold": manifold_to_dict(model.manifold),
            "coords": "eucov" if model.coords.is_identity else "gecov",
        }
    raise TypeError(f"cannot serialize model of type {type(model).__name__}")


def model_from_dict(d):
    if d["kind"] == "ppca":
        C = np.asarray(d["C"], dtype=float).reshape(d["n"], d["m"])
        return PpcaModel(np.asarray(d["mean"], dtype=float), C, float(d["sigma2"]))
    if d["kind"] == "pgpca":
        manifold = manifold_from_dict(d["manifold"])
        pts = np.asarray(d["landmarks"]["points"], dtype=float)
        if manifold.latent_dim == 1:
            pts = pts[:, 0]
        lms = LandmarkSet(pts, np.asarray(d["landmarks"]["weights"], dtype=float))
        coords = EuCov(d["n"]) if d["coords"] == "eucov" else gecov_for(manifold)
        C = np.asarray(d["C"], dtype=float).reshape(d["n"], d["m"])
        return PgpcaModel(manifold, coords, lms, C, float(d["sigma2"]))
    raise ValueError(f"unknown model kind {d['kind']!r}")


def save_model(model, path):
    with open(path, "w") as f:
        json.dump(model_to_dict(model), f)


def load_model(path):
    with open(path) as f:
        return model_from_dict(json.load(f))


def save_csv(path, array, header=False):
    """One row per sample at 17 significant digits (exact round trip)."""
    arr = np.atleast_2d(np.asarray(array, dtype=float))
    with open(path, "w") as f:
        if header:
            f.write(",".join(f"y{i}" for i in range(arr.shape[1])) + "\n")
        np.savetxt(f, arr, fmt="%.17g", delimiter=",")


def load_csv(path):
    """Read a numeric CSV, tolerating one optional header row."""
    with open(path) as f:
        first = f.readline()
        skip = 0
        try:
            [float(v) for v in first.strip().split(",") if v]
        except ValueError:
            skip = 1
    return np.loadtxt(path, delimiter=",", skiprows=skip, ndmin=2)
