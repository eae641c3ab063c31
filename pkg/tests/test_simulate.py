import math
from dataclasses import replace

import numpy as np
import pytest

from pgpca.coords import gecov_for
from pgpca.errors import IllegalPair
from pgpca.simulate import (
    TrueModelSpec,
    coordinate_field,
    loop10d_manifold,
    sample,
    standard_specs,
    true_landmark_weights,
    with_samples,
    with_seed,
)
from pgpca.manifold import Ellipse2D, TorusR3, make_landmarks

TWO_PI = 2.0 * math.pi


def test_zero_covariance_lands_on_manifold():
    spec = replace(
        standard_specs()["loop2d-gecov"], basic_cov=(0.0, 0.0), n_samples=500
    )
    Y, Z = sample(spec)
    np.testing.assert_allclose(Y, spec.manifold.evaluate(Z), atol=1e-12)


def test_loop2d_frame_residual_variance():
    spec = standard_specs()["loop2d-gecov"]
    Y, Z = sample(with_seed(spec, 0))
    frames = gecov_for(spec.manifold).frames(Z)
    resid = Y - spec.manifold.evaluate(Z)
    local = np.einsum("tij,ti->tj", frames, resid)  # K(z)' residual
    np.testing.assert_allclose((local**2).mean(axis=0), [0.1, 0.3], rtol=0.05)


def test_unitorus_ring_density_ratio():
    spec = standard_specs()["torus-unitorus-eucov"]
    _, Z = sample(with_seed(spec, 3))
    z2 = Z[:, 1]
    width = 0.15
    outer = np.sum((z2 < width) | (z2 > TWO_PI - width))
    inner = np.sum(np.abs(z2 - math.pi) < width)
    assert inner / outer == pytest.approx(0.5, rel=0.10)


def test_uniang_minor_angle_uniform():
    spec = standard_specs()["torus-uniang-eucov"]
    _, Z = sample(with_samples(with_seed(spec, 4), 20000))
    counts, _ = np.histogram(Z[:, 1], bins=8, range=(0, TWO_PI))
    assert counts.max() / counts.min() < 1.15


def test_fixed_seed_is_bit_identical():
    spec = standard_specs()["torus-unitorus-gecov"]
    spec = with_samples(spec, 2000)
    Y1, Z1 = sample(spec)
    Y2, Z2 = sample(spec)
    np.testing.assert_array_equal(Y1, Y2)
    np.testing.assert_array_equal(Z1, Z2)


def test_different_seeds_differ():
    spec = with_samples(standard_specs()["loop2d-eucov"], 100)
    Y1, _ = sample(with_seed(spec, 0))
    Y2, _ = sample(with_seed(spec, 1))
    assert not np.array_equal(Y1, Y2)


def test_standard_spec_constants():
    specs = standard_specs()
    assert set(specs) == {
        "loop2d-gecov",
        "loop2d-eucov",
        "loop10d-gecov",
        "loop10d-eucov",
        "torus-uniang-gecov",
        "torus-uniang-eucov",
        "torus-unitorus-gecov",
        "torus-unitorus-eucov",
    }
    assert specs["loop2d-gecov"].basic_cov == (0.1, 0.3)
    assert specs["loop2d-gecov"].n_samples == 5000
    assert specs["loop2d-gecov"].n_landmarks == 500
    assert specs["loop2d-gecov"].em_iters == 20
    tor = specs["torus-uniang-eucov"]
    assert (tor.n_samples, tor.n_landmarks, tor.em_iters) == (50000, 1000, 40)
    assert tor.basic_cov == (0.1, 0.3, 0.5)
    assert sum(specs["loop10d-eucov"].basic_cov) == pytest.approx(110.0)
    assert specs["loop10d-gecov"].em_iters == 40


def test_illegal_pairs_raise():
    bad = TrueModelSpec("x", Ellipse2D(), "eucov", "uniang", (0.1, 0.1), 10, 4, 1)
    with pytest.raises(IllegalPair):
        sample(bad)
    bad2 = TrueModelSpec("x", TorusR3(), "eucov", "uniform", (0.1,) * 3, 10, 4, 1)
    with pytest.raises(IllegalPair):
        sample(bad2)


def test_true_weights_unitorus_follow_area():
    spec = standard_specs()["torus-unitorus-gecov"]
    lms = make_landmarks(spec.manifold, 64)
    w = true_landmark_weights(spec, lms)
    assert w.sum() == pytest.approx(1.0)
    ref = 3.0 + np.cos(lms.points[:, 1])
    np.testing.assert_allclose(w, ref / ref.sum(), atol=1e-14)
    # angle-uniform law keeps the uniform grid weights
    wu = true_landmark_weights(standard_specs()["torus-uniang-gecov"], lms)
    np.testing.assert_allclose(wu, 1.0 / 64)


def test_coordinate_field_matches_variant():
    specs = standard_specs()
    assert coordinate_field(specs["loop2d-eucov"]).is_identity
    assert not coordinate_field(specs["loop2d-gecov"]).is_identity


def test_canonical_loop_is_stable():
    a = loop10d_manifold()
    b = loop10d_manifold()
    np.testing.assert_array_equal(a.knots, b.knots)
    assert a.period == b.period
