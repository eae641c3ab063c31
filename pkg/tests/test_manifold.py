import itertools
import math

import numpy as np
import pytest

from pgpca.errors import (
    DegenerateKnots,
    DegenerateTangent,
    InsufficientData,
    TooManyKnots,
)
from pgpca.manifold import (
    ClosedSplineRn,
    Ellipse2D,
    TorusR3,
    fit_closed_spline,
    kmeans,
    make_landmarks,
    tsp_order,
)

TWO_PI = 2.0 * math.pi


# --- evaluate / tangent ---------------------------------------------------


def test_ellipse_at_zero():
    np.testing.assert_allclose(Ellipse2D().evaluate(0.0), [1.0, 0.0], atol=1e-15)


def test_torus_at_origin():
    np.testing.assert_allclose(TorusR3().evaluate((0.0, 0.0)), [4.0, 0.0, 0.0], atol=1e-15)


def test_spline_interpolates_knots():
    ang = np.array([0.0, 0.5 * math.pi, math.pi, 1.5 * math.pi])
    knots = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    sp = ClosedSplineRn.from_ordered_knots(knots)
    at_knots = sp.evaluate(sp._spline.x[:-1])
    np.testing.assert_allclose(at_knots, knots, atol=1e-12)


def test_ellipse_tangent_at_zero():
    np.testing.assert_allclose(Ellipse2D().tangent(0.0), [0.0, 2.0], atol=1e-15)


def test_torus_tangents_at_origin():
    t = TorusR3().tangent((0.0, 0.0))
    np.testing.assert_allclose(t[0], [0.0, 4.0, 0.0], atol=1e-15)
    np.testing.assert_allclose(t[1], [0.0, 0.0, 1.0], atol=1e-15)


def test_evaluate_wraps_periodically():
    e = Ellipse2D()
    z = np.array([0.3, 5.1])
    np.testing.assert_allclose(e.evaluate(z + TWO_PI), e.evaluate(z), atol=1e-12)
    t = TorusR3()
    zt = np.array([[0.3, 1.0], [4.0, 5.5]])
    np.testing.assert_allclose(t.evaluate(zt + TWO_PI), t.evaluate(zt), atol=1e-12)


@pytest.mark.parametrize(
    "manifold",
    [Ellipse2D(), None],
    ids=["ellipse", "circle-spline"],
)
def test_tangent_matches_finite_differences(manifold):
    if manifold is None:
        ang = np.linspace(0.0, TWO_PI, 12, endpoint=False)
        manifold = ClosedSplineRn.from_ordered_knots(
            np.stack([np.cos(ang), np.sin(ang)], axis=1)
        )
    rng = np.random.default_rng(7)
    h = 1e-5
    for z in rng.uniform(0, manifold.period, 100):
        fd = (manifold.evaluate(z + h) - manifold.evaluate(z - h)) / (2 * h)
        t = manifold.tangent(z)
        assert np.linalg.norm(t - fd) / np.linalg.norm(t) < 1e-6


def test_torus_tangent_matches_finite_differences():
    torus = TorusR3()
    rng = np.random.default_rng(8)
    h = 1e-5
    for z in rng.uniform(0, TWO_PI, (100, 2)):
        t = torus.tangent(z)
        for axis in range(2):
            dz = np.zeros(2)
            dz[axis] = h
            fd = (torus.evaluate(z + dz) - torus.evaluate(z - dz)) / (2 * h)
            assert np.linalg.norm(t[axis] - fd) / np.linalg.norm(t[axis]) < 1e-6


def test_spline_periodicity_invariant():
    rng = np.random.default_rng(3)
    data = np.stack([np.cos(a := rng.uniform(0, TWO_PI, 400)), np.sin(a)], axis=1)
    sp = fit_closed_spline(data, 6, seed=0)
    for order in range(3):
        d = sp._spline.derivative(order) if order else sp._spline
        a0, aL = d(0.0), d(sp.period)
        assert np.linalg.norm(a0 - aL) < 1e-9 * (1 + np.linalg.norm(a0))


def test_degenerate_tangent_raises():
    class Collapsed:
        latent_dim = 1
        ambient_dim = 2
        period = 1.0

        def evaluate(self, z):
            return np.zeros(np.shape(z) + (2,))

        tangent = Ellipse2D.tangent  # unused

    sp = ClosedSplineRn.from_ordered_knots(np.array([[0, 0], [1, 0], [0, 1.0]]))
    with pytest.raises(DegenerateTangent):
        sp._deriv = lambda z: np.zeros(np.shape(z) + (2,))
        sp.tangent(0.2)


# --- kmeans ---------------------------------------------------------------


def test_kmeans_single_cluster_is_mean():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(50, 3))
    c = kmeans(X, 1, seed=0)
    np.testing.assert_allclose(c[0], X.mean(axis=0), atol=1e-12)


def test_kmeans_k_equals_T():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(6, 2))
    c = kmeans(X, 6, seed=0)
    assert np.allclose(np.sort(c, axis=0), np.sort(X, axis=0), atol=1e-12)


def test_kmeans_two_blobs_vs_bruteforce_split():
    rng = np.random.default_rng(2)
    X = np.vstack(
        [rng.normal([-1, 0], 0.05, (100, 2)), rng.normal([1, 0], 0.05, (100, 2))]
    )
    # oracle: for two clusters of x-separated blobs the optimum is a split
    # along x; scan every split of the x-sorted sample
    order = np.argsort(X[:, 0])
    Xs = X[order]
    best = (np.inf, None)
    for cut in range(1, len(Xs)):
        a, b = Xs[:cut], Xs[cut:]
        sse = ((a - a.mean(0)) ** 2).sum() + ((b - b.mean(0)) ** 2).sum()
        if sse < best[0]:
            best = (sse, (a.mean(0), b.mean(0)))
    oracle = np.array(sorted(best[1], key=lambda c: c[0]))
    got = np.array(sorted(kmeans(X, 2, seed=5), key=lambda c: c[0]))
    assert np.abs(got - oracle).max() < 0.05
    assert np.abs(got - [[-1, 0], [1, 0]]).max() < 0.05


def test_kmeans_objective_nonincreasing():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(300, 4))
    _, hist = kmeans(X, 7, seed=1, return_history=True)
    assert all(b <= a + 1e-9 for a, b in zip(hist, hist[1:]))


def test_kmeans_insufficient_data():
    with pytest.raises(InsufficientData):
        kmeans(np.zeros((3, 2)), 4, seed=0)


# --- tsp_order ------------------------------------------------------------


def _tour_length(points, order):
    p = points[order]
    return float(np.linalg.norm(np.diff(np.vstack([p, p[:1]]), axis=0), axis=1).sum())


def test_tsp_square_perimeter():
    pts = np.array([[0, 0], [1, 1], [1, 0], [0, 1]], dtype=float)
    order = tsp_order(pts)
    assert _tour_length(pts, order) == pytest.approx(4.0)
    tour = pts[np.append(order, order[0])]
    side = np.linalg.norm(np.diff(tour, axis=0), axis=1)
    assert np.allclose(side, 1.0)  # no diagonal hops


def test_tsp_triangle_canonical():
    pts = np.array([[0, 0], [1, 0], [0.5, 1.0]])
    np.testing.assert_array_equal(tsp_order(pts), [0, 1, 2])


def test_tsp_matches_bruteforce():
    rng = np.random.default_rng(11)
    for trial in range(50):
        k = int(rng.integers(4, 9))
        pts = rng.uniform(size=(k, 2))
        got = _tour_length(pts, tsp_order(pts))
        best = min(
            _tour_length(pts, [0] + list(p)) for p in itertools.permutations(range(1, k))
        )
        assert got == pytest.approx(best, rel=1e-12)


def test_tsp_canonical_form_is_stable():
    rng = np.random.default_rng(13)
    pts = rng.uniform(size=(7, 2))
    order = tsp_order(pts)
    assert order[0] == 0
    rev = np.concatenate([order[:1], order[1:][::-1]])
    assert tuple(order) <= tuple(rev)


def test_tsp_too_many_knots():
    with pytest.raises(TooManyKnots):
        tsp_order(np.zeros((21, 2)))


# --- fit_closed_spline ----------------------------------------------------


def test_fit_closed_spline_circle():
    rng = np.random.default_rng(6)
    theta = rng.uniform(0, TWO_PI, 5000)
    data = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    sp = fit_closed_spline(data, 8, seed=1)
    dense = np.linspace(0, sp.period, 4000)
    radius = np.linalg.norm(sp.evaluate(dense), axis=1)
    # knots are arc centroids at radius sinc(pi/8) ~ 0.9745, so the curve
    # cannot come closer to the circle than ~0.0255 anywhere
    assert np.abs(radius - 1.0).max() < 0.03


def test_fit_closed_spline_circle_tangent_direction():
    rng = np.random.default_rng(9)
    theta = rng.uniform(0, TWO_PI, 5000)
    data = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    sp = fit_closed_spline(data, 8, seed=1)
    dense = np.linspace(0, sp.period, 2000, endpoint=False)
    z0 = dense[np.argmin(np.linalg.norm(sp.evaluate(dense) - [1.0, 0.0], axis=1))]
    t = sp.tangent(z0)
    t = t / np.linalg.norm(t)
    h = 1e-5
    fd = (sp.evaluate(z0 + h) - sp.evaluate(z0 - h)) / (2 * h)
    fd = fd / np.linalg.norm(fd)
    assert np.linalg.norm(t - fd) < 1e-2  # matches the curve's own motion
    assert abs(t[1]) > 0.99  # vertical at the circle's rightmost point


def test_fit_closed_spline_three_knots():
    pts = np.array([[0, 0], [1, 0], [0.5, math.sqrt(3) / 2]])
    sp = fit_closed_spline(pts, 3, seed=0)
    assert sp.period > 0
    np.testing.assert_allclose(sp.evaluate(0.0), sp.evaluate(sp.period), atol=1e-12)
    # passes through all three input points (at its own knot parameters)
    at_knots = sp.evaluate(sp._spline.x[:-1])
    assert np.allclose(np.sort(at_knots, axis=0), np.sort(pts, axis=0), atol=1e-12)
    # C2 across the seam
    d2 = sp._spline.derivative(2)
    np.testing.assert_allclose(d2(0.0), d2(sp.period), atol=1e-9 * (1 + np.abs(d2(0.0)).max()))


def test_loop10d_style_regeneration():
    from pgpca.simulate import loop10d_manifold

    sp = loop10d_manifold()
    assert sp.knots.shape == (6, 10)
    np.testing.assert_allclose(sp.evaluate(0.0), sp.evaluate(sp.period), atol=1e-9)
    d = sp._spline.derivative()
    np.testing.assert_allclose(d(0.0), d(sp.period), atol=1e-9 * (1 + np.abs(d(0.0)).max()))
    dense = np.linspace(0, sp.period, 1000)
    assert np.linalg.norm(sp.tangent(dense), axis=1).min() > 1e-12


def test_degenerate_knots_raise():
    knots = np.array([[0, 0], [0, 0], [1, 1.0]])
    with pytest.raises(DegenerateKnots):
        ClosedSplineRn.from_ordered_knots(knots)


# --- make_landmarks -------------------------------------------------------


def test_landmarks_ellipse_four():
    lms = make_landmarks(Ellipse2D(), 4)
    np.testing.assert_allclose(lms.points, [0, math.pi / 2, math.pi, 1.5 * math.pi])
    np.testing.assert_allclose(lms.weights, 0.25)


def test_landmarks_single():
    lms = make_landmarks(Ellipse2D(), 1)
    assert lms.points.shape == (1,)
    np.testing.assert_allclose(lms.weights, [1.0])


def test_landmarks_torus_grid():
    lms = make_landmarks(TorusR3(), 1000)
    assert lms.points.shape == (1000, 2)
    np.testing.assert_allclose(lms.weights, 1e-3)
    # 32 x 32 grid truncated to 1000 points
    step = TWO_PI / 32
    np.testing.assert_allclose(lms.points[:32, 1], np.arange(32) * step, atol=1e-12)
    assert np.allclose(lms.points[:32, 0], 0.0)
    np.testing.assert_allclose(lms.points[-1], [(999 // 32) * step, (999 % 32) * step])
