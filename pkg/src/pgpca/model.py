"""Probabilistic model of data around a manifold and its EM fitting loop.

The observation model at a manifold state z is

    y = phi(z) + K(z) C x + r,    x ~ N(0, I_m),   r ~ N(0, sigma2 I_n)

so y | z ~ N(phi(z), Psi(z)) with Psi(z) = K(z) (C C' + sigma2 I) K(z)'.
The state prior is a weighted landmark set, making the marginal a finite
Gaussian mixture. Fitting alternates exact posterior responsibilities over
landmarks with closed-form updates: weights from responsibility column
means, then an eigendecomposition of the frame-rotated scatter matrix
gives the noise floor and the loading matrix.

Densities never form Psi explicitly. With orthonormal K,

    ln|Psi|  = (n - m) ln sigma2 + ln|sigma2 I_m + C'C|       (z independent)
    Psi^{-1} = K (sigma2 I_n + C C')^{-1} K'
             = K (I_n - W W') K' / sigma2,   W = C chol(sigma2 I_m + C'C)^{-T}

so each log density needs only a squared distance and an m-dimensional
projection.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .errors import AllZeroLikelihood, InvalidDimension, NonFiniteInput
from .manifold import LandmarkSet, make_landmarks

LOG_2PI = math.log(2.0 * math.pi)
SIGMA2_FLOOR_SCALE = 1e-6

# landmark block sizes bounding temporary arrays in the batched kernels
_BLOCK_DOUBLES = 24_000_000


@dataclass
class PgpcaModel:
    """Fitted (or hand-built) model: manifold, frame field, landmarks, C, sigma2."""

    manifold: object
    coords: object
    landmarks: LandmarkSet
    C: np.ndarray
    sigma2: float

    def __post_init__(self):
        self.C = np.asarray(self.C, dtype=float)
        if self.C.ndim != 2:
            raise ValueError("C must be an n x m matrix (m may be 0)")
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")

    @property
    def n(self):
        return self.C.shape[0]

    @property
    def m(self):
        return self.C.shape[1]


@dataclass
class FitConfig:
    """Knobs for the EM loop.

    elbo_tol is the relative improvement below which iteration stops; 0
    disables early stopping so exactly max_iters updates run. With
    learn_weights off the landmark weights stay at their given values.
    """

    m: int
    n_landmarks: int = 500
    max_iters: int = 50
    elbo_tol: float = 1e-7
    seed: int = 0
    learn_weights: bool = True

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.elbo_tol < 0:
            raise ValueError("elbo_tol must be nonnegative")


@dataclass
class FitReport:
    """Per-fit diagnostics: the bound trace must be non-decreasing."""

    elbo_trace: list
    converged: bool
    n_iters: int
    clamp_events: int
    iter_seconds: list
    warnings: list = field(default_factory=list)

    @property
    def final_log_likelihood(self):
        return self.elbo_trace[-1]


def _noise_factors(C, sigma2):
    """Log determinant of Psi and the Woodbury projector W (see module doc)."""
    n, m = C.shape
    if m == 0:
        return n * math.log(sigma2), np.zeros((n, 0))
    A = C.T @ C
    A[np.diag_indices(m)] += sigma2
    L = np.linalg.cholesky(A)
    log_det = (n - m) * math.log(sigma2) + 2.0 * float(np.sum(np.log(np.diag(L))))
    W = solve_triangular(L, C.T, lower=True).T
    return log_det, W


def _row_sq(X):
    return np.einsum("ij,ij->i", X, X)


def _inv_sqrt(C, sigma2):
    """Symmetric inverse square root of sigma2 I + C C'."""
    n = C.shape[0]
    A = C @ C.T
    A[np.diag_indices(n)] += sigma2
    evals, vecs = np.linalg.eigh(A)
    return (vecs / np.sqrt(evals)) @ vecs.T


def _sq_dist_matrix(U, V):
    """Pairwise squared distances ||u_i - v_j||^2 as a (T, M) matrix."""
    d2 = np.empty((U.shape[0], V.shape[0]))
    np.matmul(U, V.T, out=d2)
    d2 *= -2.0
    d2 += _row_sq(U)[:, None]
    d2 += _row_sq(V)[None, :]
    np.maximum(d2, 0.0, out=d2)
    return d2


def _proj_sq(Y, phis, P):
    """||P_j'(y_i - phi_j)||^2 as a (T, M) matrix, P of shape (M, n, k).

    A constant data column folds the per-landmark offsets into one wide
    product, evaluated in sample chunks so the squared norms consume the
    product while it is still cache resident.
    """
    T, n = Y.shape
    M, _, k = P.shape
    gaug = np.empty((n + 1, M * k))
    gaug[:n] = P.transpose(1, 0, 2).reshape(n, -1)
    gaug[n] = -np.einsum("jn,jnk->jk", phis, P).reshape(-1)
    Yaug = np.concatenate([Y, np.ones((T, 1))], axis=1)
    out = np.empty((T, M))
    chunk = max(64, 3_000_000 // max(M * k, 1))
    for lo in range(0, T, chunk):
        hi = min(T, lo + chunk)
        proj = (Yaug[lo:hi] @ gaug).reshape(hi - lo, M, k)
        np.einsum("tjk,tjk->tj", proj, proj, out=out[lo:hi])
    return out


def _log_densities(Y, phis, frames, C, sigma2):
    """Matrix of ln p(y_i | z_j), shape (T, M).

    `frames` is (M, n, n), or None for the identity field. Low-rank models
    use the distance-minus-projection form; full-rank models go through
    the inverse square root of sigma2 I + C C' instead, which is stable
    even at the tiny full-rank noise floor.
    """
    T, n = Y.shape
    M = phis.shape[0]
    log_det, W = _noise_factors(C, sigma2)
    const = -0.5 * (n * LOG_2PI + log_det)
    m = W.shape[1]

    if m == 0:
        logp = _sq_dist_matrix(Y, phis)
        logp *= -0.5 / sigma2
        logp += const
        return logp

    if m == n:
        R = _inv_sqrt(C, sigma2)
        if frames is None:
            logp = _sq_dist_matrix(Y @ R, phis @ R)
        else:
            logp = _proj_sq(Y, phis, frames @ R)
        logp *= -0.5
        logp += const
        return logp

    if frames is None:
        # shared projector: squared distances minus squared projections;
        # one augmented Gram product carries both cross terms
        YW = Y @ W
        PW = phis @ W
        logp = np.concatenate([Y, YW], axis=1) @ np.concatenate([phis, -PW], axis=1).T
        logp *= 1.0 / sigma2
        rows = const - 0.5 * (_row_sq(Y) - _row_sq(YW)) / sigma2
        cols = -0.5 * (_row_sq(phis) - _row_sq(PW)) / sigma2
        logp += rows[:, None]
        logp += cols[None, :]
        return logp

    logp = _sq_dist_matrix(Y, phis)
    logp -= _proj_sq(Y, phis, frames @ W)
    logp *= -0.5 / sigma2
    logp += const
    return logp


def _posterior_inplace(logp, log_w):
    """Turn conditional log densities into responsibilities in place.

    Adds the log weights, normalizes each row through log-sum-exp, and
    returns the per-sample log marginals ln sum_j p(y_i|z_j) w_j.
    """
    logp += log_w[None, :]
    amax = np.max(logp, axis=1)
    if not np.all(np.isfinite(amax)):
        raise AllZeroLikelihood("a sample has zero likelihood at every landmark")
    logp -= amax[:, None]
    np.exp(logp, out=logp)
    tot = logp.sum(axis=1)
    logp /= tot[:, None]
    return amax + np.log(tot)


def _model_tables(model):
    zs = model.landmarks.points
    phis = np.atleast_2d(np.asarray(model.manifold.evaluate(zs), dtype=float))
    frames = None if model.coords.is_identity else model.coords.frames(zs)
    return phis, frames


def _check_data(model, data):
    Y = np.ascontiguousarray(np.asarray(data, dtype=float))
    if Y.ndim != 2 or Y.shape[1] != model.n:
        raise ValueError(f"data must be (T, {model.n})")
    if not np.all(np.isfinite(Y)):
        raise NonFiniteInput("data contains non-finite entries")
    return Y


def log_cond_density(model, y, z):
    """ln N(y; phi(z), Psi(z)) for a single observation and state."""
    y = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(y)):
        raise NonFiniteInput("observation contains non-finite entries")
    phi = np.asarray(model.manifold.evaluate(z), dtype=float)
    e = y - phi
    log_det, W = _noise_factors(model.C, model.sigma2)
    if model.m == 0:
        quad = float(e @ e) / model.sigma2
    else:
        local = e if model.coords.is_identity else model.coords.frame(z).T @ e
        if model.m == model.n:
            u = _inv_sqrt(model.C, model.sigma2) @ local
            quad = float(u @ u)
        else:
            proj = W.T @ local
            quad = (float(e @ e) - float(proj @ proj)) / model.sigma2
    return -0.5 * (model.n * LOG_2PI + log_det + quad)


def sample_log_likelihoods(model, data):
    """Per-sample marginal log likelihoods ln p(y_i), shape (T,)."""
    Y = _check_data(model, data)
    phis, frames = _model_tables(model)
    act = model.landmarks.weights > 0
    logp = _log_densities(
        Y, phis[act], None if frames is None else frames[act], model.C, model.sigma2
    )
    return _posterior_inplace(logp, np.log(model.landmarks.weights[act]))


def log_likelihood(model, data):
    """Total data log likelihood sum_i ln sum_j p(y_i|z_j) w_j."""
    return float(np.sum(sample_log_likelihoods(model, data)))


def e_step(model, data):
    """Posterior responsibilities over landmarks, shape (T, M).

    Rows sum to 1; landmarks with zero weight get zero columns.
    """
    Y = _check_data(model, data)
    phis, frames = _model_tables(model)
    w = model.landmarks.weights
    act = w > 0
    logp = _log_densities(
        Y, phis[act], None if frames is None else frames[act], model.C, model.sigma2
    )
    _posterior_inplace(logp, np.log(w[act]))
    if np.all(act):
        return logp
    q = np.zeros((Y.shape[0], len(w)))
    q[:, act] = logp
    return q


def m_step_weights(q):
    """Optimal landmark weights: column means of the responsibilities."""
    q = np.asarray(q, dtype=float)
    return q.mean(axis=0)


def _gamma(Y, q, phis, frames):
    T, n = Y.shape
    M = phis.shape[0]
    if frames is None:
        # expand the residual outer products; all reductions are matmuls
        row = q.sum(axis=1)
        col = q.sum(axis=0)
        U = q @ phis
        G = (Y * row[:, None]).T @ Y
        YU = Y.T @ U
        G -= YU
        G -= YU.T
        G += (phis * col[:, None]).T @ phis
        G /= T
        return 0.5 * (G + G.T)
    # expand S_j = sum_i q_ij (y_i - phi_j)(y_i - phi_j)': the quadratic
    # term becomes one wide product against flattened outer products, the
    # cross terms reuse Y' q, then each S_j is rotated into its frame
    colsum = q.sum(axis=0)
    Yq = (Y.T @ q).T  # (M, n)
    YY = np.einsum("ti,tj->tij", Y, Y).reshape(T, n * n)
    S = (q.T @ YY).reshape(M, n, n)
    cross = Yq[:, :, None] * phis[:, None, :]
    S -= cross
    S -= cross.transpose(0, 2, 1)
    S += (colsum[:, None] * phis)[:, :, None] * phis[:, None, :]
    contribs = np.matmul(frames.transpose(0, 2, 1), np.matmul(S, frames))
    G = contribs.sum(axis=0) / T
    return 0.5 * (G + G.T)


def gamma_matrix(data, q, manifold, coords, landmarks):
    """Responsibility-weighted, frame-rotated scatter matrix (n x n).

    (1/T) sum_i sum_j q_ij K(z_j)' (y_i - phi_j)(y_i - phi_j)' K(z_j);
    symmetric positive semidefinite, and the only data summary the
    parameter update needs.
    """
    Y = np.asarray(data, dtype=float)
    q = np.asarray(q, dtype=float)
    zs = landmarks.points
    phis = np.atleast_2d(np.asarray(manifold.evaluate(zs), dtype=float))
    frames = None if coords.is_identity else coords.frames(zs)
    return _gamma(Y, q, phis, frames)


def _m_step(gamma, m):
    n = gamma.shape[0]
    if m < 0 or m > n:
        raise InvalidDimension(f"model dimension {m} outside [0, {n}]")
    evals, vecs = np.linalg.eigh(gamma)
    evals = evals[::-1].copy()
    vecs = vecs[:, ::-1]
    lead = np.argmax(np.abs(vecs), axis=0)
    flip = vecs[lead, np.arange(n)] < 0
    vecs[:, flip] *= -1.0
    floor = SIGMA2_FLOOR_SCALE * max(float(evals.sum()), 0.0) / n
    clamps = 0
    if m < n:
        sigma2 = float(np.mean(evals[m:]))
        if sigma2 < floor:
            sigma2 = floor
            clamps += 1
    else:
        sigma2 = floor
    if sigma2 <= 0:
        sigma2 = np.finfo(float).tiny
    gap = evals[:m] - sigma2
    neg = gap < 0
    clamps += int(np.count_nonzero(neg))
    d = np.sqrt(np.where(neg, 0.0, gap))
    C = vecs[:, :m] * d
    return C, sigma2, clamps


def m_step_params(gamma, m):
    """Optimal loading matrix and noise variance from the scatter matrix.

    Eigenvalues in descending order g_1 >= ... >= g_n: sigma2 is the mean
    of the trailing n - m, and C = U diag(sqrt(g_i - sigma2)) over the
    leading m eigenpairs (differences clamped at 0). At m = n, sigma2
    falls back to a small isotropic floor, 1e-6 * trace / n. Eigenvector
    signs are fixed so the largest-magnitude entry is positive.
    """
    gamma = np.asarray(gamma, dtype=float)
    C, sigma2, _ = _m_step(gamma, m)
    return C, sigma2


def elbo(model, data, q):
    """Evidence lower bound sum_ij q_ij [ln(p(y_i|z_j) w_j) - ln q_ij].

    Equals the log likelihood when q is the exact posterior; never above
    it otherwise. Terms with q_ij = 0 contribute zero.
    """
    Y = _check_data(model, data)
    q = np.asarray(q, dtype=float)
    phis, frames = _model_tables(model)
    logp = _log_densities(Y, phis, frames, model.C, model.sigma2)
    with np.errstate(divide="ignore"):
        logp += np.log(model.landmarks.weights)[None, :]
    pos = q > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = q * (logp - np.log(q))
    terms[~pos] = 0.0
    return float(np.sum(terms))


def _init_params(Y, phis, m, rng):
    T, n = Y.shape
    # scale-aware start: orthogonal random directions at the data scale,
    # noise from the nearest-landmark distances
    block = max(1, _BLOCK_DOUBLES // T)
    dmin = np.full(T, np.inf)
    y_sq = _row_sq(Y)
    for lo in range(0, phis.shape[0], block):
        hi = min(phis.shape[0], lo + block)
        d2 = y_sq[:, None] - 2.0 * (Y @ phis[lo:hi].T) + _row_sq(phis[lo:hi])[None, :]
        np.minimum(dmin, d2.min(axis=1), out=dmin)
    np.maximum(dmin, 0.0, out=dmin)
    scale2 = float(Y.var(axis=0).mean())
    sigma2 = 0.5 * float(dmin.mean())
    if sigma2 <= 0:
        sigma2 = max(1e-12 * scale2, np.finfo(float).tiny)
    if m == 0:
        return np.zeros((n, 0)), sigma2
    Q = np.linalg.qr(rng.standard_normal((n, n)))[0]
    return Q[:, :m] * math.sqrt(max(scale2, np.finfo(float).tiny)), sigma2


def fit(data, manifold, coords, config, landmarks=None):
    """Fit the model by EM; returns (PgpcaModel, FitReport).

    Each iteration computes the exact posterior (so the recorded bound
    equals the log likelihood of the current parameters), then updates
    weights (if learning), the scatter matrix, sigma2 and C, in that
    order. The trace gains one final entry evaluating the returned
    parameters, and must be non-decreasing throughout.
    """
    Y = np.ascontiguousarray(np.asarray(data, dtype=float))
    if Y.ndim != 2 or Y.shape[0] < 2:
        raise ValueError("data must be a (T, n) matrix with T >= 2")
    if not np.all(np.isfinite(Y)):
        raise NonFiniteInput("data contains non-finite entries")
    T, n = Y.shape
    if coords.n != n:
        raise ValueError("coordinate field dimension does not match data")
    if config.m < 0 or config.m > n:
        raise InvalidDimension(f"model dimension {config.m} outside [0, {n}]")

    lms = landmarks if landmarks is not None else make_landmarks(manifold, config.n_landmarks)
    zs = lms.points
    phis = np.atleast_2d(np.asarray(manifold.evaluate(zs), dtype=float))
    frames = None if coords.is_identity else coords.frames(zs)
    omega = lms.weights.astype(float).copy()

    rng = np.random.default_rng(config.seed)
    C, sigma2 = _init_params(Y, phis, config.m, rng)

    trace = []
    iter_seconds = []
    warnings = []
    clamps = 0
    converged = False
    n_iters = 0
    for it in range(config.max_iters):
        t0 = time.perf_counter()
        act = np.nonzero(omega > 0)[0]
        lp = _log_densities(
            Y, phis[act], None if frames is None else frames[act], C, sigma2
        )
        cur = float(np.sum(_posterior_inplace(lp, np.log(omega[act]))))
        trace.append(cur)
        if it > 0 and config.elbo_tol > 0:
            prev = trace[-2]
            if cur - prev < config.elbo_tol * abs(prev):
                converged = True
                iter_seconds.append(time.perf_counter() - t0)
                break
        if config.learn_weights:
            new_w = np.zeros_like(omega)
            new_w[act] = lp.mean(axis=0)
            omega = new_w
        g = _gamma(Y, lp, phis[act], None if frames is None else frames[act])
        C, sigma2, nc = _m_step(g, config.m)
        clamps += nc
        n_iters += 1
        iter_seconds.append(time.perf_counter() - t0)

    if not converged:
        act = np.nonzero(omega > 0)[0]
        lp = _log_densities(
            Y, phis[act], None if frames is None else frames[act], C, sigma2
        )
        trace.append(float(np.sum(_posterior_inplace(lp, np.log(omega[act])))))
        if config.elbo_tol > 0:
            warnings.append(
                f"stopped after max_iters={config.max_iters} without meeting "
                f"elbo_tol={config.elbo_tol}"
            )

    model = PgpcaModel(manifold, coords, LandmarkSet(zs, omega), C, sigma2)
    report = FitReport(
        elbo_trace=trace,
        converged=converged,
        n_iters=n_iters,
        clamp_events=clamps,
        iter_seconds=iter_seconds,
        warnings=warnings,
    )
    return model, report
