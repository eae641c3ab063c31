"""Closed-form probabilistic PCA baseline.

The flat special case of the manifold model: phi is the data mean, the
frame is the identity, and the marginal is a single Gaussian with
covariance C C' + sigma2 I. The loading matrix and noise variance come
from the eigendecomposition of the sample covariance, with the same
selection rule used in the manifold M-step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientData, NonFiniteInput
from .model import LOG_2PI, _m_step, _noise_factors, _row_sq


@dataclass
class PpcaModel:
    mean: np.ndarray
    C: np.ndarray
    sigma2: float

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.C = np.asarray(self.C, dtype=float)
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")

    @property
    def n(self):
        return self.C.shape[0]

    @property
    def m(self):
        return self.C.shape[1]


def fit_ppca(data, m):
    """Maximum-likelihood fit of dimension m: sample mean plus the
    eigendecomposition of the sample covariance (1/T normalization)."""
    Y = np.asarray(data, dtype=float)
    if Y.ndim != 2 or Y.shape[0] < 2:
        raise InsufficientData("need a (T, n) matrix with T >= 2")
    mean = Y.mean(axis=0)
    Xc = Y - mean
    S = Xc.T @ Xc / Y.shape[0]
    C, sigma2, _ = _m_step(S, m)
    return PpcaModel(mean, C, sigma2)


def ppca_sample_log_likelihoods(model, data):
    """Per-sample Gaussian log densities, shape (T,)."""
    Y = np.asarray(data, dtype=float)
    if not np.all(np.isfinite(Y)):
        raise NonFiniteInput("data contains non-finite entries")
    log_det, W = _noise_factors(model.C, model.sigma2)
    E = Y - model.mean
    quad = _row_sq(E)
    if model.m:
        quad = quad - _row_sq(E @ W)
    return -0.5 * (model.n * LOG_2PI + log_det + quad / model.sigma2)


def ppca_log_likelihood(model, data):
    return float(np.sum(ppca_sample_log_likelihoods(model, data)))
