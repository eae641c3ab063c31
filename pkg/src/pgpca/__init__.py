"""Probabilistic geometric PCA.

Gaussian models of data distributed around a nonlinear manifold: the mean
lives on the manifold, deviations are expressed in an orthonormal frame
attached to it (ambient axes or tangent-based), and everything is fitted
by an EM algorithm over a discretized state prior. Includes a closed-form
flat baseline, synthetic true-model samplers, and a trial/cross-validation
harness for deciding which frame better explains the data.
"""

from .coords import EuCov, GeCovCurve, GeCovTorus, gecov_for
from .errors import PgpcaError
from .evaluate import (
    ComparisonReport,
    TrialResult,
    compare_coordinates,
    cv_folds,
    evaluate_trials,
    model_log_likelihood,
    paired_t_test,
    table2_simulation,
)
from .manifold import (
    ClosedSplineRn,
    Ellipse2D,
    LandmarkSet,
    TorusR3,
    fit_closed_spline,
    kmeans,
    make_landmarks,
    tsp_order,
)
from .model import (
    FitConfig,
    FitReport,
    PgpcaModel,
    e_step,
    elbo,
    fit,
    gamma_matrix,
    log_cond_density,
    log_likelihood,
    m_step_params,
    m_step_weights,
    sample_log_likelihoods,
)
from .ppca import PpcaModel, fit_ppca, ppca_log_likelihood, ppca_sample_log_likelihoods
from .simulate import (
    TrueModelSpec,
    coordinate_field,
    loop10d_manifold,
    sample,
    standard_specs,
    true_landmark_weights,
)

__version__ = "0.1.0"
