"""Experiment harness: held-out trials, paired t-tests, and
coordinate-system comparison (geometric vs Euclidean frames vs the flat
baseline), plus the end-to-end simulation grid reproduction."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .coords import EuCov, gecov_for
from .errors import LengthMismatch
from .manifold import LandmarkSet, make_landmarks
from .model import FitConfig, fit, sample_log_likelihoods
from .ppca import PpcaModel, fit_ppca, ppca_sample_log_likelihoods
from .simulate import (
    TrueModelSpec,
    sample,
    standard_specs,
    true_landmark_weights,
    with_samples,
    with_seed,
)

# stream tags keeping training and test draws on disjoint substreams
_TRAIN_STREAM = 0
_TEST_STREAM = 1


@dataclass
class TrialResult:
    """Average log likelihood per model on one held-out trial."""

    trial_len: int
    avg_ll: dict


def model_sample_log_likelihoods(model, data):
    if isinstance(model, PpcaModel):
        return ppca_sample_log_likelihoods(model, data)
    return sample_log_likelihoods(model, data)


def model_log_likelihood(model, data):
    return float(np.sum(model_sample_log_likelihoods(model, data)))


def evaluate_trials(models, spec, n_trials, trial_len, seed=0, threads=1):
    """Score models on fresh held-out trials drawn from the true spec.

    Trial k uses the derived stream (seed, test, k), independent of any
    training stream. Returns one TrialResult per trial; aggregation is by
    trial index, so the worker count never changes the output.
    """
    trial_specs = [
        with_samples(with_seed(spec, seed, _TEST_STREAM, k), trial_len)
        for k in range(n_trials)
    ]

    def one(ts):
        data, _ = sample(ts)
        return TrialResult(
            trial_len,
            {name: model_log_likelihood(m, data) / trial_len for name, m in models.items()},
        )

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, trial_specs))
    return [one(ts) for ts in trial_specs]


def paired_t_test(a, b):
    """Two-sided paired t-test; returns (t statistic, p-value).

    Degenerate cases: all differences zero gives (0, 1); zero variance
    with a nonzero mean gives (+-inf, 0).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise LengthMismatch("paired samples must be equal-length vectors")
    if len(a) < 2:
        raise LengthMismatch("need at least two pairs")
    d = a - b
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        if mean == 0.0:
            return 0.0, 1.0
        return math.copysign(math.inf, mean), 0.0
    t = mean / (sd / math.sqrt(len(d)))
    p = 2.0 * float(stats.t.sf(abs(t), len(d) - 1))
    return float(t), p


def cv_folds(n, k, shuffle=False, seed=0):
    """Index partition into k folds; contiguous blocks unless shuffled."""
    idx = np.arange(n)
    if shuffle:
        np.random.default_rng(seed).shuffle(idx)
    return [f for f in np.array_split(idx, k) if len(f)]


@dataclass
class DimComparison:
    m: int
    avg_ll: dict
    winner: str
    t_stat: float
    p_value: float
    elbo_traces: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "m": self.m,
            "avg_ll": self.avg_ll,
            "winner": self.winner,
            "t_stat": self.t_stat,
            "p_value": self.p_value,
        }


@dataclass
class ComparisonReport:
    """Frame-field hypothesis test: per-dimension likelihoods and winner."""

    mode: str
    dims: list
    per_dim: list
    winner: str
    alpha: float = 0.05

    def to_dict(self):
        return {
            "mode": self.mode,
            "dims": list(self.dims),
            "winner": self.winner,
            "alpha": self.alpha,
            "per_dim": [
                dict(d.to_dict(), significant=bool(d.p_value < self.alpha))
                for d in self.per_dim
            ],
        }


def _fit_both_frames(train, manifold, lms, m, n_landmarks, iters, seed, learn_weights):
    out = {}
    n = train.shape[1]
    for tag, fld in (("gecov", gecov_for(manifold)), ("eucov", EuCov(n))):
        cfg = FitConfig(
            m=m,
            n_landmarks=n_landmarks,
            max_iters=iters,
            elbo_tol=0.0,
            seed=seed,
            learn_weights=learn_weights,
        )
        out[tag] = fit(train, manifold, fld, cfg, landmarks=lms)
    return out


def _compare_spec(spec, dims, seed, n_trials, trial_len, em_iters, learn_weights, threads):
    train, _ = sample(with_seed(spec, seed, _TRAIN_STREAM, 0))
    iters = em_iters if em_iters is not None else spec.em_iters
    learn = False if learn_weights is None else learn_weights
    base = make_landmarks(spec.manifold, spec.n_landmarks)
    lms = LandmarkSet(base.points, true_landmark_weights(spec, base))

    models = {}
    traces = {}
    for m in dims:
        fits = _fit_both_frames(
            train, spec.manifold, lms, m, spec.n_landmarks, iters, (seed, 2, m), learn
        )
        for tag, (mod, rep) in fits.items():
            models[f"{tag}-m{m}"] = mod
            traces[(m, tag)] = rep
        models[f"ppca-m{m}"] = fit_ppca(train, m)

    trials = evaluate_trials(models, spec, n_trials, trial_len, seed=seed, threads=threads)
    per_dim = []
    for m in dims:
        ge = np.array([t.avg_ll[f"gecov-m{m}"] for t in trials])
        eu = np.array([t.avg_ll[f"eucov-m{m}"] for t in trials])
        pp = np.array([t.avg_ll[f"ppca-m{m}"] for t in trials])
        t_stat, p = paired_t_test(ge, eu)
        winner = "gecov" if ge.mean() > eu.mean() else "eucov"
        per_dim.append(
            DimComparison(
                m,
                {"gecov": float(ge.mean()), "eucov": float(eu.mean()), "ppca": float(pp.mean())},
                winner,
                t_stat,
                p,
                {
                    "gecov": list(traces[(m, "gecov")].elbo_trace),
                    "eucov": list(traces[(m, "eucov")].elbo_trace),
                },
            )
        )
    return ComparisonReport("spec", list(dims), per_dim, per_dim[-1].winner)


def _compare_data(
    data, manifold, dims, seed, folds, n_landmarks, em_iters, learn_weights, shuffle
):
    data = np.asarray(data, dtype=float)
    T, n = data.shape
    iters = 50 if em_iters is None else em_iters
    learn = True if learn_weights is None else learn_weights
    lms = make_landmarks(manifold, n_landmarks)
    parts = cv_folds(T, folds, shuffle=shuffle, seed=seed)

    pooled = {f"{tag}-m{m}": np.empty(T) for m in dims for tag in ("gecov", "eucov", "ppca")}
    traces = {}
    for fi, test_idx in enumerate(parts):
        mask = np.ones(T, dtype=bool)
        mask[test_idx] = False
        train, test = data[mask], data[test_idx]
        for m in dims:
            fits = _fit_both_frames(
                train, manifold, lms, m, n_landmarks, iters, (seed, 3, fi, m), learn
            )
            for tag, (mod, rep) in fits.items():
                pooled[f"{tag}-m{m}"][test_idx] = model_sample_log_likelihoods(mod, test)
                traces[(fi, m, tag)] = rep
            pp = fit_ppca(train, m)
            pooled[f"ppca-m{m}"][test_idx] = ppca_sample_log_likelihoods(pp, test)

    per_dim = []
    for m in dims:
        ge, eu, pp = (pooled[f"{tag}-m{m}"] for tag in ("gecov", "eucov", "ppca"))
        t_stat, p = paired_t_test(ge, eu)
        winner = "gecov" if ge.mean() > eu.mean() else "eucov"
        per_dim.append(
            DimComparison(
                m,
                {"gecov": float(ge.mean()), "eucov": float(eu.mean()), "ppca": float(pp.mean())},
                winner,
                t_stat,
                p,
            )
        )
    return ComparisonReport("data", list(dims), per_dim, per_dim[-1].winner)


def compare_coordinates(
    source,
    *,
    dims,
    seed=0,
    n_trials=20,
    trial_len=2000,
    folds=5,
    manifold=None,
    n_landmarks=500,
    em_iters=None,
    learn_weights=None,
    shuffle=False,
    threads=1,
):
    """Fit geometric and Euclidean frame models (plus the flat baseline)
    and report which frame explains the data better.

    A TrueModelSpec source runs the trial protocol (fresh held-out trials,
    paired t-test on trial averages). An array source runs k-fold
    cross-validation with contiguous blocks and pools per-sample test
    log likelihoods for the t-test.
    """
    dims = list(dims)
    if isinstance(source, TrueModelSpec):
        return _compare_spec(
            source, dims, seed, n_trials, trial_len, em_iters, learn_weights, threads
        )
    if manifold is None:
        raise ValueError("array data needs a manifold")
    return _compare_data(
        np.asarray(source, dtype=float),
        manifold,
        dims,
        seed,
        folds,
        n_landmarks,
        em_iters,
        learn_weights,
        shuffle,
    )


def _report_payload(rep):
    return {
        "elbo_trace": [float(v) for v in rep.elbo_trace],
        "converged": rep.converged,
        "n_iters": rep.n_iters,
        "clamp_events": rep.clamp_events,
    }


def table2_simulation(
    seed=1,
    columns=("loop2d", "loop10d", "torus"),
    n_trials=20,
    trial_len=2000,
    threads=1,
    progress=None,
):
    """Run the standard simulation grid end to end at full rank.

    For each manifold family and each true frame field, fits both frame
    hypotheses plus the flat baseline on a fresh training set and scores
    them on held-out trials. Torus cells average over the two latent laws
    and over given vs learned landmark weights, and report the
    matched-vs-unmatched test separately for both weight modes; loop cells
    use the given (true) weights.

    Returns a JSON-friendly nested dict: grid[family][true_coords] has the
    mean trial log likelihoods per fitted model, paired-test p-values, an
    ordering flag, and per-fit diagnostics.
    """

    def say(msg):
        if progress is not None:
            progress(msg)

    specs = standard_specs()
    grid = {}
    for family in columns:
        grid[family] = {}
        for true_coords in ("gecov", "eucov"):
            if family == "torus":
                cases = [specs[f"torus-{law}-{true_coords}"] for law in ("uniang", "unitorus")]
                weight_modes = ("given", "learned")
            else:
                cases = [specs[f"{family}-{true_coords}"]]
                weight_modes = ("given",)

            fit_trials = {(mode, tag): [] for mode in weight_modes for tag in ("gecov", "eucov")}
            ppca_trials = []
            fit_info = []
            for ci, case in enumerate(cases):
                say(f"{family}/{true_coords}: simulating {case.name}")
                train, _ = sample(with_seed(case, seed, _TRAIN_STREAM, ci))
                n = case.ambient_dim
                base = make_landmarks(case.manifold, case.n_landmarks)
                lms = LandmarkSet(base.points, true_landmark_weights(case, base))
                models = {}
                for mode in weight_modes:
                    for tag, fld in (
                        ("gecov", gecov_for(case.manifold)),
                        ("eucov", EuCov(n)),
                    ):
                        say(f"{family}/{true_coords}: fit {tag} ({mode} weights)")
                        cfg = FitConfig(
                            m=n,
                            n_landmarks=case.n_landmarks,
                            max_iters=case.em_iters,
                            elbo_tol=0.0,
                            seed=(seed, 2, ci, len(models)),
                            learn_weights=(mode == "learned"),
                        )
                        mod, rep = fit(train, case.manifold, fld, cfg, landmarks=lms)
                        models[f"{mode}:{tag}"] = mod
                        fit_info.append(
                            dict(
                                _report_payload(rep),
                                case=case.name,
                                coords=tag,
                                weights=mode,
                            )
                        )
                models["ppca"] = fit_ppca(train, n)
                say(f"{family}/{true_coords}: scoring {n_trials} trials")
                trials = evaluate_trials(
                    models, case, n_trials, trial_len, seed=seed, threads=threads
                )
                for t in trials:
                    ppca_trials.append(t.avg_ll["ppca"])
                    for mode in weight_modes:
                        for tag in ("gecov", "eucov"):
                            fit_trials[(mode, tag)].append(t.avg_ll[f"{mode}:{tag}"])

            matched, unmatched = true_coords, ("eucov" if true_coords == "gecov" else "gecov")
            p_values = {}
            by_mode = {}
            for mode in weight_modes:
                _, p = paired_t_test(fit_trials[(mode, matched)], fit_trials[(mode, unmatched)])
                p_values[mode] = p
                by_mode[mode] = {
                    tag: float(np.mean(fit_trials[(mode, tag)])) for tag in ("gecov", "eucov")
                }
            pooled = {
                tag: [v for mode in weight_modes for v in fit_trials[(mode, tag)]]
                for tag in ("gecov", "eucov")
            }
            cell = {
                "gecov_fit": float(np.mean(pooled["gecov"])),
                "eucov_fit": float(np.mean(pooled["eucov"])),
                "ppca": float(np.mean(ppca_trials)),
                "p_matched_vs_unmatched": p_values,
                "by_weight_mode": by_mode,
            }
            cell["ordering_ok"] = bool(
                cell[f"{matched}_fit"] > cell[f"{unmatched}_fit"] > cell["ppca"]
            )
            cell["fits"] = fit_info
            grid[family][true_coords] = cell
    return grid
