"""Command line interface.

Subcommands: simulate, fit-manifold, fit, ppca, loglik, compare,
reproduce. All randomness flows from --seed (falling back to the
PGPCA_SEED environment variable, then 0). Exit codes: 0 success, 1 usage
error, 2 data or model error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import serialize
from .coords import EuCov, gecov_for
from .errors import PgpcaError
from .evaluate import compare_coordinates, table2_simulation
from .manifold import fit_closed_spline, make_landmarks
from .model import FitConfig, FitReport, fit, log_likelihood
from .ppca import fit_ppca, ppca_log_likelihood
from .simulate import sample, standard_specs, with_samples, with_seed


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _parse_dims(text):
    if ".." in text:
        lo, hi = text.split("..")
        return list(range(int(lo), int(hi) + 1))
    return [int(v) for v in text.split(",")]


def _resolve_seed(seed):
    if seed is not None:
        return seed
    return int(os.environ.get("PGPCA_SEED", "0"))


def _load_manifold_arg(name):
    if name in serialize.ANALYTIC_MANIFOLDS:
        return serialize.ANALYTIC_MANIFOLDS[name]()
    if name == "loop10d":
        from .simulate import loop10d_manifold

        return loop10d_manifold()
    return serialize.load_manifold(name)


def _coords_for(name, manifold, n):
    if name == "eucov":
        return EuCov(n)
    if name == "gecov":
        return gecov_for(manifold)
    raise ValueError(f"unknown coordinate variant {name!r}")


def _add_common(p):
    p.add_argument("--seed", type=int, default=None, help="RNG seed (default: PGPCA_SEED or 0)")
    p.add_argument("--config", default=None, help="JSON file with default option values")


def _build_parser():
    parser = _Parser(prog="pgpca", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    subparsers = {}

    p = sub.add_parser("simulate", parents=[], help="draw samples from a standard true model")
    p.add_argument("--spec", required=True, choices=sorted(standard_specs()))
    p.add_argument("--out", required=True)
    p.add_argument("--latents", default=None, help="also write the latent states")
    p.add_argument("--samples", type=int, default=None, help="override the spec sample count")
    p.add_argument("--header", action="store_true")
    _add_common(p)
    subparsers["simulate"] = p

    p = sub.add_parser("fit-manifold", help="fit a closed spline to CSV data")
    p.add_argument("--data", required=True)
    p.add_argument("--knots", type=int, required=True)
    p.add_argument("--out", required=True)
    _add_common(p)
    subparsers["fit-manifold"] = p

    p = sub.add_parser("fit", help="fit the manifold model by EM")
    p.add_argument("--data", required=True)
    p.add_argument("--manifold", required=True,
                   help="ellipse | torus | loop10d | manifold.json")
    p.add_argument("--coords", required=True, choices=["eucov", "gecov"])
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--landmarks", type=int, default=500)
    p.add_argument("--iters", type=int, default=50)
    p.add_argument("--tol", type=float, default=1e-7)
    p.add_argument("--learn-weights", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--restarts", type=int, default=1, help="seeded restarts, best bound kept")
    p.add_argument("--out", required=True)
    p.add_argument("--report", default=None)
    _add_common(p)
    subparsers["fit"] = p

    p = sub.add_parser("ppca", help="closed-form flat baseline")
    p.add_argument("--data", required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--out", required=True)
    _add_common(p)
    subparsers["ppca"] = p

    p = sub.add_parser("loglik", help="log likelihood of a saved model on CSV data")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    _add_common(p)
    subparsers["loglik"] = p

    p = sub.add_parser("compare", help="geometric vs Euclidean frame hypothesis test")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--spec", choices=sorted(standard_specs()))
    src.add_argument("--data")
    p.add_argument("--manifold", default=None, help="required with --data")
    p.add_argument("--dims", required=True, help="e.g. 0..3 or 0,2,5")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--trial-len", type=int, default=2000)
    p.add_argument("--landmarks", type=int, default=500)
    p.add_argument("--iters", type=int, default=None)
    p.add_argument("--learn-weights", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--shuffle", action="store_true")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", default=None)
    _add_common(p)
    subparsers["compare"] = p

    p = sub.add_parser("reproduce", help="run a standard experiment grid end to end")
    p.add_argument("target", choices=["table2-sim"])
    p.add_argument("--columns", default="loop2d,loop10d,torus")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--trial-len", type=int, default=2000)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", default=None)
    _add_common(p)
    subparsers["reproduce"] = p

    return parser, subparsers


def _parse_args(argv):
    parser, subparsers = _build_parser()
    args = parser.parse_args(argv)
    cfg_path = getattr(args, "config", None)
    if cfg_path:
        with open(cfg_path) as f:
            cfg = json.load(f)
        sp = subparsers[args.command]
        dests = {a.dest for a in sp._actions}
        unknown = set(cfg) - dests
        if unknown:
            sp.error(f"unknown config keys: {sorted(unknown)}")
        sp.set_defaults(**cfg)
        args = parser.parse_args(argv)  # explicit flags still win
    return args


def _cmd_simulate(args, seed):
    spec = standard_specs()[args.spec]
    spec = with_seed(spec, seed)
    if args.samples:
        spec = with_samples(spec, args.samples)
    data, latents = sample(spec)
    serialize.save_csv(args.out, data, header=args.header)
    if args.latents:
        serialize.save_csv(args.latents, latents, header=args.header)
    print(f"wrote {data.shape[0]} samples of dimension {data.shape[1]} to {args.out}")
    return 0


def _cmd_fit_manifold(args, seed):
    data = serialize.load_csv(args.data)
    manifold = fit_closed_spline(data, args.knots, seed)
    serialize.save_manifold(manifold, args.out)
    print(f"fitted closed spline: {args.knots} knots, length {manifold.period:.6g}")
    return 0


def _cmd_fit(args, seed):
    data = serialize.load_csv(args.data)
    manifold = _load_manifold_arg(args.manifold)
    coords = _coords_for(args.coords, manifold, data.shape[1])
    landmarks = make_landmarks(manifold, args.landmarks)
    best = None
    for r in range(max(1, args.restarts)):
        cfg = FitConfig(
            m=args.dim,
            n_landmarks=args.landmarks,
            max_iters=args.iters,
            elbo_tol=args.tol,
            seed=(seed, r) if args.restarts > 1 else seed,
            learn_weights=args.learn_weights,
        )
        model, report = fit(data, manifold, coords, cfg, landmarks=landmarks)
        if best is None or report.elbo_trace[-1] > best[1].elbo_trace[-1]:
            best = (model, report)
    model, report = best
    serialize.save_model(model, args.out)
    if args.report:
        payload = {
            "elbo_trace": report.elbo_trace,
            "converged": report.converged,
            "n_iters": report.n_iters,
            "clamp_events": report.clamp_events,
            "iter_seconds": report.iter_seconds,
            "warnings": report.warnings,
            "final_log_likelihood": report.final_log_likelihood,
        }
        with open(args.report, "w") as f:
            json.dump(payload, f)
    print(
        f"fitted m={args.dim} model: final log-likelihood "
        f"{report.final_log_likelihood:.6f} over {report.n_iters} updates"
    )
    return 0


def _cmd_ppca(args, seed):
    data = serialize.load_csv(args.data)
    model = fit_ppca(data, args.dim)
    serialize.save_model(model, args.out)
    ll = ppca_log_likelihood(model, data)
    print(f"fitted ppca m={args.dim}: log-likelihood {ll:.6f}")
    return 0


def _cmd_loglik(args, seed):
    data = serialize.load_csv(args.data)
    model = serialize.load_model(args.model)
    if hasattr(model, "mean"):
        ll = ppca_log_likelihood(model, data)
    else:
        ll = log_likelihood(model, data)
    print(json.dumps({"log_likelihood": ll, "per_sample": ll / data.shape[0]}))
    return 0


def _cmd_compare(args, seed):
    dims = _parse_dims(args.dims)
    if args.spec:
        source = standard_specs()[args.spec]
        report = compare_coordinates(
            source,
            dims=dims,
            seed=seed,
            n_trials=args.trials,
            trial_len=args.trial_len,
            em_iters=args.iters,
            learn_weights=args.learn_weights,
            threads=args.threads,
        )
    else:
        if not args.manifold:
            raise ValueError("--data requires --manifold")
        data = serialize.load_csv(args.data)
        report = compare_coordinates(
            data,
            dims=dims,
            seed=seed,
            folds=args.folds,
            manifold=_load_manifold_arg(args.manifold),
            n_landmarks=args.landmarks,
            em_iters=args.iters,
            learn_weights=args.learn_weights,
            shuffle=args.shuffle,
        )
    payload = report.to_dict()
    if args.out:
        with open(args.out, "w") as f:
            json.dump(payload, f, indent=2)
    for d in payload["per_dim"]:
        lls = d["avg_ll"]
        print(
            f"m={d['m']}: gecov {lls['gecov']:.4f}  eucov {lls['eucov']:.4f}  "
            f"ppca {lls['ppca']:.4f}  winner={d['winner']}  p={d['p_value']:.3g}"
        )
    print(f"winner: {payload['winner']}")
    return 0


def _cmd_reproduce(args, seed):
    columns = [c for c in args.columns.split(",") if c]
    grid = table2_simulation(
        seed=seed,
        columns=columns,
        n_trials=args.trials,
        trial_len=args.trial_len,
        threads=args.threads,
        progress=lambda msg: print(msg, file=sys.stderr),
    )
    if args.out:
        with open(args.out, "w") as f:
            json.dump(grid, f, indent=2)
    for family, cols in grid.items():
        for true_coords, cell in cols.items():
            pvals = " ".join(
                f"p[{mode}]={p:.3g}" for mode, p in cell["p_matched_vs_unmatched"].items()
            )
            print(
                f"{family:8s} true={true_coords}: gecov {cell['gecov_fit']:.4f}  "
                f"eucov {cell['eucov_fit']:.4f}  ppca {cell['ppca']:.4f}  "
                f"ordering={'OK' if cell['ordering_ok'] else 'VIOLATED'}  {pvals}"
            )
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "fit-manifold": _cmd_fit_manifold,
    "fit": _cmd_fit,
    "ppca": _cmd_ppca,
    "loglik": _cmd_loglik,
    "compare": _cmd_compare,
    "reproduce": _cmd_reproduce,
}


def main(argv=None):
    try:
        args = _parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 1
    seed = _resolve_seed(args.seed)
    try:
        return _COMMANDS[args.command](args, seed)
    except (PgpcaError, OSError, ValueError, KeyError) as e:
        print(f"pgpca: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
