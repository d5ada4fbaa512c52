#!/usr/bin/env python3
"""
Command line for Rényi-divergence multi-source adaptation.

Subcommands print JSON on stdout; logs go to stderr.
Exit codes: 0 success, 1 invalid input, 2 solver did not converge.
"""

import argparse
import logging
import sys
from typing import List, Optional

from pydantic import ValidationError

from bounds import SUITES, run_suite, suite_summary
from combiners import CombinerParams, CombinerRule, combine
from config import Settings, get_settings
from core_model import InputValidationError, LossSpec, SolverConvergenceError
from divergence import AlphaOrder, d_alpha, renyi_divergence, renyi_entropy
from experiments import (
    GaussianGridConfig,
    run_approximation_experiment,
    run_gaussian_experiment,
    run_multi_function_experiment,
    write_csv,
)
from fitting import adversarial_target, fit_mixture, lemma1_tightness_floor, robust_fit
from json_loader import dumps, load_dist, load_dists, load_hypotheses, load_hypothesis, parse_weights, write_json

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_SOLVER = 2


def setup_logging(debug: bool = False, level: str = "INFO"):
    """Set up logging configuration on stderr."""
    format_str = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    logging.basicConfig(
        level=logging.DEBUG if debug else getattr(logging, level),
        format=format_str,
        handlers=[logging.StreamHandler(sys.stderr)],
        force=True,
    )


def _alpha(text: str) -> AlphaOrder:
    return AlphaOrder.parse(text)


def _ints(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _require_converged(converged: bool, what: str) -> None:
    if not converged:
        raise SolverConvergenceError(f"{what} did not converge")


def cmd_divergence(args, settings: Settings) -> int:
    p, q = load_dist(args.p), load_dist(args.q)
    value = renyi_divergence(p, q, args.alpha)
    print(dumps({"alpha": str(args.alpha), "D_alpha_bits": value.bits, "d_alpha": d_alpha(p, q, args.alpha)}))
    return EXIT_OK


def cmd_entropy(args, settings: Settings) -> int:
    p = load_dist(args.p)
    print(dumps({"alpha": str(args.alpha), "bits": renyi_entropy(p, args.alpha)}))
    return EXIT_OK


def cmd_fit(args, settings: Settings) -> int:
    result = fit_mixture(
        load_dist(args.target),
        load_dists(args.sources),
        args.alpha,
        tol=args.tol if args.tol is not None else settings.fit_tol,
        max_iters=args.max_iters or settings.fit_max_iters,
    )
    print(dumps(result))
    _require_converged(result.converged, "mixture fit")
    return EXIT_OK


def cmd_combine(args, settings: Settings) -> int:
    params = CombinerParams(
        rule=CombinerRule(args.rule),
        weights=parse_weights(args.weights) if args.weights else None,
        eta=args.eta,
        r=args.r,
    )
    h = combine(load_dists(args.sources), load_hypotheses(args.hyps), params)
    if args.out:
        write_json(h, args.out)
    print(dumps(h))
    return EXIT_OK


def cmd_lowerbound(args, settings: Settings) -> int:
    q, h, f = load_dist(args.q), load_hypothesis(args.h), load_hypothesis(args.f)
    target = adversarial_target(q, h, f, args.alpha, args.delta_alpha)
    out = target.model_dump()
    out["tightness_floor"] = lemma1_tightness_floor(target.p, q, h, f, args.alpha)
    print(dumps(out))
    return EXIT_OK


def cmd_robust_fit(args, settings: Settings) -> int:
    hyps, f = load_hypotheses(args.hyps), load_hypothesis(args.f)
    bound = max(h.range_bound for h in [*hyps, f])
    result = robust_fit(
        load_dists(args.sources),
        hyps,
        f,
        LossSpec.from_name(args.loss, bound),
        eta=args.eta if args.eta is not None else settings.robust_eta,
        delta=args.delta if args.delta is not None else settings.robust_delta,
        max_iters=args.max_iters or settings.robust_max_iters,
    )
    print(dumps(result))
    _require_converged(result.converged, "robust fit")
    return EXIT_OK


def cmd_verify(args, settings: Settings) -> int:
    seed = args.seed if args.seed is not None else settings.seed
    alpha = args.alpha.value if args.alpha is not None else None
    reports = run_suite(args.suite, args.trials, seed, alpha)
    summary = suite_summary(args.suite, args.trials, reports)
    print(dumps(reports))
    print(dumps(summary))
    if summary["violations"]:
        logger.error(f"❌ {summary['violations']} violations in suite {args.suite}")
    else:
        logger.info(f"✅ suite {args.suite}: no violations in {args.trials} trials")
    return EXIT_OK


def _grid_config(args, settings: Settings) -> GaussianGridConfig:
    fields = {
        "grid_cells": args.grid,
        "lambda_steps": args.lambda_steps,
        "seed": args.seed if args.seed is not None else settings.seed,
        "alpha": args.alpha,
        "n_train": args.n_train,
        "n_test": args.n_test,
    }
    return GaussianGridConfig(**{k: v for k, v in fields.items() if v is not None})


def cmd_experiment_gaussian(args, settings: Settings) -> int:
    cfg = _grid_config(args, settings)
    result = run_gaussian_experiment(cfg, workers=args.workers or settings.workers)
    out = args.out
    if out is None and args.save:
        out = settings.output_dir / f"gaussian_seed{cfg.seed}.csv"
    if out is not None:
        write_csv(result, out)
        print(dumps(result.model_dump(exclude={"rows"})))
    else:
        print(dumps(result))
    return EXIT_OK


def cmd_experiment_multifunc(args, settings: Settings) -> int:
    cfg = _grid_config(args, settings)
    reports = run_multi_function_experiment(cfg, args.perturbation, workers=args.workers or settings.workers)
    print(dumps(reports))
    print(dumps({"suite": "multifunc", "trials": cfg.lambda_steps, "violations": sum(not r.holds for r in reports)}))
    return EXIT_OK


def cmd_experiment_approx(args, settings: Settings) -> int:
    cfg = _grid_config(args, settings)
    result = run_approximation_experiment(cfg, sizes=args.sizes, seeds=args.seeds, smoothing=args.smoothing)
    print(dumps(result))
    return EXIT_OK


def _add_grid_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--grid", type=int, help="Grid cells per axis (even, default 64)")
    parser.add_argument("--lambda-steps", type=int, help="Number of lambda grid points (default 101)")
    parser.add_argument("--seed", type=int, help="Experiment seed (default RENYI_SEED)")
    parser.add_argument("--alpha", type=float, help="Divergence order (default 2)")
    parser.add_argument("--n-train", type=int, help="Training samples per source (default 5000)")
    parser.add_argument("--n-test", type=int, help="Test samples from the target (default 5000)")
    parser.add_argument("--workers", type=int, help="Threads for the lambda grid (default RENYI_WORKERS)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Rényi-divergence multi-source domain adaptation toolkit")
    parser.add_argument("--debug", action="store_true", help="Enable debug logging")
    parser.add_argument("--version", action="version", version="renyi-adaptation 1.0.0")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("divergence", help="D_alpha(P||Q) in bits")
    p.add_argument("--p", required=True, help="Distribution JSON for P")
    p.add_argument("--q", required=True, help="Distribution JSON for Q")
    p.add_argument("--alpha", type=_alpha, required=True, help="Order: float, one or inf")
    p.set_defaults(handler=cmd_divergence)

    p = sub.add_parser("entropy", help="H_alpha(P) in bits")
    p.add_argument("--p", required=True, help="Distribution JSON for P")
    p.add_argument("--alpha", type=_alpha, required=True, help="Order: float, zero, one or inf")
    p.set_defaults(handler=cmd_entropy)

    p = sub.add_parser("fit", help="Mixture of the sources closest to the target")
    p.add_argument("--target", required=True)
    p.add_argument("--sources", nargs="+", required=True)
    p.add_argument("--alpha", type=_alpha, required=True)
    p.add_argument("--tol", type=float, help="Optimality gap in bits (default RENYI_FIT_TOL)")
    p.add_argument("--max-iters", type=int)
    p.set_defaults(handler=cmd_fit)

    p = sub.add_parser("combine", help="Combine source hypotheses")
    p.add_argument("--sources", nargs="+", required=True)
    p.add_argument("--hyps", nargs="+", required=True)
    p.add_argument("--rule", choices=[r.value for r in CombinerRule], required=True)
    p.add_argument("--weights", help="Comma-separated simplex weights (dw, smoothed)")
    p.add_argument("--eta", type=float, default=0.0, help="Uniform smoothing weight (smoothed)")
    p.add_argument("--r", type=float, help="Norm order, >= 1 or inf (rnorm)")
    p.add_argument("--out", help="Also write the hypothesis JSON to this file")
    p.set_defaults(handler=cmd_combine)

    p = sub.add_parser("lowerbound", help="Adversarial target for a Boolean hypothesis")
    p.add_argument("--q", required=True)
    p.add_argument("--h", required=True)
    p.add_argument("--f", required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--delta-alpha", type=float, required=True)
    p.set_defaults(handler=cmd_lowerbound)

    p = sub.add_parser("robust-fit", help="Target-agnostic smoothed combination weights")
    p.add_argument("--sources", nargs="+", required=True)
    p.add_argument("--hyps", nargs="+", required=True)
    p.add_argument("--f", required=True)
    p.add_argument("--loss", choices=["absolute", "squared"], default="absolute")
    p.add_argument("--eta", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--max-iters", type=int)
    p.set_defaults(handler=cmd_robust_fit)

    p = sub.add_parser("verify", help="Check a bound over seeded random instances")
    p.add_argument("--suite", choices=sorted(SUITES), required=True)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int)
    p.add_argument("--alpha", type=_alpha, help="Fixed order (r for thm8, lemma9, thm10)")
    p.set_defaults(handler=cmd_verify)

    exp = sub.add_parser("experiment", help="Gaussian-grid experiments")
    exp_sub = exp.add_subparsers(dest="experiment", required=True)

    e = exp_sub.add_parser("gaussian", help="MSE and divergence across the mixture weight")
    _add_grid_args(e)
    e.add_argument("--out", help="Write the rows as CSV to this file")
    e.add_argument("--save", action="store_true", help="Write the CSV under RENYI_OUTPUT_DIR")
    e.set_defaults(handler=cmd_experiment_gaussian)

    e = exp_sub.add_parser("multifunc", help="Bounds with per-source labeling functions")
    _add_grid_args(e)
    e.add_argument("--perturbation", type=float, default=0.1)
    e.set_defaults(handler=cmd_experiment_multifunc)

    e = exp_sub.add_parser("approx", help="Divergence of empirical sources versus sample size")
    _add_grid_args(e)
    e.add_argument("--sizes", type=_ints, default=[100, 1000, 10000])
    e.add_argument("--seeds", type=int, default=20)
    e.add_argument("--smoothing", type=float, default=1.0)
    e.set_defaults(handler=cmd_experiment_approx)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main function with command line argument parsing."""
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        # usage errors share the invalid-input exit code
        if e.code:
            return EXIT_INPUT
        raise
    try:
        settings = get_settings()
    except InputValidationError as e:
        setup_logging(args.debug)
        logger.error(f"❌ {e}")
        return EXIT_INPUT
    setup_logging(args.debug, settings.log_level)

    try:
        return args.handler(args, settings)
    except (InputValidationError, ValidationError) as e:
        logger.error(f"❌ Invalid input: {e}")
        return EXIT_INPUT
    except SolverConvergenceError as e:
        logger.error(f"❌ {e}")
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
