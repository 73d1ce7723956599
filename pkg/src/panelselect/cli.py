"""Command-line front door.

Subcommands: estimate, select, nest, oracle, simulate.  Exit codes:
0 success, 2 validation/usage error, 3 numerical failure.  All
randomness flows through an explicit --seed, so rerunning a command
with identical flags and inputs produces byte-identical outputs.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import io
from .exceptions import (
    DegenerateFitError,
    PanelSelectError,
    RankDeficiencyError,
    ValidationError,
)
from .features import builtin_specs, detect_nesting, load_registry
from .oracle import DgpTruth, pseudo_true_analysis
from .panel import fe_estimate
from .selection import parse_criteria, select
from .simlab import (
    WeatherConfig,
    run_phacking_experiment,
    run_pseudo_true_experiment,
    run_selection_experiment,
)

_NUMERICAL_ERRORS = (RankDeficiencyError, DegenerateFitError, np.linalg.LinAlgError)


def _add_common(parser):
    parser.add_argument("--out-dir", default=".", help="directory for output CSVs")
    parser.add_argument("--seed", type=int, default=None, help="master RNG seed")
    parser.add_argument("--threads", type=int, default=1, help="worker threads")


def _resolve_models(args, H):
    if args.models:
        return load_registry(args.models, H)
    specs = [s for s in builtin_specs(H).values() if s is not None]
    return specs


def _resolve_named_spec(name, args, H):
    if args.models:
        for spec in load_registry(args.models, H):
            if spec.name == name:
                return spec
        raise ValidationError(f"model {name!r} not found in registry {args.models}")
    spec = builtin_specs(H).get(name)
    if spec is None:
        raise ValidationError(
            f"unknown built-in model {name!r}; pass --models for custom registries"
        )
    return spec


def cmd_estimate(args) -> int:
    data = io.load_dataset(args.panel, args.weather)
    models = _resolve_models(args, data.H)
    fits = [
        fe_estimate(
            data, spec, controls=not args.no_controls, year_effects=args.year_effects
        )
        for spec in models
    ]
    io.write_fit_csv(os.path.join(args.out_dir, "fit.csv"), fits)
    return 0


def cmd_select(args) -> int:
    data = io.load_dataset(args.panel, args.weather)
    models = _resolve_models(args, data.H)
    if not models:
        raise ValidationError("no candidate models given")
    seed = args.seed if args.seed is not None else 0
    criteria = parse_criteria(args.criteria, b=args.splits, seed=seed)
    reports = select(
        data, models, criteria,
        controls=not args.no_controls, year_effects=args.year_effects,
    )
    out = args.out or os.path.join(args.out_dir, "report.csv")
    io.write_selection_csv(out, reports)
    return 0


def cmd_nest(args) -> int:
    spec_a = _resolve_named_spec(args.spec_a, args, args.H)
    spec_g = _resolve_named_spec(args.spec_g, args, args.H)
    relation = detect_nesting(spec_a, spec_g)
    print(f"{spec_a.name} vs {spec_g.name}: {relation.verdict}")
    if relation.R is not None:
        print("R =")
        for row in np.atleast_2d(relation.R):
            print("  " + " ".join(f"{v:.17g}" for v in row))
    if relation.witness is not None:
        beta_a, beta_g = relation.witness
        print("witness beta_a = " + " ".join(f"{v:.17g}" for v in beta_a))
        print("witness beta_g = " + " ".join(f"{v:.17g}" for v in beta_g))
    print(f"max probe residual = {relation.residual:.17g}")
    return 0


def cmd_oracle(args) -> int:
    weather, _, _ = io.read_weather_csv(args.weather)
    H = weather.shape[2]
    models = _resolve_models(args, H)
    star = _resolve_named_spec(args.truth, args, H)
    beta = [float(b) for b in args.beta.split(",")]
    truth = DgpTruth(star_spec=star, beta_star=beta, sigma2=args.sigma2)
    results = [pseudo_true_analysis(weather, spec, truth) for spec in models]
    io.write_oracle_csv(os.path.join(args.out_dir, "oracle.csv"), results)
    return 0


def cmd_simulate(args) -> int:
    if args.seed is None:
        raise ValidationError("simulate needs an explicit --seed")
    config = WeatherConfig(n=args.n, T=args.t, H=args.h, seed=args.seed)
    if args.design in ("table1", "phacking"):
        report = run_phacking_experiment(
            config, reps=args.reps, seed=args.seed, threads=args.threads
        )
    elif args.design in ("table3", "pseudotrue"):
        report = run_pseudo_true_experiment(
            config, reps=args.reps, seed=args.seed, threads=args.threads
        )
    elif args.design in ("fig3", "selection"):
        criteria = parse_criteria(args.criteria, b=args.splits, seed=args.seed)
        report = run_selection_experiment(
            config, criteria, reps=args.reps, seed=args.seed, threads=args.threads
        )
    else:
        raise ValidationError(f"unknown design {args.design!r}")
    io.write_simulation_csvs(args.out_dir, report)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="panelselect",
        description="Model selection for fixed-effects panel models with "
        "aggregated high-frequency regressors.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_est = sub.add_parser("estimate", help="fit every model; write fit.csv")
    p_est.add_argument("--panel", required=True)
    p_est.add_argument("--weather", required=True)
    p_est.add_argument("--models", default=None, help="model registry file")
    p_est.add_argument("--year-effects", action="store_true")
    p_est.add_argument("--no-controls", action="store_true")
    _add_common(p_est)
    p_est.set_defaults(func=cmd_estimate)

    p_sel = sub.add_parser("select", help="run selection criteria; write report.csv")
    p_sel.add_argument("--panel", required=True)
    p_sel.add_argument("--weather", required=True)
    p_sel.add_argument("--models", default=None)
    p_sel.add_argument(
        "--criteria", default="aic,bic,sw1,sw2",
        help="comma list, e.g. aic,bic,sw1,sw2,mccv-p:0.75,mccv-shao",
    )
    p_sel.add_argument("--splits", type=int, default=None, help="MCCV splits b")
    p_sel.add_argument("--out", default=None, help="output CSV path")
    p_sel.add_argument("--year-effects", action="store_true")
    p_sel.add_argument("--no-controls", action="store_true")
    _add_common(p_sel)
    p_sel.set_defaults(func=cmd_select)

    p_nest = sub.add_parser("nest", help="classify the relation of two models")
    p_nest.add_argument("spec_a")
    p_nest.add_argument("spec_g")
    p_nest.add_argument("--models", default=None)
    p_nest.add_argument("--H", type=int, default=365, help="sub-periods per period")
    _add_common(p_nest)
    p_nest.set_defaults(func=cmd_nest)

    p_or = sub.add_parser("oracle", help="pseudo-true diagnostics; write oracle.csv")
    p_or.add_argument("--weather", required=True)
    p_or.add_argument("--models", default=None)
    p_or.add_argument("--truth", required=True, help="name of the true model")
    p_or.add_argument("--beta", required=True, help="comma list of true coefficients")
    p_or.add_argument("--sigma2", type=float, default=1.0)
    _add_common(p_or)
    p_or.set_defaults(func=cmd_oracle)

    p_sim = sub.add_parser("simulate", help="run an experiment; write three CSVs")
    p_sim.add_argument(
        "--design", required=True,
        help="table1|phacking, table3|pseudotrue, fig3|selection",
    )
    p_sim.add_argument("--n", type=int, required=True)
    p_sim.add_argument("--t", type=int, default=5)
    p_sim.add_argument("--h", type=int, default=365)
    p_sim.add_argument("--reps", type=int, default=500)
    p_sim.add_argument(
        "--criteria", default="aic,bic,sw1,sw2,mccv-p:0.75,mccv-shao"
    )
    p_sim.add_argument("--splits", type=int, default=None)
    _add_common(p_sim)
    p_sim.set_defaults(func=cmd_simulate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _NUMERICAL_ERRORS as exc:
        print(f"panelselect: numerical failure: {exc}", file=sys.stderr)
        return 3
    except (PanelSelectError, OSError) as exc:
        print(f"panelselect: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
