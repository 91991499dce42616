"""Command line front end.

Subcommands: generate (problem files), run (Monte Carlo trajectories),
bounds (guarantee values), exact (closed-form risk curves), rates (fitted
versus predicted exponents), compare (Monte Carlo against the exact
oracle), fig1 (the canned decay study).

Exit codes: 0 success, 1 configuration or runtime failure, 2 usage error
(argparse), 3 a --check style verification failed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analytic import (
    UnsupportedRegimeError,
    bound_av_tighter,
    bound_cor1,
    bound_cor2,
    bound_lemma1,
    bound_lemma1_variants,
    bound_th1,
    bound_th2,
    bound_th3,
    exact_acc_risk_moment,
    exact_acc_risk_spectral,
    exact_avsgd_risk,
)
from .harness import (
    analytic_to_record,
    compare_mc_to_oracle,
    fig1_experiment,
    rate_map,
    summarize_cell,
    write_plot_data,
    write_summary_csv,
    ExperimentCell,
)
from .problems import (
    SpectralProblem,
    load_problem,
    make_fig1_problem,
    make_source_problem,
    save_problem,
)
from .solvers import (
    ALGORITHMS,
    REGIMES,
    ConfigurationError,
    NumericAbort,
    SolverConfig,
    append_records_csv,
    default_params,
    primary_risk_column,
    run_batch,
)

THEOREMS = (
    "lemma1",
    "lemma1_norm_only",
    "lemma1_unstructured",
    "th1",
    "th2",
    "cor1",
    "th3",
    "cor2",
    "av_tighter",
)

ORACLES = ("additive_sampled", "additive_gaussian", "multiplicative")


def _out_dir(args) -> Path:
    raw = args.out_dir or os.environ.get("LMSLAB_OUT") or "."
    path = Path(raw)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_or_inline_problem(args) -> SpectralProblem:
    if getattr(args, "problem", None):
        return load_problem(args.problem)
    d = args.d
    theta0 = np.zeros(d)
    theta0[0] = args.norm
    return SpectralProblem(
        spectrum=np.ones(d),
        theta_star=np.zeros(d),
        theta0=theta0,
        sigma2=args.sigma**2,
        tau2=args.tau**2,
        label="inline",
    )


def _add_inline_problem_flags(p: argparse.ArgumentParser):
    p.add_argument("--problem", help="path to a problem JSON file (overrides the inline flags)")
    p.add_argument("--d", type=int, default=1, help="inline problem dimension (>= 1, identity spectrum)")
    p.add_argument(
        "--norm",
        type=float,
        default=1.0,
        help="inline problem ||theta0 - theta*|| (>= 0, placed on the first coordinate)",
    )
    p.add_argument(
        "--sigma",
        type=float,
        default=1.0,
        help="inline response noise level sigma (>= 0, variance sigma^2)",
    )
    p.add_argument(
        "--tau",
        type=float,
        default=1.0,
        help="inline additive gradient noise level tau (>= 0, covariance tau^2 Sigma)",
    )


def _build_config(args, problem) -> SolverConfig:
    checkpoints = tuple(args.checkpoints) if args.checkpoints else ()
    if args.regime:
        cfg = default_params(
            problem, args.algorithm, args.n, args.regime, r=args.r, b=args.b, gamma=args.gamma
        )
        if checkpoints:
            from dataclasses import replace

            cfg = replace(cfg, checkpoints=checkpoints)
        return cfg
    if args.gamma is None:
        raise ConfigurationError("--gamma is required when no --regime is given")
    return SolverConfig(
        algorithm=args.algorithm,
        gamma=args.gamma,
        lam=args.lam,
        delta=args.delta,
        horizon=args.n,
        checkpoints=checkpoints,
        momentum_schedule=args.momentum_schedule,
        override=args.override,
    )


def _cmd_generate(args) -> int:
    if args.kind == "fig1":
        problem = make_fig1_problem(args.d, seed=args.seed)
        extra = ""
    else:
        if args.b is None or args.r is None:
            raise ConfigurationError("generate source needs --b and --r")
        problem, cond = make_source_problem(args.d, args.b, args.r, seed=args.seed)
        extra = f" (norm_r={cond.norm_r:.6g}, trace_b={cond.trace_b:.6g})"
    path = Path(args.out) if args.out else _out_dir(args) / f"{problem.label}.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    save_problem(problem, path)
    print(f"wrote {path} problem_id={problem.problem_id}{extra}")
    return 0


def _cmd_run(args) -> int:
    problem = load_problem(args.problem)
    cfg = _build_config(args, problem)
    records = run_batch(
        problem, args.oracle, cfg, base_seed=args.seed, reps=args.reps, cell_id=args.cell_id
    )
    out = _out_dir(args)
    append_records_csv(records, out / "runs.csv")
    col = 1 + primary_risk_column(cfg.algorithm)
    finals = [rec.rows[-1][col] for rec in records]
    print(
        f"{cfg.algorithm} oracle={args.oracle} n={cfg.horizon} gamma={cfg.gamma:.6g} "
        f"lam={cfg.lam:.6g} reps={args.reps}"
    )
    print(f"final risk mean={np.mean(finals)!r} min={min(finals)!r} max={max(finals)!r}")
    print(f"appended {sum(len(r.rows) for r in records)} rows to {out / 'runs.csv'}")
    return 0


def _cmd_bounds(args) -> int:
    problem = _load_or_inline_problem(args)
    theorem = args.theorem
    if theorem == "lemma1":
        value = bound_lemma1(problem, args.gamma, args.lam, args.n)
    elif theorem == "lemma1_norm_only":
        value = bound_lemma1_variants(problem, args.gamma, args.lam, args.n, "norm_only")
    elif theorem == "lemma1_unstructured":
        value = bound_lemma1_variants(problem, args.gamma, args.lam, args.n, "unstructured")
    elif theorem == "th1":
        value = bound_th1(problem, args.gamma, args.lam, args.n)
    elif theorem == "th2":
        value = bound_th2(problem, args.gamma, args.lam, args.n)
    elif theorem == "cor1":
        value = bound_cor1(problem, args.gamma, args.n)
    elif theorem == "th3":
        value = bound_th3(problem, args.gamma, args.lam, args.n, args.r, args.b)
    elif theorem == "cor2":
        value = bound_cor2(problem, args.gamma, args.n, args.r, args.b)
    else:
        value = bound_av_tighter(problem, args.gamma, args.n, args.r, args.b)
    if args.json:
        print(json.dumps(value.to_dict()))
        return 0
    for name, comp in value.components.items():
        print(f"  {name:<10} {comp!r}")
    print(f"total {value.total!r}")
    return 0


def _cmd_exact(args) -> int:
    problem = load_problem(args.problem)
    algorithm = "AvGD" if args.variant == "averaged" else "AvAccGD"
    checkpoints = tuple(args.checkpoints) if args.checkpoints else ()
    cfg = SolverConfig(
        algorithm=algorithm,
        gamma=args.gamma,
        lam=args.lam,
        delta=args.delta,
        horizon=args.n,
        checkpoints=checkpoints,
    )
    fn = {
        "averaged": exact_avsgd_risk,
        "acc_moment": exact_acc_risk_moment,
        "acc_spectral": exact_acc_risk_spectral,
    }[args.variant]
    result = fn(problem, cfg)
    if args.json:
        print(json.dumps(result.to_dict()))
    else:
        print("iter exact_risk bias_reg bias_opt variance")
        for n, risk, breg, bopt, var in result.rows:
            print(f"{n} {risk!r} {breg!r} {bopt!r} {var!r}")
    if args.out_dir or os.environ.get("LMSLAB_OUT"):
        out = _out_dir(args)
        append_records_csv([analytic_to_record(result, problem, cfg)], out / "exact.csv")
        print(f"appended {len(result.rows)} rows to {out / 'exact.csv'}")
    return 0


def _cmd_rates(args) -> int:
    rows = rate_map(
        b=args.b,
        r_list=args.r,
        d=args.d,
        horizons=args.horizons,
        base_seed=args.seed,
        reps=args.reps,
        workers=args.workers,
        adapt=args.adapt,
    )
    print("r b algorithm regime d fitted predicted valid r2")
    failures = []
    for row in rows:
        print(
            f"{row.r:g} {row.b:g} {row.algorithm} {row.regime} {row.d_used} "
            f"{row.fitted.slope:.4f} {row.predicted:.4f} {row.valid} {row.fitted.r2:.4f}"
        )
        if row.valid and abs(row.fitted.slope - row.predicted) > args.tol:
            failures.append(row)
    if args.out_dir or os.environ.get("LMSLAB_OUT"):
        out = _out_dir(args)
        import csv as _csv

        with (out / "rates.csv").open("w", newline="") as fh:
            writer = _csv.writer(fh)
            writer.writerow(
                ["r", "b", "algorithm", "regime", "d", "fitted", "predicted", "valid", "r2"]
            )
            for row in rows:
                writer.writerow(
                    [
                        row.r,
                        row.b,
                        row.algorithm,
                        row.regime,
                        row.d_used,
                        repr(row.fitted.slope),
                        repr(row.predicted),
                        row.valid,
                        repr(row.fitted.r2),
                    ]
                )
        print(f"wrote {out / 'rates.csv'}")
    if args.check and failures:
        for row in failures:
            print(
                f"check failed: {row.algorithm} at r={row.r:g} fitted {row.fitted.slope:.4f} "
                f"vs predicted {row.predicted:.4f} (tol {args.tol:g})",
                file=sys.stderr,
            )
        return 3
    return 0


def _cmd_compare(args) -> int:
    problem = load_problem(args.problem)
    cfg = _build_config(args, problem)
    if args.oracle != "additive_gaussian":
        raise ConfigurationError(
            "compare needs the additive_gaussian oracle; it is the one the exact curves describe"
        )
    records = run_batch(
        problem, args.oracle, cfg, base_seed=args.seed, reps=args.reps, cell_id=args.cell_id
    )
    cell = ExperimentCell(
        cell_id=args.cell_id, problem=problem, oracle=args.oracle, config=cfg, reps=args.reps
    )
    summary = summarize_cell(cell, records)
    if cfg.algorithm == "AvGD":
        exact = exact_avsgd_risk(problem, cfg)
    elif cfg.algorithm == "AvAccGD":
        exact = exact_acc_risk_moment(problem, cfg)
    else:
        raise ConfigurationError("compare covers the averaged tags AvGD and AvAccGD")
    report = compare_mc_to_oracle(summary, exact)
    print(
        f"{cfg.algorithm} reps={args.reps} checkpoints={report.iters.size} "
        f"max|z|={report.max_abs_z:.3f} frac(|z|>2)={report.frac_above_2:.3f} ok={report.ok}"
    )
    if args.verbose:
        print("iter mc_mean exact stderr z")
        for i in range(report.iters.size):
            print(
                f"{report.iters[i]} {report.mc_mean[i]!r} {report.exact[i]!r} "
                f"{report.stderr[i]!r} {report.z[i]:.3f}"
            )
    if args.check and not report.ok:
        print("check failed: Monte Carlo mean is not consistent with the exact curve", file=sys.stderr)
        return 3
    return 0


def _cmd_fig1(args) -> int:
    result = fig1_experiment(
        kind=args.kind,
        d=args.d,
        n=args.n,
        reps=args.reps,
        base_seed=args.seed,
        workers=args.workers,
    )
    print(f"fig1 {args.kind} d={args.d} n={result.n} reps={result.reps}")
    print(f"fit window [{result.window[0]:g}, {result.window[1]:g}]")
    for label, fit in result.fits.items():
        print(f"{label:<8} slope {fit.slope:+.4f} (r2 {fit.r2:.4f})")
    if args.out_dir or os.environ.get("LMSLAB_OUT"):
        out = _out_dir(args)
        write_summary_csv(result.summaries.values(), out / f"fig1_{args.kind}_summary.csv")
        for label, s in result.summaries.items():
            path = out / f"fig1_{args.kind}_{label}.csv"
            write_plot_data(path, s.iters, s.mean_risk)
        print(f"wrote plot data to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lmslab",
        description="Averaged and accelerated stochastic gradient for least squares: "
        "runs, exact risk curves, and guarantee values.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_out(p):
        p.add_argument(
            "--out-dir",
            help="directory for output files (default: $LMSLAB_OUT, else current directory)",
        )

    g = sub.add_parser("generate", help="write a problem instance to JSON")
    g.add_argument("kind", choices=("fig1", "source"), help="problem family")
    g.add_argument("--d", type=int, default=25, help="dimension (>= 1)")
    g.add_argument("--b", type=float, help="capacity exponent in (0, 1] (source only)")
    g.add_argument("--r", type=float, help="regularity exponent in [-1, 1] (source only)")
    g.add_argument("--seed", type=int, default=0, help="draw seed (>= 0)")
    g.add_argument("--out", help="output file (default: <label>.json in the output directory)")
    add_out(g)
    g.set_defaults(func=_cmd_generate)

    def add_config_flags(p, require_problem=True):
        if require_problem:
            p.add_argument("--problem", required=True, help="path to a problem JSON file")
        p.add_argument(
            "--algorithm", default="AvGD", choices=ALGORITHMS, help="recursion variant"
        )
        p.add_argument("--gamma", type=float, help="step size (> 0)")
        p.add_argument("--lam", type=float, default=0.0, help="ridge level toward theta0 (>= 0)")
        p.add_argument(
            "--delta", type=float, default=0.0, help="constant momentum in [lower endpoint, 1]"
        )
        p.add_argument("--n", type=int, default=1000, help="horizon, number of iterations (>= 1)")
        p.add_argument(
            "--checkpoints",
            type=int,
            nargs="+",
            help="iterations to record (default: log grid, about 25 per decade)",
        )
        p.add_argument(
            "--momentum-schedule",
            default="constant",
            choices=("constant", "nesterov"),
            help="constant uses --delta; nesterov decays as 1 - 2/k",
        )
        p.add_argument(
            "--regime",
            choices=REGIMES,
            help="derive gamma, lam, delta from a guarantee prescription at this horizon",
        )
        p.add_argument("--r", type=float, help="regularity exponent in [-1, 1] (th5/th6 regimes)")
        p.add_argument("--b", type=float, help="capacity exponent in (0, 1] (th5/th6 regimes)")
        p.add_argument(
            "--override", action="store_true", help="skip admissibility validation (exploratory)"
        )
        p.add_argument("--seed", type=int, default=0, help="base seed (>= 0)")
        p.add_argument("--cell-id", type=int, default=0, help="stream index for seed derivation")

    rn = sub.add_parser("run", help="simulate trajectories and append them to runs.csv")
    add_config_flags(rn)
    rn.add_argument("--oracle", default="multiplicative", choices=ORACLES, help="gradient oracle")
    rn.add_argument("--reps", type=int, default=1, help="independent replications (>= 1)")
    add_out(rn)
    rn.set_defaults(func=_cmd_run)

    bd = sub.add_parser("bounds", help="evaluate a guarantee value")
    bd.add_argument("--theorem", required=True, choices=THEOREMS, help="which guarantee")
    bd.add_argument("--gamma", type=float, required=True, help="step size (> 0)")
    bd.add_argument("--lam", type=float, default=0.0, help="ridge level (>= 0)")
    bd.add_argument("--n", type=int, required=True, help="horizon (>= 1)")
    bd.add_argument(
        "--r",
        type=float,
        nargs="+",
        default=[0.0],
        help="regularity exponents to minimize over (range depends on the guarantee)",
    )
    bd.add_argument(
        "--b", type=float, nargs="+", default=[1.0], help="capacity exponents to minimize over"
    )
    bd.add_argument("--json", action="store_true", help="print machine-readable JSON")
    _add_inline_problem_flags(bd)
    add_out(bd)
    bd.set_defaults(func=_cmd_bounds)

    ex = sub.add_parser("exact", help="closed-form expected risk of an averaged run")
    ex.add_argument("--problem", required=True, help="path to a problem JSON file")
    ex.add_argument(
        "--variant",
        default="averaged",
        choices=("averaged", "acc_moment", "acc_spectral"),
        help="averaged first-order run, or the accelerated run via moments or closed forms",
    )
    ex.add_argument("--gamma", type=float, required=True, help="step size (> 0)")
    ex.add_argument("--lam", type=float, default=0.0, help="ridge level (>= 0)")
    ex.add_argument("--delta", type=float, default=0.0, help="constant momentum (accelerated variants)")
    ex.add_argument("--n", type=int, required=True, help="horizon (>= 1)")
    ex.add_argument("--checkpoints", type=int, nargs="+", help="iterations to evaluate")
    ex.add_argument("--json", action="store_true", help="print machine-readable JSON")
    add_out(ex)
    ex.set_defaults(func=_cmd_exact)

    rt = sub.add_parser("rates", help="fitted versus predicted risk exponents")
    rt.add_argument("--b", type=float, required=True, help="capacity exponent in (0, 1]")
    rt.add_argument(
        "--r", type=float, nargs="+", required=True, help="regularity exponents in [-1, 1]"
    )
    rt.add_argument("--d", type=int, default=4096, help="problem dimension (>= 1)")
    rt.add_argument(
        "--horizons",
        type=int,
        nargs="+",
        help="horizon grid (default: powers of two from 128 to 8192)",
    )
    rt.add_argument("--seed", type=int, default=0, help="base seed (>= 0)")
    rt.add_argument("--reps", type=int, default=12, help="Monte Carlo replications per horizon")
    rt.add_argument("--workers", type=int, default=1, help="thread pool size (>= 1)")
    rt.add_argument(
        "--adapt", action="store_true", help="double d until the fitted slope stabilizes"
    )
    rt.add_argument("--check", action="store_true", help="exit 3 if a valid row misses --tol")
    rt.add_argument("--tol", type=float, default=0.15, help="slope tolerance used by --check")
    add_out(rt)
    rt.set_defaults(func=_cmd_rates)

    cp = sub.add_parser("compare", help="Monte Carlo mean against the exact risk curve")
    add_config_flags(cp)
    cp.add_argument(
        "--oracle",
        default="additive_gaussian",
        choices=ORACLES,
        help="gradient oracle (the exact curves describe additive_gaussian)",
    )
    cp.add_argument("--reps", type=int, default=200, help="independent replications (>= 2)")
    cp.add_argument("--verbose", action="store_true", help="print every checkpoint")
    cp.add_argument("--check", action="store_true", help="exit 3 when the curves disagree")
    add_out(cp)
    cp.set_defaults(func=_cmd_compare)

    f1 = sub.add_parser("fig1", help="decay study on the 1/i^3 spectrum")
    f1.add_argument("kind", choices=("bias", "variance"), help="which panel to run")
    f1.add_argument("--d", type=int, default=25, help="dimension (>= 1)")
    f1.add_argument("--n", type=int, help="horizon (default: 10^4 bias, 2x10^5 variance)")
    f1.add_argument("--reps", type=int, default=10, help="replications (>= 1)")
    f1.add_argument("--seed", type=int, default=0, help="base seed (>= 0)")
    f1.add_argument("--workers", type=int, default=1, help="thread pool size (>= 1)")
    add_out(f1)
    f1.set_defaults(func=_cmd_fig1)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, NumericAbort, UnsupportedRegimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
