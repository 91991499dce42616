"""Experiment orchestration: cell grids, replication summaries, rate fits.

An experiment is a list of cells, each pairing a problem with one solver
configuration and a replication count.  Replications inside a cell share
one vectorized batch; cells can run on a thread pool.  Results are
deterministic functions of (base_seed, cell_id, rep) alone, so the worker
count and completion order never change any number.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .analytic import AnalyticResult, exact_acc_risk_moment, rate_th5, rate_th6
from .oracles import OracleKind
from .problems import SpectralProblem, make_fig1_problem, make_source_problem
from .solvers import (
    RunRecord,
    SolverConfig,
    checkpoint_grid,
    default_params,
    primary_risk_column,
    run_batch,
)

__all__ = [
    "ExperimentCell",
    "ExperimentSpec",
    "ExperimentResult",
    "CellSummary",
    "RateFit",
    "ComparisonReport",
    "Fig1Result",
    "RateMapRow",
    "SUMMARY_HEADER",
    "run_experiment",
    "summarize_cell",
    "write_summary_csv",
    "write_plot_data",
    "fit_rate",
    "compare_mc_to_oracle",
    "analytic_to_record",
    "fig1_experiment",
    "rate_map",
]

SUMMARY_HEADER = ["cell_id", "iter", "mean_risk", "stderr", "n_reps"]


@dataclass
class ExperimentCell:
    """One (problem, oracle, config) point of an experiment grid."""

    cell_id: int
    problem: SpectralProblem
    oracle: str
    config: SolverConfig
    reps: int = 1
    theta0: np.ndarray | None = None
    label: str = ""


@dataclass
class ExperimentSpec:
    name: str
    cells: list
    base_seed: int = 0
    workers: int = 1


@dataclass
class CellSummary:
    """Replication mean and standard error of a cell's primary risk curve."""

    cell_id: int
    label: str
    algorithm: str
    iters: np.ndarray
    mean_risk: np.ndarray
    stderr: np.ndarray
    n_reps: int


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    records: dict  # cell_id -> list[RunRecord]
    summaries: list  # CellSummary, ordered by cell_id

    def summary(self, label: str) -> CellSummary:
        for s in self.summaries:
            if s.label == label:
                return s
        raise KeyError(f"no cell labelled {label!r}")


def summarize_cell(cell: ExperimentCell, records) -> CellSummary:
    col = 1 + primary_risk_column(cell.config.algorithm)
    data = np.array([[row[col] for row in rec.rows] for rec in records])
    iters = np.array([row[0] for row in records[0].rows], dtype=int)
    mean = data.mean(axis=0)
    if len(records) > 1:
        stderr = data.std(axis=0, ddof=1) / math.sqrt(len(records))
    else:
        stderr = np.zeros_like(mean)
    return CellSummary(
        cell_id=cell.cell_id,
        label=cell.label or f"cell{cell.cell_id}",
        algorithm=cell.config.algorithm,
        iters=iters,
        mean_risk=mean,
        stderr=stderr,
        n_reps=len(records),
    )


def run_experiment(spec: ExperimentSpec, out_dir=None) -> ExperimentResult:
    """Execute every cell and summarize it.

    With workers > 1 the cells are dispatched to a thread pool; numpy
    releases the interpreter lock in the heavy kernels, and determinism is
    unaffected because each replication derives its stream from
    (base_seed, cell_id, rep) alone.
    """

    def _one(cell: ExperimentCell):
        return run_batch(
            cell.problem,
            cell.oracle,
            cell.config,
            base_seed=spec.base_seed,
            reps=cell.reps,
            cell_id=cell.cell_id,
            theta0=cell.theta0,
        )

    if spec.workers > 1 and len(spec.cells) > 1:
        with ThreadPoolExecutor(max_workers=spec.workers) as pool:
            produced = list(pool.map(_one, spec.cells))
    else:
        produced = [_one(cell) for cell in spec.cells]

    records = {cell.cell_id: recs for cell, recs in zip(spec.cells, produced)}
    summaries = [summarize_cell(cell, recs) for cell, recs in zip(spec.cells, produced)]
    summaries.sort(key=lambda s: s.cell_id)

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        from .solvers import append_records_csv

        flat = [rec for cid in sorted(records) for rec in records[cid]]
        append_records_csv(flat, out / "runs.csv")
        write_summary_csv(summaries, out / "summary.csv")
    return ExperimentResult(spec=spec, records=records, summaries=summaries)


def write_summary_csv(summaries, path) -> None:
    path = Path(path)
    fresh = not path.exists() or path.stat().st_size == 0
    with path.open("a", newline="") as fh:
        writer = csv.writer(fh)
        if fresh:
            writer.writerow(SUMMARY_HEADER)
        for s in summaries:
            for it, mean, se in zip(s.iters, s.mean_risk, s.stderr):
                writer.writerow([s.cell_id, int(it), repr(float(mean)), repr(float(se)), s.n_reps])


def write_plot_data(path, iters, values) -> None:
    """Two-column log10 data for external plotting; skips nonpositive rows."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["log10_n", "log10_risk"])
        for it, val in zip(np.asarray(iters), np.asarray(values)):
            if it > 0 and val > 0:
                writer.writerow([repr(math.log10(it)), repr(math.log10(val))])


@dataclass
class RateFit:
    """Least-squares slope of log10(risk) against log10(n)."""

    slope: float
    intercept: float
    r2: float
    window: tuple
    n_points: int


def fit_rate(iters, risks, window) -> RateFit:
    """Fit a power-law exponent over the checkpoints inside the window.

    Keeps points with window[0] <= iter <= window[1] and risk > 0; needs at
    least five of them.
    """
    iters = np.asarray(iters, dtype=float)
    risks = np.asarray(risks, dtype=float)
    lo, hi = float(window[0]), float(window[1])
    mask = (iters >= lo) & (iters <= hi) & (iters > 0) & (risks > 0)
    if int(mask.sum()) < 5:
        raise ValueError(
            f"need at least 5 positive checkpoints in [{lo:g}, {hi:g}], found {int(mask.sum())}"
        )
    x = np.log10(iters[mask])
    y = np.log10(risks[mask])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res < 1e-20 else 0.0)
    return RateFit(
        slope=float(slope),
        intercept=float(intercept),
        r2=r2,
        window=(lo, hi),
        n_points=int(mask.sum()),
    )


@dataclass
class ComparisonReport:
    """Pointwise z-scores of a Monte Carlo mean curve against exact values."""

    iters: np.ndarray
    mc_mean: np.ndarray
    exact: np.ndarray
    stderr: np.ndarray
    z: np.ndarray
    max_abs_z: float
    frac_above_2: float
    ok: bool


def compare_mc_to_oracle(summary: CellSummary, analytic: AnalyticResult) -> ComparisonReport:
    """Check a replication mean against the exact risk curve.

    z at each common checkpoint is (mc - exact) / stderr.  Points with zero
    standard error must match to relative 1e-9 (they get z = 0 or inf).
    The report is flagged not-ok when any |z| exceeds 4.  frac_above_2 is
    informational only: adjacent checkpoints share their noise history, so
    one 2-sigma excursion colors a long stretch of the curve and the
    fraction is not a calibrated test statistic.
    """
    common, idx_mc, idx_ex = np.intersect1d(
        summary.iters, analytic.iters, return_indices=True
    )
    if common.size == 0:
        raise ValueError("no common checkpoints between summary and analytic result")
    mc = summary.mean_risk[idx_mc]
    se = summary.stderr[idx_mc]
    exact = analytic.risks[idx_ex]
    z = np.zeros(common.size)
    for i in range(common.size):
        se_floor = 1e-12 * max(1.0, abs(exact[i]))
        if se[i] > se_floor:
            z[i] = (mc[i] - exact[i]) / se[i]
        else:
            # essentially deterministic checkpoint: compare values directly
            tol = 1e-9 * max(1.0, abs(exact[i]))
            z[i] = 0.0 if abs(mc[i] - exact[i]) <= tol else math.inf
    max_abs_z = float(np.max(np.abs(z)))
    frac_above_2 = float(np.mean(np.abs(z) > 2.0))
    return ComparisonReport(
        iters=common,
        mc_mean=mc,
        exact=exact,
        stderr=se,
        z=z,
        max_abs_z=max_abs_z,
        frac_above_2=frac_above_2,
        ok=max_abs_z <= 4.0,
    )


def analytic_to_record(result: AnalyticResult, problem: SpectralProblem, cfg: SolverConfig) -> RunRecord:
    """Wrap an exact risk curve in the run-record shape for CSV export.

    The curve describes the uniformly averaged iterate, so it fills the
    risk_avg column; the last-iterate and weighted columns stay blank and
    the seed is -1 since nothing was sampled.
    """
    rows = [(int(n), None, float(risk), None) for n, risk, *_ in result.rows]
    return RunRecord(
        run_id=f"analytic-{problem.problem_id}"[:12],
        algorithm=f"analytic:{result.variant}",
        oracle=OracleKind.ADDITIVE_GAUSSIAN.value,
        problem_id=problem.problem_id,
        d=problem.d,
        horizon=cfg.horizon,
        gamma=cfg.gamma,
        lam=cfg.lam,
        delta=cfg.delta,
        momentum_schedule=cfg.momentum_schedule,
        seed=-1,
        cell_id=-1,
        rep=0,
        rows=rows,
    )


# ---------------------------------------------------------------------------
# The two canned studies.


@dataclass
class Fig1Result:
    kind: str
    n: int
    reps: int
    problem: SpectralProblem
    summaries: dict  # label -> CellSummary
    fits: dict  # label -> RateFit
    window: tuple


def _fig1_starts(problem: SpectralProblem, reps: int, base_seed: int) -> np.ndarray:
    """Per-replication starting points theta* + (unit displacement)."""
    starts = np.empty((reps, problem.d))
    for rep in range(reps):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=base_seed, spawn_key=(7, rep)))
        v = rng.standard_normal(problem.d)
        starts[rep] = problem.theta_star + v / np.linalg.norm(v)
    return starts


def fig1_experiment(
    kind: str,
    d: int = 25,
    n: int | None = None,
    reps: int = 10,
    base_seed: int = 0,
    workers: int = 1,
) -> Fig1Result:
    """Decay study on the 1/i^3 spectrum, bias panel or variance panel.

    bias: noiseless runs from unit random displacements, risk driven purely
    by how fast each recursion forgets theta0.  variance: runs started at
    theta* with additive Gaussian gradient noise, risk driven purely by
    noise accumulation.  Three recursions share gamma = 1/trace(Sigma):
    the uniformly averaged first-order one, the decaying-momentum
    accelerated one, and the averaged constant-momentum accelerated one.
    """
    if kind not in ("bias", "variance"):
        raise ValueError(f"kind must be bias or variance, got {kind!r}")
    if n is None:
        n = 10_000 if kind == "bias" else 200_000
    base = make_fig1_problem(d, seed=base_seed)
    if kind == "bias":
        problem = replace(base, sigma2=0.0, tau2=0.0)
        starts = _fig1_starts(problem, reps, base_seed)
        window = (n / 100.0, float(n))
    else:
        problem = replace(base, sigma2=0.0, tau2=1.0)
        starts = np.tile(base.theta_star, (reps, 1))
        window = (n / 10.0, float(n))
    gamma = 1.0 / float(problem.spectrum.sum())
    cps = checkpoint_grid(n)

    cells = [
        ExperimentCell(
            cell_id=0,
            problem=problem,
            oracle="additive_gaussian",
            config=SolverConfig("AvGD", gamma=gamma, horizon=n, checkpoints=cps),
            reps=reps,
            theta0=starts,
            label="AvGD",
        ),
        ExperimentCell(
            cell_id=1,
            problem=problem,
            oracle="additive_gaussian",
            config=SolverConfig(
                "AccGD", gamma=gamma, horizon=n, checkpoints=cps, momentum_schedule="nesterov"
            ),
            reps=reps,
            theta0=starts,
            label="AccGD",
        ),
        ExperimentCell(
            cell_id=2,
            problem=problem,
            oracle="additive_gaussian",
            config=SolverConfig("AvAccGD", gamma=gamma, delta=1.0, horizon=n, checkpoints=cps),
            reps=reps,
            theta0=starts,
            label="AvAccGD",
        ),
    ]
    spec = ExperimentSpec(name=f"fig1-{kind}", cells=cells, base_seed=base_seed, workers=workers)
    result = run_experiment(spec)
    summaries = {s.label: s for s in result.summaries}
    fits = {
        label: fit_rate(s.iters, s.mean_risk, window) for label, s in summaries.items()
    }
    return Fig1Result(
        kind=kind, n=n, reps=reps, problem=problem, summaries=summaries, fits=fits, window=window
    )


@dataclass
class RateMapRow:
    r: float
    b: float
    algorithm: str
    regime: str
    d_used: int
    fitted: RateFit
    predicted: float
    valid: bool


def _accel_rate_curve(b: float, r: float, d: int, horizons, base_seed: int) -> np.ndarray:
    problem, _ = make_source_problem(d, b, r, seed=base_seed)
    risks = np.empty(len(horizons))
    for i, n in enumerate(horizons):
        cfg = default_params(problem, "AvAccGD", n, "th6", r=r, b=b)
        cfg = replace(cfg, checkpoints=(n,))
        risks[i] = exact_acc_risk_moment(problem, cfg).risks[-1]
    return risks


def _avg_rate_curve(b: float, r: float, d: int, horizons, base_seed: int, reps: int, workers: int) -> np.ndarray:
    problem, _ = make_source_problem(d, b, r, seed=base_seed)

    def _one(item):
        idx, n = item
        cfg = default_params(problem, "AvGD", n, "th5", r=r, b=b)
        cfg = replace(cfg, checkpoints=(n,))
        recs = run_batch(problem, "multiplicative", cfg, base_seed=base_seed, reps=reps, cell_id=idx)
        return float(np.mean([rec.rows[-1][2] for rec in recs]))

    items = list(enumerate(horizons))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            vals = list(pool.map(_one, items))
    else:
        vals = [_one(it) for it in items]
    return np.asarray(vals)


def rate_map(
    b: float,
    r_list,
    d: int = 4096,
    horizons=None,
    base_seed: int = 0,
    reps: int = 12,
    workers: int = 1,
    adapt: bool = False,
    d_cap: int = 16384,
) -> list:
    """Fitted versus predicted risk exponents across source regularities.

    For each r, two rows: the accelerated-averaged run at its horizon-tuned
    prescription (risk from the exact oracle, one evaluation per horizon)
    and the averaged run at its own prescription (risk from single-sample
    Monte Carlo, `reps` replications per horizon).  With adapt=True the
    dimension doubles until the fitted slope moves by less than 0.02,
    since too small a d turns the spectral tail into an effective gap and
    flattens true rates.
    """
    if horizons is None:
        horizons = tuple(2**k for k in range(7, 14))
    horizons = tuple(int(h) for h in horizons)
    window = (float(horizons[0]), float(horizons[-1]))
    rows = []
    for r in r_list:
        for algorithm, regime, rate_fn, curve_fn in (
            ("AvAccGD", "th6", rate_th6, _accel_rate_curve),
            ("AvGD", "th5", rate_th5, _avg_rate_curve),
        ):
            if curve_fn is _avg_rate_curve:
                kwargs = {"reps": reps, "workers": workers}
            else:
                kwargs = {}
            d_used = d
            fit = fit_rate(horizons, curve_fn(b, r, d_used, horizons, base_seed, **kwargs), window)
            if adapt:
                while 2 * d_used <= d_cap:
                    nxt = fit_rate(
                        horizons, curve_fn(b, r, 2 * d_used, horizons, base_seed, **kwargs), window
                    )
                    moved = abs(nxt.slope - fit.slope)
                    d_used *= 2
                    fit = nxt
                    if moved < 0.02:
                        break
            pred = rate_fn(r, b)
            rows.append(
                RateMapRow(
                    r=float(r),
                    b=float(b),
                    algorithm=algorithm,
                    regime=regime,
                    d_used=d_used,
                    fitted=fit,
                    predicted=pred["exponent"],
                    valid=pred["valid"],
                )
            )
    return rows
