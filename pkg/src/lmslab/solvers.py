"""Recursion engine for plain, averaged, and accelerated stochastic gradient.

One engine drives all five algorithm tags.  GD and AvGD use the first-order
regularized recursion

    theta_n = theta_{n-1} - gamma * g_n - gamma * lam * (theta_{n-1} - theta_0)

while the accelerated tags use the second-order form with momentum delta,
where the gradient is evaluated at the extrapolated point
``nu = theta_{n-1} + delta * (theta_{n-1} - theta_{n-2})``:

    theta_n = (1 - gamma*lam) * nu - gamma * g_n + gamma * lam * theta_0

Both uniform and late-weighted online averages are tracked for every run;
the algorithm tag decides which column counts as the run's output.  State
can be a single coordinate vector or a (reps, d) matrix, so replications
vectorize for free through numpy broadcasting.
"""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .oracles import OracleKind, replication_rng
from .problems import SpectralProblem, effective_constants

__all__ = [
    "ALGORITHMS",
    "ACCELERATED",
    "REGIMES",
    "ConfigurationError",
    "NumericAbort",
    "SolverConfig",
    "SolverState",
    "RunRecord",
    "checkpoint_grid",
    "momentum_lower_endpoint",
    "validate_config",
    "init_state",
    "effective_delta",
    "extrapolate",
    "sgd_step",
    "acc_step",
    "update_averages",
    "run",
    "run_batch",
    "default_params",
    "primary_risk_column",
    "append_records_csv",
    "CSV_HEADER",
]

ALGORITHMS = ("GD", "AvGD", "AccGD", "AvAccGD", "WAvAccGD")
ACCELERATED = frozenset({"AccGD", "AvAccGD", "WAvAccGD"})
MOMENTUM_SCHEDULES = ("constant", "nesterov")
REGIMES = ("lemma1", "th1", "th2", "cor2", "th5", "th6")

CSV_HEADER = [
    "run_id",
    "algorithm",
    "oracle",
    "d",
    "n",
    "gamma",
    "lambda",
    "delta",
    "seed",
    "iter",
    "risk_last",
    "risk_avg",
    "risk_wavg",
]

_TOL = 1e-12


class ConfigurationError(ValueError):
    """A solver configuration violates an admissibility constraint."""


class NumericAbort(RuntimeError):
    """The recursion produced non-finite values."""

    def __init__(self, iteration: int):
        super().__init__(f"non-finite iterate detected at iteration {iteration}")
        self.iteration = iteration


def checkpoint_grid(n: int, per_decade: int = 25, include_zero: bool = False) -> tuple[int, ...]:
    """Log-spaced integer checkpoints from 1 to n, about per_decade per decade."""
    if n < 1:
        raise ValueError(f"horizon must be >= 1, got {n}")
    count = int(math.log10(n) * per_decade) + 1 if n > 1 else 1
    grid = np.unique(np.round(10 ** np.linspace(0.0, math.log10(n), count)).astype(int))
    grid = grid[(grid >= 1) & (grid <= n)]
    pts = sorted(set(grid.tolist()) | {1, n})
    if include_zero:
        pts = [0] + pts
    return tuple(pts)


def momentum_lower_endpoint(gamma: float, lam: float) -> float:
    """Smallest admissible constant momentum for given step size and ridge."""
    root = math.sqrt(gamma * lam)
    return (1.0 - root) / (1.0 + root)


@dataclass
class SolverConfig:
    """Finite-horizon parameter bundle for one run.

    Args:
        algorithm: one of GD, AvGD, AccGD, AvAccGD, WAvAccGD.
        gamma: step size, > 0.
        lam: ridge regularization toward theta0, >= 0.
        delta: constant momentum coefficient (accelerated tags only).
        horizon: number of iterations n.
        checkpoints: iterations at which risks are recorded; empty means
            the default log grid up to the horizon.
        momentum_schedule: "constant" uses ``delta`` as is; "nesterov" uses
            the decaying schedule 1 - 2/k at step k (exploratory, no bound
            attached, momentum-range validation skipped).
        override: skip admissibility validation (exploratory runs).
    """

    algorithm: str
    gamma: float
    lam: float = 0.0
    delta: float = 0.0
    horizon: int = 1000
    checkpoints: tuple[int, ...] = ()
    momentum_schedule: str = "constant"
    override: bool = False

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigurationError(
                f"unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}"
            )
        if not self.gamma > 0.0:
            raise ConfigurationError(f"step size must be positive, got {self.gamma}")
        if self.lam < 0.0:
            raise ConfigurationError(f"regularization must be >= 0, got {self.lam}")
        if self.horizon < 1:
            raise ConfigurationError(f"horizon must be >= 1, got {self.horizon}")
        if self.momentum_schedule not in MOMENTUM_SCHEDULES:
            raise ConfigurationError(
                f"unknown momentum schedule {self.momentum_schedule!r}"
            )
        if not self.checkpoints:
            self.checkpoints = checkpoint_grid(self.horizon)
        else:
            pts = sorted(set(int(c) for c in self.checkpoints))
            if pts[0] < 0 or pts[-1] > self.horizon:
                raise ConfigurationError(
                    f"checkpoints must lie in [0, horizon], got {pts[0]}..{pts[-1]}"
                )
            self.checkpoints = tuple(pts)


def validate_config(cfg: SolverConfig, problem: SpectralProblem, oracle_kind) -> None:
    """Enforce the admissibility region of the convergence guarantees.

    Additive oracles need the regularized map to be a contraction,
    gamma * (L + lam) <= 1.  The single-sample oracle needs the stronger
    stochastic stability conditions gamma <= 1/(2 R2) and lam <= R2/2.
    Accelerated runs with constant momentum need delta between the
    ridge-determined lower endpoint and 1.  Raises ConfigurationError
    unless cfg.override is set.
    """
    if cfg.override:
        return
    kind = OracleKind.parse(oracle_kind)
    consts = effective_constants(problem, lam=cfg.lam)
    problems_found = []
    if kind is OracleKind.MULTIPLICATIVE:
        gmax = consts["gamma_max_stochastic"]
        if cfg.gamma > gmax * (1.0 + _TOL):
            problems_found.append(
                f"gamma={cfg.gamma:.6g} exceeds the single-sample limit 1/(2 R2)={gmax:.6g}"
            )
        if cfg.lam > consts["R2"] / 2.0 * (1.0 + _TOL):
            problems_found.append(
                f"lam={cfg.lam:.6g} exceeds R2/2={consts['R2'] / 2.0:.6g}"
            )
    else:
        gmax = consts["gamma_max_additive"]
        if cfg.gamma > gmax * (1.0 + _TOL):
            problems_found.append(
                f"gamma={cfg.gamma:.6g} exceeds the stability limit 1/(L+lam)={gmax:.6g}"
            )
    if cfg.algorithm in ACCELERATED and cfg.momentum_schedule == "constant":
        lo = momentum_lower_endpoint(cfg.gamma, cfg.lam)
        if not (lo - _TOL <= cfg.delta <= 1.0 + _TOL):
            problems_found.append(
                f"momentum delta={cfg.delta:.6g} outside the admissible range "
                f"[{lo:.6g}, 1]"
            )
    if problems_found:
        raise ConfigurationError(
            "; ".join(problems_found) + " (set override=True for exploratory runs)"
        )


@dataclass
class SolverState:
    """Mutable iteration state; arrays are (d,) or (reps, d)."""

    current: np.ndarray
    previous: np.ndarray
    avg_uniform: np.ndarray
    avg_weighted: np.ndarray
    anchor: np.ndarray
    iter: int = 0


def init_state(theta0) -> SolverState:
    t0 = np.array(theta0, dtype=float)
    return SolverState(
        current=t0.copy(),
        previous=t0.copy(),
        avg_uniform=t0.copy(),
        avg_weighted=t0.copy(),
        anchor=t0.copy(),
        iter=0,
    )


def effective_delta(cfg: SolverConfig, step_index: int) -> float:
    if cfg.momentum_schedule == "nesterov":
        return 1.0 - 2.0 / step_index
    return cfg.delta


def extrapolate(state: SolverState, cfg: SolverConfig) -> np.ndarray:
    """Momentum extrapolation point for the step producing iterate iter+1."""
    delta = effective_delta(cfg, state.iter + 1)
    return state.current + delta * (state.current - state.previous)


def sgd_step(state: SolverState, grad, cfg: SolverConfig) -> SolverState:
    """One regularized gradient step; grad must be evaluated at state.current."""
    new = (
        state.current
        - cfg.gamma * grad
        - (cfg.gamma * cfg.lam) * (state.current - state.anchor)
    )
    state.previous = state.current
    state.current = new
    state.iter += 1
    return state


def acc_step(state: SolverState, grad_at_extrapolation, cfg: SolverConfig) -> SolverState:
    """One accelerated step; the gradient must be evaluated at extrapolate()."""
    nu = extrapolate(state, cfg)
    new = (
        (1.0 - cfg.gamma * cfg.lam) * nu
        - cfg.gamma * grad_at_extrapolation
        + (cfg.gamma * cfg.lam) * state.anchor
    )
    state.previous = state.current
    state.current = new
    state.iter += 1
    return state


def update_averages(state: SolverState) -> SolverState:
    """Fold the freshly produced iterate into both online averages.

    The uniform average over theta_0..theta_n and the late-weighted average
    (weights proportional to k) both admit exact online recursions.
    """
    n = state.iter
    state.avg_uniform = (n / (n + 1.0)) * state.avg_uniform + state.current / (n + 1.0)
    state.avg_weighted = ((n - 1.0) / (n + 1.0)) * state.avg_weighted + (
        2.0 / (n + 1.0)
    ) * state.current
    return state


@dataclass
class RunRecord:
    """One trajectory: checkpointed risks with config and seed provenance."""

    run_id: str
    algorithm: str
    oracle: str
    problem_id: str
    d: int
    horizon: int
    gamma: float
    lam: float
    delta: float | None
    momentum_schedule: str
    seed: int
    cell_id: int
    rep: int
    rows: list  # (iter, risk_last, risk_avg, risk_wavg)
    aborted: str | None = None


def _run_id(problem_id, cfg, oracle_value, seed, cell_id, rep) -> str:
    blob = (
        f"{problem_id}|{cfg.algorithm}|{oracle_value}|{cfg.gamma!r}|{cfg.lam!r}|"
        f"{cfg.delta!r}|{cfg.momentum_schedule}|{cfg.horizon}|{seed}|{cell_id}|{rep}"
    )
    return hashlib.md5(blob.encode()).hexdigest()[:12]


def run_batch(
    problem: SpectralProblem,
    oracle_kind,
    cfg: SolverConfig,
    base_seed: int,
    reps: int = 1,
    cell_id: int = 0,
    theta0=None,
    block: int = 256,
) -> list[RunRecord]:
    """Run `reps` independent replications of one configuration, vectorized.

    Replication r consumes the stream replication_rng(base_seed, cell_id, r)
    exactly as a standalone run would, so batching never changes the noise a
    replication sees (results agree to rounding error; the vectorized
    arithmetic may differ in the last ulp across batch shapes).
    theta0 may override the problem's starting point, either one vector for
    all replications or a (reps, d) matrix of per-replication starts.

    Returns one RunRecord per replication.
    """
    kind = OracleKind.parse(oracle_kind)
    validate_config(cfg, problem, kind)
    d = problem.d
    s = problem.spectrum
    sqrt_s = np.sqrt(s)
    star = problem.theta_star
    sig = math.sqrt(problem.sigma2)
    tau_scale = np.sqrt(problem.tau2 * s)

    if theta0 is None:
        theta0 = problem.theta0
    theta0 = np.asarray(theta0, dtype=float)
    if theta0.ndim == 1:
        start_matrix = np.tile(theta0, (reps, 1))
    elif theta0.shape == (reps, d):
        start_matrix = theta0.copy()
    else:
        raise ValueError(f"theta0 override has shape {theta0.shape}, expected ({reps}, {d})")

    state = init_state(start_matrix)
    accelerated = cfg.algorithm in ACCELERATED
    obs_based = kind in (OracleKind.ADDITIVE_SAMPLED, OracleKind.MULTIPLICATIVE)
    gaussian_noise = kind is OracleKind.ADDITIVE_GAUSSIAN and problem.tau2 > 0.0
    width = (d + 1) if obs_based else (d if gaussian_noise else 0)
    rngs = [replication_rng(base_seed, cell_id, r) for r in range(reps)]

    checkpoints = cfg.checkpoints
    cp_set = frozenset(checkpoints)
    risks = np.empty((reps, len(checkpoints), 3))
    cursor = 0

    def record(iteration: int):
        nonlocal cursor
        for col, arr in enumerate((state.current, state.avg_uniform, state.avg_weighted)):
            diff = arr - star
            risks[:, cursor, col] = 0.5 * (diff * diff) @ s
        if not np.isfinite(risks[:, cursor, :]).all():
            raise NumericAbort(iteration)
        cursor += 1

    if checkpoints and checkpoints[0] == 0:
        record(0)

    for block_start in range(0, cfg.horizon, block):
        bs = min(block, cfg.horizon - block_start)
        if width:
            noise = np.stack([rng.standard_normal((bs, width)) for rng in rngs])
        for j in range(bs):
            k = block_start + j + 1
            point = extrapolate(state, cfg) if accelerated else state.current
            if obs_based:
                z = noise[:, j, :]
                x = sqrt_s * z[:, :d]
                y = x @ star + sig * z[:, d]
                if kind is OracleKind.MULTIPLICATIVE:
                    grad = (np.einsum("rd,rd->r", x, point) - y)[:, None] * x
                else:
                    grad = s * point - y[:, None] * x
            elif gaussian_noise:
                grad = s * (point - star) - tau_scale * noise[:, j, :]
            else:
                grad = s * (point - star)
            if accelerated:
                acc_step(state, grad, cfg)
            else:
                sgd_step(state, grad, cfg)
            update_averages(state)
            if k in cp_set:
                record(k)

    delta_out = None if cfg.momentum_schedule == "nesterov" else cfg.delta
    records = []
    for r in range(reps):
        rows = [
            (int(cp), float(risks[r, i, 0]), float(risks[r, i, 1]), float(risks[r, i, 2]))
            for i, cp in enumerate(checkpoints)
        ]
        records.append(
            RunRecord(
                run_id=_run_id(problem.problem_id, cfg, kind.value, base_seed, cell_id, r),
                algorithm=cfg.algorithm,
                oracle=kind.value,
                problem_id=problem.problem_id,
                d=d,
                horizon=cfg.horizon,
                gamma=cfg.gamma,
                lam=cfg.lam,
                delta=delta_out,
                momentum_schedule=cfg.momentum_schedule,
                seed=base_seed,
                cell_id=cell_id,
                rep=r,
                rows=rows,
            )
        )
    return records


def run(problem: SpectralProblem, oracle_kind, cfg: SolverConfig, seed: int, cell_id: int = 0) -> RunRecord:
    """Single replication; equals replication 0 of a batch with this seed."""
    return run_batch(problem, oracle_kind, cfg, base_seed=seed, reps=1, cell_id=cell_id)[0]


def primary_risk_column(algorithm: str) -> int:
    """Index into (risk_last, risk_avg, risk_wavg) that the tag reports."""
    if algorithm in ("GD", "AccGD"):
        return 0
    if algorithm in ("AvGD", "AvAccGD"):
        return 1
    if algorithm == "WAvAccGD":
        return 2
    raise ValueError(f"unknown algorithm {algorithm!r}")


def default_params(
    problem: SpectralProblem,
    algorithm: str,
    n: int,
    regime: str,
    r: float | None = None,
    b: float | None = None,
    gamma: float | None = None,
    per_decade: int = 25,
) -> SolverConfig:
    """Parameter prescriptions tied to each guarantee regime.

    lemma1: ridge lam = 1/(gamma n) for the averaged additive recursion.
    th1:    single-sample analogue, gamma = 1/(2 R2), lam = 1/(gamma n).
    th2:    accelerated averaged, lam = 0, delta = 1, gamma = 1/trace.
    cor2:   accelerated averaged with lam = 1/(gamma (n+1)^2) and the
            matching lower-endpoint momentum delta = 1 - 2/(n+2).
    th5:    source-adapted averaged run, gamma ~ n^{(r-b)/(b+1-r)} clipped
            at 1/(2 R2), lam = 1/(gamma n).
    th6:    source-adapted accelerated run, gamma ~ n^{(2r-2b-1)/(b+1-r)}
            capped by stability, lam = 1/(gamma n^2), ridge-matched delta.

    Infeasible prescriptions (constraints unsatisfiable at this n) raise
    ConfigurationError rather than being silently adjusted.
    """
    if regime not in REGIMES:
        raise ConfigurationError(f"unknown regime {regime!r}; expected one of {REGIMES}")
    if n < 1:
        raise ConfigurationError(f"horizon must be >= 1, got {n}")
    consts = effective_constants(problem)
    top = consts["L"]
    r2 = consts["R2"]
    checkpoints = checkpoint_grid(n, per_decade=per_decade)

    if regime in ("th5", "th6") and (r is None or b is None):
        raise ConfigurationError(f"regime {regime} needs the source exponents r and b")

    if regime == "lemma1":
        g = gamma if gamma is not None else 0.5 / top
        lam = 1.0 / (g * n)
        delta = 0.0
        if g * (top + lam) > 1.0 + _TOL:
            raise ConfigurationError(
                f"lemma1 prescription infeasible: gamma*(L+lam)={g * (top + lam):.6g} > 1 at n={n}"
            )
    elif regime == "th1":
        g = gamma if gamma is not None else 1.0 / (2.0 * r2)
        if g > 1.0 / (2.0 * r2) * (1.0 + _TOL):
            raise ConfigurationError(f"th1 needs gamma <= 1/(2 R2) = {1.0 / (2.0 * r2):.6g}")
        lam = 1.0 / (g * n)
        delta = 0.0
        if lam > r2 / 2.0 * (1.0 + _TOL):
            raise ConfigurationError(
                f"th1 prescription infeasible: lam=1/(gamma n)={lam:.6g} > R2/2 at n={n}"
            )
    elif regime == "th2":
        g = gamma if gamma is not None else 1.0 / consts["trace"]
        lam = 0.0
        delta = 1.0
        if g * top > 1.0 + _TOL:
            raise ConfigurationError(f"th2 needs gamma <= 1/L = {1.0 / top:.6g}")
    elif regime == "cor2":
        g = gamma if gamma is not None else 0.5 / top
        lam = 1.0 / (g * (n + 1.0) ** 2)
        delta = 1.0 - 2.0 / (n + 2.0)
        if g * (top + lam) > 1.0 + _TOL:
            raise ConfigurationError(
                f"cor2 prescription infeasible: gamma*(L+lam)={g * (top + lam):.6g} > 1 at n={n}"
            )
    elif regime == "th5":
        g0 = gamma if gamma is not None else 1.0 / (2.0 * r2)
        exponent = (r - b) / (b + 1.0 - r)
        g = min(g0 * float(n) ** exponent, 1.0 / (2.0 * r2))
        lam = 1.0 / (g * n)
        delta = 0.0
        if lam > r2 / 2.0 * (1.0 + _TOL):
            raise ConfigurationError(
                f"th5 prescription infeasible: lam={lam:.6g} > R2/2 at n={n}"
            )
    else:  # th6
        g0 = gamma if gamma is not None else 0.5 / top
        if n < 2:
            raise ConfigurationError("th6 prescription needs n >= 2")
        exponent = (2.0 * r - 2.0 * b - 1.0) / (b + 1.0 - r)
        cap = (1.0 - 1.0 / n**2) / top
        g = min(g0 * float(n) ** exponent, cap)
        lam = 1.0 / (g * n**2)
        delta = momentum_lower_endpoint(g, lam)

    return SolverConfig(
        algorithm=algorithm,
        gamma=g,
        lam=lam,
        delta=delta,
        horizon=n,
        checkpoints=checkpoints,
    )


def append_records_csv(records, path) -> None:
    """Append run records to a CSV file, writing the header if new."""
    path = Path(path)
    fresh = not path.exists() or path.stat().st_size == 0
    with path.open("a", newline="") as fh:
        writer = csv.writer(fh)
        if fresh:
            writer.writerow(CSV_HEADER)
        for rec in records:
            delta_cell = "" if rec.delta is None else repr(rec.delta)
            for it, last, avg, wavg in rec.rows:
                writer.writerow(
                    [
                        rec.run_id,
                        rec.algorithm,
                        rec.oracle,
                        rec.d,
                        rec.horizon,
                        repr(rec.gamma),
                        repr(rec.lam),
                        delta_cell,
                        rec.seed,
                        it,
                        "" if last is None else repr(last),
                        "" if avg is None else repr(avg),
                        "" if wavg is None else repr(wavg),
                    ]
                )
