"""Recursion engine checks: averaging identities, admissibility, batching."""

import csv

import numpy as np
import pytest
from numpy.testing import assert_allclose

from lmslab import (
    CSV_HEADER,
    ConfigurationError,
    NumericAbort,
    RunRecord,
    SolverConfig,
    SpectralProblem,
    append_records_csv,
    checkpoint_grid,
    default_params,
    effective_constants,
    init_state,
    momentum_lower_endpoint,
    primary_risk_column,
    run,
    run_batch,
    update_averages,
    validate_config,
)


def _problem(d=3, sigma2=1.0, tau2=1.0, seed=0):
    rng = np.random.default_rng(seed)
    spectrum = np.sort(rng.uniform(0.3, 1.5, d))[::-1].copy()
    return SpectralProblem(
        spectrum=spectrum,
        theta_star=rng.standard_normal(d),
        theta0=rng.standard_normal(d),
        sigma2=sigma2,
        tau2=tau2,
    )


class TestAveragingRecursions:
    """Online averages checked against closed forms for theta_k = k.

    The running mean of 0, 1, ..., n is n/2 and the late-weighted mean
    (weight k on iterate k) is (2n+1)/3.  Both are exact identities, so
    the online recursions must reproduce them to rounding error.
    """

    def _drive(self, n):
        state = init_state(np.array([0.0]))
        for k in range(1, n + 1):
            state.previous = state.current
            state.current = np.array([float(k)])
            state.iter = k
            update_averages(state)
        return state

    @pytest.mark.parametrize("n", [1, 2, 7, 100, 1234])
    def test_uniform_average_closed_form(self, n):
        state = self._drive(n)
        assert_allclose(state.avg_uniform[0], n / 2.0, rtol=1e-13)

    @pytest.mark.parametrize("n", [1, 2, 7, 100, 1234])
    def test_weighted_average_closed_form(self, n):
        state = self._drive(n)
        assert_allclose(state.avg_weighted[0], (2.0 * n + 1.0) / 3.0, rtol=1e-13)

    def test_init_state_starts_all_slots_at_theta0(self):
        t0 = np.array([2.0, -1.0])
        state = init_state(t0)
        for arr in (state.current, state.previous, state.avg_uniform,
                    state.avg_weighted, state.anchor):
            assert np.array_equal(arr, t0)
        assert state.iter == 0


class TestCheckpointGrid:
    @pytest.mark.parametrize("n", [1, 2, 10, 999, 10_000])
    def test_endpoints_always_present(self, n):
        grid = checkpoint_grid(n)
        assert grid[0] == 1
        assert grid[-1] == n
        assert list(grid) == sorted(set(grid))

    def test_include_zero_prepends(self):
        assert checkpoint_grid(100, include_zero=True)[0] == 0

    def test_density_tracks_per_decade(self):
        sparse = checkpoint_grid(10_000, per_decade=5)
        dense = checkpoint_grid(10_000, per_decade=40)
        assert len(dense) > 2 * len(sparse)

    def test_rejects_empty_horizon(self):
        with pytest.raises(ValueError):
            checkpoint_grid(0)


class TestConfigValidation:
    def test_momentum_endpoint_values(self):
        assert momentum_lower_endpoint(1.0, 0.0) == 1.0
        assert_allclose(momentum_lower_endpoint(0.5, 0.5), 1.0 / 3.0, rtol=1e-15)

    def test_constructor_rejections(self):
        with pytest.raises(ConfigurationError):
            SolverConfig(algorithm="Newton", gamma=0.1)
        with pytest.raises(ConfigurationError):
            SolverConfig(algorithm="GD", gamma=0.0)
        with pytest.raises(ConfigurationError):
            SolverConfig(algorithm="GD", gamma=0.1, lam=-1e-3)
        with pytest.raises(ConfigurationError):
            SolverConfig(algorithm="GD", gamma=0.1, horizon=0)
        with pytest.raises(ConfigurationError):
            SolverConfig(algorithm="GD", gamma=0.1, momentum_schedule="cyclic")
        with pytest.raises(ConfigurationError):
            SolverConfig(algorithm="GD", gamma=0.1, horizon=10, checkpoints=(5, 11))

    def test_checkpoints_are_sorted_and_deduplicated(self):
        cfg = SolverConfig(algorithm="GD", gamma=0.1, horizon=10, checkpoints=(7, 3, 7, 1))
        assert cfg.checkpoints == (1, 3, 7)

    def test_default_checkpoints_cover_horizon(self):
        cfg = SolverConfig(algorithm="GD", gamma=0.1, horizon=500)
        assert cfg.checkpoints[0] == 1 and cfg.checkpoints[-1] == 500

    def test_multiplicative_step_size_limit(self):
        p = _problem()
        gmax = effective_constants(p)["gamma_max_stochastic"]
        cfg = SolverConfig(algorithm="AvGD", gamma=1.5 * gmax, horizon=10)
        with pytest.raises(ConfigurationError, match="single-sample"):
            validate_config(cfg, p, "multiplicative")
        validate_config(cfg, p, "additive_gaussian")  # looser additive limit

    def test_multiplicative_ridge_limit(self):
        p = _problem()
        consts = effective_constants(p)
        cfg = SolverConfig(
            algorithm="AvGD",
            gamma=0.5 * consts["gamma_max_stochastic"],
            lam=consts["R2"],
            horizon=10,
        )
        with pytest.raises(ConfigurationError, match="R2/2"):
            validate_config(cfg, p, "multiplicative")

    def test_additive_contraction_limit(self):
        p = _problem()
        lam = 0.25
        gmax = 1.0 / (effective_constants(p)["L"] + lam)
        cfg = SolverConfig(algorithm="GD", gamma=1.01 * gmax, lam=lam, horizon=10)
        with pytest.raises(ConfigurationError, match="stability limit"):
            validate_config(cfg, p, "additive_sampled")

    def test_momentum_range_enforced_for_constant_schedule(self):
        p = _problem()
        cfg = SolverConfig(algorithm="AccGD", gamma=0.1, lam=0.1, delta=0.0, horizon=10)
        with pytest.raises(ConfigurationError, match="momentum"):
            validate_config(cfg, p, "additive_gaussian")

    def test_nesterov_schedule_skips_momentum_range(self):
        p = _problem()
        cfg = SolverConfig(
            algorithm="AccGD", gamma=0.1, lam=0.1, delta=0.0,
            horizon=10, momentum_schedule="nesterov",
        )
        validate_config(cfg, p, "additive_gaussian")

    def test_override_skips_everything(self):
        p = _problem()
        cfg = SolverConfig(algorithm="AccGD", gamma=50.0, delta=-3.0, horizon=10, override=True)
        validate_config(cfg, p, "multiplicative")


class TestRunBatch:
    def test_zero_momentum_accelerated_equals_plain(self):
        """With delta = 0 the two-term recursion collapses to the one-term one."""
        p = _problem(tau2=1.0)
        kw = dict(gamma=0.2, lam=0.05, horizon=60, checkpoints=(1, 10, 60), override=True)
        plain = run(p, "additive_gaussian", SolverConfig(algorithm="AvGD", **kw), seed=5)
        acc = run(
            p, "additive_gaussian",
            SolverConfig(algorithm="AvAccGD", delta=0.0, **kw), seed=5,
        )
        # the two step formulas are algebraically equal but round differently
        assert_allclose(np.array(acc.rows), np.array(plain.rows), rtol=1e-12)

    def test_block_size_does_not_change_results(self):
        p = _problem()
        cfg = SolverConfig(algorithm="AvGD", gamma=0.05, horizon=37, checkpoints=(1, 17, 37))
        rows = [
            run_batch(p, "multiplicative", cfg, base_seed=3, reps=2, block=blk)[1].rows
            for blk in (1, 7, 256)
        ]
        assert rows[0] == rows[1] == rows[2]

    def test_batch_rep_zero_matches_single_run(self):
        p = _problem()
        cfg = SolverConfig(algorithm="AvAccGD", gamma=0.2, delta=1.0, horizon=40,
                           checkpoints=(0, 1, 40))
        batch = run_batch(p, "additive_gaussian", cfg, base_seed=11, reps=3)
        single = run(p, "additive_gaussian", cfg, seed=11)
        # identical noise; row-count-dependent SIMD paths may round the last ulp
        assert_allclose(np.array(batch[0].rows), np.array(single.rows), rtol=1e-13)
        assert batch[0].run_id == single.run_id
        # replications differ from each other
        assert batch[1].rows[-1] != batch[0].rows[-1]

    def test_same_seed_reproduces_bitwise(self):
        p = _problem()
        cfg = SolverConfig(algorithm="GD", gamma=0.1, horizon=25)
        a = run(p, "additive_sampled", cfg, seed=7)
        b = run(p, "additive_sampled", cfg, seed=7)
        assert a.rows == b.rows

    def test_start_override_shapes(self):
        p = _problem(d=3)
        cfg = SolverConfig(algorithm="GD", gamma=0.1, horizon=5, checkpoints=(5,))
        starts = np.tile(p.theta_star, (2, 1))
        recs = run_batch(p, "additive_gaussian", cfg, base_seed=0, reps=2, theta0=starts)
        assert len(recs) == 2
        with pytest.raises(ValueError, match="shape"):
            run_batch(p, "additive_gaussian", cfg, base_seed=0, reps=2,
                      theta0=np.zeros((3, 3)))

    def test_checkpoint_zero_records_starting_risk(self):
        p = _problem()
        cfg = SolverConfig(algorithm="GD", gamma=0.1, horizon=5, checkpoints=(0, 5))
        rec = run(p, "additive_gaussian", cfg, seed=1)
        from lmslab import excess_risk

        assert rec.rows[0][0] == 0
        assert_allclose(rec.rows[0][1], excess_risk(p.theta0, p), rtol=1e-12)

    def test_zero_noise_run_is_deterministic_contraction(self):
        p = _problem(sigma2=0.0, tau2=0.0)
        cfg = SolverConfig(algorithm="GD", gamma=0.3, horizon=200, checkpoints=(1, 200))
        rec = run(p, "additive_gaussian", cfg, seed=0)
        assert rec.rows[-1][1] < 1e-6 * rec.rows[0][1]

    def test_divergent_config_aborts_with_iteration(self):
        p = _problem(tau2=0.0)
        cfg = SolverConfig(algorithm="GD", gamma=1e6, horizon=60,
                           checkpoints=(60,), override=True)
        with np.errstate(over="ignore", invalid="ignore"):
            with pytest.raises(NumericAbort) as exc:
                run(p, "additive_gaussian", cfg, seed=0)
        assert exc.value.iteration == 60

    def test_nesterov_delta_is_left_blank(self):
        p = _problem()
        cfg = SolverConfig(algorithm="AccGD", gamma=0.1, horizon=10,
                           momentum_schedule="nesterov")
        rec = run(p, "additive_gaussian", cfg, seed=0)
        assert rec.delta is None
        assert rec.momentum_schedule == "nesterov"


class TestDefaultParams:
    def test_averaged_additive_prescription(self):
        p = _problem()
        top = effective_constants(p)["L"]
        cfg = default_params(p, "AvGD", n=100, regime="lemma1")
        assert_allclose(cfg.gamma, 0.5 / top, rtol=1e-15)
        assert_allclose(cfg.lam, 1.0 / (cfg.gamma * 100), rtol=1e-15)
        assert cfg.delta == 0.0

    def test_single_sample_prescription(self):
        p = _problem()
        r2 = effective_constants(p)["R2"]
        cfg = default_params(p, "AvGD", n=50, regime="th1")
        assert_allclose(cfg.gamma, 1.0 / (2.0 * r2), rtol=1e-15)
        assert_allclose(cfg.lam, 1.0 / (cfg.gamma * 50), rtol=1e-15)

    def test_single_sample_rejects_large_gamma(self):
        p = _problem()
        with pytest.raises(ConfigurationError):
            default_params(p, "AvGD", n=50, regime="th1", gamma=10.0)

    def test_accelerated_unregularized_prescription(self):
        p = _problem()
        cfg = default_params(p, "AvAccGD", n=80, regime="th2")
        assert_allclose(cfg.gamma, 1.0 / effective_constants(p)["trace"], rtol=1e-15)
        assert cfg.lam == 0.0 and cfg.delta == 1.0

    def test_accelerated_ridge_prescription(self):
        p = _problem()
        n = 80
        cfg = default_params(p, "AvAccGD", n=n, regime="cor2")
        assert_allclose(cfg.lam, 1.0 / (cfg.gamma * (n + 1.0) ** 2), rtol=1e-15)
        assert_allclose(cfg.delta, 1.0 - 2.0 / (n + 2.0), rtol=1e-15)

    def test_source_adapted_prescriptions(self):
        p = _problem()
        consts = effective_constants(p)
        n, r, b = 400, 0.25, 0.5
        cfg5 = default_params(p, "AvGD", n=n, regime="th5", r=r, b=b)
        want = min(
            (1.0 / (2.0 * consts["R2"])) * n ** ((r - b) / (b + 1.0 - r)),
            1.0 / (2.0 * consts["R2"]),
        )
        assert_allclose(cfg5.gamma, want, rtol=1e-15)
        assert_allclose(cfg5.lam, 1.0 / (cfg5.gamma * n), rtol=1e-15)

        cfg6 = default_params(p, "AvAccGD", n=n, regime="th6", r=r, b=b)
        assert_allclose(cfg6.lam, 1.0 / (cfg6.gamma * n**2), rtol=1e-15)
        assert_allclose(
            cfg6.delta, momentum_lower_endpoint(cfg6.gamma, cfg6.lam), rtol=1e-15
        )
        assert cfg6.gamma <= (1.0 - 1.0 / n**2) / consts["L"] * (1 + 1e-12)

    def test_source_regimes_need_exponents(self):
        p = _problem()
        with pytest.raises(ConfigurationError, match="exponents"):
            default_params(p, "AvGD", n=10, regime="th5")
        with pytest.raises(ConfigurationError, match="exponents"):
            default_params(p, "AvAccGD", n=10, regime="th6", r=0.5)

    def test_accelerated_source_regime_needs_two_steps(self):
        p = _problem()
        with pytest.raises(ConfigurationError, match="n >= 2"):
            default_params(p, "AvAccGD", n=1, regime="th6", r=0.0, b=0.5)

    def test_unknown_regime_rejected(self):
        with pytest.raises(ConfigurationError, match="regime"):
            default_params(_problem(), "AvGD", n=10, regime="th9")

    def test_prescribed_configs_pass_validation(self):
        p = _problem()
        oracle_for = {
            "lemma1": "additive_gaussian",
            "th1": "multiplicative",
            "th2": "additive_gaussian",
            "cor2": "additive_gaussian",
            "th5": "multiplicative",
            "th6": "additive_gaussian",
        }
        algo_for = {"lemma1": "AvGD", "th1": "AvGD", "th2": "AvAccGD",
                    "cor2": "AvAccGD", "th5": "AvGD", "th6": "AvAccGD"}
        for regime, oracle in oracle_for.items():
            cfg = default_params(
                p, algo_for[regime], n=64, regime=regime, r=0.25, b=0.5
            )
            validate_config(cfg, p, oracle)


class TestRecordPlumbing:
    def test_primary_risk_column_mapping(self):
        assert [primary_risk_column(a) for a in
                ("GD", "AccGD", "AvGD", "AvAccGD", "WAvAccGD")] == [0, 0, 1, 1, 2]
        with pytest.raises(ValueError):
            primary_risk_column("SVRG")

    def test_csv_schema_and_blank_cells(self, tmp_path):
        rec = RunRecord(
            run_id="abc123", algorithm="AvGD", oracle="additive_gaussian",
            problem_id="p0", d=2, horizon=10, gamma=0.1, lam=0.0, delta=None,
            momentum_schedule="nesterov", seed=0, cell_id=0, rep=0,
            rows=[(1, 0.5, None, None), (10, 0.25, 0.3, None)],
        )
        path = tmp_path / "runs.csv"
        append_records_csv([rec], path)
        append_records_csv([rec], path)  # append mode: no second header
        with path.open() as fh:
            lines = list(csv.reader(fh))
        assert lines[0] == CSV_HEADER
        assert len(lines) == 1 + 4
        assert lines[1][7] == ""  # nesterov: no constant momentum to report
        assert lines[1][11] == "" and lines[1][12] == ""
        assert float(lines[2][11]) == 0.3

    def test_csv_roundtrip_preserves_float_digits(self, tmp_path):
        p = _problem()
        cfg = SolverConfig(algorithm="AvGD", gamma=0.05, horizon=20, checkpoints=(20,))
        rec = run(p, "multiplicative", cfg, seed=3)
        path = tmp_path / "runs.csv"
        append_records_csv([rec], path)
        with path.open() as fh:
            row = list(csv.reader(fh))[1]
        assert float(row[10]) == rec.rows[0][1]
        assert float(row[11]) == rec.rows[0][2]
