"""Fast-slow averaging layer: the symmetric matrix square root, stationary
coefficient averaging (with the deliberately wrong sigma-averaged control),
the time-integrated generator difference, and the comparison experiment."""

import dataclasses
import math

import numpy as np
import pytest

from mfswitch.chain import (
    PathMismatch,
    TwoScaleSpec,
    aggregate,
    build_fast_generator,
    project_path,
    validate_generator,
)
from mfswitch.dynamics import (
    InitialCondition,
    SimConfig,
    mean_reverting_switch,
    simulate_with_chain,
)
from mfswitch.measure import EmpiricalMeasure, squared_norm
from mfswitch.twoscale import (
    DimensionMismatch,
    IndefiniteBeyondTolerance,
    NotSymmetric,
    average_coefficients,
    matrix_sqrt_spd,
    operator_residual,
    sigma_averaged_control,
    two_scale_experiment,
    two_scale_replica,
)


def worked_spec(epsilon=0.1):
    blocks = (
        validate_generator([[-1.0, 1.0], [1.0, -1.0]]),
        validate_generator([[-2.0, 2.0], [2.0, -2.0]]),
    )
    slow = np.array(
        [
            [-1.0, 0.0, 1.0, 0.0],
            [0.0, -1.0, 0.0, 1.0],
            [1.0, 0.0, -1.0, 0.0],
            [0.0, 1.0, 0.0, -1.0],
        ]
    )
    return TwoScaleSpec(blocks, slow, epsilon)


MODEL4 = mean_reverting_switch(
    pull=(1.0, 1.0, 1.0, 1.0),
    push=(0.5, -0.5, 0.0, 0.0),
    vol=(1.0, 2.0, 0.8, 0.8),
)


# ---------------------------------------------------------------------------
# matrix square root
# ---------------------------------------------------------------------------


class TestMatrixSqrt:
    def test_identity(self):
        assert np.array_equal(matrix_sqrt_spd(np.eye(3)), np.eye(3))

    def test_positive_definite_round_trip(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            m = rng.normal(size=(3, 3))
            a = m @ m.T + 0.1 * np.eye(3)
            s = matrix_sqrt_spd(a)
            assert np.abs(s @ s.T - a).max() <= 1e-10

    def test_rank_deficient_round_trip(self):
        v = np.array([[1.0], [2.0]])
        a = v @ v.T  # rank one, positive semidefinite
        s = matrix_sqrt_spd(a)
        assert np.abs(s @ s.T - a).max() <= 1e-10

    def test_zero_matrix(self):
        s = matrix_sqrt_spd(np.zeros((2, 2)))
        assert np.array_equal(s, np.zeros((2, 2)))

    def test_asymmetric_rejected(self):
        with pytest.raises(NotSymmetric):
            matrix_sqrt_spd(np.array([[1.0, 1.0], [0.0, 1.0]]))
        with pytest.raises(NotSymmetric):
            matrix_sqrt_spd(np.zeros((2, 3)))

    def test_indefinite_rejected(self):
        with pytest.raises(IndefiniteBeyondTolerance):
            matrix_sqrt_spd(np.array([[1.0, 0.0], [0.0, -0.5]]))

    def test_tiny_negative_eigenvalue_clipped(self):
        a = np.diag([1.0, -1e-14])
        s = matrix_sqrt_spd(a)
        assert np.abs(s @ s.T - np.diag([1.0, 0.0])).max() <= 1e-10


# ---------------------------------------------------------------------------
# coefficient averaging
# ---------------------------------------------------------------------------


class TestAverageCoefficients:
    def test_regime_count_matches_blocks(self):
        averaged = average_coefficients(MODEL4, aggregate(worked_spec()))
        assert averaged.regime_count == 2
        assert averaged.dim == 1
        assert averaged.base is MODEL4

    def test_drift_is_stationary_average(self):
        averaged = average_coefficients(MODEL4, aggregate(worked_spec()))
        x = np.array([[0.4], [-1.0]])
        mu = EmpiricalMeasure.uniform(x)
        got = averaged.drift(x, mu, 0)
        want = 0.5 * MODEL4.drift(x, mu, 0) + 0.5 * MODEL4.drift(x, mu, 1)
        assert np.allclose(got, want, atol=1e-14)

    def test_diffusion_squares_to_averaged_a(self):
        averaged = average_coefficients(MODEL4, aggregate(worked_spec()))
        x = np.zeros((2, 1))
        mu = EmpiricalMeasure.uniform(x)
        sig = averaged.diffusion(x, mu, 0)
        # block 0 mixes vol 1 and vol 2 equally: a_bar = (1 + 4)/2
        assert sig @ sig.T == pytest.approx(np.array([[2.5]]), abs=1e-10)
        a_direct = averaged.a_bar(x, mu, 0)
        assert np.allclose(sig @ sig.T, a_direct, atol=1e-10)

    def test_regime_count_mismatch_rejected(self):
        model2 = mean_reverting_switch(pull=(1.0, 1.0), push=(0.0, 0.0), vol=(1.0, 1.0))
        with pytest.raises(DimensionMismatch):
            average_coefficients(model2, aggregate(worked_spec()))
        with pytest.raises(DimensionMismatch):
            sigma_averaged_control(model2, aggregate(worked_spec()))

    def test_sigma_control_differs_when_volatility_varies_in_block(self):
        agg = aggregate(worked_spec())
        averaged = average_coefficients(MODEL4, agg)
        control = sigma_averaged_control(MODEL4, agg)
        x = np.zeros((1, 1))
        mu = EmpiricalMeasure.uniform(x)
        # block 0: correct sqrt((1+4)/2) = 1.5811..., control (1+2)/2 = 1.5
        good = float(averaged.diffusion(x, mu, 0)[0, 0])
        naive = float(control.diffusion(x, mu, 0)[0, 0])
        assert naive == pytest.approx(1.5, abs=1e-12)
        assert good == pytest.approx(math.sqrt(2.5), abs=1e-12)
        assert abs(good - naive) > 0.05
        # block 1 has constant vol, so the two coincide there
        same_good = float(averaged.diffusion(x, mu, 1)[0, 0])
        same_naive = float(control.diffusion(x, mu, 1)[0, 0])
        assert same_good == pytest.approx(same_naive, abs=1e-12)
        # drifts agree everywhere
        assert np.allclose(
            control.drift(x, mu, 0), averaged.drift(x, mu, 0), atol=1e-14
        )

    def test_averaged_model_integrates(self):
        agg = aggregate(worked_spec())
        averaged = average_coefficients(MODEL4, agg)
        cfg = SimConfig(averaged, 32, 0.25, 5e-3, InitialCondition())
        traj, path = simulate_with_chain(cfg, agg.q_bar, 0, seed=5)
        assert traj.positions.shape[1:] == (32, 1)
        assert set(np.unique(path.states)) <= {0, 1}


# ---------------------------------------------------------------------------
# generator difference along a trajectory
# ---------------------------------------------------------------------------


class TestOperatorResidual:
    def test_trivial_partition_gives_zero(self):
        # singleton blocks with identical coefficients: fast and averaged
        # generators coincide, so the residual is numerically zero
        blocks = tuple(validate_generator([[0.0]]) for _ in range(2))
        slow = np.array([[-1.0, 1.0], [2.0, -2.0]])
        spec = TwoScaleSpec(blocks, slow, 0.1)
        agg = aggregate(spec)
        model = mean_reverting_switch(pull=(1.0, 1.0), push=(0.2, 0.2), vol=(0.7, 0.7))
        averaged = average_coefficients(model, agg)
        q_eps = build_fast_generator(spec)
        cfg = SimConfig(model, 24, 0.5, 1e-2, InitialCondition())
        traj, path = simulate_with_chain(cfg, q_eps, 0, seed=21)
        res = operator_residual(
            traj, path, project_path(path, agg), model, averaged,
            q_eps, squared_norm(1), 0.5,
        )
        assert abs(res) <= 1e-12

    def test_wrong_aggregated_path_rejected(self):
        spec = worked_spec()
        agg = aggregate(spec)
        averaged = average_coefficients(MODEL4, agg)
        q_eps = build_fast_generator(spec)
        cfg = SimConfig(MODEL4, 16, 0.25, 5e-3, InitialCondition())
        traj, path = simulate_with_chain(cfg, q_eps, 0, seed=3)
        wrong = project_path(path, ((1, 1, 0, 0)))
        with pytest.raises(PathMismatch):
            operator_residual(
                traj, path, wrong, MODEL4, averaged, q_eps, squared_norm(1), 0.25
            )

    def test_residual_shrinks_with_faster_switching(self):
        spec = worked_spec()
        agg = aggregate(spec)
        averaged = average_coefficients(MODEL4, agg)

        def mean_abs_residual(eps, seeds):
            spec_eps = dataclasses.replace(spec, epsilon=eps)
            q_eps = build_fast_generator(spec_eps)
            dt = min(1e-2, eps / 10.0)
            cfg = SimConfig(MODEL4, 64, 0.5, dt, InitialCondition())
            vals = []
            for s in seeds:
                traj, path = simulate_with_chain(cfg, q_eps, 0, seed=s)
                vals.append(
                    abs(
                        operator_residual(
                            traj, path, project_path(path, agg), MODEL4,
                            averaged, q_eps, squared_norm(1), 0.5,
                        )
                    )
                )
            return float(np.mean(vals))

        coarse = mean_abs_residual(0.1, range(50, 56))
        fine = mean_abs_residual(0.004, range(60, 66))
        assert fine < coarse


# ---------------------------------------------------------------------------
# the comparison experiment
# ---------------------------------------------------------------------------


class TestTwoScaleExperiment:
    def test_eps_list_validation(self):
        spec = worked_spec()
        with pytest.raises(ValueError):
            two_scale_experiment(
                spec, MODEL4, n_particles=8, horizon=0.1,
                eps_values=(0.01, 0.1), test_functions=(squared_norm(1),),
                replicas=1, master_seed=0,
            )
        with pytest.raises(ValueError):
            two_scale_experiment(
                spec, MODEL4, n_particles=8, horizon=0.1,
                eps_values=(), test_functions=(squared_norm(1),),
                replicas=1, master_seed=0,
            )

    def test_replica_rows_and_determinism(self):
        spec = worked_spec()
        agg = aggregate(spec)
        averaged = average_coefficients(MODEL4, agg)
        q_eps = build_fast_generator(spec)
        cfg_fast = SimConfig(MODEL4, 16, 0.25, 5e-3, InitialCondition(), checkpoints=(0.25,))
        cfg_avg = SimConfig(averaged, 16, 0.25, 5e-3, InitialCondition(), checkpoints=(0.25,))
        rows1 = two_scale_replica(
            cfg_fast, cfg_avg, q_eps, agg.q_bar, agg.partition, 0,
            (squared_norm(1),), master_seed=7, replica=0, epsilon=0.1,
        )
        rows2 = two_scale_replica(
            cfg_fast, cfg_avg, q_eps, agg.q_bar, agg.partition, 0,
            (squared_norm(1),), master_seed=7, replica=0, epsilon=0.1,
        )
        assert rows1 == rows2
        assert set(rows1[0]) == {"replica", "epsilon", "fn", "fast", "averaged"}
        assert np.isfinite(rows1[0]["fast"])
        assert np.isfinite(rows1[0]["averaged"])

    def test_table_layout_and_row_lookup(self):
        spec = worked_spec()
        table = two_scale_experiment(
            spec, MODEL4, n_particles=16, horizon=0.25,
            eps_values=(0.1, 0.05), test_functions=(squared_norm(1),),
            replicas=3, master_seed=11, dt_max=5e-3,
            initial=InitialCondition(std=0.5),
        )
        assert len(table.records) == 3 * 2 * 1
        assert table.eps_values == (0.1, 0.05)
        row = table.row(0.05, table.fn_names[0])
        assert row.epsilon == 0.05
        assert np.isfinite(row.diff)
        assert row.diff == pytest.approx(row.fast_mean - row.averaged_mean, abs=1e-14)
        assert row.diff_se == pytest.approx(
            math.hypot(row.fast_se, row.averaged_se), abs=1e-14
        )
        with pytest.raises(KeyError):
            table.row(0.2, table.fn_names[0])

    def test_control_substitution_runs(self):
        spec = worked_spec()
        agg = aggregate(spec)
        control = sigma_averaged_control(MODEL4, agg)
        table = two_scale_experiment(
            spec, MODEL4, n_particles=16, horizon=0.25,
            eps_values=(0.1,), test_functions=(squared_norm(1),),
            replicas=2, master_seed=13, dt_max=5e-3, averaged=control,
        )
        assert len(table.summary) == 1
