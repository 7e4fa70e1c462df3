"""Particle-system integrator: configs, the Euler step, event-aligned grids,
bit-exact reproducibility and restart gluing, and the built-in models."""

import math

import numpy as np
import pytest

from mfswitch.chain import SwitchingPath, constant_path, sample_path, validate_generator
from mfswitch.dynamics import (
    CoefficientModel,
    ConfigInvalid,
    InitialCondition,
    NonFiniteState,
    ParticleEnsemble,
    SimConfig,
    builtin_model,
    em_step,
    generator_apply,
    kernel_interaction,
    lyapunov_moment,
    mean_reverting_switch,
    simulate,
    simulate_with_chain,
)
from mfswitch.measure import EmpiricalMeasure, regime_scaled, squared_norm

Q2 = validate_generator([[-2.0, 2.0], [1.0, -1.0]])
MODEL = mean_reverting_switch(pull=(1.0, 2.0), push=(0.5, -0.5), vol=(0.6, 1.0))


def make_config(**overrides):
    defaults = dict(
        model=MODEL,
        n_particles=16,
        horizon=0.5,
        dt=0.01,
        initial=InitialCondition(kind="normal", mean=0.0, std=1.0),
    )
    defaults.update(overrides)
    return SimConfig(**defaults)


# ---------------------------------------------------------------------------
# configuration objects
# ---------------------------------------------------------------------------


class TestInitialCondition:
    def test_normal_sampling_shape_and_moments(self):
        init = InitialCondition(kind="normal", mean=1.0, std=0.5)
        x = init.sample(4000, 2, np.random.default_rng(0))
        assert x.shape == (4000, 2)
        assert abs(x.mean() - 1.0) < 0.05
        assert abs(x.std() - 0.5) < 0.05

    def test_points_are_used_verbatim(self):
        pts = np.array([[0.0], [1.0], [2.0]])
        init = InitialCondition(kind="points", points=pts)
        x = init.sample(3, 1, np.random.default_rng(0))
        assert np.array_equal(x, pts)

    def test_points_shape_mismatch_rejected(self):
        init = InitialCondition(kind="points", points=np.zeros((3, 1)))
        with pytest.raises(ConfigInvalid):
            init.sample(4, 1, np.random.default_rng(0))

    def test_unknown_kind_rejected(self):
        with pytest.raises(ConfigInvalid):
            InitialCondition(kind="cauchy")


class TestSimConfig:
    def test_checkpoints_are_sorted_and_deduplicated(self):
        cfg = make_config(checkpoints=[0.5, 0.1, 0.1, 0.3])
        assert cfg.checkpoints == (0.1, 0.3, 0.5)

    def test_empty_checkpoint_list_rejected(self):
        with pytest.raises(ConfigInvalid):
            make_config(checkpoints=[])

    def test_checkpoint_outside_horizon_rejected(self):
        with pytest.raises(ConfigInvalid):
            make_config(checkpoints=[0.7])

    def test_bad_scalars_rejected(self):
        with pytest.raises(ConfigInvalid):
            make_config(dt=0.0)
        with pytest.raises(ConfigInvalid):
            make_config(horizon=-1.0)
        with pytest.raises(ConfigInvalid):
            make_config(n_particles=0)


# ---------------------------------------------------------------------------
# built-in models
# ---------------------------------------------------------------------------


class TestBuiltinModels:
    def test_mean_reverting_drift_formula(self):
        x = np.array([[0.0], [2.0]])
        mu = EmpiricalMeasure.uniform(x)  # mean 1.0
        b = MODEL.drift(x, mu, 0)
        assert np.allclose(b, [[1.0 * 1.0 + 0.5], [1.0 * (-1.0) + 0.5]])
        b1 = MODEL.drift(x, mu, 1)
        assert np.allclose(b1, [[2.0 * 1.0 - 0.5], [2.0 * (-1.0) - 0.5]])

    def test_mean_reverting_diffusion_is_scaled_identity(self):
        x = np.zeros((3, 1))
        mu = EmpiricalMeasure.uniform(x)
        assert np.allclose(MODEL.diffusion(x, mu, 0), 0.6 * np.eye(1))
        assert np.allclose(MODEL.diffusion(x, mu, 1), 1.0 * np.eye(1))

    def test_mean_reverting_rejects_negative_rates(self):
        with pytest.raises(ConfigInvalid):
            mean_reverting_switch(pull=(-1.0, 1.0), push=(0.0, 0.0), vol=(1.0, 1.0))
        with pytest.raises(ConfigInvalid):
            mean_reverting_switch(pull=(1.0, 1.0), push=(0.0, 0.0), vol=(-0.1, 1.0))

    def test_mean_reverting_lipschitz_spot_check(self):
        # |b(x, mu) - b(y, eta)| <= L (|x - y| + |mean mu - mean eta|)
        rng = np.random.default_rng(4)
        L = MODEL.lipschitz_const
        for _ in range(50):
            x = rng.uniform(-3, 3, size=(1, 1))
            y = rng.uniform(-3, 3, size=(1, 1))
            mu = EmpiricalMeasure.uniform(rng.uniform(-3, 3, size=(4, 1)))
            eta = EmpiricalMeasure.uniform(rng.uniform(-3, 3, size=(4, 1)))
            for regime in (0, 1):
                lhs = abs(
                    float(MODEL.drift(x, mu, regime)[0, 0])
                    - float(MODEL.drift(y, eta, regime)[0, 0])
                )
                gap = abs(x[0, 0] - y[0, 0]) + abs(
                    float(mu.mean()[0] - eta.mean()[0])
                )
                assert lhs <= L * gap + 1e-12

    def test_kernel_interaction_drift_is_bounded(self):
        model = kernel_interaction(scale=(2.0, -1.0), vol=(0.5, 0.5))
        rng = np.random.default_rng(8)
        x = rng.uniform(-50, 50, size=(20, 1))
        mu = EmpiricalMeasure.uniform(rng.uniform(-50, 50, size=(20, 1)))
        b = model.drift(x, mu, 0)
        assert np.abs(b).max() <= 2.0 * math.pi / 2.0 + 1e-12

    def test_kernel_interaction_matches_direct_sum(self):
        model = kernel_interaction(scale=(1.5,), vol=(0.0,))
        x = np.array([[0.0], [1.0]])
        mu = EmpiricalMeasure.uniform(np.array([[0.5], [-0.5]]))
        b = model.drift(x, mu, 0)
        want0 = 1.5 * 0.5 * (math.atan(0.5) + math.atan(-0.5))
        want1 = 1.5 * 0.5 * (math.atan(-0.5) + math.atan(-1.5))
        assert b[0, 0] == pytest.approx(want0, abs=1e-12)
        assert b[1, 0] == pytest.approx(want1, abs=1e-12)

    def test_builtin_model_dispatch(self):
        model = builtin_model(
            "mean-reverting-switch", pull=(1.0,), push=(0.0,), vol=(1.0,)
        )
        assert model.regime_count == 1
        with pytest.raises(ConfigInvalid):
            builtin_model("levy-flight")


# ---------------------------------------------------------------------------
# Euler step
# ---------------------------------------------------------------------------


class TestEmStep:
    def test_explicit_formula_with_supplied_noise(self):
        x = np.array([[0.5], [-1.0]])
        ens = ParticleEnsemble(x, 0.0, 0)
        mu = EmpiricalMeasure.uniform(x)
        z = np.array([[1.0], [-2.0]])
        out = em_step(MODEL, ens, mu, 0, 0.01, noise=z)
        drift = MODEL.drift(x, mu, 0)
        want = x + 0.01 * drift + math.sqrt(0.01) * 0.6 * z
        assert np.array_equal(out.states, want)
        assert out.time == 0.01

    def test_zero_noise_preserves_population_mean_without_push(self):
        model = mean_reverting_switch(pull=(2.0,), push=(0.0,), vol=(1.0,))
        x = np.random.default_rng(5).normal(size=(64, 1))
        ens = ParticleEnsemble(x, 0.0, 0)
        mu = EmpiricalMeasure.uniform(x)
        out = em_step(model, ens, mu, 0, 0.05, noise=np.zeros_like(x))
        assert out.states.mean() == pytest.approx(float(x.mean()), abs=1e-14)

    def test_particle_relabelling_commutes_with_step(self):
        rng = np.random.default_rng(6)
        x = rng.normal(size=(32, 1))
        z = rng.normal(size=(32, 1))
        perm = rng.permutation(32)
        mu = EmpiricalMeasure.uniform(x)
        mu_perm = EmpiricalMeasure.uniform(x[perm])
        out = em_step(MODEL, ParticleEnsemble(x, 0.0, 0), mu, 0, 0.01, noise=z)
        out_perm = em_step(
            MODEL, ParticleEnsemble(x[perm], 0.0, 0), mu_perm, 0, 0.01, noise=z[perm]
        )
        assert np.allclose(out_perm.states, out.states[perm], atol=1e-13)

    def test_divergence_raises_non_finite_state(self):
        rocket = CoefficientModel(
            name="rocket",
            dim=1,
            regime_count=1,
            drift=lambda x, mu, i0: np.full_like(x, 1e308),
            diffusion=lambda x, mu, i0: np.zeros((1, 1)),
            lipschitz_const=np.inf,
            growth_const=np.inf,
            diffusion_bound=0.0,
        )
        x = np.ones((4, 1))
        with pytest.raises(NonFiniteState), np.errstate(over="ignore"):
            em_step(
                rocket,
                ParticleEnsemble(x, 0.0, 0),
                EmpiricalMeasure.uniform(x),
                0,
                10.0,  # 1e308 * 10 overflows to inf
                noise=np.zeros_like(x),
            )

    def test_requires_rng_or_noise(self):
        x = np.zeros((2, 1))
        with pytest.raises(ValueError):
            em_step(MODEL, ParticleEnsemble(x, 0.0, 0), EmpiricalMeasure.uniform(x), 0, 0.01)


# ---------------------------------------------------------------------------
# full integration runs
# ---------------------------------------------------------------------------


class TestSimulate:
    def test_grid_contains_jumps_checkpoints_and_horizon(self):
        path = SwitchingPath(0.5, np.array([0.123, 0.3]), np.array([0, 1, 0]))
        cfg = make_config()
        traj = simulate(cfg, path, np.random.default_rng(0))
        times = traj.times
        assert times[0] == 0.0
        assert times[-1] == 0.5
        for special in (0.123, 0.3):
            assert special in times
        assert np.diff(times).max() <= cfg.dt + 1e-12
        assert np.diff(times).min() > 0

    def test_regimes_follow_the_path(self):
        path = SwitchingPath(0.5, np.array([0.25]), np.array([1, 0]))
        traj = simulate(make_config(), path, np.random.default_rng(1))
        assert np.array_equal(traj.regimes, path.states_at(traj.times))
        idx = traj.index_of_time(0.25)
        assert traj.regimes[idx] == 0
        assert traj.regimes[idx - 1] == 1

    def test_checkpoint_only_recording(self):
        path = constant_path(0, 0.5)
        cfg = make_config(checkpoints=(0.25, 0.5))
        traj = simulate(cfg, path, np.random.default_rng(2))
        assert np.array_equal(traj.times, [0.25, 0.5])
        assert traj.positions.shape == (2, 16, 1)

    def test_identical_seeds_are_bit_identical(self):
        path = sample_path(Q2, 0, 0.5, np.random.default_rng(3))
        a = simulate(make_config(), path, np.random.default_rng(99))
        b = simulate(make_config(), path, np.random.default_rng(99))
        assert np.array_equal(a.positions, b.positions)
        assert np.array_equal(a.times, b.times)

    def test_short_path_rejected(self):
        with pytest.raises(ConfigInvalid):
            simulate(make_config(), constant_path(0, 0.25), np.random.default_rng(0))

    def test_restart_at_checkpoint_glues_bitwise(self):
        path = sample_path(Q2, 0, 1.0, np.random.default_rng(10))
        model = MODEL
        rng_full = np.random.default_rng(2024)
        cfg_full = SimConfig(model, 24, 1.0, 1e-2, InitialCondition(), checkpoints=(0.5, 1.0))
        full = simulate(cfg_full, path, rng_full)

        rng_split = np.random.default_rng(2024)
        cfg_first = SimConfig(model, 24, 0.5, 1e-2, InitialCondition(), checkpoints=(0.5,))
        first = simulate(cfg_first, path, rng_split)
        mid = first.ensemble_at(first.index_of_time(0.5))
        second = simulate(cfg_full, path, rng_split, initial=mid)

        assert np.array_equal(
            full.positions[full.index_of_time(0.5)], first.positions[-1]
        )
        assert np.array_equal(
            full.positions[full.index_of_time(1.0)],
            second.positions[second.index_of_time(1.0)],
        )

    def test_initial_time_at_horizon_rejected(self):
        ens = ParticleEnsemble(np.zeros((16, 1)), 0.5, 0)
        with pytest.raises(ConfigInvalid):
            simulate(make_config(), constant_path(0, 0.5), np.random.default_rng(0), initial=ens)

    def test_deterministic_flow_converges_at_first_order(self):
        # vanishing diffusion: halving dt should roughly halve the error
        model = kernel_interaction(scale=(1.0,), vol=(0.0,))
        pts = np.linspace(-1.0, 1.0, 32).reshape(-1, 1)
        init = InitialCondition(kind="points", points=pts)
        path = constant_path(0, 1.0)

        def terminal(dt):
            cfg = SimConfig(model, 32, 1.0, dt, init, checkpoints=(1.0,))
            traj = simulate(cfg, path, np.random.default_rng(0))
            return traj.positions[-1]

        ref = terminal(0.05 / 16)
        e1 = np.abs(terminal(0.05) - ref).max()
        e2 = np.abs(terminal(0.025) - ref).max()
        assert e1 / e2 == pytest.approx(15.0 / 7.0, abs=0.45)


class TestSimulateWithChain:
    def test_reproducible_from_seed(self):
        cfg = make_config()
        t1, p1 = simulate_with_chain(cfg, Q2, 0, seed=1234)
        t2, p2 = simulate_with_chain(cfg, Q2, 0, seed=1234)
        assert np.array_equal(t1.positions, t2.positions)
        assert np.array_equal(p1.jump_times, p2.jump_times)

    def test_particle_reseed_keeps_the_chain(self):
        cfg = make_config()
        t1, p1 = simulate_with_chain(cfg, Q2, 0, seed=1234)
        t2, p2 = simulate_with_chain(cfg, Q2, 0, seed=1234, particle_seed=555)
        assert np.array_equal(p1.jump_times, p2.jump_times)
        assert np.array_equal(p1.states, p2.states)
        assert not np.array_equal(t1.positions, t2.positions)

    def test_chain_reseed_keeps_particle_stream(self):
        cfg = make_config()
        _, p1 = simulate_with_chain(cfg, Q2, 0, seed=1234)
        _, p2 = simulate_with_chain(cfg, Q2, 0, seed=1234, chain_seed=777)
        assert not (
            p1.jump_times.size == p2.jump_times.size
            and np.array_equal(p1.jump_times, p2.jump_times)
        )


# ---------------------------------------------------------------------------
# generator action and moments
# ---------------------------------------------------------------------------


class TestGeneratorApply:
    def test_squared_norm_reduces_to_drift_and_trace(self):
        f = squared_norm(1)
        x = np.array([1.5])
        mu = EmpiricalMeasure.uniform(np.array([[0.5], [1.0]]))
        got = generator_apply(MODEL, Q2, f, mu, x, 0)
        b = float(MODEL.drift(x.reshape(1, 1), mu, 0)[0, 0])
        want = 2.0 * 1.5 * b + 0.6**2
        assert got == pytest.approx(want, abs=1e-12)

    def test_regime_dependent_function_adds_jump_term(self):
        f = regime_scaled(squared_norm(1), (1.0, 0.25))
        x = np.array([1.5])
        mu = EmpiricalMeasure.uniform(np.array([[0.5], [1.0]]))
        plain = generator_apply(MODEL, Q2, squared_norm(1), mu, x, 0)
        got = generator_apply(MODEL, Q2, f, mu, x, 0)
        # q01 = 2, f1 - f0 = (0.25 - 1) x^2
        want = plain + 2.0 * (0.25 - 1.0) * 1.5**2
        assert got == pytest.approx(want, abs=1e-12)

    def test_batch_matches_pointwise(self):
        f = squared_norm(1)
        xs = np.array([[0.3], [-1.2], [2.0]])
        mu = EmpiricalMeasure.uniform(xs)
        batch = generator_apply(MODEL, Q2, f, mu, xs, 1)
        for k, x in enumerate(xs):
            single = generator_apply(MODEL, Q2, f, mu, x, 1)
            assert batch[k] == pytest.approx(single, abs=1e-12)


class TestLyapunovMoment:
    def test_hand_value(self):
        x = np.array([[1.0], [2.0]])
        ens = ParticleEnsemble(x, 0.0, 0)
        # mean |x|^2 = 2.5 -> (1 + 2.5)^0.5
        assert lyapunov_moment(ens, 0.5) == pytest.approx(math.sqrt(3.5), abs=1e-12)
        mu = EmpiricalMeasure.uniform(x)
        assert lyapunov_moment(mu, 1.0) == pytest.approx(3.5, abs=1e-12)

    def test_exponent_range_enforced(self):
        ens = ParticleEnsemble(np.zeros((2, 1)), 0.0, 0)
        with pytest.raises(ValueError):
            lyapunov_moment(ens, 0.0)
        with pytest.raises(ValueError):
            lyapunov_moment(ens, 1.5)

    def test_contractive_run_keeps_moments_bounded(self):
        cfg = make_config(n_particles=256, horizon=2.0, dt=5e-3)
        traj, _ = simulate_with_chain(cfg, Q2, 0, seed=31)
        psi = [
            float((traj.positions[k] ** 2).sum(axis=1).mean())
            for k in range(len(traj.times))
        ]
        assert max(psi) <= 5.0 * (psi[0] + 1.0)


# ---------------------------------------------------------------------------
# trajectory record output
# ---------------------------------------------------------------------------


class TestTrajectoryRecord:
    def test_index_of_time_tolerance(self):
        traj = simulate(make_config(), constant_path(0, 0.5), np.random.default_rng(1))
        assert traj.index_of_time(0.25 + 5e-10) == traj.index_of_time(0.25)
        assert traj.index_of_time(0.26001) is None

    def test_measure_and_ensemble_agree(self):
        traj = simulate(make_config(), constant_path(0, 0.5), np.random.default_rng(1))
        idx = traj.index_of_time(0.5)
        mu = traj.measure_at(idx)
        ens = traj.ensemble_at(idx)
        assert np.array_equal(mu.atoms, ens.states)
        assert ens.time == 0.5

    def test_csv_long_format(self, tmp_path):
        cfg = make_config(n_particles=3, checkpoints=(0.5,))
        traj = simulate(cfg, constant_path(1, 0.5), np.random.default_rng(1))
        target = tmp_path / "traj.csv"
        traj.to_csv(target)
        lines = target.read_text().strip().splitlines()
        assert lines[0] == "time,regime,particle,x1"
        assert len(lines) == 1 + 3  # one recorded time, three particles
        first = lines[1].split(",")
        assert float(first[0]) == 0.5
        assert int(first[1]) == 1
        assert int(first[2]) == 0
        assert float(first[3]) == traj.positions[0, 0, 0]
