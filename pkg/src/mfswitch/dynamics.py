"""Interacting particle systems driven by a common switching signal.

N particles share one regime trajectory; each carries an independent
Brownian motion. Coefficients depend on the particle position, the current
empirical measure, and the regime. Integration is Euler-Maruyama with the
empirical measure frozen at the step start, the regime read cadlag at the
step start, and the step grid restarted at every regime jump and checkpoint
so that event times are hit exactly.
"""

from __future__ import annotations

import csv
import dataclasses
import math
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np

from .chain import GeneratorMatrix, SwitchingPath, sample_path
from .measure import EmpiricalMeasure, TestFunctionBundle, _uniform_trusted

__all__ = [
    "CoefficientModel",
    "ParticleEnsemble",
    "InitialCondition",
    "SimConfig",
    "TrajectoryRecord",
    "NonFiniteState",
    "ConfigInvalid",
    "em_step",
    "simulate",
    "simulate_with_chain",
    "generator_apply",
    "lyapunov_moment",
    "mean_reverting_switch",
    "kernel_interaction",
    "builtin_model",
]


class NonFiniteState(RuntimeError):
    """Particle states left the finite range (NaN or infinity)."""


class ConfigInvalid(ValueError):
    """Simulation configuration fails validation."""


def _readonly(a: np.ndarray, dtype=float) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=dtype)
    a.flags.writeable = False
    return a


@dataclasses.dataclass(frozen=True)
class CoefficientModel:
    """Drift and diffusion of one particle given measure and regime.

    ``drift(X, mu, i0)`` maps an (N, d) position block to (N, d);
    ``diffusion(X, mu, i0)`` returns either a shared (d, d) matrix or a
    per-particle (N, d, d) stack. The declared constants describe the
    Lipschitz/growth behaviour the model is built to satisfy; spot checks
    live in the tests.
    """

    name: str
    dim: int
    regime_count: int
    drift: Callable[[np.ndarray, EmpiricalMeasure, int], np.ndarray]
    diffusion: Callable[[np.ndarray, EmpiricalMeasure, int], np.ndarray]
    lipschitz_const: float
    growth_const: float
    diffusion_bound: float


@dataclasses.dataclass(frozen=True)
class ParticleEnsemble:
    """Positions of all particles at one instant, with the current regime."""

    states: np.ndarray  # (N, d)
    time: float
    regime: int

    def __post_init__(self):
        arr = np.asarray(self.states, dtype=float)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2 or arr.shape[0] < 1:
            raise ValueError("states must be a nonempty (N, d) array")
        if not np.isfinite(arr).all():
            raise NonFiniteState("ensemble contains non-finite positions")
        object.__setattr__(self, "states", _readonly(arr))

    @property
    def n(self) -> int:
        return self.states.shape[0]

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    def measure(self) -> EmpiricalMeasure:
        return EmpiricalMeasure.uniform(self.states)


@dataclasses.dataclass(frozen=True)
class InitialCondition:
    """Initial particle law: iid normal coordinates or explicit points."""

    kind: str = "normal"
    mean: float = 0.0
    std: float = 1.0
    points: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in ("normal", "points"):
            raise ConfigInvalid(f"unknown initial kind {self.kind!r}")
        if self.kind == "points":
            if self.points is None:
                raise ConfigInvalid("initial kind 'points' requires points")
            pts = np.asarray(self.points, dtype=float)
            if pts.ndim == 1:
                pts = pts[:, None]
            if not np.isfinite(pts).all():
                raise ConfigInvalid("initial points must be finite")
            object.__setattr__(self, "points", _readonly(pts))
        elif not (np.isfinite(self.mean) and np.isfinite(self.std) and self.std >= 0):
            raise ConfigInvalid("normal initial condition needs finite mean, std >= 0")

    def sample(self, n: int, dim: int, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "points":
            pts = self.points
            if pts.shape != (n, dim):
                raise ConfigInvalid(
                    f"initial points shaped {pts.shape}, expected {(n, dim)}"
                )
            return np.array(pts)
        return self.mean + self.std * rng.standard_normal((n, dim))


@dataclasses.dataclass(frozen=True)
class SimConfig:
    """Run parameters: model, particle count, horizon, step, recording."""

    model: CoefficientModel
    n_particles: int
    horizon: float
    dt: float = 1e-3
    initial: InitialCondition = InitialCondition()
    checkpoints: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        if self.n_particles < 1:
            raise ConfigInvalid("n_particles must be at least 1")
        if not (np.isfinite(self.horizon) and self.horizon > 0):
            raise ConfigInvalid("horizon must be positive and finite")
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise ConfigInvalid("dt must be positive and finite")
        if self.checkpoints is not None:
            cps = tuple(sorted({float(c) for c in self.checkpoints}))
            if not cps:
                raise ConfigInvalid("checkpoints may not be an empty collection")
            if cps[0] < 0.0 or cps[-1] > self.horizon + 1e-12:
                raise ConfigInvalid("checkpoints must lie in [0, horizon]")
            object.__setattr__(self, "checkpoints", cps)


@dataclasses.dataclass(frozen=True)
class TrajectoryRecord:
    """Recorded states along a run: times, positions, regimes, and the step.

    With ``checkpoints=None`` in the config every integration grid point is
    recorded; otherwise exactly the requested checkpoint times appear.
    """

    times: np.ndarray  # (K,)
    positions: np.ndarray  # (K, N, d)
    regimes: np.ndarray  # (K,)
    dt: float
    model_name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "times", _readonly(self.times))
        object.__setattr__(self, "positions", _readonly(self.positions))
        object.__setattr__(self, "regimes", _readonly(self.regimes, dtype=np.int64))

    @property
    def n(self) -> int:
        return self.positions.shape[1]

    @property
    def dim(self) -> int:
        return self.positions.shape[2]

    def index_of_time(self, t: float, tol: float = 1e-9) -> Optional[int]:
        hits = np.flatnonzero(np.abs(self.times - t) <= tol)
        return int(hits[0]) if hits.size else None

    def measure_at(self, idx: int) -> EmpiricalMeasure:
        return EmpiricalMeasure.uniform(self.positions[idx])

    def ensemble_at(self, idx: int) -> ParticleEnsemble:
        return ParticleEnsemble(
            self.positions[idx], float(self.times[idx]), int(self.regimes[idx])
        )

    def to_csv(self, path_or_file) -> None:
        """Long format: one row per (time, particle)."""
        own = isinstance(path_or_file, (str, bytes)) or hasattr(
            path_or_file, "__fspath__"
        )
        fh = (
            open(path_or_file, "w", newline="", encoding="utf-8")
            if own
            else path_or_file
        )
        try:
            writer = csv.writer(fh, lineterminator="\r\n")
            writer.writerow(
                ["time", "regime", "particle"]
                + [f"x{i + 1}" for i in range(self.dim)]
            )
            for k, t in enumerate(self.times):
                for p in range(self.n):
                    writer.writerow(
                        [repr(float(t)), int(self.regimes[k]), p]
                        + [repr(float(v)) for v in self.positions[k, p]]
                    )
        finally:
            if own:
                fh.close()


def _apply_sigma(sig: np.ndarray, noise: np.ndarray) -> np.ndarray:
    sig = np.asarray(sig, dtype=float)
    if sig.ndim == 2:
        return noise @ sig.T
    return np.einsum("nij,nj->ni", sig, noise)


def em_step(
    model: CoefficientModel,
    ensemble: ParticleEnsemble,
    mu: EmpiricalMeasure,
    regime: int,
    dt: float,
    rng: Optional[np.random.Generator] = None,
    *,
    noise: Optional[np.ndarray] = None,
) -> ParticleEnsemble:
    """One Euler-Maruyama step with the measure frozen at the step start.

    x <- x + b(x, mu, regime) dt + sigma(x, mu, regime) sqrt(dt) Z with Z a
    standard normal block, either drawn from ``rng`` or passed explicitly
    via ``noise``.
    """
    if dt <= 0:
        raise ConfigInvalid("dt must be positive")
    x = ensemble.states
    if noise is None:
        if rng is None:
            raise ValueError("either rng or noise must be supplied")
        noise = rng.standard_normal(x.shape)
    drift = model.drift(x, mu, regime)
    sig = model.diffusion(x, mu, regime)
    new_x = x + drift * dt + math.sqrt(dt) * _apply_sigma(sig, noise)
    if not np.isfinite(new_x).all():
        raise NonFiniteState(f"particles diverged during the step at t = {ensemble.time}")
    return ParticleEnsemble(new_x, ensemble.time + dt, regime)


def simulate(
    config: SimConfig,
    path: SwitchingPath,
    rng: np.random.Generator,
    initial: Optional[ParticleEnsemble] = None,
) -> TrajectoryRecord:
    """Integrate the N-particle system along a given regime trajectory.

    The step grid restarts at every regime jump and checkpoint, so those
    times are hit exactly (a partial step is taken just before each event).
    Runs are a pure function of (config, path, rng state): identical seeds
    give bit-identical records, and a run split at an event time and resumed
    from the recorded ensemble reproduces the unsplit run exactly.
    """
    model, big_t, dt = config.model, config.horizon, config.dt
    n, d = config.n_particles, model.dim
    if path.horizon < big_t - 1e-12:
        raise ConfigInvalid("switching path is shorter than the horizon")

    if initial is None:
        x = config.initial.sample(n, d, rng)
        t0 = 0.0
    else:
        x = np.array(initial.states, dtype=float)
        if x.shape != (n, d):
            raise ConfigInvalid(
                f"initial ensemble shaped {x.shape}, expected {(n, d)}"
            )
        t0 = float(initial.time)
    if t0 >= big_t:
        raise ConfigInvalid("initial time must precede the horizon")
    if not np.isfinite(x).all():
        raise NonFiniteState("initial ensemble contains non-finite positions")

    jumps = path.jump_times[(path.jump_times > t0) & (path.jump_times < big_t)]
    if config.checkpoints is None:
        record_all = True
        cps_ahead: Tuple[float, ...] = ()
        record_now = True
    else:
        record_all = False
        cps_ahead = tuple(c for c in config.checkpoints if c > t0)
        record_now = any(abs(c - t0) <= 1e-15 for c in config.checkpoints)
    events = np.unique(np.concatenate([jumps, np.asarray(cps_ahead), [big_t]]))
    record_times = (
        None if record_all else {float(c) for c in config.checkpoints}
    )

    times = [t0] if (record_all or record_now) else []
    frames = [x.copy()] if (record_all or record_now) else []
    uniform_weights = np.full(n, 1.0 / n)
    uniform_weights.flags.writeable = False

    t = t0
    for event in events:
        regime = path.state_at(t)
        while t < event:
            t_next = min(t + dt, float(event))
            h = t_next - t
            # x is finite (checked after every step) and rebound, never
            # mutated, so the trusted constructor is safe here.
            mu = _uniform_trusted(x, uniform_weights)
            noise = rng.standard_normal((n, d))
            drift = model.drift(x, mu, regime)
            sig = model.diffusion(x, mu, regime)
            x = x + drift * h + math.sqrt(h) * _apply_sigma(sig, noise)
            if not np.isfinite(x).all():
                raise NonFiniteState(f"particles diverged near t = {t_next}")
            t = t_next
            if record_all or (record_times is not None and t in record_times):
                times.append(t)
                frames.append(x)

    times_arr = np.asarray(times)
    regimes = path.states_at(times_arr)
    return TrajectoryRecord(
        times_arr, np.stack(frames), regimes, dt, model.name
    )


def simulate_with_chain(
    config: SimConfig,
    q: GeneratorMatrix,
    initial_regime: int,
    seed: Union[int, np.random.SeedSequence, np.random.Generator],
    *,
    chain_seed: Optional[int] = None,
    particle_seed: Optional[int] = None,
) -> Tuple[TrajectoryRecord, SwitchingPath]:
    """Sample a regime trajectory, then drive the particles along it.

    The chain and the particle noise come from separate child streams of
    ``seed``, so overriding ``particle_seed`` changes the particles but
    leaves the sampled path untouched (and vice versa).
    """
    if isinstance(seed, np.random.Generator):
        chain_ss, particle_ss = seed.bit_generator.seed_seq.spawn(2)
    else:
        root = (
            seed
            if isinstance(seed, np.random.SeedSequence)
            else np.random.SeedSequence(seed)
        )
        chain_ss, particle_ss = root.spawn(2)
    if chain_seed is not None:
        chain_ss = np.random.SeedSequence(chain_seed)
    if particle_seed is not None:
        particle_ss = np.random.SeedSequence(particle_seed)
    path = sample_path(
        q, initial_regime, config.horizon, np.random.default_rng(chain_ss)
    )
    traj = simulate(config, path, np.random.default_rng(particle_ss))
    return traj, path


def generator_apply(
    model: CoefficientModel,
    q: GeneratorMatrix,
    f: TestFunctionBundle,
    mu: EmpiricalMeasure,
    x: np.ndarray,
    i0: int,
) -> Union[float, np.ndarray]:
    """Full generator on (position, regime): diffusion part plus chain part.

    b . grad f + (1/2) trace(sigma sigma' hess f)
    + sum_j q[i0, j] (f(x, j) - f(x, i0)).

    Accepts a single point (d,) or a batch (N, d); returns a scalar or (N,).
    """
    x_arr = np.asarray(x, dtype=float)
    single = x_arr.ndim == 1
    if single:
        x_arr = x_arr[None, :]
    b = model.drift(x_arr, mu, i0)
    sig = np.asarray(model.diffusion(x_arr, mu, i0), dtype=float)
    if sig.ndim == 2:
        a = sig @ sig.T
        grad = f.gradient(x_arr, i0)
        hess = f.hessian(x_arr, i0)
        second = 0.5 * np.einsum("ij,nij->n", a, hess)
    else:
        a = np.einsum("nik,njk->nij", sig, sig)
        grad = f.gradient(x_arr, i0)
        hess = f.hessian(x_arr, i0)
        second = 0.5 * np.einsum("nij,nij->n", a, hess)
    out = np.einsum("nd,nd->n", b, grad) + second
    f_here = f.value(x_arr, i0)
    for j in range(q.m0):
        if j == i0:
            continue
        rate = float(q.rates[i0, j])
        if rate != 0.0:
            out = out + rate * (f.value(x_arr, j) - f_here)
    return float(out[0]) if single else out


def lyapunov_moment(
    arg: Union[ParticleEnsemble, EmpiricalMeasure], p: float
) -> float:
    """(<mu, |x|^2> + 1)^p for p in (0, 1]; finite under linear growth."""
    if not (0.0 < p <= 1.0):
        raise ValueError("p must lie in (0, 1]")
    if isinstance(arg, ParticleEnsemble):
        mean_sq = float((arg.states**2).sum(axis=1).mean())
    else:
        mean_sq = float(arg.weights @ (arg.atoms**2).sum(axis=1))
    return (mean_sq + 1.0) ** p


# ---------------------------------------------------------------------------
# Built-in coefficient families
# ---------------------------------------------------------------------------


def _constant_matrix(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.flags.writeable = False
    return a


def mean_reverting_switch(
    pull: Sequence[float],
    push: Sequence[float],
    vol: Sequence[float],
    dim: int = 1,
) -> CoefficientModel:
    """Mean reversion toward the empirical mean with regime-switched rates.

    b(x, mu, i) = pull[i] (mean(mu) - x) + push[i],
    sigma(x, mu, i) = vol[i] I.
    """
    pull = tuple(float(v) for v in pull)
    push = tuple(float(v) for v in push)
    vol = tuple(float(v) for v in vol)
    if not (len(pull) == len(push) == len(vol)) or not pull:
        raise ConfigInvalid("pull, push, vol must be equal-length and nonempty")
    if any(v < 0 for v in pull) or any(v < 0 for v in vol):
        raise ConfigInvalid("pull and vol entries must be nonnegative")

    def drift(x, mu, i0):
        return pull[i0] * (mu.mean() - x) + push[i0]

    # Constant per regime, so build the matrices once (read-only: the same
    # array is handed out on every call).
    sig_mats = tuple(_constant_matrix(v * np.eye(dim)) for v in vol)

    def diffusion(x, mu, i0):
        return sig_mats[i0]

    return CoefficientModel(
        name="mean-reverting-switch",
        dim=dim,
        regime_count=len(pull),
        drift=drift,
        diffusion=diffusion,
        lipschitz_const=max(pull),
        growth_const=max(pull) + max(abs(v) for v in push),
        diffusion_bound=max(vol) * math.sqrt(dim),
    )


def kernel_interaction(
    scale: Sequence[float], vol: Sequence[float], dim: int = 1
) -> CoefficientModel:
    """Pairwise interaction through a bounded Lipschitz kernel.

    b(x, mu, i) = scale[i] <mu(dy), arctan(y - x)> componentwise,
    sigma(x, mu, i) = vol[i] I. The kernel is bounded by pi/2 with
    Lipschitz constant 1, so the drift is bounded and measure-Lipschitz.
    """
    scale = tuple(float(v) for v in scale)
    vol = tuple(float(v) for v in vol)
    if len(scale) != len(vol) or not scale:
        raise ConfigInvalid("scale and vol must be equal-length and nonempty")

    def drift(x, mu, i0):
        n = x.shape[0]
        atoms, w = mu.atoms, mu.weights
        out = np.empty_like(x)
        chunk = max(1, 4_000_000 // max(atoms.shape[0] * x.shape[1], 1))
        for start in range(0, n, chunk):
            stop = min(start + chunk, n)
            diff = np.arctan(atoms[None, :, :] - x[start:stop, None, :])
            out[start:stop] = np.einsum("m,nmd->nd", w, diff)
        return scale[i0] * out

    sig_mats = tuple(_constant_matrix(v * np.eye(dim)) for v in vol)

    def diffusion(x, mu, i0):
        return sig_mats[i0]

    smax = max(abs(v) for v in scale)
    return CoefficientModel(
        name="kernel-interaction",
        dim=dim,
        regime_count=len(scale),
        drift=drift,
        diffusion=diffusion,
        lipschitz_const=smax * math.pi / 2.0,
        growth_const=smax * math.pi / 2.0,
        diffusion_bound=max(vol) * math.sqrt(dim),
    )


def builtin_model(kind: str, **params) -> CoefficientModel:
    """Build a named coefficient family from plain parameters."""
    if kind == "mean-reverting-switch":
        return mean_reverting_switch(**params)
    if kind == "kernel-interaction":
        return kernel_interaction(**params)
    raise ConfigInvalid(f"unknown model kind {kind!r}")
