"""Averaging of fast-switching systems against block stationary weights.

When the chain switches quickly inside blocks and slowly between them, the
particle system is approximated by one driven only by the block label, with
drift averaged directly and the diffusion averaged through its square:
a_bar = sum_j nu_j sigma_j sigma_j', then sigma_bar = sqrt(a_bar). Averaging
sigma itself is wrong whenever sigma varies within a block; a control model
doing exactly that is provided so experiments can demonstrate the
difference.
"""

from __future__ import annotations

import dataclasses
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .chain import (
    AggregationResult,
    GeneratorMatrix,
    SwitchingPath,
    TwoScaleSpec,
    PathMismatch,
    aggregate,
    build_fast_generator,
    project_path,
)
from .dynamics import (
    CoefficientModel,
    InitialCondition,
    SimConfig,
    TrajectoryRecord,
    generator_apply,
    simulate_with_chain,
)
from .measure import EmpiricalMeasure, TestFunctionBundle, _uniform_trusted

__all__ = [
    "DimensionMismatch",
    "NotSymmetric",
    "IndefiniteBeyondTolerance",
    "AveragedModel",
    "TwoScaleRow",
    "TwoScaleTable",
    "matrix_sqrt_spd",
    "average_coefficients",
    "sigma_averaged_control",
    "operator_residual",
    "two_scale_replica",
    "two_scale_experiment",
]

SQRT_TOL = 1e-10


class DimensionMismatch(ValueError):
    """Aggregation block structure does not match the model's regime count."""


class NotSymmetric(ValueError):
    """Matrix square root requested for a non-symmetric matrix."""


class IndefiniteBeyondTolerance(ValueError):
    """Matrix has an eigenvalue below the negative tolerance."""


def matrix_sqrt_spd(a: np.ndarray, neg_tol: float = 1e-12) -> np.ndarray:
    """Factor a symmetric positive (semi)definite matrix as s s' = a.

    Uses Cholesky when strictly positive definite and the symmetric
    eigendecomposition root otherwise; eigenvalues in [-neg_tol, 0) are
    clipped to zero, anything lower raises IndefiniteBeyondTolerance.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NotSymmetric(f"expected a square matrix, got shape {a.shape}")
    scale = max(1.0, float(np.abs(a).max()))
    if float(np.abs(a - a.T).max()) > SQRT_TOL * scale:
        raise NotSymmetric("matrix is not symmetric within tolerance")
    sym = 0.5 * (a + a.T)
    w, v = np.linalg.eigh(sym)
    if float(w.min()) < -neg_tol * max(1.0, float(np.abs(w).max())):
        raise IndefiniteBeyondTolerance(
            f"eigenvalue {w.min()} below -{neg_tol}"
        )
    if float(w.min()) > neg_tol:
        try:
            return np.linalg.cholesky(sym)
        except np.linalg.LinAlgError:
            pass
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


@dataclasses.dataclass(frozen=True)
class AveragedModel(CoefficientModel):
    """Slow-system coefficients obtained by stationary averaging.

    Behaves as a CoefficientModel on block labels: drift is the
    nu-weighted sum of the flat-state drifts, diffusion is the symmetric
    square root of the nu-weighted sum of sigma sigma' (so that
    diffusion @ diffusion' reproduces a_bar within tolerance). ``a_bar``
    exposes the averaged square directly.
    """

    base: CoefficientModel = None
    aggregation: AggregationResult = None
    a_bar: Callable[[np.ndarray, EmpiricalMeasure, int], np.ndarray] = None


def _flat_a(model: CoefficientModel, x, mu, flat: int) -> np.ndarray:
    sig = np.asarray(model.diffusion(x, mu, flat), dtype=float)
    if sig.ndim == 2:
        return sig @ sig.T
    return np.einsum("nik,njk->nij", sig, sig)


def average_coefficients(
    model: CoefficientModel, aggregation: AggregationResult
) -> AveragedModel:
    """Build the averaged slow model from flat-state coefficients.

    Requires the aggregation's flat state count to equal the model's regime
    count (DimensionMismatch otherwise).
    """
    flat_count = sum(aggregation.block_sizes)
    if flat_count != model.regime_count:
        raise DimensionMismatch(
            f"aggregation covers {flat_count} flat states, model has "
            f"{model.regime_count} regimes"
        )
    offsets = aggregation.offsets
    nus = aggregation.nus

    def drift_bar(x, mu, block):
        off, nu = offsets[block], nus[block]
        out = nu[0] * model.drift(x, mu, off)
        for j in range(1, len(nu)):
            out = out + nu[j] * model.drift(x, mu, off + j)
        return out

    def a_bar(x, mu, block):
        off, nu = offsets[block], nus[block]
        out = nu[0] * _flat_a(model, x, mu, off)
        for j in range(1, len(nu)):
            out = out + nu[j] * _flat_a(model, x, mu, off + j)
        return out

    # For state-independent diffusions the averaged matrix repeats on every
    # step, so memoize the square root by the matrix bytes (cleared if a
    # state-dependent model ever floods it).
    sqrt_cache: dict = {}

    def diffusion_bar(x, mu, block):
        a = a_bar(x, mu, block)
        if a.ndim == 2:
            key = a.tobytes()
            hit = sqrt_cache.get(key)
            if hit is None:
                if len(sqrt_cache) >= 64:
                    sqrt_cache.clear()
                hit = matrix_sqrt_spd(a)
                hit.flags.writeable = False
                sqrt_cache[key] = hit
            return hit
        return np.stack([matrix_sqrt_spd(a[i]) for i in range(a.shape[0])])

    return AveragedModel(
        name=f"averaged({model.name})",
        dim=model.dim,
        regime_count=aggregation.num_blocks,
        drift=drift_bar,
        diffusion=diffusion_bar,
        lipschitz_const=model.lipschitz_const,
        growth_const=model.growth_const,
        diffusion_bound=model.diffusion_bound,
        base=model,
        aggregation=aggregation,
        a_bar=a_bar,
    )


def sigma_averaged_control(
    model: CoefficientModel, aggregation: AggregationResult
) -> CoefficientModel:
    """Deliberately mis-averaged control: nu-weighted sigma instead of
    nu-weighted sigma sigma'.

    Whenever sigma varies inside a block, (sum nu sigma)^2 differs from
    sum nu sigma^2, so comparisons against the fast system should detect
    this model as wrong. Useful only as an experimental control.
    """
    flat_count = sum(aggregation.block_sizes)
    if flat_count != model.regime_count:
        raise DimensionMismatch(
            f"aggregation covers {flat_count} flat states, model has "
            f"{model.regime_count} regimes"
        )
    averaged = average_coefficients(model, aggregation)
    offsets, nus = aggregation.offsets, aggregation.nus

    def diffusion_naive(x, mu, block):
        off, nu = offsets[block], nus[block]
        out = nu[0] * np.asarray(model.diffusion(x, mu, off), dtype=float)
        for j in range(1, len(nu)):
            out = out + nu[j] * np.asarray(
                model.diffusion(x, mu, off + j), dtype=float
            )
        return out

    return CoefficientModel(
        name=f"sigma-averaged-control({model.name})",
        dim=model.dim,
        regime_count=aggregation.num_blocks,
        drift=averaged.drift,
        diffusion=diffusion_naive,
        lipschitz_const=model.lipschitz_const,
        growth_const=model.growth_const,
        diffusion_bound=model.diffusion_bound,
    )


def operator_residual(
    traj: TrajectoryRecord,
    fast_path: SwitchingPath,
    aggregated_path: SwitchingPath,
    model: CoefficientModel,
    averaged: AveragedModel,
    q_eps: GeneratorMatrix,
    f: TestFunctionBundle,
    t: float,
) -> float:
    """Difference of time-integrated generators along one fast trajectory.

    int_0^t <measure, L_fast f> ds - int_0^t <measure, L_averaged f> ds,
    both integrals evaluated on the same recorded trajectory with the same
    left-endpoint quadrature; the averaged generator reads the block label
    of the fast regime. ``aggregated_path`` must be the block projection of
    ``fast_path`` (PathMismatch otherwise). Intended for regime-independent
    test functions, whose chain terms vanish on both sides.
    """
    from .limit import grid_intervals

    projected = project_path(fast_path, averaged.aggregation)
    if (
        aggregated_path.horizon != projected.horizon
        or not np.array_equal(aggregated_path.jump_times, projected.jump_times)
        or not np.array_equal(aggregated_path.states, projected.states)
    ):
        raise PathMismatch(
            "aggregated path is not the block projection of the fast path"
        )
    idx, gaps = grid_intervals(traj, t, fast_path)
    partition = averaged.aggregation.partition
    q_bar = averaged.aggregation.q_bar

    uniform_weights = np.full(traj.n, 1.0 / traj.n)
    uniform_weights.flags.writeable = False
    total = 0.0
    for k in range(idx):
        w = float(gaps[k])
        x_k = traj.positions[k]
        r_k = int(traj.regimes[k])
        # Recorded frames are finite and never mutated, so the trusted
        # constructor is safe.
        mu_k = _uniform_trusted(x_k, uniform_weights)
        fast_term = np.mean(generator_apply(model, q_eps, f, mu_k, x_k, r_k))
        slow_term = np.mean(
            generator_apply(averaged, q_bar, f, mu_k, x_k, partition[r_k])
        )
        total += w * (float(fast_term) - float(slow_term))
    return total


@dataclasses.dataclass(frozen=True)
class TwoScaleRow:
    """Summary line for one (epsilon, test function) cell."""

    epsilon: float
    fn_name: str
    fast_mean: float
    fast_se: float
    averaged_mean: float
    averaged_se: float
    diff: float
    diff_se: float


@dataclasses.dataclass(frozen=True)
class TwoScaleTable:
    """Distributional comparison of fast and averaged terminal statistics."""

    eps_values: Tuple[float, ...]
    fn_names: Tuple[str, ...]
    records: Tuple[dict, ...]
    summary: Tuple[TwoScaleRow, ...]

    def row(self, eps: float, fn_name: str) -> TwoScaleRow:
        for r in self.summary:
            if r.epsilon == eps and r.fn_name == fn_name:
                return r
        raise KeyError((eps, fn_name))


def _terminal_mean(
    traj: TrajectoryRecord, f: TestFunctionBundle, regime: int, t: float
) -> float:
    idx = traj.index_of_time(t)
    return float(np.mean(f.value(traj.positions[idx], regime)))


def two_scale_replica(
    cfg_fast: SimConfig,
    cfg_avg: SimConfig,
    q_eps: GeneratorMatrix,
    q_bar: GeneratorMatrix,
    partition: Sequence[int],
    initial_flat_state: int,
    test_functions: Sequence[TestFunctionBundle],
    master_seed: int,
    replica: int,
    epsilon: float,
) -> List[dict]:
    """Terminal statistics of one fast run and one averaged run.

    The two runs are statistically independent (separate seeded streams);
    the comparison is distributional, not pathwise.
    """
    from .harness import derive_seed

    horizon = cfg_fast.horizon
    init_block = int(partition[initial_flat_state])
    fast_traj, fast_path = simulate_with_chain(
        cfg_fast, q_eps, initial_flat_state,
        derive_seed(master_seed, replica, f"fast-eps{epsilon:g}"),
    )
    avg_traj, avg_path = simulate_with_chain(
        cfg_avg, q_bar, init_block,
        derive_seed(master_seed, replica, f"averaged-eps{epsilon:g}"),
    )
    fast_block = int(partition[fast_path.state_at(horizon)])
    avg_block = avg_path.state_at(horizon)
    rows = []
    for f in test_functions:
        rows.append(
            {
                "replica": replica,
                "epsilon": epsilon,
                "fn": f.name,
                "fast": _terminal_mean(fast_traj, f, fast_block, horizon),
                "averaged": _terminal_mean(avg_traj, f, avg_block, horizon),
            }
        )
    return rows


def two_scale_experiment(
    spec: TwoScaleSpec,
    model: CoefficientModel,
    *,
    n_particles: int,
    horizon: float,
    eps_values: Sequence[float],
    test_functions: Sequence[TestFunctionBundle],
    replicas: int,
    master_seed: int,
    initial: InitialCondition = InitialCondition(),
    initial_flat_state: int = 0,
    dt_max: float = 1e-3,
    averaged: Optional[CoefficientModel] = None,
) -> TwoScaleTable:
    """Compare fast-switching runs with averaged runs across epsilon.

    For each epsilon the fast chain uses the spec at that scale with step
    dt = min(dt_max, epsilon / 10), so the integrator always resolves the
    fast switching; the averaged partner uses the same step so discretized
    biases largely cancel in the comparison. Pass ``averaged`` to substitute
    a control model (e.g. sigma_averaged_control).
    """
    eps_values = tuple(float(e) for e in eps_values)
    if not eps_values or any(e <= 0 for e in eps_values):
        raise ValueError("eps_values must be positive")
    if any(b >= a for a, b in zip(eps_values, eps_values[1:])):
        raise ValueError("eps_values must be strictly decreasing")

    agg = aggregate(spec)
    avg_model = averaged if averaged is not None else average_coefficients(model, agg)
    partition = agg.partition
    q_bar = agg.q_bar

    records: List[dict] = []
    for eps in eps_values:
        dt_eps = min(dt_max, eps / 10.0)
        q_eps = build_fast_generator(dataclasses.replace(spec, epsilon=eps))
        cfg_fast = SimConfig(
            model, n_particles, horizon, dt_eps, initial, checkpoints=(horizon,)
        )
        cfg_avg = SimConfig(
            avg_model, n_particles, horizon, dt_eps, initial, checkpoints=(horizon,)
        )
        for r in range(replicas):
            records.extend(
                two_scale_replica(
                    cfg_fast, cfg_avg, q_eps, q_bar, partition,
                    initial_flat_state, test_functions, master_seed, r, eps,
                )
            )

    summary = []
    for eps in eps_values:
        for f in test_functions:
            cell = [
                row for row in records
                if row["epsilon"] == eps and row["fn"] == f.name
            ]
            fast = np.array([row["fast"] for row in cell])
            avg = np.array([row["averaged"] for row in cell])
            n = len(cell)
            fast_se = float(fast.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
            avg_se = float(avg.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
            summary.append(
                TwoScaleRow(
                    epsilon=eps,
                    fn_name=f.name,
                    fast_mean=float(fast.mean()),
                    fast_se=fast_se,
                    averaged_mean=float(avg.mean()),
                    averaged_se=avg_se,
                    diff=float(fast.mean() - avg.mean()),
                    diff_se=float(np.hypot(fast_se, avg_se)),
                )
            )
    return TwoScaleTable(
        eps_values=eps_values,
        fn_names=tuple(f.name for f in test_functions),
        records=tuple(records),
        summary=tuple(summary),
    )
