"""Law-of-large-numbers diagnostics for the particle system.

As N grows, the empirical measure of the particle system should track the
conditional law of a single representative particle given the switching
signal. That law solves a distribution-dependent (McKean-Vlasov) equation
with frozen randomness in the regime coordinate; at desk scale it is
approximated by a large-M particle run driven by the same regime
trajectory. This module builds such reference approximations, measures the
decay of the empirical-vs-reference distance in N, and evaluates the
martingale residual that quantifies how closely an empirical trajectory
follows the mean-field evolution equation.
"""

from __future__ import annotations

import dataclasses
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .chain import GeneratorMatrix, SwitchingPath, constant_path
from .dynamics import SimConfig, TrajectoryRecord, ParticleEnsemble, generator_apply, simulate
from .measure import (
    EmpiricalMeasure,
    TestFunctionBundle,
    bl_distance_approx,
    bl_distance_exact,
    SupportTooLarge,
    EXACT_CAP_DEFAULT,
)

__all__ = [
    "CheckpointMissing",
    "TimeNotOnGrid",
    "RefTooSmall",
    "MartingaleResidualReport",
    "LLNCurve",
    "REFERENCE_FLOOR",
    "conditional_law_reference",
    "frozen_regime_mckean_vlasov",
    "grid_intervals",
    "martingale_residual",
    "quadratic_variation_estimate",
    "lln_replica_distances",
    "lln_distance_curve",
]

REFERENCE_FLOOR = 1024
GRID_TOL = 1e-9


class CheckpointMissing(ValueError):
    """Trajectory was not recorded densely enough for quadrature."""


class TimeNotOnGrid(ValueError):
    """Requested time is not a recorded grid point."""


class RefTooSmall(ValueError):
    """Reference particle count is below the floor or below a compared N."""


def conditional_law_reference(
    config: SimConfig,
    path: SwitchingPath,
    rng: np.random.Generator,
    floor: int = REFERENCE_FLOOR,
) -> TrajectoryRecord:
    """Large-M surrogate for the conditional law given the regime trajectory.

    Runs the same particle scheme at M = config.n_particles, which must be
    at least ``floor``; the empirical measure of this run stands in for the
    mean-field limit along the supplied path.
    """
    if config.n_particles < floor:
        raise RefTooSmall(
            f"reference size {config.n_particles} is below the floor {floor}"
        )
    return simulate(config, path, rng)


def frozen_regime_mckean_vlasov(
    config: SimConfig,
    regime: int,
    rng: np.random.Generator,
    initial: Optional[ParticleEnsemble] = None,
) -> TrajectoryRecord:
    """Mean-field approximation with the regime frozen at a single state.

    Equivalent to driving the particle system along a constant switching
    trajectory; useful for validating against closed-form single-regime
    benchmarks and for restarting runs piecewise between regime changes.
    """
    return simulate(config, constant_path(regime, config.horizon), rng, initial)


def grid_intervals(
    traj: TrajectoryRecord,
    t: float,
    path: Optional[SwitchingPath] = None,
) -> Tuple[int, np.ndarray]:
    """Locate t on the recorded grid and validate the grid for quadrature.

    Returns (index of t, interval widths before t). Raises TimeNotOnGrid if
    t is not recorded, and CheckpointMissing if the recording is too sparse
    (gaps beyond the step size) or, when ``path`` is given, misses one of
    its jump times before t — left-endpoint quadrature needs every jump to
    be a grid point so no interval straddles a regime change.
    """
    idx = traj.index_of_time(t, tol=GRID_TOL)
    if idx is None:
        raise TimeNotOnGrid(f"t = {t} is not a recorded time")
    times = traj.times[: idx + 1]
    gaps = np.diff(times)
    if gaps.size and float(gaps.max()) > traj.dt * (1.0 + 1e-9) + 1e-12:
        raise CheckpointMissing(
            "recorded grid has gaps wider than dt; rerun with full recording"
        )
    if path is not None:
        jumps = path.jump_times[path.jump_times <= t + GRID_TOL]
        for tau in jumps:
            lo = np.searchsorted(times, tau - GRID_TOL)
            if lo >= times.size or abs(float(times[lo]) - float(tau)) > GRID_TOL:
                raise CheckpointMissing(f"jump time {tau} is not a grid point")
    return idx, gaps


@dataclasses.dataclass(frozen=True)
class MartingaleResidualReport:
    """Pieces of the mean-field evolution identity along one trajectory.

    value = bracket_term - drift_term - jump_term + compensator_term, where
    bracket_term is the increment of <measure, f(., regime)>, drift_term is
    the time integral of the averaged generator, jump_term sums the measure
    pairings across regime changes, and compensator_term is the predictable
    part of those pairings. ``pair_integrals`` resolves the jump and
    compensator totals by ordered regime pair. At t = 0 the value is exactly
    zero; the quadratic-variation estimate is nondecreasing in t.
    """

    fn_name: str
    time: float
    value: float
    bracket_term: float
    drift_term: float
    jump_term: float
    compensator_term: float
    pair_integrals: Dict[Tuple[int, int], Tuple[float, float]]
    quad_variation: float


def _mean_value(f: TestFunctionBundle, x: np.ndarray, regime: int) -> float:
    return float(np.mean(f.value(x, regime)))


def martingale_residual(
    traj: TrajectoryRecord,
    path: SwitchingPath,
    q: GeneratorMatrix,
    model,
    f: TestFunctionBundle,
    t: float,
) -> MartingaleResidualReport:
    """Evaluate the compensated evolution residual M_f(t) for one run.

    For the exact mean-field flow this residual vanishes; for an N-particle
    run it is a martingale whose fluctuations shrink like 1/sqrt(N). Time
    integrals use left-endpoint quadrature on the recorded grid with exact
    splits at regime jumps; the jump/compensator pieces pair the empirical
    measure with f across each regime change.
    """
    idx, gaps = grid_intervals(traj, t, path)

    x_end, x_start = traj.positions[idx], traj.positions[0]
    r_end, r_start = int(traj.regimes[idx]), int(traj.regimes[0])
    bracket = _mean_value(f, x_end, r_end) - _mean_value(f, x_start, r_start)

    drift_int = 0.0
    pair_comp: Dict[Tuple[int, int], float] = {}
    for k in range(idx):
        w = float(gaps[k])
        x_k = traj.positions[k]
        r_k = int(traj.regimes[k])
        mu_k = EmpiricalMeasure.uniform(x_k)
        drift_int += w * float(
            np.mean(generator_apply(model, q, f, mu_k, x_k, r_k))
        )
        f_here = None
        for j in range(q.m0):
            rate = float(q.rates[r_k, j])
            if j == r_k or rate == 0.0:
                continue
            if f_here is None:
                f_here = _mean_value(f, x_k, r_k)
            gap_val = _mean_value(f, x_k, j) - f_here
            pair_comp[(r_k, j)] = pair_comp.get((r_k, j), 0.0) + rate * w * gap_val

    pair_jump: Dict[Tuple[int, int], float] = {}
    jumps_before = path.jump_times[path.jump_times <= t + GRID_TOL]
    for n_jump, tau in enumerate(jumps_before):
        i0 = int(path.states[n_jump])
        j0 = int(path.states[n_jump + 1])
        k_tau = traj.index_of_time(float(tau), tol=GRID_TOL)
        x_tau = traj.positions[k_tau]
        pair_jump[(i0, j0)] = pair_jump.get((i0, j0), 0.0) + (
            _mean_value(f, x_tau, j0) - _mean_value(f, x_tau, i0)
        )

    pairs = sorted(set(pair_comp) | set(pair_jump))
    pair_integrals = {
        p: (pair_jump.get(p, 0.0), pair_comp.get(p, 0.0)) for p in pairs
    }
    jump_total = sum(v[0] for v in pair_integrals.values())
    comp_total = sum(v[1] for v in pair_integrals.values())
    value = bracket - drift_int - jump_total + comp_total
    qv = quadratic_variation_estimate(traj, model, f, t)
    return MartingaleResidualReport(
        fn_name=f.name,
        time=float(t),
        value=float(value),
        bracket_term=float(bracket),
        drift_term=float(drift_int),
        jump_term=float(jump_total),
        compensator_term=float(comp_total),
        pair_integrals=pair_integrals,
        quad_variation=float(qv),
    )


def quadratic_variation_estimate(
    traj: TrajectoryRecord, model, f: TestFunctionBundle, t: float
) -> float:
    """Grid estimate of the residual's quadratic variation at time t.

    (1/N) int_0^t <measure, (sigma sigma' grad f) . grad f> ds with
    left-endpoint quadrature; the 1/N prefactor reflects the averaging of N
    independent noises.
    """
    idx, gaps = grid_intervals(traj, t)
    n = traj.n
    total = 0.0
    for k in range(idx):
        x_k = traj.positions[k]
        r_k = int(traj.regimes[k])
        mu_k = EmpiricalMeasure.uniform(x_k)
        grad = f.gradient(x_k, r_k)
        sig = np.asarray(model.diffusion(x_k, mu_k, r_k), dtype=float)
        if sig.ndim == 2:
            a = sig @ sig.T
            quad = np.einsum("ni,ij,nj->n", grad, a, grad)
        else:
            a = np.einsum("nik,njk->nij", sig, sig)
            quad = np.einsum("ni,nij,nj->n", grad, a, grad)
        total += float(gaps[k]) * float(np.mean(quad))
    return total / n


@dataclasses.dataclass(frozen=True)
class LLNCurve:
    """Distance-to-reference decay across particle counts.

    ``distances`` has one row per replica and one column per N;
    ``exact`` marks which columns used the exact metric rather than the
    randomized lower bound; ``slope``/``slope_ci`` fit log mean distance
    against log N.
    """

    n_values: Tuple[int, ...]
    m_reference: int
    checkpoint: float
    replicas: int
    distances: np.ndarray  # (R, len(n_values))
    means: np.ndarray
    std_errors: np.ndarray
    exact: Tuple[bool, ...]
    slope: float
    slope_ci: Tuple[float, float]


def _bl_with_fallback(
    mu: EmpiricalMeasure,
    eta: EmpiricalMeasure,
    cap: Optional[int],
    approx_budget: int,
) -> Tuple[float, bool]:
    support = mu.n + eta.n
    if cap is None:
        cap = max(EXACT_CAP_DEFAULT, support + 8) if mu.dim == 1 else EXACT_CAP_DEFAULT
    try:
        return bl_distance_exact(mu, eta, cap=cap), True
    except SupportTooLarge:
        return bl_distance_approx(mu, eta, budget=approx_budget).value, False


def lln_replica_distances(
    config: SimConfig,
    q: GeneratorMatrix,
    initial_regime: int,
    n_values: Sequence[int],
    m_reference: int,
    t: float,
    master_seed: int,
    replica: int,
    bl_cap: Optional[int] = None,
    approx_budget: int = 4096,
) -> Tuple[np.ndarray, Tuple[bool, ...]]:
    """Distances to the reference for one replica (one shared chain draw).

    A single regime trajectory is sampled per replica and reused for the
    reference run and every compared N, so the comparison isolates the
    particle-count effect from the switching randomness.
    """
    from .chain import sample_path
    from .harness import derive_seed

    chain_rng = np.random.default_rng(derive_seed(master_seed, replica, "chain"))
    path = sample_path(q, initial_regime, config.horizon, chain_rng)

    ref_cfg = dataclasses.replace(
        config, n_particles=m_reference, checkpoints=(float(t),)
    )
    ref_rng = np.random.default_rng(derive_seed(master_seed, replica, "reference"))
    ref = conditional_law_reference(ref_cfg, path, ref_rng)
    eta = ref.measure_at(ref.index_of_time(t))

    out = np.empty(len(n_values))
    flags = []
    for col, n in enumerate(n_values):
        cfg_n = dataclasses.replace(config, n_particles=int(n), checkpoints=(float(t),))
        rng_n = np.random.default_rng(
            derive_seed(master_seed, replica, f"system-{int(n)}")
        )
        traj = simulate(cfg_n, path, rng_n)
        mu = traj.measure_at(traj.index_of_time(t))
        val, is_exact = _bl_with_fallback(mu, eta, bl_cap, approx_budget)
        out[col] = val
        flags.append(is_exact)
    return out, tuple(flags)


def lln_distance_curve(
    config: SimConfig,
    q: GeneratorMatrix,
    initial_regime: int,
    n_values: Sequence[int],
    m_reference: int,
    t: float,
    replicas: int,
    master_seed: int,
    bl_cap: Optional[int] = None,
    approx_budget: int = 4096,
) -> LLNCurve:
    """Mean distance to the reference at each N, with a log-log decay fit."""
    from .harness import fit_rate

    n_values = tuple(int(n) for n in n_values)
    if m_reference < REFERENCE_FLOOR:
        raise RefTooSmall(
            f"reference size {m_reference} is below the floor {REFERENCE_FLOOR}"
        )
    if any(n >= m_reference for n in n_values):
        raise RefTooSmall("every compared N must be smaller than the reference M")
    if not (0.0 < t <= config.horizon + 1e-12):
        raise TimeNotOnGrid(f"checkpoint {t} outside (0, horizon]")

    rows = np.empty((replicas, len(n_values)))
    flags: Tuple[bool, ...] = (True,) * len(n_values)
    for r in range(replicas):
        rows[r], flags = lln_replica_distances(
            config, q, initial_regime, n_values, m_reference, t,
            master_seed, r, bl_cap, approx_budget,
        )
    means = rows.mean(axis=0)
    ses = rows.std(axis=0, ddof=1) / np.sqrt(replicas) if replicas > 1 else np.zeros_like(means)
    fit = fit_rate(list(zip(n_values, means)))
    return LLNCurve(
        n_values=n_values,
        m_reference=int(m_reference),
        checkpoint=float(t),
        replicas=int(replicas),
        distances=rows,
        means=means,
        std_errors=ses,
        exact=flags,
        slope=fit.slope,
        slope_ci=fit.ci,
    )
