"""Continuous-time Markov chains on finite state spaces.

Covers generator validation, stationary distributions, exact (Gillespie)
path sampling, transition matrices via the matrix exponential, the
martingale decomposition of jump counts, and the two-time-scale machinery:
fast block generators, stationary aggregation to a slow generator, path
projection onto blocks, and occupation-time residuals.
"""

from __future__ import annotations

import csv
import dataclasses
from typing import Iterator, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import expm

ROW_SUM_TOL = 1e-12
RESIDUAL_TOL = 1e-10

__all__ = [
    "GeneratorMatrix",
    "SwitchingPath",
    "MartingaleDecomposition",
    "TwoScaleSpec",
    "AggregationResult",
    "NonSquare",
    "NegativeOffDiagonal",
    "NonFiniteEntry",
    "NotUnique",
    "TimeOutOfRange",
    "InvalidCombination",
    "UnknownState",
    "PathMismatch",
    "validate_generator",
    "stationary_distribution",
    "sample_path",
    "constant_path",
    "transition_matrix",
    "occupation_time",
    "martingale_decomposition",
    "build_fast_generator",
    "aggregate",
    "project_path",
    "occupation_residual",
    "path_to_csv",
    "path_from_csv",
]


class NonSquare(ValueError):
    """Rate matrix is not square."""


class NegativeOffDiagonal(ValueError):
    """An off-diagonal rate is negative."""

    def __init__(self, row: int, col: int, value: float):
        self.row, self.col, self.value = row, col, value
        super().__init__(f"rate[{row}, {col}] = {value} is negative")


class NonFiniteEntry(ValueError):
    """Rate matrix contains NaN or infinity."""


class NotUnique(ValueError):
    """The chain does not have a unique stationary distribution."""


class TimeOutOfRange(ValueError):
    """Requested time lies outside the path horizon."""


class InvalidCombination(ValueError):
    """Fast and slow parts combine into an invalid generator."""


class UnknownState(ValueError):
    """Path visits a state the partition does not cover."""


class PathMismatch(ValueError):
    """Aggregated path is not the block projection of the fast path."""


def _readonly(a: np.ndarray, dtype=float) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=dtype)
    a.flags.writeable = False
    return a


@dataclasses.dataclass(frozen=True)
class GeneratorMatrix:
    """Validated generator: nonnegative off-diagonal, rows summing to zero.

    Construct through :func:`validate_generator`, which recomputes the
    diagonal as minus the off-diagonal row sum so stored rows sum to zero
    exactly up to rounding.
    """

    rates: np.ndarray

    @property
    def m0(self) -> int:
        return self.rates.shape[0]

    @property
    def exit_rates(self) -> np.ndarray:
        return -np.diag(self.rates)


def validate_generator(rates) -> GeneratorMatrix:
    """Check generator shape and signs; normalize the diagonal.

    Raises NonSquare, NonFiniteEntry, or NegativeOffDiagonal (reporting the
    first offending entry in row-major order).
    """
    arr = np.array(rates, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] < 1:
        raise NonSquare(f"rate matrix must be square, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise NonFiniteEntry("rate matrix contains non-finite entries")
    off = arr.copy()
    np.fill_diagonal(off, 0.0)
    if (off < 0).any():
        i, j = np.argwhere(off < 0)[0]
        raise NegativeOffDiagonal(int(i), int(j), float(arr[i, j]))
    np.fill_diagonal(off, -off.sum(axis=1))
    return GeneratorMatrix(_readonly(off))


def stationary_distribution(q: GeneratorMatrix) -> np.ndarray:
    """Unique probability vector nu with nu' Q = 0, or NotUnique.

    Uniqueness is decided by the rank of Q (SVD): the nullspace of Q' must be
    one-dimensional. The vector itself comes from the least-squares solution
    of Q' nu = 0 augmented with the normalization row.
    """
    m = q.m0
    a = q.rates.T
    s = np.linalg.svd(a, compute_uv=False)
    tol = m * np.finfo(float).eps * (float(s[0]) if s[0] > 0 else 1.0)
    null_dim = int(np.sum(s <= tol))
    if null_dim > 1:
        raise NotUnique(
            f"stationary distribution is not unique (nullspace dimension {null_dim})"
        )
    aug = np.vstack([a, np.ones((1, m))])
    b = np.zeros(m + 1)
    b[-1] = 1.0
    nu, *_ = np.linalg.lstsq(aug, b, rcond=None)
    nu = np.clip(nu, 0.0, None)
    total = float(nu.sum())
    if total <= 0:
        raise NotUnique("stationary solve degenerated")
    nu = nu / total
    if float(np.abs(nu @ q.rates).max()) > RESIDUAL_TOL:
        raise ArithmeticError("stationary residual exceeds tolerance")
    return nu


@dataclasses.dataclass(frozen=True)
class SwitchingPath:
    """Cadlag piecewise-constant trajectory of the switching chain.

    ``jump_times`` are strictly increasing in (0, horizon]; ``states`` has
    one more entry than ``jump_times`` (the value on each inter-jump
    interval, starting with the initial state) and consecutive states
    differ.
    """

    horizon: float
    jump_times: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.jump_times, dtype=float)
        s = np.asarray(self.states, dtype=np.int64)
        if not (np.isfinite(self.horizon) and self.horizon > 0):
            raise ValueError("horizon must be positive and finite")
        if t.ndim != 1 or s.ndim != 1 or s.shape[0] != t.shape[0] + 1:
            raise ValueError("states must have one more entry than jump_times")
        if t.size and (t[0] <= 0.0 or t[-1] > self.horizon or (np.diff(t) <= 0).any()):
            raise ValueError("jump times must be strictly increasing in (0, horizon]")
        if (s[1:] == s[:-1]).any():
            raise ValueError("consecutive states must differ")
        object.__setattr__(self, "jump_times", _readonly(t))
        object.__setattr__(self, "states", _readonly(s, dtype=np.int64))

    @property
    def initial_state(self) -> int:
        return int(self.states[0])

    def state_at(self, t: float) -> int:
        """Right-continuous value at time t in [0, horizon]."""
        if not (-1e-12 <= t <= self.horizon + 1e-12):
            raise TimeOutOfRange(f"t = {t} outside [0, {self.horizon}]")
        return int(self.states[np.searchsorted(self.jump_times, t, side="right")])

    def states_at(self, times: np.ndarray) -> np.ndarray:
        times = np.asarray(times, dtype=float)
        return self.states[np.searchsorted(self.jump_times, times, side="right")]

    def segments(self, upto: Optional[float] = None) -> Iterator[Tuple[float, float, int]]:
        """Yield (start, end, state) over the partition of [0, upto)."""
        end = self.horizon if upto is None else float(upto)
        if not (0.0 <= end <= self.horizon + 1e-12):
            raise TimeOutOfRange(f"t = {end} outside [0, {self.horizon}]")
        t0 = 0.0
        for tn, state in zip(self.jump_times, self.states[:-1]):
            t1 = min(float(tn), end)
            if t1 > t0:
                yield t0, t1, int(state)
            if tn >= end:
                return
            t0 = float(tn)
        if end > t0:
            yield t0, end, int(self.states[-1])


def _path_trusted(
    horizon: float, jump_times: np.ndarray, states: np.ndarray
) -> SwitchingPath:
    """Constructor for samplers whose output is valid by construction;
    skips the re-validation in ``SwitchingPath.__post_init__``."""
    path = object.__new__(SwitchingPath)
    object.__setattr__(path, "horizon", horizon)
    object.__setattr__(path, "jump_times", _readonly(jump_times))
    object.__setattr__(path, "states", _readonly(states, dtype=np.int64))
    return path


def sample_path(
    q: GeneratorMatrix, initial: int, horizon: float, rng: np.random.Generator
) -> SwitchingPath:
    """Exact chain trajectory on [0, horizon] by the Gillespie scheme.

    Repeatedly draw an exponential holding time at rate -q_ii, then pick the
    next state with probability proportional to the off-diagonal rates.
    States with zero exit rate hold forever.
    """
    rates = q.rates
    m = q.m0
    if not (0 <= initial < m):
        raise UnknownState(f"initial state {initial} outside 0..{m - 1}")
    # Per-state jump distributions, normalized exactly as rng.choice(m, p=...)
    # normalizes them, so one uniform draw per jump reproduces its stream.
    holds = np.empty(m)
    cdfs: list = [None] * m
    for i in range(m):
        exit_rate = -rates[i, i]
        if exit_rate > 0.0:
            holds[i] = 1.0 / exit_rate
            p = rates[i].copy()
            p[i] = 0.0
            p /= exit_rate
            cdf = p.cumsum()
            cdf /= cdf[-1]
            cdfs[i] = cdf
    times: list = []
    states = [int(initial)]
    t, cur = 0.0, int(initial)
    last = m - 1
    while True:
        cdf = cdfs[cur]
        if cdf is None:
            break
        t += rng.exponential(holds[cur])
        if t > horizon:
            break
        nxt = int(cdf.searchsorted(rng.random(), side="right"))
        cur = nxt if nxt < last else last
        times.append(t)
        states.append(cur)
    return _path_trusted(float(horizon), np.array(times), np.array(states))


def constant_path(state: int, horizon: float) -> SwitchingPath:
    """Path frozen at one state for the whole horizon (no jumps)."""
    return SwitchingPath(float(horizon), np.array([]), np.array([int(state)]))


def transition_matrix(q: GeneratorMatrix, t: float) -> np.ndarray:
    """P(t) = exp(Q t), row-stochastic within 1e-10."""
    if t < 0:
        raise TimeOutOfRange("transition matrices need t >= 0")
    p = expm(q.rates * t)
    if float(np.abs(p.sum(axis=1) - 1.0).max()) > RESIDUAL_TOL:
        raise ArithmeticError("matrix exponential rows drifted from 1")
    return p


def occupation_time(path: SwitchingPath, state: int, t: float) -> float:
    """Lebesgue measure of {s in [0, t) : path(s) = state}."""
    return sum(t1 - t0 for t0, t1, s in path.segments(t) if s == state)


@dataclasses.dataclass(frozen=True)
class MartingaleDecomposition:
    """Snapshot at one time of the jump-count martingale for a state pair.

    ``optional_variation`` counts jumps i0 -> j0 in (0, t];
    ``predictable_variation`` is q_{i0 j0} times the occupation time of i0
    on [0, t); ``martingale`` is their difference.
    """

    pair: Tuple[int, int]
    time: float
    optional_variation: float
    predictable_variation: float
    martingale: float


def martingale_decomposition(
    path: SwitchingPath, q: GeneratorMatrix, pair: Tuple[int, int], t: float
) -> MartingaleDecomposition:
    """Evaluate the compensated jump count for one ordered state pair."""
    if not (0.0 <= t <= path.horizon + 1e-12):
        raise TimeOutOfRange(f"t = {t} outside [0, {path.horizon}]")
    i0, j0 = int(pair[0]), int(pair[1])
    if i0 == j0:
        return MartingaleDecomposition((i0, j0), t, 0.0, 0.0, 0.0)
    mask = path.jump_times <= t
    jumps = int(
        np.sum((path.states[:-1][mask] == i0) & (path.states[1:][mask] == j0))
    )
    compensator = float(q.rates[i0, j0]) * occupation_time(path, i0, t)
    return MartingaleDecomposition(
        (i0, j0), t, float(jumps), compensator, float(jumps) - compensator
    )


# ---------------------------------------------------------------------------
# Two time scales: fast block structure and stationary aggregation
# ---------------------------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class TwoScaleSpec:
    """Fast-slow chain specification.

    ``blocks`` are the within-block generators of the fast motion; ``slow``
    is a generator-shaped matrix on the full flat state space coupling the
    blocks; ``epsilon`` is the time-scale ratio. Flat states enumerate the
    blocks in order: block i occupies a contiguous index range.
    """

    blocks: Tuple[GeneratorMatrix, ...]
    slow: np.ndarray
    epsilon: float

    def __post_init__(self):
        blocks = tuple(self.blocks)
        if not blocks:
            raise ValueError("at least one block is required")
        if not all(isinstance(b, GeneratorMatrix) for b in blocks):
            raise TypeError("blocks must be GeneratorMatrix instances")
        m0 = sum(b.m0 for b in blocks)
        slow = np.asarray(self.slow, dtype=float)
        if slow.shape != (m0, m0):
            raise ValueError(f"slow part must be {m0}x{m0}, got {slow.shape}")
        if not np.isfinite(slow).all():
            raise NonFiniteEntry("slow part contains non-finite entries")
        if float(np.abs(slow.sum(axis=1)).max()) > ROW_SUM_TOL:
            raise ValueError("slow part rows must sum to zero")
        if not (np.isfinite(self.epsilon) and self.epsilon > 0):
            raise ValueError("epsilon must be positive")
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "slow", _readonly(slow))

    @property
    def num_blocks(self) -> int:
        return len(self.blocks)

    @property
    def block_sizes(self) -> Tuple[int, ...]:
        return tuple(b.m0 for b in self.blocks)

    @property
    def m0(self) -> int:
        return sum(self.block_sizes)

    @property
    def offsets(self) -> Tuple[int, ...]:
        sizes = self.block_sizes
        return tuple(int(v) for v in np.concatenate([[0], np.cumsum(sizes)[:-1]]))

    def flat_index(self, block: int, within: int) -> int:
        return self.offsets[block] + within

    def block_of(self, flat: int) -> int:
        if not (0 <= flat < self.m0):
            raise UnknownState(f"flat state {flat} outside 0..{self.m0 - 1}")
        return int(np.searchsorted(np.array(self.offsets), flat, side="right") - 1)

    @property
    def partition(self) -> Tuple[int, ...]:
        """Block label of each flat state."""
        return tuple(
            i for i, size in enumerate(self.block_sizes) for _ in range(size)
        )


def build_fast_generator(spec: TwoScaleSpec) -> GeneratorMatrix:
    """Assemble Q = (block-diagonal fast part) / epsilon + slow part.

    Raises InvalidCombination if the sum has a genuinely negative
    off-diagonal entry (the slow part may freely subtract rate wherever the
    fast part supplies enough).
    """
    m0 = spec.m0
    fast = np.zeros((m0, m0))
    for off, b in zip(spec.offsets, spec.blocks):
        fast[off : off + b.m0, off : off + b.m0] = b.rates
    total = fast / spec.epsilon + spec.slow
    off_diag = total.copy()
    np.fill_diagonal(off_diag, 0.0)
    if (off_diag < -ROW_SUM_TOL).any():
        i, j = np.argwhere(off_diag < -ROW_SUM_TOL)[0]
        raise InvalidCombination(
            f"combined rate[{i}, {j}] = {total[i, j]} is negative"
        )
    np.clip(off_diag, 0.0, None, out=off_diag)
    np.fill_diagonal(off_diag, np.diag(total))
    return validate_generator(off_diag)


@dataclasses.dataclass(frozen=True)
class AggregationResult:
    """Stationary aggregation of a fast-slow chain.

    ``nus`` holds the stationary distribution of each block generator;
    ``nu_tilde`` is the block-diagonal matrix of those rows (num_blocks x
    m0); ``q_bar`` = nu_tilde @ slow @ indicator is the aggregated slow
    generator on block labels.
    """

    nus: Tuple[np.ndarray, ...]
    nu_tilde: np.ndarray
    q_bar: GeneratorMatrix

    @property
    def num_blocks(self) -> int:
        return len(self.nus)

    @property
    def block_sizes(self) -> Tuple[int, ...]:
        return tuple(len(nu) for nu in self.nus)

    @property
    def offsets(self) -> Tuple[int, ...]:
        sizes = self.block_sizes
        return tuple(int(v) for v in np.concatenate([[0], np.cumsum(sizes)[:-1]]))

    @property
    def partition(self) -> Tuple[int, ...]:
        return tuple(
            i for i, size in enumerate(self.block_sizes) for _ in range(size)
        )

    def stationary_weight(self, flat: int) -> float:
        """nu_{i j} for flat state (i, j): weight within its block."""
        part = self.partition
        if not (0 <= flat < len(part)):
            raise UnknownState(f"flat state {flat} outside 0..{len(part) - 1}")
        block = part[flat]
        return float(self.nus[block][flat - self.offsets[block]])


def aggregate(spec: TwoScaleSpec) -> AggregationResult:
    """Average the slow part against the block stationary distributions.

    Each block must have a unique stationary distribution (NotUnique
    propagates otherwise). The result Q_bar is itself a valid generator.
    """
    nus = tuple(stationary_distribution(b) for b in spec.blocks)
    l, m0 = spec.num_blocks, spec.m0
    nu_tilde = np.zeros((l, m0))
    indicator = np.zeros((m0, l))
    for i, (off, nu) in enumerate(zip(spec.offsets, nus)):
        nu_tilde[i, off : off + len(nu)] = nu
        indicator[off : off + len(nu), i] = 1.0
    q_bar_raw = nu_tilde @ spec.slow @ indicator
    cleaned = q_bar_raw.copy()
    off_mask = ~np.eye(l, dtype=bool)
    dust = off_mask & (cleaned < 0.0) & (cleaned >= -ROW_SUM_TOL)
    cleaned[dust] = 0.0
    q_bar = validate_generator(cleaned)
    return AggregationResult(nus, _readonly(nu_tilde), q_bar)


def project_path(
    path: SwitchingPath, partition: Union[TwoScaleSpec, AggregationResult, Sequence]
) -> SwitchingPath:
    """Map a flat-state path to block labels, merging jumps within a block.

    ``partition`` may be a TwoScaleSpec, an AggregationResult, or an
    explicit sequence assigning each flat state its block (either plain
    labels or (block, within) tuples). Raises UnknownState if the path
    leaves the covered range.
    """
    if isinstance(partition, (TwoScaleSpec, AggregationResult)):
        labels = partition.partition
    else:
        labels = tuple(
            int(p[0]) if isinstance(p, (tuple, list, np.ndarray)) else int(p)
            for p in partition
        )
    lookup = np.asarray(labels, dtype=np.int64)
    if path.states.min() < 0 or path.states.max() >= lookup.shape[0]:
        bad = int(path.states[(path.states < 0) | (path.states >= lookup.shape[0])][0])
        raise UnknownState(f"path state {bad} is not covered by the partition")
    mapped = lookup[path.states]
    keep = mapped[1:] != mapped[:-1]
    return SwitchingPath(
        path.horizon, path.jump_times[keep], np.concatenate([[mapped[0]], mapped[1:][keep]])
    )


def occupation_residual(
    fast_path: SwitchingPath,
    aggregated_path: SwitchingPath,
    aggregation: AggregationResult,
    flat_state: int,
    t: float,
) -> float:
    """Residual between fast occupation and its averaged prediction.

    integral over [0, t) of [ 1{fast = flat_state}
                              - nu_weight * 1{aggregated = block(flat_state)} ] ds,
    computed exactly from the jump lists. ``aggregated_path`` must equal the
    block projection of ``fast_path`` (PathMismatch otherwise).
    """
    projected = project_path(fast_path, aggregation)
    if (
        aggregated_path.horizon != projected.horizon
        or not np.array_equal(aggregated_path.jump_times, projected.jump_times)
        or not np.array_equal(aggregated_path.states, projected.states)
    ):
        raise PathMismatch("aggregated path is not the projection of the fast path")
    if not (0.0 <= t <= fast_path.horizon + 1e-12):
        raise TimeOutOfRange(f"t = {t} outside [0, {fast_path.horizon}]")
    part = aggregation.partition
    if not (0 <= flat_state < len(part)):
        raise UnknownState(f"flat state {flat_state} outside 0..{len(part) - 1}")
    block = part[flat_state]
    weight = aggregation.stationary_weight(flat_state)
    occ_fast = occupation_time(fast_path, flat_state, t)
    occ_block = occupation_time(aggregated_path, block, t)
    return occ_fast - weight * occ_block


# ---------------------------------------------------------------------------
# CSV round trip (rows: time, state; first row is the initial state at 0)
# ---------------------------------------------------------------------------


def path_to_csv(path: SwitchingPath, path_or_file) -> None:
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w", newline="", encoding="utf-8") if own else path_or_file
    try:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(["jump_time", "state"])
        writer.writerow([repr(0.0), int(path.states[0])])
        for tn, s in zip(path.jump_times, path.states[1:]):
            writer.writerow([repr(float(tn)), int(s)])
        writer.writerow([repr(float(path.horizon)), "horizon"])
    finally:
        if own:
            fh.close()


def path_from_csv(path_or_file) -> SwitchingPath:
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "r", newline="", encoding="utf-8") if own else path_or_file
    try:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:2] != ["jump_time", "state"]:
            raise ValueError("path CSV must have jump_time,state columns")
        rows = [row for row in reader if row]
    finally:
        if own:
            fh.close()
    if not rows or rows[-1][1] != "horizon":
        raise ValueError("path CSV must end with a horizon row")
    horizon = float(rows[-1][0])
    body = rows[:-1]
    times = [float(r[0]) for r in body[1:]]
    states = [int(r[1]) for r in body]
    return SwitchingPath(horizon, np.array(times), np.array(states))
