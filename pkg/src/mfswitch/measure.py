"""Finitely supported probability measures and metrics between them.

Measures are weighted atom sets in R^d. The central metric is the
bounded-Lipschitz distance

    ||mu - eta||_BL = sup { |<mu - eta, f>| : ||f||_inf <= 1, Lip(f) <= 1 },

with the sup-norm and Lipschitz conditions imposed separately. On finite
supports the sup is attained by a function determined by its values on the
combined support (any admissible assignment extends to R^d by the
McShane-Whitney construction), so the distance is the value of a finite
linear program. A 1-d Wasserstein-1 upper bound and a randomized lower bound
are provided as cross-checks and large-support fallbacks.
"""

from __future__ import annotations

import csv
import dataclasses
from typing import Callable, Sequence

import numpy as np
from scipy import sparse
from scipy.optimize import linprog
from scipy.spatial import cKDTree

WEIGHT_TOL = 1e-12
EXACT_CAP_DEFAULT = 2048

__all__ = [
    "EmpiricalMeasure",
    "TestFunctionBundle",
    "BLLowerBound",
    "NonFiniteValue",
    "SupportTooLarge",
    "SolverStall",
    "DimensionNotOne",
    "integrate",
    "moment",
    "bl_distance_exact",
    "bl_distance_approx",
    "wasserstein1_1d",
    "product_metric_d",
    "measure_to_csv",
    "measure_from_csv",
    "coordinate_sum",
    "squared_norm",
    "bump",
    "regime_scaled",
]


class NonFiniteValue(ValueError):
    """A function evaluation produced NaN or infinity on an atom."""


class SupportTooLarge(ValueError):
    """Combined support exceeds the exact-solver cap; use bl_distance_approx."""


class SolverStall(RuntimeError):
    """The LP solver failed to certify optimality."""


class DimensionNotOne(ValueError):
    """Operation requires measures on the real line."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.flags.writeable = False
    return a


def _uniform_trusted(points: np.ndarray, weights: np.ndarray) -> EmpiricalMeasure:
    """Constructor for integration hot paths.

    The caller guarantees ``points`` is a finite (n, d) float array that is
    never mutated afterwards and ``weights`` the matching uniform vector, so
    the validating copies of ``__post_init__`` are skipped.
    """
    mu = object.__new__(EmpiricalMeasure)
    object.__setattr__(mu, "atoms", points)
    object.__setattr__(mu, "weights", weights)
    return mu


@dataclasses.dataclass(frozen=True)
class EmpiricalMeasure:
    """Probability measure with finite support: n atoms in R^d with weights."""

    atoms: np.ndarray  # (n, d)
    weights: np.ndarray  # (n,)

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=float)
        if atoms.ndim == 1:
            atoms = atoms[:, None]
        if atoms.ndim != 2 or atoms.shape[0] < 1:
            raise ValueError("atoms must be a nonempty (n, d) array")
        weights = np.asarray(self.weights, dtype=float)
        if weights.shape != (atoms.shape[0],):
            raise ValueError("weights must match the number of atoms")
        if not np.isfinite(atoms).all():
            raise ValueError("atom coordinates must be finite")
        if not np.isfinite(weights).all() or (weights < 0).any():
            raise ValueError("weights must be finite and nonnegative")
        if abs(float(weights.sum()) - 1.0) > WEIGHT_TOL:
            raise ValueError("weights must sum to 1 within %.0e" % WEIGHT_TOL)
        object.__setattr__(self, "atoms", _readonly(atoms))
        object.__setattr__(self, "weights", _readonly(weights))

    @classmethod
    def uniform(cls, points: np.ndarray) -> "EmpiricalMeasure":
        """Uniform measure (1/n)*sum_j delta_{x_j}; weights are exactly 1/n."""
        points = np.asarray(points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        n = points.shape[0]
        return cls(points, np.full(n, 1.0 / n))

    @property
    def n(self) -> int:
        return self.atoms.shape[0]

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    def mean(self) -> np.ndarray:
        return self.weights @ self.atoms

    def merged(self) -> "EmpiricalMeasure":
        """Same measure with exactly-duplicate atoms merged (weights summed)."""
        pts, inv = np.unique(self.atoms, axis=0, return_inverse=True)
        w = np.bincount(inv.ravel(), weights=self.weights, minlength=pts.shape[0])
        return EmpiricalMeasure(pts, w)


def integrate(mu: EmpiricalMeasure, f: Callable) -> float:
    """<mu, f> = sum_k w_k f(x_k) for a scalar function on R^d.

    Accepts either a vectorized f taking an (n, d) array or a pointwise f
    taking a single (d,) point.
    """
    try:
        vals = np.asarray(f(mu.atoms), dtype=float)
        if vals.shape != (mu.n,):
            raise TypeError
    except (TypeError, ValueError, IndexError):
        vals = np.array([float(f(x)) for x in mu.atoms])
    if not np.isfinite(vals).all():
        raise NonFiniteValue("test function is not finite on the support")
    return float(mu.weights @ vals)


def moment(mu: EmpiricalMeasure, kind: str) -> float:
    """First or second absolute moment: <mu, |x|> ('phi') or <mu, |x|^2> ('psi')."""
    norms = np.linalg.norm(mu.atoms, axis=1)
    if kind == "phi":
        return float(mu.weights @ norms)
    if kind == "psi":
        return float(mu.weights @ norms**2)
    raise ValueError("kind must be 'phi' or 'psi'")


# ---------------------------------------------------------------------------
# Bounded-Lipschitz distance
# ---------------------------------------------------------------------------


def _combined_support(mu: EmpiricalMeasure, eta: EmpiricalMeasure):
    """Merged combined support with signed weight differences.

    Points come out in lexicographic order (np.unique), and the sign of the
    first nonzero difference is normalized so that (mu, eta) and (eta, mu)
    produce the identical LP instance — symmetry of the distance is then
    exact, not just up to solver noise.
    """
    if mu.dim != eta.dim:
        raise ValueError("measures must live in the same dimension")
    pts = np.vstack([mu.atoms, eta.atoms])
    upts, inv = np.unique(pts, axis=0, return_inverse=True)
    inv = inv.ravel()
    # Accumulate each side separately so the merge is order-independent:
    # fl(a - b) == -fl(b - a) makes the swapped call produce the exact
    # negation, which the sign normalization below maps to the same vector.
    from_mu = np.bincount(inv[: mu.n], weights=mu.weights, minlength=upts.shape[0])
    from_eta = np.bincount(inv[mu.n :], weights=eta.weights, minlength=upts.shape[0])
    c = from_mu - from_eta
    keep = c != 0.0
    upts, c = upts[keep], c[keep]
    for ck in c:
        if ck != 0.0:
            if ck < 0.0:
                c = -c
            break
    return upts, c


def _pair_rows(pairs_k, pairs_l, n):
    """Sparse rows encoding f_k - f_l <= d and f_l - f_k <= d for each pair."""
    m = len(pairs_k)
    rows = np.repeat(np.arange(2 * m), 2)
    cols = np.empty(4 * m, dtype=int)
    data = np.empty(4 * m)
    cols[0::4], cols[1::4] = pairs_k, pairs_l
    cols[2::4], cols[3::4] = pairs_k, pairs_l
    data[0::4], data[1::4] = 1.0, -1.0
    data[2::4], data[3::4] = -1.0, 1.0
    return sparse.csr_matrix((data, (rows, cols)), shape=(2 * m, n))


def _solve_bl_lp(points: np.ndarray, c: np.ndarray) -> float:
    """Maximize c'f over |f_k| <= 1, |f_k - f_l| <= |x_k - x_l|.

    In d = 1 the pair constraints between sorted neighbours imply all the
    others (distances add up along the line), so only adjacent pairs are
    posed. In d >= 2 a full pairwise set is posed for small supports and
    violated pairs are added lazily from a nearest-neighbour seed otherwise.
    """
    n = points.shape[0]
    if n <= 1:
        return 0.0
    d = points.shape[1]

    if d == 1:
        order = np.argsort(points[:, 0], kind="stable")
        pk, pl = order[:-1], order[1:]
        dist = points[pl, 0] - points[pk, 0]
        a_ub = _pair_rows(pk, pl, n)
        b_ub = np.repeat(dist, 2)
        res = linprog(-c, A_ub=a_ub, b_ub=b_ub, bounds=(-1.0, 1.0), method="highs")
        if not res.success:
            raise SolverStall(f"LP did not reach optimality: {res.message}")
        return float(-res.fun)

    if n <= 400:
        pk, pl = np.triu_indices(n, k=1)
        dist = np.linalg.norm(points[pk] - points[pl], axis=1)
        a_ub = _pair_rows(pk, pl, n)
        b_ub = np.repeat(dist, 2)
        res = linprog(-c, A_ub=a_ub, b_ub=b_ub, bounds=(-1.0, 1.0), method="highs")
        if not res.success:
            raise SolverStall(f"LP did not reach optimality: {res.message}")
        return float(-res.fun)

    # Lazy constraint generation for large supports.
    k_nn = min(n - 1, 8)
    tree = cKDTree(points)
    _, nn = tree.query(points, k=k_nn + 1)
    pk = np.repeat(np.arange(n), k_nn)
    pl = nn[:, 1:].ravel()
    lo, hi = np.minimum(pk, pl), np.maximum(pk, pl)
    active = set(zip(lo.tolist(), hi.tolist()))

    for _ in range(60):
        pk = np.fromiter((p[0] for p in active), dtype=int, count=len(active))
        pl = np.fromiter((p[1] for p in active), dtype=int, count=len(active))
        dist = np.linalg.norm(points[pk] - points[pl], axis=1)
        a_ub = _pair_rows(pk, pl, n)
        b_ub = np.repeat(dist, 2)
        res = linprog(-c, A_ub=a_ub, b_ub=b_ub, bounds=(-1.0, 1.0), method="highs")
        if not res.success:
            raise SolverStall(f"LP did not reach optimality: {res.message}")
        f = res.x
        # Scan all pairs (chunked) for violated Lipschitz constraints.
        violated = []
        chunk = max(1, 2_000_000 // max(n, 1))
        for start in range(0, n, chunk):
            stop = min(start + chunk, n)
            diff = np.abs(f[start:stop, None] - f[None, :])
            dmat = np.linalg.norm(
                points[start:stop, None, :] - points[None, :, :], axis=2
            )
            bad = np.argwhere(diff > dmat + 1e-9)
            for i, j in bad:
                k, l = start + int(i), int(j)
                if k != l:
                    violated.append((min(k, l), max(k, l)))
        new = set(violated) - active
        if not new:
            return float(-res.fun)
        active |= new
    raise SolverStall("lazy constraint loop did not converge")


def bl_distance_exact(
    mu: EmpiricalMeasure, eta: EmpiricalMeasure, cap: int = EXACT_CAP_DEFAULT
) -> float:
    """Exact bounded-Lipschitz distance between finitely supported measures.

    Solved as a finite LP on the merged combined support: variables f_k, one
    per support point; objective sum_k c_k f_k with c the signed weight
    difference; constraints -1 <= f_k <= 1 and |f_k - f_l| <= |x_k - x_l|
    (Euclidean). The value always lies in [0, 2].

    Raises SupportTooLarge when the combined support exceeds ``cap``.
    """
    points, c = _combined_support(mu, eta)
    n = points.shape[0]
    if n == 0:
        return 0.0
    if n > cap:
        raise SupportTooLarge(
            f"combined support {n} exceeds exact cap {cap}; "
            "use bl_distance_approx or raise the cap"
        )
    val = _solve_bl_lp(points, c)
    return float(min(max(val, 0.0), 2.0))


@dataclasses.dataclass(frozen=True)
class BLLowerBound:
    """Certified lower bound for the BL distance from a ridge test function.

    The achieving function is f(x) = clip(slope * (direction . x - offset),
    -1, 1), which has sup-norm <= 1 and Lipschitz constant |slope| <= 1, so
    ``value`` is a true lower bound for any admissible budget.
    """

    value: float
    direction: np.ndarray
    offset: float
    slope: float


def bl_distance_approx(
    mu: EmpiricalMeasure, eta: EmpiricalMeasure, budget: int, seed: int = 0
) -> BLLowerBound:
    """Randomized lower bound: best of ``budget`` random ridge functions.

    Candidates are drawn from a fixed seeded stream, so the candidate family
    is nested in the budget: a larger budget never yields a smaller value.
    """
    if mu.dim != eta.dim:
        raise ValueError("measures must live in the same dimension")
    d = mu.dim
    rng = np.random.default_rng(seed)
    proj_all = np.concatenate([mu.atoms @ np.ones(d), eta.atoms @ np.ones(d)])
    span = max(1.0, float(np.abs(proj_all).max()))
    best = BLLowerBound(0.0, np.zeros(d), 0.0, 0.0)
    for _ in range(max(0, int(budget))):
        u = rng.standard_normal(d)
        norm = np.linalg.norm(u)
        u = u / norm if norm > 0 else np.eye(d)[0]
        slope = float(rng.uniform(-1.0, 1.0))
        offset = float(rng.uniform(-span, span))
        f_mu = np.clip(slope * (mu.atoms @ u - offset), -1.0, 1.0)
        f_eta = np.clip(slope * (eta.atoms @ u - offset), -1.0, 1.0)
        val = abs(float(mu.weights @ f_mu) - float(eta.weights @ f_eta))
        if val > best.value:
            best = BLLowerBound(val, u, offset, slope)
    return best


def wasserstein1_1d(mu: EmpiricalMeasure, eta: EmpiricalMeasure) -> float:
    """Exact Wasserstein-1 distance on the line: integral of |F_mu - F_eta|."""
    if mu.dim != 1 or eta.dim != 1:
        raise DimensionNotOne("wasserstein1_1d requires d = 1")
    grid = np.union1d(mu.atoms[:, 0], eta.atoms[:, 0])

    def cdf_on(measure: EmpiricalMeasure) -> np.ndarray:
        order = np.argsort(measure.atoms[:, 0], kind="stable")
        xs = measure.atoms[order, 0]
        cw = np.concatenate([[0.0], np.cumsum(measure.weights[order])])
        return cw[np.searchsorted(xs, grid, side="right")]

    f_mu, f_eta = cdf_on(mu), cdf_on(eta)
    return float(np.sum(np.abs(f_mu - f_eta)[:-1] * np.diff(grid)))


def product_metric_d(a, b, cap: int = EXACT_CAP_DEFAULT) -> float:
    """Metric on (measure, regime) pairs: BL distance plus 0/1 on regimes."""
    (mu, i0), (eta, j0) = a, b
    return bl_distance_exact(mu, eta, cap=cap) + (0.0 if i0 == j0 else 1.0)


# ---------------------------------------------------------------------------
# CSV round trip (one row per atom: weight, x1..xd)
# ---------------------------------------------------------------------------


def measure_to_csv(mu: EmpiricalMeasure, path_or_file) -> None:
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w", newline="", encoding="utf-8") if own else path_or_file
    try:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(["weight"] + [f"x{i + 1}" for i in range(mu.dim)])
        for w, x in zip(mu.weights, mu.atoms):
            writer.writerow([repr(float(w))] + [repr(float(c)) for c in x])
    finally:
        if own:
            fh.close()


def measure_from_csv(path_or_file) -> EmpiricalMeasure:
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "r", newline="", encoding="utf-8") if own else path_or_file
    try:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[0] != "weight":
            raise ValueError("measure CSV must start with a 'weight' column")
        weights, atoms = [], []
        for row in reader:
            if not row:
                continue
            weights.append(float(row[0]))
            atoms.append([float(v) for v in row[1:]])
    finally:
        if own:
            fh.close()
    return EmpiricalMeasure(np.array(atoms), np.array(weights))


# ---------------------------------------------------------------------------
# Test-function bundles: value, gradient, Hessian with declared constants
# ---------------------------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class TestFunctionBundle:
    """Scalar test function f(x, regime) with analytic derivatives.

    ``value`` maps an (..., d) array and an integer regime to (...);
    ``gradient`` to (..., d); ``hessian`` to (..., d, d). ``sup_bound`` and
    ``lipschitz`` are declared constants (np.inf for unbounded polynomials).
    """

    name: str
    dim: int
    value: Callable[[np.ndarray, int], np.ndarray]
    gradient: Callable[[np.ndarray, int], np.ndarray]
    hessian: Callable[[np.ndarray, int], np.ndarray]
    sup_bound: float = np.inf
    lipschitz: float = np.inf

    # "test function" in the weak-convergence sense; keep pytest from
    # collecting this dataclass as a test case.
    __test__ = False


def coordinate_sum(dim: int = 1) -> TestFunctionBundle:
    """f(x) = sum_i x_i, regime-independent."""

    def value(x, i0):
        return np.asarray(x, dtype=float).sum(axis=-1)

    def gradient(x, i0):
        x = np.asarray(x, dtype=float)
        return np.ones_like(x)

    def hessian(x, i0):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape + (dim,))

    return TestFunctionBundle(
        f"coordinate_sum_{dim}d", dim, value, gradient, hessian,
        sup_bound=np.inf, lipschitz=float(np.sqrt(dim)),
    )


def squared_norm(dim: int = 1) -> TestFunctionBundle:
    """f(x) = |x|^2, regime-independent; gradient 2x, Hessian 2I."""

    def value(x, i0):
        x = np.asarray(x, dtype=float)
        return (x**2).sum(axis=-1)

    def gradient(x, i0):
        return 2.0 * np.asarray(x, dtype=float)

    def hessian(x, i0):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(2.0 * np.eye(dim), x.shape + (dim,)).copy()

    return TestFunctionBundle(
        f"squared_norm_{dim}d", dim, value, gradient, hessian,
        sup_bound=np.inf, lipschitz=np.inf,
    )


def bump(radius: float, center: float = 0.0, dim: int = 1) -> TestFunctionBundle:
    """Smooth compactly supported bump: exp(1 - 1/(1 - |x-c|^2/R^2)) inside R.

    Infinitely differentiable, values in [0, 1], support the closed ball of
    radius R around the center.
    """
    r2 = float(radius) ** 2

    def parts(x):
        x = np.asarray(x, dtype=float)
        y = x - center
        u = (y**2).sum(axis=-1) / r2
        inside = u < 1.0
        w = np.zeros_like(u)
        np.divide(1.0, 1.0 - u, out=w, where=inside)
        val = np.zeros_like(u)
        np.exp(1.0 - w, out=val, where=inside)
        return y, u, w, val, inside

    def value(x, i0):
        return parts(x)[3]

    def gradient(x, i0):
        y, _, w, val, _ = parts(x)
        return (-2.0 / r2) * (val * w**2)[..., None] * y

    def hessian(x, i0):
        y, _, w, val, _ = parts(x)
        eye = np.eye(dim)
        outer = y[..., :, None] * y[..., None, :]
        coef_outer = (2.0 / r2) * val * w**3 * (2.0 - w)
        coef_eye = val * w**2
        return (-2.0 / r2) * (
            coef_outer[..., None, None] * outer + coef_eye[..., None, None] * eye
        )

    # Gradient magnitude peaks strictly inside the support; scan for it.
    us = np.linspace(1e-6, 1.0 - 1e-6, 4000)
    ws = 1.0 / (1.0 - us)
    gmax = float(np.max(2.0 / radius * np.sqrt(us) * ws**2 * np.exp(1.0 - ws)))

    return TestFunctionBundle(
        f"bump_r{radius:g}_c{center:g}_{dim}d", dim, value, gradient, hessian,
        sup_bound=1.0, lipschitz=gmax,
    )


def regime_scaled(base: TestFunctionBundle, weights: Sequence[float]) -> TestFunctionBundle:
    """f(x, i0) = weights[i0] * base(x, i0): a regime-dependent wrapper."""
    w = tuple(float(v) for v in weights)

    def value(x, i0):
        return w[i0] * base.value(x, i0)

    def gradient(x, i0):
        return w[i0] * base.gradient(x, i0)

    def hessian(x, i0):
        return w[i0] * base.hessian(x, i0)

    wmax = max(abs(v) for v in w)
    return TestFunctionBundle(
        f"regime_scaled_{base.name}", base.dim, value, gradient, hessian,
        sup_bound=wmax * base.sup_bound, lipschitz=wmax * base.lipschitz,
    )
