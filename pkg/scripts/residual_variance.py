"""Compensated-residual statistics across particle counts.

For each N the script runs independent replicas, evaluates the
compensated evolution residual M_f(T) and its quadratic-variation
estimate, and reports the replica mean (should be within a few SE of
zero), the ratio of the residual variance to the mean quadratic variation
(should be near 1), and the variance ratio between consecutive N
(should be near the N ratio, reflecting 1/N scaling).

Usage:
    python scripts/residual_variance.py --n-values 256 1024 --replicas 200
"""

import argparse
import math

import numpy as np

from mfswitch.chain import validate_generator
from mfswitch.dynamics import (
    InitialCondition,
    SimConfig,
    mean_reverting_switch,
    simulate_with_chain,
)
from mfswitch.harness import derive_seed
from mfswitch.limit import martingale_residual
from mfswitch.measure import bump

GENERATOR = validate_generator([[-2.0, 2.0], [1.0, -1.0]])
MODEL = mean_reverting_switch(pull=(1.0, 2.0), push=(0.5, -0.5), vol=(0.6, 1.0))
F = bump(4.0)


def cell(n: int, replicas: int, horizon: float, dt: float, seed: int):
    cfg = SimConfig(MODEL, n, horizon, dt, InitialCondition())
    vals = np.empty(replicas)
    qvs = np.empty(replicas)
    for r in range(replicas):
        traj, path = simulate_with_chain(
            cfg, GENERATOR, 0, derive_seed(seed, r, f"mart-{n}")
        )
        rep = martingale_residual(traj, path, GENERATOR, MODEL, F, horizon)
        vals[r] = rep.value
        qvs[r] = rep.quad_variation
    return vals, qvs


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-values", type=int, nargs="+", default=[256, 1024])
    ap.add_argument("--replicas", type=int, default=200)
    ap.add_argument("--horizon", type=float, default=1.0)
    ap.add_argument("--dt", type=float, default=1e-3)
    ap.add_argument("--seed", type=int, default=271828)
    args = ap.parse_args()

    variances = []
    print(f"f = {F.name}, T = {args.horizon}, replicas = {args.replicas}")
    print(f"{'N':>6}  {'mean M_f':>11}  {'SE':>9}  {'var':>10}  "
          f"{'mean QV':>10}  {'var/QV':>7}")
    for n in args.n_values:
        vals, qvs = cell(n, args.replicas, args.horizon, args.dt, args.seed)
        se = vals.std(ddof=1) / math.sqrt(len(vals))
        var = vals.var(ddof=1)
        variances.append(var)
        print(f"{n:>6}  {vals.mean():>+11.6f}  {se:>9.6f}  {var:>10.3e}  "
              f"{qvs.mean():>10.3e}  {var / qvs.mean():>7.3f}")
    for (n_a, v_a), (n_b, v_b) in zip(
        zip(args.n_values, variances), zip(args.n_values[1:], variances[1:])
    ):
        print(f"variance ratio {n_a}/{n_b}: {v_a / v_b:.2f}  "
              f"(particle ratio {n_b / n_a:.0f})")


if __name__ == "__main__":
    main()
