"""Occupation-time averaging of the fast chain, chain-only (no particles).

Samples the two-time-scale chain at several epsilon, projects each path
onto its block labels, and measures the residual between the time spent
in one fast state and the stationary-weighted time its block predicts.
The mean absolute residual should decay like a power of epsilon with
exponent near 1/2 (square-root averaging).

Usage:
    python scripts/occupation_averaging.py --replicas 200 --seed 12345
"""

import argparse

import numpy as np

from mfswitch.chain import (
    TwoScaleSpec,
    aggregate,
    build_fast_generator,
    occupation_residual,
    project_path,
    sample_path,
    validate_generator,
)

BLOCKS = (
    validate_generator([[-0.5, 0.5], [0.125, -0.125]]),
    validate_generator([[0.0]]),
)
SLOW = np.array([[-1.0, 0.0, 1.0], [0.0, -1.0, 1.0], [0.6, 2.4, -3.0]])


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--eps", type=float, nargs="+", default=[1e-1, 1e-2, 1e-3])
    ap.add_argument("--replicas", type=int, default=200)
    ap.add_argument("--horizon", type=float, default=1.0)
    ap.add_argument("--flat-state", type=int, default=0)
    ap.add_argument("--seed", type=int, default=12345)
    args = ap.parse_args()

    means = []
    print(f"flat state {args.flat_state}, T = {args.horizon}, "
          f"replicas = {args.replicas}")
    for eps in args.eps:
        spec = TwoScaleSpec(BLOCKS, SLOW, eps)
        q = build_fast_generator(spec)
        agg = aggregate(spec)
        vals = np.empty(args.replicas)
        for r in range(args.replicas):
            path = sample_path(
                q, 0, args.horizon, np.random.default_rng(args.seed + r)
            )
            proj = project_path(path, agg)
            vals[r] = occupation_residual(
                path, proj, agg, args.flat_state, args.horizon
            )
        mean = float(np.abs(vals).mean())
        se = float(np.abs(vals).std(ddof=1) / np.sqrt(args.replicas))
        means.append(mean)
        print(f"eps = {eps:>7g}:  E|residual| = {mean:.5f}  (SE {se:.5f})")
    if len(args.eps) >= 2:
        slope = float(np.polyfit(np.log(args.eps), np.log(means), 1)[0])
        print(f"log-log slope vs eps: {slope:+.3f}")


if __name__ == "__main__":
    main()
