"""Distance to the large-population reference as the particle count grows.

For each replica one switching path is drawn and shared by every system
size, so the comparison isolates the particle-count effect. The script
prints the mean bounded-Lipschitz distance to an M-particle reference per
N with its standard error, and the fitted log-log decay slope (the
mean-field heuristic predicts a slope near -1/2 in d = 1).

Usage:
    python scripts/lln_decay.py --replicas 20 --seed 314159
"""

import argparse

from mfswitch.chain import validate_generator
from mfswitch.dynamics import InitialCondition, SimConfig, mean_reverting_switch
from mfswitch.limit import lln_distance_curve

GENERATOR = validate_generator([[-2.0, 2.0], [1.0, -1.0]])
MODEL = mean_reverting_switch(pull=(1.0, 2.0), push=(0.5, -0.5), vol=(0.6, 1.0))


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-values", type=int, nargs="+", default=[64, 256, 1024])
    ap.add_argument("--m-reference", type=int, default=8192)
    ap.add_argument("--replicas", type=int, default=20)
    ap.add_argument("--horizon", type=float, default=1.0)
    ap.add_argument("--dt", type=float, default=1e-3)
    ap.add_argument("--seed", type=int, default=314159)
    ap.add_argument("--bl-cap", type=int, default=16384,
                    help="max combined support for the exact metric")
    args = ap.parse_args()

    cfg = SimConfig(
        MODEL, args.n_values[0], args.horizon, args.dt, InitialCondition()
    )
    curve = lln_distance_curve(
        cfg, GENERATOR, 0, args.n_values, args.m_reference, args.horizon,
        replicas=args.replicas, master_seed=args.seed, bl_cap=args.bl_cap,
    )

    print(f"reference M = {curve.m_reference}, replicas = {curve.replicas}, "
          f"t = {curve.checkpoint}")
    print(f"{'N':>6}  {'mean BL':>10}  {'SE':>9}  exact")
    for n, m, se, ex in zip(
        curve.n_values, curve.means, curve.std_errors, curve.exact
    ):
        print(f"{n:>6}  {m:>10.5f}  {se:>9.5f}  {'yes' if ex else 'no'}")
    lo, hi = curve.slope_ci
    print(f"log-log slope: {curve.slope:+.3f}  (95% CI {lo:+.3f} .. {hi:+.3f})")


if __name__ == "__main__":
    main()
