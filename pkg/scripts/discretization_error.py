"""Finite-N error of the node estimators, with fitted power laws.

Runs one nested sweep (paths generated at the largest N and thinned for the
coarser levels) and prints the slope of |error| against N for each
estimator and susceptibility.

    python scripts/discretization_error.py --geometry halfspace --n-paths 1e6
"""

import argparse
import csv
import math
from pathlib import Path

from worldline.engine import RunConfig, convergence_sweep
from worldline.media import Gap, HalfSpace


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--geometry", choices=("halfspace", "gap"), default="halfspace")
    ap.add_argument("--n-paths", type=float, default=1e6)
    ap.add_argument("--k-min", type=int, default=5)
    ap.add_argument("--k-max", type=int, default=12)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()

    n_list = [2**k for k in range(args.k_min, args.k_max + 1)]
    geom = HalfSpace(0.0, 1.0) if args.geometry == "halfspace" else Gap(0.0, 1.0, 1.0, 1.0)
    cfg = RunConfig(geom, n_list[-1], int(args.n_paths), seed=args.seed, workers=args.workers)
    table = convergence_sweep(cfg, n_list, [1.0, 1e2, 1e4, math.inf], ("trapezoid", "interpolation", "dirichlet"))

    for (est, chi), (p, perr) in sorted(table.slopes.items(), key=lambda kv: (kv[0][0], kv[0][1])):
        print(f"{est:13s} chi={chi:<6g} slope {p:+.3f} +- {perr:.3f}")
    print(f"wall time {table.wall_time:.1f} s")

    out = Path(args.out or f"results/discretization_error_{args.geometry}.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["estimator", "chi", "N", "normalized", "std_error", "relative_error", "diff_to_finest", "diff_std_error"])
        for r in table.rows:
            w.writerow([r.estimator, r.chi, r.n_steps, r.normalized, r.std_error, r.relative_error, r.diff_to_finest, r.diff_std_error])


if __name__ == "__main__":
    main()
