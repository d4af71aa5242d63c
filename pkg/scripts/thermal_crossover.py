"""CP potential against temperature for a constant-susceptibility wall.

Sweeps beta on common paths and prints the ratio to the zero-temperature
value; the ratio tends to 1 at low temperature and to 0 at high temperature.

    python scripts/thermal_crossover.py --n-paths 1e5
"""

import argparse

import numpy as np

from worldline.engine import RunConfig, estimate_cp
from worldline.media import HalfSpace
from worldline.thermal import Constant, ThermalConfig, cp_thermal, default_n_max


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--chi", type=float, default=1.0)
    ap.add_argument("--n-paths", type=float, default=1e5)
    ap.add_argument("--n-steps", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    n_paths = int(args.n_paths)
    zero = estimate_cp(RunConfig(HalfSpace(0.0, args.chi), args.n_steps, n_paths, seed=args.seed))
    for beta in np.geomspace(0.1, 100.0, 13):
        tc = ThermalConfig(float(beta), default_n_max(beta, 1.0))
        r = cp_thermal(HalfSpace(0.0, 0.0), Constant(args.chi), tc, 1.0, n_steps=args.n_steps, n_paths=n_paths, seed=args.seed)
        print(f"beta={beta:8.3f}  n_max={tc.n_max:5d}  V/V0={r.value / zero.estimate:.5f} +- {r.std_error / abs(zero.estimate):.5f}")


if __name__ == "__main__":
    main()
