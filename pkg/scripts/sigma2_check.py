"""Monte-Carlo check of the chi^2/(N-M) noise-variance estimator on the nonlinear model.

    python scripts/sigma2_check.py --runs 5000 --points 18
"""

import argparse

import numpy as np

from stsfit.synth import ANTICROSSING_TRUTH
from stsfit.uncertainty import sigma2_monte_carlo


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--runs", type=int, default=5000)
    ap.add_argument("--points", type=int, default=18)
    ap.add_argument("--sigma", type=float, default=10e3, help="f_r noise sd in Hz")
    ap.add_argument("--seeds", type=int, nargs="+", default=[5])
    args = ap.parse_args()
    i = np.linspace(0, 2 * ANTICROSSING_TRUTH.period, args.points)
    for seed in args.seeds:
        mc = sigma2_monte_carlo(ANTICROSSING_TRUTH, i, args.sigma, args.runs, seed=seed)
        print(f"seed {seed}: E[sigma2*]/sigma2 = {mc.mean_ratio:.4f} +- {mc.standard_error:.4f}")


if __name__ == "__main__":
    main()
