"""Fit many noisy copies of one preset and tabulate the parameter errors.

    python scripts/round_trip.py --preset anticrossing --snr 19 --seeds 50
"""

import argparse
import json
import time

import numpy as np

from stsfit.fit import FitError
from stsfit.model import PARAM_NAMES
from stsfit.pipeline import run_pipeline
from stsfit.synth import PRESETS, NotchNuisanceParams, default_grids, generate_heatmap

TOL = {"f_c": 0.1e6, "period": 0.005, "i_ss": 0.01, "f_ge_max": 100e6, "d": 0.05}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--preset", default="anticrossing", choices=sorted(PRESETS))
    ap.add_argument("--snr", type=float, default=19.0)
    ap.add_argument("--seeds", type=int, default=50)
    ap.add_argument("--seed0", type=int, default=1000)
    ap.add_argument("--json", help="write per-seed rows here")
    args = ap.parse_args()

    truth = PRESETS[args.preset]
    nu = NotchNuisanceParams()
    cur, fp = default_grids(truth.f_c)
    rows, fails = [], 0
    for s in range(args.seeds):
        hm = generate_heatmap(truth, nu, cur, fp, nu.circle_radius / args.snr, args.seed0 + s)
        t0 = time.perf_counter()
        try:
            res = run_pipeline(hm)
        except FitError as exc:
            print(f"seed {args.seed0 + s}: {exc}")
            fails += 1
            continue
        err = res.outcome.params.to_array() - truth.to_array()
        err[3] = (err[3] + truth.period / 2) % truth.period - truth.period / 2
        rows.append({"seed": args.seed0 + s, "seconds": time.perf_counter() - t0,
                     "rms_hz": res.outcome.rms_per_point,
                     **{f"err_{k}": float(v) for k, v in zip(PARAM_NAMES, err)}})

    err = np.array([[r[f"err_{k}"] for k in PARAM_NAMES] for r in rows])
    rel = err.copy()
    rel[:, 2:4] /= truth.period  # period and i_ss as fractions of the period
    lim = np.array([TOL.get(k, np.inf) for k in PARAM_NAMES])
    ok = np.all(np.abs(rel) <= lim, axis=1)
    print(f"{args.preset} at SNR {args.snr:g}: {ok.sum()}/{args.seeds} within tolerance, "
          f"{fails} failed, mean {np.mean([r['seconds'] for r in rows]):.2f} s per fit")
    for j, k in enumerate(PARAM_NAMES):
        print(f"  {k:9s} median err {np.median(err[:, j]): .4g}  sd {err[:, j].std(ddof=1):.4g}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=1)


if __name__ == "__main__":
    main()
