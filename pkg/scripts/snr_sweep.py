"""Noise-robustness curve: medians and quartiles of every parameter versus SNR.

Starts from a noiseless map so every level gets fresh noise realisations.

    python scripts/snr_sweep.py --reps 50 --out sweep_out
"""

import argparse
import os

import numpy as np

from stsfit.io import dumps
from stsfit.model import DISPLAY_KEYS, PARAM_NAMES
from stsfit.noise import snr_sweep
from stsfit.svg import Plot
from stsfit.synth import PRESETS, NotchNuisanceParams, default_grids, generate_heatmap


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--preset", default="anticrossing", choices=sorted(PRESETS))
    ap.add_argument("--snr", type=float, nargs="+", default=[19, 10, 5, 3, 2, 1.5])
    ap.add_argument("--reps", type=int, default=50)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="sweep_out")
    args = ap.parse_args()

    truth = PRESETS[args.preset]
    nu = NotchNuisanceParams()
    r = nu.circle_radius
    hm = generate_heatmap(truth, nu, *default_grids(truth.f_c))
    res = snr_sweep(hm, 0.0, r, [r / s for s in args.snr], args.reps, workers=args.workers,
                    verbose=True)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "sweep.json"), "w") as fh:
        fh.write(dumps({"truth": truth.as_dict(), **res.as_dict()}))
    for k in PARAM_NAMES:
        key, scale = DISPLAY_KEYS[k]
        p = Plot(f"{key} vs SNR", "SNR", key)
        p.band(res.snr_levels, res.p25[k] * scale, res.p75[k] * scale)
        p.line(res.snr_levels, res.median[k] * scale, label="median")
        p.line(res.snr_levels, np.full(len(args.snr), getattr(truth, k) * scale),
               label="truth", color="#999")
        p.save(os.path.join(args.out, f"sweep_{k}.svg"))
    for s, n, med in zip(args.snr, res.divergences, res.median["f_ge_max"]):
        print(f"SNR {s:5.2f}: {n}/{args.reps} diverged, median f_ge_max {med / 1e9:.4f} GHz")


if __name__ == "__main__":
    main()
