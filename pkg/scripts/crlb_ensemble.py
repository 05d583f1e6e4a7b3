"""Compare the spread of fitted parameters over many noise seeds with the CRLB.

Also prints the per-slice f_r error sd, which shows where the i.i.d. noise
assumption behind the bound breaks down.

    python scripts/crlb_ensemble.py --seeds 200 --snr 19
"""

import argparse
import warnings

import numpy as np

from stsfit.model import PARAM_NAMES, model_frequency
from stsfit.pipeline import run_pipeline
from stsfit.synth import PRESETS, NotchNuisanceParams, default_grids, generate_heatmap
from stsfit.uncertainty import estimate_sigma2, uncertainty_report


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--preset", default="anticrossing", choices=sorted(PRESETS))
    ap.add_argument("--snr", type=float, default=19.0)
    ap.add_argument("--seeds", type=int, default=200)
    args = ap.parse_args()

    truth = PRESETS[args.preset]
    nu = NotchNuisanceParams()
    cur, fp = default_grids(truth.f_c)
    span = fp[-1] - fp[0]
    fits, bounds = [], []
    f_err = np.full((args.seeds, len(cur)), np.nan)
    for s in range(args.seeds):
        hm = generate_heatmap(truth, nu, cur, fp, nu.circle_radius / args.snr, 1000 + s)
        res = run_pipeline(hm)
        sp = res.spectrum
        f_err[s, sp.indices] = sp.f_r - model_frequency(truth, sp.currents, span)
        fits.append(res.outcome.params.to_array())
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            rep = uncertainty_report(sp, truth, sigma2=estimate_sigma2(res.outcome.residuals))
        bounds.append(rep.crlb_sd)
    err = np.array(fits) - truth.to_array()
    err[:, 3] = (err[:, 3] + truth.period / 2) % truth.period - truth.period / 2
    sd = err.std(axis=0, ddof=1)
    bound = np.sqrt(np.mean(np.array(bounds) ** 2, axis=0))
    se = sd / np.sqrt(2 * (len(err) - 1))
    print(f"{'param':9s} {'emp. sd':>11s} {'crlb':>11s} {'ratio':>6s}")
    for k, a, b, e in zip(PARAM_NAMES, sd, bound, se):
        print(f"{k:9s} {a:11.4g} {b:11.4g} {a / b:6.2f}  (+-{e / b:.2f})")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        per_slice = np.nanstd(f_err, axis=0)
    print("f_r error sd per slice (kHz):")
    print(np.array2string(per_slice / 1e3, precision=1, max_line_width=100))


if __name__ == "__main__":
    main()
