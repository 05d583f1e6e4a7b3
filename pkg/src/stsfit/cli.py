"""Command line: ``stsfit fit | synth | sweep``.

Exit codes: 0 ok, 1 I/O or parse error, 2 empty spectrum, 3 fit failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import warnings
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from stsfit import __version__
from stsfit.extract import EmptySpectrumError, ExtractConfig, fit_all_slices, write_spectrum_csv
from stsfit.fit import HINTS, BruteGridSpec, NelderMeadConfig, qubit_side
from stsfit.io import HeatmapFormatError, dumps, load_heatmap, save_heatmap
from stsfit.model import DISPLAY_KEYS, PARAM_NAMES, SI_KEYS, HamiltonianParams, model_frequency
from stsfit.noise import estimate_radius_sigma0, snr_sweep
from stsfit.pipeline import PipelineConfig, run_pipeline
from stsfit.svg import Plot
from stsfit.synth import PRESETS, NotchNuisanceParams, default_grids, generate_heatmap
from stsfit.uncertainty import uncertainty_report

log = logging.getLogger("stsfit")

REPORT_SCHEMA = "stsfit-report/1"
SWEEP_SCHEMA = "stsfit-sweep/1"

EXIT_OK, EXIT_IO, EXIT_EMPTY, EXIT_FIT = 0, 1, 2, 3


@dataclass
class RunConfig:
    input: str = ""
    out: str = "."
    hint: str = "auto"
    threshold_k: float = 5.0
    grid_overrides: list = field(default_factory=list)
    nm_xtol: float = 1e-6
    nm_ftol: float = 1e-4
    nm_max_iter: int = 2000
    seed: int = 0
    workers: int = 1
    verbose: bool = False

    def __post_init__(self):
        if self.hint not in HINTS:
            raise ValueError(f"hint must be one of {HINTS}")
        if self.threshold_k <= 0:
            raise ValueError("threshold_k must be positive")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        self.grid()  # validate overrides early

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    def grid(self) -> BruteGridSpec:
        spec = BruteGridSpec()
        for item in self.grid_overrides:
            key, lo, hi, steps = parse_grid_override(item)
            try:
                spec = spec.with_override(key, lo, hi, steps)
            except KeyError as exc:
                raise ValueError(exc.args[0]) from exc
        return spec

    def pipeline(self) -> PipelineConfig:
        return PipelineConfig(
            extract=ExtractConfig(threshold_k=self.threshold_k, workers=self.workers),
            grid=self.grid(),
            nm=NelderMeadConfig(xtol=self.nm_xtol, ftol=self.nm_ftol, max_iter=self.nm_max_iter),
            hint=self.hint,
        )


def parse_grid_override(text: str):
    """``key=min:max:steps`` -> (key, min, max, steps)."""
    try:
        key, rng = text.split("=", 1)
        lo, hi, steps = rng.split(":")
        return key.strip(), float(lo), float(hi), int(steps)
    except ValueError as exc:
        raise ValueError(f"bad grid override {text!r}, expected key=min:max:steps") from exc


def _si(params: HamiltonianParams) -> dict:
    return {SI_KEYS[k]: v for k, v in zip(PARAM_NAMES, params.to_array().tolist())}


def _display(params: HamiltonianParams) -> dict:
    return {DISPLAY_KEYS[k][0]: v * DISPLAY_KEYS[k][1]
            for k, v in zip(PARAM_NAMES, params.to_array().tolist())}


def _outcome_block(o, include_side=True) -> dict:
    block = {
        "parameters": _si(o.params),
        "parameters_display": _display(o.params),
        "loss_sum_hz2": o.loss_sum,
        "rms_per_point_hz": o.rms_per_point,
        "rms_per_point_khz": o.rms_per_point * 1e-3,
        "hint_used": o.hint_used,
    }
    if include_side:
        block["qubit_side"] = qubit_side(o.params)
    return block


def _crlb_table(rep) -> list:
    return [{"parameter": SI_KEYS[k], "crlb_sd": None if u else float(s), "unbounded": bool(u)}
            for k, s, u in zip(PARAM_NAMES, rep.crlb_sd, rep.unbounded)]


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def build_report(hm, result, cfg: RunConfig, input_sha: str) -> dict:
    spec, est, out = result.spectrum, result.estimate, result.outcome
    span = hm.probe_span
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        unc = uncertainty_report(spec, out.params, span)
    cfg_dict = {k: v for k, v in cfg.to_dict().items() if k not in ("input", "out", "workers",
                                                                     "verbose")}
    report = {
        "schema": REPORT_SCHEMA,
        "stsfit_version": __version__,
        "input_sha256": input_sha,
        "config": cfg_dict,
        "grid": {"currents": len(hm.currents), "probe_freqs": len(hm.probe_freqs),
                 "probe_span_hz": span, "current_step_a": hm.current_step},
        "spectrum": {
            "n_points": len(spec),
            "mean_f_r_hz": spec.mean_f_r,
            "excluded_slices": [{"index": int(n), "current_a": float(hm.currents[n]),
                                 "reason": reason} for n, reason in spec.excluded],
        },
        "period_phase": {
            "pattern": est.pattern,
            "period_a": est.period,
            "phi_a": est.phi,
            "duty": est.duty,
            "i_ss_candidates_a": list(est.i_ss_candidates),
        },
        "fit": {
            **_outcome_block(out),
            "brute": {"parameters": _si(out.brute_params), "loss_sum_hz2": out.brute_loss},
            "nelder_mead": {"iterations": out.nm_iterations, "converged": out.nm_converged},
            "branch_used": out.branch_used.tolist(),
            "residuals_hz": out.residuals.tolist(),
        },
        "uncertainty": {
            "sigma2_hz2": unc.sigma2,
            "crlb": _crlb_table(unc),
            "hessian_eigenpairs": [
                {"eigenvalue": float(w),
                 "eigenvector": dict(zip((SI_KEYS[k] for k in PARAM_NAMES), v.tolist()))}
                for w, v in zip(unc.eigenvalues, unc.eigenvectors.T)],
            "eigen_scaling": "unit-diagonal Fisher matrix",
            "fisher_identity_rel_err": unc.identity_error,
            "excluded_points": unc.n_excluded,
        },
        "alternates": [_outcome_block(a) for a in out.alternates],
    }
    truth = hm.meta.get("truth") if isinstance(hm.meta, dict) else None
    if truth:
        try:
            tp = HamiltonianParams(**{k: float(truth[k]) for k in PARAM_NAMES})
        except (KeyError, TypeError, ValueError) as exc:
            log.warning("ignoring malformed meta.truth: %s", exc)
        else:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                at_truth = uncertainty_report(spec, tp, span, sigma2=unc.sigma2)
            report["truth"] = {
                "parameters": _si(tp),
                "error": {SI_KEYS[k]: a - b for k, a, b in
                          zip(PARAM_NAMES, out.params.to_array(), tp.to_array())},
                "crlb_at_truth": _crlb_table(at_truth),
            }
    return report


def write_plots(outdir, hm, result) -> None:
    spec, out = result.spectrum, result.outcome
    i_fine = np.linspace(hm.currents[0], hm.currents[-1], 1000)
    model = model_frequency(out.params, i_fine, hm.probe_span)
    p = Plot("Extracted resonance and fitted model", "current (uA)", "frequency (GHz)")
    p.scatter(spec.currents * 1e6, spec.f_r * 1e-9, label="f_r data")
    p.line(i_fine * 1e6, model * 1e-9, label="model")
    p.save(os.path.join(outdir, "fit.svg"))
    r = Plot("Residuals", "current (uA)", "f_r - model (kHz)")
    r.line([hm.currents[0] * 1e6, hm.currents[-1] * 1e6], [0, 0], color="#999", width=1)
    r.scatter(spec.currents * 1e6, out.residuals * 1e-3)
    r.save(os.path.join(outdir, "residuals.svg"))


def _fail(code: int, stage: str, exc: BaseException) -> int:
    print(f"stsfit: {stage}: {type(exc).__name__}: {exc}", file=sys.stderr)
    return code


def cmd_fit(cfg: RunConfig) -> int:
    try:
        hm = load_heatmap(cfg.input)
        sha = _sha256(cfg.input)
        os.makedirs(cfg.out, exist_ok=True)
    except (OSError, HeatmapFormatError) as exc:
        return _fail(EXIT_IO, "load", exc)
    try:
        result = run_pipeline(hm, cfg.pipeline())
    except EmptySpectrumError as exc:
        return _fail(EXIT_EMPTY, "extract", exc)
    except Exception as exc:  # period, brute or simplex stage
        log.debug("fit failure", exc_info=True)
        return _fail(EXIT_FIT, "fit", exc)
    try:
        report = build_report(hm, result, cfg, sha)
        with open(os.path.join(cfg.out, "report.json"), "w", encoding="utf-8") as fh:
            fh.write(dumps(report))
        with open(os.path.join(cfg.out, "timing.json"), "w", encoding="utf-8") as fh:
            fh.write(dumps(result.timing))
        write_spectrum_csv(os.path.join(cfg.out, "spectrum.csv"), hm, result.slices)
        write_plots(cfg.out, hm, result)
    except OSError as exc:
        return _fail(EXIT_IO, "write", exc)
    o = result.outcome
    print(f"f_c={o.params.f_c / 1e9:.6f} GHz  g={o.params.g / 1e6:.3f} MHz  "
          f"period={o.params.period * 1e6:.3f} uA  i_ss={o.params.i_ss * 1e6:.3f} uA  "
          f"f_ge_max={o.params.f_ge_max / 1e9:.4f} GHz  d={o.params.d:.4f}  "
          f"rms={o.rms_per_point / 1e3:.3f} kHz  ({result.timing['total_s']:.2f} s)")
    for a in o.alternates:
        print(f"alternate ({a.hint_used}): f_ge_max={a.params.f_ge_max / 1e9:.4f} GHz  "
              f"d={a.params.d:.4f}  rms={a.rms_per_point / 1e3:.3f} kHz")
    return EXIT_OK


def cmd_synth(args) -> int:
    base = PRESETS[args.preset]
    over = {k: getattr(args, k) for k in PARAM_NAMES if getattr(args, k) is not None}
    try:
        truth = base.replace(**over)
        nu = NotchNuisanceParams()
        cur, fp = default_grids(truth.f_c, args.n_currents, args.n_freqs, args.current_span,
                                args.probe_span)
        if args.zero_noise:
            sd = 0.0
        elif args.noise_sd is not None:
            sd = args.noise_sd
        else:
            sd = nu.circle_radius / args.snr
        hm = generate_heatmap(truth, nu, cur, fp, sd, args.seed if sd > 0 else 0)
    except (ValueError, ZeroDivisionError) as exc:
        return _fail(EXIT_IO, "synth", exc)
    hm.meta["preset"] = args.preset
    try:
        save_heatmap(args.out, hm)
    except OSError as exc:
        return _fail(EXIT_IO, "write", exc)
    return EXIT_OK


def cmd_sweep(cfg: RunConfig, args) -> int:
    try:
        hm = load_heatmap(cfg.input)
        os.makedirs(cfg.out, exist_ok=True)
    except (OSError, HeatmapFormatError) as exc:
        return _fail(EXIT_IO, "load", exc)
    pcfg = cfg.pipeline()
    meta = hm.meta if isinstance(hm.meta, dict) else {}
    if "circle_radius" in meta and "noise_sd" in meta:
        radius, sigma0 = float(meta["circle_radius"]), float(meta["noise_sd"])
    else:
        try:
            radius, sigma0 = estimate_radius_sigma0(fit_all_slices(hm, pcfg.extract))
        except ValueError as exc:
            return _fail(EXIT_EMPTY, "extract", exc)
    if args.sigma1:
        sig = list(args.sigma1)
    else:
        sig = []
        for s in args.snr:
            var = (radius / s) ** 2 - sigma0 ** 2
            if var < 0:
                print(f"stsfit: sweep: SNR {s} exceeds the intrinsic SNR "
                      f"{radius / sigma0:.3g}; skipped", file=sys.stderr)
                continue
            sig.append(float(np.sqrt(var)))
    if not sig:
        return _fail(EXIT_IO, "sweep", ValueError("no reachable noise levels"))
    res = snr_sweep(hm, sigma0, radius, sig, args.reps, cfg.seed, pcfg, cfg.workers, cfg.verbose)
    try:
        with open(os.path.join(cfg.out, "sweep.json"), "w", encoding="utf-8") as fh:
            fh.write(dumps({"schema": SWEEP_SCHEMA, **res.as_dict()}))
        for k in PARAM_NAMES:
            key, scale = DISPLAY_KEYS[k]
            p = Plot(f"{key} vs SNR (median, 25-75%)", "SNR", key)
            p.band(res.snr_levels, res.p25[k] * scale, res.p75[k] * scale)
            p.line(res.snr_levels, res.median[k] * scale, label="median")
            p.save(os.path.join(cfg.out, f"sweep_{k}.svg"))
    except OSError as exc:
        return _fail(EXIT_IO, "write", exc)
    for s, n in zip(res.snr_levels, res.divergences):
        print(f"SNR {s:.3g}: {n}/{res.reps} divergent")
    return EXIT_OK


def _add_run_args(p):
    p.add_argument("--input", required=False, help="heatmap JSON (sts-heatmap/1)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--config", help="JSON file with RunConfig fields; flags override it")
    p.add_argument("--hint", choices=HINTS)
    p.add_argument("--threshold-k", type=float, dest="threshold_k")
    p.add_argument("--grid-override", action="append", dest="grid_overrides",
                   metavar="KEY=MIN:MAX:STEPS", help="f_c (offset from mean f_r), g, f_ge_max, d")
    p.add_argument("--nm-xtol", type=float, dest="nm_xtol")
    p.add_argument("--nm-ftol", type=float, dest="nm_ftol")
    p.add_argument("--nm-max-iter", type=int, dest="nm_max_iter")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--verbose", action="store_true", default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="stsfit", description="Single-tone spectroscopy fitting")
    ap.add_argument("--version", action="version", version=f"stsfit {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    _add_run_args(sub.add_parser("fit", help="fit a heatmap and write a report"))
    sw = sub.add_parser("sweep", help="SNR sweep on a heatmap")
    _add_run_args(sw)
    sw.add_argument("--snr", type=float, nargs="+", default=[19.0, 10.0, 5.0, 3.0, 2.0])
    sw.add_argument("--sigma1", type=float, nargs="+", help="added noise sd (overrides --snr)")
    sw.add_argument("--reps", type=int, default=50)
    sy = sub.add_parser("synth", help="write a synthetic heatmap")
    sy.add_argument("--preset", choices=sorted(PRESETS), default="anticrossing")
    sy.add_argument("--out", required=True, help="output heatmap JSON")
    sy.add_argument("--snr", type=float, default=19.0)
    sy.add_argument("--noise-sd", type=float, dest="noise_sd")
    sy.add_argument("--zero-noise", action="store_true")
    sy.add_argument("--seed", type=int, default=0)
    sy.add_argument("--n-currents", type=int, default=101)
    sy.add_argument("--n-freqs", type=int, default=101)
    sy.add_argument("--current-span", type=float, default=200e-6, help="A")
    sy.add_argument("--probe-span", type=float, default=20e6, help="Hz")
    for k in PARAM_NAMES:
        sy.add_argument(f"--{k.replace('_', '-')}", type=float, dest=k, help=f"override {SI_KEYS[k]}")
    return ap


def resolve_config(args) -> RunConfig:
    base = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            base = json.load(fh)
        if not isinstance(base, dict):
            raise ValueError("config file must hold a JSON object")
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            base[f.name] = v
    cfg = RunConfig.from_dict(base)
    if not cfg.input:
        raise ValueError("--input is required")
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "synth":
        logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
        return cmd_synth(args)
    try:
        cfg = resolve_config(args)
    except (OSError, ValueError, TypeError) as exc:
        return _fail(EXIT_IO, "config", exc)
    logging.basicConfig(level=logging.DEBUG if cfg.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "fit":
        return cmd_fit(cfg)
    return cmd_sweep(cfg, args)


if __name__ == "__main__":
    sys.exit(main())
