"""SNR sweeps: inject extra complex noise, refit many times, summarise percentiles."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from stsfit.model import PARAM_NAMES
from stsfit.pipeline import PipelineConfig, run_pipeline
from stsfit.synth import StsHeatmap, complex_noise

log = logging.getLogger(__name__)


def add_noise(heatmap: StsHeatmap, sigma1: float, seed) -> StsHeatmap:
    """Copy of ``heatmap`` with complex Gaussian noise of total sd ``sigma1`` added.

    ``seed`` is anything :class:`numpy.random.SeedSequence` accepts (an int or
    a sequence of ints).
    """
    if sigma1 < 0:
        raise ValueError("sigma1 must be non-negative")
    out = heatmap.copy()
    if sigma1 > 0:
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        out.s21 = out.s21 + complex_noise(rng, out.s21.shape, sigma1)
    out.meta["added_noise_sd"] = float(sigma1)
    return out


def run_seed(base_seed: int, level: int, rep: int) -> list:
    return [int(base_seed), int(level), int(rep)]


def snr_value(radius: float, sigma0: float, sigma1: float) -> float:
    total = np.hypot(sigma0, sigma1)
    return float(radius / total) if total > 0 else float("inf")


def estimate_radius_sigma0(slices) -> tuple:
    """Median circle radius and median noise sd over the accepted slices of a measured map.

    The per-slice residual rms is sqrt(E|n|^2), i.e. the noise sd in the
    convention used by :func:`stsfit.synth.complex_noise`.
    """
    ok = [s for s in slices if s.converged]
    if not ok:
        raise ValueError("no accepted slices")
    r = np.array([s.radius for s in ok])
    sd = np.array([s.rms_residual * s.radius for s in ok])
    return float(np.median(r)), float(np.median(sd))


@dataclass
class SnrSweepResult:
    sigma1_levels: np.ndarray
    snr_levels: np.ndarray
    radius: float
    sigma0: float
    reps: int
    base_seed: int
    median: dict
    p25: dict
    p75: dict
    divergences: np.ndarray
    samples: np.ndarray | None = field(default=None, repr=False)
    failures: list = field(default_factory=list, repr=False)

    def as_dict(self) -> dict:
        out = {
            "sigma1_levels": self.sigma1_levels.tolist(),
            "snr_levels": [None if not np.isfinite(s) else s for s in self.snr_levels.tolist()],
            "radius": self.radius,
            "sigma0": self.sigma0,
            "reps": self.reps,
            "base_seed": self.base_seed,
            "param_order": list(PARAM_NAMES),
            "median": {k: _json_list(v) for k, v in self.median.items()},
            "p25": {k: _json_list(v) for k, v in self.p25.items()},
            "p75": {k: _json_list(v) for k, v in self.p75.items()},
            "divergences": self.divergences.tolist(),
            "failures": [list(f) for f in self.failures],
        }
        if self.samples is not None:
            out["samples"] = [[_json_list(row) for row in lvl] for lvl in self.samples]
        return out


def _json_list(a):
    return [None if not np.isfinite(v) else float(v) for v in np.asarray(a, float).ravel()]


def _sweep_task(args):
    heatmap, sigma1, seed, cfg = args
    noisy = add_noise(heatmap, sigma1, seed)
    try:
        res = run_pipeline(noisy, cfg)
    except Exception as exc:  # any stage failure counts as a divergence
        return None, f"{type(exc).__name__}: {exc}"
    p = res.outcome.params
    lo, hi, _ = cfg.grid.f_ge_max
    x = p.to_array()
    if not (lo <= p.f_ge_max <= hi):
        return x, f"f_ge_max {p.f_ge_max:.6g} Hz outside the grid"
    return x, None


def summarize(samples, diverged):
    """Linear-interpolation percentiles over the non-divergent rows of each level."""
    n_lvl = samples.shape[0]
    med, lo, hi = (np.full((n_lvl, len(PARAM_NAMES)), np.nan) for _ in range(3))
    for k in range(n_lvl):
        good = samples[k][~diverged[k]]
        if len(good):
            lo[k], med[k], hi[k] = np.percentile(good, [25, 50, 75], axis=0, method="linear")
    pack = lambda a: {name: a[:, j] for j, name in enumerate(PARAM_NAMES)}
    return pack(med), pack(lo), pack(hi)


def snr_sweep(heatmap: StsHeatmap, sigma0: float, radius: float, sigma1_list, reps: int = 50,
              base_seed: int = 0, cfg: PipelineConfig = PipelineConfig(), workers: int = 1,
              verbose: bool = False) -> SnrSweepResult:
    """Refit ``reps`` noisy copies of ``heatmap`` for every added noise level."""
    if reps < 2:
        raise ValueError("reps must be at least 2")
    sig = np.asarray(sigma1_list, dtype=float)
    if np.any(sig < 0):
        raise ValueError("noise levels must be non-negative")
    tasks = [(heatmap, s, run_seed(base_seed, k, r), cfg)
             for k, s in enumerate(sig) for r in range(reps)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_sweep_task, tasks))
    else:
        results = [_sweep_task(t) for t in tasks]
    samples = np.full((len(sig), reps, len(PARAM_NAMES)), np.nan)
    diverged = np.zeros((len(sig), reps), dtype=bool)
    failures = []
    for n, (x, err) in enumerate(results):
        k, r = divmod(n, reps)
        if x is not None:
            samples[k, r] = x
        if err is not None:
            diverged[k, r] = True
            failures.append((k, r, err))
    med, lo, hi = summarize(samples, diverged)
    snr = np.array([snr_value(radius, sigma0, s) for s in sig])
    log.info("sweep done: %d runs, %d divergent", len(results), int(diverged.sum()))
    return SnrSweepResult(sig, snr, float(radius), float(sigma0), reps, int(base_seed),
                          med, lo, hi, diverged.sum(axis=1),
                          samples if verbose else None, failures)
