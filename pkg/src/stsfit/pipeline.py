"""End-to-end run: heatmap -> f_r(I) -> (period, sweet spot) -> six-parameter fit."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from stsfit.extract import ExtractConfig, ExtractedSpectrum, extract_spectrum, fit_all_slices
from stsfit.fit import BruteGridSpec, FitOutcome, NelderMeadConfig, fit_full
from stsfit.period import PeriodConfig, PeriodPhaseEstimate, estimate_period_phase
from stsfit.synth import StsHeatmap


@dataclass(frozen=True)
class PipelineConfig:
    extract: ExtractConfig = ExtractConfig()
    period: PeriodConfig = PeriodConfig()
    grid: BruteGridSpec = BruteGridSpec()
    nm: NelderMeadConfig = NelderMeadConfig()
    hint: str = "auto"


@dataclass
class PipelineResult:
    slices: list
    spectrum: ExtractedSpectrum
    estimate: PeriodPhaseEstimate
    outcome: FitOutcome
    timing: dict = field(default_factory=dict)


def run_pipeline(heatmap: StsHeatmap, cfg: PipelineConfig = PipelineConfig()) -> PipelineResult:
    """Run every stage; exceptions from a stage propagate unchanged."""
    t0 = time.perf_counter()
    slices = fit_all_slices(heatmap, cfg.extract)
    spectrum = extract_spectrum(heatmap, cfg.extract, slices=slices)
    t1 = time.perf_counter()
    estimate = estimate_period_phase(spectrum, cfg.period)
    t2 = time.perf_counter()
    outcome = fit_full(spectrum, estimate, heatmap.probe_span, cfg.hint, cfg.grid, cfg.nm)
    t3 = time.perf_counter()
    timing = {
        "extract_f_r_s": t1 - t0,
        "period_phase_s": t2 - t1,
        "brute_s": outcome.timing.get("brute_s", 0.0),
        "nelder_mead_s": outcome.timing.get("nm_s", 0.0),
        "total_s": t3 - t0,
    }
    return PipelineResult(slices, spectrum, estimate, outcome, timing)
