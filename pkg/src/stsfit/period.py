"""Flux period and sweet-spot location from the extracted f_r(I) trace.

The period comes from the autocorrelation of the zero-mean trace, the phase
from a brute-force square-wave match at zero lag.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from stsfit.extract import ExtractedSpectrum

ANTICROSSING = "anticrossing"
CONTINUOUS = "continuous"
AMBIGUOUS = "ambiguous"


class NoPeriodError(RuntimeError):
    pass


@dataclass(frozen=True)
class PeriodConfig:
    min_lag: int = 3
    grid_size: int = 50
    anticrossing_ratio: float = 0.5
    continuous_ratio: float = 0.25
    refine: bool = True


@dataclass
class StandardizedTrace:
    values: np.ndarray
    current_step: float
    n_filled: int
    origin: float = 0.0

    @property
    def currents(self) -> np.ndarray:
        return self.origin + self.current_step * np.arange(len(self.values))


@dataclass
class PeriodPhaseEstimate:
    period: float
    phi: float
    duty: float
    pattern: str
    i_ss_candidates: list
    autocorrelation: np.ndarray = field(default=None, repr=False)
    loss_grid: np.ndarray = field(default=None, repr=False)


def standardize(spectrum: ExtractedSpectrum, grid_length: int | None = None) -> StandardizedTrace:
    """f_r minus its mean on the full current grid; missing slices become zeros."""
    if len(spectrum) == 0:
        raise ValueError("empty spectrum")
    n = spectrum.grid_length if grid_length is None else grid_length
    values = np.zeros(n)
    values[spectrum.indices] = spectrum.f_r - spectrum.f_r.mean()
    origin = float(spectrum.currents[0] - spectrum.indices[0] * spectrum.current_step)
    return StandardizedTrace(values, spectrum.current_step, n - len(spectrum), origin)


def autocorrelation(values) -> np.ndarray:
    """R(l) = sum_n y[n] y[n-l] for l = 0..N-1 with implicit zero padding."""
    y = np.asarray(values, dtype=float)
    return np.correlate(y, y, mode="full")[len(y) - 1:]


def _local_maxima(r, min_lag):
    peaks = []
    n = len(r)
    l = max(min_lag, 1)
    while l < n - 1:
        if r[l] > r[l - 1]:
            # walk across a plateau; a maximum must drop on the right
            k = l
            while k + 1 < n and r[k + 1] == r[l]:
                k += 1
            if k + 1 < n and r[k + 1] < r[l]:
                peaks.append(l)
            l = k + 1
        else:
            l += 1
    return peaks


def _refine_lag(r, best: int, max_walk: int = 2) -> float:
    """Sub-sample peak position from the unbiased autocorrelation R(l)/(N-l).

    Zero padding tapers the raw R(l) linearly, which drags broad peaks towards
    small lags. The unbiased estimate removes the taper; its peak is followed
    uphill for at most ``max_walk`` lags and then interpolated with a parabola.
    """
    n = len(r)
    u = r / (n - np.arange(n))
    k = best
    for _ in range(max_walk):
        if 1 < k < n - 2 and u[k + 1] > u[k] and u[k + 1] >= u[k - 1]:
            k += 1
        elif 1 < k < n - 2 and u[k - 1] > u[k]:
            k -= 1
        else:
            break
    if not 0 < k < n - 1:
        return float(best)
    y0, y1, y2 = u[k - 1], u[k], u[k + 1]
    denom = y0 - 2 * y1 + y2
    if denom >= 0:
        return float(k)
    return k + float(np.clip(0.5 * (y0 - y2) / denom, -0.5, 0.5))


def autocorrelation_period(trace: StandardizedTrace, cfg: PeriodConfig = PeriodConfig(),
                           return_acf: bool = False):
    """Period (A) at the highest local maximum of the autocorrelation beyond ``min_lag``."""
    r = autocorrelation(trace.values)
    peaks = [l for l in _local_maxima(r, cfg.min_lag) if r[l] > 0]
    if not peaks:
        raise NoPeriodError("autocorrelation has no positive local maximum")
    best = max(peaks, key=lambda l: (r[l], -l))
    lag = float(best)
    if cfg.refine:
        lag = _refine_lag(r, best)
    period = lag * trace.current_step
    return (period, r) if return_acf else period


def square_wave(i, period: float, phi: float, duty: float):
    """+1 on [phi, phi + duty*period) modulo the period, -1 elsewhere."""
    if not 0 <= duty <= 1:
        raise ValueError("duty outside [0, 1]")
    frac = np.mod((np.asarray(i, dtype=float) - phi) / period, 1.0)
    return np.where(frac < duty, 1.0, -1.0) if duty < 1 else np.ones_like(frac)


def phase_grid(period: float, size: int = 50):
    phis = -period / 2 + period * np.arange(size) / size
    duties = np.linspace(0.0, 1.0, size)
    return phis, duties


def square_wave_loss_grid(trace: StandardizedTrace, period: float, size: int = 50):
    """Loss -R(0) between the trace and the square wave for every (phi, duty) node."""
    phis, duties = phase_grid(period, size)
    i = trace.currents
    frac = np.mod((i[None, :] - phis[:, None]) / period, 1.0)
    waves = np.where(frac[:, None, :] < duties[None, :, None], 1.0, -1.0)
    waves[:, -1, :] = 1.0
    return -(waves @ trace.values)


def _circular_mean(x, period):
    ang = 2 * np.pi * np.asarray(x) / period
    return period * np.angle(np.mean(np.exp(1j * ang))) / (2 * np.pi)


def _circular_dist(a, b, period):
    d = np.mod(a - b + period / 2, period) - period / 2
    return np.abs(d)


def fit_square_wave(trace: StandardizedTrace, period: float, size: int = 50,
                    return_grid: bool = False):
    """Brute-force (phi, duty) maximising the zero-lag correlation with a square wave.

    Excluded slices are zeros, so the optimum is usually a flat valley; the
    node closest to the valley's centre (rising and falling edges averaged
    separately, modulo the period) is returned.
    """
    loss = square_wave_loss_grid(trace, period, size)
    phis, duties = phase_grid(period, size)
    best = loss.min()
    scale = max(np.abs(loss).max(), np.finfo(float).tiny)
    tied = np.argwhere(loss <= best + 1e-12 * scale)
    if len(tied) == 1:
        k, j = tied[0]
    else:
        rise = phis[tied[:, 0]]
        fall = rise + duties[tied[:, 1]] * period
        rise_c = _circular_mean(rise, period)
        fall_c = _circular_mean(fall, period)
        cost = _circular_dist(rise, rise_c, period) + _circular_dist(fall, fall_c, period)
        k, j = tied[int(np.argmin(cost))]
    out = (float(phis[k]), float(duties[j]))
    return out + (loss,) if return_grid else out


def classify_pattern(spectrum: ExtractedSpectrum, cfg: PeriodConfig = PeriodConfig()) -> str:
    """Compare the largest step between neighbouring points with the peak-to-peak range."""
    f = np.asarray(spectrum.f_r, dtype=float)
    if f.size < 2:
        raise ValueError("need at least two points")
    ptp = np.ptp(f)
    if ptp == 0:
        return CONTINUOUS
    ratio = np.max(np.abs(np.diff(f))) / ptp
    if ratio > cfg.anticrossing_ratio:
        return ANTICROSSING
    if ratio < cfg.continuous_ratio:
        return CONTINUOUS
    return AMBIGUOUS


def sweet_spot(phi: float, duty: float, period: float, pattern: str,
               current_range: tuple | None = None) -> list:
    """Sweet-spot candidates: one per decisive pattern, both formulas when ambiguous."""
    cands = []
    if pattern in (ANTICROSSING, AMBIGUOUS):
        cands.append(phi + period * (1 + duty) / 2)
    if pattern in (CONTINUOUS, AMBIGUOUS):
        cands.append(phi + period * duty / 2)
    if not cands:
        raise ValueError(f"unknown pattern {pattern!r}")
    if current_range is not None:
        lo = current_range[0]
        cands = [lo + float(np.mod(c - lo, period)) for c in cands]
    if pattern == AMBIGUOUS:
        cands = sorted(cands)
    return cands


def estimate_period_phase(spectrum: ExtractedSpectrum,
                          cfg: PeriodConfig = PeriodConfig()) -> PeriodPhaseEstimate:
    trace = standardize(spectrum)
    period, acf = autocorrelation_period(trace, cfg, return_acf=True)
    phi, duty, loss = fit_square_wave(trace, period, cfg.grid_size, return_grid=True)
    pattern = classify_pattern(spectrum, cfg)
    rng = (float(trace.currents[0]), float(trace.currents[-1]))
    cands = sweet_spot(phi, duty, period, pattern, rng)
    return PeriodPhaseEstimate(period, phi, duty, pattern, cands, acf, loss)
