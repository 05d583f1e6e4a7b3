"""Per-slice notch-resonator fits and assembly of the f_r(I) spectrum.

Each heatmap row is calibrated by a sequence of partial fits: cable delay,
algebraic circle fit, then the phase-vs-frequency arctan model on the
centred circle. The off-resonant point of the circle yields the
environment amplitude/phase and the external quality factor.
"""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import optimize, stats

from stsfit.synth import NotchNuisanceParams, StsHeatmap, notch_s21

log = logging.getLogger(__name__)

MIN_SLICE_POINTS = 8


class EmptySpectrumError(RuntimeError):
    """Too few slices produced a usable resonance frequency."""


class DegenerateCircleError(ValueError):
    pass


@dataclass(frozen=True)
class ExtractConfig:
    threshold_k: float = 5.0
    # rms of the complex model residual, in units of the fitted circle radius
    rms_bound: float = 0.7
    min_accepted: int = 8
    workers: int = 1


@dataclass
class NotchFitResult:
    f_r: float
    q_loaded: float
    q_ext_mag: float
    q_ext_phase: float
    amplitude_a: float
    alpha: float
    tau: float
    radius: float
    rms_residual: float
    converged: bool
    reason: str = ""

    def nuisance(self) -> NotchNuisanceParams:
        return NotchNuisanceParams(self.amplitude_a, self.alpha, self.tau, self.q_loaded,
                                   self.q_ext_mag, self.q_ext_phase)


class PhaseFit(NamedTuple):
    theta0: float
    q_loaded: float
    f_r: float
    rms: float
    converged: bool


@dataclass
class ExtractedSpectrum:
    """Accepted (current, f_r) points plus bookkeeping of the rejected slices."""

    currents: np.ndarray
    f_r: np.ndarray
    indices: np.ndarray
    excluded: list
    current_step: float
    grid_length: int
    probe_span: float
    mean_f_r: float = field(init=False)
    slices: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.currents = np.asarray(self.currents, dtype=float)
        self.f_r = np.asarray(self.f_r, dtype=float)
        self.indices = np.asarray(self.indices, dtype=int)
        self.mean_f_r = float(np.mean(self.f_r)) if len(self.f_r) else float("nan")

    @property
    def points(self):
        return list(zip(self.currents.tolist(), self.f_r.tolist()))

    def __len__(self):
        return len(self.f_r)

    def shifted(self, d_current=0.0, d_freq=0.0) -> "ExtractedSpectrum":
        return ExtractedSpectrum(self.currents + d_current, self.f_r + d_freq, self.indices,
                                 list(self.excluded), self.current_step, self.grid_length,
                                 self.probe_span)

    @classmethod
    def from_points(cls, currents, f_r, probe_span: float, current_step: float | None = None):
        """Build a spectrum directly from points on a uniform current grid."""
        currents = np.asarray(currents, dtype=float)
        if current_step is None:
            current_step = float(np.min(np.diff(currents))) if currents.size > 1 else 1.0
        idx = np.rint((currents - currents[0]) / current_step).astype(int)
        n = int(idx[-1]) + 1
        excluded = [(int(i), "missing") for i in sorted(set(range(n)) - set(idx.tolist()))]
        return cls(currents, f_r, idx, excluded, current_step, n, probe_span)


def fit_circle(points):
    """Algebraic circle fit with Taubin normalisation.

    Returns ``(center, radius, residual)`` where ``residual`` is the rms
    radial deviation of the points from the fitted circle.
    """
    z = np.asarray(points, dtype=complex)
    if z.size < 3:
        raise DegenerateCircleError("need at least three points")
    centroid = z.mean()
    x = (z - centroid).real
    y = (z - centroid).imag
    r2 = x * x + y * y
    r2_mean = r2.mean()
    if not r2_mean > 0:
        raise DegenerateCircleError("coincident points")
    scale = 2 * np.sqrt(r2_mean)
    design = np.column_stack([(r2 - r2_mean) / scale, x, y])
    _, _, vt = np.linalg.svd(design, full_matrices=False)
    a = vt[-1]
    a0 = a[0] / scale
    if abs(a[0]) < 1e-10:
        raise DegenerateCircleError("points are collinear")
    a3 = -r2_mean * a0
    center = complex(-a[1] / (2 * a0), -a[2] / (2 * a0))
    radius = np.sqrt(a[1] ** 2 + a[2] ** 2 - 4 * a0 * a3) / (2 * abs(a0))
    center = center + centroid
    residual = float(np.sqrt(np.mean((np.abs(z - center) - radius) ** 2)))
    return center, float(radius), residual


def _circle_sse(f, z, tau):
    zz = z * np.exp(-2j * np.pi * f * tau)
    try:
        c, r, _ = fit_circle(zz)
    except DegenerateCircleError:
        return np.inf
    return float(np.sum((np.abs(zz - c) - r) ** 2))


def estimate_delay(probe_freqs, s21, wing: float = 0.2) -> float:
    """Cable delay (s) such that the de-rotated trace is a circle.

    A linear fit to the unwrapped phase on both wings gives the starting
    value, which is refined by minimising the circle-fit residual.
    """
    f = np.asarray(probe_freqs, dtype=float)
    z = np.asarray(s21, dtype=complex)
    if f.size < MIN_SLICE_POINTS:
        raise ValueError("need at least 8 points")
    n_wing = max(2, int(round(wing * f.size)))
    phase = np.unwrap(np.angle(z))
    slopes = [stats.linregress(f[:n_wing], phase[:n_wing]).slope,
              stats.linregress(f[-n_wing:], phase[-n_wing:]).slope]
    tau0 = float(np.mean(slopes)) / (2 * np.pi)

    span = f[-1] - f[0]
    f0 = f - f.mean()

    # search in units of phase turns across the span: +-0.25 turn around the guess
    def cost(u):
        return _circle_sse(f0, z, tau0 + u / span)

    res = optimize.minimize_scalar(cost, bounds=(-0.25, 0.25), method="bounded",
                                   options={"xatol": 1e-12})
    u = res.x if res.fun <= cost(0.0) else 0.0
    return tau0 + u / span


def _wrap(a):
    return (a + np.pi) % (2 * np.pi) - np.pi


def _phase_model(f, theta0, q_loaded, f_r):
    return theta0 + 2 * np.arctan(2 * q_loaded * (1 - f / f_r))


def _phase_guess(f, angles):
    n = len(f)
    k = 2 if n >= 20 else 1
    smooth = np.convolve(angles, np.ones(2 * k + 1) / (2 * k + 1), mode="same")
    smooth[:k] = angles[:k]
    smooth[-k:] = angles[-k:]
    speed = -np.gradient(smooth, f)
    j = int(np.argmax(speed[k:n - k])) + k
    f_r = f[j]
    df = float(np.median(np.diff(f)))
    q_loaded = speed[j] * f_r / 4
    q_loaded = float(np.clip(q_loaded, 2 * f_r / (f[-1] - f[0]), f_r / (2 * df)))
    return float(smooth[j]), q_loaded, float(f_r)


def fit_phase(probe_freqs, centered_angles, guess=None, rms_bound: float = 1.0) -> PhaseFit:
    """Least-squares fit of ``theta0 + 2 arctan(2 Q_l (1 - f/f_r))`` to circle angles.

    Residuals are wrapped to (-pi, pi], so the input may be wrapped or unwrapped.
    """
    f = np.asarray(probe_freqs, dtype=float)
    ang = np.unwrap(np.asarray(centered_angles, dtype=float))
    if f.size < 5:
        raise ValueError("need at least five points")
    theta0, q0, fr0 = guess if guess is not None else _phase_guess(f, ang)
    lw0 = fr0 / q0

    # fit in (theta0, log Q_l, detuning in linewidths) for conditioning
    def resid(p):
        return _wrap(ang - _phase_model(f, p[0], q0 * np.exp(p[1]), fr0 + p[2] * lw0))

    def jac(p):
        q, fr = q0 * np.exp(p[1]), fr0 + p[2] * lw0
        u = 2 * q * (1 - f / fr)
        w = -2 / (1 + u * u)
        return np.column_stack([-np.ones_like(f), w * u, w * 2 * q * f / fr ** 2 * lw0])

    try:
        # "lm" tends to stop early on its xtol test here; trf with Jacobian scaling does not
        sol = optimize.least_squares(resid, [theta0, 0.0, 0.0], jac, method="trf", x_scale="jac",
                                     xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=2000)
        p = sol.x
    except (ValueError, np.linalg.LinAlgError):
        return PhaseFit(theta0, q0, fr0, np.inf, False)
    q_loaded = q0 * np.exp(p[1])
    f_r = fr0 + p[2] * lw0
    rms = float(np.sqrt(np.mean(resid(p) ** 2)))
    ok = bool(np.isfinite(rms) and rms <= rms_bound and f[0] <= f_r <= f[-1] and q_loaded > 0)
    return PhaseFit(float(_wrap(p[0])), float(q_loaded), float(f_r), rms, ok)


def dip_contrast_ok(s21_slice, threshold_k: float) -> bool:
    """Pre-check for a resonance dip: amplitude range vs. a robust noise scale."""
    mag = np.abs(np.asarray(s21_slice))
    d = np.diff(mag)
    sigma = 1.4826 * np.median(np.abs(d - np.median(d))) / np.sqrt(2)
    sigma = max(sigma, 1e-9 * np.median(mag))
    return bool(np.ptp(mag) > threshold_k * sigma)


def _failed(reason, tau=np.nan):
    nan = float("nan")
    return NotchFitResult(nan, nan, nan, nan, nan, nan, float(tau), nan, np.inf, False, reason)


def fit_notch_slice(probe_freqs, s21_slice, rms_bound: float = 0.7) -> NotchFitResult:
    """Fit the full notch-port model to one slice; never raises on bad data."""
    f = np.asarray(probe_freqs, dtype=float)
    z = np.asarray(s21_slice, dtype=complex)
    if f.size < MIN_SLICE_POINTS:
        return _failed("too few points")
    tau = estimate_delay(f, z)
    zc_data = z * np.exp(-2j * np.pi * f * tau)
    try:
        center, radius, _ = fit_circle(zc_data)
    except DegenerateCircleError:
        return _failed("degenerate circle", tau)
    ph = fit_phase(f, np.angle(zc_data - center), rms_bound=np.inf)
    off = center + radius * np.exp(1j * (ph.theta0 + np.pi))
    amp = float(np.abs(off))
    alpha = float(np.angle(off))
    q_ext_mag = ph.q_loaded * amp / (2 * radius)
    q_ext_phase = float(_wrap(ph.theta0 - alpha - np.pi))
    result = NotchFitResult(ph.f_r, ph.q_loaded, q_ext_mag, q_ext_phase, amp, alpha, tau,
                            radius, np.inf, False)
    if not (np.isfinite(ph.f_r) and ph.q_loaded > 0 and amp > 0):
        result.reason = "phase fit failed"
        return result
    model = notch_s21(f, ph.f_r, result.nuisance())
    result.rms_residual = float(np.sqrt(np.mean(np.abs(z - model) ** 2)) / radius)
    df = float(np.median(np.diff(f)))
    linewidth = ph.f_r / ph.q_loaded
    if not f[0] <= ph.f_r <= f[-1]:
        result.reason = "f_r outside probe range"
    elif not df <= linewidth <= f[-1] - f[0]:
        result.reason = "implausible linewidth"
    elif result.rms_residual > rms_bound:
        result.reason = "residual above bound"
    else:
        result.converged = True
    return result


def _slice_task(args):
    f, z, cfg = args
    if len(f) < MIN_SLICE_POINTS:
        return _failed("too few points")
    if not dip_contrast_ok(z, cfg.threshold_k):
        return _failed("no dip")
    return fit_notch_slice(f, z, cfg.rms_bound)


def fit_all_slices(heatmap: StsHeatmap, cfg: ExtractConfig = ExtractConfig()) -> list:
    tasks = [(heatmap.probe_freqs, row, cfg) for row in heatmap.s21]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            return list(pool.map(_slice_task, tasks, chunksize=8))
    return [_slice_task(t) for t in tasks]


def extract_spectrum(heatmap: StsHeatmap, cfg: ExtractConfig = ExtractConfig(),
                     slices: list | None = None) -> ExtractedSpectrum:
    """Resonance frequency for every slice that shows a dip and fits cleanly."""
    if slices is None:
        slices = fit_all_slices(heatmap, cfg)
    idx, excluded = [], []
    for n, res in enumerate(slices):
        if res.converged:
            idx.append(n)
        else:
            excluded.append((n, res.reason))
    log.debug("accepted %d of %d slices", len(idx), len(slices))
    if len(idx) < cfg.min_accepted:
        raise EmptySpectrumError(f"only {len(idx)} slices accepted, need {cfg.min_accepted}")
    idx = np.array(idx, dtype=int)
    spec = ExtractedSpectrum(heatmap.currents[idx], [slices[n].f_r for n in idx], idx, excluded,
                             heatmap.current_step, len(heatmap.currents), heatmap.probe_span)
    spec.slices = slices
    return spec


def write_spectrum_csv(path, heatmap: StsHeatmap, slices: list):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["current_A", "f_r_Hz", "converged"])
        for i, res in zip(heatmap.currents, slices):
            w.writerow([repr(float(i)), repr(float(res.f_r)), int(res.converged)])
