"""Synthetic single-tone spectroscopy heatmaps.

A heatmap row is the notch-port transmission of a resonator whose frequency
follows the dressed branch selected by :func:`stsfit.model.model_frequency`,
plus complex Gaussian noise ``(xi1 + 1j*xi2)/sqrt(2)``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from stsfit.model import HamiltonianParams, model_frequency

RNG_NAME = "numpy.PCG64/SeedSequence([seed, row])"


@dataclass(frozen=True)
class NotchNuisanceParams:
    amplitude_a: float = 1.0
    alpha: float = 0.6
    tau: float = 40e-9
    q_loaded: float = 5e3
    q_ext_mag: float = 7.5e3
    q_ext_phase: float = 0.1

    def __post_init__(self):
        if not (self.amplitude_a > 0 and self.q_loaded > 0 and self.q_ext_mag > 0):
            raise ValueError("amplitude and quality factors must be positive")

    @property
    def circle_radius(self) -> float:
        """Radius of the resonance circle in the complex plane."""
        return self.amplitude_a * self.q_loaded / (2 * self.q_ext_mag)


@dataclass
class StsHeatmap:
    """Complex S21 on a (current x probe frequency) grid."""

    currents: np.ndarray
    probe_freqs: np.ndarray
    s21: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.currents = np.asarray(self.currents, dtype=float)
        self.probe_freqs = np.asarray(self.probe_freqs, dtype=float)
        self.s21 = np.asarray(self.s21, dtype=complex)
        n, m = len(self.currents), len(self.probe_freqs)
        if n < 2 or m < 2:
            raise ValueError("heatmap needs at least two currents and two probe frequencies")
        if self.s21.shape != (n, m):
            raise ValueError(f"s21 has shape {self.s21.shape}, expected {(n, m)}")
        if not np.all(np.isfinite(self.s21)):
            raise ValueError("s21 contains non-finite entries")
        steps = np.diff(self.currents)
        if np.any(steps <= 0):
            raise ValueError("currents must be strictly increasing")
        if np.max(np.abs(steps - steps.mean())) > 1e-9 * np.max(np.abs(self.currents)):
            raise ValueError("currents must be uniformly spaced")
        if np.any(np.diff(self.probe_freqs) <= 0):
            raise ValueError("probe frequencies must be strictly increasing")

    @property
    def current_step(self) -> float:
        return float((self.currents[-1] - self.currents[0]) / (len(self.currents) - 1))

    @property
    def probe_span(self) -> float:
        return float(self.probe_freqs[-1] - self.probe_freqs[0])

    def copy(self) -> "StsHeatmap":
        return StsHeatmap(self.currents.copy(), self.probe_freqs.copy(), self.s21.copy(),
                          dict(self.meta))


def notch_s21(f_p, f_r, nuisance: NotchNuisanceParams):
    """Notch-port transmission with cable delay and complex external Q."""
    nu = nuisance
    q_ext = nu.q_ext_mag * np.exp(-1j * nu.q_ext_phase)
    f_p = np.asarray(f_p, dtype=float)
    env = nu.amplitude_a * np.exp(1j * nu.alpha) * np.exp(2j * np.pi * f_p * nu.tau)
    return env * (1 - (nu.q_loaded / q_ext) / (1 + 2j * nu.q_loaded * (f_p / f_r - 1)))


def complex_noise(rng: np.random.Generator, shape, sd: float) -> np.ndarray:
    xi = rng.normal(0.0, sd, size=(2,) + tuple(np.atleast_1d(shape)))
    return (xi[0] + 1j * xi[1]) / np.sqrt(2)


def row_rng(seed: int, row: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(row)]))


def generate_heatmap(truth: HamiltonianParams, nuisance: NotchNuisanceParams, currents,
                     probe_freqs, noise_sd: float = 0.0, seed: int = 0) -> StsHeatmap:
    currents = np.asarray(currents, dtype=float)
    probe_freqs = np.asarray(probe_freqs, dtype=float)
    if currents.size == 0 or probe_freqs.size == 0:
        raise ValueError("empty grid")
    if noise_sd < 0:
        raise ValueError("noise_sd must be non-negative")
    span = probe_freqs[-1] - probe_freqs[0]
    f_r = model_frequency(truth, currents, span)
    s21 = notch_s21(probe_freqs[None, :], f_r[:, None], nuisance)
    if noise_sd > 0:
        for n in range(len(currents)):
            s21[n] += complex_noise(row_rng(seed, n), len(probe_freqs), noise_sd)
    meta = {
        "synthetic": True,
        "seed": int(seed),
        "rng": RNG_NAME,
        "noise_sd": float(noise_sd),
        "truth": truth.as_dict(),
        "nuisance": asdict(nuisance),
        "circle_radius": nuisance.circle_radius,
    }
    return StsHeatmap(currents, probe_freqs, s21, meta)


def compute_snr(circle_radius: float, sigma0: float, sigma1: float = 0.0) -> float:
    """Signal-to-noise ratio with original noise ``sigma0`` and added noise ``sigma1``."""
    if min(circle_radius, sigma0, sigma1) < 0:
        raise ValueError("negative input")
    total = np.hypot(sigma0, sigma1)
    if total == 0:
        raise ZeroDivisionError("both noise levels are zero")
    return float(circle_radius / total)


def noise_sd_for_snr(circle_radius: float, snr: float) -> float:
    return circle_radius / snr


# Reference cells, one per spectroscopy topology. Frequencies in Hz, currents in A.
ANTICROSSING_TRUTH = HamiltonianParams(f_c=6.4e9, g=30e6, period=88e-6, i_ss=37e-6, f_ge_max=8.5e9, d=0.3)

PRESETS = {
    "anticrossing": ANTICROSSING_TRUTH,
    "qubit-above": HamiltonianParams(f_c=6.4e9, g=30e6, period=88e-6, i_ss=37e-6,
                                     f_ge_max=9.5e9, d=0.6),
    "qubit-below": HamiltonianParams(f_c=6.4e9, g=30e6, period=88e-6, i_ss=37e-6,
                                     f_ge_max=5.9e9, d=0.3),
    # qubit 1.3-4.6 GHz above f_c: a weak dispersive ripple that a qubit below fits as well
    "far-detuned": HamiltonianParams(f_c=6.4e9, g=30e6, period=88e-6, i_ss=37e-6,
                                     f_ge_max=11e9, d=0.7),
}


def default_grids(f_c: float = 6.4e9, n_currents: int = 101, n_freqs: int = 101,
                  current_span: float = 200e-6, probe_span: float = 20e6):
    currents = np.linspace(0.0, current_span, n_currents)
    probe_freqs = f_c + np.linspace(-0.5 * probe_span, 0.5 * probe_span, n_freqs)
    return currents, probe_freqs
