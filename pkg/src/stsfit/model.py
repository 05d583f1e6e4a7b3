"""Closed-form transmon / dressed-resonator spectra.

All quantities are SI: frequencies in Hz, currents in A. Every function
broadcasts over numpy arrays so the brute-force search can evaluate a whole
parameter grid in one call.
"""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass

import numpy as np

PARAM_NAMES = ("f_c", "g", "period", "i_ss", "f_ge_max", "d")
# report keys carrying SI units, and display keys with their scale factors
SI_KEYS = dict(zip(PARAM_NAMES, ("f_c_hz", "g_hz", "period_a", "i_ss_a", "f_ge_max_hz", "d")))
DISPLAY_KEYS = dict(zip(PARAM_NAMES, (("f_c_ghz", 1e-9), ("g_mhz", 1e-6), ("period_ua", 1e6),
                                      ("i_ss_ua", 1e6), ("f_ge_max_ghz", 1e-9), ("d", 1.0))))


@dataclass(frozen=True)
class HamiltonianParams:
    """The six model parameters of a qubit-resonator cell."""

    f_c: float
    g: float
    period: float
    i_ss: float
    f_ge_max: float
    d: float

    def __post_init__(self):
        if not (self.f_c > 0 and self.f_ge_max > 0):
            raise ValueError("f_c and f_ge_max must be positive")
        if not self.g >= 0:
            raise ValueError("g must be non-negative")
        if not self.period > 0:
            raise ValueError("period must be positive")
        if not 0 <= self.d <= 1:
            raise ValueError(f"asymmetry d={self.d} outside [0, 1]")

    def to_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in PARAM_NAMES], dtype=float)

    @classmethod
    def from_array(cls, x) -> "HamiltonianParams":
        return cls(*(float(v) for v in x))

    def replace(self, **kw) -> "HamiltonianParams":
        values = asdict(self)
        values.update(kw)
        return HamiltonianParams(**values)

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class TransmonEnergyParams:
    """Junction and charging energies, both expressed as frequencies (Hz)."""

    e_j_sigma: float
    e_c: float
    d: float

    def __post_init__(self):
        if not (self.e_j_sigma > 0 and self.e_c > 0):
            raise ValueError("energies must be positive")
        if not 0 <= self.d <= 1:
            raise ValueError(f"asymmetry d={self.d} outside [0, 1]")


def squid_modulation(d, x):
    """Josephson-energy modulation factor k = sqrt(cos^2 x + d^2 sin^2 x)."""
    d = np.asarray(d, dtype=float)
    if np.any((d < 0) | (d > 1)):
        raise ValueError("asymmetry d outside [0, 1]")
    c = np.cos(x)
    s = np.sin(x)
    return np.sqrt(c * c + d * d * s * s)


def reduced_flux(i, period, i_ss):
    return np.pi * (np.asarray(i, dtype=float) - i_ss) / period


def _f_ge(f_ge_max, d, period, i_ss, i):
    # d is pre-validated by callers on hot paths
    x = reduced_flux(i, period, i_ss)
    c = np.cos(x)
    s = np.sin(x)
    return f_ge_max * np.sqrt(np.sqrt(c * c + d * d * s * s))


def transmon_f_ge(params: HamiltonianParams, i):
    """Qubit g-e transition frequency at coil current ``i``."""
    return _f_ge(params.f_ge_max, params.d, params.period, params.i_ss, i)


def _branches(f_c, g, f_ge):
    mean = 0.5 * (f_c + f_ge)
    half = np.sqrt(g * g + 0.25 * (f_ge - f_c) ** 2)
    return mean + half, mean - half


def dressed_branches(params: HamiltonianParams, i):
    """Upper and lower dressed frequencies ``(f_plus, f_minus)``."""
    return _branches(params.f_c, params.g, transmon_f_ge(params, i))


def _model_frequency(f_c, g, period, i_ss, f_ge_max, d, i, probe_span):
    f_plus, f_minus = _branches(f_c, g, _f_ge(f_ge_max, d, period, i_ss, i))
    return np.where(np.abs(f_plus - f_c) < 0.5 * probe_span, f_plus, f_minus)


def model_shift_array(x, i, probe_span: float):
    """``model_frequency_array(x, i, span) - f_c`` without cancellation.

    Far from resonance the selected branch differs from f_c by a small
    dispersive shift g^2/delta; forming it as a ratio keeps full relative
    precision, which finite-difference derivatives rely on.
    Also returns a boolean mask, True where the upper branch is selected.
    """
    f_c, g, period, i_ss, f_ge_max, d = x
    delta = _f_ge(f_ge_max, d, period, i_ss, i) - f_c
    half = np.sqrt(g * g + 0.25 * delta * delta)
    big = half + 0.5 * np.abs(delta)
    small = g * g / np.where(big > 0, big, 1.0)  # g = delta = 0: both branches sit on f_c
    # upper: delta/2 + half; lower: delta/2 - half; one of them is g^2/big in size
    up = np.where(delta >= 0, big, small)
    down = np.where(delta >= 0, -small, -big)
    use_up = up < 0.5 * probe_span
    return np.where(use_up, up, down), use_up


def model_frequency(params: HamiltonianParams, i, probe_span: float):
    """Resonator-like branch visible inside a probe window of width ``probe_span``.

    The upper branch is used whenever it stays within half a span of f_c,
    otherwise the lower one.
    """
    if not probe_span > 0:
        raise ValueError("probe_span must be positive")
    p = params
    return _model_frequency(p.f_c, p.g, p.period, p.i_ss, p.f_ge_max, p.d, i, probe_span)


def model_frequency_array(x, i, probe_span: float):
    """Same as :func:`model_frequency` for a raw parameter vector (no validation)."""
    f_c, g, period, i_ss, f_ge_max, d = x
    return _model_frequency(f_c, g, period, i_ss, f_ge_max, d, i, probe_span)


def branch_used(params: HamiltonianParams, i, probe_span: float):
    """+1 where the upper branch is selected, -1 for the lower one."""
    f_plus, _ = dressed_branches(params, i)
    return np.where(np.abs(f_plus - params.f_c) < 0.5 * probe_span, 1, -1)


def transmon_level_energy(tp: TransmonEnergyParams, x, m: int):
    """Energy of transmon level ``m`` (asymptotic large E_J/E_C form), in Hz.

    Warns when E_J(x)/E_C drops below 10, where the expansion is unreliable.
    """
    if m < 0 or int(m) != m:
        raise ValueError("level index must be a non-negative integer")
    e_j = tp.e_j_sigma * squid_modulation(tp.d, x)
    if np.any(e_j / tp.e_c < 10):
        warnings.warn("E_J/E_C < 10: transmon level formula is outside its validity range",
                      RuntimeWarning, stacklevel=2)
    return m * np.sqrt(8 * e_j * tp.e_c) - tp.e_c / 12 * (6 * m * m + 6 * m + 3)


def f_ge_max_from_energies(tp: TransmonEnergyParams) -> float:
    return float(np.sqrt(8 * tp.e_j_sigma * tp.e_c) - tp.e_c)


def effective_coupling_params(g_max: float, f_c: float, f_ge_max: float):
    """Map a flux-dependent transmon coupling onto constant effective ``(f_c', g')``.

    The fitted (f_c, g) of a constant-g model are these primed quantities.
    """
    if not (f_c > 0 and f_ge_max > 0 and g_max >= 0):
        raise ValueError("frequencies must be positive")
    return f_c - g_max ** 2 / f_ge_max, g_max * np.sqrt(f_c / f_ge_max)
