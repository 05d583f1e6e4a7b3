"""Global least-squares fit of the six-parameter model to an extracted spectrum.

Stage one is an exhaustive grid over (f_c, g, f_ge_max, d) with the period
and sweet spot frozen at their analytic estimates; stage two polishes all
six parameters with a Nelder-Mead simplex.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple

import numpy as np

from stsfit.extract import ExtractedSpectrum
from stsfit.model import PARAM_NAMES, HamiltonianParams, branch_used, model_frequency_array
from stsfit.period import ANTICROSSING, PeriodPhaseEstimate

log = logging.getLogger(__name__)

HINTS = ("auto", "above", "below")


class FitError(RuntimeError):
    pass


@dataclass(frozen=True)
class BruteGridSpec:
    """(min, max, steps) per searched parameter; f_c is an offset from the mean f_r."""

    f_c_offset: tuple = (-1e6, 1e6, 3)
    g: tuple = (20e6, 40e6, 5)
    f_ge_max: tuple = (4e9, 12e9, 80)
    d: tuple = (0.0, 0.9, 9)

    def __post_init__(self):
        for name in ("f_c_offset", "g", "f_ge_max", "d"):
            lo, hi, steps = getattr(self, name)
            if int(steps) != steps or steps < 1 or lo > hi:
                raise ValueError(f"bad grid for {name}: {(lo, hi, steps)}")

    @staticmethod
    def axis(spec) -> np.ndarray:
        lo, hi, steps = spec
        return np.linspace(lo, hi, int(steps)) if steps > 1 else np.array([0.5 * (lo + hi)])

    def axes(self, mean_f_r: float, hint: str = "auto"):
        f_c = mean_f_r + self.axis(self.f_c_offset)
        f_ge = self.axis(self.f_ge_max)
        if hint == "above":
            f_ge = f_ge[f_ge > mean_f_r]
        elif hint == "below":
            f_ge = f_ge[f_ge < mean_f_r]
        if f_ge.size == 0:
            raise FitError(f"no f_ge_max grid nodes {hint} the resonator")
        return f_c, self.axis(self.g), f_ge, self.axis(self.d)

    @property
    def size(self) -> int:
        return int(np.prod([s[2] for s in (self.f_c_offset, self.g, self.f_ge_max, self.d)]))

    def with_override(self, key: str, lo: float, hi: float, steps: int) -> "BruteGridSpec":
        key = {"f_c": "f_c_offset"}.get(key, key)
        if key not in ("f_c_offset", "g", "f_ge_max", "d"):
            raise KeyError(f"unknown grid parameter {key!r}")
        return replace(self, **{key: (float(lo), float(hi), int(steps))})


@dataclass(frozen=True)
class NelderMeadConfig:
    xtol: float = 1e-6
    ftol: float = 1e-4
    fatol: float = 0.0
    max_iter: int = 2000
    restarts: int = 3
    alpha: float = 1.0
    gamma: float = 2.0
    rho: float = 0.5
    sigma: float = 0.5


class NelderMeadResult(NamedTuple):
    x: np.ndarray
    fun: float
    iterations: int
    evaluations: int
    converged: bool


@dataclass
class FitOutcome:
    params: HamiltonianParams
    loss_sum: float
    rms_per_point: float
    residuals: np.ndarray
    branch_used: np.ndarray
    hint_used: str
    brute_params: HamiltonianParams | None = None
    brute_loss: float = float("nan")
    i_ss_seed: float = float("nan")
    nm_iterations: int = 0
    nm_converged: bool = True
    alternates: list = field(default_factory=list)
    timing: dict = field(default_factory=dict)

    @property
    def n_points(self) -> int:
        return len(self.residuals)


def loss(spectrum: ExtractedSpectrum, params, probe_span: float | None = None) -> float:
    """Sum of squared deviations of f_r from the selected model branch (Hz^2)."""
    if len(spectrum) == 0:
        raise ValueError("empty spectrum")
    span = spectrum.probe_span if probe_span is None else probe_span
    x = params.to_array() if isinstance(params, HamiltonianParams) else np.asarray(params)
    r = spectrum.f_r - model_frequency_array(x, spectrum.currents, span)
    return float(r @ r)


def brute_losses(spectrum: ExtractedSpectrum, axes, period: float, i_ss: float,
                 probe_span: float) -> np.ndarray:
    """Loss on the full (f_c, g, f_ge_max, d) grid, shape (n_fc, n_g, n_fge, n_d)."""
    f_c, g, f_ge_max, d = (np.asarray(a, dtype=float) for a in axes)
    i = spectrum.currents
    x = np.pi * (i - i_ss) / period
    c2, s2 = np.cos(x) ** 2, np.sin(x) ** 2
    root_k = (c2[None, :] + (d * d)[:, None] * s2[None, :]) ** 0.25   # (n_d, N)
    f_ge = f_ge_max[:, None, None] * root_k[None, :, :]                  # (n_fge, n_d, N)
    fc = f_c[:, None, None, None, None]
    gg = g[None, :, None, None, None]
    delta = f_ge[None, None] - fc
    half = np.sqrt(gg * gg + 0.25 * delta * delta)
    f_plus = fc + 0.5 * delta + half
    # f_plus - f_c = half + delta/2 is never negative
    upper = half + 0.5 * delta < 0.5 * probe_span
    model = np.where(upper, f_plus, f_plus - 2 * half)
    r = spectrum.f_r - model
    return np.einsum("...n,...n->...", r, r)


def brute_search(spectrum: ExtractedSpectrum, grid: BruteGridSpec, period: float, i_ss: float,
                 probe_span: float | None = None, hint: str = "auto"):
    """Best grid node; ties resolve to the lexicographically smallest index."""
    span = spectrum.probe_span if probe_span is None else probe_span
    axes = grid.axes(spectrum.mean_f_r, hint)
    losses = brute_losses(spectrum, axes, period, i_ss, span)
    k = np.unravel_index(int(np.argmin(losses)), losses.shape)
    f_c, g, f_ge, d = (float(a[j]) for a, j in zip(axes, k))
    params = HamiltonianParams(f_c=f_c, g=g, period=period, i_ss=i_ss, f_ge_max=f_ge, d=d)
    return params, float(losses[k])


def nelder_mead(objective: Callable, x0, step, cfg: NelderMeadConfig = NelderMeadConfig()
                ) -> NelderMeadResult:
    """Downhill simplex minimisation.

    ``step`` sets the initial simplex edge per coordinate; the search runs in
    coordinates scaled by it, so ``xtol`` is relative to those edges.
    """
    x0 = np.asarray(x0, dtype=float)
    step = np.asarray(step, dtype=float) * np.ones_like(x0)
    n = x0.size

    def f(u):
        return float(objective(x0 + step * u))

    simplex = np.vstack([np.zeros(n), np.eye(n)])
    values = np.array([f(u) for u in simplex])
    if not np.isfinite(values[0]):
        raise FitError("objective is not finite at the starting point")
    n_eval = n + 1
    it = 0
    converged = False
    while it < cfg.max_iter:
        order = np.argsort(values, kind="stable")
        simplex, values = simplex[order], values[order]
        diam = np.max(np.abs(simplex[1:] - simplex[0]))
        spread = values[-1] - values[0]
        if diam <= cfg.xtol and (spread <= cfg.ftol * abs(values[0]) or spread <= cfg.fatol):
            converged = True
            break
        it += 1
        centroid = simplex[:-1].mean(axis=0)
        worst = simplex[-1]
        xr = centroid + cfg.alpha * (centroid - worst)
        fr = f(xr)
        n_eval += 1
        if fr < values[0]:
            xe = centroid + cfg.gamma * (xr - centroid)
            fe = f(xe)
            n_eval += 1
            if fe < fr:
                simplex[-1], values[-1] = xe, fe
            else:
                simplex[-1], values[-1] = xr, fr
            continue
        if fr < values[-2]:
            simplex[-1], values[-1] = xr, fr
            continue
        if fr < values[-1]:
            xc = centroid + cfg.rho * (xr - centroid)
            fc = f(xc)
            n_eval += 1
            if fc <= fr:
                simplex[-1], values[-1] = xc, fc
                continue
        else:
            xc = centroid + cfg.rho * (worst - centroid)
            fc = f(xc)
            n_eval += 1
            if fc < values[-1]:
                simplex[-1], values[-1] = xc, fc
                continue
        simplex[1:] = simplex[0] + cfg.sigma * (simplex[1:] - simplex[0])
        values[1:] = [f(u) for u in simplex[1:]]
        n_eval += n
    best = int(np.argmin(values))
    return NelderMeadResult(x0 + step * simplex[best], float(values[best]), it, n_eval,
                            converged)


def _fold(x):
    """Map a raw simplex vertex into the physical region (d reflected, g >= 0)."""
    x = np.array(x, dtype=float)
    x[1] = abs(x[1])
    d = abs(x[5]) % 2.0
    x[5] = 2.0 - d if d > 1.0 else d
    return x


def spectrum_objective(spectrum: ExtractedSpectrum, probe_span: float):
    i, f_r = spectrum.currents, spectrum.f_r

    def objective(x):
        if x[0] <= 0 or x[2] <= 0 or x[4] <= 0:
            return np.inf
        r = f_r - model_frequency_array(_fold(x), i, probe_span)
        return r @ r

    return objective


def simplex_steps(period: float) -> np.ndarray:
    return np.array([0.1e6, 1e6, period / 200, period / 200, 50e6, 0.02])


def polish(spectrum: ExtractedSpectrum, start: HamiltonianParams, probe_span: float,
           cfg: NelderMeadConfig = NelderMeadConfig()):
    """Nelder-Mead on all six parameters, restarted from the best vertex until it stalls."""
    objective = spectrum_objective(spectrum, probe_span)
    x = start.to_array()
    fx = objective(x)
    steps = simplex_steps(start.period)
    iters = 0
    converged = False
    for attempt in range(cfg.restarts + 1):
        res = nelder_mead(objective, x, steps, cfg)
        iters += res.iterations
        converged = res.converged
        gain = fx - res.fun
        if res.fun <= fx:
            x, fx = _fold(res.x), res.fun
        if attempt > 0 and gain <= 1e-9 * max(fx, 0.0):
            break
        steps = steps * 0.1 if res.converged else steps
    return HamiltonianParams.from_array(x), float(fx), iters, converged


def _normalise_i_ss(params: HamiltonianParams, origin: float) -> HamiltonianParams:
    return params.replace(i_ss=origin + float(np.mod(params.i_ss - origin, params.period)))


def make_outcome(spectrum: ExtractedSpectrum, params: HamiltonianParams, probe_span: float,
                 hint: str, **extra) -> FitOutcome:
    res = spectrum.f_r - model_frequency_array(params.to_array(), spectrum.currents, probe_span)
    total = float(res @ res)
    return FitOutcome(params=params, loss_sum=total, rms_per_point=float(np.sqrt(total / len(res))),
                      residuals=res, branch_used=branch_used(params, spectrum.currents, probe_span),
                      hint_used=hint, **extra)


def fit_single(spectrum: ExtractedSpectrum, period: float, i_ss: float, probe_span: float,
               hint: str = "auto", grid: BruteGridSpec = BruteGridSpec(),
               nm: NelderMeadConfig = NelderMeadConfig()) -> FitOutcome:
    t0 = time.perf_counter()
    brute, brute_loss = brute_search(spectrum, grid, period, i_ss, probe_span, hint)
    t1 = time.perf_counter()
    params, _, iters, conv = polish(spectrum, brute, probe_span, nm)
    t2 = time.perf_counter()
    params = _normalise_i_ss(params, float(spectrum.currents[0]
                                           - spectrum.indices[0] * spectrum.current_step))
    return make_outcome(spectrum, params, probe_span, hint, brute_params=brute,
                        brute_loss=brute_loss, i_ss_seed=i_ss, nm_iterations=iters,
                        nm_converged=conv, timing={"brute_s": t1 - t0, "nm_s": t2 - t1})


def qubit_crosses_resonator(params: HamiltonianParams) -> bool:
    f_min = params.f_ge_max * np.sqrt(params.d)
    return bool(f_min <= params.f_c <= params.f_ge_max)


def fit_full(spectrum: ExtractedSpectrum, estimate: PeriodPhaseEstimate,
             probe_span: float | None = None, hint: str = "auto",
             grid: BruteGridSpec = BruteGridSpec(), nm: NelderMeadConfig = NelderMeadConfig(),
             tie_ratio: float = 1.2) -> FitOutcome:
    """Brute + simplex fit for every sweet-spot candidate (and both qubit placements
    when a non-crossing fit leaves the placement undetermined); lowest loss wins.

    Runners-up whose rms per point is within ``tie_ratio`` of the winner are
    attached as ``alternates``.
    """
    if hint not in HINTS:
        raise ValueError(f"hint must be one of {HINTS}")
    if len(spectrum) == 0:
        raise ValueError("empty spectrum")
    span = spectrum.probe_span if probe_span is None else probe_span
    seeds = list(estimate.i_ss_candidates)
    outcomes = []
    for i0 in seeds:
        try:
            outcomes.append(fit_single(spectrum, estimate.period, i0, span, hint, grid, nm))
        except FitError as exc:
            log.info("seed %.6g A skipped: %s", i0, exc)
    if not outcomes:
        raise FitError("no sweet-spot seed produced a fit")
    best = min(outcomes, key=lambda o: o.loss_sum)
    if hint == "auto" and estimate.pattern != ANTICROSSING \
            and not qubit_crosses_resonator(best.params):
        log.info("non-crossing fit: comparing qubit above and below the resonator")
        for h in ("above", "below"):
            for i0 in seeds:
                try:
                    outcomes.append(fit_single(spectrum, estimate.period, i0, span, h, grid, nm))
                except FitError as exc:
                    log.info("hint %s skipped: %s", h, exc)
    outcomes.sort(key=lambda o: o.loss_sum)
    best = outcomes[0]
    best.timing = {k: sum(o.timing.get(k, 0.0) for o in outcomes) for k in ("brute_s", "nm_s")}
    best_side = qubit_side(best.params)
    seen = {best_side}
    for o in outcomes[1:]:
        side = qubit_side(o.params)
        if side in seen:
            continue
        seen.add(side)
        if o.rms_per_point < tie_ratio * max(best.rms_per_point, np.finfo(float).tiny):
            best.alternates.append(o)
    return best


def qubit_side(params: HamiltonianParams) -> str:
    if qubit_crosses_resonator(params):
        return "crossing"
    return "above" if params.f_ge_max * np.sqrt(params.d) > params.f_c else "below"


def params_table(params: HamiltonianParams) -> dict:
    return dict(zip(PARAM_NAMES, params.to_array().tolist()))
