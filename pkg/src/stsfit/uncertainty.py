"""Noise variance, Fisher information, Cramer-Rao bounds and Hessian PCA.

Derivatives of the model are central finite differences. The Fisher matrix
is assembled twice, from the outer product of model gradients and from the
second-derivative form, and the two are cross-checked on every call.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from stsfit.extract import ExtractedSpectrum
from stsfit.model import (PARAM_NAMES, SI_KEYS, HamiltonianParams, model_frequency_array,
                          model_shift_array)

log = logging.getLogger(__name__)

REL_STEP = 1e-7
# absolute step floors: f_c, g, period, i_ss, f_ge_max, d
STEP_FLOORS = np.array([1.0, 1.0, 1e-12, 1e-12, 1.0, 1e-9])


class DegreesOfFreedomError(ValueError):
    pass


def estimate_sigma2(residuals, n_params: int = 6) -> float:
    """Residual variance with the linear-regression correction chi^2 / (N - M)."""
    r = np.asarray(residuals, dtype=float)
    dof = r.size - n_params
    if dof <= 0:
        raise DegreesOfFreedomError(f"{r.size} residuals cannot support {n_params} parameters")
    return float(r @ r / dof)


def fd_steps(x) -> np.ndarray:
    return np.maximum(REL_STEP * np.abs(np.asarray(x, dtype=float)), STEP_FLOORS)


def _stencil(x, h):
    """Offsets for a central-difference gradient and Hessian in len(x) dims."""
    n = len(x)
    pts = [np.zeros(n)]
    for a in range(n):
        for s in (1, -1):
            e = np.zeros(n)
            e[a] = s
            pts.append(e)
    for a in range(n):
        for b in range(a + 1, n):
            for sa, sb in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
                e = np.zeros(n)
                e[a], e[b] = sa, sb
                pts.append(e)
    offs = np.array(pts)
    return x[None, :] + offs * h[None, :]


def _assemble(values, h):
    """Gradient and Hessian from stencil values of shape (n_stencil, ...)."""
    n = len(h)
    v0 = values[0]
    grad = np.empty((n,) + v0.shape)
    hess = np.empty((n, n) + v0.shape)
    for a in range(n):
        vp, vm = values[1 + 2 * a], values[2 + 2 * a]
        grad[a] = (vp - vm) / (2 * h[a])
        hess[a, a] = (vp - 2 * v0 + vm) / h[a] ** 2
    k = 1 + 2 * n
    for a in range(n):
        for b in range(a + 1, n):
            pp, pm, mp, mm = values[k:k + 4]
            k += 4
            hess[a, b] = hess[b, a] = (pp - pm - mp + mm) / (4 * h[a] * h[b])
    return grad, hess


def _stencil_model(pts, i, span):
    """Model minus the centre's f_c at every stencil point, and the branch masks."""
    mu, up = [], []
    for p in pts:
        shift, u = model_shift_array(p, i, span)
        mu.append((p[0] - pts[0][0]) + shift)
        up.append(u)
    return np.array(mu), np.array(up)


def model_gradient_hessian(params, i, probe_span: float, steps=None):
    """Finite-difference gradient and Hessian of the model frequency at currents ``i``.

    Returns ``(gradient, hessian, smooth)`` with shapes (6, N), (6, 6, N), (N,).
    ``smooth`` is False where the stencil straddles a branch switch.
    """
    x = params.to_array() if isinstance(params, HamiltonianParams) else np.asarray(params, float)
    i = np.atleast_1d(np.asarray(i, dtype=float))
    h = fd_steps(x) if steps is None else np.asarray(steps, float)
    pts = _stencil(x, h)
    mu, up = _stencil_model(pts, i, probe_span)
    smooth = np.all(up == up[0], axis=0)
    grad, hess = _assemble(mu, h)
    return grad, hess, smooth


@dataclass
class FisherInfo:
    matrix: np.ndarray
    analytic: np.ndarray
    n_excluded: int
    identity_error: float


def fisher_forms(spectrum: ExtractedSpectrum, params, sigma2: float,
                 probe_span: float | None = None) -> FisherInfo:
    """Fisher matrix as sum grad(mu) grad(mu)^T / sigma^2 and via second derivatives.

    The second form evaluates [H(mu^2) - 2 mu H(mu)] / (2 sigma^2) with mu
    measured from its value at ``params``; the expression is invariant to that
    constant offset, which keeps the squared-model differences well conditioned.
    """
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    span = spectrum.probe_span if probe_span is None else probe_span
    x = params.to_array() if isinstance(params, HamiltonianParams) else np.asarray(params, float)
    i = spectrum.currents
    h = fd_steps(x)
    pts = _stencil(x, h)
    mu, up = _stencil_model(pts, i, span)
    keep = np.all(up == up[0], axis=0)
    n_excl = int(np.count_nonzero(~keep))
    if n_excl:
        warnings.warn(f"{n_excl} points straddle a branch switch and are left out of the "
                      "Fisher matrix", RuntimeWarning, stacklevel=2)
    mu = mu[:, keep]
    centred = mu - mu[0]
    grad, hess = _assemble(mu, h)
    _, hess_sq = _assemble(centred ** 2, h)
    outer = np.einsum("an,bn->ab", grad, grad) / sigma2
    analytic = np.einsum("abn->ab", hess_sq - 2 * centred[0] * hess) / (2 * sigma2)
    norm = np.linalg.norm(outer)
    err = float(np.linalg.norm(analytic - outer) / norm) if norm > 0 else 0.0
    return FisherInfo(outer, analytic, n_excl, err)


def fisher_matrix(spectrum: ExtractedSpectrum, params, sigma2: float,
                  probe_span: float | None = None) -> np.ndarray:
    return fisher_forms(spectrum, params, sigma2, probe_span).matrix


@dataclass
class Crlb:
    sd: np.ndarray
    unbounded: np.ndarray
    covariance: np.ndarray


def crlb(fisher, floor: float = 1e-14) -> Crlb:
    """Lower bounds on the estimator standard deviations, sqrt(diag(F^-1)).

    F is first scaled to unit diagonal; eigen-directions below ``floor``
    times the largest eigenvalue are treated as unconstrained and every
    parameter loading on them is reported as unbounded (sd = inf).
    """
    F = np.asarray(fisher, dtype=float)
    F = 0.5 * (F + F.T)
    n = F.shape[0]
    diag = np.diag(F).copy()
    dead = ~(diag > 0)
    scale = np.where(dead, 1.0, np.sqrt(np.where(dead, 1.0, diag)))
    C = F / np.outer(scale, scale)
    C[dead, :] = 0.0
    C[:, dead] = 0.0
    w, v = np.linalg.eigh(C)
    good = w > floor * max(w.max(), 0.0)
    inv = (v[:, good] / w[good]) @ v[:, good].T
    loads = np.abs(v[:, ~good]).max(axis=1) if np.any(~good) else np.zeros(n)
    unbounded = dead | (loads > 1e-6)
    cov = inv / np.outer(scale, scale)
    sd = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    sd[unbounded] = np.inf
    return Crlb(sd, unbounded, cov)


def hessian_pca(matrix, normalize: bool = True):
    """Eigen-decomposition of a (log-likelihood) Hessian, eigenvalues ascending.

    With ``normalize`` the matrix is first scaled to unit diagonal so the
    principal axes do not depend on the units of the parameters. Each
    eigenvector (a column) has its largest-magnitude component positive.
    """
    H = np.asarray(matrix, dtype=float)
    H = 0.5 * (H + H.T)
    if normalize:
        d = np.sqrt(np.abs(np.diag(H)))
        d[d == 0] = 1.0
        H = H / np.outer(d, d)
    w, v = np.linalg.eigh(H)
    for k in range(v.shape[1]):
        j = np.argmax(np.abs(v[:, k]))
        if v[j, k] < 0:
            v[:, k] = -v[:, k]
    return w, v


@dataclass
class UncertaintyReport:
    sigma2: float
    fisher: np.ndarray
    crlb_sd: np.ndarray
    unbounded: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    n_excluded: int
    identity_error: float

    def as_dict(self) -> dict:
        return {
            "sigma2_hz2": self.sigma2,
            "param_order": [SI_KEYS[k] for k in PARAM_NAMES],
            "fisher_si": self.fisher.tolist(),
            "crlb_sd": {SI_KEYS[k]: (None if u else float(s)) for k, s, u in
                        zip(PARAM_NAMES, self.crlb_sd, self.unbounded)},
            "unbounded": {SI_KEYS[k]: bool(u) for k, u in zip(PARAM_NAMES, self.unbounded)},
            # eigenvectors of the unit-diagonal (correlation-scaled) Fisher matrix
            "hessian_eigenpairs": [
                {"eigenvalue": float(w), "eigenvector": v.tolist()}
                for w, v in zip(self.eigenvalues, self.eigenvectors.T)
            ],
            "excluded_points": self.n_excluded,
            "fisher_identity_rel_err": self.identity_error,
        }


def uncertainty_report(spectrum: ExtractedSpectrum, params: HamiltonianParams,
                       probe_span: float | None = None, sigma2: float | None = None,
                       n_params: int = 6) -> UncertaintyReport:
    span = spectrum.probe_span if probe_span is None else probe_span
    if sigma2 is None:
        res = spectrum.f_r - model_frequency_array(params.to_array(), spectrum.currents, span)
        sigma2 = estimate_sigma2(res, n_params)
    if sigma2 <= 0:
        # a perfect fit carries no noise scale; fall back to the float resolution of f_r
        sigma2 = (np.finfo(float).eps * spectrum.mean_f_r) ** 2
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        info = fisher_forms(spectrum, params, sigma2, span)
    bound = crlb(info.matrix)
    w, v = hessian_pca(info.matrix)
    return UncertaintyReport(sigma2, info.matrix, bound.sd, bound.unbounded, w, v,
                             info.n_excluded, info.identity_error)


@dataclass
class Sigma2MonteCarlo:
    sigma2: float
    estimates: np.ndarray

    @property
    def mean_ratio(self) -> float:
        return float(self.estimates.mean() / self.sigma2)

    @property
    def standard_error(self) -> float:
        """Standard error of ``mean_ratio``."""
        return float(self.estimates.std(ddof=1) / self.sigma2 / np.sqrt(self.estimates.size))


def sigma2_monte_carlo(params: HamiltonianParams, currents, sigma: float, runs: int = 5000,
                       probe_span: float = 20e6, seed: int = 0) -> Sigma2MonteCarlo:
    """Refit noisy copies of the exact model and collect chi^2 / (N - M) each time.

    Fits are local (Levenberg-Marquardt from the truth, in coordinates scaled by
    the CRLB of a single realisation) so the check isolates the variance
    estimator from the global search.
    """
    i = np.asarray(currents, dtype=float)
    x0 = params.to_array()
    clean = model_frequency_array(x0, i, probe_span)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        spec = ExtractedSpectrum.from_points(i, clean, probe_span)
        scale = crlb(fisher_matrix(spec, params, sigma ** 2, probe_span)).sd
    scale = np.where(np.isfinite(scale) & (scale > 0), scale, np.maximum(np.abs(x0), 1.0) * 1e-6)
    rng = np.random.default_rng(seed)
    out = np.empty(runs)
    for k in range(runs):
        y = clean + rng.normal(0.0, sigma, i.size)
        res = least_squares(lambda u: (y - model_frequency_array(x0 + u * scale, i, probe_span))
                            / sigma, np.zeros(x0.size), method="lm", xtol=1e-12, ftol=1e-12)
        out[k] = estimate_sigma2(res.fun * sigma, x0.size)
    return Sigma2MonteCarlo(sigma ** 2, out)
