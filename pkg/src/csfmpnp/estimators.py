"""Classical channel estimators and the Gaussian regularised-MAP solutions.

Objectives are written for circularly-symmetric complex Gaussian noise, so
the data term is ``||sqrt(rho xi) X h - y||^2 / sigma^2`` and gradients use
the conjugate Wirtinger derivative ``d/dh*``.  With that convention the
regularised MAP estimate at ``beta = 1`` under a Gaussian prior is exactly
the LMMSE estimate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import (DivergenceError, InvalidConfigError, InvalidRegularizerError,
                     NoPilotError, RankDeficiencyError, ShapeError)
from .observation import Observation, PilotSet
from .priors import GaussianPrior, GmmPrior, cn_logpdf, cho_factor_jitter, responsibilities

GRAM_RCOND = 1e-12


def _check_dims(obs: Observation, pilots: PilotSet):
    if obs.tau != pilots.tau:
        raise ShapeError(f"observation has {obs.tau} samples, pilots have {pilots.tau} rows")


def _gain(obs, pilots):
    return np.sqrt(pilots.rho * obs.xi)


def pseudo_inverse(X):
    """Left inverse ``(X^H X)^-1 X^H`` for tall/square ``X``, minimum-norm ``X^H (X X^H)^-1`` otherwise."""
    tau, m = X.shape
    Xh = X.conj().T
    gram = Xh @ X if tau >= m else X @ Xh
    try:
        low = linalg.cholesky(gram, lower=True)
    except linalg.LinAlgError:
        raise RankDeficiencyError("pilot Gram matrix is singular") from None
    d = np.abs(np.diag(low)) ** 2
    if d.min() <= GRAM_RCOND * d.max():
        raise RankDeficiencyError("pilot Gram matrix is numerically singular")
    if tau >= m:
        return linalg.cho_solve((low, True), Xh)
    return Xh @ linalg.cho_solve((low, True), np.eye(tau))


def estimate_ls(obs: Observation, pilots: PilotSet):
    """Least-squares (equivalently ML under CSCG noise) estimate ``X^+ y / sqrt(rho xi)``."""
    _check_dims(obs, pilots)
    if pilots.tau == 0:
        raise NoPilotError("least squares needs at least one pilot")
    return pseudo_inverse(pilots.X) @ obs.y / _gain(obs, pilots)


def _posterior_mean(obs, pilots, mean, cov):
    """Gaussian posterior mean and the innovation covariance's Cholesky factor."""
    g = _gain(obs, pilots)
    X = pilots.X
    cxh = cov @ X.conj().T
    s = g * g * (X @ cxh) + obs.noise_var * np.eye(pilots.tau)
    low = cho_factor_jitter(s)
    resid = obs.y - g * (X @ mean)
    return mean + g * cxh @ linalg.cho_solve((low, True), resid), low


def estimate_lmmse(obs: Observation, pilots: PilotSet, prior: GaussianPrior):
    """``h_bar + g C X^H (g^2 X C X^H + sigma^2 I)^-1 (y - g X h_bar)`` with ``g = sqrt(rho xi)``."""
    _check_dims(obs, pilots)
    if pilots.tau == 0:
        return prior.mean.copy()
    return _posterior_mean(obs, pilots, prior.mean, prior.cov)[0]


def mmse_gmm_posterior(obs: Observation, pilots: PilotSet, prior: GmmPrior):
    """Posterior responsibilities and per-component posterior means under a mixture prior."""
    _check_dims(obs, pilots)
    g = _gain(obs, pilots)
    log_lik = np.empty(prior.n_components)
    means = np.empty((prior.n_components, prior.dim), dtype=complex)
    for c in range(prior.n_components):
        means[c], low = _posterior_mean(obs, pilots, prior.means[c], prior.covs[c])
        log_lik[c] = cn_logpdf(obs.y[None], g * (pilots.X @ prior.means[c]), low)[0][0]
    resp, _ = responsibilities(np.log(prior.weights), log_lik)
    return resp, means


def estimate_mmse_gmm(obs: Observation, pilots: PilotSet, prior: GmmPrior, return_responsibilities=False):
    """Exact posterior mean ``E{h | y}`` under a complex Gaussian-mixture prior.

    Each component yields a Gaussian posterior mean; they are averaged with
    the responsibilities ``w_c CN(y; g X m_c, g^2 X S_c X^H + sigma^2 I)``
    normalised in the log domain.  Without pilots this is the mixture mean.
    """
    if pilots.tau == 0:
        _check_dims(obs, pilots)
        est, resp = prior.weights @ prior.means, prior.weights.copy()
    else:
        resp, means = mmse_gmm_posterior(obs, pilots, prior)
        est = resp @ means
    return (est, resp) if return_responsibilities else est


@dataclass(frozen=True)
class UniformPrior:
    """Flat prior: the regularised MAP estimate reduces to least squares."""


@dataclass(frozen=True)
class DiracPrior:
    location: np.ndarray


RMAP_VARIANTS = ("scaled-correction", "exact-minimizer")


def estimate_rmap_gaussian(obs: Observation, pilots: PilotSet, prior, beta, variant="exact-minimizer"):
    """Regularised MAP estimate with weight ``beta`` on the log-prior.

    ``variant="scaled-correction"`` multiplies the LMMSE correction term by
    ``beta``; ``"exact-minimizer"`` returns the true minimiser, i.e. the
    LMMSE formula with the prior covariance scaled by ``1/beta``.  Both agree
    at ``beta = 1``.  A :class:`UniformPrior` gives the LS estimate and a
    :class:`DiracPrior` its location.
    """
    if not beta > 0:
        raise InvalidRegularizerError("beta must be positive")
    if variant not in RMAP_VARIANTS:
        raise InvalidConfigError(f"unknown variant {variant!r}; choose from {RMAP_VARIANTS}")
    if isinstance(prior, UniformPrior):
        return estimate_ls(obs, pilots)
    if isinstance(prior, DiracPrior):
        return np.asarray(prior.location, dtype=complex).copy()
    _check_dims(obs, pilots)
    if pilots.tau == 0:
        return prior.mean.copy()
    if variant == "exact-minimizer":
        return _posterior_mean(obs, pilots, prior.mean, prior.cov / beta)[0]
    lmmse = _posterior_mean(obs, pilots, prior.mean, prior.cov)[0]
    return prior.mean + beta * (lmmse - prior.mean)


def gaussian_log_prior(prior: GaussianPrior):
    """``h -> (log CN(h; mean, cov), d/dh* log CN)`` for use with :func:`sd_map_solve`."""
    low = cho_factor_jitter(prior.cov)

    def f(h):
        lp, solved = cn_logpdf(np.asarray(h)[None], prior.mean, low)
        return lp[0], -solved[0]
    return f


def data_gradient(h, obs: Observation, pilots: PilotSet):
    """Conjugate gradient of ``||g X h - y||^2 / sigma^2``."""
    g = _gain(obs, pilots)
    if pilots.tau == 0:
        return np.zeros_like(h)
    return g * pilots.X.conj().T @ (g * (pilots.X @ h) - obs.y) / obs.noise_var


def data_misfit(h, obs: Observation, pilots: PilotSet):
    if pilots.tau == 0:
        return 0.0
    r = _gain(obs, pilots) * (pilots.X @ h) - obs.y
    return float(np.vdot(r, r).real / obs.noise_var)


def sd_map_solve(obs: Observation, pilots: PilotSet, log_prior_gradient, beta, step_sizes,
                 max_iters=1000, tol=1e-10, h0=None, patience=10):
    """Steepest descent on ``||g X h - y||^2 / sigma^2 - beta log p(h)``.

    Parameters
    ----------
    log_prior_gradient : callable
        Maps ``h`` to ``d/dh* log p(h)``, or to a ``(log p(h), gradient)``
        tuple; with the value available the objective is monitored for
        divergence, otherwise the gradient norm is.
    step_sizes : float, sequence or callable
        Constant step, per-iteration steps, or ``i -> step``.
    h0 : array, optional
        Starting point (zeros by default).

    Returns
    -------
    (h, n_iter)
    """
    _check_dims(obs, pilots)
    if not beta > 0:
        raise InvalidRegularizerError("beta must be positive")
    if callable(step_sizes):
        step = step_sizes
    elif np.ndim(step_sizes) == 0:
        step = lambda i: float(step_sizes)  # noqa: E731
    else:
        seq = list(step_sizes)
        step = lambda i: seq[min(i, len(seq) - 1)]  # noqa: E731
    h = np.zeros(pilots.n_antennas, complex) if h0 is None else np.array(h0, dtype=complex)

    def evaluate(v):
        out = log_prior_gradient(v)
        if isinstance(out, tuple):
            lp, score = out
            grad = data_gradient(v, obs, pilots) - beta * score
            return data_misfit(v, obs, pilots) - beta * lp, grad
        grad = data_gradient(v, obs, pilots) - beta * out
        return float(np.linalg.norm(grad)), grad

    value, grad = evaluate(h)
    worse = 0
    for i in range(max_iters):
        delta = step(i)
        if not delta > 0:
            raise InvalidConfigError("step sizes must be positive")
        h_next = h - delta * grad
        with np.errstate(over="ignore", invalid="ignore"):
            change = np.linalg.norm(h_next - h) / max(np.linalg.norm(h), np.finfo(float).tiny)
        h = h_next
        new_value, grad = evaluate(h)
        worse = worse + 1 if new_value > value else 0
        if worse >= patience or not np.isfinite(new_value):
            raise DivergenceError(f"objective increased for {worse} consecutive iterations")
        value = new_value
        if change < tol:
            return h, i + 1
    return h, max_iters
