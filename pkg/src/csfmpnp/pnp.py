"""Plug-and-play channel estimation driven by a CSFM grid denoiser.

Half-quadratic splitting of the regularised MAP objective: a closed-form
data-consistency step for ``h``, one denoiser-driven gradient step for
``v``, and a geometric penalty schedule ``mu <- gamma mu`` with

    sigma_i = sqrt(beta / mu_i),   delta_i = alpha / mu_i.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg

from .csfm import CsfmGrid, nn_lookup
from .denoise import DenoiserHandle, gmm_denoiser
from .errors import GridMismatchError, InvalidConfigError, NumericalError, ShapeError
from .estimators import data_misfit
from .observation import Observation, PilotSet


@dataclass(frozen=True)
class PnpConfig:
    """Algorithm parameters.

    ``alpha_prime`` sets the initial penalty ``mu_0 = alpha' rho xi / sigma^2``
    so that ``mu_0 sigma^2`` matches the scale of ``rho xi X^H X``.  Without
    pilots that balance is undefined and ``mu_0 = alpha'`` is used, which
    keeps the output independent of the noise level.  ``mu0`` overrides both.
    """

    alpha: float = 0.25
    alpha_prime: float = 0.1875
    beta: float = 1e-4
    gamma: float = 2.0
    iterations: int = 10
    mu0: float | None = None

    def __post_init__(self):
        if not self.alpha > 0:
            raise InvalidConfigError("alpha must be positive")
        if not self.alpha_prime > 0:
            raise InvalidConfigError("alpha_prime must be positive")
        if not self.beta > 0:
            raise InvalidConfigError("beta must be positive")
        if not self.gamma > 1:
            raise InvalidConfigError("gamma must exceed 1")
        if int(self.iterations) < 1:
            raise InvalidConfigError("iterations must be >= 1")
        if self.mu0 is not None and not self.mu0 > 0:
            raise InvalidConfigError("mu0 must be positive")

    def initial_penalty(self, obs: Observation, pilots: PilotSet):
        if self.mu0 is not None:
            return float(self.mu0)
        if pilots.tau == 0:
            return float(self.alpha_prime)
        return float(self.alpha_prime * pilots.rho * obs.xi / obs.noise_var)


@dataclass
class PnpState:
    i: int
    mu: float
    sigma: float
    delta: float
    h: np.ndarray
    v: np.ndarray
    trace: list = field(default_factory=list)


def schedule_scalars(mu, alpha, beta):
    """``(sigma, delta)`` tied to the penalty."""
    return float(np.sqrt(beta / mu)), float(alpha / mu)


def init_state(h0, mu0, config: PnpConfig) -> PnpState:
    sigma, delta = schedule_scalars(mu0, config.alpha, config.beta)
    h0 = np.array(h0, dtype=complex)
    return PnpState(0, float(mu0), sigma, delta, h0, h0.copy())


def h_update(state: PnpState, obs: Observation, pilots: PilotSet):
    """``(rho xi X^H X + mu sigma^2 I)^-1 (sqrt(rho xi) X^H y + mu sigma^2 v)``."""
    if obs.tau != pilots.tau or state.v.size != pilots.n_antennas:
        raise ShapeError("observation, pilots and iterate disagree in size")
    if pilots.tau == 0:
        return state.v.copy()
    a = pilots.rho * obs.xi
    pen = state.mu * obs.noise_var
    if not pen > 0:
        raise NumericalError("penalty times noise variance must be positive")
    Xh = pilots.X.conj().T
    rhs = np.sqrt(a) * (Xh @ obs.y) + pen * state.v
    if pilots.tau < pilots.n_antennas:
        # Woodbury: the tau x tau system is cheaper and better conditioned.
        inner = pen * np.eye(pilots.tau) + a * (pilots.X @ Xh)
        return (rhs - a * Xh @ linalg.solve(inner, pilots.X @ rhs, assume_a="pos")) / pen
    return linalg.solve(a * (Xh @ pilots.X) + pen * np.eye(pilots.n_antennas), rhs, assume_a="pos")


def v_update(state: PnpState, denoiser: DenoiserHandle, beta):
    """One gradient step on ``mu ||h - v||^2 - beta log p(v)`` using the denoiser's score.

    ``state.h`` must already hold the updated ``h``.
    """
    v = state.v
    prior_grad = beta / state.sigma ** 2 * (v - denoiser(v, state.sigma))
    return v - state.delta * (state.mu * (v - state.h) + prior_grad)


def schedule_update(state: PnpState, config: PnpConfig):
    """Next ``(mu, sigma, delta)``."""
    mu = config.gamma * state.mu
    return (mu, *schedule_scalars(mu, config.alpha, config.beta))


def pnp_iterate(obs: Observation, pilots: PilotSet, h0, denoiser: DenoiserHandle, config: PnpConfig,
                callback=None):
    """Run the alternating updates from ``h0``; returns ``(h_I, trace)``.

    Trace rows are ``(i, mu, sigma, delta, ||h - v||, data misfit)`` recorded
    after the updates of iteration ``i``.  ``callback(state)``, if given, sees
    the state after each iteration's ``h`` and ``v`` updates.
    """
    state = init_state(h0, config.initial_penalty(obs, pilots), config)
    for i in range(int(config.iterations)):
        state.h = h_update(state, obs, pilots)
        state.v = v_update(state, denoiser, config.beta)
        if not (np.all(np.isfinite(state.h)) and np.all(np.isfinite(state.v))):
            raise NumericalError(f"iterate became non-finite at iteration {i}")
        state.trace.append((i, state.mu, state.sigma, state.delta,
                            float(np.linalg.norm(state.h - state.v)),
                            data_misfit(state.h, obs, pilots)))
        if callback is not None:
            callback(state)
        state.mu, state.sigma, state.delta = schedule_update(state, config)
        state.i = i + 1
    return state.h, state.trace


def run_csfm_pnp(obs: Observation, pilots: PilotSet, grid: CsfmGrid, q, config: PnpConfig = PnpConfig(),
                 denoiser: DenoiserHandle | None = None, callback=None):
    """Estimate the channel at ``q`` starting from the grid's nearest stored sample.

    The grid's mixture prior supplies the denoiser unless one is given.
    """
    if not grid.contains(q):
        raise GridMismatchError(f"location {tuple(np.ravel(q)[:2])} is outside grid {grid.grid_id}")
    h0 = nn_lookup(grid, q)
    return pnp_iterate(obs, pilots, h0, denoiser or gmm_denoiser(grid.gmm), config, callback)


TRACE_HEADER = ("iteration", "mu", "sigma", "delta", "residual", "data_misfit")


def write_trace_csv(path, trace):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_HEADER)
        for row in trace:
            w.writerow([row[0], *(repr(float(v)) for v in row[1:])])


def with_alpha(config: PnpConfig, alpha):
    return replace(config, alpha=alpha)
