"""Small constructors shared by the test modules."""

import numpy as np

from csfmpnp.csfm import CsfmGrid
from csfmpnp.observation import make_dft_pilots, noise_for_snr, observe
from csfmpnp.pnp import PnpConfig, run_csfm_pnp
from csfmpnp.priors import GaussianPrior, GmmPrior

from oracles import crandn, lmmse_direct, random_psd


def make_gaussian(rng, m, scale=None):
    scale = 1.0 / m if scale is None else scale
    return GaussianPrior(crandn(rng, m) / np.sqrt(m), random_psd(rng, m, scale))


def make_gmm(rng, m, k, spread=1.0, scale=None):
    scale = 0.1 / m if scale is None else scale
    w = rng.uniform(0.5, 1.5, k)
    return GmmPrior(w / w.sum(), spread * crandn(rng, k, m), np.array([random_psd(rng, m, scale) for _ in range(k)]))


def oracle_grid(rng, m):
    """Single-component grid with covariance spectrum in [0.5, 1.5] / M and a small sample bank."""
    lam = rng.uniform(0.5, 1.5, m) / m
    q, _ = np.linalg.qr(crandn(rng, m, m))
    prior = GaussianPrior(crandn(rng, m) / np.sqrt(m), (q * lam) @ q.conj().T)
    locs = rng.uniform(0, 10, (8, 2))
    bank = prior.mean + np.sqrt(lam.mean()) * crandn(rng, 8, m)
    grid = CsfmGrid(0, (0.0, 0.0, 10.0, 10.0), prior, GmmPrior.from_gaussian(prior), locs, bank)
    return grid, prior, lam


def pnp_oracle_trial(trial, m=64, iterations=30, snr=10.0):
    """One seeded beta = 1 run on a Gaussian grid.

    A slow penalty continuation (gamma = 1.05) from a large initial penalty,
    with the step coefficient that is optimal for plain gradient descent on
    the quadratic, drives the splitting to the closed-form LMMSE solution.

    Returns the final relative error, the per-iteration distances to the
    target and the trace.
    """
    pilots = make_dft_pilots(m, m)
    rng = np.random.default_rng([2, trial])
    grid, prior, lam = oracle_grid(rng, m)
    h = prior.mean + np.linalg.cholesky(prior.cov) @ crandn(rng, m)
    noise_var = noise_for_snr(pilots, prior.second_moment(), 1.0, snr)
    obs = observe(h, 1.0, pilots, noise_var, noise_seed=trial)
    ratio = noise_var / lam
    a_prime = 1e7
    cfg = PnpConfig(alpha=2 * a_prime / (2 + ratio.min() + ratio.max()), alpha_prime=a_prime, beta=1.0,
                    gamma=1.05, iterations=iterations)
    target = lmmse_direct(obs.y, pilots.X, 1.0, prior.mean, prior.cov, noise_var)
    errors = []
    out, trace = run_csfm_pnp(obs, pilots, grid, (5.0, 5.0), cfg,
                              callback=lambda s: errors.append(np.linalg.norm(s.h - target)))
    scale = np.linalg.norm(target)
    return np.linalg.norm(out - target) / scale, np.array(errors) / scale, trace


def non_increasing(values, slack):
    return all(b <= a + slack for a, b in zip(values, values[1:]))
