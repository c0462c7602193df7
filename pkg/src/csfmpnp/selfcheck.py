"""Fast invariant checks runnable without the test suite.

Each check builds a small seeded instance, compares against an independent
closed form and returns ``(name, passed, detail)``.
"""

from __future__ import annotations

import os
import tempfile

import numpy as np

from .csfm import CsfmGrid, CsfmStore, GridPartition, fit_gmm_em, load_csfm, save_csfm
from .denoise import NoisyChannel, gaussian_denoiser, gmm_log_density, score_from_denoiser, smoothed_prior
from .estimators import estimate_lmmse, estimate_ls, estimate_mmse_gmm
from .harness import nmse
from .observation import make_dft_pilots, observe
from .pnp import PnpConfig, pnp_iterate
from .priors import GaussianPrior, GmmPrior


def random_cov(rng, m, scale=1.0):
    a = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
    return scale * (a @ a.conj().T / (2 * m) + 0.1 * np.eye(m))


def random_gaussian(rng, m):
    mean = (rng.standard_normal(m) + 1j * rng.standard_normal(m)) / np.sqrt(2 * m)
    return GaussianPrior(mean, random_cov(rng, m, 1.0 / m))


def rel(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def check_tweedie(rng):
    prior = random_gaussian(rng, 8)
    h = prior.mean + rng.standard_normal(8) + 1j * rng.standard_normal(8)
    sigma = 0.3
    score = score_from_denoiser(gaussian_denoiser(prior), NoisyChannel(h, sigma))
    _, exact = gmm_log_density(h, smoothed_prior(GmmPrior.from_gaussian(prior), sigma))
    err = rel(score, exact)
    return "tweedie score (gaussian)", err < 1e-10, f"rel err {err:.2e}"


def check_ls(rng):
    m = 16
    pilots = make_dft_pilots(m, m)
    h = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    est = estimate_ls(observe(h, 1.0, pilots, 1.0, noiseless=True), pilots)
    err = nmse(h, est)
    return "LS exact without noise", err <= 1e-20, f"nmse {err:.2e}"


def check_single_component_mmse(rng):
    m, tau = 8, 4
    prior = random_gaussian(rng, m)
    pilots = make_dft_pilots(m, tau)
    obs = observe(prior.mean, 1.0, pilots, 0.1, noise_seed=int(rng.integers(1 << 30)))
    a = estimate_mmse_gmm(obs, pilots, GmmPrior.from_gaussian(prior))
    b = estimate_lmmse(obs, pilots, prior)
    err = rel(a, b)
    return "single-component MMSE equals LMMSE", err < 1e-8, f"rel err {err:.2e}"


def check_pnp_no_pilot(rng):
    m = 8
    prior = random_gaussian(rng, m)
    pilots = make_dft_pilots(m, 0)
    h0 = prior.mean + 0.1 * (rng.standard_normal(m) + 1j * rng.standard_normal(m))
    outs = [pnp_iterate(observe(h0, 1.0, pilots, var, noise_seed=s), pilots, h0,
                        gaussian_denoiser(prior), PnpConfig())[0]
            for s, var in ((1, 0.1), (2, 10.0))]
    ok = np.array_equal(outs[0], outs[1])
    return "no-pilot output independent of noise", ok, "bit-identical" if ok else "differs"


def check_persistence(rng):
    m = 4
    x = rng.standard_normal((60, m)) + 1j * rng.standard_normal((60, m))
    fit = fit_gmm_em(x, 2, seed=0)
    part = GridPartition((0.0, 0.0), 10.0, 1, 1)
    locs = rng.uniform(0, 10, (5, 2))
    grid = CsfmGrid(0, part.bounds(0), GaussianPrior(x.mean(0), np.cov(x.T, bias=True)), fit.prior,
                    locs, x[:5])
    fd, path = tempfile.mkstemp(suffix=".csfm")
    os.close(fd)
    try:
        save_csfm(CsfmStore(part, {0: grid}), path)
        with open(path, "rb") as fh:
            first = fh.read()
        save_csfm(load_csfm(path), path)
        with open(path, "rb") as fh:
            ok = fh.read() == first
    finally:
        os.unlink(path)
    monotone = bool(np.all(np.diff(fit.log_likelihood) >= -1e-9))
    return "CSFM round trip and EM monotonicity", ok and monotone, f"bytes equal={ok}, monotone={monotone}"


CHECKS = (check_tweedie, check_ls, check_single_component_mmse, check_pnp_no_pilot, check_persistence)


def run_selfcheck(seed=0, verbose=True):
    """Run every check; returns ``True`` when all pass."""
    rng = np.random.default_rng(seed)
    ok = True
    for check in CHECKS:
        name, passed, detail = check(rng)
        ok &= passed
        if verbose:
            print(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")
    return ok
