import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from csfmpnp.csfm import CsfmGrid
from csfmpnp.denoise import gaussian_denoiser, identity_denoiser
from csfmpnp.errors import GridMismatchError, InvalidConfigError
from csfmpnp.estimators import estimate_lmmse, estimate_ls
from csfmpnp.observation import PilotSet, make_dft_pilots, observe
from csfmpnp.pnp import (TRACE_HEADER, PnpConfig, PnpState, h_update, pnp_iterate, run_csfm_pnp,
                         schedule_scalars, schedule_update, v_update, write_trace_csv)
from csfmpnp.priors import GaussianPrior, GmmPrior

from helpers import make_gaussian, make_gmm, non_increasing, pnp_oracle_trial
from oracles import crandn


def state(h, v, mu, alpha=0.25, beta=1e-4):
    sigma, delta = schedule_scalars(mu, alpha, beta)
    return PnpState(0, mu, sigma, delta, np.asarray(h, complex), np.asarray(v, complex))


def grid_for_prior(prior, rng, n=6):
    gmm = prior if isinstance(prior, GmmPrior) else GmmPrior.from_gaussian(prior)
    locs = rng.uniform(0, 10, (n, 2))
    chans = gmm.means[0] + 0.1 * crandn(rng, n, gmm.dim)
    stats = gmm.moments()
    return CsfmGrid(0, (0.0, 0.0, 10.0, 10.0), stats, gmm, locs, chans)


class TestConfig:
    @pytest.mark.parametrize("kw", [dict(alpha=0), dict(alpha_prime=-1), dict(beta=0), dict(gamma=1.0),
                                    dict(iterations=0), dict(mu0=0.0)])
    def test_invalid(self, kw):
        with pytest.raises(InvalidConfigError):
            PnpConfig(**kw)

    def test_initial_penalty(self, rng):
        p = make_dft_pilots(4, 2, rho=2.0)
        obs = observe(crandn(rng, 4), 0.5, p, 0.1)
        assert PnpConfig(alpha_prime=0.3).initial_penalty(obs, p) == pytest.approx(0.3 * 2.0 * 0.5 / 0.1)
        assert PnpConfig(mu0=7.0).initial_penalty(obs, p) == 7.0
        p0 = make_dft_pilots(4, 0)
        assert PnpConfig(alpha_prime=0.3).initial_penalty(observe(crandn(rng, 4), 0.5, p0, 0.1), p0) == 0.3


class TestHUpdate:
    def test_no_pilots_returns_v(self, rng):
        p = make_dft_pilots(4, 0)
        obs = observe(crandn(rng, 4), 1.0, p, 1.0)
        v = crandn(rng, 4)
        np.testing.assert_array_equal(h_update(state(v * 0, v, 3.0), obs, p), v)

    def test_data_dominated_limit_is_ls(self, rng):
        p = make_dft_pilots(8, 8)
        h = crandn(rng, 8)
        obs = observe(h, 1.0, p, 1e-6, noiseless=True)
        out = h_update(state(h, crandn(rng, 8), 1e-6), obs, p)
        assert np.linalg.norm(out - estimate_ls(obs, p)) <= 1e-6

    def test_penalty_dominated_limit_is_v(self, rng):
        p = make_dft_pilots(8, 3)
        obs = observe(crandn(rng, 8), 1.0, p, 0.1)
        v = crandn(rng, 8)
        assert np.linalg.norm(h_update(state(v, v, 1e12), obs, p) - v) <= 1e-6

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**31), st.integers(1, 10), st.data(), st.floats(1e-3, 1e3))
    def test_matches_dense_solve(self, seed, m, data, mu):
        rng = np.random.default_rng(seed)
        tau = data.draw(st.integers(1, 2 * m))
        p = PilotSet(crandn(rng, tau, m), rho=1.5)
        obs = observe(crandn(rng, m), 0.7, p, 0.2, seed)
        v = crandn(rng, m)
        a = 1.5 * 0.7
        lhs = a * p.X.conj().T @ p.X + mu * 0.2 * np.eye(m)
        ref = np.linalg.solve(lhs, np.sqrt(a) * p.X.conj().T @ obs.y + mu * 0.2 * v)
        out = h_update(state(v, v, mu), obs, p)
        assert np.linalg.norm(out - ref) <= 1e-9 * max(1.0, np.linalg.norm(ref))


class TestVUpdate:
    def test_zero_step(self, rng):
        s = state(crandn(rng, 3), crandn(rng, 3), 1.0)
        s.delta = 0.0
        np.testing.assert_array_equal(v_update(s, identity_denoiser(), 1e-4), s.v)

    def test_identity_denoiser_full_step(self, rng):
        s = state(crandn(rng, 3), crandn(rng, 3), 2.0, alpha=1.0)
        np.testing.assert_allclose(v_update(s, identity_denoiser(), 1e-4), s.h, atol=1e-14)

    def test_fixed_point_at_prior_mean(self, rng):
        prior = make_gaussian(rng, 4)
        s = state(prior.mean, prior.mean, 3.0)
        assert np.linalg.norm(v_update(s, gaussian_denoiser(prior), 1e-4) - prior.mean) <= 1e-10

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31), st.floats(0.01, 1.0), st.floats(1e-3, 1e3), st.floats(1e-6, 1.0))
    def test_matches_simplified_form(self, seed, alpha, mu, beta):
        rng = np.random.default_rng(seed)
        prior = make_gaussian(rng, 4)
        s = state(crandn(rng, 4), crandn(rng, 4), mu, alpha, beta)
        d = gaussian_denoiser(prior)
        simple = s.v - alpha * (s.v - s.h) - alpha * (s.v - d(s.v, s.sigma))
        assert np.linalg.norm(v_update(s, d, beta) - simple) <= 1e-12 * max(1.0, np.linalg.norm(simple))


class TestSchedule:
    def test_geometric_growth(self):
        s = state(np.zeros(1), np.zeros(1), 1.0)
        cfg = PnpConfig(gamma=2.0)
        for _ in range(3):
            s.mu, s.sigma, s.delta = schedule_update(s, cfg)
        assert s.mu == 8.0

    def test_scalars(self):
        assert schedule_scalars(1e-2, 0.25, 1e-4)[0] == pytest.approx(0.1, abs=1e-15)
        assert schedule_scalars(0.5, 0.25, 1e-4)[1] == 0.5


class TestRun:
    def test_gaussian_closed_form_small(self, rng):
        """Slow continuation with a near-optimal step reaches the LMMSE answer."""
        m = 8
        lam = np.linspace(0.5, 1.5, m) / m
        q, _ = np.linalg.qr(crandn(rng, m, m))
        prior_cov = (q * lam) @ q.conj().T
        prior = GaussianPrior(crandn(rng, m) / np.sqrt(m), prior_cov)
        p = make_dft_pilots(m, m)
        h = prior.mean + np.linalg.cholesky(prior_cov) @ crandn(rng, m)
        obs = observe(h, 1.0, p, 0.1 * np.trace(prior.second_moment()).real / m, 3)
        r = obs.noise_var / lam
        x = 1e7
        cfg = PnpConfig(alpha=2 * x / (2 + r.min() + r.max()), alpha_prime=x, beta=1.0, gamma=1.05, iterations=30)
        out, trace = run_csfm_pnp(obs, p, grid_for_prior(prior, rng), (5.0, 5.0), cfg)
        ref = estimate_lmmse(obs, p, prior)
        assert np.linalg.norm(out - ref) <= 1e-6 * np.linalg.norm(ref)

    def test_schedule_invariants_in_trace(self, rng):
        prior = make_gmm(rng, 4, 2)
        p = make_dft_pilots(4, 2)
        obs = observe(crandn(rng, 4), 1.0, p, 0.1)
        cfg = PnpConfig(iterations=12)
        _, trace = run_csfm_pnp(obs, p, grid_for_prior(prior, rng), (1.0, 1.0), cfg)
        for i, mu, sigma, delta, _, _ in trace:
            assert abs(sigma - np.sqrt(cfg.beta / mu)) <= 1e-12 * sigma
            assert abs(delta - cfg.alpha / mu) <= 1e-12 * delta
        mus = [row[1] for row in trace]
        np.testing.assert_allclose(np.diff(np.log(mus)), np.log(2.0), rtol=1e-12)

    def test_generative_mode(self, rng):
        prior = make_gmm(rng, 4, 3)
        grid = grid_for_prior(prior, rng)
        p = make_dft_pilots(4, 0)
        h0 = grid.sample_channels[0]
        outs = []
        for seed, var in ((1, 0.01), (2, 5.0), (3, 123.0)):
            obs = observe(crandn(rng, 4), 1.0, p, var, seed)
            out, trace = run_csfm_pnp(obs, p, grid, grid.sample_locations[0], PnpConfig(alpha=0.25))
            outs.append(out)
        assert all(o.tobytes() == outs[0].tobytes() for o in outs)
        assert np.all(np.isfinite(outs[0]))
        assert np.linalg.norm(outs[0]) <= 10 * np.linalg.norm(grid.sample_channels, axis=1).max()
        assert all(row[5] == 0.0 for row in trace)
        assert outs[0].tobytes() != h0.tobytes()

    def test_deterministic(self, rng):
        prior = make_gmm(rng, 4, 2)
        grid = grid_for_prior(prior, rng)
        p = make_dft_pilots(4, 3)
        obs = observe(crandn(rng, 4), 1.0, p, 0.1, 5)
        a = run_csfm_pnp(obs, p, grid, (2.0, 2.0))
        b = run_csfm_pnp(obs, p, grid, (2.0, 2.0))
        assert a[0].tobytes() == b[0].tobytes() and a[1] == b[1]

    def test_outside_grid(self, rng):
        grid = grid_for_prior(make_gmm(rng, 2, 1), rng)
        p = make_dft_pilots(2, 2)
        with pytest.raises(GridMismatchError):
            run_csfm_pnp(observe(crandn(rng, 2), 1.0, p, 0.1), p, grid, (11.0, 5.0))

    def test_explicit_denoiser(self, rng):
        p = make_dft_pilots(3, 0)
        obs = observe(crandn(rng, 3), 1.0, p, 1.0)
        h0 = crandn(rng, 3)
        out, _ = pnp_iterate(obs, p, h0, identity_denoiser(), PnpConfig(alpha=0.3))
        np.testing.assert_allclose(out, h0, atol=1e-15)

    def test_trace_csv(self, rng, tmp_path):
        prior = make_gmm(rng, 3, 2)
        p = make_dft_pilots(3, 3)
        _, trace = run_csfm_pnp(observe(crandn(rng, 3), 1.0, p, 0.1), p, grid_for_prior(prior, rng), (1.0, 1.0))
        write_trace_csv(tmp_path / "t.csv", trace)
        lines = (tmp_path / "t.csv").read_text().splitlines()
        assert lines[0] == ",".join(TRACE_HEADER) and len(lines) == 11


def test_gaussian_oracle_convergence_shape():
    """Distances to the closed form and ||h - v|| shrink steadily until rounding level."""
    for trial in range(10):
        err, errors, trace = pnp_oracle_trial(trial)
        gaps = [row[4] for row in trace]
        assert err <= 1e-6
        assert non_increasing(errors[3:], 1e-7)
        assert non_increasing(gaps[-15:], 1e-7)
        # strict decrease while far above the rounding floor
        above = errors[3:][errors[3:] > 1e-6]
        assert np.all(np.diff(above) < 0)
