from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from csfmpnp.configfile import InvariantViolationError
from csfmpnp.errors import InvalidConfigError, ParseError, UndefinedMetricError
from csfmpnp.harness import (CSV_HEADER, SweepConfig, nmse, nmse_db, default_schedule, parse_config,
                             read_rows, run_sweep, timing_path)

from oracles import crandn


class TestNmse:
    def test_examples(self, rng):
        h = crandn(rng, 5, 4)
        assert nmse(h, h) == 0.0
        assert nmse(h, np.zeros_like(h)) == pytest.approx(1.0)
        assert nmse_db(h, np.zeros_like(h)) == pytest.approx(0.0, abs=1e-12)
        assert nmse_db([1.0], [1.0 - np.sqrt(0.1)]) == pytest.approx(-10.0)

    def test_zero_truth(self):
        with pytest.raises(UndefinedMetricError):
            nmse([[0.0, 0.0]], [[1.0, 0.0]])

    def test_shape_mismatch(self):
        with pytest.raises(InvalidConfigError):
            nmse(np.ones((2, 3)), np.ones((3, 3)))

    @given(st.integers(0, 2**31), st.integers(1, 6))
    def test_nonnegative_and_per_trial_mean(self, seed, k):
        rng = np.random.default_rng(seed)
        h, e = crandn(rng, k, 3) + 0.1, crandn(rng, k, 3)
        ref = np.mean([np.sum(np.abs(a - b) ** 2) / np.sum(np.abs(a) ** 2) for a, b in zip(h, e)])
        assert nmse(h, e) >= 0 and nmse(h, e) == pytest.approx(ref, rel=1e-12)


class TestSchedule:
    def test_short_regime(self):
        s = default_schedule(1.0, "short")
        assert s.alpha == pytest.approx(0.25, abs=1e-15)
        assert (s.alpha_prime, s.beta, s.iterations) == (0.1875, 1e-4, 10)
        assert default_schedule(1e30, "short").alpha == pytest.approx(0.5, abs=1e-6)

    def test_long_regime(self):
        s = default_schedule(1e30, "long")
        assert s.alpha == pytest.approx(0.4, abs=1e-6)
        assert (s.alpha_prime, s.beta, s.iterations) == (2.25, 1e-4, 20)
        assert default_schedule(10.0, "long").alpha == pytest.approx(0.4 / (1 + np.exp(-1.0)))

    @pytest.mark.parametrize("snr", [0.0, -1.0])
    def test_domain(self, snr):
        with pytest.raises(InvalidConfigError):
            default_schedule(snr)

    def test_config(self):
        cfg = default_schedule(1.0).config()
        assert (cfg.alpha, cfg.gamma, cfg.iterations) == (0.25, 2.0, 10)


def write_config(root, body):
    path = root / "sweep.cfg"
    path.write_text(body)
    return path


class TestParseConfig:
    def test_minimal(self, tmp_path):
        cfg = parse_config(write_config(tmp_path, "[sweep]\nscene = a.cfg\ncsfm = b.csfm\n"))
        assert cfg.trials == 500 and cfg.taus == (16,) and cfg.snr_db == (0.0,) and cfg.workers == 1
        assert cfg.scene == str(tmp_path / "a.cfg") and cfg.output == str(tmp_path / "sweep.csv")
        assert cfg.pnp == {}

    def test_zero_trials(self, tmp_path):
        with pytest.raises(InvariantViolationError, match="trials"):
            parse_config(write_config(tmp_path, "[sweep]\nscene = a\ncsfm = b\ntrials = 0\n"))

    def test_unknown_key(self, tmp_path):
        with pytest.raises(ParseError, match="line 4"):
            parse_config(write_config(tmp_path, "[sweep]\nscene = a\ncsfm = b\nfoo = 1\n"))

    def test_unknown_estimator(self, tmp_path):
        with pytest.raises(InvariantViolationError, match="estimators"):
            parse_config(write_config(tmp_path, "[sweep]\nscene = a\ncsfm = b\nestimators = ls, magic\n"))

    def test_pnp_overrides(self, tmp_path):
        cfg = parse_config(write_config(tmp_path, "[sweep]\nscene = a\ncsfm = b\n[pnp]\nbeta = 0.01\n"))
        assert cfg.pnp == {"beta": 0.01}

    def test_missing_section(self, tmp_path):
        with pytest.raises(ParseError):
            parse_config(write_config(tmp_path, "[pnp]\nbeta = 1\n"))

    def test_invariants(self):
        with pytest.raises(InvalidConfigError):
            SweepConfig(scene=None, csfm=None, trials=0)
        with pytest.raises(InvalidConfigError):
            SweepConfig(scene=None, csfm=None, snr_db=())
        with pytest.raises(InvalidConfigError):
            SweepConfig(scene=None, csfm=None, estimators=())


class TestRunSweep:
    def test_ls_noiseless_full_pilots(self, mini_world):
        _, scene, store = mini_world
        cfg = SweepConfig(scene, store, estimators=("ls",), taus=(16,), snr_db=(0.0, 20.0), trials=20,
                          noiseless=True)
        rows = run_sweep(cfg, write=False).rows
        assert len(rows) == 2 and all(r[6] <= 1e-20 for r in rows)

    def test_csv_layout_and_determinism(self, mini_world, tmp_path):
        root, _, _ = mini_world
        body = (f"[sweep]\nscene = {root / 'scene.cfg'}\ncsfm = {root / 'world.csfm'}\n"
                "estimators = ls, lmmse, mmse-gmm, csfm-nn, csfm-pnp\ntaus = 4, 0\nsnr_db = -5, 5\n"
                "trials = 8\nseed = 3\noutput = out.csv\n")
        cfg = parse_config(write_config(tmp_path, body))
        run_sweep(cfg)
        first = (tmp_path / "out.csv").read_bytes()
        run_sweep(cfg)
        assert (tmp_path / "out.csv").read_bytes() == first
        run_sweep(replace(cfg, workers=3))
        assert (tmp_path / "out.csv").read_bytes() == first
        rows = read_rows(tmp_path / "out.csv")
        assert tuple(rows[0]) == CSV_HEADER and len(rows) == 2 * 2 * 5
        assert (tmp_path / "out.timing.csv").exists() and timing_path("a/b.csv") == "a/b.timing.csv"
        no_pilot_ls = [r for r in rows if r["tau"] == "0" and r["estimator"] == "ls"]
        assert all(r["failures"] == "8" for r in no_pilot_ls)
        pnp = [r for r in rows if r["tau"] == "0" and r["estimator"] == "csfm-pnp"]
        assert pnp[0]["nmse"] == pnp[1]["nmse"]

    def test_missing_grid_counts_failures(self, mini_world):
        _, scene, store = mini_world
        partial = type(store)(store.partition, {0: store.grids[0]})
        cfg = SweepConfig(scene, partial, estimators=("lmmse",), taus=(4,), snr_db=(0.0,), trials=40)
        row = run_sweep(cfg, write=False).rows[0]
        assert 0 < row[5] < 40 and row[4] == 40 and np.isfinite(row[6])

    def test_grid_restriction(self, mini_world):
        _, scene, store = mini_world
        partial = type(store)(store.partition, {0: store.grids[0]})
        cfg = SweepConfig(scene, partial, estimators=("lmmse",), taus=(4,), trials=10, grids=(0,))
        assert run_sweep(cfg, write=False).rows[0][5] == 0
