"""Monte-Carlo NMSE sweeps over pilots, SNR and estimators.

Result CSV (schema version 1), one row per ``(tau, snr_db, estimator)``::

    schema_version,tau,snr_db,estimator,trials,failures,nmse,nmse_db

Wall-clock times go to a sidecar ``<output>.timing.csv`` so that the
result file itself is byte-reproducible.
"""

from __future__ import annotations

import csv
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

from .configfile import Key, apply_schema, boolean, floats, ints, parse_entries, split_blocks, words
from .csfm import CsfmStore, load_csfm, nn_lookup
from .errors import CsfmPnpError, InvalidConfigError, ParseError, UndefinedMetricError
from .estimators import estimate_lmmse, estimate_ls, estimate_mmse_gmm
from .observation import make_dft_pilots, noise_for_snr, observe
from .pnp import PnpConfig, run_csfm_pnp
from .scene import SceneConfig, load_scene, synthesize_channel

SCHEMA_VERSION = 1
CSV_HEADER = ("schema_version", "tau", "snr_db", "estimator", "trials", "failures", "nmse", "nmse_db")
ESTIMATORS = ("ls", "lmmse", "mmse-gmm", "csfm-nn", "csfm-pnp")


def nmse(truth, estimates):
    """Mean over trials of ``||h - h_hat||^2 / ||h||^2``."""
    truth = np.atleast_2d(np.asarray(truth, dtype=complex))
    estimates = np.atleast_2d(np.asarray(estimates, dtype=complex))
    if truth.shape != estimates.shape or truth.shape[0] == 0:
        raise InvalidConfigError("truth and estimates must be non-empty and equally shaped")
    power = np.sum(np.abs(truth) ** 2, axis=1)
    if np.any(power == 0):
        raise UndefinedMetricError("NMSE is undefined for a zero-norm channel")
    return float(np.mean(np.sum(np.abs(truth - estimates) ** 2, axis=1) / power))


def to_db(x):
    return 10.0 * np.log10(x)


def nmse_db(truth, estimates):
    return float(to_db(nmse(truth, estimates)))


@dataclass(frozen=True)
class StepSchedule:
    alpha: float
    alpha_prime: float
    beta: float
    iterations: int

    def config(self, gamma=2.0) -> PnpConfig:
        return PnpConfig(self.alpha, self.alpha_prime, self.beta, gamma, self.iterations)


def default_schedule(snr, regime="short") -> StepSchedule:
    """SNR-dependent step coefficient and companion settings.

    ``short`` (few pilots, e.g. 16): ``alpha = 1 / (2 (1 + exp(-log10 snr)))``
    with ``alpha' = 0.1875, beta = 1e-4, I = 10``.  ``long`` (full pilots):
    ``alpha = 2 / (5 (1 + exp(-log10 snr)))`` with ``alpha' = 2.25,
    beta = 1e-4, I = 20``.  ``snr`` is linear.
    """
    if not snr > 0:
        raise InvalidConfigError("SNR must be positive")
    sig = 1.0 / (1.0 + np.exp(-np.log10(snr))) if np.isfinite(snr) else 1.0
    if regime == "short":
        return StepSchedule(0.5 * sig, 0.1875, 1e-4, 10)
    if regime == "long":
        return StepSchedule(0.4 * sig, 2.25, 1e-4, 20)
    raise InvalidConfigError(f"unknown regime {regime!r}")


@dataclass(frozen=True)
class SweepConfig:
    scene: Any
    csfm: Any
    estimators: tuple = ("ls", "lmmse", "csfm-pnp")
    taus: tuple = (16,)
    snr_db: tuple = (0.0,)
    trials: int = 500
    seed: int = 0
    output: Any = None
    grids: tuple = ()
    workers: int = 1
    noiseless: bool = False
    rho: float = 1.0
    pnp: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.trials < 1:
            raise InvalidConfigError("trials must be >= 1")
        if not self.snr_db:
            raise InvalidConfigError("SNR grid is empty")
        if not self.estimators:
            raise InvalidConfigError("estimator list is empty")
        unknown = set(self.estimators) - set(ESTIMATORS)
        if unknown:
            raise InvalidConfigError(f"unknown estimators {sorted(unknown)}; choose from {ESTIMATORS}")
        if self.workers < 1:
            raise InvalidConfigError("workers must be >= 1")


def _positive(v):
    return v > 0


SWEEP_KEYS = {
    "scene": Key(str),
    "csfm": Key(str),
    "estimators": Key(words, ("ls", "lmmse", "csfm-pnp"), lambda v: set(v) <= set(ESTIMATORS),
                      f"each estimator in {ESTIMATORS}"),
    "taus": Key(ints(), (16,), lambda v: len(v) > 0 and min(v) >= 0, "non-empty, each >= 0"),
    "snr_db": Key(floats(), (0.0,), lambda v: len(v) > 0, "non-empty"),
    "trials": Key(int, 500, lambda v: v >= 1, "K >= 1"),
    "seed": Key(int, 0),
    "output": Key(str, "sweep.csv"),
    "grids": Key(ints(), (), lambda v: min(v, default=0) >= 0, "grid ids >= 0"),
    "workers": Key(int, 1, lambda v: v >= 1, ">= 1"),
    "noiseless": Key(boolean, False),
    "rho": Key(float, 1.0, _positive, "> 0"),
}
PNP_KEYS = {
    "alpha": Key(float, None, _positive, "> 0"),
    "alpha_prime": Key(float, None, _positive, "> 0"),
    "beta": Key(float, None, _positive, "> 0"),
    "gamma": Key(float, None, lambda v: v > 1, "> 1"),
    "iterations": Key(int, None, lambda v: v >= 1, ">= 1"),
}


def parse_config_text(text, base_dir=".") -> SweepConfig:
    """Parse ``[sweep]`` (required) and ``[pnp]`` (optional overrides) blocks.

    Relative ``scene``, ``csfm`` and ``output`` paths resolve against ``base_dir``.
    """
    sweep, pnp = None, {}
    for section, line, entries in split_blocks(parse_entries(text)):
        if section == "sweep" and sweep is None:
            sweep = apply_schema(entries, SWEEP_KEYS, section, line)
        elif section == "pnp" and not pnp:
            pnp = {k: v for k, v in apply_schema(entries, PNP_KEYS, section, line).items() if v is not None}
        elif section in ("sweep", "pnp"):
            raise ParseError(f"duplicate [{section}] section", line)
        else:
            raise ParseError(f"unknown section [{section}]", line)
    if sweep is None:
        raise ParseError("missing [sweep] section")
    base = Path(base_dir)
    for key in ("scene", "csfm", "output"):
        sweep[key] = str(base / sweep[key])
    return SweepConfig(pnp=pnp, **sweep)


def parse_config(path) -> SweepConfig:
    with open(path) as fh:
        return parse_config_text(fh.read(), Path(path).parent)


def resolve_inputs(config: SweepConfig):
    scene = config.scene if isinstance(config.scene, SceneConfig) else load_scene(config.scene)
    store = config.csfm if isinstance(config.csfm, CsfmStore) else load_csfm(config.csfm)
    return scene, store


def _seed(*words_):
    return int(np.random.SeedSequence(list(words_)).generate_state(1)[0])


def draw_location(scene: SceneConfig, store: CsfmStore, grids, master_seed, trial):
    """Seeded test location for a trial; shared by every SNR and pilot length."""
    rng = np.random.default_rng(_seed(master_seed, 0, trial))
    if grids:
        gid = grids[int(rng.integers(len(grids)))]
        x0, y0, x1, y1 = store.partition.bounds(gid)
    else:
        x0, y0, (x1, y1) = 0.0, 0.0, scene.area_extent
    return np.array([rng.uniform(x0, x1), rng.uniform(y0, y1)])


def pnp_config_for(config: SweepConfig, tau, m, snr):
    """Default schedule for the pilot regime, with ``[pnp]`` overrides applied.

    Without pilots the SNR is undefined; ``alpha`` is then taken at SNR = 1.
    """
    regime = "short" if tau < m else "long"
    sched = default_schedule(snr if tau else 1.0, regime)
    return replace(sched.config(), **config.pnp)


def run_trial(config: SweepConfig, scene: SceneConfig, store: CsfmStore, trial, tau_idx, snr_idx):
    """Squared-error ratios per estimator for one trial (``None`` where it failed)."""
    tau = config.taus[tau_idx]
    snr = 10.0 ** (config.snr_db[snr_idx] / 10.0)
    q = draw_location(scene, store, config.grids, config.seed, trial)
    out, times = {}, {}
    try:
        h, xi = synthesize_channel(scene, q)
        grid = store.grid_for(q)
    except CsfmPnpError:
        return {e: None for e in config.estimators}, {}
    pilots = make_dft_pilots(h.size, tau, config.rho)
    noise_var = noise_for_snr(pilots, grid.stats.second_moment(), xi, snr) if tau else 1.0
    obs = observe(h, xi, pilots, noise_var, _seed(config.seed, 1, tau_idx, snr_idx, trial),
                  noiseless=config.noiseless)
    power = float(np.vdot(h, h).real)
    for name in config.estimators:
        t0 = time.perf_counter()
        try:
            if name == "ls":
                est = estimate_ls(obs, pilots)
            elif name == "lmmse":
                est = estimate_lmmse(obs, pilots, grid.stats)
            elif name == "mmse-gmm":
                est = estimate_mmse_gmm(obs, pilots, grid.gmm)
            elif name == "csfm-nn":
                est = nn_lookup(grid, q)
            else:
                est = run_csfm_pnp(obs, pilots, grid, q, pnp_config_for(config, tau, h.size, snr))[0]
            d = h - est
            out[name] = float(np.vdot(d, d).real) / power
        except CsfmPnpError:
            out[name] = None
        times[name] = time.perf_counter() - t0
    return out, times


_WORKER = {}


def _init_worker(config, scene, store):
    _WORKER.update(config=config, scene=scene, store=store)


def _run_chunk(jobs):
    w = _WORKER
    return [run_trial(w["config"], w["scene"], w["store"], *job) for job in jobs]


@dataclass
class SweepResult:
    rows: list
    timing: list

    def to_csv(self, path):
        write_rows(path, self.rows)


def run_sweep(config: SweepConfig, write=True) -> SweepResult:
    """Run every ``(tau, snr, trial)`` job and aggregate NMSE per estimator.

    Jobs are independent and seeded from ``(seed, tau index, snr index,
    trial)``; aggregation is by index, so output does not depend on worker
    count or completion order.
    """
    scene, store = resolve_inputs(config)
    jobs = [(k, ti, si) for ti in range(len(config.taus))
            for si in range(len(config.snr_db)) for k in range(config.trials)]
    if config.workers == 1:
        results = [run_trial(config, scene, store, *job) for job in jobs]
    else:
        n = config.workers
        chunks = [jobs[i::n] for i in range(n)]
        with ProcessPoolExecutor(n, initializer=_init_worker, initargs=(config, scene, store)) as ex:
            parts = list(ex.map(_run_chunk, chunks))
        results = [None] * len(jobs)
        for i, part in enumerate(parts):
            results[i::n] = part

    rows, timing = [], []
    per_cell = config.trials
    for ti, tau in enumerate(config.taus):
        for si, snr_db in enumerate(config.snr_db):
            start = (ti * len(config.snr_db) + si) * per_cell
            cell = results[start:start + per_cell]
            for name in config.estimators:
                vals = np.array([r[0][name] for r in cell if r[0][name] is not None])
                fails = per_cell - vals.size
                value = float(np.mean(vals)) if vals.size else float("nan")
                with np.errstate(divide="ignore"):
                    db = float(to_db(value))
                rows.append((SCHEMA_VERSION, tau, float(snr_db), name, per_cell, fails, value, db))
                timing.append((tau, float(snr_db), name, float(sum(r[1].get(name, 0.0) for r in cell))))
    result = SweepResult(rows, timing)
    if write and config.output:
        write_rows(config.output, rows)
        write_timing(timing_path(config.output), timing)
    return result


def timing_path(output):
    root, ext = os.path.splitext(str(output))
    return f"{root}.timing{ext or '.csv'}"


def write_rows(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in rows:
            w.writerow([r[0], r[1], repr(r[2]), r[3], r[4], r[5], repr(r[6]), repr(r[7])])


def write_timing(path, timing):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("tau", "snr_db", "estimator", "wall_time_s"))
        for tau, snr_db, name, secs in timing:
            w.writerow([tau, repr(snr_db), name, f"{secs:.6f}"])


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
