"""Pilots and the linear measurement model ``y = sqrt(rho xi) X h + z``."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import InvalidNoiseError, InvalidPilotError, ShapeError


def dft_matrix(m):
    """Unitary ``m x m`` DFT matrix, ``F[k, n] = exp(-2j pi k n / m) / sqrt(m)``."""
    k = np.arange(m)
    return np.exp(-2j * np.pi * np.outer(k, k) / m) / np.sqrt(m)


@dataclass(frozen=True)
class PilotSet:
    """``tau x M`` pilot matrix ``X`` sent with power ``rho``."""

    X: np.ndarray
    rho: float = 1.0

    def __post_init__(self):
        X = np.asarray(self.X, dtype=complex)
        if X.ndim != 2:
            raise InvalidPilotError(f"pilot matrix must be 2-D, got shape {X.shape}")
        if self.rho <= 0:
            raise InvalidPilotError("pilot power must be positive")
        X.setflags(write=False)
        object.__setattr__(self, "X", X)

    @property
    def tau(self):
        return self.X.shape[0]

    @property
    def n_antennas(self):
        return self.X.shape[1]

    def energy(self):
        return float(self.rho * np.sum(np.abs(self.X) ** 2))


def make_dft_pilots(m, tau, rho=1.0):
    """Rows ``floor(k m / tau)``, ``k = 0..tau-1``, of the unitary DFT matrix."""
    if m < 1:
        raise InvalidPilotError("need at least one antenna")
    if not 0 <= tau <= m:
        raise InvalidPilotError(f"pilot length {tau} must lie in [0, {m}]")
    rows = (np.arange(tau) * m) // tau if tau else np.zeros(0, dtype=int)
    return PilotSet(dft_matrix(m)[rows], rho)


@dataclass(frozen=True)
class Observation:
    y: np.ndarray
    noise_var: float
    xi: float
    noise_seed: int = 0

    def __post_init__(self):
        if not self.noise_var > 0:
            raise InvalidNoiseError("noise variance must be positive")
        y = np.asarray(self.y, dtype=complex).reshape(-1)
        y.setflags(write=False)
        object.__setattr__(self, "y", y)

    @property
    def tau(self):
        return self.y.size


def cscg(rng, shape, var):
    """Circularly-symmetric complex Gaussian samples with variance ``var``."""
    return np.sqrt(var / 2.0) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def observe(h, xi, pilots: PilotSet, noise_var, noise_seed=0, noiseless=False):
    """Received pilots ``sqrt(rho xi) X h + z`` with ``z ~ CN(0, noise_var I)``.

    The noise comes from ``default_rng(noise_seed)``; ``noiseless=True``
    drops it while keeping ``noise_var`` for the estimators.
    """
    h = np.asarray(h, dtype=complex).reshape(-1)
    if h.size != pilots.n_antennas:
        raise ShapeError(f"channel has {h.size} entries, pilots expect {pilots.n_antennas}")
    if not noise_var > 0:
        raise InvalidNoiseError("noise variance must be positive")
    y = np.sqrt(pilots.rho * xi) * (pilots.X @ h)
    if not noiseless and pilots.tau:
        y = y + cscg(np.random.default_rng(noise_seed), pilots.tau, noise_var)
    return Observation(y, noise_var, xi, noise_seed)


def expected_snr(pilots: PilotSet, R, xi, noise_var):
    """``rho xi tr(X R X^H) / (tau sigma^2)``; zero when no pilots are sent."""
    if not noise_var > 0:
        raise InvalidNoiseError("noise variance must be positive")
    if pilots.tau == 0:
        return 0.0
    X = pilots.X
    power = np.trace(X @ R @ X.conj().T).real
    return float(pilots.rho * xi * power / (pilots.tau * noise_var))


def noise_for_snr(pilots: PilotSet, R, xi, snr):
    """Invert :func:`expected_snr` for the noise variance giving a target linear SNR."""
    if pilots.tau == 0:
        raise InvalidPilotError("SNR is undefined without pilots")
    if not snr > 0:
        raise InvalidNoiseError("target SNR must be positive")
    return expected_snr(pilots, R, xi, 1.0) / snr


def write_observation_csv(path, obs: Observation):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "y_re", "y_im", "noise_var", "xi", "noise_seed"])
        for n, v in enumerate(obs.y):
            w.writerow([n, repr(v.real), repr(v.imag), repr(obs.noise_var), repr(obs.xi), obs.noise_seed])
