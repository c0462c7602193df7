"""Channel priors and the Hermitian linear algebra shared by the estimators.

All densities are circularly-symmetric complex Gaussians,

    CN(h; m, S) = exp(-(h - m)^H S^{-1} (h - m)) / (pi^M det S).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import InvalidPriorError, NumericallyDegenerateError

HERMITIAN_TOL = 1e-10
PSD_TOL = 1e-10
WEIGHT_TOL = 1e-9


def _check_covariance(cov, name="covariance"):
    cov = np.asarray(cov, dtype=complex)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise InvalidPriorError(f"{name} must be square, got shape {cov.shape}")
    if not np.all(np.isfinite(cov)):
        raise InvalidPriorError(f"{name} has non-finite entries")
    scale = max(1.0, float(np.max(np.abs(cov))))
    if np.max(np.abs(cov - cov.conj().T), initial=0.0) > HERMITIAN_TOL * scale:
        raise InvalidPriorError(f"{name} is not Hermitian")
    if cov.size and np.linalg.eigvalsh(cov).min() < -PSD_TOL * scale:
        raise InvalidPriorError(f"{name} is not positive semidefinite")
    return cov


def cho_factor_jitter(a):
    """Cholesky factor of a Hermitian PSD matrix.

    On failure a jitter of ``1e-12 * trace / M`` is added to the diagonal
    (sample covariances can be rank deficient).  Returns the lower factor.
    """
    a = np.asarray(a, dtype=complex)
    try:
        return linalg.cholesky(a, lower=True, check_finite=False)
    except linalg.LinAlgError:
        pass
    n = a.shape[0]
    jitter = 1e-12 * max(np.trace(a).real / n, np.finfo(float).tiny)
    for _ in range(8):
        try:
            return linalg.cholesky(a + jitter * np.eye(n), lower=True, check_finite=False)
        except linalg.LinAlgError:
            jitter *= 100.0
    raise InvalidPriorError("matrix is not positive definite even after jitter")


def cn_logpdf(x, mean, low):
    """Log CN density of the rows of ``x`` given the lower Cholesky factor of the covariance.

    Returns ``(logpdf, whitened_solution)`` where the second item is
    ``S^{-1} (x - mean)`` for every row (shape ``(n, M)``).
    """
    x = np.atleast_2d(x)
    diff = x - mean
    z = linalg.solve_triangular(low, diff.T, lower=True, check_finite=False)
    maha = np.sum(np.abs(z) ** 2, axis=0)
    logdet = 2.0 * np.sum(np.log(np.abs(np.diag(low))))
    m = x.shape[1]
    solved = linalg.solve_triangular(low.conj().T, z, lower=False, check_finite=False).T
    return -m * np.log(np.pi) - logdet - maha, solved


@dataclass(frozen=True)
class GaussianPrior:
    """CN(mean, cov) channel prior."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=complex).reshape(-1)
        cov = _check_covariance(self.cov)
        if cov.shape[0] != mean.size:
            raise InvalidPriorError(
                f"mean has {mean.size} entries but covariance is {cov.shape}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self):
        return self.mean.size

    def second_moment(self):
        return self.cov + np.outer(self.mean, self.mean.conj())


@dataclass(frozen=True)
class GmmPrior:
    """Mixture of circularly-symmetric complex Gaussians.

    ``weights`` has shape ``(C,)``, ``means`` ``(C, M)`` and ``covs``
    ``(C, M, M)``.
    """

    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    _chol: list = field(default=None, init=False, repr=False, compare=False)
    _eig: list = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        means = np.atleast_2d(np.asarray(self.means, dtype=complex))
        covs = np.asarray(self.covs, dtype=complex)
        if covs.ndim == 2:
            covs = covs[None]
        if not (w.size == means.shape[0] == covs.shape[0]) or w.size == 0:
            raise InvalidPriorError("weights, means and covariances disagree on component count")
        if np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise InvalidPriorError("mixture weights must be positive")
        if abs(w.sum() - 1.0) > WEIGHT_TOL:
            raise InvalidPriorError(f"mixture weights sum to {w.sum():.12g}, not 1")
        if covs.shape[1:] != (means.shape[1], means.shape[1]):
            raise InvalidPriorError("covariance shape does not match mean dimension")
        for k, c in enumerate(covs):
            _check_covariance(c, f"component {k} covariance")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covs", covs)

    @classmethod
    def from_gaussian(cls, prior: GaussianPrior) -> "GmmPrior":
        return cls(np.ones(1), prior.mean[None], prior.cov[None])

    @property
    def n_components(self):
        return self.weights.size

    @property
    def dim(self):
        return self.means.shape[1]

    def cholesky(self):
        """Lower Cholesky factors of the component covariances (cached)."""
        if self._chol is None:
            object.__setattr__(self, "_chol", [cho_factor_jitter(c) for c in self.covs])
        return self._chol

    def eig(self):
        """``(eigenvalues clipped at 0, eigenvectors)`` of each component covariance (cached)."""
        if self._eig is None:
            out = []
            for c in self.covs:
                lam, vec = np.linalg.eigh(c)
                out.append((np.clip(lam, 0.0, None), vec))
            object.__setattr__(self, "_eig", out)
        return self._eig

    def moments(self) -> GaussianPrior:
        """Overall mean and covariance of the mixture."""
        mean = self.weights @ self.means
        cov = np.zeros((self.dim, self.dim), dtype=complex)
        for w, m, c in zip(self.weights, self.means, self.covs):
            d = m - mean
            cov += w * (c + np.outer(d, d.conj()))
        return GaussianPrior(mean, 0.5 * (cov + cov.conj().T))


def responsibilities(log_weights, log_liks):
    """Normalise ``log_weights + log_liks`` (last axis = components) with max subtraction."""
    a = log_weights + log_liks
    top = np.max(a, axis=-1, keepdims=True)
    if not np.all(np.isfinite(top)):
        raise NumericallyDegenerateError("all component likelihoods underflowed")
    r = np.exp(a - top)
    total = r.sum(axis=-1, keepdims=True)
    return r / total, (top + np.log(total))[..., 0]
