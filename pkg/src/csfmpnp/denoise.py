"""MMSE denoisers, the denoiser-to-score bridge and channel preprocessing.

Noise model: ``h_noisy = h + sigma * eps`` with ``eps ~ CN(0, I)``.  For
this model the conjugate Wirtinger score of the smoothed density satisfies

    d/dh* log p_sigma(h_noisy) = (E{h | h_noisy} - h_noisy) / sigma^2

exactly: differentiating ``p_sigma = int CN(h_noisy; h, sigma^2 I) p(h) dh``
under the integral gives ``-(h_noisy - h) / sigma^2`` inside, whose
posterior average is the right-hand side.  Closed-form denoisers therefore
give exact scores.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from .errors import InvalidConfigError, InvalidNoiseError, InvalidPriorError, ShapeError, ZeroRangeError
from .priors import GaussianPrior, GmmPrior, cn_logpdf, responsibilities


@dataclass(frozen=True)
class NoisyChannel:
    h: np.ndarray
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise InvalidNoiseError("denoiser noise level must be positive")
        object.__setattr__(self, "h", np.asarray(self.h, dtype=complex).reshape(-1))


def _shrink(h, mean, lam, vec, var):
    """Gaussian posterior mean ``m + C (C + var I)^-1 (h - m)`` via ``C = V diag(lam) V^H``."""
    coord = vec.conj().T @ (h - mean)
    return mean + vec @ (lam / (lam + var) * coord), coord


def _as_gmm(prior):
    if isinstance(prior, GaussianPrior):
        return GmmPrior.from_gaussian(prior)
    if isinstance(prior, GmmPrior):
        return prior
    raise InvalidPriorError(f"unsupported prior type {type(prior).__name__}")


def denoise_gaussian(noisy: NoisyChannel, prior: GaussianPrior):
    """``h_bar + C (C + sigma^2 I)^-1 (h_noisy - h_bar)``."""
    lam, vec = _as_gmm(prior).eig()[0]
    return _shrink(noisy.h, prior.mean, lam, vec, noisy.sigma ** 2)[0]


def gmm_posterior(noisy: NoisyChannel, prior: GmmPrior):
    """Responsibilities and per-component denoised vectors for a mixture prior."""
    if noisy.h.size != prior.dim:
        raise ShapeError(f"channel has {noisy.h.size} entries, prior expects {prior.dim}")
    var = noisy.sigma ** 2
    m = prior.dim
    log_lik = np.empty(prior.n_components)
    outs = np.empty((prior.n_components, m), dtype=complex)
    for c, (lam, vec) in enumerate(prior.eig()):
        outs[c], coord = _shrink(noisy.h, prior.means[c], lam, vec, var)
        spread = lam + var
        log_lik[c] = -m * np.log(np.pi) - np.sum(np.log(spread)) - np.sum(np.abs(coord) ** 2 / spread)
    resp, _ = responsibilities(np.log(prior.weights), log_lik)
    return resp, outs


def denoise_gmm(noisy: NoisyChannel, prior: GmmPrior):
    """Posterior mean under a mixture prior: responsibility-weighted Gaussian denoisers.

    Responsibilities use the smoothed component marginals
    ``CN(m_c, S_c + sigma^2 I)`` and are normalised in the log domain.
    """
    resp, outs = gmm_posterior(noisy, prior)
    return resp @ outs


def gmm_log_density(h, prior: GmmPrior):
    """Log mixture density at ``h`` and its conjugate Wirtinger gradient.

    Returns
    -------
    (log_density, score)
        ``score = sum_c r_c * (-S_c^-1 (h - m_c))`` with posterior
        component weights ``r_c``.
    """
    h = np.asarray(h, dtype=complex).reshape(-1)
    if h.size != prior.dim:
        raise ShapeError(f"channel has {h.size} entries, prior expects {prior.dim}")
    log_lik = np.empty(prior.n_components)
    grads = np.empty((prior.n_components, prior.dim), dtype=complex)
    for c, low in enumerate(prior.cholesky()):
        lp, solved = cn_logpdf(h[None], prior.means[c], low)
        log_lik[c] = lp[0]
        grads[c] = -solved[0]
    resp, total = responsibilities(np.log(prior.weights), log_lik)
    return float(total), resp @ grads


def smoothed_prior(prior, sigma):
    """The prior convolved with ``CN(0, sigma^2 I)`` noise."""
    gmm = _as_gmm(prior)
    eye = np.eye(gmm.dim)
    return GmmPrior(gmm.weights, gmm.means, gmm.covs + sigma ** 2 * eye)


@dataclass(frozen=True)
class DenoiserHandle:
    """A denoiser ``D(h_noisy, sigma)``.

    ``kind`` is one of ``gaussian``, ``gmm``, ``identity`` or ``external``;
    for ``external`` the parameter is any callable ``(h, sigma) -> h``,
    the hook for learned denoisers.
    """

    kind: str
    params: Any = None

    def __post_init__(self):
        if self.kind not in ("gaussian", "gmm", "identity", "external"):
            raise InvalidConfigError(f"unknown denoiser kind {self.kind!r}")
        if self.kind == "gaussian" and not isinstance(self.params, GaussianPrior):
            raise InvalidPriorError("gaussian denoiser needs a GaussianPrior")
        if self.kind == "gmm" and not isinstance(self.params, GmmPrior):
            raise InvalidPriorError("gmm denoiser needs a GmmPrior")
        if self.kind == "external" and not callable(self.params):
            raise InvalidConfigError("external denoiser needs a callable")

    def __call__(self, h, sigma):
        noisy = NoisyChannel(h, sigma)
        if self.kind == "gaussian":
            return denoise_gaussian(noisy, self.params)
        if self.kind == "gmm":
            return denoise_gmm(noisy, self.params)
        if self.kind == "identity":
            return noisy.h.copy()
        return np.asarray(self.params(noisy.h, noisy.sigma), dtype=complex)


def gaussian_denoiser(prior: GaussianPrior):
    return DenoiserHandle("gaussian", prior)


def gmm_denoiser(prior: GmmPrior):
    return DenoiserHandle("gmm", prior)


def identity_denoiser():
    return DenoiserHandle("identity")


def external_denoiser(fn: Callable):
    return DenoiserHandle("external", fn)


def score_from_denoiser(denoiser: DenoiserHandle, noisy: NoisyChannel):
    """Score of the smoothed density, ``(D(h, sigma) - h) / sigma^2``."""
    return (denoiser(noisy.h, noisy.sigma) - noisy.h) / noisy.sigma ** 2


def to_angular(h, m=None):
    """Unitary DFT of ``h`` (``F h`` with ``F[k, n] = e^{-2j pi k n / M} / sqrt(M)``)."""
    h = np.asarray(h, dtype=complex)
    if m is not None and h.shape[-1] != m:
        raise ShapeError(f"expected {m} entries, got {h.shape[-1]}")
    return np.fft.fft(h, axis=-1, norm="ortho")


def from_angular(h_ang, m=None):
    """Inverse of :func:`to_angular` (``F^H h``)."""
    h_ang = np.asarray(h_ang, dtype=complex)
    if m is not None and h_ang.shape[-1] != m:
        raise ShapeError(f"expected {m} entries, got {h_ang.shape[-1]}")
    return np.fft.ifft(h_ang, axis=-1, norm="ortho")


@dataclass(frozen=True)
class MinMaxScaling:
    re_min: float
    re_max: float
    im_min: float
    im_max: float

    @classmethod
    def fit(cls, h):
        re, im = h.real, h.imag
        scale = cls(re.min(), re.max(), im.min(), im.max())
        if scale.re_max == scale.re_min or scale.im_max == scale.im_min:
            raise ZeroRangeError("real or imaginary part is constant; cannot normalise")
        return scale

    def apply(self, h):
        return ((h.real - self.re_min) / (self.re_max - self.re_min)
                + 1j * (h.imag - self.im_min) / (self.im_max - self.im_min))

    def invert(self, h):
        return (self.re_min + h.real * (self.re_max - self.re_min)
                + 1j * (self.im_min + h.imag * (self.im_max - self.im_min)))


@dataclass(frozen=True)
class TrainingPair:
    clean: np.ndarray
    noisy: np.ndarray
    sigma: float
    scaling: MinMaxScaling
    angular: bool

    def restore(self, h):
        """Undo the normalisation (and the angular transform) on a denoised vector."""
        h = self.scaling.invert(np.asarray(h, dtype=complex))
        return from_angular(h) if self.angular else h


def make_training_pair(h_clean, seed, sigma_range=(1e-5, 1e-2), angular=True):
    """Normalised clean channel and a noisy copy for denoiser training.

    The channel is optionally moved to the angular domain, then its real
    and imaginary parts are each min-max scaled to ``[0, 1]`` per sample.
    ``sigma`` is drawn uniformly from ``sigma_range`` and CN(0, I) noise
    scaled by it is added.
    """
    h = np.asarray(h_clean, dtype=complex).reshape(-1)
    if angular:
        h = to_angular(h)
    scaling = MinMaxScaling.fit(h)
    clean = scaling.apply(h)
    rng = np.random.default_rng(seed)
    sigma = float(rng.uniform(*sigma_range))
    eps = (rng.standard_normal(h.size) + 1j * rng.standard_normal(h.size)) / np.sqrt(2.0)
    return TrainingPair(clean, clean + sigma * eps, sigma, scaling, angular)
