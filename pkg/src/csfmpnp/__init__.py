"""Environment-aware channel estimation with channel score function maps.

Modules
-------
scene        seeded geometric multipath scenes and channel datasets
observation  pilot matrices and noisy pilot observations
estimators   LS, LMMSE, mixture MMSE and regularised MAP baselines
denoise      closed-form MMSE denoisers and the score they induce
csfm         per-grid channel priors, nearest-neighbour bank, persistence
pnp          plug-and-play estimation driven by a grid denoiser
harness      NMSE metric, parameter schedules and Monte-Carlo sweeps
"""

from .csfm import CsfmStore, build_csfm, load_csfm, nn_lookup, partition_grid, save_csfm
from .denoise import gaussian_denoiser, gmm_denoiser, score_from_denoiser
from .estimators import estimate_lmmse, estimate_ls, estimate_mmse_gmm, estimate_rmap_gaussian
from .harness import nmse, nmse_db, default_schedule, run_sweep
from .observation import make_dft_pilots, observe
from .pnp import PnpConfig, run_csfm_pnp
from .priors import GaussianPrior, GmmPrior
from .scene import SceneConfig, generate_dataset, random_scene, synthesize_channel

__version__ = "0.1.0"

__all__ = [
    "CsfmStore", "build_csfm", "load_csfm", "nn_lookup", "partition_grid", "save_csfm",
    "gaussian_denoiser", "gmm_denoiser", "score_from_denoiser",
    "estimate_lmmse", "estimate_ls", "estimate_mmse_gmm", "estimate_rmap_gaussian",
    "nmse", "nmse_db", "default_schedule", "run_sweep",
    "make_dft_pilots", "observe", "PnpConfig", "run_csfm_pnp", "GaussianPrior", "GmmPrior",
    "SceneConfig", "generate_dataset", "random_scene", "synthesize_channel",
]
