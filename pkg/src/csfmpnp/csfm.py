"""Channel score function map (CSFM): a grid of location-specific channel priors.

Each grid cell stores first/second-order statistics of its channels, a
complex Gaussian mixture fitted by EM (which defines the cell's analytic
MMSE denoiser) and a sparse bank of channel samples for nearest-neighbour
initialisation.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (CsfmFormatError, GridMismatchError, InsufficientDataError, InvalidConfigError,
                     MagicMismatchError, NoSamplesError, OutOfBoundsError, PartitionError,
                     TruncatedFileError, VersionUnsupportedError)
from .priors import GaussianPrior, GmmPrior, cn_logpdf, cho_factor_jitter, responsibilities

log = logging.getLogger(__name__)

MAGIC = b"CSFM"
FORMAT_VERSION = 1
PRUNE_WEIGHT = 1e-8
COV_FLOOR = 1e-10


@dataclass(frozen=True)
class GridPartition:
    """Uniform square grid of side ``d`` anchored at ``origin``; ids are row-major."""

    origin: tuple
    d: float
    rows: int
    cols: int

    def __post_init__(self):
        if not self.d > 0:
            raise PartitionError("grid size must be positive")
        if self.rows * self.cols < 1:
            raise PartitionError("partition needs at least one grid")

    @property
    def n_grids(self):
        return self.rows * self.cols

    def grid_id(self, q):
        """Grid containing ``q``; right/top area edges belong to the last row/column."""
        x = (float(q[0]) - self.origin[0]) / self.d
        y = (float(q[1]) - self.origin[1]) / self.d
        eps = 1e-9
        if not (-eps <= x <= self.cols + eps and -eps <= y <= self.rows + eps):
            raise OutOfBoundsError(f"location {tuple(q[:2])} is outside the partitioned area")
        ix = min(max(int(np.floor(x)), 0), self.cols - 1)
        iy = min(max(int(np.floor(y)), 0), self.rows - 1)
        return iy * self.cols + ix

    def bounds(self, grid_id):
        """``(x_min, y_min, x_max, y_max)`` of a grid."""
        iy, ix = divmod(int(grid_id), self.cols)
        x0 = self.origin[0] + ix * self.d
        y0 = self.origin[1] + iy * self.d
        return (x0, y0, x0 + self.d, y0 + self.d)


def partition_grid(area, d, origin=(0.0, 0.0)):
    """Tile an ``area = (side_x, side_y)`` rectangle with ``d x d`` grids."""
    if not d > 0:
        raise PartitionError("grid size must be positive")
    counts = []
    for side in area:
        n = side / d
        if n < 1 - 1e-9 or abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise PartitionError(f"grid size {d} does not divide side {side}")
        counts.append(int(round(n)))
    return GridPartition(tuple(float(o) for o in origin), float(d), counts[1], counts[0])


def fit_grid_stats(samples) -> GaussianPrior:
    """Sample mean and biased (1/N) sample covariance of channel rows."""
    x = np.atleast_2d(np.asarray(samples, dtype=complex))
    if x.shape[0] == 0:
        raise InsufficientDataError("need at least one channel sample")
    mean = x.mean(axis=0)
    d = x - mean
    cov = d.T @ d.conj() / x.shape[0]
    return GaussianPrior(mean, 0.5 * (cov + cov.conj().T))


@dataclass
class GmmFit:
    prior: GmmPrior
    log_likelihood: list
    n_iter: int
    converged: bool
    warnings: list = field(default_factory=list)


def _farthest_point_means(x, k, rng):
    idx = [int(rng.integers(x.shape[0]))]
    dist = np.sum(np.abs(x - x[idx[0]]) ** 2, axis=1)
    for _ in range(1, k):
        nxt = int(np.argmax(dist))
        idx.append(nxt)
        dist = np.minimum(dist, np.sum(np.abs(x - x[nxt]) ** 2, axis=1))
    return x[idx]


def _m_step(x, resp, floor):
    nk = resp.sum(axis=0)
    weights = nk / x.shape[0]
    means = (resp.T @ x) / nk[:, None]
    m = x.shape[1]
    covs = np.empty((resp.shape[1], m, m), dtype=complex)
    for c in range(resp.shape[1]):
        d = x - means[c]
        cov = (d * resp[:, c:c + 1]).T @ d.conj() / nk[c]
        covs[c] = 0.5 * (cov + cov.conj().T) + floor * np.eye(m)
    return weights, means, covs


def _e_step(x, weights, means, covs):
    log_lik = np.empty((x.shape[0], weights.size))
    for c in range(weights.size):
        log_lik[:, c] = cn_logpdf(x, means[c], cho_factor_jitter(covs[c]))[0]
    resp, row_ll = responsibilities(np.log(weights), log_lik)
    return resp, float(np.mean(row_ll))


def fit_gmm_em(samples, n_components=4, seed=0, max_iters=200, tol=1e-6) -> GmmFit:
    """EM for a mixture of circularly-symmetric complex Gaussians.

    Means start from seeded farthest-point selection with a hard nearest-mean
    assignment.  Iteration stops once the mean per-sample log-likelihood
    improves by less than ``tol``.  Covariances get a ``1e-10 * avg power``
    diagonal floor; components whose weight drops below ``1e-8`` are pruned
    and reported in :attr:`GmmFit.warnings`.
    """
    x = np.atleast_2d(np.asarray(samples, dtype=complex))
    n, m = x.shape
    if n_components < 1:
        raise InvalidConfigError("n_components must be >= 1")
    if n < n_components:
        raise InsufficientDataError(f"{n} samples cannot support {n_components} components")
    floor = COV_FLOOR * max(float(np.mean(np.abs(x) ** 2)), np.finfo(float).tiny)
    rng = np.random.default_rng(seed)
    means = _farthest_point_means(x, n_components, rng)
    dist = np.stack([np.sum(np.abs(x - mu) ** 2, axis=1) for mu in means], axis=1)
    resp = np.zeros((n, n_components))
    resp[np.arange(n), np.argmin(dist, axis=1)] = 1.0

    history, notes = [], []
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        keep = resp.sum(axis=0) / n >= PRUNE_WEIGHT
        if not keep.all():
            msg = f"pruned {int((~keep).sum())} starved component(s) at iteration {it}"
            notes.append(msg)
            log.warning(msg)
            resp = resp[:, keep]
            resp /= resp.sum(axis=1, keepdims=True)
        weights, means, covs = _m_step(x, resp, floor)
        resp, ll = _e_step(x, weights, means, covs)
        history.append(ll)
        if len(history) > 1 and history[-1] - history[-2] < tol:
            converged = True
            break
    weights = weights / weights.sum()
    return GmmFit(GmmPrior(weights, means, covs), history, it, converged, notes)


@dataclass
class CsfmGrid:
    grid_id: int
    bounds: tuple
    stats: GaussianPrior
    gmm: GmmPrior
    sample_locations: np.ndarray
    sample_channels: np.ndarray

    @property
    def dim(self):
        return self.stats.dim

    def contains(self, q, tol=1e-9):
        x0, y0, x1, y1 = self.bounds
        return bool(x0 - tol <= q[0] <= x1 + tol and y0 - tol <= q[1] <= y1 + tol)


def nn_lookup(grid: CsfmGrid, q, return_index=False):
    """Stored channel closest to ``q`` (Euclidean); ties go to the lowest index."""
    locs = grid.sample_locations
    if locs.shape[0] == 0:
        raise NoSamplesError(f"grid {grid.grid_id} has no stored samples")
    q = np.asarray(q, dtype=float).reshape(-1)[:locs.shape[1]]
    k = int(np.argmin(np.sum((locs - q) ** 2, axis=1)))
    return (grid.sample_channels[k].copy(), k) if return_index else grid.sample_channels[k].copy()


@dataclass
class CsfmStore:
    partition: GridPartition
    grids: dict

    def grid_for(self, q) -> CsfmGrid:
        gid = self.partition.grid_id(q)
        if gid not in self.grids:
            raise GridMismatchError(f"no CSFM entry for grid {gid}")
        return self.grids[gid]


def _on_lattice(v, interval, tol=1e-6):
    r = v / interval
    return np.abs(r - np.round(r)) < tol


def build_csfm(dataset, partition: GridPartition, n_components=4, storage_interval=1.0,
               seed=0, max_iters=200, tol=1e-6, grid_ids=None) -> CsfmStore:
    """Fit every (or every listed) grid from a dataset of located channels.

    All channels in a grid feed its statistics and mixture; only those on
    the ``storage_interval`` lattice enter the sample bank.
    """
    locs = np.asarray(dataset.locations, dtype=float)
    chans = np.asarray(dataset.channels, dtype=complex)
    ids = np.array([partition.grid_id(q) for q in locs])
    on_bank = _on_lattice(locs[:, 0] - partition.origin[0], storage_interval) & \
        _on_lattice(locs[:, 1] - partition.origin[1], storage_interval)
    wanted = range(partition.n_grids) if grid_ids is None else grid_ids
    grids = {}
    for gid in wanted:
        sel = ids == gid
        if not sel.any():
            continue
        x = chans[sel]
        k = min(n_components, x.shape[0])
        fit = fit_gmm_em(x, k, seed=seed + gid, max_iters=max_iters, tol=tol)
        bank = sel & on_bank
        grids[gid] = CsfmGrid(gid, partition.bounds(gid), fit_grid_stats(x), fit.prior,
                              locs[bank].copy(), chans[bank].copy())
    return CsfmStore(partition, grids)


# -- persistence ---------------------------------------------------------------

def _c2f(a):
    a = np.ascontiguousarray(a, dtype=complex)
    return a.view(np.float64).astype("<f8").tobytes()


def save_csfm(store: CsfmStore, path):
    """Write the versioned little-endian binary format.

    Layout: ``b"CSFM"``, version (u32), grid count (u32), partition
    (origin x, origin y, d as f64; rows, cols as u32), then per grid: id
    (u32), bounds (4 f64), M (u32), mean (2M f64), covariance (2M^2 f64),
    component count (u32) and per component weight (f64), mean, covariance,
    sample count (u32) and per sample x, y (f64) followed by the channel.
    Complex values are stored real/imag interleaved.
    """
    p = store.partition
    out = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(store.grids)),
           struct.pack("<3d2I", p.origin[0], p.origin[1], p.d, p.rows, p.cols)]
    for gid in sorted(store.grids):
        g = store.grids[gid]
        m = g.dim
        out.append(struct.pack("<I4dI", gid, *g.bounds, m))
        out.append(_c2f(g.stats.mean))
        out.append(_c2f(g.stats.cov))
        out.append(struct.pack("<I", g.gmm.n_components))
        for w, mu, cov in zip(g.gmm.weights, g.gmm.means, g.gmm.covs):
            out.append(struct.pack("<d", w))
            out.append(_c2f(mu))
            out.append(_c2f(cov))
        n = g.sample_locations.shape[0]
        out.append(struct.pack("<I", n))
        rows = np.empty((n, 2 + 2 * m), dtype="<f8")
        rows[:, :2] = g.sample_locations
        rows[:, 2:] = np.ascontiguousarray(g.sample_channels).view(np.float64)
        out.append(rows.tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(out))


class _Reader:
    def __init__(self, buf):
        self.buf = buf
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.buf):
            raise TruncatedFileError(f"file truncated at byte {len(self.buf)} (needed {self.pos + n})")
        chunk = self.buf[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def floats(self, count):
        return np.frombuffer(self.take(8 * count), dtype="<f8").astype(np.float64)

    def complex(self, shape):
        n = int(np.prod(shape))
        return self.floats(2 * n).view(np.complex128).reshape(shape)


def load_csfm(path) -> CsfmStore:
    """Read a file written by :func:`save_csfm`; raises typed format errors."""
    with open(path, "rb") as fh:
        r = _Reader(fh.read())
    if r.take(len(MAGIC)) != MAGIC:
        raise MagicMismatchError(f"{path} is not a CSFM file")
    version, count = r.unpack("<II")
    if version != FORMAT_VERSION:
        raise VersionUnsupportedError(f"format version {version} unsupported (expected {FORMAT_VERSION})")
    ox, oy, d, rows, cols = r.unpack("<3d2I")
    partition = GridPartition((ox, oy), d, rows, cols)
    grids = {}
    for _ in range(count):
        gid, x0, y0, x1, y1, m = r.unpack("<I4dI")
        mean = r.complex((m,))
        cov = r.complex((m, m))
        (k,) = r.unpack("<I")
        w, mus, covs = np.empty(k), np.empty((k, m), complex), np.empty((k, m, m), complex)
        for c in range(k):
            (w[c],) = r.unpack("<d")
            mus[c] = r.complex((m,))
            covs[c] = r.complex((m, m))
        (n,) = r.unpack("<I")
        rows_ = r.floats(n * (2 + 2 * m)).reshape(n, 2 + 2 * m)
        locs = rows_[:, :2].copy()
        chans = np.ascontiguousarray(rows_[:, 2:]).view(np.complex128).reshape(n, m)
        grids[gid] = CsfmGrid(gid, (x0, y0, x1, y1), GaussianPrior(mean, cov),
                              GmmPrior(w, mus, covs), locs, chans)
    if r.pos != len(r.buf):
        raise CsfmFormatError(f"{len(r.buf) - r.pos} trailing bytes after last grid")
    return CsfmStore(partition, grids)
