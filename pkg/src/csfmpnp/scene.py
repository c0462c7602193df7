"""Seeded geometric multipath scene.

A base station with a uniform planar array (UPA) serves a rectangular
area ``[0, ex] x [0, ey]`` at ground level.  The channel at a location is
built from the ``paths_per_location`` scatterers with the shortest
BS -> scatterer -> UE path, plus an optional line-of-sight path.  Each
path contributes ``gamma * sqrt(g0) / L * exp(-2j pi L / wavelength)``
times the array response towards the scatterer (or the UE for LoS).

The resulting vector is normalised to unit norm, with the common phase
referenced to the strongest path so a single-path channel equals its
normalised steering vector.  The large-scale gain is
``xi = g0 * sum |gamma|^2 / L^2``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .configfile import Key, apply_schema, complex_value, floats, ints, parse_entries, split_blocks
from .errors import (DegenerateChannelError, EmptyDatasetError, InvalidConfigError,
                     OutOfBoundsError, ParseError)

SPEED_OF_LIGHT = 299_792_458.0
NORM_TOL = 1e-12


@dataclass(frozen=True)
class SceneConfig:
    area_extent: tuple = (200.0, 200.0)
    bs_position: tuple = (100.0, 100.0, 10.0)
    upa_dims: tuple = (16, 16)
    carrier_wavelength: float = SPEED_OF_LIGHT / 28e9
    element_spacing: float = 0.5
    scatterer_positions: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    scatterer_reflectivity: np.ndarray = field(default_factory=lambda: np.zeros(0, complex))
    paths_per_location: int = 3
    reference_gain: float = 1.0
    los_reflectivity: complex = 0.0
    seed: int = 0

    def __post_init__(self):
        rows, cols = (int(v) for v in self.upa_dims)
        if rows < 1 or cols < 1:
            raise InvalidConfigError(f"UPA needs at least one antenna, got {self.upa_dims}")
        ext = tuple(float(v) for v in self.area_extent)
        if len(ext) != 2 or min(ext) <= 0:
            raise InvalidConfigError(f"area_extent must be two positive lengths, got {self.area_extent}")
        if self.element_spacing <= 0:
            raise InvalidConfigError("element_spacing must be positive")
        if self.carrier_wavelength <= 0:
            raise InvalidConfigError("carrier_wavelength must be positive")
        if self.paths_per_location < 1:
            raise InvalidConfigError("paths_per_location must be >= 1")
        if self.reference_gain <= 0:
            raise InvalidConfigError("reference_gain must be positive")
        pos = np.asarray(self.scatterer_positions, dtype=float).reshape(-1, 3)
        refl = np.asarray(self.scatterer_reflectivity, dtype=complex).reshape(-1)
        if pos.shape[0] != refl.size:
            raise InvalidConfigError("scatterer positions and reflectivities differ in count")
        bs = tuple(float(v) for v in self.bs_position)
        if len(bs) != 3:
            raise InvalidConfigError("bs_position must be 3-D")
        pos.setflags(write=False)
        refl.setflags(write=False)
        object.__setattr__(self, "upa_dims", (rows, cols))
        object.__setattr__(self, "area_extent", ext)
        object.__setattr__(self, "bs_position", bs)
        object.__setattr__(self, "scatterer_positions", pos)
        object.__setattr__(self, "scatterer_reflectivity", refl)
        object.__setattr__(self, "los_reflectivity", complex(self.los_reflectivity))

    @property
    def n_antennas(self):
        return self.upa_dims[0] * self.upa_dims[1]

    def contains(self, q, tol=1e-9):
        q = np.asarray(q, dtype=float)
        ex, ey = self.area_extent
        return bool(-tol <= q[0] <= ex + tol and -tol <= q[1] <= ey + tol)


def random_scatterers(seed, n, area_extent, height_range=(0.0, 30.0), margin=0.0):
    """Draw ``n`` scatterers uniformly over the (optionally enlarged) area.

    Reflectivities have magnitude in ``[0.5, 1]`` and uniform phase.
    """
    rng = np.random.default_rng(seed)
    ex, ey = area_extent
    x = rng.uniform(-margin, ex + margin, n)
    y = rng.uniform(-margin, ey + margin, n)
    z = rng.uniform(*height_range, n)
    mag = rng.uniform(0.5, 1.0, n)
    phase = rng.uniform(0, 2 * np.pi, n)
    return np.column_stack([x, y, z]), mag * np.exp(1j * phase)


def random_scene(seed, n_scatterers=24, **kwargs):
    """Convenience constructor: a :class:`SceneConfig` with seeded random scatterers."""
    area = kwargs.get("area_extent", SceneConfig.area_extent)
    pos, refl = random_scatterers(seed, n_scatterers, area)
    return SceneConfig(scatterer_positions=pos, scatterer_reflectivity=refl, seed=seed, **kwargs)


def direction_cosines(azimuth, elevation):
    """Direction cosines ``(u, v)`` along the array's row and column axes.

    The array lies in the y-z plane; broadside is the +x axis.
    """
    return np.cos(elevation) * np.sin(azimuth), np.sin(elevation)


def steering_from_cosines(upa_dims, element_spacing, u, v):
    rows, cols = (int(d) for d in upa_dims)
    if rows < 1 or cols < 1:
        raise InvalidConfigError(f"UPA needs at least one antenna, got {upa_dims}")
    m = np.arange(rows)[:, None]
    n = np.arange(cols)[None, :]
    return np.exp(2j * np.pi * element_spacing * (m * u + n * v)).reshape(-1)


def steering_vector(upa_dims, element_spacing, azimuth, elevation):
    """UPA response with unit-modulus entries, element ``(m, n)`` at index ``m * cols + n``."""
    if not (np.isfinite(azimuth) and np.isfinite(elevation)):
        raise InvalidConfigError("angles must be finite")
    u, v = direction_cosines(azimuth, elevation)
    return steering_from_cosines(upa_dims, element_spacing, u, v)


def _steering_towards(scene, target):
    d = np.asarray(target, float) - np.asarray(scene.bs_position)
    dist = np.linalg.norm(d)
    if dist == 0.0:
        raise DegenerateChannelError("path endpoint coincides with the base station")
    d = d / dist
    return steering_from_cosines(scene.upa_dims, scene.element_spacing, d[1], d[2])


def _as_point3(q):
    q = np.asarray(q, dtype=float).reshape(-1)
    if q.size == 2:
        return np.array([q[0], q[1], 0.0])
    if q.size == 3:
        return q
    raise InvalidConfigError(f"location must be 2-D or 3-D, got {q.size} coordinates")


def synthesize_channel(scene: SceneConfig, q):
    """Unit-norm channel ``h`` and large-scale gain ``xi`` at location ``q``.

    Pure function of ``(scene, q)``.
    """
    if not scene.contains(q):
        raise OutOfBoundsError(f"location {tuple(np.ravel(q))} outside area {scene.area_extent}")
    p = _as_point3(q)
    bs = np.asarray(scene.bs_position)
    gains, targets, lengths = [], [], []

    pos = scene.scatterer_positions
    if pos.shape[0]:
        total = np.linalg.norm(pos - bs, axis=1) + np.linalg.norm(pos - p, axis=1)
        chosen = np.argsort(total, kind="stable")[:scene.paths_per_location]
        for k in chosen:
            gains.append(scene.scatterer_reflectivity[k])
            targets.append(pos[k])
            lengths.append(total[k])
    if scene.los_reflectivity != 0:
        gains.append(scene.los_reflectivity)
        targets.append(p)
        lengths.append(np.linalg.norm(p - bs))
    if not gains:
        raise DegenerateChannelError("scene has no propagation paths")

    lengths = np.asarray(lengths)
    if np.any(lengths <= 0):
        raise DegenerateChannelError("zero-length propagation path")
    amp = np.asarray(gains) * np.sqrt(scene.reference_gain) / lengths
    coef = amp * np.exp(-2j * np.pi * lengths / scene.carrier_wavelength)
    xi = float(np.sum(np.abs(amp) ** 2))
    if xi == 0.0:
        raise DegenerateChannelError("total path gain is zero")

    h = np.zeros(scene.n_antennas, dtype=complex)
    for c, t in zip(coef, targets):
        h += c * _steering_towards(scene, t)
    norm = np.linalg.norm(h)
    if norm == 0.0 or not np.isfinite(norm):
        raise DegenerateChannelError("paths cancel to a zero channel")
    ref = coef[np.argmax(np.abs(coef))]
    h *= np.conj(ref) / abs(ref) / norm
    return h, xi


@dataclass
class Dataset:
    """Lattice of locations with their channels; row ``i`` of each array is one point."""

    locations: np.ndarray
    channels: np.ndarray
    xi: np.ndarray
    shape: tuple = (0, 0)

    def __len__(self):
        return self.locations.shape[0]

    def __iter__(self) -> Iterator[tuple]:
        return iter(zip(self.locations, self.channels, self.xi))

    def to_csv(self, path):
        write_dataset_csv(path, self)


def lattice(extent, interval):
    """Inclusive 1-D lattice ``0, interval, ...`` up to ``extent``."""
    n = int(np.floor(extent / interval + 1e-9))
    return np.arange(n + 1) * interval


def generate_dataset(scene: SceneConfig, sampling_interval: float) -> Dataset:
    """Channels on a regular lattice covering the area.

    Ordering is row-major: ``y`` is the slow index and ``x`` the fast one,
    so point ``iy * nx + ix`` sits at ``(ix * interval, iy * interval)``.
    """
    if sampling_interval <= 0:
        raise InvalidConfigError("sampling_interval must be positive")
    ex, ey = scene.area_extent
    if sampling_interval > min(ex, ey) * (1 + 1e-12):
        raise EmptyDatasetError(
            f"sampling interval {sampling_interval} exceeds the area {scene.area_extent}")
    xs, ys = lattice(ex, sampling_interval), lattice(ey, sampling_interval)
    locs = np.array([(x, y) for y in ys for x in xs])
    chans = np.empty((locs.shape[0], scene.n_antennas), dtype=complex)
    xi = np.empty(locs.shape[0])
    for i, q in enumerate(locs):
        chans[i], xi[i] = synthesize_channel(scene, q)
    return Dataset(locs, chans, xi, (ys.size, xs.size))


def dataset_header(m):
    cols = ["x", "y"]
    for k in range(m):
        cols += [f"h{k}_re", f"h{k}_im"]
    return cols + ["xi"]


def write_dataset_csv(path, ds: Dataset):
    m = ds.channels.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(dataset_header(m))
        for q, h, xi in ds:
            row = [repr(float(q[0])), repr(float(q[1]))]
            for z in h:
                row += [repr(float(z.real)), repr(float(z.imag))]
            w.writerow(row + [repr(float(xi))])


def read_dataset_csv(path) -> Dataset:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    locs = data[:, :2]
    ri = data[:, 2:-1]
    chans = ri[:, 0::2] + 1j * ri[:, 1::2]
    return Dataset(locs, chans, data[:, -1])


SCENE_KEYS = {
    "area_extent": Key(floats(2), (200.0, 200.0), lambda v: min(v) > 0, "both sides > 0"),
    "bs_position": Key(floats(3), (100.0, 100.0, 10.0)),
    "upa_dims": Key(ints(2), (16, 16), lambda v: min(v) >= 1, "at least one antenna per axis"),
    "carrier_wavelength": Key(float, SPEED_OF_LIGHT / 28e9, lambda v: v > 0, "> 0"),
    "element_spacing": Key(float, 0.5, lambda v: v > 0, "> 0"),
    "paths_per_location": Key(int, 3, lambda v: v >= 1, ">= 1"),
    "reference_gain": Key(float, 1.0, lambda v: v > 0, "> 0"),
    "los_reflectivity": Key(complex_value, 0j),
    "seed": Key(int, 0),
    "random_scatterers": Key(int, 0, lambda v: v >= 0, ">= 0"),
}
SCATTERER_KEYS = {
    "position": Key(floats(3)),
    "reflectivity": Key(complex_value),
}


def parse_scene(text) -> SceneConfig:
    """Scene from config text.

    A ``[scene]`` block holds the :class:`SceneConfig` fields;
    ``random_scatterers = N`` draws N scatterers from ``seed``.  Each
    ``[scatterer]`` block adds one explicit scatterer (``position = x, y, z``,
    ``reflectivity = re, im``) and takes precedence over random ones.
    """
    blocks = split_blocks(parse_entries(text))
    values, scatterers = None, []
    for section, line, entries in blocks:
        if section == "scene":
            if values is not None:
                raise ParseError("duplicate [scene] section", line)
            values = apply_schema(entries, SCENE_KEYS, section, line)
        elif section == "scatterer":
            scatterers.append(apply_schema(entries, SCATTERER_KEYS, section, line))
        else:
            raise ParseError(f"unknown section [{section}]", line)
    if values is None:
        raise ParseError("missing [scene] section")
    n_random = values.pop("random_scatterers")
    if scatterers:
        values["scatterer_positions"] = np.array([s["position"] for s in scatterers])
        values["scatterer_reflectivity"] = np.array([s["reflectivity"] for s in scatterers])
    elif n_random:
        pos, refl = random_scatterers(values["seed"], n_random, values["area_extent"])
        values["scatterer_positions"], values["scatterer_reflectivity"] = pos, refl
    return SceneConfig(**values)


def load_scene(path) -> SceneConfig:
    with open(path) as fh:
        return parse_scene(fh.read())


def format_scene(scene: SceneConfig) -> str:
    """Config text that :func:`parse_scene` reads back to an equal scene.

    Scatterers are written explicitly so the file does not depend on the
    random generator.
    """
    def nums(vals):
        return ", ".join(repr(float(v)) for v in vals)

    los = scene.los_reflectivity
    lines = [
        "[scene]",
        f"area_extent = {nums(scene.area_extent)}",
        f"bs_position = {nums(scene.bs_position)}",
        f"upa_dims = {scene.upa_dims[0]}, {scene.upa_dims[1]}",
        f"carrier_wavelength = {scene.carrier_wavelength!r}",
        f"element_spacing = {scene.element_spacing!r}",
        f"paths_per_location = {scene.paths_per_location}",
        f"reference_gain = {scene.reference_gain!r}",
        f"los_reflectivity = {nums((los.real, los.imag))}",
        f"seed = {scene.seed}",
    ]
    for p, g in zip(scene.scatterer_positions, scene.scatterer_reflectivity):
        lines += ["", "[scatterer]", f"position = {nums(p)}", f"reflectivity = {nums((g.real, g.imag))}"]
    return "\n".join(lines) + "\n"


def save_scene(scene: SceneConfig, path):
    with open(path, "w") as fh:
        fh.write(format_scene(scene))
