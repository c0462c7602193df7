import numpy as np
import pytest

from csfmpnp.csfm import build_csfm, partition_grid, save_csfm
from csfmpnp.scene import generate_dataset, random_scene, save_scene


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def mini_world(tmp_path_factory):
    """A 20 m x 20 m scene with a 4 x 4 array and its four-grid CSFM, written to disk."""
    root = tmp_path_factory.mktemp("world")
    scene = random_scene(4, 12, area_extent=(20.0, 20.0), bs_position=(10.0, 10.0, 8.0), upa_dims=(4, 4),
                         carrier_wavelength=5.0)
    store = build_csfm(generate_dataset(scene, 1.0), partition_grid(scene.area_extent, 10.0), n_components=2)
    save_scene(scene, root / "scene.cfg")
    save_csfm(store, root / "world.csfm")
    return root, scene, store
