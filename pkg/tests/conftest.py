import numpy as np
import pytest

from splatloc import Intrinsics, generate_test_scene, make_orbit_trajectory


@pytest.fixture(scope="session")
def k128():
    return Intrinsics.from_fov(128, 128, 50.0)


@pytest.fixture(scope="session")
def k64():
    return Intrinsics.from_fov(64, 64, 60.0)


@pytest.fixture(scope="session")
def orbit_scene():
    """200 splats inside radius 2, ten cameras on a radius-4 orbit."""
    scene = generate_test_scene(200, 2.0, seed=7)
    scene.trajectory = make_orbit_trajectory(4.0, 10, 0.0)
    return scene


@pytest.fixture(scope="session")
def small_scene():
    scene = generate_test_scene(60, 2.0, seed=3)
    scene.trajectory = make_orbit_trajectory(4.0, 6, 0.0)
    return scene


def random_pose(rng):
    from splatloc import exp_se3

    xi = np.concatenate([rng.uniform(-2.5, 2.5, 3), rng.uniform(-4.0, 4.0, 3)])
    return exp_se3(xi)
