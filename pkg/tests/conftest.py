import sys

import numpy as np
import pytest

from planedepth import CameraIntrinsics, DepthMap, NormalMap
from planedepth.synth import Plane, PlanarSceneSpec, Region, default_intrinsics


@pytest.fixture
def K():
    return default_intrinsics(32, 24, focal=30.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def tilted_plane_spec(K: CameraIntrinsics, normal=(0.3, -0.2, 0.93), distance=2.5):
    return PlanarSceneSpec((Plane(normal, distance, Region("all")),), K)


def wedge_spec(K: CameraIntrinsics, wall=4.0, floor_height=1.0):
    """Wall z = wall, floor Y = floor_height below the fold row."""
    v_fold = K.cy + K.fy * floor_height / wall
    return PlanarSceneSpec((
        Plane((0, 1, 0), floor_height, Region("halfplane", (0, 1, -v_fold))),
        Plane((0, 0, 1), wall, Region("all")),
    ), K)


def random_depth(rng, shape, p_invalid=0.2, lo=0.5, hi=10.0):
    valid = rng.random(shape) > p_invalid
    return DepthMap(rng.uniform(lo, hi, shape), valid)


def random_normals(rng, shape, p_invalid=0.2):
    v = rng.normal(size=(*shape, 3))
    return NormalMap.from_vectors(v, rng.random(shape) > p_invalid)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
