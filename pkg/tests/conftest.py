import numpy as np
import pytest

from namemo.capture import Simulator, generate_scene
from namemo.config import DESK_TEST, FEASIBILITY_TEST
from namemo.geometry import plan_scan


@pytest.fixture(scope="session")
def feasibility():
    return FEASIBILITY_TEST


@pytest.fixture(scope="session")
def desk():
    return DESK_TEST


@pytest.fixture(scope="session")
def feasibility_plan(feasibility):
    return plan_scan(feasibility.room, feasibility.intrinsics,
                     feasibility.mount, feasibility.overlap)


@pytest.fixture(scope="session")
def desk_plan(desk):
    return plan_scan(desk.room, desk.intrinsics, desk.mount, desk.overlap)


@pytest.fixture()
def desk_scene(desk):
    return generate_scene(24, desk.room, seed=3)


@pytest.fixture()
def desk_simulator(desk, desk_scene):
    return Simulator(desk_scene, desk.room, desk.intrinsics, desk.mount)


@pytest.fixture()
def rng():
    return np.random.default_rng(20240501)
