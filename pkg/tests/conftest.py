import zlib

import numpy as np
import pytest

from ristbd import harness
from ristbd.config import ScenarioConfig


@pytest.fixture(scope="session")
def cfg() -> ScenarioConfig:
    return ScenarioConfig()


@pytest.fixture(scope="session")
def workspace(cfg) -> harness.Workspace:
    """Shared workspace for the default scenario at a few power splits."""
    return harness.build_workspace(cfg, gammas=[0.2, 1.0])


@pytest.fixture(scope="session")
def channels(workspace):
    return workspace.channels


@pytest.fixture(scope="session")
def beams(workspace):
    return workspace.nominal_beams


@pytest.fixture(scope="session")
def geometry(workspace):
    return workspace.geom


def rng_for(name: str) -> np.random.Generator:
    """Seeded generator keyed by the test name, so tests stay independent."""
    return np.random.default_rng(zlib.crc32(name.encode()))
