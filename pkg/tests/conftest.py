import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from core.fespace import DofMap, SlabSpace  # noqa: E402
from core.forms import TransportData  # noqa: E402
from core.levelset import TimePartition, classify_slab, default_sample_times, sample_levelset  # noqa: E402
from core.mesh import Mesh, build_structured_mesh  # noqa: E402
from core.quadrature import QuadratureConfig, SlabQuadrature  # noqa: E402
from utils.stats_tracker import SharedStatsTracker  # noqa: E402

UNIT_SQUARE = (0.0, 1.0, 0.0, 1.0)


def inside_everywhere(x, y, t):
    return np.full(np.shape(x), -1.0)


def outside_everywhere(x, y, t):
    return np.full(np.shape(x), 1.0)


def zero_data(u0_value: float = 0.0, f_value: float = 0.0, velocity=(0.0, 0.0)) -> TransportData:
    return TransportData(
        w=lambda x, y, t: (np.full(np.shape(x), velocity[0]), np.full(np.shape(x), velocity[1])),
        div_w=lambda x, y, t: np.zeros(np.shape(x)),
        f=lambda x, y, t: np.full(np.shape(x), f_value),
        u0=lambda x, y: np.full(np.shape(x), u0_value),
    )


def make_slab(mesh, phi, k_s=1, k_t=1, q_t=1, partition=None, n=1, quadrature=None):
    """Geometry, space and rules of one slab, the way the march builds them."""
    partition = partition or TimePartition(0.0, 1.0, 1)
    config = quadrature or QuadratureConfig.for_orders(k_s, k_t)
    ls = sample_levelset(phi, mesh, partition, n, q_t)
    geometry = classify_slab(ls, default_sample_times(ls, config.n_time_points))
    space = SlabSpace(DofMap(mesh, k_s), geometry, k_t)
    return space, SlabQuadrature(geometry, config)


@pytest.fixture
def two_triangles() -> Mesh:
    return build_structured_mesh(UNIT_SQUARE, 1.0, "diagonal")


@pytest.fixture
def eight_triangles() -> Mesh:
    return build_structured_mesh(UNIT_SQUARE, 0.5, "diagonal")


@pytest.fixture
def reference_triangle() -> Mesh:
    return Mesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 1, 2]]), UNIT_SQUARE)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture(autouse=True)
def clean_stats_tracker():
    SharedStatsTracker.get_instance().reset()
    yield
    SharedStatsTracker.get_instance().reset()


@pytest.fixture(autouse=True)
def no_env_overrides(monkeypatch):
    for name in ("CUTST_OUTPUT_DIR", "CUTST_LOG_LEVEL", "CUTST_WORKERS"):
        monkeypatch.delenv(name, raising=False)
