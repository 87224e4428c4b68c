"""
Shared fixtures for the laboratory tests.

Full-scale Monte-Carlo acceptance runs are marked `slow` and only run with
`pytest --runslow`.
"""

import numpy as np
import pytest

from src.configuration import Configuration
from src.types.models import GeometryDescriptor, GeometryKind


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run Monte-Carlo acceptance tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full-scale Monte-Carlo acceptance run")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


class FunctionField:
    """A deterministic field given by a vectorized function of chart coordinates.

    `fn` maps (..., d) to (..., dim_v). The jacobian uses central differences
    in chart coordinates, which is the orthonormal frame on flat spaces.
    """

    def __init__(self, kind, fn, dim_v=1):
        self.geometry = GeometryDescriptor.of(kind)
        self.dim_v = dim_v
        self._fn = fn

    def values(self, coords, component=None, standardized=False):
        out = np.asarray(self._fn(np.asarray(coords, dtype=float)), dtype=float)
        return out if component is None else out[..., component]

    def jacobian(self, coords, standardized=False):
        coords = np.asarray(coords, dtype=float)
        h = 1e-6
        cols = []
        for k in range(self.geometry.dim_x):
            step = np.zeros(self.geometry.dim_x)
            step[k] = h
            cols.append((self.values(coords + step) - self.values(coords - step)) / (2.0 * h))
        return np.stack(cols, axis=-1)


@pytest.fixture
def function_field():
    return FunctionField


@pytest.fixture
def plane():
    return GeometryDescriptor.of(GeometryKind.PLANE2)


@pytest.fixture
def sphere():
    return GeometryDescriptor.of(GeometryKind.SPHERE2)


@pytest.fixture
def disk():
    return GeometryDescriptor.of(GeometryKind.HYPERBOLIC2)


@pytest.fixture
def settings(tmp_path):
    return Configuration(output_dir=str(tmp_path), refinement_stride=0)
