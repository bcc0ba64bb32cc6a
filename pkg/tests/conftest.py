import os
import warnings
from pathlib import Path

import pytest
from scipy.linalg import LinAlgWarning

from drbem_cavity.assembly import load_or_assemble
from drbem_cavity.geometry import build_square_mesh

ACCEPTANCE_LINES: list[str] = []


def pytest_configure(config):
    warnings.simplefilter("ignore", LinAlgWarning)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def cache_dir(request) -> Path:
    """Assembled systems persist across sessions; override with DRBEM_CACHE_DIR."""
    env = os.environ.get("DRBEM_CACHE_DIR")
    if env:
        return Path(env)
    return Path(request.config.cache.mkdir("drbem-systems"))


_SYSTEMS: dict = {}


@pytest.fixture(scope="session")
def system_for(cache_dir):
    def get(n, k, order=8):
        key = (n, k, order)
        if key not in _SYSTEMS:
            mesh = build_square_mesh(n, k)
            _SYSTEMS[key] = (mesh, load_or_assemble(mesh, order, cache_dir))
        return _SYSTEMS[key]

    return get


@pytest.fixture(scope="session")
def tiny(system_for):
    return system_for(64, 7)


@pytest.fixture(scope="session")
def small(system_for):
    return system_for(128, 15)
