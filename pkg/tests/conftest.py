import pytest

from arctic.lattice import build_domain, hexagon_spec


@pytest.fixture(scope="session")
def hex111():
    return build_domain(hexagon_spec(1, 1, 1), 1)


@pytest.fixture(scope="session")
def hex222():
    return build_domain(hexagon_spec(2, 2, 2), 1)
