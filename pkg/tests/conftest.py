import pytest

from rod_homogenization.material import isotropic_tensor
from tests.factories import make_laminate_spec, make_section

_HEAVY_MARKERS = {"acceptance", "e2e"}


def pytest_collection_modifyitems(config, items):
    """Auto-deselect acceptance and e2e tests unless explicitly requested via -m."""
    marker_expr = config.getoption("-m", default="")
    if any(m in marker_expr for m in _HEAVY_MARKERS):
        return
    items[:] = [item for item in items if not (_HEAVY_MARKERS & {m.name for m in item.iter_markers()})]


@pytest.fixture
def unit_tensor():
    """Isotropic tensor with λ=0, μ=1 (Q(G) = |sym G|²)."""
    return isotropic_tensor(lame_lambda=0.0, lame_mu=1.0)


@pytest.fixture(scope="session")
def square_section():
    """Normalized unit square with a coarse criss-cross mesh."""
    return make_section(shape="rect", target_h=0.25)


@pytest.fixture(scope="session")
def laminate_spec():
    return make_laminate_spec()
