import numpy as np
import pytest

from umeit.fields import ScalarField
from umeit.geometry import build_domain, rectangle


@pytest.fixture
def unit_square():
    return build_domain(rectangle(nx=32))


def field(domain, values):
    return ScalarField(domain.grid, np.broadcast_to(values, domain.grid.shape).astype(float).copy())
