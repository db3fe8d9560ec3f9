import math

import numpy as np
import pytest

from umeit.errors import PreconditionError
from umeit.geometry import annulus, boundary_integral, build_domain, disc, ovoid, rectangle, slab


@pytest.mark.parametrize("spec, perimeter, tol", [
    (rectangle(1.0, 1.0, 32), 4.0, 1e-12),
    (rectangle(2.0, 0.5, 40), 5.0, 1e-12),
    (slab(1.0, 1.0, 32), 6.0, 1e-12),
    (annulus(0.5, 1.0, 32), 3 * math.pi, 1e-12),
    (disc(1.0, 64), 2 * math.pi, 1e-3),
])
def test_boundary_weights_sum_to_perimeter(spec, perimeter, tol):
    d = build_domain(spec)
    assert boundary_integral(d, np.ones(len(d.boundary))) == pytest.approx(perimeter, rel=tol)


@pytest.mark.parametrize("spec", [rectangle(nx=16), slab(nx=16), disc(n=32), ovoid(n=33), annulus(nr=16)])
def test_normals_are_unit(spec):
    b = build_domain(spec).boundary
    assert np.allclose(np.hypot(*b.normal.T), 1.0)


def test_disc_normals_are_radial():
    b = build_domain(disc(1.0, 48)).boundary
    r = b.position / np.hypot(*b.position.T)[:, None]
    assert np.allclose(np.sum(r * b.normal, axis=1), 1.0, atol=1e-10)


def test_annulus_inner_normals_point_inward():
    d = build_domain(annulus(0.5, 1.0, 16))
    b = d.boundary
    radial = np.sum(b.position * b.normal, axis=1) / np.hypot(*b.position.T)
    r = np.hypot(*b.position.T)
    assert np.allclose(r[b.component == 1], 0.5) and np.allclose(r[b.component == 0], 1.0)
    assert np.allclose(radial, np.where(b.component == 1, -1.0, 1.0))


@pytest.mark.parametrize("bad", [lambda: rectangle(-1.0), lambda: annulus(1.0, 0.5), lambda: disc(1.0, 2)])
def test_invalid_shapes_are_rejected(bad):
    with pytest.raises(PreconditionError):
        build_domain(bad())
