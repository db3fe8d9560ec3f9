import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from umeit.elliptic import (internal_functional, max_principle_holds, neumann_trace, read_trace, solve_elliptic,
                            write_trace)
from umeit.errors import PreconditionError
from umeit.fields import ScalarField
from umeit.geometry import annulus, boundary_integral, boundary_values, build_domain, ovoid, rectangle


def test_exponential_pair_is_reproduced():
    # sigma = e^x, u = e^-x has constant flux -1, which the harmonic-mean
    # face average reproduces exactly
    d = build_domain(rectangle(nx=24))
    X, _ = d.grid.mesh()
    u = solve_elliptic(d, ScalarField(d.grid, np.exp(X)), lambda x, y: np.exp(-x))
    assert np.max(np.abs(u.values - np.exp(-X))) < 1e-10


def test_annulus_log_solution():
    # log r is harmonic; O(h^2) error
    errs = []
    for n in (16, 32):
        d = build_domain(annulus(0.5, 1.0, n))
        X, Y = d.grid.cartesian()
        one = ScalarField(d.grid, np.ones(d.grid.shape))
        u = solve_elliptic(d, one, lambda x, y: np.log(np.hypot(x, y)))
        errs.append(np.max(np.abs(u.values - np.log(np.hypot(X, Y)))))
    assert errs[1] < errs[0] / 3


def test_neumann_trace_of_linear_solution():
    d = build_domain(rectangle(nx=16))
    one = ScalarField(d.grid, np.ones(d.grid.shape))
    u = solve_elliptic(d, one, lambda x, y: x)
    tr = neumann_trace(d, one, u)
    assert np.allclose(tr.j, d.boundary.normal[tr.index, 0], atol=1e-10)


def test_ovoid_linear_solution_exact():
    d = build_domain(ovoid(1.0, 0.7, 33))
    one = ScalarField(d.grid, np.ones(d.grid.shape))
    u = solve_elliptic(d, one, lambda x, y: 2 * x - y)
    X, Y = d.grid.mesh()
    ok = np.isfinite(u.values)
    assert np.max(np.abs(u.values[ok] - (2 * X - Y)[ok])) < 1e-8


@settings(max_examples=15, deadline=None)
@given(amp=st.floats(-0.5, 0.5), m1=st.integers(0, 3), m2=st.integers(0, 3), tilt=st.floats(0, 2 * np.pi))
def test_conservation_and_max_principle(amp, m1, m2, tilt):
    d = build_domain(rectangle(nx=20))
    X, Y = d.grid.mesh()
    sig = ScalarField(d.grid, 1 + amp * np.cos(m1 * np.pi * X) * np.cos(m2 * np.pi * Y))
    f = lambda x, y: np.cos(tilt) * x + np.sin(tilt) * y
    u = solve_elliptic(d, sig, f)
    assert abs(boundary_integral(d, neumann_trace(d, sig, u).flux)) < 1e-8
    assert max_principle_holds(d, u, boundary_values(d, f))


def test_internal_functional_definition():
    d = build_domain(rectangle(nx=16))
    X, Y = d.grid.mesh()
    sig = ScalarField(d.grid, 2.0 + X)
    u = ScalarField(d.grid, 3 * X - Y)
    assert np.allclose(internal_functional(sig, u).values, (2.0 + X) * 10.0)


def test_sigma_floor_is_enforced():
    d = build_domain(rectangle(nx=8))
    with pytest.raises(PreconditionError):
        solve_elliptic(d, ScalarField(d.grid, np.full(d.grid.shape, 0.05)), lambda x, y: x)


def test_trace_roundtrip(tmp_path):
    d = build_domain(rectangle(nx=12))
    one = ScalarField(d.grid, np.ones(d.grid.shape))
    tr = neumann_trace(d, one, solve_elliptic(d, one, lambda x, y: x * y))
    write_trace(tmp_path / "t.csv", tr, d)
    back = read_trace(tmp_path / "t.csv")
    np.testing.assert_array_equal(back.index, tr.index)
    for name in ("f", "j", "flux"):
        np.testing.assert_array_equal(getattr(back, name), getattr(tr, name))
