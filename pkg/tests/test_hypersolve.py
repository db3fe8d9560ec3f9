import numpy as np
import pytest

from umeit import _backend
from umeit.elliptic import internal_functional, neumann_trace, solve_elliptic
from umeit.errors import PreconditionError
from umeit.fields import ScalarField
from umeit.geometry import annulus, build_domain, slab
from umeit.hypersolve import MarchConfig, linearized_solve, march_nonlinear, march_polar, recover_sigma
from umeit.lorentz import metric_pair
from umeit.strip import GRADIENT_FLOOR


def _linear_data(n=33):
    d = build_domain(slab(1.0, 1.0, n))
    one = ScalarField(d.grid, np.ones(d.grid.shape))
    u = solve_elliptic(d, one, lambda x, y: x)
    return d, one, neumann_trace(d, one, u)


def test_constant_conductivity_reproduced():
    d, one, tr = _linear_data()
    X, _ = d.grid.mesh()
    r = march_nonlinear(d, one, tr)
    m = r.valid_mask
    assert m.sum() > 0.4 * m.size
    assert np.max(np.abs(r.u.values[m] - X[m])) < 1e-10
    assert np.max(np.abs(r.sigma.values[m] - 1.0)) < 1e-8
    assert r.trim_counts()["gradient_floor"] == 0


def test_degenerate_gradient_is_trimmed():
    # H = (1 - x/0.6)^2 + 1e-6 with face data of u = x1 forces
    # u' = H / H(0), so |grad u| nearly vanishes at x1 = 0.6
    d, _, tr = _linear_data(65)
    X, _ = d.grid.mesh()
    H = ScalarField(d.grid, (1 - X / 0.6) ** 2 + 1e-6)
    r = march_nonlinear(d, H, tr)
    floor = [(i, j) for (i, j), why in r.failure_log if why == GRADIENT_FLOOR]
    assert floor
    assert all(abs(X[i, j] - 0.6) < 0.05 for i, j in floor)
    assert not r.valid_mask[X > 0.6].any()
    # nothing non-finite inside the mask, nothing finite outside it
    assert np.isfinite(r.u.values[r.valid_mask]).all()
    assert np.isfinite(r.sigma.values[r.valid_mask]).all()
    assert not np.isfinite(r.sigma.values[~r.valid_mask]).any()
    exact = (X - X ** 2 / 0.6 + X ** 3 / 1.08 + 1e-6 * X) / (1 + 1e-6)
    m = r.valid_mask & (X < 0.5)
    assert np.max(np.abs(r.u.values[m] - exact[m])) < 1e-3


def test_annulus_constant_conductivity():
    d = build_domain(annulus(0.5, 1.0, 32))
    one = ScalarField(d.grid, np.ones(d.grid.shape))
    u = solve_elliptic(d, one, np.where(d.boundary.component == 1, 1.0, 0.0))
    r = march_polar(d, internal_functional(one, u), neumann_trace(d, one, u))
    assert r.valid_mask.all()
    assert np.max(np.abs(r.sigma.values - 1.0)) < 1e-2


def test_linearized_matches_finite_difference():
    d = build_domain(slab(1.0, 1.0, 65))
    X, Y = d.grid.mesh()
    sig = ScalarField(d.grid, 1 + 0.3 * np.exp(-((X - 0.35) ** 2 + Y ** 2) / (2 * 0.08 ** 2)))
    u = solve_elliptic(d, sig, lambda x, y: x)
    H, tr = internal_functional(sig, u), neumann_trace(d, sig, u)
    dH = ScalarField(d.grid, 1e-3 * np.exp(-((X - 0.3) ** 2 + (Y - 0.1) ** 2) / 0.02))
    r0 = march_nonlinear(d, H, tr)
    r1 = march_nonlinear(d, ScalarField(d.grid, H.values + dH.values), tr)
    diff = r1.u.values - r0.u.values
    v = linearized_solve(d, u, u, dH, 0.0, 0.0, metric_pair(u, u, H)).values
    ok = np.isfinite(diff) & np.isfinite(v)
    assert ok.sum() > 100
    assert np.linalg.norm(v[ok] - diff[ok]) / np.linalg.norm(diff[ok]) < 0.05


def test_recover_sigma_floor():
    d, one, _ = _linear_data(9)
    X, _ = d.grid.mesh()
    u = ScalarField(d.grid, 0.5 * X ** 2)
    s = recover_sigma(one, u, g_min=0.2).values
    assert np.isnan(s[X < 0.1]).all()
    assert np.isfinite(s[X > 0.3]).all()


@pytest.mark.parametrize("kw", [dict(cfl=0.0), dict(cfl=1.5), dict(g_min=0.0), dict(picard_iters=0),
                                dict(direction="sideways")])
def test_config_validation(kw):
    with pytest.raises(PreconditionError):
        MarchConfig(**kw)


def test_rejects_timelike_face():
    d = build_domain(slab(1.0, 1.0, 17))
    one = ScalarField(d.grid, np.ones(d.grid.shape))
    u = solve_elliptic(d, one, lambda x, y: y)
    with pytest.raises(PreconditionError):
        march_nonlinear(d, internal_functional(one, u), neumann_trace(d, one, u))


def test_backends_agree_on_closed_loop():
    pytest.importorskip("umeit._kernels_ext")
    d = build_domain(slab(1.0, 1.0, 65))
    X, Y = d.grid.mesh()
    sig = ScalarField(d.grid, 1 + 0.3 * np.exp(-((X - 0.35) ** 2 + Y ** 2) / (2 * 0.08 ** 2)))
    u = solve_elliptic(d, sig, lambda x, y: x)
    H, tr = internal_functional(sig, u), neumann_trace(d, sig, u)
    before = _backend.BACKEND
    try:
        out = {}
        for name in ("python", "cython"):
            _backend.use(name)
            out[name] = march_nonlinear(d, H, tr)
    finally:
        _backend.use(before)
    np.testing.assert_array_equal(out["python"].valid_mask, out["cython"].valid_mask)
    m = out["python"].valid_mask
    np.testing.assert_allclose(out["python"].sigma.values[m], out["cython"].sigma.values[m], rtol=1e-10)
