import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from umeit.cgo import (CgoSpec, MeasurementBundle, cgo_functions, cgo_harmonic_pair, combined_functional,
                       measure_bundle, perturbed_cgo, polarize, read_bundle, slab_angles, slab_reconstruct,
                       smooth_bump, theta, write_bundle)
from umeit.errors import NumericalAbort, PreconditionError
from umeit.fields import ScalarField, gradient
from umeit.geometry import boundary_integral, boundary_values, build_domain, rectangle, slab


@given(t=st.floats(0, 1), k=st.floats(0.5, 8), w=st.floats(0.05, 0.95))
def test_slab_angles_hit_p_and_q(t, k, w):
    spec = CgoSpec(k, w, int(math.ceil(10 * k)))
    a, b = slab_angles(t, k, w)
    th, thp = theta(t, k)
    np.testing.assert_allclose(math.cos(a) * th + math.sin(a) * thp, spec.p, atol=1e-12)
    np.testing.assert_allclose(math.cos(b) * th + math.sin(b) * thp, spec.q, atol=1e-12)


def test_cgo_gradients_follow_theta():
    d = build_domain(slab(1.0, 0.5, 64))
    X, Y = d.grid.mesh()
    v, w = cgo_harmonic_pair(d.grid, 4.0)
    th, thp = theta(X, 4.0)
    scale = 4.0 * np.exp(4.0 * Y)[..., None]
    inner = (slice(2, -2), slice(2, -2))
    for f, ref in ((v, th), (w, thp)):
        err = gradient(f).values - scale * ref
        assert np.max(np.abs(err[inner])) / np.max(scale) < 5e-3


def test_cgo_functions_are_harmonic():
    v, w = cgo_functions(3.0)
    x, y, h = 0.3, -0.2, 1e-3
    for f in (v, w):
        lap = (f(x + h, y) + f(x - h, y) + f(x, y + h) + f(x, y - h) - 4 * f(x, y)) / h ** 2
        assert abs(lap) < 1e-4 * abs(f(x, y)) + 1e-5


def test_polarization_identity():
    d = build_domain(rectangle(nx=16))
    one = ScalarField(d.grid, np.ones(d.grid.shape))
    b = measure_bundle(d, one, lambda x, y: x, lambda x, y: x + y)
    # grad u1 . grad u2 = 1, |grad u1|^2 = 1, |grad u2|^2 = 2, |2 grad u1 - grad u2|^2 = 2
    np.testing.assert_allclose(polarize(b).values, 1.0, atol=1e-8)
    np.testing.assert_allclose(b.H22.values, 2.0, atol=1e-8)
    np.testing.assert_allclose(combined_functional(b, 2.0, -1.0).values, 2.0, atol=1e-8)


def test_bundle_roundtrip(tmp_path):
    d = build_domain(rectangle(nx=10))
    X, _ = d.grid.mesh()
    b = measure_bundle(d, ScalarField(d.grid, 1 + X), lambda x, y: x, lambda x, y: y)
    write_bundle(tmp_path, b, d)
    back = read_bundle(tmp_path)
    assert isinstance(back, MeasurementBundle)
    for name in ("H11", "H22", "H12"):
        np.testing.assert_array_equal(getattr(back, name).values, getattr(b, name).values)
    np.testing.assert_array_equal(back.cauchy2.flux, b.cauchy2.flux)


@pytest.mark.parametrize("kw", [dict(k_magnitude=0.0), dict(w=1.0), dict(w=0.0), dict(slab_count=10)])
def test_spec_validation(kw):
    with pytest.raises(PreconditionError):
        CgoSpec(**kw)


def test_default_slab_count():
    assert CgoSpec(4.0).slab_count == 40
    assert CgoSpec(2.5).slab_count == 25


def test_perturbation_has_requested_size():
    d = build_domain(slab(1.0, 3.2, 32))
    v, w = cgo_functions(4.0)
    vp, wp = perturbed_cgo(d, 4.0, 0.01, phi=0.2)

    def norm(f):
        return math.sqrt(boundary_integral(d, boundary_values(d, f) ** 2))

    assert norm(lambda x, y: vp(x, y) - v(x, y)) == pytest.approx(0.01 * norm(v))
    assert norm(lambda x, y: wp(x, y) - w(x, y)) == pytest.approx(0.01 * norm(w))


@pytest.fixture(scope="module")
def cgo_case():
    d = build_domain(slab(1.0, 3.2, 128))
    X, Y = d.grid.mesh()
    sig = ScalarField(d.grid, 1 + 0.1 * smooth_bump(X, Y))
    return d, sig, measure_bundle(d, sig, *cgo_functions(4.0)), np.abs(Y) <= 0.5


@pytest.mark.slow
def test_doubling_slab_count(cgo_case):
    d, sig, bundle, core = cgo_case
    r1 = slab_reconstruct(d, bundle, CgoSpec(4.0, slab_count=40))
    r2 = slab_reconstruct(d, bundle, CgoSpec(4.0, slab_count=80))
    e1, e2 = r1.error_vs(sig, core), r2.error_vs(sig, core)
    assert e2 <= e1
    m = r1.valid_mask & r2.valid_mask & core
    gap = np.linalg.norm(r1.sigma.values[m] - r2.sigma.values[m]) / np.linalg.norm(sig.values[m])
    assert gap <= e1 + e2
    assert len(r2.diagnostics.rows) == 80


@pytest.mark.slow
def test_diagnostics_rows(cgo_case, tmp_path):
    d, sig, bundle, _ = cgo_case
    r = slab_reconstruct(d, bundle, CgoSpec(4.0))
    rows = r.diagnostics.rows
    assert [row["slab"] for row in rows] == list(range(40))
    assert all(row["margin_p"] > 0 and row["margin_q"] > 0 for row in rows)
    assert all(row["condition"] <= 1 / (1 - math.cos(math.pi / 8)) for row in rows)
    r.diagnostics.to_csv(tmp_path / "diag.csv")
    assert (tmp_path / "diag.csv").read_text().count("\n") == 41


def test_coarse_grid_aborts():
    d = build_domain(slab(1.0, 3.2, 64))
    one = ScalarField(d.grid, np.ones(d.grid.shape))
    with pytest.raises(NumericalAbort) as exc:
        slab_reconstruct(d, measure_bundle(d, one, *cgo_functions(4.0)), CgoSpec(4.0))
    assert "slab" in exc.value.details


def test_requires_slab():
    d = build_domain(rectangle(nx=16))
    one = ScalarField(d.grid, np.ones(d.grid.shape))
    with pytest.raises(PreconditionError):
        slab_reconstruct(d, measure_bundle(d, one, *cgo_functions(4.0)), CgoSpec(4.0))
