import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from umeit.bench import (StabilityRecord, h1_norm, hs_norm, l2_norm, level_set_components, loglog_slope,
                         median_ratios, null_oscillation, slab_scenario, smoothed_noise, square_kernel,
                         stability_sweep, write_records)
from umeit.elliptic import internal_functional, neumann_trace, solve_elliptic
from umeit.errors import PreconditionError
from umeit.fields import ScalarField
from umeit.geometry import build_domain, rectangle, slab
from umeit.hypersolve import march_nonlinear
from umeit.bench import holder_check


def test_l2_and_h1_of_linear_function():
    # v = x on the unit square: ||v||^2 = 1/3, ||grad v||^2 = 1
    d = build_domain(rectangle(nx=65))
    X, _ = d.grid.mesh()
    assert l2_norm(d, X) == pytest.approx(math.sqrt(1 / 3), rel=1e-3)
    assert h1_norm(d, X) == pytest.approx(math.sqrt(4 / 3), rel=1e-3)


@pytest.mark.parametrize("m, s", [(1, 0.0), (2, 1.0), (3, 2.0)])
def test_hs_norm_of_single_mode(m, s):
    d = build_domain(rectangle(nx=32))
    g = d.grid
    nx, ny = g.shape
    Lx, Ly = nx * g.hx, ny * g.hy
    v = np.sin(2 * np.pi * m * np.arange(nx) / nx)[:, None] * np.ones(ny)
    k = 2 * np.pi * m / Lx
    assert hs_norm(d, v, s) == pytest.approx(math.sqrt(Lx * Ly * (1 + k * k) ** s / 2), rel=1e-12)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), level=st.floats(1e-4, 1e-1))
def test_smoothed_noise_has_requested_rms(seed, level):
    d = build_domain(rectangle(nx=16))
    n = smoothed_noise(np.random.default_rng(seed), d.grid, level, 2.0)
    assert math.sqrt(np.mean(n * n)) == pytest.approx(2.0 * level, rel=1e-12)


def test_loglog_slope_recovers_power():
    x = np.array([1.0, 2.0, 4.0, 8.0])
    assert loglog_slope(x, 3 * x ** 0.5) == pytest.approx(0.5)


def test_level_set_components_counts_rings_and_bands():
    r = np.linspace(0.5, 1.0, 20)[:, None] * np.ones(40)
    assert level_set_components(r, 0.75, periodic_y=True) == 1
    two = np.cos(2 * np.pi * np.arange(40) / 40)[None, :] * np.ones((20, 1))
    assert level_set_components(two, 0.0, periodic_y=True) == 2


def test_square_kernel_is_annihilated():
    res, edge, trunc = square_kernel(32, 2)
    assert edge < 1e-14
    assert res <= trunc + 1e-12


def test_null_oscillation_is_windowed():
    d = build_domain(slab(1.0, 1.0, 33))
    v = null_oscillation(d, 1e-2, 20.0)
    X, Y = d.grid.mesh()
    assert np.all(v[np.hypot(X - 0.35, Y) >= 0.25] == 0)
    assert np.max(np.abs(v)) <= 1e-2


@settings(max_examples=5, deadline=None)
@given(c=st.floats(0.2, 5.0))
def test_reconstruction_invariant_under_data_scaling(c):
    # (H, f, j) -> (c^2 H, c f, c j) scales u by c and leaves sigma unchanged
    d = build_domain(slab(1.0, 1.0, 33))
    X, Y = d.grid.mesh()
    sig = ScalarField(d.grid, 1 + 0.3 * np.exp(-((X - 0.35) ** 2 + Y ** 2) / 0.0128))
    u = solve_elliptic(d, sig, lambda x, y: x)
    H, tr = internal_functional(sig, u), neumann_trace(d, sig, u)
    r1 = march_nonlinear(d, H, tr)
    tr.f, tr.j, tr.flux = c * tr.f, c * tr.j, c * tr.flux
    r2 = march_nonlinear(d, ScalarField(d.grid, c * c * H.values), tr)
    np.testing.assert_array_equal(r1.valid_mask, r2.valid_mask)
    m = r1.valid_mask
    np.testing.assert_allclose(r2.sigma.values[m], r1.sigma.values[m], rtol=1e-8)
    np.testing.assert_allclose(r2.u.values[m], c * r1.u.values[m], rtol=1e-8, atol=1e-12)


@pytest.fixture(scope="module")
def small_scenario():
    return slab_scenario(n=49)


def test_stability_sweep_is_deterministic(small_scenario):
    a = stability_sweep(small_scenario, [1e-3, 1e-2], trials=3, seed=7)
    b = stability_sweep(small_scenario, [1e-3, 1e-2], trials=3, seed=7)
    c = stability_sweep(small_scenario, [1e-3, 1e-2], trials=3, seed=8)
    assert [r.row() for r in a] == [r.row() for r in b]
    assert [r.dsigma_L2 for r in a] != [r.dsigma_L2 for r in c]


def test_stability_sweep_thread_independent(small_scenario):
    serial = stability_sweep(small_scenario, [3e-3], trials=4, seed=2)
    with ThreadPoolExecutor(3) as ex:
        threaded = stability_sweep(small_scenario, [3e-3], trials=4, seed=2, map_fn=ex.map)
    assert [r.row() for r in serial] == [r.row() for r in threaded]


def test_stability_ratio_roughly_level_independent(small_scenario):
    med = median_ratios(stability_sweep(small_scenario, [1e-3, 1e-2], trials=3, seed=3))
    vals = list(med.values())
    assert max(vals) / min(vals) < 3


def test_record_ratio_and_csv(tmp_path):
    r = StabilityRecord(1e-3, 0, 2.0, 0.5, 1.0, 0.4)
    assert r.ratio == pytest.approx(0.4)
    assert math.isnan(StabilityRecord(1e-3, 1, 2.0, 0.0, float("nan"), 0.4, censored=True).ratio)
    with pytest.raises(ValueError):
        StabilityRecord(1e-3, 0, -1.0, 0.0, 1.0, 0.4)
    write_records(tmp_path / "r.csv", [r])
    assert (tmp_path / "r.csv").read_text().splitlines()[0].startswith("noise_level,trial")


def test_holder_rejects_small_s(small_scenario):
    with pytest.raises(PreconditionError):
        holder_check(small_scenario, s=0.5)
