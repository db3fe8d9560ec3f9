import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from umeit.elliptic import internal_functional, solve_elliptic
from umeit.errors import PreconditionError
from umeit.fields import ScalarField
from umeit.geometry import build_domain, rectangle
from umeit.modulation import (J1Table, boundary_functional, first_order_coefficient, half_lattice, recover_H,
                              synthesize_J1, synthesize_J1_from_H)


def fx(x, y):
    return x


def j1(d, sig, k, phase, eps=1e-3):
    a = boundary_functional(d, sig, fx, k, phase, eps)
    b = boundary_functional(d, sig, fx, k, phase, eps / 2)
    return first_order_coefficient(a, b)


def ones(d):
    return ScalarField(d.grid, np.ones(d.grid.shape))


def test_zero_wavevector_gives_total_H():
    # sigma = 1, u = x: H = 1, so J1(0, 0) is the area
    d = build_domain(rectangle(nx=16))
    assert j1(d, ones(d), (0.0, 0.0), 0.0) == pytest.approx(1.0, abs=1e-9)


def test_orthogonal_mode_vanishes():
    d = build_domain(rectangle(nx=16))
    assert abs(j1(d, ones(d), (math.pi, 0.0), 0.0)) < 1e-9


def test_quarter_phase_converges_to_integral():
    # int_0^1 cos(pi x + pi/2) dx = -2/pi
    errs = []
    for n in (16, 32):
        d = build_domain(rectangle(nx=n))
        errs.append(abs(j1(d, ones(d), (math.pi, 0.0), math.pi / 2) + 2 / math.pi))
    assert errs[1] < errs[0] / 3.5


def test_richardson_removes_second_order_term():
    d = build_domain(rectangle(nx=12))
    X, Y = d.grid.mesh()
    sig = ScalarField(d.grid, 1 + 0.3 * X * Y)
    k = (2 * math.pi, 0.0)
    raw = [boundary_functional(d, sig, fx, k, 0.0, e).J_eps / e for e in (4e-2, 2e-2, 1e-2)]
    # J_eps / eps = J1 + c eps^2: successive differences shrink by 4
    assert (raw[0] - raw[1]) / (raw[1] - raw[2]) == pytest.approx(4.0, rel=0.05)


@settings(max_examples=6, deadline=None)
@given(m1=st.integers(-3, 3), m2=st.integers(-3, 3), amp=st.floats(0.0, 0.4))
def test_lattice_symmetries(m1, m2, amp):
    d = build_domain(rectangle(nx=12))
    X, Y = d.grid.mesh()
    sig = ScalarField(d.grid, 1 + amp * np.sin(2 * X + Y))
    k = (2 * math.pi * m1, 2 * math.pi * m2)
    mk = (-k[0], -k[1])
    a0, b0 = j1(d, sig, k, 0.0), j1(d, sig, mk, 0.0)
    a1, b1 = j1(d, sig, k, math.pi / 2), j1(d, sig, mk, math.pi / 2)
    assert a0 == pytest.approx(b0, abs=1e-9)
    assert a1 == pytest.approx(-b1, abs=1e-9)


def test_half_lattice_covers_by_symmetry():
    M = 3
    half = set(half_lattice(M))
    full = {(a, b) for a in range(-M, M + 1) for b in range(-M, M + 1)}
    assert half | {(-a, -b) for a, b in half} == full
    assert len(half) == (len(full) + 1) // 2


def test_synthesized_table_matches_quadrature():
    d = build_domain(rectangle(nx=16))
    X, Y = d.grid.mesh()
    sig = ScalarField(d.grid, 1 + 0.3 * np.exp(-((X - .5) ** 2 + (Y - .5) ** 2) / 0.02))
    H = internal_functional(sig, solve_elliptic(d, sig, fx))
    tab = synthesize_J1(d, sig, fx, m_max=2)
    assert np.max(np.abs(tab.values - synthesize_J1_from_H(d, H, 2).values)) < 5e-3


def test_recover_H_from_quadrature_table():
    d = build_domain(rectangle(nx=16))
    X, Y = d.grid.mesh()
    H = ScalarField(d.grid, 1 + 0.5 * np.cos(2 * np.pi * X) * np.cos(2 * np.pi * Y))
    rec = recover_H(d, synthesize_J1_from_H(d, H, 8))
    assert np.linalg.norm(rec.values - H.values) / np.linalg.norm(H.values) < 1e-2


def test_table_csv_roundtrip(tmp_path):
    tab = J1Table(2, (1.0, 1.0))
    tab.values[:] = np.arange(tab.values.size, dtype=float).reshape(tab.values.shape) / 7
    tab.to_csv(tmp_path / "j1.csv")
    back = J1Table.from_csv(tmp_path / "j1.csv", (1.0, 1.0))
    np.testing.assert_allclose(back.values, tab.values, rtol=1e-15)


def test_incomplete_table_rejected():
    d = build_domain(rectangle(nx=8))
    with pytest.raises(PreconditionError):
        recover_H(d, J1Table(2, (1.0, 1.0)))


@pytest.mark.parametrize("eps", [0.0, 0.1])
def test_eps_range(eps):
    d = build_domain(rectangle(nx=8))
    with pytest.raises(PreconditionError):
        boundary_functional(d, ones(d), fx, (0.0, 0.0), 0.0, eps)
