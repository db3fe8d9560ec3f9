import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from umeit import _kernels_py as py

ext = pytest.importorskip("umeit._kernels_ext")


def _system(n, seed):
    rng = np.random.default_rng(seed)
    lower, upper = rng.uniform(-1, 1, n), rng.uniform(-1, 1, n)
    diag = 3 + rng.uniform(0, 1, n)
    return lower, diag, upper, rng.standard_normal(n)


@settings(max_examples=30)
@given(n=st.integers(4, 60), seed=st.integers(0, 10 ** 6))
def test_tridiag_agree(n, seed):
    lo, d, up, b = _system(n, seed)
    x = py.tridiag_solve(lo, d, up, b)
    np.testing.assert_allclose(ext.tridiag_solve(lo, d, up, b), x, rtol=1e-12, atol=1e-12)
    A = np.diag(d) + np.diag(lo[1:], -1) + np.diag(up[:-1], 1)
    np.testing.assert_allclose(A @ x, b, atol=1e-10)


@settings(max_examples=30)
@given(n=st.integers(4, 60), seed=st.integers(0, 10 ** 6))
def test_cyclic_agree(n, seed):
    lo, d, up, b = _system(n, seed)
    x = py.cyclic_tridiag_solve(lo, d, up, b)
    np.testing.assert_allclose(ext.cyclic_tridiag_solve(lo, d, up, b), x, rtol=1e-12, atol=1e-12)
    A = np.diag(d) + np.diag(lo[1:], -1) + np.diag(up[:-1], 1)
    A[0, -1], A[-1, 0] = lo[0], up[-1]
    np.testing.assert_allclose(A @ x, b, atol=1e-10)


@settings(max_examples=30)
@given(n=st.integers(5, 40), seed=st.integers(0, 10 ** 6), periodic=st.booleans())
def test_leapfrog_and_derivatives_agree(n, seed, periodic):
    rng = np.random.default_rng(seed)
    a, d = rng.uniform(-1, 1, n), rng.uniform(0, 1, n)
    rhs, guess = rng.standard_normal(n), rng.standard_normal(n)
    args = (a, d, rhs, guess, 50.0, 0.1, periodic)
    np.testing.assert_allclose(ext.leapfrog_solve(*args), py.leapfrog_solve(*args), rtol=1e-11, atol=1e-11)
    v = rng.standard_normal(n)
    for name in ("lateral_d1", "lateral_d2"):
        np.testing.assert_allclose(getattr(ext, name)(v, 0.1, periodic), getattr(py, name)(v, 0.1, periodic),
                                   rtol=1e-12, atol=1e-10)


@pytest.mark.parametrize("periodic", [False, True])
def test_lateral_derivatives_exact_on_quadratics(periodic):
    h = 0.1
    s = np.arange(12) * h
    v = 2 * s ** 2 - s
    if periodic:
        v = np.sin(2 * np.pi * np.arange(12) / 12)
        d1 = py.lateral_d1(v, 1.0, True)
        np.testing.assert_allclose(d1, np.sin(2 * np.pi / 12) * np.cos(2 * np.pi * np.arange(12) / 12), atol=1e-12)
    else:
        np.testing.assert_allclose(py.lateral_d1(v, h, False), 4 * s - 1, atol=1e-10)
        np.testing.assert_allclose(py.lateral_d2(v, h, False), 4.0, atol=1e-8)
