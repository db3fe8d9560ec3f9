"""Forward conductivity problem ``-div(sigma grad u) = 0`` with Dirichlet data.

Tensor domains (rectangle, slab, annulus) use a flux-form five-point
scheme written as a weighted graph Laplacian over grid faces, with
harmonic-mean face conductivities. Faces joining two boundary nodes carry
half weight, which keeps the boundary flux second-order accurate and makes
the discrete Green identity exact. Curved domains use the Shortley-Weller
stencil with Dirichlet values taken on the analytic curve.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import CubicSpline, RegularGridInterpolator
from scipy.sparse.linalg import LinearOperator, cg, spsolve

from .errors import NumericalAbort, PreconditionError
from .fields import ScalarField, VectorField, gradient, write_csv
from .geometry import BOTTOM, LEFT, POLAR, RIGHT, TOP, Domain, boundary_values, curved_axis_arms

log = logging.getLogger(__name__)

SIGMA_MIN = 0.1
RTOL = 1e-10


@dataclass
class CauchyTrace:
    """Dirichlet value ``f``, normal derivative ``j`` and flux ``sigma * j``
    at the samples of one boundary component (``component_id = -1`` for all).

    ``flux`` is the conservative discrete flux on tensor domains, so that
    its boundary integral vanishes to solver precision.
    """

    component_id: int
    f: np.ndarray
    j: np.ndarray
    flux: np.ndarray
    index: np.ndarray

    def restrict(self, component, domain):
        sel = domain.boundary.component[self.index] == component
        return CauchyTrace(component, self.f[sel], self.j[sel], self.flux[sel], self.index[sel])


def write_trace(path, trace: CauchyTrace, domain: Domain):
    """CSV with one row per boundary sample: index, arclength, f, j, flux."""
    arc = domain.boundary.arclength[trace.index]
    write_csv(path, ["index", "arclength", "f", "j", "flux"],
              zip(trace.index, arc, trace.f, trace.j, trace.flux))


def read_trace(path, component_id=-1) -> CauchyTrace:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return CauchyTrace(component_id, data[:, 2].copy(), data[:, 3].copy(), data[:, 4].copy(),
                       data[:, 0].astype(int))


def _harmonic(a, b):
    return 2.0 * a * b / (a + b)


def face_graph(domain: Domain, sigma: np.ndarray):
    """Faces of a tensor domain as ``(node_a, node_b, coefficient)`` arrays
    (flat node indices ``i * ny + j``)."""
    g = domain.grid
    nx, ny = g.shape
    idx = np.arange(nx * ny).reshape(nx, ny)
    heads, tails, coef = [], [], []
    if g.chart == POLAR:
        r = g.x
        rf = 0.5 * (r[1:] + r[:-1])
        c = _harmonic(sigma[1:], sigma[:-1]) * (rf[:, None] * g.hy / g.hx)
        heads.append(idx[:-1].ravel()); tails.append(idx[1:].ravel()); coef.append(c.ravel())
        ext = np.full(nx, g.hx)
        ext[[0, -1]] *= 0.5
        sr = np.roll(sigma, -1, axis=1)
        c = _harmonic(sigma, sr) * (ext / (r * g.hy))[:, None]
        heads.append(idx.ravel()); tails.append(np.roll(idx, -1, axis=1).ravel()); coef.append(c.ravel())
    else:
        length = np.full(ny, g.hy)
        length[[0, -1]] *= 0.5
        c = _harmonic(sigma[1:], sigma[:-1]) * (length / g.hx)[None, :]
        heads.append(idx[:-1].ravel()); tails.append(idx[1:].ravel()); coef.append(c.ravel())
        length = np.full(nx, g.hx)
        length[[0, -1]] *= 0.5
        c = _harmonic(sigma[:, 1:], sigma[:, :-1]) * (length / g.hy)[:, None]
        heads.append(idx[:, :-1].ravel()); tails.append(idx[:, 1:].ravel()); coef.append(c.ravel())
    return np.concatenate(heads), np.concatenate(tails), np.concatenate(coef)


def stiffness(domain: Domain, sigma: np.ndarray) -> sp.csr_matrix:
    """Weighted graph Laplacian ``K`` over all nodes of a tensor domain."""
    a, b, c = face_graph(domain, sigma)
    n = domain.grid.nx * domain.grid.ny
    rows = np.concatenate([a, b, a, b])
    cols = np.concatenate([a, b, b, a])
    vals = np.concatenate([c, c, -c, -c])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def _check_sigma(domain, sigma, sigma_min):
    vals = sigma.values
    region = domain.closure_mask() if domain.is_tensor else np.ones(vals.shape, bool)
    if not np.all(np.isfinite(vals[region])):
        raise PreconditionError("sigma must be finite on the domain")
    lo = float(vals[region].min())
    if lo < sigma_min:
        raise PreconditionError(f"sigma minimum {lo:.6g} is below sigma_min={sigma_min:g}")


def linear_solve(A, b, spd=True, rtol=RTOL, x0=None):
    """Jacobi-preconditioned CG for SPD systems with a sparse-direct fallback.

    The returned solution satisfies ``|Ax - b| <= rtol |b|``; otherwise
    :class:`NumericalAbort` carries the final relative residual.
    """
    bn = float(np.linalg.norm(b))
    if bn == 0.0:
        return np.zeros_like(b)
    x = None
    if spd:
        dinv = 1.0 / A.diagonal()
        M = LinearOperator(A.shape, matvec=lambda v: dinv * v, dtype=float)
        x, info = cg(A, b, x0=x0, rtol=rtol * 1e-2, atol=0.0, maxiter=20 * A.shape[0], M=M)
        if info != 0 or np.linalg.norm(A @ x - b) > rtol * bn:
            log.debug("CG did not reach tolerance (info=%s); falling back to direct solve", info)
            x = None
    if x is None:
        x = spsolve(A.tocsc(), b)
    res = float(np.linalg.norm(A @ x - b)) / bn
    if not np.isfinite(res) or res > rtol:
        raise NumericalAbort(f"linear solver residual {res:.3e} above {rtol:.1e}", residual=res)
    return x


def solve_elliptic(domain: Domain, sigma: ScalarField, f, sigma_min=SIGMA_MIN, rtol=RTOL, guess=None,
                  direct=False) -> ScalarField:
    """Solve ``-div(sigma grad u) = 0`` with ``u = f`` on the boundary.

    ``f`` is a callable ``f(x, y)`` or one value per boundary sample. On
    tensor domains the returned field holds the boundary values at the
    boundary nodes; on curved domains nodes outside the curve are NaN.
    ``guess`` (a nearby solution) warm-starts the iterative solver.
    ``direct`` skips CG in favour of sparse LU, which resolves data spanning
    many orders of magnitude far better than a relative residual criterion.
    """
    _check_sigma(domain, sigma, sigma_min)
    fb = boundary_values(domain, f)
    if domain.is_tensor:
        return _solve_tensor(domain, sigma, fb, rtol, guess, direct)
    return _solve_curved(domain, sigma, f, fb, rtol)


def _solve_tensor(domain, sigma, fb, rtol, guess=None, direct=False):
    g = domain.grid
    K = stiffness(domain, sigma.values)
    flat_nodes = domain.boundary.node[:, 0] * g.ny + domain.boundary.node[:, 1]
    u = np.zeros(g.nx * g.ny)
    u[flat_nodes] = fb
    inner = np.flatnonzero(domain.interior.ravel())
    K_ii = K[inner][:, inner]
    rhs = -(K[inner][:, flat_nodes] @ fb)
    x0 = None if guess is None else guess.values.ravel()[inner]
    u[inner] = linear_solve(K_ii.tocsr(), rhs, spd=not direct, rtol=rtol, x0=x0)
    return ScalarField(g, u.reshape(g.shape))


def _curve_interpolant(domain, f, fb):
    if callable(f):
        return lambda t: np.asarray(f(*domain.curve_point(t)), float)
    t = domain.boundary.param
    spline = CubicSpline(np.append(t, t[0] + 2 * np.pi), np.append(fb, fb[0]), bc_type="periodic")
    return lambda tt: spline(np.mod(tt - t[0], 2 * np.pi) + t[0])


def _solve_curved(domain, sigma, f, fb, rtol):
    g = domain.grid
    nx, ny = g.shape
    inside = domain.interior
    num = -np.ones(g.shape, int)
    num[inside] = np.arange(inside.sum())
    arms = curved_axis_arms(domain)
    fcurve = _curve_interpolant(domain, f, fb)
    s = sigma.values
    ii, jj = np.nonzero(inside)
    rows, cols, vals = [], [], []
    rhs = np.zeros(ii.size)
    diag = np.zeros(ii.size)
    me = num[ii, jj]
    for pair, h in ((("E", "W"), g.hx), (("N", "S"), g.hy)):
        arm = {k: np.where(np.isfinite(arms[k][0][ii, jj]), arms[k][0][ii, jj], h) for k in pair}
        scale = 2.0 / (arm[pair[0]] + arm[pair[1]])
        for k in pair:
            di, dj = {"E": (1, 0), "W": (-1, 0), "N": (0, 1), "S": (0, -1)}[k]
            sig = _harmonic(s[ii, jj], s[ii + di, jj + dj])
            c = scale * sig / arm[k]
            diag += c
            cut = np.isfinite(arms[k][0][ii, jj])
            nb = num[ii + di, jj + dj]
            keep = ~cut
            rows.append(me[keep]); cols.append(nb[keep]); vals.append(-c[keep])
            if cut.any():
                tb = arms[k][1][ii[cut], jj[cut]]
                rhs[cut] += c[cut] * fcurve(tb)
    rows.append(me); cols.append(me); vals.append(diag)
    A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(ii.size,) * 2)
    x = linear_solve(A, rhs, spd=False, rtol=rtol)
    u = np.full(g.shape, np.nan)
    u[ii, jj] = x
    return ScalarField(g, u)


def internal_functional(sigma: ScalarField, u: ScalarField) -> ScalarField:
    """``H = sigma |grad u|^2`` at every node where ``u`` has a gradient."""
    grad = gradient(u)
    return ScalarField(u.grid, sigma.values * grad.norm ** 2)


def neumann_trace(domain: Domain, sigma: ScalarField, u: ScalarField, component=None) -> CauchyTrace:
    """Cauchy data of a solved field on the boundary samples.

    ``j = nu . grad u`` uses second-order one-sided differences along the
    normal (tensor domains) or a local quadratic least-squares fit (curved
    domains). ``flux`` is the conservative discrete flux on tensor domains
    and ``sigma * j`` on curved ones.
    """
    b = domain.boundary
    idx = np.arange(len(b)) if component is None else b.indices(component)
    if domain.is_tensor:
        f, j, flux = _tensor_trace(domain, sigma, u)
    else:
        f, j, flux = _curved_trace(domain, sigma, u)
    return CauchyTrace(-1 if component is None else component, f[idx], j[idx], flux[idx], idx)


def _tensor_trace(domain, sigma, u):
    g = domain.grid
    b = domain.boundary
    vals = u.values
    i, j = b.node[:, 0], b.node[:, 1]
    f = vals[i, j]
    if g.chart == POLAR:
        step = np.where(b.component == 0, -1, 1)
        di, dj, h = step, np.zeros_like(step), g.hx
    else:
        di = np.select([b.side == LEFT, b.side == RIGHT], [1, -1], 0)
        dj = np.select([b.side == BOTTOM, b.side == TOP], [1, -1], 0)
        h = np.where(di != 0, g.hx, g.hy)
    u1 = vals[i + di, j + dj]
    u2 = vals[i + 2 * di, j + 2 * dj]
    jn = (3 * f - 4 * u1 + u2) / (2 * h)
    K = stiffness(domain, sigma.values)
    flat = i * g.ny + j
    q = (K @ vals.ravel())[flat]
    return f, jn, q / b.weight


def _curved_trace(domain, sigma, u):
    g = domain.grid
    b = domain.boundary
    X, Y = g.mesh()
    inside = domain.interior & np.isfinite(u.values)
    px, py, pv = X[inside], Y[inside], u.values[inside]
    h = max(g.hx, g.hy)
    bx, by = b.position[:, 0], b.position[:, 1]
    jn = np.empty(len(b))
    f = np.empty(len(b))
    for k in range(len(b)):
        x0, y0 = bx[k], by[k]
        d2 = ((px - x0) ** 2 + (py - y0) ** 2) / h ** 2
        # grow the stencil until the quadratic fit is well conditioned
        for rad in (2.6, 3.2, 4.0, 5.0):
            sel = d2 <= rad ** 2
            dx = (px[sel] - x0) / h
            dy = (py[sel] - y0) / h
            V = np.column_stack([np.ones_like(dx), dx, dy, dx * dx, dx * dy, dy * dy])
            if sel.sum() >= 12:
                sv = np.linalg.svd(V, compute_uv=False)
                if sv[-1] > 1e-2 * sv[0]:
                    break
        coef, *_ = np.linalg.lstsq(V, pv[sel], rcond=None)
        f[k] = coef[0]
        jn[k] = (b.normal[k, 0] * coef[1] + b.normal[k, 1] * coef[2]) / h
    interp = RegularGridInterpolator((g.x, g.y), sigma.values)
    sb = interp(b.position)
    return f, jn, sb * jn


def max_principle_holds(domain: Domain, u: ScalarField, fb, tol=1e-12) -> bool:
    vals = u.values[domain.interior]
    return bool(vals.min() >= fb.min() - tol and vals.max() <= fb.max() + tol)
