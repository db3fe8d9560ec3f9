"""Empirical checks of the stability theory.

Noise model (our choice, the theory prescribes none): additive Gaussian
noise on ``H``, smoothed by one Jacobi pass and scaled to a fraction of the
RMS of ``H``. Every sweep compares a noisy reconstruction with its noiseless
twin on the intersection of their valid masks.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy import ndimage
from scipy.linalg import svdvals

from .cgo import CgoSpec, MeasurementBundle, cgo_functions, measure_bundle, slab_reconstruct, smooth_bump
from .elliptic import CauchyTrace, internal_functional, neumann_trace, solve_elliptic
from .errors import PreconditionError, UmeitError
from .fields import ScalarField, gradient, write_csv
from .geometry import POLAR, Domain, annulus, build_domain, curved_axis_arms, disc, slab
from .hypersolve import RADIAL_INWARD, MarchConfig, ReconstructionResult, march_nonlinear, march_polar
from .modulation import quadrature_weights

log = logging.getLogger(__name__)

NOISE_MODEL = "additive Gaussian on H, one Jacobi smoothing pass, scaled to level * rms(H)"


# ---------------------------------------------------------------- scenarios

@dataclass
class Measurements:
    """Internal functionals and Cauchy traces of one experiment."""

    H: list
    cauchy: list


@dataclass
class Scenario:
    """A configured closed loop: domain, true conductivity, illuminations and
    the reconstruction that inverts them.

    ``kind`` is ``"march"`` (one illumination, marched from the Cauchy face)
    or ``"cgo"`` (two illuminations, slab scheme).
    """

    name: str
    domain: Domain
    sigma: ScalarField
    illuminations: tuple
    kind: str = "march"
    cfg: MarchConfig = field(default_factory=MarchConfig)
    cgo_spec: CgoSpec | None = None
    _clean: Measurements | None = field(default=None, repr=False)

    def measure(self) -> Measurements:
        if self._clean is None:
            if self.kind == "cgo":
                b = measure_bundle(self.domain, self.sigma, *self.illuminations)
                self._clean = Measurements([b.H11, b.H22, b.H12], [b.cauchy1, b.cauchy2])
            else:
                u = solve_elliptic(self.domain, self.sigma, self.illuminations[0])
                self._clean = Measurements([internal_functional(self.sigma, u)],
                                           [neumann_trace(self.domain, self.sigma, u)])
        return self._clean

    def reconstruct(self, meas: Measurements) -> ReconstructionResult:
        if self.kind == "cgo":
            return slab_reconstruct(self.domain, MeasurementBundle(*meas.H, *meas.cauchy), self.cgo_spec, self.cfg)
        if self.domain.grid.chart == POLAR:
            return march_polar(self.domain, meas.H[0], meas.cauchy[0], self.cfg)
        return march_nonlinear(self.domain, meas.H[0], meas.cauchy[0], self.cfg)


def gaussian(X, Y, center, width):
    return np.exp(-((X - center[0]) ** 2 + (Y - center[1]) ** 2) / (2 * width ** 2))


def slab_scenario(n=129, amp=0.3, tilt=0.0, a=1.0, center=(0.35, 0.0), width=0.08) -> Scenario:
    """Slab ``(0,1) x (-a,a)``, ``sigma = 1 + amp * gaussian`` and the tilted
    plane-wave illumination ``f = cos(tilt) x1 + sin(tilt) x2``, for which the
    face margin is ``cos(tilt)^2 - 1/2`` when ``sigma`` is constant there."""
    d = build_domain(slab(1.0, a, nx=n))
    X, Y = d.grid.mesh()
    sig = ScalarField(d.grid, 1 + amp * gaussian(X, Y, center, width))
    c, s = math.cos(tilt), math.sin(tilt)
    return Scenario(f"slab(tilt={tilt:g})", d, sig, (lambda x, y: c * x + s * y,))


def annulus_scenario(nr=64, nphi=None, amp=0.2) -> Scenario:
    """Annulus ``0.5 < r < 1`` with an angular bump; ``f = 1`` inside, ``0`` outside."""
    d = build_domain(annulus(0.5, 1.0, nr=nr, nphi=nphi))
    R, P = d.grid.mesh()
    sig = ScalarField(d.grid, 1 + amp * np.cos(2 * P) * np.exp(-((R - 0.75) / 0.1) ** 2))
    f = np.where(d.boundary.component == 1, 1.0, 0.0)
    return Scenario("annulus", d, sig, (f,), cfg=MarchConfig(direction=RADIAL_INWARD))


def cgo_scenario(n=128, amp=0.1, k=4.0, slabs=40, a=3.2) -> Scenario:
    d = build_domain(slab(1.0, a, nx=n))
    X, Y = d.grid.mesh()
    sig = ScalarField(d.grid, 1 + amp * smooth_bump(X, Y))
    return Scenario("cgo", d, sig, cgo_functions(k), kind="cgo", cgo_spec=CgoSpec(k, slab_count=slabs, a=a))


# ---------------------------------------------------------------- norms and noise

def jacobi_smooth(values, periodic_y=False):
    """One Jacobi pass for the Laplacian: each node becomes the mean of its
    four neighbours (reflected at edges, wrapped in ``y`` if periodic)."""
    p = np.pad(values, ((1, 1), (0, 0)), mode="reflect")
    p = np.pad(p, ((0, 0), (1, 1)), mode="wrap" if periodic_y else "reflect")
    return 0.25 * (p[2:, 1:-1] + p[:-2, 1:-1] + p[1:-1, 2:] + p[1:-1, :-2])


def _rms(v):
    v = v[np.isfinite(v)]
    return float(np.sqrt(np.mean(v * v)))


def smoothed_noise(rng, grid, level, scale):
    eta = jacobi_smooth(rng.standard_normal(grid.shape), grid.chart == POLAR)
    return level * scale * eta / _rms(eta)


def l2_norm(domain, values, mask=None):
    w = quadrature_weights(domain)
    m = np.isfinite(values) & (w > 0)
    if mask is not None:
        m &= mask
    return float(math.sqrt(math.fsum((w[m] * values[m] ** 2).ravel())))


def h1_norm(domain, values, mask=None):
    """Discrete ``H^1`` norm: ``sqrt(sum w (v^2 + |grad v|^2))`` with centred gradients."""
    grad = gradient(ScalarField(domain.grid, values)).values
    g2 = grad[..., 0] ** 2 + grad[..., 1] ** 2
    w = quadrature_weights(domain)
    m = np.isfinite(values) & np.isfinite(g2) & (w > 0)
    if mask is not None:
        m &= mask
    return float(math.sqrt(math.fsum((w[m] * (values[m] ** 2 + g2[m])).ravel())))


def trace_l2(domain, df, dj, index):
    w = domain.boundary.weight[index]
    return float(math.sqrt(math.fsum(w * (df ** 2 + dj ** 2))))


def hs_norm(domain, values, s):
    """Spectral ``H^s`` norm on the periodic bounding box, weight ``(1+|k|^2)^(s/2)``."""
    g = domain.grid
    v = np.nan_to_num(values)
    nx, ny = v.shape
    Lx, Ly = nx * g.hx, ny * g.hy
    vh = np.fft.fft2(v) / (nx * ny)
    kx = 2 * np.pi * np.fft.fftfreq(nx, d=1.0 / nx) / Lx
    ky = 2 * np.pi * np.fft.fftfreq(ny, d=1.0 / ny) / Ly
    k2 = kx[:, None] ** 2 + ky[None, :] ** 2
    return float(math.sqrt(Lx * Ly * np.sum((1 + k2) ** s * np.abs(vh) ** 2)))


# ---------------------------------------------------------------- stability sweep

@dataclass(frozen=True)
class StabilityRecord:
    noise_level: float
    trial: int
    dH_H1: float
    dcauchy_L2: float
    dsigma_L2: float
    theta_margin: float
    censored: bool = False
    dH_H1_X: float = float("nan")

    def __post_init__(self):
        for name in ("dH_H1", "dcauchy_L2"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @property
    def ratio(self):
        den = self.dH_H1 + self.dcauchy_L2
        if self.censored or den <= 0:
            return float("nan")
        return self.dsigma_L2 / den

    def row(self):
        return [self.noise_level, self.trial, self.dH_H1, self.dcauchy_L2, self.dsigma_L2,
                self.theta_margin, self.ratio, int(self.censored), self.dH_H1_X]


RECORD_HEADER = ["noise_level", "trial", "dH_H1", "dcauchy_L2", "dsigma_L2", "theta_margin", "ratio", "censored",
                 "dH_H1_X"]


def write_records(path, records):
    write_csv(path, RECORD_HEADER, (r.row() for r in records))


def _perturb(scenario, clean, level, rng, cauchy_level):
    d = scenario.domain
    H_new, dH = [], []
    for H in clean.H:
        n = smoothed_noise(rng, d.grid, level, _rms(H.values))
        H_new.append(ScalarField(d.grid, H.values + n))
        dH.append(n)
    cauchy_new, dc = [], 0.0
    for tr in clean.cauchy:
        if cauchy_level > 0:
            df = cauchy_level * _rms(tr.f) * rng.standard_normal(tr.f.shape)
            dj = cauchy_level * _rms(tr.j) * rng.standard_normal(tr.j.shape)
            cauchy_new.append(CauchyTrace(tr.component_id, tr.f + df, tr.j + dj, tr.flux + dj, tr.index))
            dc += trace_l2(d, df, dj, tr.index)
        else:
            cauchy_new.append(tr)
    return Measurements(H_new, cauchy_new), dH, dc


def twin_difference(domain, r0: ReconstructionResult, r1: ReconstructionResult):
    """``L^2`` norm of ``sigma1 - sigma0`` on the intersection of both valid masks."""
    mask = r0.valid_mask & r1.valid_mask
    return l2_norm(domain, r1.sigma.values - r0.sigma.values, mask)


def stability_sweep(scenario: Scenario, noise_levels, trials=10, seed=0, cauchy_level=0.0, map_fn=map):
    """Noisy-versus-noiseless twin reconstructions.

    ``dH_H1`` and ``dsigma_L2`` are taken over the common valid mask ``O`` of
    the twins, matching the local estimate on the domain of influence;
    ``dH_H1_X`` is the noise norm over the whole domain.

    Each ``(level, trial)`` draws from ``default_rng([seed, level index, trial])``
    so results do not depend on evaluation order; ``map_fn`` may be a parallel
    map. Aborted reconstructions are returned as censored records.
    """
    clean = scenario.measure()
    r0 = scenario.reconstruct(clean)
    theta = float(r0.stats.get("face_margin", r0.stats.get("min_margin_p", np.nan)))
    jobs = [(li, lev, t) for li, lev in enumerate(noise_levels) for t in range(trials)]

    def one(job):
        li, lev, t = job
        rng = np.random.default_rng([seed, li, t])
        meas, dH, dc = _perturb(scenario, clean, lev, rng, cauchy_level)
        dX = math.fsum(h1_norm(scenario.domain, n) for n in dH)
        try:
            r1 = scenario.reconstruct(meas)
        except UmeitError as exc:
            log.info("level %g trial %d censored: %s", lev, t, exc)
            return StabilityRecord(lev, t, dX, dc, float("nan"), theta, censored=True, dH_H1_X=dX)
        mask = r0.valid_mask & r1.valid_mask
        dO = math.fsum(h1_norm(scenario.domain, n, mask) for n in dH)
        return StabilityRecord(lev, t, dO, dc, twin_difference(scenario.domain, r0, r1), theta, dH_H1_X=dX)

    return list(map_fn(one, jobs))


def median_ratios(records):
    """``{level: median ratio}`` over uncensored records."""
    out = {}
    for lev in sorted({r.noise_level for r in records}):
        vals = [r.ratio for r in records if r.noise_level == lev and not r.censored]
        out[lev] = float(np.median(vals)) if vals else float("nan")
    return out


def loglog_slope(x, y):
    x, y = np.asarray(x, float), np.asarray(y, float)
    ok = (x > 0) & (y > 0) & np.isfinite(x) & np.isfinite(y)
    return float(np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)[0])


def tilt_sweep(tilts, noise_level=3e-3, trials=5, seed=0, n=129, a=1.5, map_fn=map):
    """Median stability ratio versus face margin as ``Sigma_1`` is tilted
    against the illumination. Returns rows ``(tilt, theta, median ratio)``."""
    rows = []
    for tilt in tilts:
        sc = slab_scenario(n=n, tilt=tilt, a=a)
        recs = stability_sweep(sc, [noise_level], trials, seed, map_fn=map_fn)
        rows.append((tilt, recs[0].theta_margin, median_ratios(recs)[noise_level]))
    return rows


# ---------------------------------------------------------------- Hoelder interpolation

def null_oscillation(domain, eps, omega, center=(0.35, 0.0), radius=0.25, direction=(1.0, -1.0)):
    """``eps * sin(omega * d.x) * window``: oscillation along a null direction of
    the metric of ``u = x1``, so the perturbation travels without averaging."""
    X, Y = domain.grid.mesh()
    win = smooth_bump(X, Y, center, radius)
    return eps * np.sin(omega * (direction[0] * X + direction[1] * Y)) * win


@dataclass
class HolderTable:
    s: float
    rows: list  # (eps, omega, dH_L2, dH_H1, dsigma_L2, C)
    exponent: float
    theory: float
    C_spread: float

    def to_csv(self, path):
        write_csv(path, ["eps", "omega", "dH_L2", "dH_H1", "dsigma_L2", "C"], self.rows)


def holder_check(scenario: Scenario, s=2.0, levels=(1e-2, 5e-3, 2e-3, 1e-3), omega0=16.0) -> HolderTable:
    """Fit ``dsigma ~ |dH|_{L2}^p`` for perturbations with ``omega ~ eps^(-1/s)``
    and the constant of ``dsigma <= (C/theta) |dH|^(1-1/s) |H + H~|_{H^s}^(1/s)``."""
    if s < 1:
        raise PreconditionError(f"smoothness s must be >= 1, got {s}")
    clean = scenario.measure()
    r0 = scenario.reconstruct(clean)
    theta = float(r0.stats["face_margin"])
    H = clean.H[0]
    scale = _rms(H.values)
    eps0 = max(levels)
    rows = []
    for eps in levels:
        omega = omega0 * (eps / eps0) ** (-1.0 / s)
        dH = scale * null_oscillation(scenario.domain, eps, omega)
        Ht = ScalarField(H.grid, H.values + dH)
        r1 = scenario.reconstruct(Measurements([Ht], clean.cauchy))
        ds = twin_difference(scenario.domain, r0, r1)
        dl2 = l2_norm(scenario.domain, dH)
        dh1 = h1_norm(scenario.domain, dH)
        hs = hs_norm(scenario.domain, H.values + Ht.values, s)
        C = ds * theta / (dl2 ** (1 - 1 / s) * hs ** (1 / s))
        rows.append((eps, omega, dl2, dh1, ds, C))
    p = loglog_slope([r[2] for r in rows], [r[4] for r in rows])
    Cs = [r[5] for r in rows]
    return HolderTable(s, rows, p, 1 - 1 / s, max(Cs) / min(Cs))


# ---------------------------------------------------------------- non-injectivity

def _second_differences(u, hx, hy):
    d1 = (u[2:, 1:-1] - 2 * u[1:-1, 1:-1] + u[:-2, 1:-1]) / hx ** 2
    d2 = (u[1:-1, 2:] - 2 * u[1:-1, 1:-1] + u[1:-1, :-2]) / hy ** 2
    return d1, d2


def square_kernel(n, m=1):
    """Apply the discrete ``d1^2 - d2^2`` to ``sin(m pi x1) sin(m pi x2)`` on an
    ``n``-interval unit square. Returns ``(relative residual, boundary trace max,
    relative truncation error of d1^2)``."""
    x = np.linspace(0.0, 1.0, n + 1)
    h = 1.0 / n
    u = np.sin(m * np.pi * x)[:, None] * np.sin(m * np.pi * x)[None, :]
    d1, d2 = _second_differences(u, h, h)
    exact = -(m * np.pi) ** 2 * u[1:-1, 1:-1]
    res = np.linalg.norm(d1 - d2) / np.linalg.norm(exact)
    trunc = np.linalg.norm(d1 - exact) / np.linalg.norm(exact)
    edge = np.concatenate([u[0], u[-1], u[:, 0], u[:, -1]])
    return float(res), float(np.abs(edge).max()), float(trunc)


def disc_operator(n):
    """Shortley-Weller ``d1^2 - d2^2`` on the interior nodes of the unit disc
    with homogeneous Dirichlet data (sparse, ``N x N``)."""
    d = build_domain(disc(1.0, n))
    g = d.grid
    inside = d.interior
    num = -np.ones(g.shape, int)
    num[inside] = np.arange(inside.sum())
    arms = curved_axis_arms(d)
    ii, jj = np.nonzero(inside)
    me = num[ii, jj]
    rows, cols, vals = [me], [me], [np.zeros(ii.size)]
    for pair, h, sign in ((("E", "W"), g.hx, 1.0), (("N", "S"), g.hy, -1.0)):
        arm = {k: np.where(np.isfinite(arms[k][0][ii, jj]), arms[k][0][ii, jj], h) for k in pair}
        scale = 2.0 / (arm[pair[0]] + arm[pair[1]])
        for k in pair:
            di, dj = {"E": (1, 0), "W": (-1, 0), "N": (0, 1), "S": (0, -1)}[k]
            c = sign * scale / arm[k]
            vals[0] = vals[0] - c
            keep = ~np.isfinite(arms[k][0][ii, jj])
            rows.append(me[keep])
            cols.append(num[ii[keep] + di, jj[keep] + dj])
            vals.append(c[keep])
    N = ii.size
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N))


def noninjectivity_demo(sizes=(32, 64), modes=(1, 2, 3), kernel_tol=1e-10):
    """Square kernel residuals per ``(n, m)`` and, per ``n``, the singular
    values of the disc operator (dense SVD).

    On the square the uniform stencil annihilates the sampled kernel exactly,
    so the residual sits at roundoff; ``truncation`` reports the ``O(h^2)``
    error of each second difference instead. On the disc the operator is
    exactly singular (``1 - |x|^2`` and its relatives are reproduced by the
    stencil), so ``kernel_dim`` counts singular values below
    ``kernel_tol * sigma_max``; it grows under refinement.
    """
    if min(sizes) < 16:
        raise PreconditionError("grid sizes must be at least 16")
    square = []
    for n in sizes:
        for m in modes:
            res, edge, trunc = square_kernel(n, m)
            square.append({"n": n, "m": m, "residual": res, "boundary_max": edge, "truncation": trunc})
    discs = []
    for n in sizes:
        A = disc_operator(n)
        sv = np.sort(svdvals(A.toarray()))
        tol = kernel_tol * sv[-1]
        nonzero = sv[sv >= tol]
        discs.append({"n": n, "unknowns": A.shape[0], "sigma_min": float(sv[0]), "sigma_max": float(sv[-1]),
                      "kernel_dim": int(np.sum(sv < tol)),
                      "first_nonzero_rel": float(nonzero[0] / sv[-1]) if nonzero.size else 0.0})
    return {"square": square, "disc": discs}


# ---------------------------------------------------------------- annulus gradient floor

def random_smooth_sigma(grid, rng, modes=3, lo=0.5, hi=2.0):
    """Band-limited random conductivity in ``[lo, hi]``: ``exp`` of a random
    trigonometric sum in Cartesian coordinates, rescaled into the bounds."""
    X, Y = grid.cartesian()
    s = np.zeros(grid.shape)
    for _ in range(2 * modes):
        k = rng.uniform(-modes, modes, 2) * np.pi
        s += rng.standard_normal() * np.cos(k[0] * X + k[1] * Y + rng.uniform(0, 2 * np.pi))
    s /= max(np.abs(s).max(), 1e-12)
    span = 0.95 * min(math.log(hi), -math.log(lo))
    return ScalarField(grid, np.exp(span * s))


def level_set_components(u, level, periodic_y=True):
    """Number of connected components of the cells crossed by ``u = level``."""
    a, b = u[:-1], u[1:]
    if periodic_y:
        c, d_ = np.roll(a, -1, axis=1), np.roll(b, -1, axis=1)
    else:
        a, b, c, d_ = a[:, :-1], b[:, :-1], a[:, 1:], b[:, 1:]
    lo = np.minimum(np.minimum(a, b), np.minimum(c, d_))
    hi = np.maximum(np.maximum(a, b), np.maximum(c, d_))
    cells = (lo <= level) & (level <= hi)
    lab, n = ndimage.label(cells)
    if periodic_y and n > 1:
        parent = list(range(n + 1))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        first, last = lab[:, 0], lab[:, -1]
        for p, q in zip(first, last):
            if p and q:
                parent[find(p)] = find(q)
        n = len({find(x) for x in range(1, n + 1)})
    return n


@dataclass
class GradientFloorReport:
    baseline: float
    rows: list  # (sample, min_grad, ratio_to_baseline, components_max)

    @property
    def worst_ratio(self):
        return min(r[2] for r in self.rows)


def annulus_gradient_floor(n_samples=20, seed=0, nr=96, nphi=192, levels=np.linspace(0.1, 0.9, 9)):
    """Minimum interior ``|grad u|`` for random smooth conductivities with
    ``f = 0`` outside and ``f = 1`` inside, against the constant-conductivity
    floor ``1 / (r_out ln(r_out / r_in))``; also counts level-set components."""
    d = build_domain(annulus(0.5, 1.0, nr=nr, nphi=nphi))
    g = d.grid
    f = np.where(d.boundary.component == 1, 1.0, 0.0)
    if np.ptp(f) == 0:
        raise PreconditionError("boundary data must differ between the two circles")
    baseline = 1.0 / (g.r_outer * math.log(g.r_outer / g.r_inner))
    rng = np.random.default_rng(seed)
    rows = []
    for k in range(n_samples):
        sig = random_smooth_sigma(g, rng)
        u = solve_elliptic(d, sig, f)
        gmin = float(gradient(u).norm[1:-1].min())
        comps = max(level_set_components(u.values, c) for c in levels)
        rows.append((k, gmin, gmin / baseline, comps))
    return GradientFloorReport(baseline, rows)


def annulus_constant_floor(nr=96, nphi=192):
    """``min |grad u|`` for ``sigma = 1`` and the analytic value ``1/(r_out ln(r_out/r_in))``."""
    d = build_domain(annulus(0.5, 1.0, nr=nr, nphi=nphi))
    f = np.where(d.boundary.component == 1, 1.0, 0.0)
    u = solve_elliptic(d, ScalarField(d.grid, np.ones(d.grid.shape)), f)
    g = d.grid
    return float(gradient(u).norm.min()), 1.0 / (g.r_outer * math.log(g.r_outer / g.r_inner))
