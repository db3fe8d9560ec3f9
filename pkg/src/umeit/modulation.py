"""Ultrasound-modulated boundary functionals and recovery of ``H`` from them.

A plane-wave pressure perturbs the conductivity to
``sigma_eps = sigma (1 + eps cos(k.x + phi))``. Pairing the solutions for
``+eps`` and ``-eps`` through Green's identity gives a boundary quantity
whose first-order coefficient in ``eps`` is ``int_X H cos(k.x + phi)``.
Collecting these over a lattice of wavevectors and both quadrature phases
gives the Fourier coefficients of ``H``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .elliptic import SIGMA_MIN, neumann_trace, solve_elliptic
from .errors import PreconditionError
from .fields import ScalarField, write_csv
from .geometry import POLAR, Domain, boundary_integral

log = logging.getLogger(__name__)

PHASES = (0.0, math.pi / 2)
EPS_MAX = 0.05


@dataclass(frozen=True)
class ModulationSample:
    k: tuple
    phase: float
    eps: float
    J_eps: float

    def __post_init__(self):
        if self.eps == 0 or abs(self.eps) > EPS_MAX:
            raise PreconditionError(f"eps must satisfy 0 < |eps| <= {EPS_MAX}, got {self.eps}")


def _modulation(grid, k, phase):
    X, Y = grid.cartesian()
    arg = k[0] * X + k[1] * Y
    # exact quadrature phases keep the lattice symmetries bit-exact
    if phase == 0.0:
        return np.cos(arg)
    if phase == math.pi / 2:
        return -np.sin(arg)
    return np.cos(arg + phase)


def modulated_sigma(sigma: ScalarField, k, phase, eps, sigma_min=SIGMA_MIN) -> ScalarField:
    """``sigma * (1 + eps cos(k.x + phase))``, rejected if it drops below ``sigma_min / 2``."""
    out = sigma.values * (1.0 + eps * _modulation(sigma.grid, k, phase))
    lo = np.nanmin(out)
    if lo < 0.5 * sigma_min:
        raise PreconditionError(f"modulated sigma reaches {lo:.4g} < sigma_min/2 = {0.5 * sigma_min:g}")
    return ScalarField(sigma.grid, out)


def boundary_functional(domain: Domain, sigma: ScalarField, f, k, phase, eps, sigma_min=SIGMA_MIN, u0=None) -> ModulationSample:
    """Solve with ``sigma_eps`` and ``sigma_-eps`` and pair the traces.

    ``J_eps = 1/2 oint (sigma_eps d_nu u_eps u_-eps - sigma_-eps d_nu u_-eps u_eps)``,
    which equals ``eps int_X H cos(k.x + phase) + O(eps^3)``. ``u0``, the
    unmodulated solution, only warm-starts the solver.
    """
    if eps == 0 or abs(eps) > EPS_MAX:
        raise PreconditionError(f"eps must satisfy 0 < |eps| <= {EPS_MAX}, got {eps}")
    traces = []
    for s in (eps, -eps):
        sig = modulated_sigma(sigma, k, phase, s, sigma_min)
        u = solve_elliptic(domain, sig, f, sigma_min=0.5 * sigma_min, guess=u0)
        traces.append(neumann_trace(domain, sig, u))
    tp, tm = traces
    J = 0.5 * boundary_integral(domain, tp.flux * tm.f - tm.flux * tp.f)
    return ModulationSample(tuple(float(c) for c in k), float(phase), float(eps), J)


def first_order_coefficient(sample: ModulationSample, sample_half: ModulationSample) -> float:
    """Richardson-extrapolated ``J1`` from samples at ``eps`` and ``eps/2``."""
    if sample.k != sample_half.k or sample.phase != sample_half.phase:
        raise PreconditionError("Richardson pair must share (k, phase)")
    if not math.isclose(sample_half.eps, 0.5 * sample.eps, rel_tol=1e-12):
        raise PreconditionError(f"second sample must use eps/2, got {sample_half.eps} vs {sample.eps}")
    return (4.0 * sample_half.J_eps / sample_half.eps - sample.J_eps / sample.eps) / 3.0


@dataclass
class J1Table:
    """``J1`` over the lattice ``k = 2 pi (m1/L1, m2/L2)``, ``|m_i| <= m_max``.

    ``values[m1 + m_max, m2 + m_max, p]`` holds the coefficient for phase
    ``PHASES[p]``; missing entries are NaN.
    """

    m_max: int
    lengths: tuple
    values: np.ndarray = field(default=None)

    def __post_init__(self):
        n = 2 * self.m_max + 1
        if self.values is None:
            self.values = np.full((n, n, 2), np.nan)
        if self.values.shape != (n, n, 2):
            raise PreconditionError(f"J1 table shape {self.values.shape} does not match m_max={self.m_max}")

    def wavevector(self, m1, m2):
        return (2 * math.pi * m1 / self.lengths[0], 2 * math.pi * m2 / self.lengths[1])

    def __getitem__(self, key):
        m1, m2, p = key
        return self.values[m1 + self.m_max, m2 + self.m_max, p]

    def __setitem__(self, key, val):
        m1, m2, p = key
        self.values[m1 + self.m_max, m2 + self.m_max, p] = val

    def rows(self):
        M = self.m_max
        for m1 in range(-M, M + 1):
            for m2 in range(-M, M + 1):
                for p, ph in enumerate(PHASES):
                    yield m1, m2, ph, float(self[m1, m2, p])

    def to_csv(self, path):
        write_csv(path, ["m1", "m2", "phase", "J1"], self.rows())

    @classmethod
    def from_csv(cls, path, lengths):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        M = int(np.abs(data[:, :2]).max())
        tab = cls(M, tuple(lengths))
        for m1, m2, ph, val in data:
            tab[int(m1), int(m2), int(round(ph / (math.pi / 2)))] = val
        return tab


def half_lattice(m_max):
    """Wavevector indices with ``(m1, m2)`` lexicographically ``>= (0, 0)``;
    the rest follow from ``J1(-k, 0) = J1(k, 0)`` and ``J1(-k, pi/2) = -J1(k, pi/2)``."""
    return [(m1, m2) for m1 in range(0, m_max + 1) for m2 in range(-m_max, m_max + 1) if m1 > 0 or m2 >= 0]


def synthesize_J1(domain: Domain, sigma: ScalarField, f, m_max=16, eps=1e-3, sigma_min=SIGMA_MIN, progress=None) -> J1Table:
    """Forward-simulate the full acquisition: four elliptic solve pairs per
    lattice point and phase (``+-eps``, ``+-eps/2``), Richardson-combined."""
    x0, y0, L1, L2 = domain.bounding_box
    table = J1Table(m_max, (L1, L2))
    todo = half_lattice(m_max)
    u0 = solve_elliptic(domain, sigma, f, sigma_min=sigma_min) if domain.is_tensor else None
    for count, (m1, m2) in enumerate(todo):
        k = table.wavevector(m1, m2)
        for p, ph in enumerate(PHASES):
            if m1 == 0 and m2 == 0 and p == 1:
                J1 = 0.0
            else:
                s1 = boundary_functional(domain, sigma, f, k, ph, eps, sigma_min, u0)
                s2 = boundary_functional(domain, sigma, f, k, ph, 0.5 * eps, sigma_min, u0)
                J1 = first_order_coefficient(s1, s2)
            table[m1, m2, p] = J1
            table[-m1, -m2, p] = J1 if p == 0 else -J1
        if progress is not None:
            progress(count + 1, len(todo))
    return table


def quadrature_weights(domain: Domain) -> np.ndarray:
    """Node weights integrating over ``X``: trapezoidal on tensor grids
    (with the ``r`` Jacobian on annuli), cell area on interior nodes of curved domains."""
    g = domain.grid
    if not domain.is_tensor:
        return np.where(domain.interior, g.hx * g.hy, 0.0)
    wx = np.full(g.nx, g.hx)
    wx[[0, -1]] *= 0.5
    if g.chart == POLAR:
        return (wx * g.x)[:, None] * np.full(g.ny, g.hy)[None, :]
    wy = np.full(g.ny, g.hy)
    wy[[0, -1]] *= 0.5
    return wx[:, None] * wy[None, :]


def synthesize_J1_from_H(domain: Domain, H: ScalarField, m_max=16) -> J1Table:
    """Quadrature oracle: ``J1(k, phi) = int_X H cos(k.x + phi)`` evaluated directly."""
    x0, y0, L1, L2 = domain.bounding_box
    table = J1Table(m_max, (L1, L2))
    w = quadrature_weights(domain)
    hv = np.where(w > 0, H.values, 0.0) * w
    X, Y = domain.grid.cartesian()
    for m1 in range(-m_max, m_max + 1):
        for m2 in range(-m_max, m_max + 1):
            k = table.wavevector(m1, m2)
            arg = k[0] * X + k[1] * Y
            table[m1, m2, 0] = math.fsum((hv * np.cos(arg)).ravel())
            table[m1, m2, 1] = -math.fsum((hv * np.sin(arg)).ravel())
    return table


def recover_H(domain: Domain, table: J1Table, clip_tol=1e-6) -> ScalarField:
    """Inverse Fourier series ``H(x) = (1/|B|) sum_k Re[(J1(k,0) + i J1(k,pi/2)) e^{i k.x}]``
    over the bounding box ``B``, evaluated on the domain's nodes.

    Small negative values (above ``-clip_tol * max H``) are clipped to zero;
    nodes outside a curved domain are NaN.
    """
    if np.isnan(table.values).any():
        missing = int(np.isnan(table.values).sum())
        raise PreconditionError(f"J1 table is incomplete: {missing} lattice entries missing")
    x0, y0, L1, L2 = domain.bounding_box
    if not (np.isclose(table.lengths[0], L1) and np.isclose(table.lengths[1], L2)):
        raise PreconditionError(f"J1 lattice lengths {table.lengths} do not match the domain box {(L1, L2)}")
    M = table.m_max
    m = np.arange(-M, M + 1)
    Hhat = table.values[..., 0] + 1j * table.values[..., 1]
    X, Y = domain.grid.cartesian()
    if domain.grid.chart == POLAR:
        E1 = np.exp(1j * 2 * np.pi * X[..., None] * m / L1)
        E2 = np.exp(1j * 2 * np.pi * Y[..., None] * m / L2)
        vals = np.einsum("ija,ab,ijb->ij", E1, Hhat, E2)
    else:
        E1 = np.exp(1j * 2 * np.pi * np.outer(domain.grid.x, m) / L1)
        E2 = np.exp(1j * 2 * np.pi * np.outer(domain.grid.y, m) / L2)
        vals = E1 @ Hhat @ E2.T
    vals /= L1 * L2
    scale = max(float(np.abs(vals.real).max()), 1e-300)
    imag = float(np.abs(vals.imag).max()) / scale
    if imag > 1e-10:
        log.warning("recovered H has relative imaginary part %.3e; table lacks Hermitian symmetry", imag)
    H = vals.real
    if not domain.is_tensor:
        H = np.where(domain.interior, H, np.nan)
    hmax = float(np.nanmax(H))
    lo = float(np.nanmin(H))
    if lo < -clip_tol * max(hmax, 0.0):
        log.warning("recovered H dips to %.3e (below -%.0e relative); clipping", lo, clip_tol)
    H = np.where(H < 0, 0.0, H)
    return ScalarField(domain.grid, H)
