"""Complex geometrical optics illuminations and the slab-by-slab global
reconstruction for conductivities close to a constant.

With ``rho = i|k| e1 + |k| e2`` the harmonic functions ``v = Im e^{rho.x}``
and ``w = Re e^{rho.x}`` have gradients ``|k| e^{|k| x2} theta(x)`` and
``|k| e^{|k| x2} theta_perp(x)``, where ``theta = (cos |k|x1, sin |k|x1)``
rotates along ``x1``. On each thin slab the measured solutions are
recombined so that their gradients point close to the two fixed directions
``p`` and ``q``, both of which make ``e1`` time-like, and each combination
is marched across the slab. The two marched solutions are then rotated back
into Cauchy data for the next slab.
"""
from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .elliptic import CauchyTrace, internal_functional, neumann_trace, read_trace, solve_elliptic, write_trace
from .errors import NumericalAbort, PreconditionError
from .fields import ScalarField, gradient, read_field, write_csv, write_field
from .geometry import Domain, Grid2D
from .hypersolve import MarchConfig, ReconstructionResult, _nonlinear_coefs, face_data
from .strip import Strip, intersect_intervals, march

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CgoSpec:
    k_magnitude: float = 4.0
    w: float = math.cos(math.pi / 8)
    slab_count: int | None = None
    a: float = 3.2

    def __post_init__(self):
        if not self.k_magnitude > 0:
            raise PreconditionError(f"|k| must be positive, got {self.k_magnitude}")
        if not (0 < self.w < 1):
            raise PreconditionError(f"w must lie in (0, 1), got {self.w}")
        if self.slab_count is None:
            object.__setattr__(self, "slab_count", int(math.ceil(10 * self.k_magnitude)))
        if self.slab_count < 1 or self.k_magnitude / self.slab_count > 0.1 + 1e-12:
            raise PreconditionError(f"|k|/N = {self.k_magnitude / self.slab_count:.3g} exceeds 0.1")

    @property
    def gamma(self):
        return math.acos(self.w)

    @property
    def p(self):
        return np.array([self.w, math.sqrt(1 - self.w ** 2)])

    @property
    def q(self):
        return np.array([self.w, -math.sqrt(1 - self.w ** 2)])


@dataclass
class MeasurementBundle:
    """``H11 = sigma|grad u1|^2``, ``H22 = sigma|grad u2|^2``,
    ``H12 = sigma|grad(u1 + u2)|^2`` and the Cauchy traces of ``u1, u2``."""

    H11: ScalarField
    H22: ScalarField
    H12: ScalarField
    cauchy1: CauchyTrace
    cauchy2: CauchyTrace


_BUNDLE_FIELDS = ("H11", "H22", "H12")


def write_bundle(outdir, bundle: MeasurementBundle, domain: Domain):
    """``H11.field``, ``H22.field``, ``H12.field``, ``trace1.csv``, ``trace2.csv``."""
    os.makedirs(outdir, exist_ok=True)
    for name in _BUNDLE_FIELDS:
        write_field(os.path.join(outdir, f"{name}.field"), getattr(bundle, name))
    write_trace(os.path.join(outdir, "trace1.csv"), bundle.cauchy1, domain)
    write_trace(os.path.join(outdir, "trace2.csv"), bundle.cauchy2, domain)


def read_bundle(outdir) -> MeasurementBundle:
    H = [read_field(os.path.join(outdir, f"{name}.field")) for name in _BUNDLE_FIELDS]
    return MeasurementBundle(*H, read_trace(os.path.join(outdir, "trace1.csv")),
                             read_trace(os.path.join(outdir, "trace2.csv")))


def cgo_functions(k):
    """Callables ``(v, w)`` for ``Im`` and ``Re`` of ``e^{rho.x}``."""
    k = float(k)

    def v(x, y):
        return np.exp(k * y) * np.sin(k * x)

    def w(x, y):
        return np.exp(k * y) * np.cos(k * x)

    return v, w


def perturbed_cgo(domain: Domain, k, delta, phi=0.1):
    """CGO illuminations plus a rotated CGO of the same ``|k|``.

    The added term is ``cgo_functions`` evaluated in coordinates rotated by
    ``phi`` and scaled to ``delta`` times the boundary L2 norm of the
    unperturbed data, so ``delta = 0.01`` is a 1% perturbation of ``f``.
    Returns callables ``(v + dv, w + dw)``.
    """
    from .geometry import boundary_integral, boundary_values

    v, w = cgo_functions(k)
    c, s = math.cos(phi), math.sin(phi)

    def rotated(fn):
        return lambda x, y: fn(c * x + s * y, -s * x + c * y)

    def norm(fn):
        return math.sqrt(boundary_integral(domain, boundary_values(domain, fn) ** 2))

    out = []
    for fn in (v, w):
        g = rotated(fn)
        a = delta * norm(fn) / norm(g)
        out.append(lambda x, y, fn=fn, g=g, a=a: fn(x, y) + a * g(x, y))
    return tuple(out)


def cgo_harmonic_pair(grid: Grid2D, k):
    """Sampled ``(v, w)`` on a Cartesian grid."""
    X, Y = grid.cartesian()
    v, w = cgo_functions(k)
    return ScalarField(grid, v(X, Y)), ScalarField(grid, w(X, Y))


def theta(x1, k):
    """Unit fields ``theta`` and ``theta_perp`` at abscissa ``x1``."""
    c, s = np.cos(k * np.asarray(x1)), np.sin(k * np.asarray(x1))
    return np.stack([c, s], axis=-1), np.stack([-s, c], axis=-1)


def slab_angles(t, k, w):
    """Angles ``(alpha, beta)`` in ``[0, 2 pi)`` with
    ``cos(alpha) theta + sin(alpha) theta_perp = p`` and the same for ``beta`` and ``q``
    at the point ``(t, 0)``."""
    gamma = math.acos(w)
    kappa = k * t
    two_pi = 2 * math.pi
    return (gamma - kappa) % two_pi, (-gamma - kappa) % two_pi


def polarize(bundle: MeasurementBundle) -> ScalarField:
    """Cross term ``sigma grad u1 . grad u2 = (H12 - H11 - H22) / 2``."""
    return ScalarField(bundle.H11.grid, 0.5 * (bundle.H12.values - bundle.H11.values - bundle.H22.values))


def combined_functional(bundle: MeasurementBundle, mu, nu) -> ScalarField:
    """``sigma |mu grad u1 + nu grad u2|^2`` from the three measurements."""
    cross = polarize(bundle).values
    vals = mu * mu * bundle.H11.values + nu * nu * bundle.H22.values + 2 * mu * nu * cross
    return ScalarField(bundle.H11.grid, vals)


def measure_bundle(domain: Domain, sigma: ScalarField, f1, f2, rtol=1e-12) -> MeasurementBundle:
    """Forward-simulate the three internal functionals and the two traces."""
    u1 = solve_elliptic(domain, sigma, f1, rtol=rtol, direct=True)
    u2 = solve_elliptic(domain, sigma, f2, rtol=rtol, direct=True)
    u12 = ScalarField(domain.grid, u1.values + u2.values)
    return MeasurementBundle(
        internal_functional(sigma, u1), internal_functional(sigma, u2), internal_functional(sigma, u12),
        neumann_trace(domain, sigma, u1), neumann_trace(domain, sigma, u2),
    )


def slab_rows(n_rows, N):
    """Interface rows ``t_0 = 0 < ... < t_N = n_rows - 1`` snapped to the grid."""
    rows = np.round(np.linspace(0, n_rows - 1, N + 1)).astype(int)
    if np.any(np.diff(rows) < 1):
        raise PreconditionError(f"{N} slabs do not fit in {n_rows - 1} grid intervals")
    return rows


def _angle_to(gx, gy, ref):
    ang = np.arctan2(gy, gx) - math.atan2(ref[1], ref[0])
    return np.abs((ang + math.pi) % (2 * math.pi) - math.pi)


def illumination_deviation(domain: Domain, k, face1, face2):
    """Largest angle between the face gradients of the illuminations and those
    of the harmonic CGOs.

    ``face1`` and ``face2`` are ``(f, u_tau)`` on the ``x1 = 0`` face. The
    reference is the discrete harmonic CGO (the ``sigma = 1`` solve with the
    same scheme and boundary data), so the first value measures the departure
    caused by the illuminations and the conductivity, not by the grid.
    The second value is the deviation from the analytic directions
    ``theta(0) = e1`` and ``theta_perp(0) = e2``.
    """
    hs = domain.grid.hy
    ones = ScalarField(domain.grid, np.ones(domain.grid.shape))
    worst = analytic = 0.0
    for (f, ut), g, ref in zip((face1, face2), cgo_functions(k), ((1.0, 0.0), (0.0, 1.0))):
        u0 = solve_elliptic(domain, ones, g, rtol=1e-12, direct=True)
        f0, ut0, _ = face_data(domain, neumann_trace(domain, ones, u0))
        a = np.arctan2(np.gradient(f, hs), ut)
        a0 = np.arctan2(np.gradient(f0, hs), ut0)
        d = np.abs((a - a0 + math.pi) % (2 * math.pi) - math.pi)
        worst = max(worst, float(np.max(d)))
        analytic = max(analytic, float(np.max(_angle_to(ut, np.gradient(f, hs), ref))))
    return worst, analytic


@dataclass
class SlabDiagnostics:
    rows: list = field(default_factory=list)

    def add(self, **kw):
        self.rows.append(kw)

    def to_csv(self, path):
        keys = ["slab", "t", "alpha", "beta", "margin_p", "margin_q", "condition", "live_cells", "consistency"]
        write_csv(path, keys, ([r[k] for k in keys] for r in self.rows))


def _face_margin(ut, us, live):
    g = np.hypot(ut, us)
    with np.errstate(invalid="ignore", divide="ignore"):
        m = (ut / g) ** 2 - 0.5
    return float(np.min(m[live])) if live.any() else -np.inf


def _lat_d1(v, h):
    out = np.full_like(v, np.nan)
    out[1:-1] = (v[2:] - v[:-2]) / (2 * h)
    return out


def slab_reconstruct(domain: Domain, bundle: MeasurementBundle, spec: CgoSpec, cfg: MarchConfig | None = None,
                     target_half_width=0.5, angle_tol=0.2) -> ReconstructionResult:
    """Global reconstruction on ``(0, L) x (-a, a)`` by chained slab marches.

    Raises :class:`NumericalAbort` if a rotation system is worse conditioned
    than ``1/(1 - w)`` or if the live region stops covering
    ``|x2| <= target_half_width``.
    """
    cfg = cfg or MarchConfig()
    if domain.kind != "slab":
        raise PreconditionError(f"slab_reconstruct needs a slab domain, got {domain.kind}")
    grid = domain.grid
    strip = Strip(grid)
    k = spec.k_magnitude
    rows = slab_rows(strip.n_rows, spec.slab_count)
    hs = strip.h_s
    y = grid.y
    core = np.abs(y) <= target_half_width + 1e-12

    f1, ut1, _ = face_data(domain, bundle.cauchy1)
    f2, ut2, _ = face_data(domain, bundle.cauchy2)
    worst, analytic = illumination_deviation(domain, k, (f1, ut1), (f2, ut2))
    if worst > angle_tol:
        raise PreconditionError(f"illumination gradients deviate {worst:.3f} rad from the CGO directions (> {angle_tol})")

    cross = polarize(bundle).values

    def K_rows(c, s):
        Hc = c * c * bundle.H11.values + s * s * bundle.H22.values + 2 * c * s * cross
        with np.errstate(invalid="ignore", divide="ignore"):
            logH = np.where(Hc > 0, np.log(Hc), np.nan)
        K = -gradient(ScalarField(grid, logH)).values
        return Hc, K[..., 0], K[..., 1]

    sig_p = np.full(grid.shape, np.nan)
    sig_q = np.full(grid.shape, np.nan)
    U1 = np.full(grid.shape, np.nan)
    failure = []
    diag = SlabDiagnostics()
    cond_tol = 1.0 / (1.0 - spec.w)
    substeps = 1
    # Cauchy data of (u1, u2) on the current interface row
    c_u1, c_u2, c_t1, c_t2 = f1.copy(), f2.copy(), ut1.copy(), ut2.copy()
    carry = None  # exact (fractional) live intervals handed from slab to slab
    for i in range(spec.slab_count):
        r0, r1 = int(rows[i]), int(rows[i + 1])
        last = i == spec.slab_count - 1
        nrow = r1 - r0 + (1 if last else 2)
        t = float(grid.x[r0])
        al, be = slab_angles(t, k, spec.w)
        R = np.array([[math.cos(al), math.sin(al)], [math.cos(be), math.sin(be)]])
        cond = float(np.linalg.cond(R))
        if cond > cond_tol:
            raise NumericalAbort(f"slab {i}: rotation condition number {cond:.3g} exceeds {cond_tol:.3g}", slab=i)
        results = []
        margins = []
        for (c, s) in ((R[0, 0], R[0, 1]), (R[1, 0], R[1, 1])):
            U0 = c * c_u1 + s * c_u2
            Ut0 = c * c_t1 + s * c_t2
            live = np.isfinite(U0) & np.isfinite(Ut0)
            m0 = _face_margin(Ut0, _lat_d1(U0, hs), live & np.isfinite(_lat_d1(U0, hs)))
            margins.append(m0)
            if not m0 > 0:
                raise NumericalAbort(f"slab {i}: marching direction not time-like (margin {m0:.3g})", slab=i)
            Hc, Kx, Ky = K_rows(c, s)
            sub = Strip(grid)
            coef = _nonlinear_coefs(sub, Kx[r0:r0 + nrow], Ky[r0:r0 + nrow])
            # CGO gradients span e^{+-|k|a}; the floor follows the face scale column by column,
            # which is exact for harmonic CGOs since |grad v| does not depend on x1
            g_floor = cfg.g_min * np.nan_to_num(np.hypot(Ut0, _lat_d1(U0, hs)), nan=0.0)
            out = march(sub, coef, U0, Ut0, cfl=cfg.cfl, margin_min=cfg.margin_min, g_floor=g_floor,
                        picard_iters=cfg.picard_iters, rows=nrow, intervals0=carry)
            substeps = max(substeps, out.substeps)
            for row, j, reason in out.events:
                failure.append(((r0 + row, j), reason))
            with np.errstate(invalid="ignore", divide="ignore"):
                sig = Hc[r0:r0 + nrow] / (out.Ut ** 2 + out.Us ** 2)
            results.append((out, sig))
        (op, sp), (oq, sq) = results
        keep = nrow if last else nrow - 2
        sl = slice(r0, r0 + keep)
        sig_p[sl] = sp[:keep]
        sig_q[sl] = sq[:keep]
        Rinv = np.linalg.inv(R)
        U1[sl] = Rinv[0, 0] * op.U[:keep] + Rinv[0, 1] * oq.U[:keep]
        live_cells = int(np.sum(np.isfinite(op.U[keep - 1]) & np.isfinite(oq.U[keep - 1])))
        both = np.isfinite(sp[:keep]) & np.isfinite(sq[:keep]) & core[None, :]
        local = float(np.linalg.norm((sp[:keep] - sq[:keep])[both]) / np.linalg.norm(sp[:keep][both])) if both.any() else np.nan
        diag.add(slab=i, t=t, alpha=al, beta=be, margin_p=margins[0], margin_q=margins[1], condition=cond,
                 live_cells=live_cells, consistency=local)
        if not last:
            rr = r1 - r0
            v, vt = op.U[rr], op.Ut[rr]
            w_, wt = oq.U[rr], oq.Ut[rr]
            c_u1 = Rinv[0, 0] * v + Rinv[0, 1] * w_
            c_u2 = Rinv[1, 0] * v + Rinv[1, 1] * w_
            c_t1 = Rinv[0, 0] * vt + Rinv[0, 1] * wt
            c_t2 = Rinv[1, 0] * vt + Rinv[1, 1] * wt
            carry = intersect_intervals(op.intervals[rr], oq.intervals[rr])
            both = np.isfinite(c_u1) & np.isfinite(c_t1)
            if not np.all(both[core]):
                raise NumericalAbort(f"slab {i}: live region no longer covers |x2| <= {target_half_width}", slab=i)
    valid = np.isfinite(sig_p) & np.isfinite(sig_q)
    if not np.all(valid[:, core]):
        raise NumericalAbort(f"live region does not cover |x2| <= {target_half_width} at the far face", slab=spec.slab_count - 1)
    sigma = ScalarField(grid, np.where(valid, sig_p, np.nan))
    u = ScalarField(grid, np.where(valid, U1, np.nan))
    region = valid & core[None, :]
    consistency = float(np.linalg.norm((sig_p - sig_q)[region]) / np.linalg.norm(sig_p[region]))
    stats = {"consistency": consistency, "slab_count": spec.slab_count, "k": k, "w": spec.w,
             "open_set_deviation": worst, "analytic_deviation": analytic, "min_margin_p": min(r["margin_p"] for r in diag.rows),
             "min_margin_q": min(r["margin_q"] for r in diag.rows),
             "max_condition": max(r["condition"] for r in diag.rows)}
    res = ReconstructionResult(u, sigma, valid, failure, substeps, stats)
    res.diagnostics = diag
    res.sigma_q = ScalarField(grid, np.where(valid, sig_q, np.nan))
    return res


def smooth_bump(X, Y, center=(0.5, 0.0), radius=0.4):
    """Compactly supported ``C^inf`` bump with peak 1."""
    r2 = ((X - center[0]) ** 2 + (Y - center[1]) ** 2) / radius ** 2
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        b = np.where(r2 < 1, np.exp(1.0 - 1.0 / np.maximum(1.0 - r2, 1e-300)), 0.0)
    return b
