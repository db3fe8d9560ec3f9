"""Reconstruction of conductivity by marching the hyperbolic Cauchy problem.

Given ``H = sigma |grad u|^2`` and Cauchy data ``(f, j)`` on a space-like
face, ``u`` solves the quasilinear equation

    (2 e e^T - I) : D^2 u - grad(ln H) . grad u = 0,   e = grad u / |grad u|,

which is marched away from the face; ``sigma = H / |grad u|^2`` follows.
The linearized twin of this equation around a pair of solutions is also
provided for stability studies.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .elliptic import CauchyTrace
from .errors import PreconditionError
from .fields import ScalarField, divergence, gradient, write_csv, write_field
from .geometry import LEFT, Domain
from .lorentz import LorentzDirectionField, margin_values
from .strip import REASONS, Coefs, Strip, march, strip_coefficients

log = logging.getLogger(__name__)

AXIS_X1 = "axis_x1"
RADIAL_INWARD = "radial_inward"


@dataclass
class MarchConfig:
    direction: str = AXIS_X1
    cfl: float = 0.5
    g_min: float = 1e-3
    margin_min: float = 0.05
    picard_iters: int = 2

    def __post_init__(self):
        if self.direction not in (AXIS_X1, RADIAL_INWARD):
            raise PreconditionError(f"march.direction must be {AXIS_X1} or {RADIAL_INWARD}, got {self.direction!r}")
        if not (0 < self.cfl <= 1):
            raise PreconditionError(f"march.cfl must lie in (0, 1], got {self.cfl}")
        if not (self.g_min > 0 and self.margin_min > 0):
            raise PreconditionError("march.g_min and march.margin_min must be positive")
        if int(self.picard_iters) < 1:
            raise PreconditionError(f"march.picard_iters must be >= 1, got {self.picard_iters}")


@dataclass
class ReconstructionResult:
    u: ScalarField
    sigma: ScalarField
    valid_mask: np.ndarray
    failure_log: list = field(default_factory=list)
    substeps: int = 1
    stats: dict = field(default_factory=dict)

    def trim_counts(self):
        counts = {r: 0 for r in REASONS}
        for _, reason in self.failure_log:
            counts[reason] += 1
        return counts

    def error_vs(self, sigma_true, mask=None):
        """Relative L2 error of sigma against a reference on the valid mask."""
        m = self.valid_mask if mask is None else (mask & self.valid_mask)
        ref = np.asarray(sigma_true.values if isinstance(sigma_true, ScalarField) else sigma_true)
        d = self.sigma.values[m] - ref[m]
        return float(np.linalg.norm(d) / np.linalg.norm(ref[m]))

    def write(self, outdir, prefix="recon", extra=None):
        """Field files, failure-log CSV and a JSON manifest under ``outdir``."""
        import os

        os.makedirs(outdir, exist_ok=True)
        write_field(os.path.join(outdir, f"{prefix}_u.field"), self.u)
        write_field(os.path.join(outdir, f"{prefix}_sigma.field"), self.sigma)
        X, Y = self.u.grid.cartesian()
        rows = [(i, j, X[i, j], Y[i, j], r) for (i, j), r in self.failure_log]
        write_csv(os.path.join(outdir, f"{prefix}_failure_log.csv"), ["i", "j", "x", "y", "reason"], rows)
        manifest = {"valid_cells": int(self.valid_mask.sum()), "substeps": self.substeps,
                    "trim_counts": self.trim_counts(), **self.stats, **(extra or {})}
        with open(os.path.join(outdir, f"{prefix}_manifest.json"), "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True, default=_json_default)
        return manifest


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def _row_interp(rows, q, idx):
    n0 = min(max(int(math.floor(q)), 0), rows.shape[0] - 2)
    w = q - n0
    return (1 - w) * rows[n0, idx] + w * rows[n0 + 1, idx]


def face_data(domain: Domain, cauchy: CauchyTrace):
    """Cauchy data ``(f, d_tau u)`` on strip row 0, indexed by lateral node.

    On a slab the face is ``x1 = 0`` and ``d_tau u = -j``; its bottom end
    node belongs to the bottom side, so its ``j`` is extrapolated along the
    face. On an annulus the face is the outer circle.
    """
    b = domain.boundary
    nodes = b.node[cauchy.index]
    if domain.kind == "annulus":
        sel = b.component[cauchy.index] == 0
        n = domain.grid.ny
        f = np.full(n, np.nan)
        j = np.full(n, np.nan)
        f[nodes[sel, 1]] = cauchy.f[sel]
        j[nodes[sel, 1]] = cauchy.j[sel]
        normal = np.column_stack([np.cos(domain.grid.y), np.sin(domain.grid.y)])
    elif domain.kind in ("slab", "rectangle"):
        n = domain.grid.ny
        f = np.full(n, np.nan)
        j = np.full(n, np.nan)
        on = nodes[:, 0] == 0
        f[nodes[on, 1]] = cauchy.f[on]
        face = on & (b.side[cauchy.index] == LEFT)
        j[nodes[face, 1]] = cauchy.j[face]
        if np.isnan(j[0]) and np.all(np.isfinite(j[1:4])):
            j[0] = 3 * j[1] - 3 * j[2] + j[3]
        normal = np.tile([-1.0, 0.0], (n, 1))
    else:
        raise PreconditionError(f"marching needs a slab, rectangle or annulus, got {domain.kind}")
    if np.isnan(f).any() or np.isnan(j).any():
        raise PreconditionError("Cauchy trace does not cover the whole marching face")
    return f, -j, normal


def _face_gradient(strip, f, ut):
    us = np.gradient(f, strip.h_s) if not strip.periodic else (np.roll(f, -1) - np.roll(f, 1)) / (2 * strip.h_s)
    if strip.polar:
        r = strip.grid.r_outer
        phi = strip.grid.y
        gr, gp = -ut, us / r
        gx = gr * np.cos(phi) - gp * np.sin(phi)
        gy = gr * np.sin(phi) + gp * np.cos(phi)
        return np.column_stack([gx, gy])
    return np.column_stack([ut, us])


def _check_face(domain, strip, f, ut, normal, cfg, tol_null=1e-3):
    grad = _face_gradient(strip, f, ut)
    norm = np.hypot(grad[:, 0], grad[:, 1])
    if np.any(norm < cfg.g_min):
        raise PreconditionError(f"|grad u| on the Cauchy face falls to {norm.min():.3g} < g_min={cfg.g_min:g}")
    e = grad / norm[:, None]
    margin = margin_values(normal, e, np.ones(norm.shape))
    if np.any(margin <= tol_null):
        k = int(np.argmin(margin))
        raise PreconditionError(f"Cauchy face is not space-like: margin {margin[k]:.3g} at face node {k}")
    return float(np.median(norm)), float(margin.min())


def _nonlinear_coefs(strip: Strip, K1, K2):
    def coef(tau, idx, U, Ut, Us):
        q = tau / strip.h_tau
        k1 = _row_interp(K1, q, idx)
        k2 = _row_interp(K2, q, idx)
        r = strip.radius(tau)
        if r is None:
            g1, g2 = Ut, Us
        else:
            g1, g2 = -Ut, Us / r
        g = np.hypot(g1, g2)
        with np.errstate(invalid="ignore", divide="ignore"):
            e1, e2 = g1 / g, g2 / g
        A, B, C, D, E = strip_coefficients(2 * e1 * e1 - 1, 2 * e1 * e2, 2 * e2 * e2 - 1, k1, k2, r)
        one = np.ones_like(A)
        return Coefs(A, B, C, D, E, np.zeros_like(A), one, g)

    return coef


def _assemble(strip, out, H_strip, H_grid, stats):
    U = out.U
    valid_s = np.isfinite(U)
    if strip.polar:
        r = strip.radius(np.arange(strip.n_rows) * strip.h_tau)[:, None]
        g2 = out.Ut ** 2 + (out.Us / r) ** 2
    else:
        g2 = out.Ut ** 2 + out.Us ** 2
    with np.errstate(invalid="ignore", divide="ignore"):
        sig = np.where(valid_s, H_strip / g2, np.nan)
    valid_s &= np.isfinite(sig)
    u = ScalarField(strip.grid, strip.from_strip(np.where(valid_s, U, np.nan)))
    sigma = ScalarField(strip.grid, strip.from_strip(np.where(valid_s, sig, np.nan)))
    valid = strip.from_strip(valid_s)
    failure = []
    for row, j, reason in out.events:
        i = strip.n_rows - 1 - row if strip.polar else row
        failure.append(((int(i), int(j)), reason))
    depth = int(np.flatnonzero(valid_s.any(axis=1)).max()) if valid_s.any() else -1
    stats = dict(stats, march_depth_rows=depth, dt=out.dt)
    return ReconstructionResult(u, sigma, valid, failure, out.substeps, stats)


def _march_setup(domain, H, cfg):
    if not np.all(np.isfinite(H.values)) or np.any(H.values <= 0):
        raise PreconditionError("H must be positive and finite on the marching region")
    strip = Strip(domain.grid)
    logH = ScalarField(domain.grid, np.log(H.values))
    K = -gradient(logH).values
    K1, K2 = strip.frame(K)
    return strip, K1, K2


def march_nonlinear(domain: Domain, H: ScalarField, cauchy: CauchyTrace, cfg: MarchConfig | None = None) -> ReconstructionResult:
    """Reconstruct ``u`` and ``sigma`` on a slab by marching in ``x1`` from
    the face ``x1 = 0``."""
    cfg = cfg or MarchConfig()
    if domain.kind not in ("slab", "rectangle"):
        raise PreconditionError(f"march_nonlinear needs a slab or rectangle, got {domain.kind}")
    strip, K1, K2 = _march_setup(domain, H, cfg)
    f, ut, normal = face_data(domain, cauchy)
    return _run(domain, strip, H, K1, K2, f, ut, normal, cfg)


def march_polar(domain: Domain, H: ScalarField, cauchy: CauchyTrace, cfg: MarchConfig | None = None) -> ReconstructionResult:
    """Reconstruct on an annulus by marching radially inward from the outer circle."""
    cfg = cfg or MarchConfig(direction=RADIAL_INWARD)
    if domain.kind != "annulus":
        raise PreconditionError(f"march_polar needs an annulus, got {domain.kind}")
    strip, K1, K2 = _march_setup(domain, H, cfg)
    f, ut, normal = face_data(domain, cauchy)
    return _run(domain, strip, H, K1, K2, f, ut, normal, cfg)


def _run(domain, strip, H, K1, K2, f, ut, normal, cfg):
    med, margin = _check_face(domain, strip, f, ut, normal, cfg)
    g_floor = cfg.g_min * med
    growth = domain.grid.r_outer / domain.grid.r_inner if strip.polar else 1.0
    out = march(strip, _nonlinear_coefs(strip, K1, K2), f, ut, cfl=cfg.cfl, margin_min=cfg.margin_min,
                g_floor=g_floor, picard_iters=int(cfg.picard_iters), growth=growth)
    if not np.isfinite(out.U[1]).any():
        raise PreconditionError("first marching layer is empty")
    H_strip = strip.to_strip(H.values)
    return _assemble(strip, out, H_strip, H, {"face_margin": margin, "g_floor": g_floor})


def recover_sigma(H: ScalarField, u: ScalarField, g_min=1e-3) -> ScalarField:
    """``sigma = H / |grad u|^2`` where ``|grad u| >= g_min``; NaN elsewhere."""
    grad = gradient(u).norm
    with np.errstate(invalid="ignore", divide="ignore"):
        ok = grad >= g_min
        sig = np.where(ok, H.values / grad ** 2, np.nan)
    return ScalarField(u.grid, sig)


def linear_source(u: ScalarField, ut: ScalarField, dH: ScalarField):
    """``S = -div(w dH)`` with ``w = grad u / |grad u|^2 + grad u~ / |grad u~|^2``."""
    a = gradient(u).values
    b = gradient(ut).values
    with np.errstate(invalid="ignore", divide="ignore"):
        w = a / np.sum(a * a, axis=-1)[..., None] + b / np.sum(b * b, axis=-1)[..., None]
    return -divergence(w * dH.values[..., None], u.grid)


def metric_divergence(metric: LorentzDirectionField):
    """``k^j = d_i g^{ij}`` on the grid (Cartesian components)."""
    g = metric.g
    cols = np.stack([g[..., 0, :], g[..., 1, :]], axis=-1)  # cols[..., j, i] = g^{ij}
    k0 = divergence(cols[..., 0, :], metric.grid)
    k1 = divergence(cols[..., 1, :], metric.grid)
    return np.stack([k0, k1], axis=-1)


def linearized_solve(domain: Domain, u: ScalarField, ut: ScalarField, dH: ScalarField, df, dj,
                     metric: LorentzDirectionField, cfg: MarchConfig | None = None) -> ScalarField:
    """March ``g : D^2 v + (div g) . grad v + S = 0`` from the Cauchy face.

    ``v`` approximates ``u - u~`` when ``dH = H - H~`` and ``(df, dj)`` are
    the differences of the Cauchy data. ``df`` and ``dj`` are arrays over
    the face nodes (lateral index order) or scalars.
    """
    cfg = cfg or MarchConfig()
    strip = Strip(domain.grid)
    n = strip.n_s
    df = np.broadcast_to(np.asarray(df, float), (n,)).copy()
    dut = -np.broadcast_to(np.asarray(dj, float), (n,)).copy()
    kv = metric_divergence(metric)
    G11, G12, G22 = strip.frame_tensor(metric.g)
    K1, K2 = strip.frame(kv)
    S = strip.to_strip(linear_source(u, ut, dH))
    S = np.where(np.isfinite(S), S, 0.0)
    gn = strip.to_strip(metric.alpha * np.maximum(1.0, metric.beta ** 2))

    def coef(tau, idx, U, Ut, Us):
        q = tau / strip.h_tau
        r = strip.radius(tau)
        vals = [_row_interp(a, q, idx) for a in (G11, G12, G22, K1, K2)]
        A, B, C, D, E = strip_coefficients(*vals, r)
        return Coefs(A, B, C, D, E, _row_interp(S, q, idx), _row_interp(gn, q, idx), np.full(idx.shape, np.inf))

    growth = domain.grid.r_outer / domain.grid.r_inner if strip.polar else 1.0
    out = march(strip, coef, df, dut, cfl=cfg.cfl, margin_min=cfg.margin_min, linear=True, growth=growth)
    return ScalarField(domain.grid, strip.from_strip(out.U))


def config_dict(cfg: MarchConfig):
    return asdict(cfg)
