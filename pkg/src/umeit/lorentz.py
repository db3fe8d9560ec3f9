"""Lorentzian metrics induced by one or two solutions, boundary causal
classification, hyperbolicity margins, energies and domains of influence.

For a pair of solutions with gradients ``a = grad u`` and ``b = grad u~``
the linearized equation is ``div(g grad v) = div(w dH)`` with

    g = alpha (e e^T - beta^2 (I - e e^T)),   h = g^{-1},

``e = (a + b)/|a + b|``, ``beta^2 = (|a|^2 + |b|^2) / (2 a.b)`` and
``alpha = H 2 a.b / (|a|^2 |b|^2)``. A single solution gives the metric
``2 e e^T - I`` of the nonlinear equation (``alpha = beta = 1``).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PreconditionError
from .fields import ScalarField, gradient, write_csv
from .geometry import Domain
from .strip import Strip, characteristic_speeds, cone_sweep, strip_coefficients

SPACELIKE = "spacelike"
TIMELIKE = "timelike"
NULL = "null"
TOL_NULL = 1e-3
G_MIN = 1e-3


def metric_tensors(e, alpha, beta):
    """``(g, h)`` as ``(..., 2, 2)`` arrays from direction, scale and speed."""
    e = np.asarray(e, float)
    alpha = np.asarray(alpha, float)[..., None, None]
    b2 = np.asarray(beta, float)[..., None, None] ** 2
    ee = e[..., :, None] * e[..., None, :]
    eye = np.eye(2)
    g = alpha * (ee - b2 * (eye - ee))
    with np.errstate(divide="ignore", invalid="ignore"):
        h = (ee - (eye - ee) / b2) / alpha
    return g, h


@dataclass
class LorentzDirectionField:
    """Metric data on a grid; ``k`` is ``-grad ln H`` for single-solution metrics."""

    grid: object
    e: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    valid: np.ndarray
    g: np.ndarray
    h: np.ndarray
    k: np.ndarray | None = None

    @property
    def speed(self):
        return self.beta


def metric_from_gradients(a, b, H):
    """Pair metric from gradient arrays ``(..., 2)`` and ``H``; the validity
    mask excludes the elliptic regime ``a.b <= 0``."""
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    H = np.asarray(H, float)
    s = a + b
    S = np.sum(s * s, axis=-1)
    P = np.sum(a * a, axis=-1) + np.sum(b * b, axis=-1)
    Dd = S - P
    with np.errstate(divide="ignore", invalid="ignore"):
        valid = (Dd > 0) & np.isfinite(Dd) & np.isfinite(H)
        e = s / np.sqrt(S)[..., None]
        beta = np.sqrt(P / Dd)
        alpha = H / (np.sum(a * a, axis=-1) * np.sum(b * b, axis=-1)) * Dd
    valid &= np.isfinite(alpha) & np.isfinite(beta)
    e = np.where(valid[..., None], e, np.nan)
    alpha = np.where(valid, alpha, np.nan)
    beta = np.where(valid, beta, np.nan)
    g, h = metric_tensors(e, alpha, beta)
    return e, alpha, beta, valid, g, h


def metric_single(u: ScalarField, H: ScalarField, g_min=G_MIN) -> LorentzDirectionField:
    """Single-solution metric ``2 e e^T - I`` with ``e = grad u / |grad u|``,
    plus ``k = -grad ln H``. Cells with ``|grad u| < g_min`` are invalid."""
    grad = gradient(u).values
    norm = np.hypot(grad[..., 0], grad[..., 1])
    with np.errstate(divide="ignore", invalid="ignore"):
        valid = (norm >= g_min) & np.isfinite(norm)
        e = np.where(valid[..., None], grad / norm[..., None], np.nan)
        logH = np.where(H.values > 0, np.log(H.values), np.nan)
    k = -gradient(ScalarField(u.grid, logH)).values
    ones = np.where(valid, 1.0, np.nan)
    g, h = metric_tensors(e, ones, ones)
    return LorentzDirectionField(u.grid, e, ones, ones.copy(), valid, g, h, k)


def metric_pair(u: ScalarField, ut: ScalarField, H: ScalarField) -> LorentzDirectionField:
    """Metric of the linearized equation around the pair ``(u, u~)``.

    ``H`` should be the mean of the two internal functionals.
    """
    a = gradient(u).values
    b = gradient(ut).values
    e, alpha, beta, valid, g, h = metric_from_gradients(a, b, H.values)
    return LorentzDirectionField(u.grid, e, alpha, beta, valid, g, h)


def margin_values(nu, e, beta):
    """``(nu . e)^2 - 1/(1 + beta^2)``."""
    dot = np.sum(np.asarray(nu) * np.asarray(e), axis=-1)
    return dot * dot - 1.0 / (1.0 + np.asarray(beta) ** 2)


@dataclass
class BoundaryClassification:
    tag: np.ndarray
    margin: np.ndarray
    arclength: np.ndarray
    component: np.ndarray
    param: np.ndarray
    tol_null: float = TOL_NULL

    def null_crossings(self):
        """Sign changes of the margin between consecutive samples of each
        closed component, linearly interpolated in the curve parameter.
        Returns ``(component, param, arclength)`` triples."""
        out = []
        for comp in np.unique(self.component):
            idx = np.flatnonzero(self.component == comp)
            m = self.margin[idx]
            t = np.append(self.param[idx], self.param[idx][0] + 2 * np.pi)
            s = self.arclength[idx]
            s = np.append(s, s[-1] + (s[-1] - s[-2]))
            for a in range(idx.size):
                b = (a + 1) % idx.size
                if not (np.isfinite(m[a]) and np.isfinite(m[b])):
                    continue
                if m[a] == 0.0 or m[a] * m[b] < 0:
                    w = m[a] / (m[a] - m[b])
                    out.append((int(comp), float((t[a] + w * (t[a + 1] - t[a])) % (2 * np.pi)),
                                float(s[a] + w * (s[a + 1] - s[a]))))
        return out

    def to_csv(self, path):
        write_csv(path, ["arclength", "tag", "margin"], zip(self.arclength, self.tag, self.margin))


def _boundary_metric(domain: Domain, metric: LorentzDirectionField):
    """Direction and speed at each boundary sample: the node value on tensor
    domains, the nearest valid node on curved ones."""
    b = domain.boundary
    if domain.is_tensor:
        i, j = b.node[:, 0], b.node[:, 1]
        return metric.e[i, j], metric.beta[i, j]
    from scipy.spatial import cKDTree

    X, Y = domain.grid.mesh()
    ok = metric.valid
    tree = cKDTree(np.column_stack([X[ok], Y[ok]]))
    _, near = tree.query(b.position)
    return metric.e[ok][near], metric.beta[ok][near]


def classify_boundary(domain: Domain, metric: LorentzDirectionField, tol_null=TOL_NULL) -> BoundaryClassification:
    """Tag every boundary sample by the sign of ``(nu.e)^2 - 1/(1+beta^2)``."""
    e, beta = _boundary_metric(domain, metric)
    margin = margin_values(domain.boundary.normal, e, beta)
    tag = np.where(margin > tol_null, SPACELIKE, np.where(margin < -tol_null, TIMELIKE, NULL)).astype(object)
    tag[~np.isfinite(margin)] = NULL
    b = domain.boundary
    return BoundaryClassification(tag, margin, b.arclength.copy(), b.component.copy(), b.param.copy(), tol_null)


def hyperbolicity_margin(metric: LorentzDirectionField, nu2, region=None) -> float:
    """``min over region of (nu2 . e)^2 - 1/(1 + beta^2)``."""
    shape = metric.alpha.shape
    mask = metric.valid if region is None else (np.asarray(region, bool) & metric.valid)
    if not mask.any():
        raise PreconditionError("hyperbolicity margin requested over an empty region")
    nu2 = np.broadcast_to(np.asarray(nu2, float), shape + (2,))
    return float(np.min(margin_values(nu2[mask], metric.e[mask], metric.beta[mask])))


def energy(dv_input, nu2, g, h=None):
    """``E = <dv, nu2>^2 - 1/2 <dv, dv> <nu2, nu2>`` with ``dv = g dv_input``
    and the bilinear form given by ``h = g^{-1}``."""
    dvi = np.asarray(dv_input, float)
    nu2 = np.asarray(nu2, float)
    g = np.asarray(g, float)
    h = np.linalg.inv(g) if h is None else np.asarray(h, float)
    dv = np.einsum("...ij,...j->...i", g, dvi)

    def form(x, y):
        return np.einsum("...i,...ij,...j->...", x, h, y)

    return form(dv, nu2) ** 2 - 0.5 * form(dv, dv) * form(nu2, nu2)


def energy_matrix(nu2, g, h):
    """Quadratic form ``M`` with ``E(dv_input) = dv_input^T M dv_input``."""
    nn = np.einsum("...i,...j->...ij", nu2, nu2)
    hnn = np.einsum("...i,...ij,...j->...", nu2, h, nu2)
    return nn - 0.5 * hnn[..., None, None] * g


def random_energy_samples(n, rng, theta_range=(0.05, 0.5), beta_range=(0.5, 2.0), alpha_range=(0.2, 5.0)):
    """Random ``(g, h, nu2, dv_input, theta)`` with margins in ``theta_range``.

    Margins are only drawn where reachable, i.e. ``theta < beta^2/(1+beta^2)``.
    """
    beta = np.exp(rng.uniform(np.log(beta_range[0]), np.log(beta_range[1]), n))
    alpha = np.exp(rng.uniform(np.log(alpha_range[0]), np.log(alpha_range[1]), n))
    top = np.minimum(theta_range[1], beta ** 2 / (1 + beta ** 2) * (1 - 1e-9))
    if np.any(top <= theta_range[0]):
        raise PreconditionError("beta range admits no margin in theta_range")
    theta = rng.uniform(theta_range[0], top)
    phi = rng.uniform(0, 2 * np.pi, n)
    e = np.column_stack([np.cos(phi), np.sin(phi)])
    c = np.sqrt(theta + 1 / (1 + beta ** 2))
    ang = np.arccos(np.clip(c, -1, 1)) * rng.choice([-1.0, 1.0], n)
    nu = np.column_stack([np.cos(phi + ang), np.sin(phi + ang)])
    dv = rng.standard_normal((n, 2))
    g, h = metric_tensors(e, alpha, beta)
    return g, h, nu, dv, theta


def fit_energy_constant(g, h, nu2, theta, safety=0.5):
    """``C = safety * min lambda_min(M) / theta^2`` over a training set."""
    lam = np.linalg.eigvalsh(energy_matrix(nu2, g, h))[..., 0]
    return float(safety * np.min(lam / theta ** 2))


def _strip_face_live(domain: Domain, sigma1):
    """Lateral cells of row 0 covered by the boundary subset ``sigma1``."""
    b = domain.boundary
    strip = Strip(domain.grid)
    live = np.zeros(strip.n_s, bool)
    sel = np.zeros(len(b), bool)
    sel[np.asarray(sigma1)] = True
    if strip.polar:
        on = sel & (b.component == 0)
        live[b.node[on, 1]] = True
    else:
        on = sel & (b.node[:, 0] == 0)
        live[b.node[on, 1]] = True
        # the face is a closed segment: its end nodes belong to it even when
        # their boundary samples carry the normal of the adjacent side
        if live[1]:
            live[0] = True
        if live[-2]:
            live[-1] = True
    return strip, live, sel


def domain_of_influence(domain: Domain, sigma1, metric: LorentzDirectionField, tol_null=TOL_NULL):
    """Cells reachable from ``sigma1`` by marching inside the characteristic cone.

    ``sigma1`` indexes boundary samples on the Cauchy face (``x1 = 0`` of a
    slab or rectangle, the outer circle of an annulus). Interval ends move
    with the characteristic speeds of ``g``; cells where ``g`` is invalid or
    where the marching direction stops being time-like cut the sweep.
    """
    if domain.kind not in ("slab", "rectangle", "annulus"):
        raise PreconditionError(f"domain of influence needs a slab, rectangle or annulus, got {domain.kind}")
    idx = np.asarray(sigma1)
    if idx.dtype == bool:
        idx = np.flatnonzero(idx)
    if idx.size == 0:
        raise PreconditionError("sigma1 is empty")
    cls = classify_boundary(domain, metric, tol_null)
    if not np.all(cls.tag[idx] == SPACELIKE):
        raise PreconditionError("sigma1 contains samples that are not space-like")
    strip, live0, sel = _strip_face_live(domain, idx)
    if not live0.any():
        raise PreconditionError("sigma1 has no samples on the Cauchy face")
    G11, G12, G22 = strip.frame_tensor(metric.g)
    zero = np.zeros_like(G11)
    ok = strip.to_strip(metric.valid)

    def speeds(tau, cells):
        q = min(tau / strip.h_tau, strip.n_rows - 1)
        row = int(round(q))
        r = strip.radius(tau)
        A, B, C, _, _ = strip_coefficients(G11[row, cells], G12[row, cells], G22[row, cells], zero[row, cells], zero[row, cells], r)
        lo, hi = characteristic_speeds(A, B, C)
        bad = ~ok[row, cells] | ~(A > 0) | ~np.isfinite(lo)
        return lo, hi, bad

    mask = cone_sweep(strip, speeds, live0)
    return strip.from_strip(mask)
