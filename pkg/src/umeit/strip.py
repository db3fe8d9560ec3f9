"""Marching engine for second-order hyperbolic equations on strip grids.

The equation is written in a marching coordinate ``tau`` and a lateral
coordinate ``s``:

    A u_tt + 2B u_ts + C u_ss + D u_t + E u_s + S = 0.

On the slab ``tau = x1`` and ``s = x2``; on the annulus ``tau = r_out - r``
and ``s = phi`` (periodic). Each level is advanced by a leapfrog step that
treats the mixed derivative implicitly, which leaves one tridiagonal solve
per run of live cells. The set of live cells is tracked as continuous
intervals whose ends move with the characteristic speeds, so that only
cells inside the numerical domain of dependence of the Cauchy data are
ever computed. Cells are also dropped where the equation stops being
hyperbolic in the marching direction or where the gradient degenerates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .geometry import POLAR, Grid2D

GRADIENT_FLOOR = "gradient_floor"
HYPERBOLICITY_LOSS = "hyperbolicity_loss"
CONE_TRIM = "cone_trim"
REASONS = (GRADIENT_FLOOR, HYPERBOLICITY_LOSS, CONE_TRIM)

_EDGE_TOL = 1e-9


class Strip:
    """Row/lateral view of a slab or annulus grid.

    Strip arrays are indexed ``[row, s]``; row 0 carries the Cauchy data.
    """

    def __init__(self, grid: Grid2D):
        self.grid = grid
        self.polar = grid.chart == POLAR
        self.h_tau = grid.hx
        self.h_s = grid.hy
        self.n_rows = grid.nx
        self.n_s = grid.ny
        self.periodic = self.polar

    def to_strip(self, arr):
        return arr[::-1] if self.polar else arr

    from_strip = to_strip

    def radius(self, tau):
        return self.grid.r_outer - tau if self.polar else None

    def frame(self, vec):
        """Cartesian ``(nx, ny, 2)`` vectors to strip-frame components
        (``x1, x2`` on the slab; ``r, phi`` unit vectors on the annulus)."""
        if not self.polar:
            return self.to_strip(vec[..., 0]), self.to_strip(vec[..., 1])
        _, phi = self.grid.mesh()
        c, s = np.cos(phi), np.sin(phi)
        vr = vec[..., 0] * c + vec[..., 1] * s
        vp = -vec[..., 0] * s + vec[..., 1] * c
        return self.to_strip(vr), self.to_strip(vp)

    def frame_tensor(self, t):
        """Cartesian ``(nx, ny, 2, 2)`` symmetric tensors to frame components."""
        if not self.polar:
            return self.to_strip(t[..., 0, 0]), self.to_strip(t[..., 0, 1]), self.to_strip(t[..., 1, 1])
        _, phi = self.grid.mesh()
        c, s = np.cos(phi), np.sin(phi)
        a, b, d = t[..., 0, 0], t[..., 0, 1], t[..., 1, 1]
        rr = c * c * a + 2 * c * s * b + s * s * d
        rp = -c * s * a + (c * c - s * s) * b + c * s * d
        pp = s * s * a - 2 * c * s * b + c * c * d
        return self.to_strip(rr), self.to_strip(rp), self.to_strip(pp)


def strip_coefficients(G11, G12, G22, K1, K2, r=None):
    """Map frame components of ``G : D^2u + K . grad u`` to ``(A, B, C, D, E)``.

    With ``r`` given the frame is ``(r_hat, phi_hat)`` and the marching
    variable is ``tau = r_out - r``.
    """
    if r is None:
        return G11, G12, G22, K1, K2
    return G11, -G12 / r, G22 / r ** 2, -G22 / r - K1, -2.0 * G12 / r ** 2 + K2 / r


def characteristic_speeds(A, B, C):
    """Lateral speeds ``ds/dtau = (B -+ sqrt(B^2 - AC)) / A``; NaN where not real."""
    with np.errstate(invalid="ignore", divide="ignore"):
        disc = B * B - A * C
        root = np.sqrt(np.where(disc >= 0, disc, np.nan))
        l1 = (B - root) / A
        l2 = (B + root) / A
    return np.minimum(l1, l2), np.maximum(l1, l2)


@dataclass
class Coefs:
    """Per-cell coefficients returned by a coefficient provider."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    E: np.ndarray
    S: np.ndarray
    gnorm: np.ndarray
    grad: np.ndarray


@dataclass
class MarchOutput:
    U: np.ndarray
    Ut: np.ndarray
    Us: np.ndarray
    events: list = field(default_factory=list)
    substeps: int = 1
    dt: float = 0.0
    intervals: list = field(default_factory=list)


# --------------------------------------------------------------- intervals

def _cells(lo, hi, n, periodic):
    idx = np.arange(math.ceil(lo - _EDGE_TOL), math.floor(hi + _EDGE_TOL) + 1)
    return idx % n if periodic else idx


def runs_from_mask(mask, periodic):
    """Maximal runs of True as ``(lo, hi)`` integer intervals. A fully live
    periodic ring is returned as ``None`` (no ends)."""
    n = mask.shape[0]
    if periodic and mask.all():
        return None
    if periodic:
        start = int(np.flatnonzero(~mask)[0])
        order = (np.arange(n) + start) % n
        m = mask[order]
        offset = start
    else:
        m = mask
        offset = 0
    runs = []
    j = 0
    while j < n:
        if m[j]:
            k = j
            while k + 1 < n and m[k + 1]:
                k += 1
            runs.append((float(j + offset), float(k + offset)))
            j = k + 1
        else:
            j += 1
    return runs


def advance_intervals(intervals, lam_lo, lam_hi, bad, step, n, periodic):
    """Move interval ends one level forward and split at bad cells.

    ``step = dt / h_s``. The left end advances by ``max(lam_hi, 0) * step``
    and the right end by ``min(lam_lo, 0) * step``; intervals never grow.
    Returns the new intervals (``None`` for an intact ring).
    """
    if intervals is None:
        if not bad.any():
            return None
        first = int(np.flatnonzero(bad)[0])
        intervals = [(float(first), float(first + n))]
    out = []
    for lo, hi in intervals:
        pos = np.arange(math.ceil(lo - _EDGE_TOL), math.floor(hi + _EDGE_TOL) + 1)
        cells = pos % n if periodic else pos
        segs = []
        seg_lo = lo
        for p, c in zip(pos, cells):
            if bad[c]:
                if p - 1 >= seg_lo - _EDGE_TOL:
                    segs.append((seg_lo, float(p - 1)))
                seg_lo = float(p + 1)
        if hi >= seg_lo - _EDGE_TOL:
            segs.append((seg_lo, hi))
        for a, b in segs:
            ca = math.ceil(a - _EDGE_TOL) % n
            cb = math.floor(b + _EDGE_TOL) % n
            sl = lam_hi[ca] if np.isfinite(lam_hi[ca]) else 0.0
            sr = lam_lo[cb] if np.isfinite(lam_lo[cb]) else 0.0
            na = a + max(sl, 0.0) * step
            nb = b + min(sr, 0.0) * step
            if math.floor(nb + _EDGE_TOL) - math.ceil(na - _EDGE_TOL) + 1 >= 3:
                out.append((na, nb))
    return out


def intersect_intervals(a, b):
    """Pairwise intersection of two lists of closed lateral intervals (non-periodic)."""
    if a is None:
        return b
    if b is None:
        return a
    out = []
    for lo1, hi1 in a:
        for lo2, hi2 in b:
            lo, hi = max(lo1, lo2), min(hi1, hi2)
            if hi >= lo - _EDGE_TOL:
                out.append((lo, hi))
    return sorted(out)


def _live(intervals, n, periodic):
    mask = np.zeros(n, bool)
    if intervals is None:
        mask[:] = True
        return mask
    for lo, hi in intervals:
        mask[_cells(lo, hi, n, periodic)] = True
    return mask


def _run_indices(intervals, n, periodic):
    if intervals is None:
        return [(np.arange(n), True)]
    return [(_cells(lo, hi, n, periodic), False) for lo, hi in intervals]


# ------------------------------------------------------------------ marcher

def _lateral(v, h, ring):
    k = _backend.kernels
    v = np.ascontiguousarray(v, dtype=float)
    return k.lateral_d1(v, h, ring), k.lateral_d2(v, h, ring)


def _classify(c: Coefs, dt, hs, margin_min, g_floor):
    lam_lo, lam_hi = characteristic_speeds(c.A, c.B, c.C)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = c.A / c.gnorm
        cfl = dt * np.maximum(np.abs(lam_lo), np.abs(lam_hi)) / hs
    reason = np.full(c.A.shape, "", dtype=object)
    grad_bad = ~(c.grad >= g_floor)
    hyp_bad = ~(ratio >= margin_min) | ~np.isfinite(lam_lo) | ~(cfl <= 1.0 + 1e-12)
    reason[hyp_bad] = HYPERBOLICITY_LOSS
    reason[grad_bad] = GRADIENT_FLOOR
    return lam_lo, lam_hi, reason


def substeps_for(coef0: Coefs, h_tau, hs, cfl, growth=1.0, cap=256):
    """Substeps per grid row so that ``dt * max|lambda| <= cfl * h_s``."""
    lam_lo, lam_hi = characteristic_speeds(coef0.A, coef0.B, coef0.C)
    speed = np.nanmax(np.abs(np.concatenate([lam_lo, lam_hi])))
    if not np.isfinite(speed) or speed == 0:
        speed = 1.0
    return int(min(cap, max(1, math.ceil(h_tau * speed * growth / (cfl * hs) - 1e-12))))


def march(strip: Strip, coef, U0, Ut0, *, cfl=0.5, margin_min=0.05, g_floor=0.0,
          picard_iters=2, linear=False, growth=1.0, substeps=None, rows=None, intervals0=None):
    """March the Cauchy data ``(U0, Ut0)`` on row 0 through the strip.

    ``coef(tau, idx, U, Ut, Us)`` returns :class:`Coefs` for lateral cells
    ``idx`` at marching time ``tau``. Returns values, ``tau``- and
    ``s``-derivatives on every grid row (NaN outside the live set) and the
    list of ``(row, s_index, reason)`` trim events. ``intervals0`` restricts
    the initial live set to given (possibly fractional) lateral intervals so a
    restarted march keeps its exact cone edges; ``g_floor`` may be a scalar
    or one value per lateral cell. The output's ``intervals`` holds the live
    intervals of every grid row (``None`` for an intact ring).
    """
    n = strip.n_s
    hs = strip.h_s
    per = strip.periodic
    n_rows = strip.n_rows if rows is None else rows
    U0 = np.asarray(U0, float)
    Ut0 = np.asarray(Ut0, float)
    idx_all = np.arange(n)
    finite0 = np.isfinite(U0) & np.isfinite(Ut0)
    if finite0.all():
        Us0, Uss0 = _lateral(U0, hs, per)
    else:
        # one-sided at the ends of each finite run so data edges stay usable
        Us0 = np.full(n, np.nan)
        Uss0 = np.full(n, np.nan)
        for idx, ring in _run_indices(runs_from_mask(finite0, per), n, per):
            if idx.size >= 3:
                Us0[idx], Uss0[idx] = _lateral(U0[idx], hs, ring)
    c0 = coef(0.0, idx_all, U0, Ut0, Us0)
    m = substeps if substeps is not None else substeps_for(c0, strip.h_tau, hs, cfl, growth)
    dt = strip.h_tau / m
    lam_lo, lam_hi, reason = _classify(c0, dt, hs, margin_min, g_floor)
    bad0 = (reason != "") | ~np.isfinite(U0) | ~np.isfinite(Ut0)
    # cells without data were never alive; only finite cells that fail a test are logged
    events = [(0, int(j), reason[j]) for j in np.flatnonzero(bad0 & finite0 & (reason != ""))]
    intervals = runs_from_mask(~bad0, per)
    if intervals0 is not None:
        # widen finite runs by just under a cell so fractional edges of intervals0 survive
        slack = 1.0 - 4 * _EDGE_TOL
        runs = intervals if intervals is not None else [(0.0, n - 1.0)]
        intervals = intersect_intervals(intervals0, [(lo - slack, hi + slack) for lo, hi in runs])
    if intervals is not None:
        intervals = [iv for iv in intervals if math.floor(iv[1] + _EDGE_TOL) - math.ceil(iv[0] - _EDGE_TOL) + 1 >= 3]
        if not intervals:
            return MarchOutput(np.full((n_rows, n), np.nan), np.full((n_rows, n), np.nan),
                               np.full((n_rows, n), np.nan), events, m, dt, [[]] * n_rows)

    U_rows = np.full((n_rows, n), np.nan)
    Ut_rows = np.full((n_rows, n), np.nan)
    Us_rows = np.full((n_rows, n), np.nan)
    live0 = _live(intervals, n, per)
    U_rows[0, live0] = U0[live0]
    Ut_rows[0, live0] = Ut0[live0]

    # second-order start from the equation at tau = 0
    Utt0 = np.full(n, np.nan)
    for idx, ring in _run_indices(intervals, n, per):
        us, uss = _lateral(U0[idx], hs, ring)
        uts, _ = _lateral(Ut0[idx], hs, ring)
        c = coef(0.0, idx, U0[idx], Ut0[idx], us)
        Utt0[idx] = -(2 * c.B * uts + c.C * uss + c.D * Ut0[idx] + c.E * us + c.S) / c.A
    U_prev2 = None
    U_prev = np.where(live0, U0, np.nan)
    # the starting step honours the cone like every later level
    cur_intervals = advance_intervals(intervals, lam_lo, lam_hi, np.zeros(n, bool), dt / hs, n, per)
    live1 = _live(cur_intervals, n, per)
    U_cur = np.where(live1, U0 + dt * Ut0 + 0.5 * dt * dt * Utt0, np.nan)
    last_reason = np.full(n, CONE_TRIM, dtype=object)
    pending = None  # (row, U at row, U one level before) waiting for a centred tau-derivative
    row_live = np.zeros((n_rows, n), bool)
    row_live[0] = live0
    row_iv = [[] for _ in range(n_rows)]
    row_iv[0] = intervals
    if m == 1:
        pending = (1, U_cur.copy(), U_prev.copy(), None)
        row_live[1] = live1
        row_iv[1] = cur_intervals
        for j in np.flatnonzero(live0 & ~live1):
            events.append((1, int(j), CONE_TRIM))
    total = (n_rows - 1) * m
    for k in range(1, total):
        tau = k * dt
        # derivative estimate at level k for the first Picard pass
        if k == 1:
            Ut_est = Ut0 + dt * Utt0
        else:
            Ut_est = (3 * U_cur - 4 * U_prev + U_prev2) / (2 * dt)
        full = {key: np.full(n, np.nan) for key in ("A", "B", "C", "D", "E", "S", "Us", "Uss", "Usm", "gnorm", "grad")}
        for idx, ring in _run_indices(cur_intervals, n, per):
            us, uss = _lateral(U_cur[idx], hs, ring)
            usm, _ = _lateral(U_prev[idx], hs, ring)
            c = coef(tau, idx, U_cur[idx], Ut_est[idx], us)
            for key in ("A", "B", "C", "D", "E", "S", "gnorm", "grad"):
                full[key][idx] = getattr(c, key)
            full["Us"][idx] = us
            full["Uss"][idx] = uss
            full["Usm"][idx] = usm
        cfull = Coefs(*(full[key] for key in ("A", "B", "C", "D", "E", "S", "gnorm", "grad")))
        live_now = _live(cur_intervals, n, per)
        lam_lo, lam_hi, reason = _classify(cfull, dt, hs, margin_min, g_floor)
        bad = live_now & (reason != "")
        new_intervals = advance_intervals(cur_intervals, lam_lo, lam_hi, bad, dt / hs, n, per)
        live_next = _live(new_intervals, n, per)
        died = live_now & ~live_next
        last_reason[died] = np.where(bad[died], reason[died], CONE_TRIM)

        U_next = np.full(n, np.nan)
        for idx, ring in _run_indices(new_intervals, n, per):
            A = full["A"][idx]
            B, C, D, E, S = (full[key][idx] for key in ("B", "C", "D", "E", "S"))
            us, uss, usm = full["Us"][idx], full["Uss"][idx], full["Usm"][idx]
            uk, ukm = U_cur[idx], U_prev[idx]
            guess = 2 * uk - ukm
            for it in range(1 if linear else max(1, picard_iters)):
                if it > 0:
                    ut = (sol - ukm) / (2 * dt)
                    c = coef(tau, idx, uk, ut, us)
                    A, B, C, D, E, S = c.A, c.B, c.C, c.D, c.E, c.S
                a = (B / A) / dt
                d = (D / A) / (2 * dt)
                rhs = (2 * uk - ukm) / dt ** 2 + a * usm + d * ukm - (C / A) * uss - (E / A) * us - S / A
                sol = _backend.kernels.leapfrog_solve(
                    np.ascontiguousarray(a), np.ascontiguousarray(d), np.ascontiguousarray(rhs),
                    np.ascontiguousarray(guess), 1.0 / dt ** 2, hs, ring)
                guess = sol
            U_next[idx] = sol
        U_next[~np.isfinite(U_next)] = np.nan

        # finalize a stored row now that its forward neighbour exists
        if pending is not None and pending[0] * m == k:
            row, u_row, u_before, _ = pending
            _store_row(strip, row, u_row, u_before, U_next, dt, cur_intervals, U_rows, Ut_rows, Us_rows)
            pending = None
        if (k + 1) % m == 0:
            row = (k + 1) // m
            pending = (row, U_next.copy(), U_cur.copy(), U_prev.copy())
            row_live[row] = live_next
            row_iv[row] = new_intervals
            for j in np.flatnonzero(row_live[row - 1] & ~live_next):
                events.append((row, int(j), last_reason[j]))
        U_prev2, U_prev, U_cur = U_prev, U_cur, U_next
        cur_intervals = new_intervals
        if new_intervals is not None and not new_intervals:
            break
    if pending is not None:
        row, u_row, u_before, u_before2 = pending
        _store_row(strip, row, u_row, u_before, None, dt, cur_intervals, U_rows, Ut_rows, Us_rows, u_before2)
    # row 0 lateral derivative
    for idx, ring in _run_indices(intervals, n, per):
        Us_rows[0, idx] = _lateral(U0[idx], hs, ring)[0]
    return MarchOutput(U_rows, Ut_rows, Us_rows, events, m, dt, row_iv)


def _store_row(strip, row, u_row, u_before, u_after, dt, intervals, U_rows, Ut_rows, Us_rows, u_before2=None):
    """Store a grid row with a centred ``tau``-derivative where the next
    level exists and a one-sided second-order one otherwise."""
    n = strip.n_s
    live = np.isfinite(u_row)
    U_rows[row, live] = u_row[live]
    ut = np.full(n, np.nan)
    if u_after is not None:
        ut = (u_after - u_before) / (2 * dt)
    if u_before2 is not None:
        back = (3 * u_row - 4 * u_before + u_before2) / (2 * dt)
    else:
        back = (u_row - u_before) / dt
    ut = np.where(np.isfinite(ut), ut, back)
    Ut_rows[row, live] = ut[live]
    runs = runs_from_mask(live, strip.periodic)
    for idx, ring in _run_indices(runs, n, strip.periodic):
        if idx.size >= 3:
            Us_rows[row, idx] = _lateral(u_row[idx], strip.h_s, ring)[0]


def cone_sweep(strip: Strip, speeds, live0, rows=None, substeps=1):
    """Propagate a live set through the strip using characteristic speeds only.

    ``speeds(tau, idx)`` returns ``(lam_lo, lam_hi, bad)`` for lateral cells
    ``idx``. Returns the ``(rows, n_s)`` boolean live mask.
    """
    n = strip.n_s
    per = strip.periodic
    n_rows = strip.n_rows if rows is None else rows
    dt = strip.h_tau / substeps
    intervals = runs_from_mask(live0, per)
    if intervals is not None:
        intervals = [iv for iv in intervals if iv[1] - iv[0] + 1 >= 3]
    out = np.zeros((n_rows, n), bool)
    out[0] = _live(intervals, n, per) if intervals != [] else False
    for k in range(0, (n_rows - 1) * substeps):
        if intervals is not None and not intervals:
            break
        idx = np.arange(n)
        lam_lo, lam_hi, bad = speeds(k * dt, idx)
        live = _live(intervals, n, per)
        bad = bad & live
        intervals = advance_intervals(intervals, lam_lo, lam_hi, bad, dt / strip.h_s, n, per)
        if (k + 1) % substeps == 0:
            out[(k + 1) // substeps] = _live(intervals, n, per) if intervals != [] else False
    return out
