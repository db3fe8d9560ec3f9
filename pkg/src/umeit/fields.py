"""Grid-sampled fields, chart-aware gradients and the on-disk field format.

Field file layout: a header line ``nx ny hx hy chart`` followed by the
values in row-major order (index ``i`` outer), one per line, written with
17 significant digits. Undefined nodes are written as ``nan``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import POLAR, Grid2D


@dataclass
class ScalarField:
    grid: Grid2D
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError(f"field shape {self.values.shape} does not match grid {self.grid.shape}")

    @property
    def defined(self):
        return np.isfinite(self.values)

    def copy(self):
        return ScalarField(self.grid, self.values.copy())


@dataclass
class VectorField:
    """Cartesian components on every node, shape ``(nx, ny, 2)``."""

    grid: Grid2D
    values: np.ndarray

    @property
    def norm(self):
        return np.hypot(self.values[..., 0], self.values[..., 1])


def _axis_derivative(v, h, axis, periodic=False):
    """Second-order derivative along ``axis`` that respects NaN holes:
    centred where both neighbours exist, one-sided three-point otherwise."""
    v = np.moveaxis(v, axis, 0)
    if periodic:
        d = (np.roll(v, -1, 0) - np.roll(v, 1, 0)) / (2 * h)
        return np.moveaxis(d, 0, axis)
    n = v.shape[0]
    ok = np.isfinite(v)
    pad = np.full((2,) + v.shape[1:], np.nan)
    vp = np.concatenate([pad, v, pad])
    okp = np.isfinite(vp)
    s = slice(2, n + 2)

    def sh(k):
        return vp[2 + k: n + 2 + k], okp[2 + k: n + 2 + k]

    vm1, om1 = sh(-1)
    vp1, op1 = sh(1)
    vm2, om2 = sh(-2)
    vp2, op2 = sh(2)
    v0 = vp[s]
    with np.errstate(invalid="ignore"):
        d = np.full(v.shape, np.nan)
        c = ok & om1 & op1
        d[c] = (vp1[c] - vm1[c]) / (2 * h)
        f = ok & ~c & op1 & op2
        d[f] = (-3 * v0[f] + 4 * vp1[f] - vp2[f]) / (2 * h)
        b = ok & ~c & ~f & om1 & om2
        d[b] = (3 * v0[b] - 4 * vm1[b] + vm2[b]) / (2 * h)
        f1 = ok & np.isnan(d) & op1
        d[f1] = (vp1[f1] - v0[f1]) / h
        b1 = ok & np.isnan(d) & om1
        d[b1] = (v0[b1] - vm1[b1]) / h
    return np.moveaxis(d, 0, axis)


def chart_derivatives(values, grid):
    """Derivatives along the two chart axes (``d/dx, d/dy`` or ``d/dr, d/dphi``)."""
    d0 = _axis_derivative(values, grid.hx, 0)
    d1 = _axis_derivative(values, grid.hy, 1, periodic=grid.periodic_y)
    return d0, d1


def gradient(u: ScalarField) -> VectorField:
    """Cartesian gradient: centred differences inside, one-sided second-order
    next to undefined nodes and grid edges."""
    g = u.grid
    d0, d1 = chart_derivatives(u.values, g)
    if g.chart == POLAR:
        r, phi = g.mesh()
        c, s = np.cos(phi), np.sin(phi)
        dphi = d1 / r
        gx = d0 * c - dphi * s
        gy = d0 * s + dphi * c
    else:
        gx, gy = d0, d1
    return VectorField(g, np.stack([gx, gy], axis=-1))


def divergence(values, grid):
    """Divergence of a Cartesian vector field given as ``(nx, ny, 2)``."""
    gx = gradient(ScalarField(grid, values[..., 0])).values[..., 0]
    gy = gradient(ScalarField(grid, values[..., 1])).values[..., 1]
    return gx + gy


def write_field(path, field: ScalarField):
    g = field.grid
    with open(path, "w") as fh:
        fh.write(f"{g.nx} {g.ny} {g.hx!r} {g.hy!r} {g.chart_token()}\n")
        for v in field.values.ravel():
            fh.write(f"{v:.17g}\n")


def read_field(path) -> ScalarField:
    with open(path) as fh:
        head = fh.readline().split()
        if len(head) != 5:
            raise ValueError(f"{path}: bad field header {head!r}")
        grid = Grid2D.from_header(int(head[0]), int(head[1]), float(head[2]), float(head[3]), head[4])
        vals = np.loadtxt(fh, dtype=float, ndmin=1)
    if vals.size != grid.nx * grid.ny:
        raise ValueError(f"{path}: expected {grid.nx * grid.ny} values, found {vals.size}")
    return ScalarField(grid, vals.reshape(grid.shape))


def write_pgm(path, image, lo=None, hi=None):
    """Binary 8-bit PGM; rows are the ``y`` index (top row = largest ``y``)."""
    a = np.asarray(image, dtype=float)
    finite = np.isfinite(a)
    if lo is None:
        lo = float(a[finite].min()) if finite.any() else 0.0
    if hi is None:
        hi = float(a[finite].max()) if finite.any() else 1.0
    scale = 255.0 / (hi - lo) if hi > lo else 0.0
    img = np.where(finite, np.clip((a - lo) * scale, 0, 255), 0).astype(np.uint8)
    img = img.T[::-1]
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode())
        fh.write(img.tobytes())


def read_pgm(path):
    with open(path, "rb") as fh:
        data = fh.read()
    parts = data.split(b"\n", 3)
    w, h = map(int, parts[1].split())
    img = np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w)
    return img[::-1].T


def write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)
