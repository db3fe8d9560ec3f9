"""Discretized 2D domains: tensor grids, boundary samples and normals.

Rectangles and slabs live on a node-centred Cartesian grid whose edge
nodes are the boundary samples. Discs and ovoids are embedded in a
Cartesian box and carry samples placed along the analytic curve at
arclength spacing close to the grid step. Annuli use a polar chart with
fields stored in ``(r, phi)`` index space.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import PreconditionError

CARTESIAN = "cartesian"
POLAR = "polar"

TENSOR_KINDS = ("rectangle", "slab", "annulus")
CURVED_KINDS = ("disc", "ovoid")
KINDS = TENSOR_KINDS + CURVED_KINDS

# rectangle sides, counter-clockwise from the origin corner
BOTTOM, RIGHT, TOP, LEFT = 0, 1, 2, 3


@dataclass(frozen=True)
class Grid2D:
    """Node grid. For the polar chart ``x`` is the radius and ``y`` the angle."""

    nx: int
    ny: int
    hx: float
    hy: float
    origin: tuple = (0.0, 0.0)
    chart: str = CARTESIAN
    r_inner: float | None = None
    r_outer: float | None = None

    def __post_init__(self):
        if self.nx < 8 or self.ny < 8:
            raise PreconditionError(f"grid needs nx, ny >= 8, got {self.nx}x{self.ny}")
        if not (self.hx > 0 and self.hy > 0):
            raise PreconditionError(f"grid spacing must be positive, got hx={self.hx}, hy={self.hy}")
        if self.chart == POLAR:
            if not (self.r_inner is not None and self.r_outer is not None and 0 < self.r_inner < self.r_outer):
                raise PreconditionError("polar chart requires 0 < r_inner < r_outer")
        elif self.chart != CARTESIAN:
            raise PreconditionError(f"unknown chart {self.chart!r}")

    @property
    def shape(self):
        return (self.nx, self.ny)

    @property
    def periodic_y(self):
        return self.chart == POLAR

    @property
    def x(self):
        return self.origin[0] + self.hx * np.arange(self.nx)

    @property
    def y(self):
        return self.origin[1] + self.hy * np.arange(self.ny)

    def mesh(self):
        """Chart coordinates of every node, ``ij`` indexing."""
        return np.meshgrid(self.x, self.y, indexing="ij")

    def cartesian(self):
        """Cartesian positions of every node."""
        a, b = self.mesh()
        if self.chart == POLAR:
            return a * np.cos(b), a * np.sin(b)
        return a, b

    def chart_token(self):
        if self.chart == POLAR:
            return f"polar:{self.r_inner!r}:{self.r_outer!r}"
        return f"cartesian:{self.origin[0]!r}:{self.origin[1]!r}"

    @classmethod
    def from_header(cls, nx, ny, hx, hy, token):
        kind, p, q = token.split(":")
        if kind == POLAR:
            return cls(nx, ny, hx, hy, (float(p), 0.0), POLAR, float(p), float(q))
        return cls(nx, ny, hx, hy, (float(p), float(q)))


@dataclass(frozen=True)
class BoundarySample:
    position: tuple
    normal: tuple
    weight: float
    component_id: int


@dataclass(frozen=True)
class BoundarySet:
    """Boundary samples stored column-wise, ordered by component then arclength.

    ``node`` holds the grid index of each sample on tensor domains (-1 on
    curved ones); ``side`` the rectangle side; ``param`` the curve
    parameter (ellipse angle, or polar angle on annuli).
    """

    position: np.ndarray
    normal: np.ndarray
    weight: np.ndarray
    component: np.ndarray
    arclength: np.ndarray
    param: np.ndarray
    node: np.ndarray
    side: np.ndarray

    def __len__(self):
        return self.weight.shape[0]

    def __iter__(self):
        for k in range(len(self)):
            yield BoundarySample(
                tuple(self.position[k]), tuple(self.normal[k]), float(self.weight[k]), int(self.component[k])
            )

    def indices(self, component):
        return np.flatnonzero(self.component == component)


@dataclass(frozen=True)
class ShapeSpec:
    """Shape descriptor plus resolution: ``kind`` and its dimensions."""

    kind: str
    dims: tuple
    nx: int = 64
    ny: int | None = None

    def to_dict(self):
        return {"kind": self.kind, "dims": list(self.dims), "nx": self.nx, "ny": self.ny}


def rectangle(Lx=1.0, Ly=1.0, nx=64, ny=None):
    return ShapeSpec("rectangle", (float(Lx), float(Ly)), nx, ny)


def slab(L=1.0, a=1.0, nx=64, ny=None):
    """``X = (0, L) x (-a, a)``; the face ``x1 = 0`` is the Cauchy face."""
    return ShapeSpec("slab", (float(L), float(a)), nx, ny)


def disc(R=1.0, n=64):
    return ShapeSpec("disc", (float(R),), n, n)


def ovoid(a=1.0, b=0.7, n=64):
    return ShapeSpec("ovoid", (float(a), float(b)), n, None)


def annulus(r_inner=0.5, r_outer=1.0, nr=64, nphi=None):
    return ShapeSpec("annulus", (float(r_inner), float(r_outer)), nr, nphi)


@dataclass(frozen=True)
class Domain:
    grid: Grid2D
    kind: str
    dims: tuple
    interior: np.ndarray
    boundary: BoundarySet
    components: dict = field(default_factory=dict)

    @property
    def is_tensor(self):
        return self.kind in TENSOR_KINDS

    @property
    def n_components(self):
        return int(self.boundary.component.max()) + 1

    @property
    def semi_axes(self):
        if self.kind == "disc":
            return self.dims[0], self.dims[0]
        return self.dims

    @property
    def bounding_box(self):
        """``(x0, y0, Lx, Ly)`` of the region over which fields are periodised."""
        if self.kind == "rectangle":
            return 0.0, 0.0, self.dims[0], self.dims[1]
        if self.kind == "slab":
            return 0.0, -self.dims[1], self.dims[0], 2 * self.dims[1]
        if self.kind == "annulus":
            r = self.dims[1]
            return -r, -r, 2 * r, 2 * r
        a, b = self.semi_axes
        return -a, -b, 2 * a, 2 * b

    def closure_mask(self):
        """Nodes where solution values are defined (interior plus boundary nodes)."""
        mask = self.interior.copy()
        if self.is_tensor:
            nodes = self.boundary.node
            mask[nodes[:, 0], nodes[:, 1]] = True
        return mask

    def level_set(self, x, y):
        a, b = self.semi_axes
        return (x / a) ** 2 + (y / b) ** 2 - 1.0

    def curve_point(self, t):
        a, b = self.semi_axes
        return a * np.cos(t), b * np.sin(t)

    def curve_param(self, x, y):
        a, b = self.semi_axes
        return np.arctan2(y / b, x / a)

    def sample(self, k) -> BoundarySample:
        b = self.boundary
        return BoundarySample(tuple(b.position[k]), tuple(b.normal[k]), float(b.weight[k]), int(b.component[k]))


def build_domain(spec: ShapeSpec) -> Domain:
    """Construct a discretized domain from a shape descriptor."""
    if spec.kind not in KINDS:
        raise PreconditionError(f"unknown shape kind {spec.kind!r}; expected one of {KINDS}")
    if any(not (d > 0) for d in spec.dims):
        raise PreconditionError(f"{spec.kind} dimensions must be positive, got {spec.dims}")
    if spec.kind == "rectangle":
        Lx, Ly = spec.dims
        return _box_domain(spec, 0.0, 0.0, Lx, Ly)
    if spec.kind == "slab":
        L, a = spec.dims
        return _box_domain(spec, 0.0, -a, L, 2 * a)
    if spec.kind == "annulus":
        return _annulus_domain(spec)
    return _curved_domain(spec)


def _box_domain(spec, x0, y0, Lx, Ly):
    nx = spec.nx
    ny = spec.ny or nx
    grid = Grid2D(nx, ny, Lx / (nx - 1), Ly / (ny - 1), (x0, y0))
    interior = np.zeros((nx, ny), bool)
    interior[1:-1, 1:-1] = True
    ii, jj, side, normal = [], [], [], []
    runs = [
        (np.arange(0, nx - 1), np.zeros(nx - 1, int), BOTTOM, (0.0, -1.0)),
        (np.full(ny - 1, nx - 1), np.arange(0, ny - 1), RIGHT, (1.0, 0.0)),
        (np.arange(nx - 1, 0, -1), np.full(nx - 1, ny - 1), TOP, (0.0, 1.0)),
        (np.zeros(ny - 1, int), np.arange(ny - 1, 0, -1), LEFT, (-1.0, 0.0)),
    ]
    weights = []
    for i, j, s, nrm in runs:
        ii.append(i)
        jj.append(j)
        side.append(np.full(i.shape, s))
        normal.append(np.tile(nrm, (i.shape[0], 1)))
        weights.append(np.full(i.shape, grid.hx if s in (BOTTOM, TOP) else grid.hy))
    ii = np.concatenate(ii)
    jj = np.concatenate(jj)
    w = np.concatenate(weights)
    pos = np.column_stack([grid.x[ii], grid.y[jj]])
    arc = np.concatenate([[0.0], np.cumsum(w)[:-1]])
    bset = BoundarySet(
        position=pos,
        normal=np.concatenate(normal),
        weight=w,
        component=np.zeros(ii.shape, int),
        arclength=arc,
        param=arc.copy(),
        node=np.column_stack([ii, jj]),
        side=np.concatenate(side),
    )
    return Domain(grid, spec.kind, spec.dims, interior, bset, {0: "boundary"})


def _annulus_domain(spec):
    r_in, r_out = spec.dims
    if r_in >= r_out:
        raise PreconditionError(f"annulus requires r_inner < r_outer, got {r_in} >= {r_out}")
    nr = spec.nx
    nphi = spec.ny or 2 * nr
    grid = Grid2D(nr, nphi, (r_out - r_in) / (nr - 1), 2 * math.pi / nphi, (r_in, 0.0), POLAR, r_in, r_out)
    interior = np.zeros((nr, nphi), bool)
    interior[1:-1, :] = True
    phi = grid.y
    pos, nrm, w, comp, arc, node = [], [], [], [], [], []
    # component 0 is the outer circle, 1 the inner one
    for cid, (i, r, sign) in enumerate([(nr - 1, r_out, 1.0), (0, r_in, -1.0)]):
        pos.append(np.column_stack([r * np.cos(phi), r * np.sin(phi)]))
        nrm.append(sign * np.column_stack([np.cos(phi), np.sin(phi)]))
        w.append(np.full(nphi, r * grid.hy))
        comp.append(np.full(nphi, cid))
        arc.append(r * phi)
        node.append(np.column_stack([np.full(nphi, i), np.arange(nphi)]))
    bset = BoundarySet(
        position=np.concatenate(pos),
        normal=np.concatenate(nrm),
        weight=np.concatenate(w),
        component=np.concatenate(comp),
        arclength=np.concatenate(arc),
        param=np.concatenate([phi, phi]),
        node=np.concatenate(node),
        side=np.full(2 * nphi, -1),
    )
    return Domain(grid, "annulus", spec.dims, interior, bset, {0: "outer", 1: "inner"})


def _curved_domain(spec):
    if spec.kind == "disc":
        a = b = spec.dims[0]
    else:
        a, b = spec.dims
    nx = spec.nx
    # two padding cells on each side keep every stencil inside the box
    hx = 2 * a / (nx - 5)
    ny = spec.ny or (nx if spec.kind == "disc" else int(round(2 * b / hx)) + 5)
    hy = 2 * b / (ny - 5)
    grid = Grid2D(nx, ny, hx, hy, (-a - 2 * hx, -b - 2 * hy))
    X, Y = grid.mesh()
    interior = (X / a) ** 2 + (Y / b) ** 2 < 1.0

    tt = np.linspace(0.0, 2 * math.pi, 20001)
    speed = np.hypot(a * np.sin(tt), b * np.cos(tt))
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (speed[1:] + speed[:-1]) * np.diff(tt))])
    perimeter = cum[-1]
    m = max(16, int(round(perimeter / min(hx, hy))))
    arc = perimeter * np.arange(m) / m
    t = np.interp(arc, cum, tt)
    pos = np.column_stack([a * np.cos(t), b * np.sin(t)])
    nrm = np.column_stack([np.cos(t) / a, np.sin(t) / b])
    nrm /= np.linalg.norm(nrm, axis=1)[:, None]
    bset = BoundarySet(
        position=pos,
        normal=nrm,
        weight=np.full(m, perimeter / m),
        component=np.zeros(m, int),
        arclength=arc,
        param=t,
        node=np.full((m, 2), -1),
        side=np.full(m, -1),
    )
    return Domain(grid, spec.kind, spec.dims, interior, bset, {0: "boundary"})


def boundary_integral(domain: Domain, g) -> float:
    """Sum of ``g * weight`` over the boundary samples, in sample order."""
    g = np.asarray(g, dtype=float)
    if g.shape != (len(domain.boundary),):
        raise PreconditionError(f"boundary scalar has {g.size} values, domain has {len(domain.boundary)} samples")
    return math.fsum((g * domain.boundary.weight).tolist())


def boundary_values(domain: Domain, f, component=None) -> np.ndarray:
    """Evaluate Dirichlet data at the boundary samples.

    ``f`` is either a callable ``f(x, y)`` or an array with one value per
    sample (or per sample of ``component``).
    """
    idx = np.arange(len(domain.boundary)) if component is None else domain.boundary.indices(component)
    if callable(f):
        pos = domain.boundary.position[idx]
        return np.broadcast_to(np.asarray(f(pos[:, 0], pos[:, 1]), float), idx.shape).copy()
    f = np.asarray(f, dtype=float)
    if f.shape != idx.shape:
        raise PreconditionError(f"boundary data has {f.size} values, expected {idx.size}")
    if not np.all(np.isfinite(f)):
        raise PreconditionError("boundary data must be finite")
    return f.copy()


def curved_axis_arms(domain: Domain):
    """Distances from each interior node to the curve along the four axis
    directions, capped at the grid step (``inf`` means the neighbour node is
    interior). Returns a dict ``direction -> (arm, param)`` where ``param``
    is the curve parameter of the intersection point."""
    a, b = domain.semi_axes
    g = domain.grid
    X, Y = g.mesh()
    with np.errstate(invalid="ignore"):
        xb = a * np.sqrt(np.clip(1.0 - (Y / b) ** 2, 0.0, None))
        yb = b * np.sqrt(np.clip(1.0 - (X / a) ** 2, 0.0, None))
    inside = domain.interior
    out = {}
    for key, di, dj, arm, px, py in [
        ("E", 1, 0, xb - X, xb, Y),
        ("W", -1, 0, X + xb, -xb, Y),
        ("N", 0, 1, yb - Y, X, yb),
        ("S", 0, -1, Y + yb, X, -yb),
    ]:
        nb = np.zeros_like(inside)
        src = inside[max(di, 0): g.nx + min(di, 0), max(dj, 0): g.ny + min(dj, 0)]
        nb[max(-di, 0): g.nx + min(-di, 0), max(-dj, 0): g.ny + min(-dj, 0)] = src
        cut = inside & ~nb
        h = g.hx if di else g.hy
        arm_k = np.where(cut, np.clip(arm, 1e-8 * h, h), np.inf)
        out[key] = (arm_k, domain.curve_param(px, py))
    return out
