"""Structured grids on intervals, rectangles and radial balls.

Every grid is an edge graph: nodes carry a dual-cell measure, edges carry a
length and a transversal measure.  The discrete p-Dirichlet energy in
:mod:`plapsys.plap` is written purely in these terms, so the same solver
runs on all three geometries.  Radial grids model a ball in R^N through
the weight r^(N-1) (the constant area of the unit sphere is dropped).
"""

import hashlib
import io
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import sparse

from .errors import GridError

KINDS = ("interval", "rectangle", "radial_ball")


@dataclass(frozen=True)
class DomainSpec:
    kind: str
    bounds: tuple = (0.0, 1.0)
    radius: float = 1.0
    ambient_dim: int = 2
    resolution: int = 64
    grading: str = "uniform"
    ratio: float = 0.85
    layers: Optional[int] = None

    @classmethod
    def interval(cls, a, b, resolution, grading="uniform", ratio=0.85, layers=None):
        return cls("interval", (float(a), float(b)), resolution=int(resolution),
                   grading=grading, ratio=ratio, layers=layers)

    @classmethod
    def rectangle(cls, ax, bx, ay, by, resolution, grading="uniform", ratio=0.85, layers=None):
        return cls("rectangle", tuple(map(float, (ax, bx, ay, by))), resolution=int(resolution),
                   grading=grading, ratio=ratio, layers=layers)

    @classmethod
    def radial_ball(cls, R, N, resolution, grading="uniform", ratio=0.85, layers=None):
        return cls("radial_ball", (0.0, float(R)), radius=float(R), ambient_dim=int(N),
                   resolution=int(resolution), grading=grading, ratio=ratio, layers=layers)

    def validate(self):
        if self.kind not in KINDS:
            raise GridError(f"unknown domain kind {self.kind!r}", operation="build_grid")
        if self.kind == "interval":
            a, b = self.bounds
            if not a < b:
                raise GridError("interval needs a < b", operation="build_grid", witness={"bounds": self.bounds})
        elif self.kind == "rectangle":
            ax, bx, ay, by = self.bounds
            if not (ax < bx and ay < by):
                raise GridError("rectangle needs ax < bx and ay < by", operation="build_grid",
                                witness={"bounds": self.bounds})
        else:
            if not self.radius > 0:
                raise GridError("radius must be positive", operation="build_grid")
            if self.ambient_dim < 2:
                raise GridError("radial balls need ambient dimension N >= 2", operation="build_grid")
        if self.grading not in ("uniform", "boundary_refined"):
            raise GridError(f"unknown grading {self.grading!r}", operation="build_grid")
        if self.grading == "boundary_refined" and not 0 < self.ratio < 1:
            raise GridError("boundary_refined ratio must lie in (0, 1)", operation="build_grid")

    @property
    def inradius(self):
        if self.kind == "interval":
            a, b = self.bounds
            return 0.5 * (b - a)
        if self.kind == "rectangle":
            ax, bx, ay, by = self.bounds
            return 0.5 * min(bx - ax, by - ay)
        return self.radius


def _axis(a, b, n, grading, ratio, layers, two_sided=True):
    cells = n - 1
    if grading == "uniform":
        return np.linspace(a, b, n)
    k = np.arange(cells)
    depth = np.minimum(k, cells - 1 - k) if two_sided else cells - 1 - k
    if layers is None:
        layers = min(cells // 4, int(math.ceil(math.log(1e-5) / math.log(ratio))))
    width = ratio ** np.maximum(layers - depth, 0).astype(float)
    x = np.concatenate([[0.0], np.cumsum(width)])
    x = a + (b - a) * x / x[-1]
    x[-1] = b
    return x


def _dual_widths(x):
    h = np.diff(x)
    w = np.zeros_like(x)
    w[:-1] += 0.5 * h
    w[1:] += 0.5 * h
    return w


@dataclass(frozen=True, eq=False)
class Grid:
    spec: DomainSpec
    nodes: np.ndarray
    interior_index: np.ndarray
    boundary_index: np.ndarray
    cell_measures: np.ndarray
    edges: np.ndarray
    edge_length: np.ndarray
    edge_measure: np.ndarray
    distance: np.ndarray
    axes: tuple
    grid_id: str
    _incidence: sparse.csr_matrix = field(repr=False)

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def coordinate_names(self):
        return {"interval": ("x",), "rectangle": ("x", "y"), "radial_ball": ("r",)}[self.spec.kind]

    @property
    def incidence(self):
        """Sparse (edges x nodes) difference operator: row e is u[j] - u[i]."""
        return self._incidence

    def measure(self):
        if self.spec.kind == "interval":
            a, b = self.spec.bounds
            return b - a
        if self.spec.kind == "rectangle":
            ax, bx, ay, by = self.spec.bounds
            return (bx - ax) * (by - ay)
        return self.spec.radius ** self.spec.ambient_dim / self.spec.ambient_dim

    def function(self, values):
        return GridFunction(self, values)

    def evaluate(self, fn):
        """Evaluate ``fn`` at the nodes (``fn(x)``, ``fn(x, y)`` or ``fn(r)``)."""
        cols = [self.nodes[:, k] for k in range(self.nodes.shape[1])]
        return GridFunction(self, np.broadcast_to(np.asarray(fn(*cols), dtype=float), (self.n_nodes,)).copy())


def build_grid(spec):
    """Build the grid described by ``spec``."""
    spec.validate()
    n = spec.resolution
    if spec.kind == "radial_ball":
        if n < 2:
            raise GridError("radial grid needs at least 2 nodes", operation="build_grid",
                            witness={"resolution": n})
        r = _axis(0.0, spec.radius, n, spec.grading, spec.ratio, spec.layers, two_sided=False)
        N = spec.ambient_dim
        nodes = r[:, None]
        half = 0.5 * (r[1:] + r[:-1])
        outer = np.concatenate([half, [r[-1]]])
        inner = np.concatenate([[0.0], half])
        cells = (outer ** N - inner ** N) / N
        edges = np.column_stack([np.arange(n - 1), np.arange(1, n)])
        length = np.diff(r)
        trans = half ** (N - 1)
        boundary = np.array([n - 1])
        dist = spec.radius - r
        axes = (r,)
    elif spec.kind == "interval":
        if n < 3:
            raise GridError("resolution too small to have an interior node", operation="build_grid",
                            witness={"resolution": n})
        a, b = spec.bounds
        x = _axis(a, b, n, spec.grading, spec.ratio, spec.layers)
        nodes = x[:, None]
        cells = _dual_widths(x)
        edges = np.column_stack([np.arange(n - 1), np.arange(1, n)])
        length = np.diff(x)
        trans = np.ones(n - 1)
        boundary = np.array([0, n - 1])
        dist = np.minimum(x - a, b - x)
        axes = (x,)
    else:
        if n < 3:
            raise GridError("resolution too small to have an interior node", operation="build_grid",
                            witness={"resolution": n})
        ax, bx, ay, by = spec.bounds
        x = _axis(ax, bx, n, spec.grading, spec.ratio, spec.layers)
        y = _axis(ay, by, n, spec.grading, spec.ratio, spec.layers)
        X, Y = np.meshgrid(x, y, indexing="ij")
        nodes = np.column_stack([X.ravel(), Y.ravel()])
        wx, wy = _dual_widths(x), _dual_widths(y)
        cells = np.outer(wx, wy).ravel()
        idx = np.arange(n * n).reshape(n, n)
        ex = np.column_stack([idx[:-1, :].ravel(), idx[1:, :].ravel()])
        lx = np.repeat(np.diff(x), n)
        tx = np.tile(wy, n - 1)
        ey = np.column_stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()])
        ly = np.tile(np.diff(y), n)
        ty = np.repeat(wx, n - 1)
        edges = np.vstack([ex, ey])
        length = np.concatenate([lx, ly])
        trans = np.concatenate([tx, ty])
        on_edge = np.zeros((n, n), dtype=bool)
        on_edge[[0, -1], :] = True
        on_edge[:, [0, -1]] = True
        boundary = idx[on_edge]
        dist = np.minimum.reduce([X - ax, bx - X, Y - ay, by - Y]).ravel()
        axes = (x, y)

    n_nodes = len(nodes)
    mask = np.zeros(n_nodes, dtype=bool)
    mask[boundary] = True
    dist = np.where(mask, 0.0, np.maximum(dist, 0.0))
    boundary = np.flatnonzero(mask)
    interior = np.flatnonzero(~mask)
    n_edges = len(edges)
    rows = np.repeat(np.arange(n_edges), 2)
    cols = edges.ravel()
    vals = np.tile([-1.0, 1.0], n_edges)
    incidence = sparse.csr_matrix((vals, (rows, cols)), shape=(n_edges, n_nodes))
    digest = hashlib.sha256(repr(spec).encode()).hexdigest()[:12]
    return Grid(spec, nodes, interior, boundary, cells, edges, length, trans, dist, axes,
                f"{spec.kind}-{digest}", incidence)


def boundary_distance(grid, node_index):
    """Euclidean distance from a node to the domain boundary."""
    return float(grid.distance[node_index])


def restrict_to_core(grid, margin):
    """Indices of nodes whose boundary distance is at least ``margin``."""
    if margin >= grid.spec.inradius:
        raise GridError("core margin must be smaller than the inradius", operation="restrict_to_core",
                        witness={"margin": margin, "inradius": grid.spec.inradius})
    idx = np.flatnonzero(grid.distance >= margin - 1e-12 * grid.spec.inradius)
    if idx.size == 0:
        raise GridError("core is empty: margin too large", operation="restrict_to_core",
                        witness={"margin": margin})
    return idx


@dataclass(frozen=True, eq=False)
class GridFunction:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.grid.n_nodes,):
            raise GridError("grid function length differs from node count", operation="GridFunction",
                            witness={"expected": self.grid.n_nodes, "got": values.shape})
        if not np.all(np.isfinite(values)):
            raise GridError("grid function has non-finite values", operation="GridFunction",
                            witness={"node": int(np.flatnonzero(~np.isfinite(values))[0])})
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def grid_id(self):
        return self.grid.grid_id

    def to_csv(self):
        """CSV text with columns node_index, coordinates, dist_boundary, value."""
        names = self.grid.coordinate_names
        buf = io.StringIO()
        buf.write(",".join(["node_index", *names, "dist_boundary", "value"]) + "\n")
        for i in range(self.grid.n_nodes):
            coords = ",".join(repr(float(c)) for c in self.grid.nodes[i])
            buf.write(f"{i},{coords},{float(self.grid.distance[i])!r},{float(self.values[i])!r}\n")
        return buf.getvalue()
