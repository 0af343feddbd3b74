"""Flat model meshes: periodic boxes (complex tori) and Euclidean balls.

A mesh discretizes C^n through its underlying 2n real coordinates, ordered
as (x_1, y_1, ..., x_n, y_n) with z_j = x_j + i y_j.  Spacing is uniform
and equal along every axis.

Ball meshes classify nodes into interior / boundary / exterior by the
distance to the sphere: interior nodes keep a one-spacing margin so that
every second-order stencil (including the diagonal points used by mixed
derivatives) only ever reads interior or boundary nodes.  Boundary nodes
carry Dirichlet data; no curved-boundary interpolation is attempted, so
solves on balls carry a first-order geometric boundary error that the
estimate checks account for explicitly.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .errors import ParameterError


class Mesh:
    """A uniform grid over 2n real axes, periodic or ball-classified.

    Parameters
    ----------
    kind : "torus" or "ball"
    n : complex dimension
    axes : tuple of 1-D coordinate arrays, one per real axis (length 2n)
    spacing : grid spacing (identical along every axis)
    extent : period (torus) or radius (ball)
    center : ball center in R^{2n}
    """

    def __init__(self, kind, n, axes, spacing, extent, center=None):
        if kind not in ("torus", "ball"):
            raise ParameterError(f"unknown mesh kind {kind!r}")
        if spacing <= 0:
            raise ParameterError("mesh spacing must be positive")
        self.kind = kind
        self.n = int(n)
        self.axes = tuple(np.asarray(a, dtype=float) for a in axes)
        if len(self.axes) != 2 * self.n:
            raise ParameterError("need one coordinate array per real axis")
        self.spacing = float(spacing)
        self.extent = float(extent)
        self.center = np.zeros(2 * self.n) if center is None else np.asarray(center, float)
        self.shape = tuple(len(a) for a in self.axes)
        self._classify()

    # -- construction ------------------------------------------------------

    def _classify(self):
        if self.kind == "torus":
            self.interior = np.ones(self.shape, dtype=bool)
            self.boundary = np.zeros(self.shape, dtype=bool)
            self.exterior = np.zeros(self.shape, dtype=bool)
            return
        rho = np.sqrt(self.radius2())
        h = self.spacing
        # Half-spacing margin: node coordinates are quantized to the half
        # grid, so rho < extent - h/2 already forces every coordinate at
        # least one full spacing from the bounding box, closing all
        # second-order stencils (axis and diagonal) over interior nodes.
        self.interior = rho < self.extent - 0.5 * h
        structure = np.ones((3,) * (2 * self.n), dtype=bool)
        dilated = ndimage.binary_dilation(self.interior, structure=structure)
        self.boundary = dilated & ~self.interior
        self.exterior = ~dilated

    @property
    def valid(self):
        """Nodes that carry meaningful values (interior plus Dirichlet band)."""
        return self.interior | self.boundary

    @property
    def node_count(self):
        return int(np.prod(self.shape))

    # -- coordinates -------------------------------------------------------

    def grid_axis(self, a):
        """Coordinate of axis a broadcast over the full grid shape."""
        shape = [1] * (2 * self.n)
        shape[a] = self.shape[a]
        return self.axes[a].reshape(shape)

    def radius2(self, center=None):
        """|x - center|^2 over the grid; periodic displacement on tori."""
        center = self.center if center is None else np.asarray(center, float)
        total = np.zeros(self.shape)
        for a in range(2 * self.n):
            d = self.grid_axis(a) - center[a]
            if self.kind == "torus":
                d = (d + 0.5 * self.extent) % self.extent - 0.5 * self.extent
            total = total + d * d
        return total

    def node_coords(self, index):
        return np.array([self.axes[a][index[a]] for a in range(2 * self.n)])

    def argmin_node(self, data):
        """Index tuple of the minimum over valid nodes, ties by lowest linear index."""
        flat = np.where(self.valid.ravel(), data.ravel(), np.inf)
        return np.unravel_index(int(np.argmin(flat)), self.shape)

    # -- descriptors -------------------------------------------------------

    def describe(self):
        return {
            "kind": self.kind,
            "n": self.n,
            "m": self.shape[0],
            "extent": self.extent,
            "spacing": self.spacing,
            "center": list(self.center),
            "shape": list(self.shape),
        }

    def same_geometry(self, other):
        return (self.kind == other.kind and self.n == other.n
                and self.shape == other.shape
                and np.isclose(self.spacing, other.spacing)
                and all(np.array_equal(a, b) for a, b in zip(self.axes, other.axes)))


def torus_mesh(n: int, m: int, period: float = 1.0) -> Mesh:
    """Periodic mesh with m cell-centered points per real axis."""
    if m < 8:
        raise ParameterError("torus mesh needs m >= 8 points per axis")
    h = period / m
    axis = -0.5 * period + (np.arange(m) + 0.5) * h
    return Mesh("torus", n, (axis,) * (2 * n), h, period)


def ball_mesh(n: int, m: int, radius: float = 1.0, center=None) -> Mesh:
    """Ball of the given radius sampled on an m^(2n) cell-centered box."""
    if m < 8:
        raise ParameterError("ball mesh needs m >= 8 points per axis")
    h = 2.0 * radius / m
    center = np.zeros(2 * n) if center is None else np.asarray(center, float)
    axes = tuple(center[a] - radius + (np.arange(m) + 0.5) * h for a in range(2 * n))
    return Mesh("ball", n, axes, h, radius, center)


def chart_ball(parent: Mesh, x0_index, radius: float):
    """Ball mesh of the given radius centered at a node of the parent mesh.

    The chart reuses the parent grid: its nodes are exactly the parent
    nodes within the coordinate box of half-width `radius` around x0
    (periodic wrap on tori; on balls the box must fit inside the array).
    Returns the ball mesh together with per-axis parent index arrays for
    restricting parent fields to the chart.

    The chart may have fewer than 8 points per axis on coarse parents; it
    is a derived mesh, not a user-facing one.
    """
    h = parent.spacing
    k = int(np.floor(radius / h + 1e-12))
    if k < 2:
        raise ParameterError("chart radius below two mesh spacings")
    offsets = np.arange(-k, k + 1)
    index_arrays = []
    for a in range(2 * parent.n):
        idx = x0_index[a] + offsets
        if parent.kind == "torus":
            idx = idx % parent.shape[a]
        elif idx[0] < 0 or idx[-1] >= parent.shape[a]:
            raise ParameterError("chart box leaves the parent ball mesh")
        index_arrays.append(idx)
    axes = (offsets * h,) * (2 * parent.n)
    mesh = Mesh("ball", parent.n, axes, h, radius)
    return mesh, tuple(index_arrays)


def restrict_to_chart(data: np.ndarray, index_arrays) -> np.ndarray:
    """Extract the chart sub-array of a (possibly tensor-valued) torus field."""
    return data[np.ix_(*index_arrays)]
