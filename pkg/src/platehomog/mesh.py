"""Structured meshes, periodic node identification and Gauss rules.

Nodes are numbered lexicographically with x running fastest, so node
``(i, j)`` has index ``j * (nx + 1) + i`` and every topological query is an
index computation.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError


@dataclass(frozen=True)
class Quadrature:
    """Tensor or 1D Gauss rule on the reference element [-1, 1]^dim."""

    points: np.ndarray
    weights: np.ndarray

    @property
    def measure(self) -> float:
        return float(self.weights.sum())


def gauss_1d(n: int) -> Quadrature:
    pts, wts = np.polynomial.legendre.leggauss(n)
    return Quadrature(pts, wts)


def gauss_quad(n: int = 2) -> Quadrature:
    """n x n Gauss rule on [-1, 1]^2; point k = (xi[k % n], eta[k // n])."""
    g = gauss_1d(n)
    xi, eta = np.meshgrid(g.points, g.points)
    w = np.outer(g.weights, g.weights)
    return Quadrature(np.column_stack([xi.ravel(), eta.ravel()]), w.ravel())


QUAD_2x2 = gauss_quad(2)
LINE_2 = gauss_1d(2)
LINE_3 = gauss_1d(3)


@dataclass(frozen=True)
class RectMesh:
    x_range: tuple[float, float]
    y_range: tuple[float, float]
    nx: int
    ny: int
    nodes: np.ndarray = field(repr=False)
    cells: np.ndarray = field(repr=False)

    @property
    def hx(self) -> float:
        return (self.x_range[1] - self.x_range[0]) / self.nx

    @property
    def hy(self) -> float:
        return (self.y_range[1] - self.y_range[0]) / self.ny

    @property
    def n_nodes(self) -> int:
        return (self.nx + 1) * (self.ny + 1)

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    @property
    def area(self) -> float:
        return (self.x_range[1] - self.x_range[0]) * (self.y_range[1] - self.y_range[0])

    def node_index(self, i, j):
        return np.asarray(j) * (self.nx + 1) + np.asarray(i)

    @property
    def x_coords(self) -> np.ndarray:
        return np.linspace(self.x_range[0], self.x_range[1], self.nx + 1)

    @property
    def y_coords(self) -> np.ndarray:
        return np.linspace(self.y_range[0], self.y_range[1], self.ny + 1)

    def cell_origins(self) -> np.ndarray:
        """Lower-left corner of each cell, shape (n_cells, 2)."""
        return self.nodes[self.cells[:, 0]]

    def quadrature_points(self, quad: Quadrature = QUAD_2x2) -> np.ndarray:
        """Physical quadrature points, shape (n_cells, n_q, 2)."""
        origin = self.cell_origins()
        ref = 0.5 * (quad.points + 1.0) * np.array([self.hx, self.hy])
        return origin[:, None, :] + ref[None, :, :]

    def quadrature_weights(self, quad: Quadrature = QUAD_2x2) -> np.ndarray:
        return quad.weights * (0.25 * self.hx * self.hy)

    def lumped_weights(self) -> np.ndarray:
        """Row sums of the Q1 mass matrix (exact integral of the interpolant)."""
        wx = np.full(self.nx + 1, self.hx)
        wx[[0, -1]] *= 0.5
        wy = np.full(self.ny + 1, self.hy)
        wy[[0, -1]] *= 0.5
        return np.outer(wy, wx).ravel()

    def boundary_nodes(self, side: str) -> np.ndarray:
        i = np.arange(self.nx + 1)
        j = np.arange(self.ny + 1)
        if side == "left":
            return self.node_index(0, j)
        if side == "right":
            return self.node_index(self.nx, j)
        if side == "bottom":
            return self.node_index(i, 0)
        if side == "top":
            return self.node_index(i, self.ny)
        raise InvalidArgumentError(f"unknown side {side!r}")

    def locate(self, x, y):
        """Cell indices (ci, cj) and local coordinates in [0, 1]^2."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        sx = (x - self.x_range[0]) / self.hx
        sy = (y - self.y_range[0]) / self.hy
        ci = np.clip(np.floor(sx).astype(int), 0, self.nx - 1)
        cj = np.clip(np.floor(sy).astype(int), 0, self.ny - 1)
        return ci, cj, sx - ci, sy - cj


def build_rect_mesh(x_range, y_range, nx: int, ny: int) -> RectMesh:
    x_lo, x_hi = map(float, x_range)
    y_lo, y_hi = map(float, y_range)
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise InvalidArgumentError(f"cell counts must be positive integers, got {nx}, {ny}")
    if not (x_hi > x_lo and y_hi > y_lo):
        raise InvalidArgumentError(f"degenerate ranges {x_range}, {y_range}")
    nx, ny = int(nx), int(ny)
    xs = np.linspace(x_lo, x_hi, nx + 1)
    ys = np.linspace(y_lo, y_hi, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    ci, cj = np.meshgrid(np.arange(nx), np.arange(ny))
    ci, cj = ci.ravel(), cj.ravel()
    n0 = cj * (nx + 1) + ci
    cells = np.column_stack([n0, n0 + 1, n0 + nx + 2, n0 + nx + 1])
    return RectMesh((x_lo, x_hi), (y_lo, y_hi), nx, ny, nodes, cells)


@dataclass(frozen=True)
class IntervalMesh:
    length: float
    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise InvalidArgumentError(f"cell count must be a positive integer, got {self.n}")
        if not self.length > 0:
            raise InvalidArgumentError(f"length must be positive, got {self.length}")

    @property
    def h(self) -> float:
        return self.length / self.n

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.length, self.n + 1)


def build_interval_mesh(length: float, n: int) -> IntervalMesh:
    return IntervalMesh(float(length), int(n))


@dataclass(frozen=True)
class PeriodicDofMap:
    """Identifies the right node column with the left one.

    ``full_to_reduced[k]`` is the reduced index of full node ``k``;
    ``reduced_to_full[r]`` is the master (left/interior) node of reduced index ``r``.
    """

    full_to_reduced: np.ndarray
    reduced_to_full: np.ndarray
    slaves: np.ndarray
    masters: np.ndarray

    @property
    def n_reduced(self) -> int:
        return len(self.reduced_to_full)

    def expand(self, reduced: np.ndarray, components: int = 1) -> np.ndarray:
        reduced = np.asarray(reduced)
        if components == 1:
            return reduced[self.full_to_reduced]
        return reduced.reshape(-1, components)[self.full_to_reduced].ravel()

    def reduce(self, full: np.ndarray, components: int = 1) -> np.ndarray:
        full = np.asarray(full)
        if components == 1:
            return full[self.reduced_to_full]
        return full.reshape(-1, components)[self.reduced_to_full].ravel()


def periodic_map(mesh: RectMesh) -> PeriodicDofMap:
    nx, ny = mesh.nx, mesh.ny
    i = np.tile(np.arange(nx + 1), ny + 1)
    j = np.repeat(np.arange(ny + 1), nx + 1)
    full_to_reduced = j * nx + (i % nx)
    ri = np.tile(np.arange(nx), ny + 1)
    rj = np.repeat(np.arange(ny + 1), nx)
    reduced_to_full = rj * (nx + 1) + ri
    slaves = mesh.boundary_nodes("right")
    masters = mesh.boundary_nodes("left")
    return PeriodicDofMap(full_to_reduced, reduced_to_full, slaves, masters)
