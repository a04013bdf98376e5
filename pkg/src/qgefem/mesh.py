"""Structured triangulations of rectangular basins.

Every square cell of an ``nx`` by ``ny`` grid is split along its lower-left to
upper-right diagonal into two counter-clockwise triangles.  Edges are stored
with ascending vertex indices, which fixes a global orientation used for the
normal-derivative degrees of freedom of the Argyris element.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_BOUNDARY_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable triangulation of ``[0, width] x [0, height]``.

    Attributes
    ----------
    vertices : (nv, 2) float array
    edges : (ne, 2) int array, each row sorted ascending
    cells : (nc, 3) int array, counter-clockwise
    cell_edges : (nc, 3) int array; local edge ``k`` is opposite local vertex ``k``
    cell_edge_signs : (nc, 3) int array; +1 if the counter-clockwise traversal of
        the local edge runs from the lower to the higher vertex index
    """

    width: float
    height: float
    nx: int
    ny: int
    vertices: np.ndarray
    edges: np.ndarray
    cells: np.ndarray
    cell_edges: np.ndarray
    cell_edge_signs: np.ndarray
    boundary_vertices: np.ndarray
    boundary_edges: np.ndarray
    edge_normals: np.ndarray = field(repr=False)

    @property
    def h(self) -> float:
        """Grid spacing ``width / nx``."""
        return self.width / self.nx

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.cells]
        a = p[:, 1] - p[:, 0]
        b = p[:, 2] - p[:, 0]
        return 0.5 * (a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])

    def diameters(self) -> np.ndarray:
        p = self.vertices[self.cells]
        lengths = np.linalg.norm(p[:, [1, 2, 0]] - p, axis=2)
        return lengths.max(axis=1)

    def locate(self, x: float, y: float) -> int:
        """Index of a cell containing ``(x, y)``; raises ``ValueError`` outside."""
        tol = _BOUNDARY_TOL * max(self.width, self.height)
        if not (-tol <= x <= self.width + tol and -tol <= y <= self.height + tol):
            raise ValueError(
                f"point ({x}, {y}) lies outside [0, {self.width}] x [0, {self.height}]"
            )
        h = self.h
        i = min(max(int(np.floor(x / h)), 0), self.nx - 1)
        j = min(max(int(np.floor(y / h)), 0), self.ny - 1)
        lower = (y - j * h) <= (x - i * h)
        return 2 * (j * self.nx + i) + (0 if lower else 1)

    def dump(self, path) -> None:
        """Write the plain-text mesh dump (``v x y`` / ``c i j k`` / ``e i j b``)."""
        with open(path, "w") as fh:
            for x, y in self.vertices:
                fh.write(f"v {float(x)!r} {float(y)!r}\n")
            for i, j, k in self.cells:
                fh.write(f"c {i} {j} {k}\n")
            for (i, j), b in zip(self.edges, self.boundary_edges):
                fh.write(f"e {i} {j} {int(b)}\n")


def generate_rectangle_mesh(width: float, height: float, nx: int, ny: int) -> Mesh:
    if nx < 1 or ny < 1:
        raise ValueError(f"nx and ny must be at least 1, got nx={nx}, ny={ny}")
    hx = width / nx
    hy = height / ny
    if not np.isclose(hx, hy, rtol=1e-12, atol=0.0):
        raise ValueError(
            f"non-uniform spacing: width/nx = {hx!r} differs from height/ny = {hy!r}"
        )

    xs = np.linspace(0.0, width, nx + 1)
    ys = np.linspace(0.0, height, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    I, J = np.meshgrid(np.arange(nx), np.arange(ny))
    I = I.ravel()
    J = J.ravel()
    a = J * (nx + 1) + I
    b = a + 1
    c = a + nx + 2
    d = a + nx + 1
    cells = np.empty((2 * nx * ny, 3), dtype=np.int64)
    cells[0::2] = np.column_stack([a, b, c])
    cells[1::2] = np.column_stack([a, c, d])

    local = cells[:, [[1, 2], [2, 0], [0, 1]]]  # (nc, 3, 2), edge k opposite vertex k
    lo = local.min(axis=2)
    hi = local.max(axis=2)
    n = len(vertices)
    keys = (lo * n + hi).ravel()
    unique_keys, inverse = np.unique(keys, return_inverse=True)
    edges = np.column_stack([unique_keys // n, unique_keys % n])
    cell_edges = inverse.reshape(-1, 3)
    cell_edge_signs = np.where(local[:, :, 0] < local[:, :, 1], 1, -1)

    tol = _BOUNDARY_TOL * max(width, height)
    on_bdry = (
        (np.abs(vertices[:, 0]) < tol)
        | (np.abs(vertices[:, 0] - width) < tol)
        | (np.abs(vertices[:, 1]) < tol)
        | (np.abs(vertices[:, 1] - height) < tol)
    )
    counts = np.bincount(cell_edges.ravel(), minlength=len(edges))
    boundary_edges = counts == 1

    tangent = vertices[edges[:, 1]] - vertices[edges[:, 0]]
    tangent /= np.linalg.norm(tangent, axis=1)[:, None]
    normals = np.column_stack([-tangent[:, 1], tangent[:, 0]])

    for arr in (vertices, edges, cells, cell_edges, cell_edge_signs, on_bdry,
                boundary_edges, normals):
        arr.setflags(write=False)
    return Mesh(
        width=float(width),
        height=float(height),
        nx=int(nx),
        ny=int(ny),
        vertices=vertices,
        edges=edges,
        cells=cells,
        cell_edges=cell_edges,
        cell_edge_signs=cell_edge_signs,
        boundary_vertices=on_bdry,
        boundary_edges=boundary_edges,
        edge_normals=normals,
    )


def edge_normal(mesh: Mesh, edge: int) -> np.ndarray:
    """Unit normal of ``edge``: the canonical tangent rotated by +90 degrees."""
    return mesh.edge_normals[edge].copy()
