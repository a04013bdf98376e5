"""Argyris C1 quintic element on triangular meshes.

Each cell carries 21 local degrees of freedom: value, gradient and Hessian
(``xx``, ``xy``, ``yy``) at the three vertices, and the normal derivative at
the midpoint of each edge.  The edge functional uses the mesh's global edge
normal, so the local and global DOFs coincide without sign flips.

The local basis is built directly on each physical cell by inverting the
nodal-evaluation matrix of the monomials ``xi**a * eta**b`` (``a + b <= 5``),
where ``(xi, eta) = (x - centroid) / diameter``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mesh import Mesh
from .quadrature import QuadratureRule

N_LOCAL = 21
#: derivative order of each local functional (vertex blocks then edges)
FUNCTIONAL_ORDERS = np.array([0, 1, 1, 2, 2, 2] * 3 + [1, 1, 1])
_COND_LIMIT = 1e10

EXPONENTS = np.array([(p - b, b) for p in range(6) for b in range(p + 1)])

# derivative labels, in the order used for every (6, ...) derivative stack
VAL, DX, DY, DXX, DXY, DYY = range(6)


def monomial_derivatives(xi, eta) -> np.ndarray:
    """Scaled monomials and their derivatives through order two.

    Returns an array of shape ``(6,) + xi.shape + (21,)``.
    """
    xi = np.asarray(xi, dtype=float)[..., None]
    eta = np.asarray(eta, dtype=float)[..., None]
    a = EXPONENTS[:, 0]
    b = EXPONENTS[:, 1]

    def pw(base, k):
        return np.where(k >= 0, base ** np.maximum(k, 0), 0.0)

    xa = [pw(xi, a - s) for s in range(3)]
    yb = [pw(eta, b - s) for s in range(3)]
    return np.stack([
        xa[0] * yb[0],
        a * xa[1] * yb[0],
        b * xa[0] * yb[1],
        a * (a - 1) * xa[2] * yb[0],
        a * b * xa[1] * yb[1],
        b * (b - 1) * xa[0] * yb[2],
    ])


@dataclass
class CoefficientVector:
    """Global coefficients of a discrete streamfunction at time ``t``."""

    values: np.ndarray
    t: float = 0.0

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    def __len__(self):
        return len(self.values)


@dataclass(eq=False)
class ArgyrisSpace:
    mesh: Mesh
    cell_dofs: np.ndarray          # (nc, 21) global DOF indices
    coeffs: np.ndarray             # (nc, 21, 21): monomial m -> basis i
    centroids: np.ndarray          # (nc, 2)
    diameters: np.ndarray          # (nc,)
    areas: np.ndarray              # (nc,)
    constrained: np.ndarray        # (n_dofs,) bool
    nodal_matrices: np.ndarray = field(repr=False)  # scaled (nc, 21, 21)
    _tables: dict = field(default_factory=dict, repr=False)

    @property
    def n_dofs(self) -> int:
        return len(self.constrained)

    @property
    def free_dofs(self) -> np.ndarray:
        return np.flatnonzero(~self.constrained)

    @property
    def n_free(self) -> int:
        return int((~self.constrained).sum())

    def apply_constraints(self, v) -> np.ndarray:
        v = np.array(v, dtype=float)
        v[self.constrained] = 0.0
        return v

    def expand(self, free_values) -> np.ndarray:
        """Embed a free-DOF vector into a full coefficient vector."""
        out = np.zeros(self.n_dofs)
        out[~self.constrained] = free_values
        return out

    def basis_tables(self, rule: QuadratureRule) -> dict:
        """Basis derivatives and weights at the quadrature points of every cell.

        ``phi`` has shape (6, nc, nq, 21) holding value, x, y, xx, xy, yy
        derivatives in physical coordinates; ``weights`` has shape (nc, nq)
        and already includes the cell area.
        """
        key = (rule.degree, len(rule))
        if key not in self._tables:
            p = self.mesh.vertices[self.mesh.cells]              # (nc, 3, 2)
            xq = np.einsum("qk,ekd->eqd", rule.points, p)        # (nc, nq, 2)
            d = self.diameters[:, None]
            s = (xq - self.centroids[:, None, :]) / d[..., None]
            P = monomial_derivatives(s[..., 0], s[..., 1])       # (6, nc, nq, 21)
            phi = P @ self.coeffs[None]                          # (6, nc, nq, 21)
            phi[1:3] /= d[None, :, :, None]
            phi[3:6] /= d[None, :, :, None] ** 2
            w = self.areas[:, None] * rule.weights[None, :]
            self._tables[key] = {"phi": phi, "weights": w, "points": xq}
        return self._tables[key]

    def physical_basis(self, cells, pts) -> np.ndarray:
        """Basis derivatives (6, n, 21) at points ``pts`` (n, 2) inside ``cells``."""
        d = self.diameters[cells][:, None]
        s = (pts - self.centroids[cells]) / d
        P = monomial_derivatives(s[:, 0], s[:, 1])                # (6, n, 21)
        out = np.einsum("knm,nmi->kni", P, self.coeffs[cells])
        out[1:3] /= d[None]
        out[3:6] /= d[None] ** 2
        return out


def build_space(mesh: Mesh) -> ArgyrisSpace:
    verts = mesh.vertices
    cells = mesh.cells
    nc = len(cells)
    nv = len(verts)
    p = verts[cells]
    centroids = p.mean(axis=1)
    diam = mesh.diameters()
    areas = mesh.signed_areas()

    s = (p - centroids[:, None, :]) / diam[:, None, None]          # (nc, 3, 2)
    M = np.empty((nc, N_LOCAL, N_LOCAL))
    Pv = monomial_derivatives(s[..., 0], s[..., 1])                # (6, nc, 3, 21)
    for k in range(3):
        M[:, 6 * k:6 * k + 6, :] = np.moveaxis(Pv[:, :, k, :], 0, 1)
    mid = 0.5 * (s[:, [1, 2, 0], :] + s[:, [2, 0, 1], :])           # (nc, 3, 2)
    Pm = monomial_derivatives(mid[..., 0], mid[..., 1])
    normals = mesh.edge_normals[mesh.cell_edges]                   # (nc, 3, 2)
    M[:, 18:21, :] = normals[..., 0:1] * Pm[DX] + normals[..., 1:2] * Pm[DY]

    cond = np.linalg.cond(M)
    bad = np.flatnonzero(~np.isfinite(cond) | (cond > _COND_LIMIT) | (areas <= 0))
    if len(bad):
        raise ValueError(
            f"singular local Argyris system on cell {int(bad[0])} "
            f"(vertices {cells[bad[0]].tolist()})"
        )
    Cs = np.linalg.solve(M, np.broadcast_to(np.eye(N_LOCAL), M.shape))
    coeffs = Cs * diam[:, None, None] ** FUNCTIONAL_ORDERS[None, None, :]

    cell_dofs = np.empty((nc, N_LOCAL), dtype=np.int64)
    for k in range(3):
        cell_dofs[:, 6 * k:6 * k + 6] = 6 * cells[:, k:k + 1] + np.arange(6)
    cell_dofs[:, 18:21] = 6 * nv + mesh.cell_edges

    constrained = np.zeros(6 * nv + mesh.n_edges, dtype=bool)
    tol = 1e-12 * max(mesh.width, mesh.height)
    x = verts[:, 0]
    y = verts[:, 1]
    vertical = (np.abs(x) < tol) | (np.abs(x - mesh.width) < tol)
    horizontal = (np.abs(y) < tol) | (np.abs(y - mesh.height) < tol)
    # psi = 0 and dpsi/dn = 0 fix value, gradient, and the tt / tn Hessian parts
    for side, tt in ((vertical, DYY), (horizontal, DXX)):
        idx = np.flatnonzero(side)
        for comp in (VAL, DX, DY, DXY, tt):
            constrained[6 * idx + comp] = True
    constrained[6 * nv + np.flatnonzero(mesh.boundary_edges)] = True

    return ArgyrisSpace(
        mesh=mesh,
        cell_dofs=cell_dofs,
        coeffs=coeffs,
        centroids=centroids,
        diameters=diam,
        areas=areas,
        constrained=constrained,
        nodal_matrices=M,
    )


def interpolate(space: ArgyrisSpace, field, t: float = 0.0) -> CoefficientVector:
    """Nodal interpolant of ``field``; boundary constraints are not applied.

    ``field(x, y)`` must return an array of shape (6, n) with the value,
    gradient and Hessian (xx, xy, yy) at the n points.
    """
    mesh = space.mesh
    nv = mesh.n_vertices
    out = np.empty(space.n_dofs)
    fv = np.asarray(field(mesh.vertices[:, 0], mesh.vertices[:, 1]), dtype=float)
    out[:6 * nv] = fv.T.ravel()
    mid = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
    fm = np.asarray(field(mid[:, 0], mid[:, 1]), dtype=float)
    out[6 * nv:] = mesh.edge_normals[:, 0] * fm[DX] + mesh.edge_normals[:, 1] * fm[DY]
    return CoefficientVector(out, t)


def locate_points(mesh: Mesh, pts) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    tol = 1e-12 * max(mesh.width, mesh.height)
    outside = ((pts[:, 0] < -tol) | (pts[:, 0] > mesh.width + tol)
               | (pts[:, 1] < -tol) | (pts[:, 1] > mesh.height + tol))
    if outside.any():
        x, y = pts[np.argmax(outside)]
        raise ValueError(
            f"point ({x}, {y}) lies outside [0, {mesh.width}] x [0, {mesh.height}]"
        )
    h = mesh.h
    i = np.clip(np.floor(pts[:, 0] / h).astype(np.int64), 0, mesh.nx - 1)
    j = np.clip(np.floor(pts[:, 1] / h).astype(np.int64), 0, mesh.ny - 1)
    upper = (pts[:, 1] - j * h) > (pts[:, 0] - i * h)
    return 2 * (j * mesh.nx + i) + upper


def evaluate_points(space: ArgyrisSpace, coeffs, pts, cells=None) -> np.ndarray:
    """Value and derivatives (6, n) of a discrete field at points ``pts`` (n, 2)."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    if cells is None:
        cells = locate_points(space.mesh, pts)
    c = np.asarray(coeffs, dtype=float)[space.cell_dofs[cells]]    # (n, 21)
    phi = space.physical_basis(cells, pts)                        # (6, n, 21)
    return np.einsum("kni,ni->kn", phi, c)


def evaluate(space: ArgyrisSpace, coeffs, point):
    """Value, gradient (2,) and Hessian (2, 2) of the discrete field at ``point``."""
    d = evaluate_points(space, coeffs, [point])[:, 0]
    grad = np.array([d[DX], d[DY]])
    hess = np.array([[d[DXX], d[DXY]], [d[DXY], d[DYY]]])
    return d[VAL], grad, hess


def recover_velocity(space: ArgyrisSpace, coeffs, point) -> np.ndarray:
    """Velocity ``(psi_y, -psi_x)`` of the solved streamfunction."""
    _, grad, _ = evaluate(space, coeffs, point)
    return np.array([grad[1], -grad[0]])
