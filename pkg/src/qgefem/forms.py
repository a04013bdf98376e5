"""Assembly of the linear forms and evaluation of the trilinear term.

With ``phi_i`` the global Argyris basis, the assembled matrices are::

    G_ij = (grad phi_j, grad phi_i)      B_ij = (lap phi_j, lap phi_i)
    D_ij = ((phi_j)_x, phi_i)            M_ij = (phi_j, phi_i)

and the trilinear form is ``b(xi; psi, chi) = int lap(xi) (psi_y chi_x - psi_x chi_y)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import kernels
from .argyris import DX, DXX, DXY, DY, DYY, VAL, ArgyrisSpace
from .quadrature import QuadratureRule, triangle_rule

DEFAULT_DEGREE = 12
_CHUNK = 128


def default_rule() -> QuadratureRule:
    return triangle_rule(DEFAULT_DEGREE)


@dataclass(eq=False)
class SparsityPattern:
    """CSR pattern of element couplings with precomputed scatter positions.

    ``cell_map[e, i]`` is the row/column index of local DOF ``i`` (or -1 when
    the DOF is eliminated) and ``pos[e, i, j]`` the slot of the (i, j)
    coupling in the CSR data array (or -1).
    """

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    cell_map: np.ndarray
    pos: np.ndarray

    @classmethod
    def from_cell_map(cls, cell_map: np.ndarray, n: int) -> "SparsityPattern":
        cell_map = np.ascontiguousarray(cell_map, dtype=np.int64)
        rows = np.broadcast_to(cell_map[:, :, None], cell_map.shape + cell_map.shape[1:])
        cols = np.broadcast_to(cell_map[:, None, :], rows.shape)
        live = (rows >= 0) & (cols >= 0)
        keys = rows.astype(np.int64) * n + cols
        unique = np.unique(keys[live])
        counts = np.bincount(unique // n, minlength=n)
        indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        indices = (unique % n).astype(np.int64)
        pos = np.where(live, np.searchsorted(unique, np.where(live, keys, 0)), -1)
        return cls(n, indptr, indices, cell_map, np.ascontiguousarray(pos, dtype=np.int64))

    @property
    def nnz(self) -> int:
        return len(self.indices)

    def scatter(self, elem: np.ndarray) -> np.ndarray:
        keep = self.pos >= 0
        return np.bincount(self.pos[keep], weights=elem[keep], minlength=self.nnz)

    def scatter_vector(self, elem: np.ndarray) -> np.ndarray:
        keep = self.cell_map >= 0
        return np.bincount(self.cell_map[keep], weights=elem[keep], minlength=self.n)

    def matrix(self, data: np.ndarray) -> sp.csr_matrix:
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))


@dataclass(eq=False)
class AssembledForms:
    space: ArgyrisSpace
    rule: QuadratureRule
    element: dict                     # name -> (nc, 21, 21) local matrices
    full: SparsityPattern
    reduced: SparsityPattern
    _qsym: np.ndarray | None = field(default=None, repr=False)

    def _global(self, name):
        return self.full.matrix(self.full.scatter(self.element[name]))

    @property
    def G(self):
        return self._global("G")

    @property
    def B(self):
        return self._global("B")

    @property
    def D(self):
        return self._global("D")

    @property
    def M(self):
        return self._global("M")

    @property
    def H2(self):
        """Full second-order seminorm matrix: xx^2 + 2 xy^2 + yy^2."""
        return self._global("H2")

    def restricted(self, name) -> sp.csr_matrix:
        return self.reduced.matrix(self.reduced.scatter(self.element[name]))

    @property
    def qsym(self) -> np.ndarray:
        """Symmetrised trilinear element tensor, computed on first use."""
        if self._qsym is None:
            self._qsym = trilinear_tensor(self.space, self.rule)
        return self._qsym

    def nonlinear(self, psi, pattern: SparsityPattern | None = None):
        """``N(psi)`` and CSR Jacobian data on ``pattern`` (default: full)."""
        pattern = pattern or self.full
        data = np.zeros(pattern.nnz)
        res = np.zeros(pattern.n)
        kernels.assemble_quadratic(
            self.qsym, pattern.cell_map, pattern.pos,
            np.ascontiguousarray(psi, dtype=float), data, res,
        )
        return res, data


def assemble_linear_forms(space: ArgyrisSpace, rule: QuadratureRule | None = None
                          ) -> AssembledForms:
    rule = rule or default_rule()
    if rule.degree < 10:
        raise ValueError(f"linear forms need a rule of degree >= 10, got {rule.degree}")
    tab = space.basis_tables(rule)
    phi, w = tab["phi"], tab["weights"]
    lap = phi[DXX] + phi[DYY]

    def mass(a, b):
        return np.einsum("eq,eqi,eqj->eij", w, a, b, optimize=True)

    element = {
        "G": mass(phi[DX], phi[DX]) + mass(phi[DY], phi[DY]),
        "B": mass(lap, lap),
        "D": mass(phi[VAL], phi[DX]),
        "M": mass(phi[VAL], phi[VAL]),
        "H2": mass(phi[DXX], phi[DXX]) + 2 * mass(phi[DXY], phi[DXY])
        + mass(phi[DYY], phi[DYY]),
    }
    free_index = np.full(space.n_dofs, -1, dtype=np.int64)
    free_index[space.free_dofs] = np.arange(space.n_free)
    full = SparsityPattern.from_cell_map(space.cell_dofs, space.n_dofs)
    reduced = SparsityPattern.from_cell_map(free_index[space.cell_dofs], space.n_free)
    return AssembledForms(space, rule, element, full, reduced)


def trilinear_tensor(space: ArgyrisSpace, rule: QuadratureRule) -> np.ndarray:
    """``qsym[e, i, j, m] = Q[e, i, j, m] + Q[e, i, m, j]`` with

    ``Q[e, i, a, c] = int_e lap(phi_a) (phi_c,y phi_i,x - phi_c,x phi_i,y)``.
    """
    if rule.degree < 11:
        raise ValueError(f"trilinear term needs a rule of degree >= 11, got {rule.degree}")
    tab = space.basis_tables(rule)
    phi, w = tab["phi"], tab["weights"]
    nc, nq, nl = phi.shape[1:]
    out = np.empty((nc, nl, nl, nl))
    for lo in range(0, nc, _CHUNK):
        sl = slice(lo, min(lo + _CHUNK, nc))
        wl = w[sl, :, None] * (phi[DXX, sl] + phi[DYY, sl])           # (c, q, a)
        px, py = phi[DX, sl], phi[DY, sl]
        k = px[:, :, :, None] * py[:, :, None, :] - py[:, :, :, None] * px[:, :, None, :]
        q = np.matmul(wl.transpose(0, 2, 1), k.reshape(len(wl), nq, nl * nl))
        q = q.reshape(-1, nl, nl, nl).transpose(0, 2, 1, 3)          # (c, i, a, c')
        out[sl] = q + q.transpose(0, 1, 3, 2)
    return out


def quadrature_fields(space: ArgyrisSpace, coeffs, rule: QuadratureRule | None = None
                      ) -> np.ndarray:
    """Derivatives (6, nc, nq) of a discrete field at the quadrature points."""
    rule = rule or default_rule()
    phi = space.basis_tables(rule)["phi"]
    c = np.asarray(coeffs, dtype=float)[space.cell_dofs]
    return np.einsum("keqi,ei->keq", phi, c)


def trilinear_b(space: ArgyrisSpace, xi, psi, chi, rule=None) -> float:
    """``b(xi; psi, chi) = int lap(xi) (psi_y chi_x - psi_x chi_y)``."""
    rule = rule or default_rule()
    w = space.basis_tables(rule)["weights"]
    a = quadrature_fields(space, xi, rule)
    p = quadrature_fields(space, psi, rule)
    c = quadrature_fields(space, chi, rule)
    integrand = (a[DXX] + a[DYY]) * (p[DY] * c[DX] - p[DX] * c[DY])
    return float(np.sum(w * integrand))


def trilinear_bstar(space: ArgyrisSpace, xi, psi, phi, rule=None) -> float:
    rule = rule or default_rule()
    w = space.basis_tables(rule)["weights"]
    a = quadrature_fields(space, xi, rule)
    p = quadrature_fields(space, psi, rule)
    f = quadrature_fields(space, phi, rule)
    integrand = ((a[DY] * p[DXY] - a[DX] * p[DYY]) * f[DY]
                 - (a[DX] * p[DXY] - a[DY] * p[DXX]) * f[DX])
    return float(np.sum(w * integrand))


def nonlinear_residual_and_jacobian(space: ArgyrisSpace, forms: AssembledForms, psi):
    """``N_i = b(psi; psi, phi_i)`` and ``J_ij = b(phi_j; psi, phi_i) + b(psi; phi_j, phi_i)``."""
    res, data = forms.nonlinear(np.asarray(psi, dtype=float))
    return res, forms.full.matrix(data)


def assemble_load(space: ArgyrisSpace, f, t: float, rule=None) -> np.ndarray:
    """Load vector ``(f(t, .), phi_i)`` for a pointwise forcing ``f(t, x, y)``."""
    rule = rule or default_rule()
    tab = space.basis_tables(rule)
    xq = tab["points"]
    vals = np.asarray(f(t, xq[..., 0], xq[..., 1]), dtype=float)
    vals = np.broadcast_to(vals, xq.shape[:2])
    elem = np.einsum("eq,eqi->ei", tab["weights"] * vals, tab["phi"][VAL])
    return np.bincount(space.cell_dofs.ravel(), weights=elem.ravel(),
                       minlength=space.n_dofs)
