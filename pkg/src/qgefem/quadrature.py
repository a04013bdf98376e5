"""Quadrature on triangles.

Rules are conical (collapsed) Gauss products: Gauss-Jacobi with weight
``(1 - u)`` in the collapsed direction and Gauss-Legendre along the fibres.
``n`` points per direction integrate total degree ``2n - 1`` exactly.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre


@dataclass(frozen=True)
class QuadratureRule:
    """Barycentric points (nq, 3) and weights summing to one."""

    points: np.ndarray
    weights: np.ndarray
    degree: int

    def __len__(self) -> int:
        return len(self.weights)


@lru_cache(maxsize=None)
def triangle_rule(degree: int) -> QuadratureRule:
    if degree < 0:
        raise ValueError(f"degree must be non-negative, got {degree}")
    n = degree // 2 + 1
    # Jacobi roots on [-1, 1] with weight (1-s)^1 (1+s)^0
    s, ws = roots_jacobi(n, 1.0, 0.0)
    t, wt = roots_legendre(n)
    u = 0.5 * (1.0 + s)
    v = 0.5 * (1.0 + t)
    U, V = np.meshgrid(u, v, indexing="ij")
    x = U.ravel()
    y = (V * (1.0 - U)).ravel()
    w = np.outer(ws, wt).ravel()
    w = w / w.sum()
    pts = np.column_stack([1.0 - x - y, x, y])
    pts.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(points=pts, weights=w, degree=2 * n - 1)


def gauss_square_rule(n: int):
    """Tensor Gauss-Legendre rule on the unit square: (points (n*n, 2), weights)."""
    t, w = roots_legendre(n)
    t = 0.5 * (t + 1.0)
    w = 0.5 * w
    X, Y = np.meshgrid(t, t, indexing="ij")
    return np.column_stack([X.ravel(), Y.ravel()]), np.outer(w, w).ravel()
