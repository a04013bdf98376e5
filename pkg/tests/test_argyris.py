import dataclasses
import math

import numpy as np
import pytest

from qgefem.argyris import (DX, DXX, DXY, DY, DYY, EXPONENTS, VAL, build_space, evaluate,
                            evaluate_points, interpolate, recover_velocity)
from qgefem.mesh import generate_rectangle_mesh
from qgefem import mms
from qgefem.timestepping import poincare_constant

from conftest import unit_square


def polynomial(coef):
    """Field callable (6, n) for ``sum coef[m] x^a y^b`` over the quintic monomials."""
    def field(x, y):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        out = np.zeros((6,) + x.shape)
        for c, (a, b) in zip(coef, EXPONENTS):
            def term(da, db):
                if da > a or db > b:
                    return 0.0
                fa = math.perm(a, da)
                fb = math.perm(b, db)
                return c * fa * fb * x ** (a - da) * y ** (b - db)
            out[VAL] += term(0, 0)
            out[DX] += term(1, 0)
            out[DY] += term(0, 1)
            out[DXX] += term(2, 0)
            out[DXY] += term(1, 1)
            out[DYY] += term(0, 2)
        return out
    return field


def test_dof_count_single_square():
    space = build_space(generate_rectangle_mesh(1.0, 1.0, 1, 1))
    assert space.n_dofs == 4 * 6 + 5 == 29
    # every vertex is a corner and every edge except the diagonal is on the boundary
    assert space.n_free == 1


def test_nodal_duality():
    space, _ = unit_square(2)
    mesh = space.mesh
    for e in range(mesh.n_cells):
        verts = mesh.vertices[mesh.cells[e]]
        cells = np.full(3, e)
        at_vertices = space.physical_basis(cells, verts)               # (6, 3, 21)
        values = np.concatenate([at_vertices[:, k, :] for k in range(3)])  # (18, 21)
        mids = 0.5 * (verts[[1, 2, 0]] + verts[[2, 0, 1]])
        at_mids = space.physical_basis(cells, mids)
        normals = mesh.edge_normals[mesh.cell_edges[e]]
        dn = normals[:, :1] * at_mids[DX] + normals[:, 1:] * at_mids[DY]
        table = np.vstack([values, dn])
        assert np.abs(table - np.eye(21)).max() < 1e-9


def test_quintic_reproduction(rng):
    space, _ = unit_square(4)
    coef = rng.standard_normal(21)
    f = polynomial(coef)
    c = interpolate(space, f)
    pts = rng.random((50, 2))
    got = evaluate_points(space, c, pts)
    want = f(pts[:, 0], pts[:, 1])
    assert np.abs(got - want).max() < 1e-9


def test_evaluate_cubic():
    space, _ = unit_square(2)
    c = interpolate(space, lambda x, y: np.stack([x * x * y, 2 * x * y, x * x, 2 * y, 2 * x,
                                                  0 * x]))
    value, grad, hess = evaluate(space, c, (0.3, 0.7))
    assert value == pytest.approx(0.063, abs=1e-10)
    assert np.allclose(grad, [0.42, 0.09], atol=1e-10)
    assert np.allclose(hess, [[1.4, 0.6], [0.6, 0.0]], atol=1e-10)


def test_c1_continuity_across_edges(rng):
    space, _ = unit_square(4)
    mesh = space.mesh
    c = rng.standard_normal(space.n_dofs)
    interior = np.flatnonzero(~mesh.boundary_edges)
    owners = {}
    for cell, ce in enumerate(mesh.cell_edges):
        for e in ce:
            owners.setdefault(int(e), []).append(cell)
    s = np.linspace(0.0, 1.0, 7)
    for e in interior:
        a, b = mesh.vertices[mesh.edges[e]]
        pts = a + s[:, None] * (b - a)
        t = (b - a) / np.linalg.norm(b - a)
        left, right = (evaluate_points(space, c, pts, np.full(len(s), cell))
                       for cell in owners[int(e)])
        scale = 1.0 + np.abs(left).max()
        assert np.abs(left[:3] - right[:3]).max() < 1e-10 * scale
        tt = lambda d: t[0] ** 2 * d[DXX] + 2 * t[0] * t[1] * d[DXY] + t[1] ** 2 * d[DYY]
        assert np.abs(tt(left) - tt(right)).max() < 1e-9 * scale
        # at the shared vertices the whole Hessian is single-valued
        assert np.abs(left[:, [0, -1]] - right[:, [0, -1]]).max() < 1e-9 * scale


def test_interpolation_is_a_projection(rng):
    space, _ = unit_square(4)
    c = rng.standard_normal(space.n_dofs)

    def field(x, y):
        return evaluate_points(space, c, np.column_stack([x, y]))

    assert np.abs(np.asarray(interpolate(space, field)) - c).max() < 1e-9


def test_constrained_set():
    space, _ = unit_square(4)
    mesh = space.mesh
    x, y = mesh.vertices.T
    nv = mesh.n_vertices
    block = space.constrained[:6 * nv].reshape(nv, 6)
    west_mid = np.flatnonzero((x == 0) & (y == 0.5))[0]
    south_mid = np.flatnonzero((y == 0) & (x == 0.5))[0]
    corner = np.flatnonzero((x == 1) & (y == 1))[0]
    centre = np.flatnonzero((x == 0.5) & (y == 0.5))[0]
    assert block[west_mid].tolist() == [True, True, True, False, True, True]
    assert block[south_mid].tolist() == [True, True, True, True, True, False]
    assert block[corner].all()
    assert not block[centre].any()
    assert np.array_equal(space.constrained[6 * nv:], mesh.boundary_edges)


def test_clamped_profile_unchanged_by_constraints():
    space, _ = unit_square(8)
    c = np.asarray(interpolate(space, mms.test1().field(1.0)))
    assert np.abs(c[space.constrained]).max() < 1e-12


def test_zero_field():
    space, _ = unit_square(2)
    c = interpolate(space, lambda x, y: np.zeros((6,) + np.shape(x)))
    assert not np.asarray(c).any()
    value, grad, hess = evaluate(space, c, (0.2, 0.9))
    assert value == 0 and not grad.any() and not hess.any()


def test_degenerate_cell_rejected():
    mesh = generate_rectangle_mesh(1.0, 1.0, 2, 2)
    verts = mesh.vertices.copy()
    verts[4] = verts[0]                    # collapse the centre vertex onto a corner
    bad = dataclasses.replace(mesh, vertices=verts)
    with pytest.raises(ValueError, match="cell"):
        build_space(bad)


def test_velocity_of_linear_field():
    space, _ = unit_square(2)
    ones, zeros = lambda x: np.ones_like(x), lambda x: np.zeros_like(x)
    c = interpolate(space, lambda x, y: np.stack([y, zeros(x), ones(x), zeros(x), zeros(x),
                                                  zeros(x)]))
    assert np.allclose(recover_velocity(space, c, (0.4, 0.3)), [1.0, 0.0], atol=1e-12)


def test_velocity_of_test1_field():
    space, _ = unit_square(16)
    sol = mms.test1()
    c = space.apply_constraints(interpolate(space, sol.field(math.pi / 2)))
    x, y = 0.5, 0.25
    exact = np.array([2 * math.pi * math.sin(math.pi * y) * math.cos(math.pi * y), 0.0])
    exact[0] *= math.sin(math.pi * x) ** 2
    assert np.allclose(recover_velocity(space, c, (x, y)), exact, atol=1e-5)


def test_poincare_ratio_bounded():
    gammas = [poincare_constant(unit_square(n)[1]) for n in (4, 8, 16)]
    # below the Dirichlet-Laplacian bound 1 / (2 pi^2) and settling under refinement
    assert max(gammas) < 1 / (2 * math.pi ** 2)
    assert abs(gammas[2] - gammas[1]) < 0.05 * gammas[2]
