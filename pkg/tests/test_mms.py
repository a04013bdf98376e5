import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qgefem import mms
from qgefem.argyris import interpolate
from qgefem.mms import (ConvergenceRecord, ManufacturedSolution, convergence_study, error_norms,
                        fill_orders, linear_time, manufactured_forcing, observed_order,
                        records_to_csv, run_level, uniform_steps)
from qgefem.timestepping import SolverConfig

from conftest import unit_square


def fd_weights(deriv, half=6):
    """Central weights on offsets -half..half via Fornberg's recurrence.

    With ``half=6`` every derivative up to the fourth is at least 8th-order accurate.
    """
    z = np.arange(-half, half + 1, dtype=float)
    n = len(z)
    c = np.zeros((n, deriv + 1))
    c[0, 0] = 1.0
    c1, c4 = 1.0, z[0]
    for i in range(1, n):
        mn = min(i, deriv)
        c2, c5, c4 = 1.0, c4, z[i]
        for j in range(i):
            c3 = z[i] - z[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, deriv]


def stencil(deriv):
    """Minimal 8th-order central stencil for ``deriv``, padded to offsets -6..6."""
    half = 4 if deriv <= 2 else 5
    return np.pad(fd_weights(deriv, half), 6 - half)


def fd_forcing(sol, t, x, y, Re, Ro, h=1e-2):
    """Strong-form forcing from finite differences of sampled values of psi."""
    offs = np.arange(-6, 7) * h
    W = [stencil(d) / h ** d for d in range(5)]

    def psi(tt, xx, yy):
        return sol.partials(tt, xx, yy)[0, 0]

    grid = psi(t, x + offs[:, None], y + offs[None, :])     # grid[i, j] = psi(x_i, y_j)

    def d(a, b, g=grid):
        return W[a] @ g @ W[b]

    lap = d(2, 0) + d(0, 2)
    bilap = d(4, 0) + 2 * d(2, 2) + d(0, 4)
    lap_x = d(3, 0) + d(1, 2)
    lap_y = d(2, 1) + d(0, 3)
    jac = d(1, 0) * lap_y - d(0, 1) * lap_x
    times = [psi(t + s, x + offs[:, None], y + offs[None, :]) for s in offs]
    grid_t = np.tensordot(W[1], np.array(times), axes=1)
    lap_t = d(2, 0, grid_t) + d(0, 2, grid_t)
    return Ro * (-lap_t + bilap / Re + jac - d(1, 0) / Ro)


def test_forcing_at_time_zero():
    Ro = 2.0
    F = manufactured_forcing(mms.test1(), 3.0, Ro)
    x, y = np.random.default_rng(0).random((2, 25))
    lap = 2 * math.pi ** 2 * (np.cos(2 * math.pi * x) * np.sin(math.pi * y) ** 2
                              + np.sin(math.pi * x) ** 2 * np.cos(2 * math.pi * y))
    assert np.allclose(F(0.0, x, y), -Ro * lap, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("Re, Ro", [(1.0, 1.0), (50.0, 0.2)])
def test_forcing_against_finite_differences(Re, Ro):
    sol = mms.test1()
    F = manufactured_forcing(sol, Re, Ro)
    got = F(math.pi / 4, np.array(0.5), np.array(0.5))
    assert got == pytest.approx(fd_forcing(sol, math.pi / 4, 0.5, 0.5, Re, Ro), abs=1e-6)
    got = F(math.pi / 4, np.array(0.3), np.array(0.6))
    assert got == pytest.approx(fd_forcing(sol, math.pi / 4, 0.3, 0.6, Re, Ro), abs=1e-6)


def test_boundary_layer_forcing_against_finite_differences():
    sol = mms.test2()
    F = manufactured_forcing(sol, 1.0, 1.0)
    # away from the layer the stencil spacing resolves exp(-20 x) comfortably
    got = F(0.3, np.array(0.9), np.array(0.4))
    assert got == pytest.approx(fd_forcing(sol, 0.3, 0.9, 0.4, 1.0, 1.0, h=5e-3),
                                rel=1e-6, abs=1e-6)


@pytest.mark.parametrize("profile", [mms.sine_profile, mms.boundary_layer_profile])
def test_profile_derivatives_against_finite_differences(profile):
    x = np.array([0.17, 0.5, 1.3])
    h = 1e-2
    offs = np.arange(-6, 7) * h
    samples = profile(x[None, :] + offs[:, None])[0]
    values = profile(x)
    for order in range(1, 5):
        fd = stencil(order) @ samples / h ** order
        assert np.allclose(values[order], fd, rtol=1e-6, atol=1e-5)


@pytest.mark.parametrize("sol", [mms.test1(), mms.test2()], ids=["test1", "test2"])
def test_clamped_on_boundary(sol):
    s = np.linspace(0.0, 1.0, 50)
    W, H = sol.width, sol.height
    sides = [
        (W * s, 0 * s, (0, -1)), (W * s, H + 0 * s, (0, 1)),
        (0 * s, H * s, (-1, 0)), (W + 0 * s, H * s, (1, 0)),
    ]
    for t in (0.1, 0.37, sol.final_time):
        for x, y, (nx, ny) in sides:
            v = sol.values(t, x, y)
            assert np.abs(v[0]).max() < 1e-12
            assert np.abs(nx * v[1] + ny * v[2]).max() < 1e-12
    v = sol.values(0.0, *np.random.default_rng(1).random((2, 50)) * [[W], [H]])
    assert not np.any(v)


def test_l2_norm_of_exact_solution():
    space, forms = unit_square(8)
    e_l2, _, _ = error_norms(space, forms, np.zeros(space.n_dofs), mms.test1(), math.pi / 2)
    # int_0^1 sin^4(pi x) dx = 3/8, so ||psi||^2 = (3/8)^2
    assert e_l2 == pytest.approx(0.375, abs=1e-9)


def poly_profile(coef):
    p = np.polynomial.Polynomial(coef)

    def profile(x):
        return np.stack([p.deriv(m)(np.asarray(x, float)) if m else p(np.asarray(x, float))
                         for m in range(5)])
    return profile


def test_quintic_interpolation_is_exact():
    sol = ManufacturedSolution("quintic", 1.0, 1.0, 1.0, poly_profile([0.3, -1, 0.5, 2]),
                               poly_profile([1, 0.7, -2]), linear_time)
    space, forms = unit_square(4)
    c = interpolate(space, sol.field(0.8))
    assert max(error_norms(space, forms, c, sol, 0.8)) < 1e-9


def test_discrete_solution_reproduced_by_solver():
    cfg = SolverConfig(k=1 / 16, T=1.0)
    records = convergence_study("custom", [1 / 2, 1 / 4, 1 / 8], 1 / 16, cfg)
    for r in records:
        assert max(r.e_l2, r.e_h1, r.e_h2) < 1e-8
        assert r.l2_order is None and r.h2_order is None
    text = records_to_csv(records)
    assert text.splitlines()[2].split(",")[4] == ""


@settings(max_examples=50, deadline=None)
@given(errors=st.lists(st.floats(1e-8, 1e2), min_size=2, max_size=5),
       scale=st.floats(1e-3, 1e3))
def test_orders_are_scale_invariant(errors, scale):
    recs = [ConvergenceRecord(k=0.1, h=2.0 ** -i, dofs=i, e_l2=e, e_h1=e, e_h2=e)
            for i, e in enumerate(errors)]
    scaled = [ConvergenceRecord(k=0.1, h=r.h, dofs=r.dofs, e_l2=r.e_l2 * scale,
                                e_h1=r.e_h1 * scale, e_h2=r.e_h2 * scale) for r in recs]
    for a, b in zip(fill_orders(recs)[1:], fill_orders(scaled)[1:]):
        assert a.l2_order == pytest.approx(b.l2_order, abs=1e-9)


def test_observed_order_edge_cases():
    assert observed_order(4.0, 1.0) == 2.0
    assert observed_order(float("nan"), 1.0) is None
    assert observed_order(1.0, 0.0) is None


def test_csv_layout():
    recs = fill_orders([
        ConvergenceRecord(k=0.125, h=0.5, dofs=18, e_l2=1.0, e_h1=2.0, e_h2=4.0),
        ConvergenceRecord(k=0.125, h=0.25, dofs=106, e_l2=0.25, e_h1=1.0, e_h2=1.0),
    ])
    buf = io.StringIO()
    text = records_to_csv(recs, buf)
    assert buf.getvalue() == text
    assert text == (
        "k,h,dofs,e_l2,l2_order,e_h1,h1_order,e_h2,h2_order\n"
        "0.125,0.5,18,1.0,,2.0,,4.0,\n"
        "0.125,0.25,106,0.25,2.0,1.0,1.0,1.0,2.0\n"
    )


def test_study_requires_halving():
    with pytest.raises(ValueError, match="halve"):
        convergence_study("test1", [0.5, 0.2], 0.1)


def test_unknown_test_id():
    with pytest.raises(ValueError, match="unknown"):
        mms.get_solution("test3")


def test_uniform_steps():
    assert uniform_steps(1.0, 0.25) == (4, 0.25)
    n, k = uniform_steps(math.pi / 2, 1 / 8192)
    assert n == 12868 and k <= 1 / 8192 and n * k == pytest.approx(math.pi / 2)


def test_run_level_records_failure():
    cfg = SolverConfig(k=0.25, T=1.0, newton_max_iters=1, newton_tol=1e-300)
    rec, final, diag = run_level("test1", 0.5, 0.25, cfg)
    assert rec.failed and final is None
    assert "Newton" in rec.failure
    assert "nan" in records_to_csv([rec])
