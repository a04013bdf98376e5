"""Manufactured solutions, error norms and spatial convergence studies."""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .argyris import DX, DXX, DY, DYY, VAL, ArgyrisSpace, build_space, interpolate
from .forms import AssembledForms, assemble_linear_forms, default_rule, quadrature_fields
from .mesh import generate_rectangle_mesh

#: errors below this are treated as round-off and get no observed order
ROUND_OFF = 1e-11

TABLE_COLUMNS = ["k", "h", "dofs", "e_l2", "l2_order", "e_h1", "h1_order", "e_h2", "h2_order"]


def _square_derivatives(g: np.ndarray) -> np.ndarray:
    """Derivatives 0..4 of ``g**2`` from derivatives 0..4 of ``g``."""
    g0, g1, g2, g3, g4 = g
    return np.stack([
        g0 * g0,
        2 * g0 * g1,
        2 * (g1 * g1 + g0 * g2),
        2 * (3 * g1 * g2 + g0 * g3),
        2 * (3 * g2 * g2 + 4 * g1 * g3 + g0 * g4),
    ])


def sine_profile(x) -> np.ndarray:
    """Derivatives 0..4 of ``sin(pi x)**2``."""
    x = np.asarray(x, dtype=float)
    g = np.stack([np.pi ** n * np.sin(np.pi * x + n * np.pi / 2) for n in range(5)])
    return _square_derivatives(g)


def boundary_layer_profile(x) -> np.ndarray:
    """Derivatives 0..4 of ``((1 - x/3) (1 - exp(-20 x)))**2``."""
    x = np.asarray(x, dtype=float)
    e = np.exp(-20.0 * x)
    q = [1.0 - e] + [-((-20.0) ** n) * e for n in range(1, 5)]
    p0 = 1.0 - x / 3.0
    g = np.stack([p0 * q[0]] + [p0 * q[n] - (n / 3.0) * q[n - 1] for n in range(1, 5)])
    return _square_derivatives(g)


def sin_time(t):
    return math.sin(t), math.cos(t)


def linear_time(t):
    return t, 1.0


@dataclass(frozen=True)
class ManufacturedSolution:
    """Separable exact solution ``psi = s(t) X(x) Y(y)``.

    ``x_profile`` / ``y_profile`` return the derivatives 0..4 of the spatial
    factors; ``time_factor`` returns ``(s(t), s'(t))``.
    """

    name: str
    width: float
    height: float
    final_time: float
    x_profile: Callable
    y_profile: Callable
    time_factor: Callable = sin_time

    def partials(self, t, x, y):
        """Dict ``(a, b) -> d^a/dx^a d^b/dy^b psi`` for ``a + b <= 4``, plus ``"s_t"``."""
        s, st = self.time_factor(t)
        X = self.x_profile(x)
        Y = self.y_profile(y)
        out = {(a, b): s * X[a] * Y[b] for a in range(5) for b in range(5 - a)}
        out["time"] = (s, st)
        out["X"], out["Y"] = X, Y
        return out

    def field(self, t) -> Callable:
        """Pointwise ``(x, y) -> (6, n)`` value/gradient/Hessian at time ``t``."""
        def f(x, y):
            p = self.partials(t, x, y)
            return np.stack([p[0, 0], p[1, 0], p[0, 1], p[2, 0], p[1, 1], p[0, 2]])
        return f

    def values(self, t, x, y) -> np.ndarray:
        return self.field(t)(x, y)


def test1() -> ManufacturedSolution:
    return ManufacturedSolution("test1", 1.0, 1.0, math.pi / 2, sine_profile, sine_profile)


def test2() -> ManufacturedSolution:
    return ManufacturedSolution("test2", 3.0, 1.0, 0.5, boundary_layer_profile, sine_profile)


def manufactured_forcing(sol: ManufacturedSolution, Re: float, Ro: float) -> Callable:
    """``F = Ro (-lap psi_t + lap^2 psi / Re + J(psi, lap psi) - psi_x / Ro)``.

    The spatial factors at the most recent point set are cached, since the
    quadrature points do not move between time steps.
    """
    cache = {}

    def spatial_terms(x, y):
        key = (np.shape(x), np.shape(y))
        hit = cache.get(key)
        if hit is not None and np.array_equal(hit[0], x) and np.array_equal(hit[1], y):
            return hit[2]
        X = sol.x_profile(x)
        Y = sol.y_profile(y)
        lap = X[2] * Y[0] + X[0] * Y[2]
        bilap = X[4] * Y[0] + 2 * X[2] * Y[2] + X[0] * Y[4]
        lap_x = X[3] * Y[0] + X[1] * Y[2]
        lap_y = X[2] * Y[1] + X[0] * Y[3]
        jac = X[1] * Y[0] * lap_y - X[0] * Y[1] * lap_x
        terms = (lap, bilap, jac, X[1] * Y[0])
        cache.clear()
        cache[key] = (np.array(x, copy=True), np.array(y, copy=True), terms)
        return terms

    def forcing(t, x, y):
        s, st = sol.time_factor(t)
        lap, bilap, jac, psi_x = spatial_terms(x, y)
        return Ro * (-st * lap + s * bilap / Re + s * s * jac - s * psi_x / Ro)

    return forcing


@dataclass
class DiscreteManufacturedSolution:
    """Exact solution ``psi = t * v_h`` with ``v_h`` a fixed discrete field.

    ``v_h`` is the constrained Argyris interpolant of ``profile`` on whichever
    space it is used with, so it lies in the discrete space and the solver can
    reproduce it up to round-off.  The matching load vector is built from the
    discrete operators rather than a pointwise forcing.
    """

    profile: Callable
    width: float = 1.0
    height: float = 1.0
    final_time: float = 0.5
    name: str = "custom"
    Re: float = 1.0
    Ro: float = 1.0
    _cache: dict = field(default_factory=dict, repr=False)

    def profile_coefficients(self, space: ArgyrisSpace) -> np.ndarray:
        key = id(space)
        if key not in self._cache:
            self._cache[key] = space.apply_constraints(interpolate(space, self.profile))
        return self._cache[key]

    def exact_coefficients(self, space: ArgyrisSpace, t: float) -> np.ndarray:
        return t * self.profile_coefficients(space)

    def load_vector(self, space: ArgyrisSpace, forms: AssembledForms, t: float) -> np.ndarray:
        v = self.profile_coefficients(space)
        n, _ = forms.nonlinear(v)
        lin = forms.G @ v + (t / self.Re) * (forms.B @ v) - (t / self.Ro) * (forms.D @ v)
        return self.Ro * (lin + t * t * n)


def custom_solution(Re: float = 1.0, Ro: float = 1.0) -> DiscreteManufacturedSolution:
    return DiscreteManufacturedSolution(test1().field(math.pi / 2), Re=Re, Ro=Ro)


def get_solution(test_id, Re: float = 1.0, Ro: float = 1.0):
    if not isinstance(test_id, str):
        return test_id
    table = {"test1": test1, "test2": test2}
    if test_id in table:
        return table[test_id]()
    if test_id == "custom":
        return custom_solution(Re, Ro)
    raise ValueError(f"unknown test {test_id!r}; expected test1, test2 or custom")


def error_norms(space: ArgyrisSpace, forms: AssembledForms | None, psi_h, sol, t: float,
                rule=None):
    """``(||e||, ||grad e||, ||lap e||)`` for ``e = psi(t) - psi_h``."""
    rule = rule or (forms.rule if forms is not None else default_rule())
    tab = space.basis_tables(rule)
    w = tab["weights"]
    psi_h = np.asarray(psi_h, dtype=float)
    if hasattr(sol, "exact_coefficients"):
        diff = quadrature_fields(space, sol.exact_coefficients(space, t) - psi_h, rule)
    else:
        xq = tab["points"]
        exact = sol.values(t, xq[..., 0], xq[..., 1])
        diff = exact - quadrature_fields(space, psi_h, rule)
    e_l2 = np.sqrt(np.sum(w * diff[VAL] ** 2))
    e_h1 = np.sqrt(np.sum(w * (diff[DX] ** 2 + diff[DY] ** 2)))
    e_h2 = np.sqrt(np.sum(w * (diff[DXX] + diff[DYY]) ** 2))
    return float(e_l2), float(e_h1), float(e_h2)


@dataclass
class ConvergenceRecord:
    k: float
    h: float
    dofs: int
    e_l2: float = math.nan
    e_h1: float = math.nan
    e_h2: float = math.nan
    l2_order: float | None = None
    h1_order: float | None = None
    h2_order: float | None = None
    failure: str | None = None

    @property
    def failed(self) -> bool:
        return self.failure is not None


def observed_order(coarse: float, fine: float) -> float | None:
    """``log2(coarse / fine)``; ``None`` when undefined (failures, round-off errors)."""
    if not (np.isfinite(coarse) and np.isfinite(fine)) or min(coarse, fine) < ROUND_OFF:
        return None
    return math.log2(coarse / fine)


def fill_orders(records: Sequence[ConvergenceRecord]) -> list[ConvergenceRecord]:
    out = []
    for i, rec in enumerate(records):
        if i == 0:
            out.append(replace(rec, l2_order=None, h1_order=None, h2_order=None))
            continue
        prev = records[i - 1]
        out.append(replace(
            rec,
            l2_order=observed_order(prev.e_l2, rec.e_l2),
            h1_order=observed_order(prev.e_h1, rec.e_h1),
            h2_order=observed_order(prev.e_h2, rec.e_h2),
        ))
    return out


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if not np.isfinite(v):
        return "nan"
    return repr(float(v))


def records_to_csv(records: Sequence[ConvergenceRecord], fh=None) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TABLE_COLUMNS)
    for r in records:
        writer.writerow([_fmt(getattr(r, c)) for c in TABLE_COLUMNS])
    text = buf.getvalue()
    if fh is not None:
        fh.write(text)
    return text


def uniform_steps(T: float, k: float) -> tuple[int, float]:
    """Smallest step count with uniform step not exceeding ``k``."""
    n = max(1, math.ceil(T / k - 1e-9))
    return n, T / n


def run_level(test_id, h: float, k: float, cfg=None, final_time: float | None = None):
    """Solve one refinement level; returns (record, final coefficients, diagnostics).

    ``final_time`` defaults to the manufactured solution's own final time.
    """
    from .timestepping import SolverConfig, run_simulation

    cfg = cfg or SolverConfig(k=k, T=1.0)
    sol = get_solution(test_id, cfg.Re, cfg.Ro)
    nx = int(round(sol.width / h))
    ny = int(round(sol.height / h))
    mesh = generate_rectangle_mesh(sol.width, sol.height, nx, ny)
    space = build_space(mesh)
    forms = assemble_linear_forms(space)
    T = sol.final_time if final_time is None else final_time
    n_steps, k_eff = uniform_steps(T, k)
    run_cfg = replace(cfg, k=k_eff, T=T)
    rec = ConvergenceRecord(k=k, h=h, dofs=space.n_free)
    if hasattr(sol, "load_vector"):
        forcing = sol
        psi0 = sol.exact_coefficients(space, 0.0)
    else:
        forcing = manufactured_forcing(sol, cfg.Re, cfg.Ro)
        psi0 = sol.field(0.0)
    try:
        final, diag = run_simulation(space, forms, psi0, run_cfg, forcing)
    except (RuntimeError, ArithmeticError) as exc:
        return replace(rec, failure=str(exc)), None, None
    rec.e_l2, rec.e_h1, rec.e_h2 = error_norms(space, forms, final, sol, T)
    return rec, final, diag


def _level_record(args):
    return run_level(*args)[0]


def convergence_study(test_id, h_list: Sequence[float], k: float, cfg=None,
                      workers: int = 1, final_time: float | None = None
                      ) -> list[ConvergenceRecord]:
    h_list = [float(h) for h in h_list]
    for a, b in zip(h_list, h_list[1:]):
        if not math.isclose(a, 2 * b, rel_tol=1e-12):
            raise ValueError(f"h list must halve at each level, got {a} then {b}")
    jobs = [(test_id, h, k, cfg, final_time) for h in h_list]
    if workers > 1 and isinstance(test_id, str):
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_level_record, jobs))
    else:
        records = [_level_record(j) for j in jobs]
    return fill_orders(records)
