"""Implicit Euler time stepping with Newton's method.

Each step solves, on the free (unconstrained) DOFs,

    G (psi - psi_old) / k + B psi / Re + N(psi) - D psi / Ro = L(t_new) / Ro

where ``N_i(psi) = b(psi; psi, phi_i)`` and ``L_i = (F(t_new), phi_i)``.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh, splu

from .argyris import ArgyrisSpace, CoefficientVector, interpolate
from .forms import AssembledForms, assemble_load

DIAGNOSTIC_COLUMNS = ["step", "t", "grad_norm_sq", "lap_norm_sq", "newton_iters", "update_norm"]


class NewtonConvergenceError(RuntimeError):
    def __init__(self, message, update_norms, residual_norm):
        super().__init__(message)
        self.update_norms = list(update_norms)
        self.residual_norm = residual_norm


class LinearSolveError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    k: float
    T: float
    Re: float = 1.0
    Ro: float = 1.0
    newton_tol: float = 1e-8
    newton_max_iters: int = 25
    linear_solver: str = "splu"

    def __post_init__(self):
        for name in ("Re", "Ro", "k", "newton_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)!r}")
        if self.T < self.k * (1 - 1e-12):
            raise ValueError(f"final time T={self.T!r} is shorter than one step k={self.k!r}")
        if self.newton_max_iters < 1:
            raise ValueError("newton_max_iters must be at least 1")
        if self.linear_solver not in ("splu",):
            raise ValueError(f"unknown linear solver {self.linear_solver!r}")

    @property
    def n_steps(self) -> int:
        ratio = self.T / self.k
        n = round(ratio)
        if abs(ratio - n) > 1e-9:
            raise ValueError(f"T/k = {ratio!r} is not an integer number of steps")
        return int(n)


@dataclass
class TimeSeriesDiagnostics:
    time: list = field(default_factory=list)
    grad_norm_sq: list = field(default_factory=list)
    lap_norm_sq: list = field(default_factory=list)
    newton_iters: list = field(default_factory=list)
    update_norm: list = field(default_factory=list)

    def record(self, t, grad_sq, lap_sq, iters, update):
        self.time.append(float(t))
        self.grad_norm_sq.append(float(grad_sq))
        self.lap_norm_sq.append(float(lap_sq))
        self.newton_iters.append(int(iters))
        self.update_norm.append(float(update))

    def __len__(self):
        return len(self.time)

    def to_csv(self, fh=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(DIAGNOSTIC_COLUMNS)
        for i in range(len(self)):
            writer.writerow([
                i, repr(self.time[i]), repr(self.grad_norm_sq[i]),
                repr(self.lap_norm_sq[i]), self.newton_iters[i], repr(self.update_norm[i]),
            ])
        text = buf.getvalue()
        if fh is not None:
            fh.write(text)
        return text


def sparse_lu(A, scale=None):
    """Factorize ``A`` (optionally as ``S A S`` with ``S = diag(scale)``); return a solver."""
    A = sp.csr_matrix(A)
    if scale is not None:
        A = sp.diags(scale) @ A @ sp.diags(scale)
    # the CSR arrays of A are the CSC arrays of A^T
    At = sp.csc_matrix((A.data, A.indices, A.indptr), shape=A.shape[::-1])
    try:
        lu = splu(At, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.1,
                  options={"SymmetricMode": True})
    except RuntimeError as exc:
        raise LinearSolveError(f"sparse LU factorization failed: {exc}") from exc

    if scale is None:
        return lambda b: lu.solve(b, trans="T")
    return lambda b: scale * lu.solve(scale * b, trans="T")


def newton_solve(residual, jacobian, guess, tol=1e-8, max_iters=25, factorize=sparse_lu,
                 monitor="simplified"):
    """Newton's method with the l2 norm of the update as stopping test.

    With ``monitor="simplified"`` the update that the next iteration would take
    is estimated by reusing the current factorization; when it is already below
    ``tol`` it is applied and the iteration stops without a new factorization.
    ``monitor="full"`` always refactorizes.

    Returns ``(x, iterations, update_norms)``; iterations counts factorizations.
    """
    if monitor not in ("simplified", "full"):
        raise ValueError(f"unknown monitor {monitor!r}")
    x = np.array(guess, dtype=float)
    norms = []
    r = residual(x)
    for it in range(1, max_iters + 1):
        try:
            solve = factorize(jacobian(x))
        except LinearSolveError as exc:
            raise LinearSolveError(f"Newton iteration {it}: {exc}") from exc
        dx = -solve(r)
        x = x + dx
        norms.append(float(np.linalg.norm(dx)))
        if not np.isfinite(norms[-1]):
            break
        if norms[-1] < tol:
            return x, it, norms
        r = residual(x)
        if monitor == "simplified":
            dx = -solve(r)
            nb = float(np.linalg.norm(dx))
            if nb < tol:
                norms.append(nb)
                return x + dx, it, norms
    raise NewtonConvergenceError(
        f"Newton did not converge in {max_iters} iterations "
        f"(last update {norms[-1]:.3e}, residual {np.linalg.norm(r):.3e})",
        norms, float(np.linalg.norm(r)),
    )


def jacobian_consistency(residual, jacobian, x, dx, eps=1e-6) -> float:
    """Relative mismatch between ``J dx`` and a central difference of the residual."""
    jd = jacobian(x) @ dx
    fd = (residual(x + eps * dx) - residual(x - eps * dx)) / (2 * eps)
    return float(np.linalg.norm(fd - jd) / np.linalg.norm(jd))


class ImplicitEuler:
    """Implicit Euler stepper on the free DOFs of a fixed space and configuration."""

    def __init__(self, space: ArgyrisSpace, forms: AssembledForms, cfg: SolverConfig):
        self.space = space
        self.forms = forms
        self.cfg = cfg
        pat = forms.reduced
        el = forms.element
        k, Re, Ro = cfg.k, cfg.Re, cfg.Ro
        self.pattern = pat
        self.G = forms.restricted("G")
        self.B = forms.restricted("B")
        self.lin_data = pat.scatter(el["G"] / k + el["B"] / Re - el["D"] / Ro)
        self.A = pat.matrix(self.lin_data)
        diag = np.abs(self.A.diagonal())
        self.scale = 1.0 / np.sqrt(np.where(diag > 0, diag, 1.0))
        rows = np.repeat(np.arange(pat.n), np.diff(pat.indptr))
        self._data_scale = self.scale[rows] * self.scale[pat.indices]
        forms.qsym  # build the trilinear tensor up front
        self._cache = (None, None, None)

    def load(self, forcing, t) -> np.ndarray:
        """``L(t) / Ro`` on the free DOFs."""
        if forcing is None:
            return np.zeros(self.space.n_free)
        if hasattr(forcing, "load_vector"):
            full = forcing.load_vector(self.space, self.forms, t)
        else:
            full = assemble_load(self.space, forcing, t, self.forms.rule)
        return full[self.space.free_dofs] / self.cfg.Ro

    def _evaluate(self, x):
        cx, res, data = self._cache
        if cx is not None and np.array_equal(cx, x):
            return res, data
        res, data = self.forms.nonlinear(x, self.pattern)
        self._cache = (x.copy(), res, data)
        return res, data

    def step(self, x_old, t_new, forcing, monitor="simplified"):
        """Advance free-DOF coefficients one step; returns ``(x_new, iters, update_norms)``."""
        rhs = self.G @ x_old / self.cfg.k + self.load(forcing, t_new)

        def residual(x):
            return self.A @ x + self._evaluate(x)[0] - rhs

        def jacobian(x):
            return self.pattern.matrix(self.lin_data + self._evaluate(x)[1])

        def factorize(J):
            solve = sparse_lu(self.pattern.matrix(J.data * self._data_scale))
            return lambda b: self.scale * solve(self.scale * b)

        return newton_solve(residual, jacobian, x_old, self.cfg.newton_tol,
                            self.cfg.newton_max_iters, factorize, monitor)


def implicit_euler_step(space, forms, psi_n, t_next, cfg, F, stepper=None):
    """One implicit Euler step on full coefficient vectors; returns ``(psi, iters)``."""
    stepper = stepper or ImplicitEuler(space, forms, cfg)
    x_old = np.asarray(psi_n, dtype=float)[space.free_dofs]
    x, iters, _ = stepper.step(x_old, t_next, F)
    return CoefficientVector(space.expand(x), t_next), iters


def initial_coefficients(space: ArgyrisSpace, psi0) -> np.ndarray:
    """Constrained initial data from a pointwise field, a vector, or ``None``."""
    if psi0 is None:
        return np.zeros(space.n_dofs)
    if callable(psi0):
        return space.apply_constraints(interpolate(space, psi0))
    return space.apply_constraints(np.asarray(psi0, dtype=float))


def run_simulation(space, forms, psi0, cfg: SolverConfig, F=None):
    """Integrate from t=0 to ``cfg.T``; returns ``(final CoefficientVector, diagnostics)``."""
    n_steps = cfg.n_steps
    stepper = ImplicitEuler(space, forms, cfg)
    x = initial_coefficients(space, psi0)[space.free_dofs]
    diag = TimeSeriesDiagnostics()
    diag.record(0.0, x @ (stepper.G @ x), x @ (stepper.B @ x), 0, 0.0)
    for n in range(1, n_steps + 1):
        t = n * cfg.k
        try:
            x, iters, norms = stepper.step(x, t, F)
        except NewtonConvergenceError as exc:
            raise NewtonConvergenceError(f"step {n} (t={t!r}): {exc}",
                                         exc.update_norms, exc.residual_norm) from exc
        except LinearSolveError as exc:
            raise LinearSolveError(f"step {n} (t={t!r}): {exc}") from exc
        diag.record(t, x @ (stepper.G @ x), x @ (stepper.B @ x), iters, norms[-1])
    return CoefficientVector(space.expand(x), n_steps * cfg.k), diag


def poincare_constant(forms: AssembledForms) -> float:
    """Largest ``||v|| / ||lap v||`` over the constrained discrete space."""
    M = forms.restricted("M")
    B = forms.restricted("B")
    if M.shape[0] <= 3:
        from scipy.linalg import eigh
        return float(math.sqrt(eigh(M.toarray(), B.toarray(), eigvals_only=True)[-1]))
    lam = eigsh(M, k=1, M=B, which="LA", return_eigenvectors=False)[0]
    return float(math.sqrt(lam))


def forcing_l2_norms(space, forms, F, times) -> np.ndarray:
    tab = space.basis_tables(forms.rule)
    xq, w = tab["points"], tab["weights"]
    out = []
    for t in times:
        v = np.broadcast_to(np.asarray(F(t, xq[..., 0], xq[..., 1]), float), w.shape)
        out.append(math.sqrt(np.sum(w * v * v)))
    return np.array(out)


def stability_budget(space, forms, diag: TimeSeriesDiagnostics, cfg: SolverConfig, F,
                     gamma: float | None = None):
    """Left and right sides of the discrete energy bound after every step.

    ``lhs_n = |grad psi^n|^2 / 2 + k / (2 Re) sum_{m<=n} |lap psi^m|^2``
    ``rhs_n = |grad psi^0|^2 / 2 + k Re / (2 Ro^2) sum_{m<=n} (gamma |F(t_m)|)^2``
    """
    gamma = poincare_constant(forms) if gamma is None else gamma
    t = np.asarray(diag.time)
    grad = np.asarray(diag.grad_norm_sq)
    lap = np.asarray(diag.lap_norm_sq)
    fnorm = np.zeros(len(t)) if F is None else forcing_l2_norms(space, forms, F, t)
    fnorm[0] = 0.0
    k, Re, Ro = cfg.k, cfg.Re, cfg.Ro
    lap[0] = 0.0
    lhs = 0.5 * grad + 0.5 / Re * k * np.cumsum(lap)
    rhs = 0.5 * grad[0] + 0.5 * Re / Ro ** 2 * k * np.cumsum((gamma * fnorm) ** 2)
    return lhs[1:], rhs[1:]
