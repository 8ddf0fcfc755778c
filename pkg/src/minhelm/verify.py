"""Manufactured solution, V-norm errors and convergence-rate fits."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .assembly import DirichletData
from .grid import Grid, build_grid, interpolate_nodal
from .materials import MaterialField
from .solver import FieldSolution, SolverOptions, solve_dirichlet


@dataclass(frozen=True)
class AnalyticSolution:
    """Exact complex fields; every callable is vectorised over (x, y)."""

    P: Callable
    grad_P: Callable  # -> (P_x, P_y)
    v: Callable  # -> (v_1, v_2)
    div_v: Callable


PLANE_WAVE = (2j, -3.0)  # P = exp(2ix - 3y)


def oracle_fields(rho=-5 + 5j, kappa=4 - 4j, omega=2.0) -> tuple[AnalyticSolution, DirichletData, MaterialField]:
    """Manufactured solution ``P = exp(2ix - 3y)`` with its lifting functions.

    The lifts add ``sin(pi x) sin(pi y)`` (real part) and three times that
    (imaginary part), which vanish on the boundary. Returns the exact
    fields, the Dirichlet data and the constant material.
    """
    kx, ky = PLANE_WAVE
    material = MaterialField.constant(rho, kappa, omega)
    rinv = 1.0 / complex(rho)

    def P(x, y):
        return np.exp(kx * np.asarray(x) + ky * np.asarray(y))

    def grad_P(x, y):
        p = P(x, y)
        return kx * p, ky * p

    def v(x, y):
        gx, gy = grad_P(x, y)
        return (-1j / omega) * rinv * gx, (-1j / omega) * rinv * gy

    def div_v(x, y):
        return 1j * omega / complex(kappa) * P(x, y)

    def bump(x, y):
        return np.sin(np.pi * x) * np.sin(np.pi * y)

    def bump_grad(x, y):
        return (np.pi * np.cos(np.pi * x) * np.sin(np.pi * y),
                np.pi * np.sin(np.pi * x) * np.cos(np.pi * y))

    def psi_R(x, y):
        return P(x, y).real + bump(x, y)

    def psi_I(x, y):
        return P(x, y).imag + 3.0 * bump(x, y)

    def grad_R(x, y):
        gx, gy = grad_P(x, y)
        bx, by = bump_grad(x, y)
        return gx.real + bx, gy.real + by

    def grad_I(x, y):
        gx, gy = grad_P(x, y)
        bx, by = bump_grad(x, y)
        return gx.imag + 3 * bx, gy.imag + 3 * by

    exact = AnalyticSolution(P=P, grad_P=grad_P, v=v, div_v=div_v)
    return exact, DirichletData(psi_R, psi_I, grad_R, grad_I), material


def model_residual(exact: AnalyticSolution, material: MaterialField, x, y) -> np.ndarray:
    """``-div(rho^{-1} grad P) - (omega^2/kappa) P`` for the plane wave with
    constant diagonal ``rho``, using its exact second derivatives."""
    kx, ky = PLANE_WAVE
    rinv = -material.r_at(x, y)
    p = exact.P(x, y)
    lap = rinv[..., 0, 0] * kx * kx * p + rinv[..., 1, 1] * ky * ky * p
    return -lap - material.omega**2 / material.kappa_at(x, y) * p


def _trap_weights(M: int) -> np.ndarray:
    w = np.full(M, 1.0 / (M - 1))
    w[0] = w[-1] = 0.5 / (M - 1)
    return w


@dataclass(frozen=True)
class ErrorComponents:
    l2_P: float
    h1_semi_P: float
    l2_v: float
    l2_div_v: float

    @property
    def vnorm(self) -> float:
        return float(np.sqrt(self.l2_P**2 + self.h1_semi_P**2 + self.l2_v**2 + self.l2_div_v**2))


def error_components(field: FieldSolution, exact: AnalyticSolution, eval_N: int = 1500,
                     part: str = "complex", chunk: int = 100) -> ErrorComponents:
    """Trapezoidal-rule norms of the error of the bilinear interpolant of
    the nodal solution, on an ``eval_N`` x ``eval_N`` grid.

    Derivatives are the exact piecewise derivatives of the interpolant.
    ``part`` selects the complex error or only its real/imaginary part.
    """
    if eval_N < 2:
        raise ValueError("eval_N must be >= 2")
    take = {"complex": lambda z: z, "real": np.real, "imag": np.imag}[part]
    grid = field.grid
    P, v = take(field.P), take(field.v)
    s = np.linspace(0.0, 1.0, eval_N)
    w = _trap_weights(eval_N)
    acc = np.zeros(4)
    for start in range(0, eval_N, chunk):
        rows = slice(start, min(start + chunk, eval_N))
        X, Y = np.meshgrid(s, s[rows])
        W = w[rows][:, None] * w[None, :]
        pv, px, py = interpolate_nodal(grid, P, X, Y)
        v1, v1x, _ = interpolate_nodal(grid, v[:, 0], X, Y)
        v2, _, v2y = interpolate_nodal(grid, v[:, 1], X, Y)
        ex_gx, ex_gy = exact.grad_P(X, Y)
        ex_v1, ex_v2 = exact.v(X, Y)
        acc[0] += np.sum(W * np.abs(pv - take(exact.P(X, Y))) ** 2)
        acc[1] += np.sum(W * (np.abs(px - take(ex_gx)) ** 2 + np.abs(py - take(ex_gy)) ** 2))
        acc[2] += np.sum(W * (np.abs(v1 - take(ex_v1)) ** 2 + np.abs(v2 - take(ex_v2)) ** 2))
        acc[3] += np.sum(W * np.abs(v1x + v2y - take(exact.div_v(X, Y))) ** 2)
    return ErrorComponents(*np.sqrt(acc))


def vnorm_error(field: FieldSolution, exact: AnalyticSolution, eval_N: int = 1500) -> float:
    """``(||P - P_N||_{H1}^2 + ||v - v_N||_{H(div)}^2)^{1/2}``."""
    return error_components(field, exact, eval_N).vnorm


def nodal_field(grid: Grid, exact: AnalyticSolution) -> FieldSolution:
    """Exact solution sampled at the nodes, as a FieldSolution."""
    X, Y = grid.node_xy()
    v1, v2 = exact.v(X, Y)
    return FieldSolution.from_complex(grid, exact.P(X, Y), np.column_stack([v1, v2]))


@dataclass(frozen=True)
class ConvergenceRow:
    N: int
    h: float
    vnorm_error: float
    converged: bool = True
    l2_P_real: float = float("nan")


@dataclass
class ConvergenceStudy:
    rows: list
    rate: float
    fitted_on: list = field(default_factory=list)


def fit_rate(h, err) -> float:
    """Least-squares slope of log(err) against log(h)."""
    h, err = np.asarray(h, float), np.asarray(err, float)
    if len(h) < 2:
        return float("nan")
    return float(np.polyfit(np.log(h), np.log(err), 1)[0])


def convergence_study(material: MaterialField, data: DirichletData, Ns, exact: AnalyticSolution,
                      eval_N: int = 1500, opts: SolverOptions | None = None,
                      min_fit_N: int = 30) -> ConvergenceStudy:
    """Solve on each grid, measure the V-norm error, fit the rate.

    Rows from non-converged solves or with ``N < min_fit_N`` are kept in the
    table but left out of the fit.
    """
    Ns = list(Ns)
    if any(n < 3 for n in Ns) or any(b < a for a, b in zip(Ns, Ns[1:])):
        raise ValueError("Ns must be non-decreasing and each >= 3")
    rows = []
    for N in Ns:
        grid = build_grid(N)
        sol = solve_dirichlet(grid, material, data, opts)
        comps = error_components(sol, exact, eval_N)
        l2_re = error_components(sol, exact, eval_N, part="real").l2_P
        rows.append(ConvergenceRow(N, grid.h, comps.vnorm, sol.converged, l2_re))
    used = [r for r in rows if r.converged and r.N >= min_fit_N]
    rate = fit_rate([r.h for r in used], [r.vnorm_error for r in used])
    return ConvergenceStudy(rows, rate, [r.N for r in used])
