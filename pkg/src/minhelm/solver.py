"""Two-formulation solves and recombination into the complex field.

The real-primal system yields ``(P', v'')`` and the imag-primal system
yields ``(P'', v')``; together they give ``P`` and ``v = (-i/omega) rho^{-1}
grad P`` at every node.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .assembly import BlockSystem, DirichletData, Mode, RobinData, assemble_dirichlet, assemble_robin
from .grid import Grid
from .linalg import BlockJacobiPreconditioner, IndefiniteMatrixError, SolveReport, pcg
from .materials import MaterialField

log = logging.getLogger(__name__)


class SolverWarning(UserWarning):
    pass


@dataclass
class SolverOptions:
    tol: float = 1e-8
    maxit: int | None = None  # default 10 * sqrt(unknowns)
    preconditioner: bool = True
    inner_tol: float = 1e-2
    inner_maxit: int = 50
    flexible: bool = False
    on_indefinite: str = "stop"  # or "minres": rerun with MINRES after a CG breakdown
    callback: object = field(default=None, repr=False)

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.on_indefinite not in ("stop", "minres"):
            raise ValueError(f"on_indefinite must be 'stop' or 'minres', got {self.on_indefinite!r}")


@dataclass
class BoundaryDual:
    """Dual pair on the Robin boundary, one row per (node, edge normal)."""

    nodes: np.ndarray
    normals: np.ndarray  # (m, 2)
    P_re: np.ndarray  # primal P' at the node
    vn_im: np.ndarray  # primal v''.n
    vn_re: np.ndarray  # recovered v'.n
    P_im: np.ndarray  # recovered P''
    g: np.ndarray


@dataclass
class FieldSolution:
    grid: Grid
    P_re: np.ndarray  # (N*N,) nodal, global node order
    P_im: np.ndarray
    v_re: np.ndarray  # (N*N, 2)
    v_im: np.ndarray
    reports: dict = field(default_factory=dict)
    boundary: BoundaryDual | None = None

    @property
    def P(self) -> np.ndarray:
        return self.P_re + 1j * self.P_im

    @property
    def v(self) -> np.ndarray:
        return self.v_re + 1j * self.v_im

    @property
    def converged(self) -> bool:
        return all(r.converged for r in self.reports.values())

    @classmethod
    def from_complex(cls, grid: Grid, P, v) -> "FieldSolution":
        P = np.asarray(P, dtype=complex)
        v = np.asarray(v, dtype=complex)
        return cls(grid, P.real.copy(), P.imag.copy(), v.real.copy(), v.imag.copy())


def solve_system(system: BlockSystem, opts: SolverOptions | None = None):
    """PCG (or CG) on an assembled system; indefiniteness returns the last
    iterate with ``report.indefinite`` set instead of raising."""
    opts = opts or SolverOptions()
    maxit = opts.maxit or int(10 * np.sqrt(system.n)) + 1
    precond = None
    if opts.preconditioner:
        precond = BlockJacobiPreconditioner.from_system(
            system, inner_tol=opts.inner_tol, inner_maxit=opts.inner_maxit)
    try:
        x, rep = pcg(system.A, system.b, precond, tol=opts.tol, maxit=maxit,
                     flexible=opts.flexible, callback=opts.callback)
    except IndefiniteMatrixError as exc:
        x, rep = exc.x, exc.report
        if opts.on_indefinite == "minres":
            warnings.warn(f"{system.mode.value}: {exc}; switching to MINRES", SolverWarning, stacklevel=2)
            x, rep = _minres(system, opts, maxit, rep)
        else:
            warnings.warn(f"{system.mode.value} solve stopped: {exc}", SolverWarning, stacklevel=2)
    if not rep.converged and not rep.indefinite:
        warnings.warn(f"{system.mode.value} solve did not converge: {rep.message}",
                      SolverWarning, stacklevel=2)
    return x, rep


def _minres(system: BlockSystem, opts: SolverOptions, maxit: int, rep: SolveReport):
    history = []
    bnorm = np.linalg.norm(system.b)

    def track(xk):
        history.append(np.linalg.norm(system.b - system.A @ xk) / bnorm)

    x, info = spla.minres(system.A, system.b, rtol=opts.tol, maxiter=100 * maxit, callback=track)
    relres = np.linalg.norm(system.b - system.A @ x) / bnorm
    rep.residual_history = rep.residual_history + history
    rep.iterations = len(history)
    rep.converged = info == 0
    rep.message += f"; MINRES fallback: info={info}, relres {relres:.2e}"
    return x, rep


def _split(system: BlockSystem, x):
    ns, nv, _ = system.sizes
    delta = x[:ns]
    vx = x[ns:ns + nv][system.vector_map]
    vy = x[ns + nv:][system.vector_map]
    return delta, np.column_stack([vx, vy])


def _nodal_scalar(system: BlockSystem, delta, lift_values=None):
    smap = system.scalar_map
    out = np.zeros(smap.shape[0]) if lift_values is None else np.array(lift_values, dtype=float)
    inner = smap >= 0
    out[inner] += delta[smap[inner]]
    return out


def solve_dirichlet(grid: Grid, material: MaterialField, data: DirichletData,
                    opts: SolverOptions | None = None, modes=("real-primal", "imag-primal")) -> FieldSolution:
    """Solve both formulations and recombine. Boundary nodal values are the
    lifting functions' samples (imposed, not solved)."""
    X, Y = grid.node_xy()
    n = grid.n_nodes
    P_re, P_im = data.value("R", X, Y), data.value("I", X, Y)
    v_re, v_im = np.zeros((n, 2)), np.zeros((n, 2))
    reports = {}
    for mode in map(Mode, modes):
        system = assemble_dirichlet(grid, material, data, mode)
        x, rep = solve_system(system, opts)
        delta, v = _split(system, x)
        reports[mode.value] = rep
        if mode is Mode.REAL_PRIMAL:
            P_re = _nodal_scalar(system, delta, P_re)
            v_im = v
        else:
            P_im = _nodal_scalar(system, delta, P_im)
            v_re = v
    vc = (v_re + 1j * v_im) / material.z_scale
    return FieldSolution(grid, P_re, P_im, vc.real.copy(), vc.imag.copy(), reports)


def robin_boundary_pairs(grid: Grid):
    """(node, normal) pairs on the Robin boundary."""
    N = grid.N
    nodes, normals = [], []
    for j in range(N - 1 if grid.periodic_x else N):
        nodes += [j, (N - 1) * N + j]
        normals += [(0.0, -1.0), (0.0, 1.0)]
    if not grid.periodic_x:
        for t in range(N):
            nodes += [t * N, t * N + N - 1]
            normals += [(-1.0, 0.0), (1.0, 0.0)]
    return np.array(nodes), np.array(normals)


def solve_robin(grid: Grid, material: MaterialField, robin: RobinData,
                opts: SolverOptions | None = None) -> FieldSolution:
    """Robin problem ``P + a v.n = g``.

    The real-primal solve gives ``(P', v'')``; the dual pair ``(v'.n, P'')``
    on the boundary follows from the Robin identity, and the interior
    ``P''``, ``v'`` come from the swapped (imag-primal) solve.
    """
    if complex(robin.a).real >= 0:
        warnings.warn(f"Re(a) = {complex(robin.a).real} >= 0: the Robin form is not "
                      "guaranteed coercive", SolverWarning, stacklevel=2)
    # rescaling Z by c scales v by c, so the impedance seen by the scaled field is a/c
    eff = RobinData(complex(robin.a) / material.z_scale, robin.g, robin.g_uses_normal)
    reports, parts = {}, {}
    for mode in (Mode.REAL_PRIMAL, Mode.IMAG_PRIMAL):
        system = assemble_robin(grid, material, eff, mode)
        x, rep = solve_system(system, opts)
        delta, v = _split(system, x)
        reports[mode.value] = rep
        parts[mode] = (delta[system.scalar_map], v)
    P_re, vs_im = parts[Mode.REAL_PRIMAL]
    P_im, vs_re = parts[Mode.IMAG_PRIMAL]
    vc = (vs_re + 1j * vs_im) / material.z_scale
    sol = FieldSolution(grid, P_re, P_im, vc.real.copy(), vc.imag.copy(), reports)
    sol.boundary = recover_boundary_dual(grid, robin, P_re, vc.imag)
    return sol


def recover_boundary_dual(grid: Grid, robin: RobinData, P_re, v_im) -> BoundaryDual:
    """(v'.n, P'') = M2^{-1} g - M2^{-1} M1 (P', v''.n) at Robin boundary nodes."""
    nodes, normals = robin_boundary_pairs(grid)
    X, Y = grid.node_xy()
    g = robin.g_at(X[nodes], Y[nodes], normals[:, 0], normals[:, 1])
    prim = np.column_stack([P_re[nodes], np.sum(v_im[nodes] * normals, axis=1)])
    gv = np.column_stack([g.real, g.imag])
    dual = gv @ robin.M2_inv.T - prim @ robin.surface_kernel.T
    return BoundaryDual(nodes, normals, prim[:, 0], prim[:, 1], dual[:, 0], dual[:, 1], g)


def boundary_identity_residual(robin: RobinData, dual: BoundaryDual) -> float:
    """max |M1 (P', v''.n) + M2 (v'.n, P'') - (g', g'')|."""
    prim = np.column_stack([dual.P_re, dual.vn_im])
    dl = np.column_stack([dual.vn_re, dual.P_im])
    res = prim @ robin.M1.T + dl @ robin.M2.T - np.column_stack([dual.g.real, dual.g.imag])
    return float(np.abs(res).max()) if res.size else 0.0


def helmholtz_residual(field: FieldSolution, material: MaterialField, grid: Grid | None = None) -> float:
    """Max over interior nodes of the 5-point flux-form residual of
    ``-div(rho^{-1} grad P) - (omega^2/kappa) P`` for the complex field.

    Only the diagonal of ``rho^{-1}`` enters the stencil.
    """
    grid = grid or field.grid
    N, h = grid.N, grid.h
    P = np.asarray(field.P).reshape(N, N)
    c = grid.coords
    xi, yi = np.meshgrid(c[1:-1], c[1:-1])
    xm, xp = xi - h / 2, xi + h / 2
    ym, yp = yi - h / 2, yi + h / 2
    rinv_xp = -material.r_at(xp, yi)[..., 0, 0]
    rinv_xm = -material.r_at(xm, yi)[..., 0, 0]
    rinv_yp = -material.r_at(xi, yp)[..., 1, 1]
    rinv_ym = -material.r_at(xi, ym)[..., 1, 1]
    C = P[1:-1, 1:-1]
    flux = (rinv_xp * (P[1:-1, 2:] - C) - rinv_xm * (C - P[1:-1, :-2])
            + rinv_yp * (P[2:, 1:-1] - C) - rinv_ym * (C - P[:-2, 1:-1])) / h**2
    res = -flux - material.omega**2 / material.kappa_at(xi, yi) * C
    return float(np.abs(res).max()) if res.size else 0.0
