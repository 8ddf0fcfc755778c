"""Structured unit-square grid with piecewise-bilinear (tent) basis functions.

Nodes are indexed ``(j, t)`` with ``j`` running along x and ``t`` along y,
both 1-based, so node ``(j, t)`` sits at ``((j-1)h, (t-1)h)``.  Internally
arrays use the 0-based global node id ``(t-1)*N + (j-1)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class GridError(ValueError):
    """Invalid grid size or out-of-range node index."""


class BasisKind(str, Enum):
    SCALAR = "psi"
    VECTOR_X = "phi1"
    VECTOR_Y = "phi2"


@dataclass(frozen=True)
class BasisId:
    kind: BasisKind
    flat_index: int  # 1-based, as produced by scalar_interior_index / vector_index


@dataclass(frozen=True)
class QuadratureRule:
    """Tensor rule on the reference cell (0, 1)^2; weights sum to one."""

    points: np.ndarray  # (q, 2)
    weights: np.ndarray  # (q,)

    def integrate(self, f) -> float:
        return float(np.sum(self.weights * f(self.points[:, 0], self.points[:, 1])))


def gauss_rule(n: int = 2) -> QuadratureRule:
    """n x n Gauss-Legendre rule mapped to the unit square."""
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    xi, eta = np.meshgrid(x, x, indexing="xy")
    W = np.outer(w, w)  # W[eta, xi]
    pts = np.column_stack([xi.ravel(), eta.ravel()])
    return QuadratureRule(points=pts, weights=W.ravel())


def gauss_line(n: int = 2) -> tuple[np.ndarray, np.ndarray]:
    """n-point Gauss rule on (0, 1)."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@dataclass(frozen=True)
class Grid:
    N: int
    periodic_x: bool = False
    h: float = field(init=False)

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 3:
            raise GridError(f"grid needs N >= 3 nodes per side, got N={self.N}")
        object.__setattr__(self, "h", 1.0 / (self.N - 1))

    @property
    def coords(self) -> np.ndarray:
        """1-D node coordinates, shared by both axes."""
        return np.arange(self.N) * self.h

    @property
    def n_nodes(self) -> int:
        return self.N * self.N

    @property
    def n_interior(self) -> int:
        return (self.N - 2) ** 2

    @property
    def n_cells(self) -> int:
        return (self.N - 1) ** 2

    def node_xy(self) -> tuple[np.ndarray, np.ndarray]:
        """Coordinates of all nodes in global (row-major, y outer) order."""
        X, Y = np.meshgrid(self.coords, self.coords, indexing="xy")
        return X.ravel(), Y.ravel()

    def cell_nodes(self) -> np.ndarray:
        """(n_cells, 4) global node ids per cell, local order
        (x0,y0), (x1,y0), (x0,y1), (x1,y1); cells in row-major order."""
        N = self.N
        t, j = np.meshgrid(np.arange(N - 1), np.arange(N - 1), indexing="ij")
        base = (t * N + j).ravel()
        return np.column_stack([base, base + 1, base + N, base + N + 1])

    def cell_origin(self) -> tuple[np.ndarray, np.ndarray]:
        N = self.N
        t, j = np.meshgrid(np.arange(N - 1), np.arange(N - 1), indexing="ij")
        return j.ravel() * self.h, t.ravel() * self.h

    def boundary_mask(self) -> np.ndarray:
        N = self.N
        t, j = np.divmod(np.arange(N * N), N)
        return (t == 0) | (t == N - 1) | (j == 0) | (j == N - 1)

    def scalar_dofs(self, include_boundary: bool = False) -> np.ndarray:
        """Map node id -> scalar unknown index (-1 where eliminated).

        Without boundary nodes this follows the interior re-indexing
        k = (t-2)(N-2) + j - 1 (shifted to 0-based)."""
        N = self.N
        t, j = np.divmod(np.arange(N * N), N)
        if not include_boundary:
            dof = np.full(N * N, -1, dtype=np.int64)
            inner = (t > 0) & (t < N - 1) & (j > 0) & (j < N - 1)
            dof[inner] = (t[inner] - 1) * (N - 2) + (j[inner] - 1)
            return dof
        return self._wrapped_ids()

    def vector_dofs(self) -> np.ndarray:
        """Map node id -> index of the phi1 (or phi2) coefficient."""
        return self._wrapped_ids()

    def _wrapped_ids(self) -> np.ndarray:
        N = self.N
        if not self.periodic_x:
            return np.arange(N * N, dtype=np.int64)
        t, j = np.divmod(np.arange(N * N), N)
        j = np.where(j == N - 1, 0, j)
        return t * (N - 1) + j

    def n_scalar(self, include_boundary: bool = False) -> int:
        return int(self.scalar_dofs(include_boundary).max()) + 1

    def n_vector(self) -> int:
        return int(self.vector_dofs().max()) + 1


def build_grid(N: int, periodic_x: bool = False) -> Grid:
    return Grid(N=N, periodic_x=periodic_x)


def scalar_interior_index(t: int, j: int, N: int) -> int:
    """1-based index of the interior scalar tent centred at node (j, t)."""
    if not (2 <= t <= N - 1 and 2 <= j <= N - 1):
        raise GridError(f"node (t={t}, j={j}) is not interior for N={N}")
    return (t - 2) * (N - 2) + j - 1


def vector_index(t: int, j: int, N: int) -> int:
    """1-based index of the vector tents phi1/phi2 at node (j, t)."""
    if not (1 <= t <= N and 1 <= j <= N):
        raise GridError(f"node (t={t}, j={j}) outside the {N}x{N} grid")
    return (t - 1) * N + j


def basis_node(b: BasisId, N: int) -> tuple[int, int]:
    """Inverse index maps: 1-based (t, j) of the node carrying ``b``."""
    k = b.flat_index
    if b.kind is BasisKind.SCALAR:
        if not 1 <= k <= (N - 2) ** 2:
            raise GridError(f"scalar index {k} out of range for N={N}")
        q, r = divmod(k - 1, N - 2)
        return q + 2, r + 2
    if not 1 <= k <= N * N:
        raise GridError(f"vector index {k} out of range for N={N}")
    q, r = divmod(k - 1, N)
    return q + 1, r + 1


def tent(x, xc, h):
    """1-D hat function and its derivative."""
    d = np.asarray(x, dtype=float) - xc
    inside = np.abs(d) <= h
    val = np.where(inside, 1.0 - np.abs(d) / h, 0.0)
    der = np.where(inside & (np.abs(d) > 0), -np.sign(d) / h, 0.0)
    return val, der


def eval_basis(b: BasisId, grid: Grid, x, y):
    """Evaluate a basis function at points (x, y).

    Returns ``(value, grad, div)``.  For the scalar tent ``value`` has the
    shape of ``x`` and ``grad`` has a trailing axis of length 2; ``div`` is
    None.  For vector tents ``value`` has a trailing axis of length 2,
    ``grad`` is None and ``div`` is the divergence.

    At a node the one-sided derivative is ambiguous; 0 is returned there,
    which never matters under quadrature with interior points.
    """
    t, j = basis_node(b, grid.N)
    h = grid.h
    fx, dfx = tent(x, (j - 1) * h, h)
    fy, dfy = tent(y, (t - 1) * h, h)
    val = fx * fy
    gx, gy = dfx * fy, fx * dfy
    if b.kind is BasisKind.SCALAR:
        return val, np.stack([gx, gy], axis=-1), None
    zero = np.zeros_like(val)
    if b.kind is BasisKind.VECTOR_X:
        return np.stack([val, zero], axis=-1), None, gx
    return np.stack([zero, val], axis=-1), None, gy


def interpolate_nodal(grid: Grid, nodal: np.ndarray, x, y):
    """Bilinear interpolant of nodal values (global node order) at points,
    with its exact piecewise gradient. Points on cell edges take the cell
    to their upper right (clipped at the last cell)."""
    N, h = grid.N, grid.h
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    j = np.clip(np.floor(x / h).astype(np.int64), 0, N - 2)
    t = np.clip(np.floor(y / h).astype(np.int64), 0, N - 2)
    xi = x / h - j
    eta = y / h - t
    U = np.asarray(nodal).reshape(N, N)
    u00, u10 = U[t, j], U[t, j + 1]
    u01, u11 = U[t + 1, j], U[t + 1, j + 1]
    val = (u00 * (1 - xi) * (1 - eta) + u10 * xi * (1 - eta)
           + u01 * (1 - xi) * eta + u11 * xi * eta)
    dx = ((u10 - u00) * (1 - eta) + (u11 - u01) * eta) / h
    dy = ((u01 - u00) * (1 - xi) + (u11 - u10) * xi) / h
    return val, dx, dy
