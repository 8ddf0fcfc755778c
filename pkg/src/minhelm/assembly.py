"""Block system assembly for the real/imaginary minimization formulation.

Unknown ordering is ``(delta, beta, gamma)``: scalar tents for the primal
pressure part, then the x- and y-components of the velocity-like field.
For the real-primal mode the unknowns represent ``(P', v'')``; the
imag-primal mode solves for ``(P'', v')``, which negates the
scalar/vector coupling blocks A4 and A6.

At every quadrature point a basis function is reduced to a 6-vector of
"features" ``(d_x s, d_y s, -w T_x, -w T_y | w s, -div T)`` so that each
bilinear-form entry is ``f_i . blockdiag(R, Kk) . f_j``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .grid import Grid, gauss_line, gauss_rule, tent
from .materials import MaterialField, check_coercivity, default_samples, dissipation_tensors


class Mode(str, Enum):
    REAL_PRIMAL = "real-primal"
    IMAG_PRIMAL = "imag-primal"


class SingularRobinError(ValueError):
    pass


def _gradient_fd(f: Callable, x, y, step=1e-6):
    gx = (f(x + step, y) - f(x - step, y)) / (2 * step)
    gy = (f(x, y + step) - f(x, y - step)) / (2 * step)
    return gx, gy


def _as_field(value) -> Callable:
    if callable(value):
        return value
    c = value
    return lambda x, y: np.full(np.shape(x), c, dtype=complex if np.iscomplexobj(c) else float)


@dataclass(frozen=True)
class DirichletData:
    """Lifting functions for the Dirichlet data of P' (``psi_R``) and P''
    (``psi_I``), evaluated exactly at quadrature points.

    Gradients are optional; without them a central difference is used.
    """

    psi_R: Callable
    psi_I: Callable
    grad_R: Callable | None = None
    grad_I: Callable | None = None

    @classmethod
    def zero(cls) -> "DirichletData":
        z = lambda x, y: np.zeros(np.shape(x))
        zg = lambda x, y: (np.zeros(np.shape(x)), np.zeros(np.shape(x)))
        return cls(z, z, zg, zg)

    def value(self, which: str, x, y):
        f = self.psi_R if which == "R" else self.psi_I
        return np.asarray(f(x, y), dtype=float)

    def gradient(self, which: str, x, y):
        f, g = (self.psi_R, self.grad_R) if which == "R" else (self.psi_I, self.grad_I)
        if g is not None:
            gx, gy = g(x, y)
        else:
            gx, gy = _gradient_fd(f, x, y)
        return np.asarray(gx, dtype=float), np.asarray(gy, dtype=float)

    def scaled(self, c: float) -> "DirichletData":
        gr = lambda x, y: tuple(c * v for v in self.gradient("R", x, y))
        gi = lambda x, y: tuple(c * v for v in self.gradient("I", x, y))
        return DirichletData(lambda x, y: c * self.value("R", x, y),
                             lambda x, y: c * self.value("I", x, y), gr, gi)


@dataclass(frozen=True)
class RobinData:
    """Impedance data for ``P + a v.n = g``.

    ``g`` is a complex constant or a vectorised callable ``g(x, y)``; with
    ``g_uses_normal`` it is called as ``g(x, y, nx, ny)``, which lets data
    differ between the edges meeting at a corner.
    """

    a: complex
    g: object
    g_uses_normal: bool = False

    def __post_init__(self):
        if complex(self.a).real == 0:
            raise SingularRobinError("Re(a) = 0 makes M2 singular")

    @property
    def M1(self) -> np.ndarray:
        a = complex(self.a)
        return np.array([[1.0, -a.imag], [0.0, a.real]])

    @property
    def M2(self) -> np.ndarray:
        a = complex(self.a)
        return np.array([[a.real, 0.0], [a.imag, 1.0]])

    @property
    def M2_inv(self) -> np.ndarray:
        a = complex(self.a)
        return np.array([[1.0, 0.0], [-a.imag, a.real]]) / a.real

    @property
    def surface_kernel(self) -> np.ndarray:
        """M2^{-1} M1, symmetric; definite with the sign of Re(a)."""
        a = complex(self.a)
        return np.array([[1.0, -a.imag], [-a.imag, abs(a) ** 2]]) / a.real

    def g_at(self, x, y, nx=0.0, ny=0.0) -> np.ndarray:
        if self.g_uses_normal:
            val = self.g(x, y, nx, ny)
        else:
            val = _as_field(self.g)(x, y)
        return np.asarray(val, dtype=complex) * np.ones(np.shape(x))

    def swapped(self) -> "RobinData":
        """Data for -iP, whose real part is P''."""
        g = self.g
        if callable(g):
            return RobinData(self.a, lambda *args: -1j * np.asarray(g(*args)), self.g_uses_normal)
        return RobinData(self.a, -1j * complex(g))


@dataclass
class BlockSystem:
    A: sp.csr_matrix
    b: np.ndarray
    sizes: tuple[int, int, int]
    mode: Mode
    kind: str  # "dirichlet" or "robin"
    grid: Grid
    scalar_map: np.ndarray  # node id -> scalar unknown (-1 if eliminated)
    vector_map: np.ndarray
    B: sp.csr_matrix | None = None  # Robin surface matrix (system is A_vol - omega B)
    omega: float = 1.0
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return sum(self.sizes)

    @property
    def slices(self) -> tuple[slice, slice, slice]:
        a, b, c = self.sizes
        return slice(0, a), slice(a, a + b), slice(a + b, a + b + c)

    def block(self, k: int, matrix: str = "A") -> sp.csr_matrix:
        """A1..A6 (or B1..B6) in the layout
        [[A1, A4^T, A6^T], [A4, A2, A5^T], [A6, A5, A3]]."""
        M = self.A if matrix == "A" else self.B
        s1, s2, s3 = self.slices
        rows_cols = {1: (s1, s1), 2: (s2, s2), 3: (s3, s3),
                     4: (s2, s1), 5: (s3, s2), 6: (s3, s1)}
        r, c = rows_cols[k]
        return M[r, c].tocsr()

    def rhs_parts(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return tuple(self.b[s] for s in self.slices)


# reference bilinear shape functions, local node order (x0,y0),(x1,y0),(x0,y1),(x1,y1)
def _shape(xi, eta):
    xi, eta = np.asarray(xi), np.asarray(eta)
    N = np.stack([(1 - xi) * (1 - eta), xi * (1 - eta), (1 - xi) * eta, xi * eta], axis=-1)
    dxi = np.stack([-(1 - eta), (1 - eta), -eta, eta], axis=-1)
    deta = np.stack([-(1 - xi), -xi, (1 - xi), xi], axis=-1)
    return N, dxi, deta


def _features(N, Nx, Ny, omega):
    """(q, 6, 12) volume features of the 12 local basis functions."""
    q = N.shape[0]
    F = np.zeros((q, 6, 12))
    F[:, 0, 0:4] = Nx
    F[:, 1, 0:4] = Ny
    F[:, 4, 0:4] = omega * N
    F[:, 2, 4:8] = -omega * N
    F[:, 5, 4:8] = -Nx
    F[:, 3, 8:12] = -omega * N
    F[:, 5, 8:12] = -Ny
    return F


def _coefficients(material: MaterialField, X, Y):
    t = dissipation_tensors(material, X, Y)
    C = np.zeros(X.shape + (6, 6))
    C[..., :4, :4] = t.R
    C[..., 4:, 4:] = t.Kk
    return C


def _local_dof_maps(grid: Grid, include_boundary: bool):
    cells = grid.cell_nodes()
    smap = grid.scalar_dofs(include_boundary)
    vmap = grid.vector_dofs()
    ns = int(smap.max()) + 1
    nv = int(vmap.max()) + 1
    loc = np.concatenate([smap[cells], ns + vmap[cells], ns + nv + vmap[cells]], axis=1)
    return loc, smap, vmap, (ns, nv, nv)


def _mode_signs(mode: Mode) -> np.ndarray:
    s = np.ones(12)
    if Mode(mode) is Mode.IMAG_PRIMAL:
        s[4:] = -1.0
    return s


def _scatter_matrix(loc, Ke, n):
    rows = np.repeat(loc[:, :, None], loc.shape[1], axis=2)
    cols = np.repeat(loc[:, None, :], loc.shape[1], axis=1)
    keep = (rows >= 0) & (cols >= 0)
    A = sp.coo_matrix((Ke[keep], (rows[keep], cols[keep])), shape=(n, n)).tocsr()
    # cancels summation-order rounding between (i, j) and (j, i)
    return ((A + A.T) * 0.5).tocsr()


def _scatter_vector(loc, be, n):
    keep = loc >= 0
    return np.bincount(loc[keep], weights=be[keep], minlength=n)


def _volume_quadrature(grid: Grid, omega: float):
    rule = gauss_rule(2)
    N, dxi, deta = _shape(rule.points[:, 0], rule.points[:, 1])
    h = grid.h
    F = _features(N, dxi / h, deta / h, omega)
    x0, y0 = grid.cell_origin()
    X = x0[:, None] + h * rule.points[None, :, 0]
    Y = y0[:, None] + h * rule.points[None, :, 1]
    return rule, N, dxi / h, deta / h, F, X, Y


def _volume_matrix(grid, material, loc, n, mode):
    rule, _, _, _, F, X, Y = _volume_quadrature(grid, material.omega)
    C = _coefficients(material, X, Y)
    w = rule.weights * grid.h**2
    Ke = np.einsum("q,qib,cqij,qjd->cbd", w, F, C, F, optimize=True)
    Ke = 0.5 * (Ke + Ke.transpose(0, 2, 1))
    s = _mode_signs(mode)
    Ke *= s[None, :, None] * s[None, None, :]
    return _scatter_matrix(loc, Ke, n)


def assemble_dirichlet(grid: Grid, material: MaterialField, data: DirichletData,
                       mode: Mode | str = Mode.REAL_PRIMAL, check: bool = True) -> BlockSystem:
    """Assemble ``A alpha = b`` for the Dirichlet problem.

    Scalar unknowns live on interior nodes only; the lifting functions carry
    the boundary values. The boundary integral of the dual data is applied
    in its volume (divergence-theorem) form.
    """
    mode = Mode(mode)
    if grid.periodic_x:
        raise ValueError("periodic lateral boundaries are only supported for Robin problems")
    if check:
        check_coercivity(material, default_samples())
    loc, smap, vmap, sizes = _local_dof_maps(grid, include_boundary=False)
    n = sum(sizes)
    A = _volume_matrix(grid, material, loc, n, mode)

    omega = material.omega
    rule, N, Nx, Ny, F, X, Y = _volume_quadrature(grid, omega)
    C = _coefficients(material, X, Y)
    w = rule.weights * grid.h**2
    if mode is Mode.REAL_PRIMAL:
        p, gp = data.value("R", X, Y), data.gradient("R", X, Y)
        d, gd = data.value("I", X, Y), data.gradient("I", X, Y)
    else:
        p, gp = data.value("I", X, Y), data.gradient("I", X, Y)
        d = -data.value("R", X, Y)
        gd = tuple(-g for g in data.gradient("R", X, Y))
    lift = np.zeros(X.shape + (6,))
    lift[..., 0], lift[..., 1] = gp
    lift[..., 4] = omega * p
    be = -np.einsum("q,qib,cqij,cqj->cb", w, F, C, lift, optimize=True)
    # dual boundary data: -omega * int (grad d . T + d div T)
    be[:, 4:8] -= omega * np.einsum("q,cq,qb->cb", w, gd[0], N) + omega * np.einsum("q,cq,qb->cb", w, d, Nx)
    be[:, 8:12] -= omega * np.einsum("q,cq,qb->cb", w, gd[1], N) + omega * np.einsum("q,cq,qb->cb", w, d, Ny)
    be *= _mode_signs(mode)[None, :]
    b = _scatter_vector(loc, be, n)
    return BlockSystem(A=A, b=b, sizes=sizes, mode=mode, kind="dirichlet", grid=grid,
                       scalar_map=smap, vector_map=vmap, omega=omega)


def boundary_edges(grid: Grid):
    """Boundary edge segments as (node_a, node_b, normal) with the Robin
    part of the boundary: y=0 and y=1 always, x=0 and x=1 unless periodic."""
    N = grid.N
    segs = []
    for j in range(N - 1):
        segs.append((j, j + 1, (0.0, -1.0)))
        segs.append(((N - 1) * N + j, (N - 1) * N + j + 1, (0.0, 1.0)))
    if not grid.periodic_x:
        for t in range(N - 1):
            segs.append((t * N, (t + 1) * N, (-1.0, 0.0)))
            segs.append((t * N + N - 1, (t + 1) * N + N - 1, (1.0, 0.0)))
    return segs


def _robin_surface(grid: Grid, robin: RobinData, smap, vmap, sizes, mode: Mode, omega: float):
    ns, nv, _ = sizes
    n = ns + 2 * nv
    s, w = gauss_line(2)
    h = grid.h
    Xn, Yn = grid.node_xy()
    kernel = robin.surface_kernel
    m2inv = robin.M2_inv
    data = robin if mode is Mode.REAL_PRIMAL else robin.swapped()
    sign = np.ones(6)
    if mode is Mode.IMAG_PRIMAL:
        sign[2:] = -1.0
    rows, cols, vals = [], [], []
    b = np.zeros(n)
    for na, nb, (nx, ny) in boundary_edges(grid):
        loc = np.array([smap[na], smap[nb], ns + vmap[na], ns + vmap[nb],
                        ns + nv + vmap[na], ns + nv + vmap[nb]])
        xq = Xn[na] + s * (Xn[nb] - Xn[na])
        yq = Yn[na] + s * (Yn[nb] - Yn[na])
        phi = np.column_stack([1 - s, s])  # (q, 2) edge hats
        G = np.zeros((len(s), 2, 6))
        G[:, 0, 0:2] = phi
        G[:, 1, 2:4] = nx * phi
        G[:, 1, 4:6] = ny * phi
        Be = h * np.einsum("q,qib,ij,qjd->bd", w, G, kernel, G)
        Be *= sign[:, None] * sign[None, :]
        g = data.g_at(xq, yq, nx, ny)
        gv = np.stack([g.real, g.imag], axis=-1) @ m2inv.T  # M2^{-1} g at each point
        be = -omega * h * np.einsum("q,qib,qi->b", w, G, gv)
        be *= sign
        rows.append(np.repeat(loc, 6))
        cols.append(np.tile(loc, 6))
        vals.append(Be.ravel())
        np.add.at(b, loc, be)
    B = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n)).tocsr()
    return B, b


def assemble_robin(grid: Grid, material: MaterialField, robin: RobinData,
                   mode: Mode | str = Mode.REAL_PRIMAL, check: bool = True) -> BlockSystem:
    """Assemble ``(A - omega B) alpha = b`` for the Robin problem.

    Scalar unknowns include boundary nodes. Surface terms use two-point
    Gauss per boundary edge; with ``grid.periodic_x`` they act on y=0 and
    y=1 only.
    """
    mode = Mode(mode)
    if check:
        check_coercivity(material, default_samples())
    omega = material.omega
    loc, smap, vmap, sizes = _local_dof_maps(grid, include_boundary=True)
    n = sum(sizes)
    A_vol = _volume_matrix(grid, material, loc, n, mode)
    B, b = _robin_surface(grid, robin, smap, vmap, sizes, mode, omega)
    A = (A_vol - omega * B).tocsr()
    sysm = BlockSystem(A=A, b=b, sizes=sizes, mode=mode, kind="robin", grid=grid,
                       scalar_map=smap, vector_map=vmap, B=B, omega=omega)
    sysm.meta["A_volume"] = A_vol
    return sysm


class OracleTooLargeError(ValueError):
    pass


def _node_features(kind: int, node: int, grid: Grid, x, y, omega: float, mode: Mode):
    """Features of one global basis function straight from the weak form.

    real-primal: (grad s, -w T | w s, -div T); imag-primal uses the swapped
    weak equation (grad s, w T | -w s, -div T).
    """
    N, h = grid.N, grid.h
    t, j = divmod(node, N)
    fx, dfx = tent(x, j * h, h)
    fy, dfy = tent(y, t * h, h)
    val, gx, gy = fx * fy, dfx * fy, fx * dfy
    f = np.zeros(np.shape(x) + (6,))
    sw = -omega if Mode(mode) is Mode.REAL_PRIMAL else omega
    if kind == 0:
        f[..., 0], f[..., 1] = gx, gy
        f[..., 4] = omega * val if Mode(mode) is Mode.REAL_PRIMAL else -omega * val
    elif kind == 1:
        f[..., 2] = sw * val
        f[..., 5] = -gx
    else:
        f[..., 3] = sw * val
        f[..., 5] = -gy
    return f


def _support_cells(node: int, grid: Grid) -> set:
    N = grid.N
    t, j = divmod(node, N)
    return {(ct, cj) for ct in (t - 1, t) for cj in (j - 1, j)
            if 0 <= ct < N - 1 and 0 <= cj < N - 1}


def brute_force_matrix(grid: Grid, material: MaterialField, data=None,
                       mode: Mode | str = Mode.REAL_PRIMAL, order: int = 5) -> np.ndarray:
    """Dense Galerkin matrix computed entry by entry (test oracle).

    Integrates each pair of global basis functions over the cells shared by
    their supports with an ``order`` x ``order`` Gauss rule. With
    :class:`RobinData` the scalar space includes boundary nodes and the
    surface term is added with ``order``-point Gauss per edge.
    """
    mode = Mode(mode)
    if grid.N > 8:
        raise OracleTooLargeError(f"brute-force oracle limited to N <= 8, got N={grid.N}")
    if grid.periodic_x:
        raise ValueError("brute-force oracle does not support periodic grids")
    robin = data if isinstance(data, RobinData) else None
    N, h, omega = grid.N, grid.h, material.omega
    nodes = np.arange(N * N)
    t, j = np.divmod(nodes, N)
    if robin is None:
        scalar_nodes = nodes[(t > 0) & (t < N - 1) & (j > 0) & (j < N - 1)]
    else:
        scalar_nodes = nodes
    basis = [(0, n) for n in scalar_nodes] + [(1, n) for n in nodes] + [(2, n) for n in nodes]
    rule = gauss_rule(order)
    cell_pts = {}

    def pts(cell):
        if cell not in cell_pts:
            ct, cj = cell
            X = (cj + rule.points[:, 0]) * h
            Y = (ct + rule.points[:, 1]) * h
            C = np.zeros((len(X), 6, 6))
            for q in range(len(X)):
                tens = dissipation_tensors(material, X[q], Y[q])
                C[q, :4, :4] = tens.R
                C[q, 4:, 4:] = tens.Kk
            cell_pts[cell] = (X, Y, C)
        return cell_pts[cell]

    n = len(basis)
    A = np.zeros((n, n))
    for a in range(n):
        ka, na = basis[a]
        sa = _support_cells(na, grid)
        for b in range(a, n):
            kb, nb = basis[b]
            shared = sa & _support_cells(nb, grid)
            total = 0.0
            for cell in sorted(shared):
                X, Y, C = pts(cell)
                fa = _node_features(ka, na, grid, X, Y, omega, mode)
                fb = _node_features(kb, nb, grid, X, Y, omega, mode)
                total += h * h * np.sum(rule.weights * np.einsum("qi,qij,qj->q", fa, C, fb))
            A[a, b] = A[b, a] = total
    if robin is not None:
        A -= omega * _brute_surface(grid, robin, basis, mode, order)
    return A


def _brute_surface(grid, robin, basis, mode, order):
    s, w = gauss_line(order)
    h, N = grid.h, grid.N
    kernel = robin.surface_kernel
    sgn = 1.0 if Mode(mode) is Mode.REAL_PRIMAL else -1.0
    S = np.zeros((len(basis), len(basis)))
    for na, nb, (nx, ny) in boundary_edges(grid):
        ta, ja = divmod(na, N)
        tb, jb = divmod(nb, N)
        xq = (ja + s * (jb - ja)) * h
        yq = (ta + s * (tb - ta)) * h
        G = np.zeros((len(basis), len(s), 2))
        for i, (k, node) in enumerate(basis):
            t, j = divmod(node, N)
            fx, _ = tent(xq, j * h, h)
            fy, _ = tent(yq, t * h, h)
            v = fx * fy
            if k == 0:
                G[i, :, 0] = v
            else:
                G[i, :, 1] = sgn * v * (nx if k == 1 else ny)
        S += h * np.einsum("q,aqi,ij,bqj->ab", w, G, kernel, G)
    return S
