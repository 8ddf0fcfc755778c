"""Complex material coefficients and the real dissipation tensors built from them.

With ``r = -rho^{-1}`` and ``k = 1/kappa`` the minimization functional uses
two real symmetric tensors: ``R`` (4x4) acting on ``(grad P', -omega v'')``
and ``Kk`` (2x2) acting on ``(omega P', -div v'')``.  Both are positive
definite exactly when ``Im(rho) > 0`` and ``Im(kappa) < 0``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np


class DegenerateMaterialError(ValueError):
    pass


class NonDissipativeError(ValueError):
    pass


class CoercivityWarning(UserWarning):
    pass


def _as_rho_matrix(value, shape) -> np.ndarray:
    v = np.asarray(value, dtype=complex)
    if v.shape[-2:] == (2, 2):
        return np.broadcast_to(v, tuple(shape) + (2, 2)).copy()
    v = np.broadcast_to(v, tuple(shape))
    out = np.zeros(tuple(shape) + (2, 2), dtype=complex)
    out[..., 0, 0] = v
    out[..., 1, 1] = v
    return out


@dataclass(frozen=True)
class MaterialField:
    """Density ``rho`` (isotropic scalar or 2x2 complex), bulk modulus ``kappa``.

    ``rho`` and ``kappa`` are either constants or vectorised callables
    ``f(x, y)``.  ``z_scale`` records a complex factor applied by
    :func:`rescale`; the pressure is unchanged by it but the velocity-like
    variable is multiplied by it, so solvers divide it back out.
    """

    rho: object
    kappa: object
    omega: float
    z_scale: complex = 1.0 + 0j
    label: str = field(default="", compare=False)

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError(f"omega must be positive, got {self.omega}")

    @classmethod
    def constant(cls, rho, kappa, omega) -> "MaterialField":
        return cls(rho=complex(rho) if np.ndim(rho) == 0 else np.asarray(rho, complex),
                   kappa=complex(kappa), omega=float(omega))

    @classmethod
    def inclusion(cls, outside: tuple, inside: tuple, region: Callable, omega) -> "MaterialField":
        """Piecewise-constant scene: ``(rho, kappa)`` pairs outside/inside
        ``region(x, y) -> bool array``."""
        rho_o, kap_o = complex(outside[0]), complex(outside[1])
        rho_i, kap_i = complex(inside[0]), complex(inside[1])

        def rho(x, y):
            return np.where(region(x, y), rho_i, rho_o)

        def kappa(x, y):
            return np.where(region(x, y), kap_i, kap_o)

        return cls(rho=rho, kappa=kappa, omega=float(omega))

    @property
    def is_constant(self) -> bool:
        return not (callable(self.rho) or callable(self.kappa))

    def rho_at(self, x, y) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        val = self.rho(x, np.asarray(y, dtype=float)) if callable(self.rho) else self.rho
        return _as_rho_matrix(val, x.shape)

    def kappa_at(self, x, y) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        val = self.kappa(x, np.asarray(y, dtype=float)) if callable(self.kappa) else self.kappa
        return np.broadcast_to(np.asarray(val, dtype=complex), x.shape).copy()

    def r_at(self, x, y) -> np.ndarray:
        """r = -rho^{-1}, shape (..., 2, 2)."""
        rho = self.rho_at(x, y)
        det = rho[..., 0, 0] * rho[..., 1, 1] - rho[..., 0, 1] * rho[..., 1, 0]
        if np.any(det == 0):
            raise DegenerateMaterialError("singular rho")
        inv = np.empty_like(rho)
        inv[..., 0, 0] = rho[..., 1, 1] / det
        inv[..., 1, 1] = rho[..., 0, 0] / det
        inv[..., 0, 1] = -rho[..., 0, 1] / det
        inv[..., 1, 0] = -rho[..., 1, 0] / det
        return -inv

    def k_at(self, x, y) -> np.ndarray:
        kap = self.kappa_at(x, y)
        if np.any(kap == 0):
            raise DegenerateMaterialError("zero kappa")
        return 1.0 / kap


@dataclass(frozen=True)
class DissipationTensors:
    R: np.ndarray  # (..., 4, 4)
    Kk: np.ndarray  # (..., 2, 2)


def _where(x, y) -> str:
    x, y = np.atleast_1d(x), np.atleast_1d(y)
    return f"({float(x.ravel()[0]):.6g}, {float(y.ravel()[0]):.6g})"


def dissipation_tensors(m: MaterialField, x, y) -> DissipationTensors:
    """Vectorised R and Kk at points (x, y)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    r = m.r_at(x, y)
    k = m.k_at(x, y)
    rp, rpp = r.real, r.imag
    det = rpp[..., 0, 0] * rpp[..., 1, 1] - rpp[..., 0, 1] * rpp[..., 1, 0]
    kpp = k.imag
    bad = (det == 0) | (kpp == 0)
    if np.any(bad):
        idx = np.flatnonzero(np.broadcast_to(bad, x.shape))[0]
        raise DegenerateMaterialError(
            f"Im(r) singular or Im(1/kappa) zero at {_where(x.ravel()[idx], y.ravel()[idx])}")
    rpp_inv = np.empty_like(rpp)
    rpp_inv[..., 0, 0] = rpp[..., 1, 1] / det
    rpp_inv[..., 1, 1] = rpp[..., 0, 0] / det
    rpp_inv[..., 0, 1] = -rpp[..., 0, 1] / det
    rpp_inv[..., 1, 0] = -rpp[..., 1, 0] / det
    R = np.empty(x.shape + (4, 4))
    R[..., :2, :2] = rpp + rp @ rpp_inv @ rp
    R[..., :2, 2:] = rp @ rpp_inv
    R[..., 2:, :2] = rpp_inv @ rp
    R[..., 2:, 2:] = rpp_inv
    # rho'' symmetric makes R symmetric in exact arithmetic; remove rounding skew
    R = 0.5 * (R + np.swapaxes(R, -1, -2))
    kp = k.real
    Kk = np.empty(x.shape + (2, 2))
    Kk[..., 0, 0] = kpp + kp**2 / kpp
    Kk[..., 0, 1] = Kk[..., 1, 0] = kp / kpp
    Kk[..., 1, 1] = 1.0 / kpp
    return DissipationTensors(R=R, Kk=Kk)


def dissipation_at(m: MaterialField, x: tuple[float, float]) -> DissipationTensors:
    px, py = float(x[0]), float(x[1])
    t = dissipation_tensors(m, np.array(px), np.array(py))
    return DissipationTensors(R=np.array(t.R), Kk=np.array(t.Kk))


@dataclass(frozen=True)
class CoercivityReport:
    alpha: float
    beta: float

    @property
    def satisfied(self) -> bool:
        return self.alpha > 0 and self.beta > 0


def check_coercivity(m: MaterialField, sample_points, warn: bool = True) -> CoercivityReport:
    """alpha = min eigenvalue of Im(rho), beta = -max Im(kappa) over samples.

    Applies to the rescaled coefficients when ``m`` came from :func:`rescale`.
    """
    pts = np.asarray(sample_points, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        raise ValueError("need at least one sample point")
    rho = m.rho_at(pts[:, 0], pts[:, 1])
    rho_im = 0.5 * (rho.imag + np.swapaxes(rho.imag, -1, -2))
    alpha = float(np.linalg.eigvalsh(rho_im).min())
    beta = float(-m.kappa_at(pts[:, 0], pts[:, 1]).imag.max())
    rep = CoercivityReport(alpha=alpha, beta=beta)
    if warn and not rep.satisfied:
        warnings.warn(
            f"material is not coercive (alpha={alpha:.4g}, beta={beta:.4g}); "
            "the system matrix may be indefinite", CoercivityWarning, stacklevel=2)
    return rep


def default_samples(n: int = 21) -> np.ndarray:
    s = np.linspace(0.0, 1.0, n)
    X, Y = np.meshgrid(s, s)
    return np.column_stack([X.ravel(), Y.ravel()])


def l_block(c: complex) -> np.ndarray:
    """The 2x2 block of L for one diagonal entry c of Z."""
    cp, cpp = c.real, c.imag
    return np.array([[cpp + cp * cp / cpp, cp / cpp],
                     [cp / cpp, 1.0 / cpp]])


def L_eigenvalues_diagonal(c: complex) -> tuple[float, float]:
    """Eigenvalues (ascending) of the L block for a diagonal entry c of Z."""
    c = complex(c)
    cp, cpp = c.real, c.imag
    if not cpp > 0:
        raise NonDissipativeError(f"Im(c) must be positive, got {cpp}")
    # the block has determinant 1 and trace (1 + |c|^2) / c''; this is the
    # a/b root formula with a/b = trace/2, free of the division by c'
    T = (1.0 + cp * cp + cpp * cpp) / cpp
    hi = 0.5 * (T + np.sqrt(max(T * T - 4.0, 0.0)))
    return 1.0 / hi, hi


def z_entries(m: MaterialField, sample_points) -> np.ndarray:
    """Diagonal entries of Z = diag(r, omega^2/kappa) at the samples.

    Requires isotropic (diagonal) rho; off-diagonal rho is outside the
    diagonal-Z analysis."""
    pts = np.asarray(sample_points, dtype=float).reshape(-1, 2)
    r = m.r_at(pts[:, 0], pts[:, 1])
    if np.any(r[..., 0, 1] != 0) or np.any(r[..., 1, 0] != 0):
        raise ValueError("diagonal-Z analysis needs diagonal rho")
    M = m.omega**2 * m.k_at(pts[:, 0], pts[:, 1])
    return np.concatenate([r[..., 0, 0], r[..., 1, 1], M])


def lambda_spread(entries) -> float:
    """max lambda / min lambda over the L blocks; inf when not dissipative."""
    entries = np.asarray(entries, dtype=complex)
    if np.any(entries.imag <= 0):
        return np.inf
    lo, hi = np.inf, 0.0
    for c in np.unique(entries):
        l1, l2 = L_eigenvalues_diagonal(c)
        lo, hi = min(lo, l1), max(hi, l2)
    return hi / lo if lo > 0 else np.inf


def rescale(m: MaterialField, r: float, theta: float) -> MaterialField:
    """Material whose Z is re^{i theta} times that of ``m``."""
    if not r > 0:
        raise ValueError(f"scale r must be positive, got {r}")
    c = r * np.exp(1j * theta)
    if c == 1:
        return m
    rho0, kap0 = m.rho, m.kappa

    def scaled(f):
        if callable(f):
            return lambda x, y: np.asarray(f(x, y)) / c
        return np.asarray(f) / c if np.ndim(f) else complex(f) / c

    out = MaterialField(rho=scaled(rho0), kappa=scaled(kap0), omega=m.omega,
                        z_scale=m.z_scale * c, label=m.label)
    check_coercivity(out, default_samples(11))
    return out


def suggest_rescale(m: MaterialField, sample_points=None, n_theta: int = 360,
                    n_r: int = 41, r_range=(1e-2, 1e2)) -> tuple[float, float]:
    """Grid search for (r, theta) making r e^{i theta} Z closest to iI,
    measured by the spread of the L eigenvalues."""
    if sample_points is None:
        sample_points = default_samples(11)
    z = np.unique(z_entries(m, sample_points))
    best = (np.inf, 1.0, 0.0)
    for theta in np.arange(n_theta) * (2 * np.pi / n_theta):
        for r in np.geomspace(r_range[0], r_range[1], n_r):
            s = lambda_spread(r * np.exp(1j * theta) * z)
            if s < best[0] - 1e-12:
                best = (s, float(r), float(theta))
    return best[1], best[2]
