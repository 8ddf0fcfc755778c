"""scikit-learn style wrapper: ``fit`` solves on a grid, ``predict``
evaluates the bilinear interpolant of ``P`` at query points."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .assembly import DirichletData, RobinData
from .grid import build_grid, interpolate_nodal
from .materials import MaterialField
from .solver import SolverOptions, solve_dirichlet, solve_robin


class HelmholtzSolver(BaseEstimator):
    """Minimization solver behind the estimator interface.

    Parameters are plain hyper-parameters (grid size, tolerances); the
    problem itself (material and boundary data) is passed to ``fit``.
    """

    def __init__(self, n_nodes=30, tol=1e-8, preconditioner=True, periodic_x=False,
                 on_indefinite="stop"):
        self.n_nodes = n_nodes
        self.tol = tol
        self.preconditioner = preconditioner
        self.periodic_x = periodic_x
        self.on_indefinite = on_indefinite

    def fit(self, material: MaterialField, boundary):
        """Solve; ``boundary`` is DirichletData or RobinData."""
        opts = SolverOptions(tol=self.tol, preconditioner=self.preconditioner,
                             on_indefinite=self.on_indefinite)
        grid = build_grid(self.n_nodes, periodic_x=self.periodic_x)
        if isinstance(boundary, RobinData):
            self.solution_ = solve_robin(grid, material, boundary, opts)
        elif isinstance(boundary, DirichletData):
            self.solution_ = solve_dirichlet(grid, material, boundary, opts)
        else:
            raise TypeError(f"boundary must be DirichletData or RobinData, got {type(boundary).__name__}")
        self.grid_ = grid
        self.reports_ = self.solution_.reports
        self.converged_ = self.solution_.converged
        return self

    def _interp(self, X, values):
        check_is_fitted(self, "solution_")
        X = check_array(X, dtype=float)
        if X.shape[1] != 2:
            raise ValueError(f"expected (n, 2) points, got shape {X.shape}")
        if np.any((X < 0) | (X > 1)):
            raise ValueError("query points must lie in the unit square")
        return interpolate_nodal(self.grid_, values, X[:, 0], X[:, 1])[0]

    def predict(self, X) -> np.ndarray:
        """Complex ``P`` at the (n, 2) points ``X``."""
        check_is_fitted(self, "solution_")
        return self._interp(X, self.solution_.P)

    def predict_velocity(self, X) -> np.ndarray:
        """Complex ``v`` at ``X``, shape (n, 2)."""
        check_is_fitted(self, "solution_")
        v = self.solution_.v
        return np.column_stack([self._interp(X, v[:, 0]), self._interp(X, v[:, 1])])
