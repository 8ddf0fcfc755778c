"""Minimization-based finite elements for the complex Helmholtz equation.

The complex problem is split into real and imaginary parts and recast as a
symmetric positive-definite real system in a scalar field and a vector
field, solved with block-preconditioned conjugate gradients.
"""
from .assembly import (BlockSystem, DirichletData, Mode, RobinData, assemble_dirichlet,
                       assemble_robin, brute_force_matrix)
from .grid import Grid, GridError, build_grid, interpolate_nodal
from .linalg import (BlockJacobiPreconditioner, IndefiniteMatrixError, cg, extremal_eigs, ic0,
                     pcg)
from .materials import (CoercivityWarning, MaterialField, NonDissipativeError, check_coercivity,
                        dissipation_tensors, rescale, suggest_rescale)
from .solver import (FieldSolution, SolverOptions, boundary_identity_residual, helmholtz_residual,
                     solve_dirichlet, solve_robin, solve_system)
from .verify import convergence_study, error_components, oracle_fields, vnorm_error

__all__ = [
    "BlockSystem", "DirichletData", "Mode", "RobinData", "assemble_dirichlet", "assemble_robin",
    "brute_force_matrix", "Grid", "GridError", "build_grid", "interpolate_nodal",
    "BlockJacobiPreconditioner", "IndefiniteMatrixError", "cg", "extremal_eigs", "ic0", "pcg",
    "CoercivityWarning", "MaterialField", "NonDissipativeError", "check_coercivity",
    "dissipation_tensors", "rescale", "suggest_rescale", "FieldSolution", "SolverOptions",
    "boundary_identity_residual", "helmholtz_residual", "solve_dirichlet", "solve_robin",
    "solve_system", "convergence_study", "error_components", "oracle_fields", "vnorm_error",
]
