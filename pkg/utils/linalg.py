"""Equality-constrained quadratic minimization: projected preconditioned CG and a direct KKT solve."""

import logging

import numpy as np
import scipy.sparse as sps
from pydantic import BaseModel, ConfigDict
from scipy.sparse.linalg import splu

from utils.constants import SOLVER_DIRECT, SOLVER_MAX_ITERATIONS, SOLVER_PCG, SOLVER_RTOL

LOGGER = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """Raised when a constrained solve does not converge or meets a singular system."""


class SolveReport(BaseModel):
    """Solution of min ½xᵀKx − bᵀx subject to Cx = 0, with convergence data."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    solution: np.ndarray
    iterations: int
    residual: float


# ============================================================================
# Null-space projection
# ============================================================================


class NullSpaceProjector:
    """
    Preconditioned projection onto the null space of a constraint matrix.

    For a residual r, returns z = M⁻¹(r − Cᵀy) where y solves (C M⁻¹ Cᵀ) y = C M⁻¹ r,
    so that C z = 0. The normal-equations matrix is factorized once.
    """

    def __init__(self, constraints: sps.spmatrix, inverse_diagonal: np.ndarray):
        self.constraints = sps.csr_matrix(constraints)
        self.inverse_diagonal = inverse_diagonal
        self._factor = None
        if self.constraints.shape[0] > 0:
            normal = self.constraints @ sps.diags(inverse_diagonal) @ self.constraints.T
            try:
                self._factor = splu(sps.csc_matrix(normal))
            except RuntimeError as exc:
                raise SolverError(f"Constraint matrix is rank deficient: {exc}") from exc

    def multipliers(self, residual: np.ndarray) -> np.ndarray:
        if self._factor is None:
            return np.zeros(0)
        return self._factor.solve(self.constraints @ (self.inverse_diagonal * residual))

    def project(self, residual: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Return (projected preconditioned residual, constrained residual r − Cᵀy)."""
        if self._factor is None:
            return self.inverse_diagonal * residual, residual
        reduced = residual - self.constraints.T @ self.multipliers(residual=residual)
        return self.inverse_diagonal * reduced, reduced

    def restore_feasibility(self, x: np.ndarray) -> np.ndarray:
        """M-orthogonal projection of x onto {Cx = 0}."""
        if self._factor is None:
            return x
        return x - self.inverse_diagonal * (self.constraints.T @ self._factor.solve(self.constraints @ x))


def jacobi_inverse_diagonal(matrix: sps.spmatrix) -> np.ndarray:
    """Inverse of the diagonal of an SPD matrix; zero diagonal entries (pure-kernel dofs) map to 1."""
    diagonal = np.asarray(matrix.diagonal(), dtype=float)
    inverse = np.ones_like(diagonal)
    positive = diagonal > 0.0
    inverse[positive] = 1.0 / diagonal[positive]
    return inverse


# ============================================================================
# Solvers
# ============================================================================


def projected_pcg(
    matrix: sps.spmatrix,
    rhs: np.ndarray,
    constraints: sps.spmatrix,
    rtol: float = SOLVER_RTOL,
    max_iterations: int = SOLVER_MAX_ITERATIONS,
) -> SolveReport:
    """
    Minimize ½xᵀKx − bᵀx subject to Cx = 0 by projected conjugate gradient.

    Diagonal (Jacobi) preconditioner; convergence is measured on the constrained residual
    ‖(Kx − b) − Cᵀy‖ relative to its initial value. All reductions are sequential numpy
    dot products, so repeated solves are bit-identical.
    """
    matrix = sps.csr_matrix(matrix)
    projector = NullSpaceProjector(constraints=constraints, inverse_diagonal=jacobi_inverse_diagonal(matrix=matrix))

    x = np.zeros(matrix.shape[0])
    residual = -np.asarray(rhs, dtype=float)
    z, reduced = projector.project(residual=residual)
    residual = reduced
    initial_norm = float(np.linalg.norm(reduced))
    if initial_norm == 0.0:
        return SolveReport(solution=x, iterations=0, residual=0.0)

    direction = -z
    rz = float(residual @ z)
    relative = 1.0
    for iteration in range(1, max_iterations + 1):
        k_direction = matrix @ direction
        curvature = float(direction @ k_direction)
        if curvature <= 0.0:
            raise SolverError(
                f"Non-positive curvature {curvature:.3e} at iteration {iteration}: system is singular on the "
                "constraint space (missing gauge constraints?)"
            )
        alpha = rz / curvature
        x += alpha * direction
        residual += alpha * k_direction
        z, reduced = projector.project(residual=residual)
        residual = reduced
        relative = float(np.linalg.norm(reduced)) / initial_norm
        if relative <= rtol:
            break
        rz_next = float(residual @ z)
        direction = -z + (rz_next / rz) * direction
        rz = rz_next
    else:
        raise SolverError(f"Projected CG did not converge in {max_iterations} iterations (residual {relative:.3e})")

    LOGGER.debug("Projected CG converged in %d iterations, relative residual %.3e", iteration, relative)
    return SolveReport(solution=projector.restore_feasibility(x=x), iterations=iteration, residual=relative)


def solve_kkt_direct(matrix: sps.spmatrix, rhs: np.ndarray, constraints: sps.spmatrix) -> SolveReport:
    """Solve the saddle-point system [[K, Cᵀ], [C, 0]] [x; y] = [b; 0] by sparse LU."""
    n = matrix.shape[0]
    constraints = sps.csr_matrix(constraints)
    kkt = sps.bmat([[sps.csr_matrix(matrix), constraints.T], [constraints, None]], format="csc")
    full_rhs = np.concatenate([np.asarray(rhs, dtype=float), np.zeros(constraints.shape[0])])
    try:
        solution = splu(kkt).solve(full_rhs)
    except RuntimeError as exc:
        raise SolverError(f"KKT matrix is singular: {exc}") from exc

    x = solution[:n]
    gradient = matrix @ x - rhs + constraints.T @ solution[n:]
    scale = max(float(np.linalg.norm(rhs)), np.finfo(float).tiny)
    return SolveReport(solution=x, iterations=1, residual=float(np.linalg.norm(gradient)) / scale)


def minimize_constrained_quadratic(
    matrix: sps.spmatrix,
    rhs: np.ndarray,
    constraints: sps.spmatrix,
    method: str = SOLVER_PCG,
    rtol: float = SOLVER_RTOL,
    max_iterations: int = SOLVER_MAX_ITERATIONS,
) -> SolveReport:
    """Dispatch to the configured solver."""
    if method == SOLVER_PCG:
        return projected_pcg(matrix=matrix, rhs=rhs, constraints=constraints, rtol=rtol, max_iterations=max_iterations)
    if method == SOLVER_DIRECT:
        return solve_kkt_direct(matrix=matrix, rhs=rhs, constraints=constraints)
    raise ValueError(f"Unknown solver method '{method}', expected '{SOLVER_PCG}' or '{SOLVER_DIRECT}'")
