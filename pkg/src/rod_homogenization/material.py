"""Material laws: elasticity tensors in the orthonormal Voigt basis, quadratic energies and the St. Venant-Kirchhoff density."""

import logging
from collections.abc import Sequence
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator

from utils.constants import SQRT2, SYMMETRY_TOL, VOIGT_SIZE
from utils.models import IsotropicMaterialBlock, MaterialBlock, Matrix6MaterialBlock
from utils.output_helpers import fit_loglog_slope

LOGGER = logging.getLogger(__name__)

# Index pairs of the orthonormal basis B1..B6 of symmetric matrices.
VOIGT_PAIRS = ((0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1))


# ============================================================================
# Voigt Maps
# ============================================================================


def voigt_vector(G: np.ndarray) -> np.ndarray:
    """Coordinates of sym G in the orthonormal basis; |v| equals the Frobenius norm of sym G."""
    G = np.asarray(G, dtype=float)
    sym = 0.5 * (G + np.swapaxes(G, -1, -2))
    return np.stack(
        [
            sym[..., 0, 0],
            sym[..., 1, 1],
            sym[..., 2, 2],
            SQRT2 * sym[..., 1, 2],
            SQRT2 * sym[..., 0, 2],
            SQRT2 * sym[..., 0, 1],
        ],
        axis=-1,
    )


def strain_from_voigt(v: np.ndarray) -> np.ndarray:
    """Symmetric 3×3 matrix with the given orthonormal Voigt coordinates."""
    v = np.asarray(v, dtype=float)
    strain = np.zeros(v.shape[:-1] + (3, 3))
    for k, (i, j) in enumerate(VOIGT_PAIRS):
        value = v[..., k] if i == j else v[..., k] / SQRT2
        strain[..., i, j] = value
        strain[..., j, i] = value
    return strain


# ============================================================================
# Domain Types
# ============================================================================


class ElasticityTensor(BaseModel):
    """Symmetric 6×6 stiffness matrix acting on orthonormal Voigt coordinates of symmetric strains."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    matrix: np.ndarray

    @field_validator("matrix", mode="before")
    @classmethod
    def _validate_matrix(cls, value: Any) -> np.ndarray:
        matrix = np.array(value, dtype=float)
        if matrix.shape != (VOIGT_SIZE, VOIGT_SIZE):
            raise ValueError(f"Elasticity matrix must be 6x6, got shape {matrix.shape}")
        if not np.all(np.isfinite(matrix)):
            raise ValueError("Elasticity matrix contains non-finite entries")
        scale = max(float(np.max(np.abs(matrix))), 1.0)
        asymmetry = float(np.max(np.abs(matrix - matrix.T)))
        if asymmetry > SYMMETRY_TOL * scale:
            raise ValueError(f"Elasticity matrix is not symmetric (max asymmetry {asymmetry:.3e})")
        matrix = 0.5 * (matrix + matrix.T)
        matrix.setflags(write=False)
        return matrix

    def __eq__(self, other: object) -> bool:
        return isinstance(other, ElasticityTensor) and np.array_equal(self.matrix, other.matrix)

    def __hash__(self) -> int:
        return hash(self.matrix.tobytes())


class NonlinearLaw(BaseModel):
    """St. Venant-Kirchhoff parameters."""

    model_config = ConfigDict(frozen=True)

    lame_lambda: float
    lame_mu: float

    @field_validator("lame_mu")
    @classmethod
    def _positive_mu(cls, value: float) -> float:
        if value <= 0.0:
            raise ValueError(f"lame_mu must be positive, got {value}")
        return value

    @field_validator("lame_lambda")
    @classmethod
    def _nonnegative_lambda(cls, value: float) -> float:
        if value < 0.0:
            raise ValueError(f"lame_lambda must be non-negative, got {value}")
        return value

    def quadratic_tensor(self) -> ElasticityTensor:
        """Second-order expansion of the density at the identity."""
        return isotropic_tensor(lame_lambda=self.lame_lambda, lame_mu=self.lame_mu)


# ============================================================================
# Operations
# ============================================================================


def isotropic_tensor(lame_lambda: float, lame_mu: float) -> ElasticityTensor:
    """Operator 2μ·Id + λ·(I⊗I), i.e. Q(G) = μ|sym G|² + (λ/2)(tr G)²."""
    if lame_mu <= 0.0:
        raise ValueError(f"lame_mu must be positive, got {lame_mu}")
    if lame_lambda < 0.0:
        raise ValueError(f"lame_lambda must be non-negative, got {lame_lambda}")
    matrix = 2.0 * lame_mu * np.eye(VOIGT_SIZE)
    matrix[:3, :3] += lame_lambda
    return ElasticityTensor(matrix=matrix)


def young_modulus(lame_lambda: float, lame_mu: float) -> float:
    return lame_mu * (3.0 * lame_lambda + 2.0 * lame_mu) / (lame_lambda + lame_mu)


def quadratic_energy(tensor: ElasticityTensor, G: np.ndarray) -> float:
    """Q(G) = ½ v(sym G)ᵀ 𝔸 v(sym G)."""
    v = voigt_vector(G=G)
    return 0.5 * float(v @ tensor.matrix @ v)


def admissibility_bounds(
    tensor: ElasticityTensor, class_bounds: tuple[float, float] | None = None
) -> tuple[float, float]:
    """
    Extreme eigenvalues (α_est, β_est) of the stiffness matrix.

    Raises ValueError for a tensor that is not positive definite, or whose spectrum
    falls outside caller-supplied class bounds (α, β).
    """
    eigenvalues = np.linalg.eigvalsh(tensor.matrix)
    alpha_est, beta_est = float(eigenvalues[0]), float(eigenvalues[-1])
    if alpha_est <= 0.0:
        raise ValueError(f"Inadmissible material: smallest stiffness eigenvalue {alpha_est:.6g} is not positive")
    if class_bounds is not None:
        alpha, beta = class_bounds
        if alpha_est < alpha or beta_est > beta:
            raise ValueError(
                f"Stiffness spectrum [{alpha_est:.6g}, {beta_est:.6g}] outside admissible class [{alpha}, {beta}]"
            )
    return alpha_est, beta_est


def svk_energy(law: NonlinearLaw, F: np.ndarray) -> float | np.ndarray:
    """(λ/2)(tr E)² + μ|E|² with E = (FᵀF − I)/2; vectorized over leading axes of F."""
    F = np.asarray(F, dtype=float)
    green = 0.5 * (np.swapaxes(F, -1, -2) @ F - np.eye(3))
    trace = np.trace(green, axis1=-2, axis2=-1)
    energy = 0.5 * law.lame_lambda * trace**2 + law.lame_mu * np.sum(green * green, axis=(-2, -1))
    return float(energy) if np.ndim(energy) == 0 else energy


class ExpansionDefect(BaseModel):
    deltas: list[float]
    defects: list[float]
    slope: float | None


def expansion_defect_curve(law: NonlinearLaw, G: np.ndarray, deltas: Sequence[float]) -> ExpansionDefect:
    """Empirical curve |W(I + δG) − Q(δG)| against δ with its fitted log-log slope."""
    tensor = law.quadratic_tensor()
    G = np.asarray(G, dtype=float)
    defects = [
        abs(float(svk_energy(law=law, F=np.eye(3) + delta * G)) - quadratic_energy(tensor=tensor, G=delta * G))
        for delta in deltas
    ]
    slope = fit_loglog_slope(x=list(deltas), y=defects)
    LOGGER.info(f"Expansion defect slope {slope} over {len(deltas)} amplitudes")
    return ExpansionDefect(deltas=list(deltas), defects=[float(d) for d in defects], slope=slope)


# ============================================================================
# JSON Material Block
# ============================================================================


def tensor_from_block(block: MaterialBlock) -> ElasticityTensor:
    if isinstance(block, IsotropicMaterialBlock):
        return isotropic_tensor(lame_lambda=block.lame_lambda, lame_mu=block.lame_mu)
    return ElasticityTensor(matrix=block.rows)


def tensor_to_block(tensor: ElasticityTensor) -> IsotropicMaterialBlock | Matrix6MaterialBlock:
    """Inverse of tensor_from_block: an isotropic block when the matrix is exactly 2μ·Id + λ·(I⊗I)."""
    lame_lambda, lame_mu = float(tensor.matrix[0, 1]), 0.5 * float(tensor.matrix[3, 3])
    if lame_lambda >= 0.0 and lame_mu > 0.0 and tensor == isotropic_tensor(lame_lambda=lame_lambda, lame_mu=lame_mu):
        return IsotropicMaterialBlock(kind="isotropic", lame_lambda=lame_lambda, lame_mu=lame_mu)
    return Matrix6MaterialBlock(kind="matrix6", rows=tensor.matrix.tolist())
