"""Energy-level verification of the homogenized limit: unfolded corrector strains, scaled energies and h-sweeps."""

import logging
import math
from collections.abc import Sequence
from typing import Any

import numpy as np
from pydantic import BaseModel
from scipy.interpolate import CubicSpline
from scipy.linalg import expm, expm_frechet

from rod_homogenization.cell import AxialSamples, CellProblem, CorrectorField, Regime, RegimeSpec
from rod_homogenization.geometry import CrossSection, MacroStrain, point_basis
from rod_homogenization.material import NonlinearLaw, strain_from_voigt, svk_energy
from rod_homogenization.microstructure import MicrostructureRealization
from rod_homogenization.rod import RodSolution
from utils.constants import CELL_COVER_TOL
from utils.output_helpers import fit_loglog_slope

LOGGER = logging.getLogger(__name__)


class SweepRow(BaseModel):
    h: float
    epsilon: float
    energy: float
    abs_error: float


class SweepResult(BaseModel):
    rows: list[SweepRow]
    limit_value: float
    fitted_rate: float | None

    def to_rows(self) -> np.ndarray:
        return np.array([[row.h, row.epsilon, row.energy, row.abs_error] for row in self.rows])

    def summary(self) -> dict[str, float | None]:
        return {"limit_value": self.limit_value, "fitted_rate": self.fitted_rate}


# ============================================================================
# Helpers
# ============================================================================


def _require_finite_regime(regime: RegimeSpec, corrector: CorrectorField | None = None) -> float:
    if regime.regime != Regime.GAMMA_FINITE or regime.gamma is None:
        raise ValueError(f"Verification is defined for the gamma_finite regime, got {regime.regime.value}")
    if corrector is not None and corrector.regime != Regime.GAMMA_FINITE:
        raise ValueError(f"Corrector was computed in the {corrector.regime.value} regime, expected gamma_finite")
    return regime.gamma


def _problem_for(
    regime: RegimeSpec, cs: CrossSection, micro: MicrostructureRealization, corrector: CorrectorField
) -> CellProblem:
    skew_block = any(name == "psi1" for name, _ in corrector.layout)
    problem = CellProblem(regime=regime, cs=cs, micro=micro, skew_block=skew_block)
    if corrector.layout != problem.layout:
        raise ValueError(f"Corrector layout {corrector.layout} does not match the cell problem layout {problem.layout}")
    if corrector.axial != problem.grid.scheme:
        raise ValueError(f"Corrector uses the {corrector.axial} axial scheme, the cell problem uses {problem.grid.scheme}")
    return problem


def _cell_cover(period: float, epsilon: float, length: float) -> tuple[int, float]:
    """Number of whole unfolded cells in (0, L) and the s-length of the trailing partial cell."""
    if length <= 0.0:
        raise ValueError(f"Rod length must be positive, got {length}")
    ratio = length / (epsilon * period)
    whole = math.floor(ratio + CELL_COVER_TOL)
    rest = (ratio - whole) * period
    return whole, rest if rest > CELL_COVER_TOL * period else 0.0


def unfolded_quadrature(problem: CellProblem, epsilon: float, length: float) -> tuple[np.ndarray, AxialSamples, np.ndarray]:
    """
    Segment-aligned x₁ quadrature on (0, L) for fields unfolded from the cell, x₁ = ε(nT + s).

    Whole cells repeat the cell's sample rule and the trailing partial cell uses the rule cut at
    its end, so every constant-phase piece of x₁ ↦ phase(x₁/ε) is integrated with its own phase.
    Returns (x1, samples, weights) with weights in units of x₁.
    """
    period = problem.grid.period
    whole, rest = _cell_cover(period=period, epsilon=epsilon, length=length)
    parts = [problem.samples] * whole
    if rest > 0.0:
        parts.append(problem.grid.samples(micro=problem.micro, upper=rest))
    samples = AxialSamples.concatenate(parts=parts)
    cells = np.concatenate([np.full(part.size, n) for n, part in enumerate(parts)])
    return epsilon * (cells * period + samples.s), samples, epsilon * period * samples.weights


def _densities(problem: CellProblem, strains: np.ndarray, phases: np.ndarray) -> np.ndarray:
    """Section-integrated quadratic energy density ½εᵀCε of strains (M, P, 6) in the given phases, shape (M,)."""
    tensors = np.stack([tensor.matrix for tensor in problem.micro.spec.phases])[phases]
    return 0.5 * np.einsum("mpi,mij,mpj->mp", strains, tensors, strains) @ problem.quadrature.weights


def _average_density(problem: CellProblem, vector: np.ndarray, ms: MacroStrain, samples: AxialSamples) -> float:
    strains = problem.strain_fields(vectors=vector, macros=ms.vector(), basis=problem.quadrature, axial=samples)[0]
    return float(samples.weights @ _densities(problem=problem, strains=strains, phases=samples.phases))


def _unfolded_energy(problem: CellProblem, vector: np.ndarray, ms: MacroStrain, epsilon: float, length: float) -> float:
    """∫₀ᴸ∫_ω Q(phase(x₁/ε), strain) with whole cells summed as multiples of the cell average."""
    whole, rest = _cell_cover(period=problem.grid.period, epsilon=epsilon, length=length)
    cell_length = epsilon * problem.grid.period
    energy = whole * cell_length * _average_density(problem=problem, vector=vector, ms=ms, samples=problem.samples)
    if rest > 0.0:
        partial = problem.grid.samples(micro=problem.micro, upper=rest)
        energy += cell_length * _average_density(problem=problem, vector=vector, ms=ms, samples=partial)
    return energy


# ============================================================================
# Quadratic Path
# ============================================================================


def unfolded_strain(
    h: float,
    regime: RegimeSpec,
    corrector: CorrectorField,
    ms: MacroStrain,
    x: Sequence[float],
    micro: MicrostructureRealization,
) -> np.ndarray:
    """sym ι(m(x′)) + sym(D₁ϑ¹ | γ⁻¹∇′ϑ¹) at the unfolded coordinate s = x₁/ε, ε = h/γ."""
    gamma = _require_finite_regime(regime=regime, corrector=corrector)
    problem = _problem_for(regime=regime, cs=corrector.section, micro=micro, corrector=corrector)
    epsilon = h / gamma
    s = np.array([math.fmod(x[0] / epsilon, problem.grid.period) % problem.grid.period])
    basis = point_basis(cs=corrector.section, points=np.array([[x[1], x[2]]]))
    voigt = problem.strain_fields(vectors=corrector.vector, macros=ms.vector(), basis=basis, s=s)[0, 0, 0]
    return strain_from_voigt(v=voigt)


def scaled_quadratic_energy(
    h: float,
    regime: RegimeSpec,
    corrector: CorrectorField,
    ms: MacroStrain,
    cs: CrossSection,
    micro: MicrostructureRealization,
    L: float,
) -> float:
    """∫ over (0, L)×ω of Q(x₁/ε, unfolded strain) on the segment-aligned x₁ quadrature."""
    gamma = _require_finite_regime(regime=regime, corrector=corrector)
    problem = _problem_for(regime=regime, cs=cs, micro=micro, corrector=corrector)
    return _unfolded_energy(problem=problem, vector=corrector.vector, ms=ms, epsilon=h / gamma, length=L)


def convergence_sweep(
    h_list: Sequence[float],
    regime: RegimeSpec,
    cs: CrossSection,
    micro: MicrostructureRealization,
    ms: MacroStrain,
    L: float,
    threads: int = 1,
) -> SweepResult:
    """Scaled quadratic energies of the recovery construction against the limit L·Q⁰(ρ, κ)."""
    if not h_list:
        raise ValueError("h_list is empty")
    if any(h <= 0.0 for h in h_list):
        raise ValueError(f"h values must be positive, got {list(h_list)}")
    if any(later >= earlier for earlier, later in zip(h_list, h_list[1:])):
        raise ValueError(f"h_list must be strictly decreasing, got {list(h_list)}")
    gamma = _require_finite_regime(regime=regime)

    problem = CellProblem(regime=regime, cs=cs, micro=micro)
    correctors = problem.unit_correctors(threads=threads)
    form = problem.effective_form_from(correctors=correctors)
    vector = np.column_stack([corrector.vector for corrector in correctors]) @ ms.vector()
    limit_value = L * form.energy(rho=ms.rho, kappa=ms.kappa)

    rows = []
    for h in h_list:
        epsilon = h / gamma
        energy = _unfolded_energy(problem=problem, vector=vector, ms=ms, epsilon=epsilon, length=L)
        rows.append(SweepRow(h=h, epsilon=epsilon, energy=energy, abs_error=abs(energy - limit_value)))
        LOGGER.info(f"h={h:.6g} epsilon={epsilon:.6g}: scaled energy {energy:.12g}, error {rows[-1].abs_error:.3e}")

    fitted_rate = fit_loglog_slope(x=[row.h for row in rows], y=[row.abs_error for row in rows])
    return SweepResult(rows=rows, limit_value=limit_value, fitted_rate=fitted_rate)


# ============================================================================
# Ansatz Energies
# ============================================================================


class _RodFields:
    """Rod fields and the macro strain c = (a, κ) sampled along the axis by cubic splines."""

    def __init__(self, sol: RodSolution):
        grid = sol.grid
        self.length = float(grid[-1])
        self._splines = {
            name: CubicSpline(grid, getattr(sol, name)) for name in ("up", "v2p", "v3p", "w", "wp", "v2pp", "v3pp")
        }
        strain = np.column_stack([sol.up + 0.5 * (sol.v2p**2 + sol.v3p**2), sol.kappa])
        self._strain = CubicSpline(grid, strain, axis=0)
        self._strain_rate = self._strain.derivative()

    def __call__(self, name: str, x1: np.ndarray) -> np.ndarray:
        return self._splines[name](np.clip(x1, 0.0, self.length))

    def strain(self, x1: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        clipped = np.clip(x1, 0.0, self.length)
        return self._strain(clipped), self._strain_rate(clipped)


def _skew(first: np.ndarray, second: np.ndarray, third: np.ndarray) -> np.ndarray:
    """A = [[0, −b, −c], [b, 0, −a], [c, a, 0]] for (a, b, c) = (twist, v₂′, v₃′), batched."""
    zero = np.zeros_like(first)
    return np.stack(
        [
            np.stack([zero, -second, -third], axis=-1),
            np.stack([second, zero, -first], axis=-1),
            np.stack([third, first, zero], axis=-1),
        ],
        axis=-2,
    )


def _section_apply(operator: Any, theta: np.ndarray) -> np.ndarray:
    """Apply a sparse (P, nv) section operator to nodal fields (k, N, nv, 3), giving (k, N, P, 3)."""
    k, nodes, n_vertices, _ = theta.shape
    flat = theta.transpose(2, 0, 1, 3).reshape(n_vertices, -1)
    return (operator @ flat).reshape(-1, k, nodes, 3).transpose(1, 2, 0, 3)


def _unit_problem(
    correctors: Sequence[CorrectorField], cs: CrossSection, micro: MicrostructureRealization, regime: RegimeSpec
) -> tuple[float, CellProblem, np.ndarray]:
    if len(correctors) != 4:
        raise ValueError(f"Expected the four unit correctors, got {len(correctors)}")
    gamma = _require_finite_regime(regime=regime, corrector=correctors[0])
    problem = _problem_for(regime=regime, cs=cs, micro=micro, corrector=correctors[0])
    if [name for name, _ in problem.layout] != ["theta1"]:
        raise ValueError("The ansatz is built from the gamma_finite corrector without the explicit skew block")
    return gamma, problem, np.column_stack([corrector.vector for corrector in correctors])


def ansatz_energy_quadratic(
    h: float,
    sol: RodSolution,
    correctors: Sequence[CorrectorField],
    cs: CrossSection,
    micro: MicrostructureRealization,
    regime: RegimeSpec,
) -> float:
    """∫ Q(x₁/ε, ι(m(x₁)) + corrector strain) with m(x₁) = (a, κ)(x₁) of the rod solution."""
    gamma, problem, vectors = _unit_problem(correctors=correctors, cs=cs, micro=micro, regime=regime)
    x1, samples, weights = unfolded_quadrature(problem=problem, epsilon=h / gamma, length=float(sol.grid[-1]))
    unit = problem.strain_fields(vectors=vectors, macros=np.eye(4), basis=problem.quadrature, axial=samples)  # (4, M, P, 6)
    macro, _ = _RodFields(sol=sol).strain(x1=x1)
    strains = np.einsum("mj,jmpv->mpv", macro, unit)
    return float(weights @ _densities(problem=problem, strains=strains, phases=samples.phases))


def ansatz_energy_nonlinear(
    h: float,
    sol: RodSolution,
    correctors: Sequence[CorrectorField],
    laws: NonlinearLaw | Sequence[NonlinearLaw],
    cs: CrossSection,
    micro: MicrostructureRealization,
    regime: RegimeSpec,
) -> float:
    """
    h⁻⁴ ∫ W(x₁/ε, ∇_h ŷ) for the deformation

        ŷ = (x₁ + h²u, hv₂, hv₃) + hR(x₁)p + h³B(x₁)p + h³γ⁻¹ Σⱼ cⱼ(x₁) χⱼ(x₁/ε, x′)

    with p = (0, x₂, x₃), R = exp(hA), c = (a, κ) and χⱼ the unit correctors; B cancels the
    shear ½w(v₃′, −v₂′) left by the rotation expansion.
    """
    gamma, problem, vectors = _unit_problem(correctors=correctors, cs=cs, micro=micro, regime=regime)
    law_list = [laws] if isinstance(laws, NonlinearLaw) else list(laws)
    if len(law_list) == 1:
        law_list = law_list * problem.micro.spec.n_phases
    if len(law_list) != problem.micro.spec.n_phases:
        raise ValueError(f"Got {len(law_list)} material laws for {problem.micro.spec.n_phases} phases")

    basis = problem.quadrature
    grid = problem.grid
    fields = _RodFields(sol=sol)
    x1, samples, weights = unfolded_quadrature(problem=problem, epsilon=h / gamma, length=float(sol.grid[-1]))
    c, c_rate = fields.strain(x1=x1)

    # unit corrector displacements at the axial nodes, shape (4, N, nv, 3), then at the samples (4, M, P, 3)
    theta = vectors.T.reshape(4, grid.nodes, problem.cs.n_vertices, 3)
    section_chi = _section_apply(operator=basis.values, theta=theta)
    chi = np.einsum("mk,jkpc->jmpc", samples.values, section_chi)
    chi_s = np.einsum("mk,jkpc->jmpc", samples.derivatives, section_chi)
    chi_2 = np.einsum("mk,jkpc->jmpc", samples.values, _section_apply(operator=basis.grad2, theta=theta))
    chi_3 = np.einsum("mk,jkpc->jmpc", samples.values, _section_apply(operator=basis.grad3, theta=theta))

    def corrector_term(field: np.ndarray, coefficients: np.ndarray) -> np.ndarray:
        return np.einsum("mj,jmpc->mpc", coefficients, field)

    v2p, v3p, w = fields("v2p", x1), fields("v3p", x1), fields("w", x1)
    v2pp, v3pp, wp = fields("v2pp", x1), fields("v3pp", x1), fields("wp", x1)
    A = _skew(w, v2p, v3p)
    A_rate = _skew(wp, v2pp, v3pp)
    R = expm(h * A)
    R_rate = np.array([expm_frechet(h * a, h * da, compute_expm=False) for a, da in zip(A, A_rate)])

    p = np.column_stack([np.zeros(basis.n_points), basis.points])
    B = np.zeros_like(A)
    B[:, 0, 1], B[:, 0, 2] = -0.5 * w * v3p, 0.5 * w * v2p
    B_rate = np.zeros_like(A)
    B_rate[:, 0, 1] = -0.5 * (wp * v3p + w * v3pp)
    B_rate[:, 0, 2] = 0.5 * (wp * v2p + w * v2pp)

    axis_rate = np.column_stack([1.0 + h**2 * fields("up", x1), h * v2p, h * v3p])
    column1 = (
        axis_rate[:, None, :]
        + np.einsum("mij,pj->mpi", h * R_rate + h**3 * B_rate, p)
        + h**2 * corrector_term(field=chi_s, coefficients=c)
        + (h**3 / gamma) * corrector_term(field=chi, coefficients=c_rate)
    )
    column2 = (R[:, :, 1] + h**2 * B[:, :, 1])[:, None, :] + (h**2 / gamma) * corrector_term(field=chi_2, coefficients=c)
    column3 = (R[:, :, 2] + h**2 * B[:, :, 2])[:, None, :] + (h**2 / gamma) * corrector_term(field=chi_3, coefficients=c)
    gradient = np.stack([column1, column2, column3], axis=-1)  # (M, P, 3, 3)

    phases = samples.phases
    density = np.zeros(gradient.shape[:2])
    for phase, law in enumerate(law_list):
        mask = phases == phase
        if np.any(mask):
            density[mask] = svk_energy(law=law, F=gradient[mask])
    energy = float(np.sum(weights * (density @ basis.weights))) / h**4
    LOGGER.info(f"Nonlinear ansatz energy at h={h:.6g}: {energy:.12g}")
    return energy
