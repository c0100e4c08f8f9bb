"""Corrector cell problems for the three thickness/oscillation regimes, effective form assembly and Schur reduction."""

import logging
import math
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Any, Literal, Self

import numpy as np
import scipy.sparse as sps
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from rod_homogenization.geometry import (
    CrossSection,
    MacroStrain,
    SectionQuadrature,
    macro_strain_field,
    section_quadrature,
)
from rod_homogenization.microstructure import MicrostructureRealization, MicrostructureSpec, realize
from utils.constants import (
    AXIAL_FOURIER,
    AXIAL_P1,
    GAUSS_OFFSET,
    SOLVER_MAX_ITERATIONS,
    SOLVER_PCG,
    SOLVER_RTOL,
    SQRT2,
    VOIGT_SIZE,
)
from utils.linalg import minimize_constrained_quadratic
from utils.models import RegimeBlock

LOGGER = logging.getLogger(__name__)

# Orthonormal Voigt coordinates of F = (a | b | c) are Ga·a + Gb·b + Gc·c.
_R = 1.0 / SQRT2
COLUMN_MAPS = (
    np.array([[1, 0, 0], [0, 0, 0], [0, 0, 0], [0, 0, 0], [0, 0, _R], [0, _R, 0]], dtype=float),
    np.array([[0, 0, 0], [0, 1, 0], [0, 0, 0], [0, 0, _R], [0, 0, 0], [_R, 0, 0]], dtype=float),
    np.array([[0, 0, 0], [0, 0, 0], [0, 0, 1], [0, _R, 0], [_R, 0, 0], [0, 0, 0]], dtype=float),
)


class Regime(Enum):
    """
    Relation between thickness h and oscillation length ε (γ = lim h/ε).

    Attributes:
        value: config identifier
        display_name: human-readable name
    """

    GAMMA_ZERO = ("gamma_zero", "γ = 0")
    GAMMA_FINITE = ("gamma_finite", "0 < γ < ∞")
    GAMMA_INFINITE = ("gamma_infinite", "γ = ∞")

    def __init__(self, value: str, display_name: str):
        self._value_ = value
        self.display_name = display_name


# ============================================================================
# Domain Types
# ============================================================================


class RegimeSpec(BaseModel):
    """Regime plus axial discretization: N axial nodes of the Fourier or P1 scheme on the periodic cell or an RVE window."""

    model_config = ConfigDict(frozen=True)

    regime: Regime
    gamma: float | None = None
    nodes: int = Field(default=8, ge=2)
    window: float | None = Field(default=None, gt=0.0)
    axial: Literal["fourier", "p1"] | None = None

    @model_validator(mode="after")
    def _gamma_matches_regime(self) -> Self:
        if self.regime == Regime.GAMMA_FINITE and (self.gamma is None or self.gamma <= 0.0):
            raise ValueError(f"gamma_finite regime requires gamma > 0, got {self.gamma}")
        if self.regime != Regime.GAMMA_FINITE and self.gamma is not None:
            raise ValueError(f"{self.regime.value} regime takes no gamma")
        return self

    @classmethod
    def from_block(cls, block: RegimeBlock) -> "RegimeSpec":
        return cls(
            regime=Regime(block.regime), gamma=block.gamma, nodes=block.nodes, window=block.window, axial=block.axial
        )

    def cell_length(self, micro: MicrostructureRealization) -> float:
        """Axial length of the cell: the exact period, or the RVE window for aperiodic layouts."""
        if micro.period is None:
            if self.window is None:
                raise ValueError(f"{micro.spec.kind.value} microstructure requires an RVE window length")
            return self.window
        if self.window is None:
            return micro.period
        if not math.isclose(self.window / micro.period, round(self.window / micro.period)):
            LOGGER.warning(f"RVE window {self.window} is not a multiple of the period {micro.period}")
        return self.window

    def axial_scheme(self, micro: MicrostructureRealization) -> str:
        """Configured axial scheme, else Fourier collocation on exact periods and P1 on RVE windows."""
        if self.axial is not None:
            return self.axial
        return AXIAL_FOURIER if micro.period is not None else AXIAL_P1


class CorrectorField(BaseModel):
    """
    Discrete corrector for one macro strain.

    gamma_finite: theta1 (N, nv, 3), plus psi1 (N, 3) when the explicit skew block is enabled.
    gamma_zero: psi1 (N, 3) axial vectors of Ψ¹, theta1 (N, 3), theta2 (N, nv, 3).
    gamma_infinite: theta1 (N, nv, 3), theta2 (nv, 3) axially constant.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    regime: Regime
    gamma: float | None
    period: float
    axial: str = AXIAL_FOURIER
    section: CrossSection
    macro_strain: MacroStrain
    layout: list[tuple[str, tuple[int, ...]]]
    vector: np.ndarray
    iterations: int = 0
    residual: float = 0.0

    @model_validator(mode="after")
    def _vector_matches_layout(self) -> Self:
        expected = sum(math.prod(shape) for _, shape in self.layout)
        if self.vector.shape != (expected,):
            raise ValueError(f"corrector vector has shape {self.vector.shape}, layout needs ({expected},)")
        return self

    @property
    def fields(self) -> dict[str, np.ndarray]:
        fields, offset = {}, 0
        for name, shape in self.layout:
            size = math.prod(shape)
            fields[name] = self.vector[offset : offset + size].reshape(shape)
            offset += size
        return fields

    @property
    def nodes(self) -> int:
        return self.layout[0][1][0]

    def with_vector(self, vector: np.ndarray) -> "CorrectorField":
        return self.model_copy(update={"vector": np.asarray(vector, dtype=float)})


class EffectiveForm(BaseModel):
    """Q⁰(ρ, κ) = ½ vᵀ a0 v with v = (ρ, κ₁, κ₂, κ₃); Q⁰₁(κ) = ½ κᵀ a0_1 κ; ρ₀(κ) = rho0_coeffs·κ."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    a0: np.ndarray
    a0_1: np.ndarray
    rho0_coeffs: np.ndarray
    residuals: list[float] = Field(default_factory=list)
    iterations: list[int] = Field(default_factory=list)
    mesh_stats: dict[str, int] = Field(default_factory=dict)

    @field_validator("a0", mode="before")
    @classmethod
    def _spd(cls, value: Any) -> np.ndarray:
        a0 = np.array(value, dtype=float)
        if a0.shape != (4, 4):
            raise ValueError(f"a0 must be 4x4, got shape {a0.shape}")
        if not np.allclose(a0, a0.T, rtol=0.0, atol=1e-12 * max(1.0, float(np.max(np.abs(a0))))):
            raise ValueError("a0 is not symmetric")
        smallest = float(np.linalg.eigvalsh(a0)[0])
        if smallest <= 0.0:
            raise ValueError(f"a0 is not positive definite (smallest eigenvalue {smallest:.6g})")
        return a0

    @field_validator("a0_1", mode="before")
    @classmethod
    def _three_by_three(cls, value: Any) -> np.ndarray:
        a0_1 = np.array(value, dtype=float)
        if a0_1.shape != (3, 3):
            raise ValueError(f"a0_1 must be 3x3, got shape {a0_1.shape}")
        return a0_1

    @field_validator("rho0_coeffs", mode="before")
    @classmethod
    def _three_vector(cls, value: Any) -> np.ndarray:
        coeffs = np.array(value, dtype=float)
        if coeffs.shape != (3,):
            raise ValueError(f"rho0_coeffs must have 3 entries, got shape {coeffs.shape}")
        return coeffs

    @classmethod
    def from_a0(cls, a0: np.ndarray, **extra: Any) -> "EffectiveForm":
        a0_1, rho0_coeffs = reduce_form(a0=a0)
        return cls(a0=a0, a0_1=a0_1, rho0_coeffs=rho0_coeffs, **extra)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "EffectiveForm":
        """Inverse of to_dict; missing a0_1 / rho0 are recomputed from a0."""
        if data.get("a0_1") is None or data.get("rho0") is None:
            return cls.from_a0(a0=np.array(data["a0"], dtype=float))
        return cls(a0=data["a0"], a0_1=data["a0_1"], rho0_coeffs=data["rho0"])

    def to_dict(self) -> dict[str, Any]:
        return {
            "a0": self.a0.tolist(),
            "a0_1": self.a0_1.tolist(),
            "rho0": self.rho0_coeffs.tolist(),
            "residuals": list(self.residuals),
            "iterations": list(self.iterations),
            "mesh_stats": dict(self.mesh_stats),
        }

    def energy(self, rho: float, kappa: Sequence[float]) -> float:
        v = np.array([rho, *kappa])
        return 0.5 * float(v @ self.a0 @ v)

    def reduced_energy(self, kappa: Sequence[float]) -> float:
        k = np.asarray(kappa, dtype=float)
        return 0.5 * float(k @ self.a0_1 @ k)

    def rho0(self, kappa: np.ndarray) -> np.ndarray | float:
        """Optimal stretch ρ₀(κ); vectorized over leading axes of kappa."""
        return np.asarray(kappa, dtype=float) @ self.rho0_coeffs


def reduce_form(a0: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Schur complement of the stretch entry: a0_1 = C − bbᵀ/a, rho0_coeffs = −b/a."""
    a0 = np.asarray(a0, dtype=float)
    if a0.shape != (4, 4):
        raise ValueError(f"a0 must be 4x4, got shape {a0.shape}")
    a = float(a0[0, 0])
    if a <= 0.0:
        raise ValueError(f"Coercivity failure: stretch stiffness a0[0,0] = {a} is not positive")
    b, C = a0[1:, 0], a0[1:, 1:]
    return C - np.outer(b, b) / a, -b / a


# ============================================================================
# Axial Grid
# ============================================================================


@dataclass(frozen=True)
class AxialSamples:
    """
    Axial quadrature points of the cell with the phase seen at each.

    weights are fractions of the cell length T (a whole cell sums to 1); values and
    derivatives map the N nodal axial dofs to the field and its s-derivative at the points.
    """

    s: np.ndarray
    weights: np.ndarray
    phases: np.ndarray
    values: np.ndarray
    derivatives: np.ndarray

    @property
    def size(self) -> int:
        return len(self.s)

    @classmethod
    def concatenate(cls, parts: Sequence["AxialSamples"]) -> "AxialSamples":
        return cls(
            s=np.concatenate([part.s for part in parts]),
            weights=np.concatenate([part.weights for part in parts]),
            phases=np.concatenate([part.phases for part in parts]),
            values=np.vstack([part.values for part in parts]),
            derivatives=np.vstack([part.derivatives for part in parts]),
        )


def spectral_derivative(nodes: int, period: float) -> np.ndarray:
    """Fourier collocation derivative on nodes s_k = T(k + ½)/N; the Nyquist mode is differentiated to zero."""
    offsets = np.subtract.outer(np.arange(nodes), np.arange(nodes))
    angle = math.pi * offsets / nodes
    sign = np.where(offsets % 2 == 0, 1.0, -1.0)
    off_diagonal = offsets % nodes != 0
    if nodes % 2 == 0:
        off_diagonal &= offsets % nodes != nodes // 2
    derivative = np.zeros((nodes, nodes))
    with np.errstate(divide="ignore", invalid="ignore"):
        kernel = np.cos(angle) / np.sin(angle) if nodes % 2 == 0 else 1.0 / np.sin(angle)
    derivative[off_diagonal] = (math.pi / period) * (sign * kernel)[off_diagonal]
    return derivative


class _AxialScheme:
    """N nodal dofs on the periodic axial cell [0, T) split into N elements [kT/N, (k+1)T/N)."""

    scheme: str

    def __init__(self, nodes: int, period: float):
        self.nodes = nodes
        self.period = period
        self.step = period / nodes

    def kernel_modes(self) -> np.ndarray:
        return np.ones((1, self.nodes))

    def interpolation(self, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def _piece_rule(self, starts: np.ndarray, ends: np.ndarray, elements: np.ndarray) -> tuple[np.ndarray, ...]:
        """(points, weights, piece index, values, derivatives) of the rule on each constant-phase piece."""
        raise NotImplementedError

    def pieces(self, micro: MicrostructureRealization, upper: float | None = None) -> tuple[np.ndarray, ...]:
        """(starts, ends, element, phase) of [0, upper) cut at the element edges and the phase boundaries."""
        upper = self.period if upper is None else min(upper, self.period)
        edges = self.step * np.arange(1, self.nodes)
        cuts = np.unique(np.concatenate([[0.0, upper], edges[edges < upper], micro.boundaries(a=0.0, b=upper)]))
        starts, ends = cuts[:-1], cuts[1:]
        middles = 0.5 * (starts + ends)
        elements = np.minimum((middles / self.step).astype(np.int64), self.nodes - 1)
        return starts, ends, elements, np.asarray(micro.phase_at(middles), dtype=np.int64).reshape(-1)

    def samples(self, micro: MicrostructureRealization, upper: float | None = None) -> AxialSamples:
        """Segment-aligned rule on [0, upper): every constant-phase piece carries its true phase."""
        starts, ends, elements, phases = self.pieces(micro=micro, upper=upper)
        points, weights, piece, values, derivatives = self._piece_rule(starts=starts, ends=ends, elements=elements)
        return AxialSamples(s=points, weights=weights, phases=phases[piece], values=values, derivatives=derivatives)

    def at(self, s: np.ndarray, micro: MicrostructureRealization | None = None) -> AxialSamples:
        """Pointwise evaluation at s wrapped into the cell; the points carry no weight."""
        wrapped = np.mod(np.asarray(s, dtype=float).reshape(-1), self.period)
        values, derivatives = self.interpolation(s=wrapped)
        phases = np.zeros(len(wrapped), dtype=np.int64) if micro is None else np.asarray(micro.phase_at(wrapped)).reshape(-1)
        return AxialSamples(
            s=wrapped, weights=np.zeros(len(wrapped)), phases=phases, values=values, derivatives=derivatives
        )


class AxialGrid(_AxialScheme):
    """
    Fourier collocation on the cell-centred nodes s_k = T(k + ½)/N of the periodic axial cell.

    Node k owns the element [kT/N, (k+1)T/N); the cell functional samples the strain at the
    owning node on each constant-phase piece of that element, weighted by the piece length.
    """

    scheme = AXIAL_FOURIER

    def __init__(self, nodes: int, period: float):
        super().__init__(nodes=nodes, period=period)
        self.points = period * (np.arange(nodes) + 0.5) / nodes
        self.derivative = spectral_derivative(nodes=nodes, period=period)

    def kernel_modes(self) -> np.ndarray:
        """Nodal vectors annihilated by the derivative: constant and, for even N, alternating."""
        modes = [np.ones(self.nodes)]
        if self.nodes % 2 == 0:
            modes.append(np.where(np.arange(self.nodes) % 2 == 0, 1.0, -1.0))
        return np.array(modes)

    def interpolation(self, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Trigonometric interpolation weights (values, derivatives), each of shape (len(s), N)."""
        shifted = np.asarray(s, dtype=float) - self.points[0]
        wavenumbers = np.fft.fftfreq(self.nodes, d=1.0 / self.nodes)
        phase = (2.0 * math.pi / self.period) * (
            shifted[:, None, None] - self.period * np.arange(self.nodes)[None, :, None] / self.nodes
        ) * wavenumbers[None, None, :]
        values = np.cos(phase).sum(axis=-1) / self.nodes
        derivatives = -(np.sin(phase) * (2.0 * math.pi * wavenumbers / self.period)).sum(axis=-1) / self.nodes
        return values, derivatives

    def _piece_rule(self, starts: np.ndarray, ends: np.ndarray, elements: np.ndarray) -> tuple[np.ndarray, ...]:
        return (
            self.points[elements],
            (ends - starts) / self.period,
            np.arange(len(starts)),
            np.eye(self.nodes)[elements],
            self.derivative[elements],
        )


class LinearAxialGrid(_AxialScheme):
    """
    Periodic P1 elements with vertices s_k = kT/N; the last element wraps to s_0.

    Strains are linear on every constant-phase piece, so two Gauss points per piece
    integrate the cell functional exactly.
    """

    scheme = AXIAL_P1

    def __init__(self, nodes: int, period: float):
        super().__init__(nodes=nodes, period=period)
        self.points = self.step * np.arange(nodes)

    def interpolation(self, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        position = np.mod(np.asarray(s, dtype=float).reshape(-1), self.period) / self.step
        left = np.minimum(position.astype(np.int64), self.nodes - 1)
        right = (left + 1) % self.nodes
        local = position - left
        rows = np.arange(len(position))
        values = np.zeros((len(position), self.nodes))
        derivatives = np.zeros((len(position), self.nodes))
        values[rows, left] = 1.0 - local
        values[rows, right] += local
        derivatives[rows, left] = -1.0 / self.step
        derivatives[rows, right] += 1.0 / self.step
        return values, derivatives

    def _piece_rule(self, starts: np.ndarray, ends: np.ndarray, elements: np.ndarray) -> tuple[np.ndarray, ...]:
        middles, halves = 0.5 * (starts + ends), 0.5 * (ends - starts)
        points = np.column_stack([middles - GAUSS_OFFSET * halves, middles + GAUSS_OFFSET * halves]).ravel()
        values, derivatives = self.interpolation(s=points)
        return points, np.repeat(halves / self.period, 2), np.repeat(np.arange(len(starts)), 2), values, derivatives


def make_axial_grid(scheme: str, nodes: int, period: float) -> AxialGrid | LinearAxialGrid:
    if scheme == AXIAL_FOURIER:
        return AxialGrid(nodes=nodes, period=period)
    if scheme == AXIAL_P1:
        return LinearAxialGrid(nodes=nodes, period=period)
    raise ValueError(f"Unknown axial scheme '{scheme}', expected '{AXIAL_FOURIER}' or '{AXIAL_P1}'")


# ============================================================================
# Discretization Blocks
# ============================================================================


@dataclass(frozen=True)
class _Term:
    """One contribution (axial operator ⊗ section operator) of a block to the Voigt strain."""

    axial: str  # "derivative" | "value" | "constant"
    section: str  # "value" | "gradient" | "skew" | "uniform"
    scale: float = 1.0


@dataclass(frozen=True)
class _Block:
    name: str
    shape: tuple[int, ...]
    n_axial: int
    terms: tuple[_Term, ...]

    @property
    def size(self) -> int:
        return math.prod(self.shape)

    @property
    def n_section(self) -> int:
        return self.size // self.n_axial


def _regime_blocks(regime: RegimeSpec, n_vertices: int, skew_block: bool) -> list[_Block]:
    N, nv = regime.nodes, n_vertices
    match regime.regime:
        case Regime.GAMMA_FINITE:
            gamma = float(regime.gamma or 1.0)
            blocks = [
                _Block(
                    name="theta1",
                    shape=(N, nv, 3),
                    n_axial=N,
                    terms=(_Term(axial="derivative", section="value"), _Term(axial="value", section="gradient", scale=1.0 / gamma)),
                )
            ]
            if skew_block:
                blocks.append(_Block(name="psi1", shape=(N, 3), n_axial=N, terms=(_Term(axial="derivative", section="skew"),)))
            return blocks
        case Regime.GAMMA_ZERO:
            return [
                _Block(name="psi1", shape=(N, 3), n_axial=N, terms=(_Term(axial="derivative", section="skew"),)),
                _Block(name="theta1", shape=(N, 3), n_axial=N, terms=(_Term(axial="derivative", section="uniform"),)),
                _Block(name="theta2", shape=(N, nv, 3), n_axial=N, terms=(_Term(axial="value", section="gradient"),)),
            ]
        case Regime.GAMMA_INFINITE:
            return [
                _Block(name="theta1", shape=(N, nv, 3), n_axial=N, terms=(_Term(axial="derivative", section="value"),)),
                _Block(name="theta2", shape=(nv, 3), n_axial=1, terms=(_Term(axial="constant", section="gradient"),)),
            ]
    raise ValueError(f"Unknown regime {regime.regime}")


def _section_operator(kind: str, basis: SectionQuadrature) -> sps.csr_matrix:
    """Map from a block's section dofs to stacked Voigt strains at the basis points (6P × n_section)."""
    Ga, Gb, Gc = COLUMN_MAPS
    match kind:
        case "value":
            return sps.kron(basis.values, Ga, format="csr")
        case "gradient":
            return (sps.kron(basis.grad2, Gb) + sps.kron(basis.grad3, Gc)).tocsr()
        case "uniform":
            return sps.kron(np.ones((basis.n_points, 1)), Ga, format="csr")
        case "skew":
            x2, x3 = basis.points[:, 0], basis.points[:, 1]
            zero = np.zeros_like(x2)
            # ∂(Ψp)/∂ψ: columns ψ₁, ψ₂, ψ₃ of Ψp = (−ψ₃x₂ + ψ₂x₃, −ψ₁x₃, ψ₁x₂)
            jacobian = np.stack(
                [np.stack([zero, x3, -x2], axis=-1), np.stack([-x3, zero, zero], axis=-1), np.stack([x2, zero, zero], axis=-1)],
                axis=1,
            )
            return sps.csr_matrix(np.einsum("rc,qcj->qrj", Ga, jacobian).reshape(VOIGT_SIZE * basis.n_points, 3))
    raise ValueError(f"Unknown section operator '{kind}'")


def _axial_operator(kind: str, samples: AxialSamples) -> np.ndarray:
    """Map from a block's axial dofs to the axial sample points."""
    if kind == "constant":
        return np.ones((samples.size, 1))
    return samples.derivatives if kind == "derivative" else samples.values


def _gauge_matrix(basis: SectionQuadrature, n_vertices: int) -> sps.csr_matrix:
    """Section functionals ∫ϑᵢ (i = 1, 2, 3) and ∫(x₂ϑ₃ − x₃ϑ₂) on P1 fields with dofs (vertex, component)."""
    integrals = basis.values.T @ basis.weights
    x2_moments = basis.values.T @ (basis.weights * basis.points[:, 0])
    x3_moments = basis.values.T @ (basis.weights * basis.points[:, 1])
    gauge = np.zeros((4, n_vertices, 3))
    for component in range(3):
        gauge[component, :, component] = integrals
    gauge[3, :, 2] = x2_moments
    gauge[3, :, 1] = -x3_moments
    return sps.csr_matrix(gauge.reshape(4, 3 * n_vertices))


def _unit_rows(size: int, indices: Sequence[int]) -> sps.csr_matrix:
    return sps.csr_matrix(np.eye(size)[list(indices)])


# ============================================================================
# Cell Problem
# ============================================================================


class CellProblem:
    """
    Assembled discrete cell functional for one (regime, section, microstructure).

    The averaged energy of the strain ι(m) + corrector strain is
    ½xᵀKx + (G v)ᵀx + ½vᵀMv for corrector dofs x and macro strain v = (ρ, κ);
    gauge constraints Cx = 0 remove exactly the strain-free kernel.
    """

    def __init__(
        self,
        regime: RegimeSpec,
        cs: CrossSection,
        micro: MicrostructureRealization,
        skew_block: bool = False,
        method: str = SOLVER_PCG,
        rtol: float = SOLVER_RTOL,
        max_iterations: int = SOLVER_MAX_ITERATIONS,
    ):
        if skew_block and regime.regime != Regime.GAMMA_FINITE:
            raise ValueError("The explicit skew block is only defined for the gamma_finite regime")
        self.regime = regime
        self.cs = cs
        self.micro = micro
        self.method = method
        self.rtol = rtol
        self.max_iterations = max_iterations
        self.grid = make_axial_grid(
            scheme=regime.axial_scheme(micro=micro), nodes=regime.nodes, period=regime.cell_length(micro=micro)
        )
        self.quadrature = section_quadrature(cs=cs)
        self.blocks = _regime_blocks(regime=regime, n_vertices=cs.n_vertices, skew_block=skew_block)

    @cached_property
    def samples(self) -> AxialSamples:
        """Segment-aligned axial rule of the cell functional."""
        return self.grid.samples(micro=self.micro)

    @cached_property
    def _system(self) -> tuple[sps.csr_matrix, np.ndarray, np.ndarray]:
        system = self._assemble()
        LOGGER.info(
            f"Assembled {self.regime.regime.value} cell problem: {self.n_dofs} dofs, {self.regime.nodes} axial nodes, "
            f"{self.cs.n_triangles} triangles"
        )
        return system

    @property
    def matrix(self) -> sps.csr_matrix:
        return self._system[0]

    @property
    def loads(self) -> np.ndarray:
        return self._system[1]

    @property
    def macro_gram(self) -> np.ndarray:
        return self._system[2]

    @cached_property
    def constraints(self) -> sps.csr_matrix:
        return self._constraints()

    def assemble(self) -> None:
        """Build the system and constraints eagerly, e.g. before sharing the problem across threads."""
        _ = (self.samples, self._system, self.constraints)

    @property
    def n_dofs(self) -> int:
        return sum(block.size for block in self.blocks)

    @property
    def layout(self) -> list[tuple[str, tuple[int, ...]]]:
        return [(block.name, block.shape) for block in self.blocks]

    def mesh_stats(self) -> dict[str, int]:
        return {
            "vertices": self.cs.n_vertices,
            "triangles": self.cs.n_triangles,
            "axial_nodes": self.grid.nodes,
            "axial_samples": self.samples.size,
            "dofs": self.n_dofs,
            "constraints": int(self.constraints.shape[0]),
        }

    # ------------------------------------------------------------------------
    # Assembly
    # ------------------------------------------------------------------------

    def _macro_voigt(self, basis: SectionQuadrature) -> np.ndarray:
        """Stacked Voigt strains of ι(m) for the four unit macro strains, shape (6P, 4)."""
        Ga = COLUMN_MAPS[0]
        columns = []
        for index in range(4):
            field = macro_strain_field(ms=MacroStrain.unit(index=index), xp=basis.points)
            columns.append((field @ Ga.T).ravel())
        return np.column_stack(columns)

    def _assemble(self) -> tuple[sps.csr_matrix, np.ndarray, np.ndarray]:
        basis = self.quadrature
        samples = self.samples
        macro = self._macro_voigt(basis=basis)
        section_ops = {term.section: _section_operator(kind=term.section, basis=basis) for b in self.blocks for term in b.terms}
        axial_ops = {term.axial: _axial_operator(kind=term.axial, samples=samples) for b in self.blocks for term in b.terms}

        blocks_k: list[list[sps.csr_matrix | None]] = [[None] * len(self.blocks) for _ in self.blocks]
        loads = [np.zeros((block.size, 4)) for block in self.blocks]
        gram = np.zeros((4, 4))
        for phase in np.unique(samples.phases):
            tensor = self.micro.spec.phases[phase].matrix
            stiffness = sps.kron(sps.diags(basis.weights), tensor, format="csr")
            mask = np.where(samples.phases == phase, samples.weights, 0.0)
            gram += mask.sum() * (macro.T @ (stiffness @ macro))
            weighted = {kind: stiffness @ op for kind, op in section_ops.items()}
            for i, row_block in enumerate(self.blocks):
                for t in row_block.terms:
                    left_axial = axial_ops[t.axial]
                    left_section = section_ops[t.section]
                    loads[i] += t.scale * np.kron((left_axial.T @ mask)[:, None], left_section.T @ (stiffness @ macro))
                    for j, col_block in enumerate(self.blocks):
                        for u in col_block.terms:
                            axial = sps.csr_matrix(left_axial.T @ (mask[:, None] * axial_ops[u.axial]))
                            axial.eliminate_zeros()
                            if axial.nnz == 0:
                                continue
                            section = (left_section.T @ weighted[u.section]).tocsr()
                            contribution = (t.scale * u.scale) * sps.kron(axial, section, format="csr")
                            blocks_k[i][j] = contribution if blocks_k[i][j] is None else blocks_k[i][j] + contribution

        sizes = [block.size for block in self.blocks]
        for i, size in enumerate(sizes):
            if blocks_k[i][i] is None:
                blocks_k[i][i] = sps.csr_matrix((size, size))
        matrix = sps.bmat(blocks_k, format="csr")
        matrix = (0.5 * (matrix + matrix.T)).tocsr()
        return matrix, np.vstack(loads), 0.5 * (gram + gram.T)

    def _constraints(self) -> sps.csr_matrix:
        gauge = _gauge_matrix(basis=self.quadrature, n_vertices=self.cs.n_vertices)
        modes = sps.csr_matrix(self.grid.kernel_modes())
        identity_nodes = sps.identity(self.grid.nodes, format="csr")
        rows = []
        for index, block in enumerate(self.blocks):
            match (self.regime.regime, block.name):
                case (Regime.GAMMA_FINITE, "theta1"):
                    local = sps.kron(modes, gauge)
                case (_, "psi1"):
                    local = sps.kron(modes, sps.identity(3))
                case (Regime.GAMMA_ZERO, "theta1"):
                    # transverse components are absorbed by theta2 (ϑ²₁ = −D₁ϑ¹₂x₂ − D₁ϑ¹₃x₃)
                    local = sps.vstack(
                        [sps.kron(modes, _unit_rows(3, [0])), sps.kron(identity_nodes, _unit_rows(3, [1, 2]))]
                    )
                case (Regime.GAMMA_ZERO, "theta2"):
                    local = sps.kron(identity_nodes, gauge)
                case (Regime.GAMMA_INFINITE, "theta1"):
                    local = sps.kron(modes, sps.identity(3 * self.cs.n_vertices))
                case (Regime.GAMMA_INFINITE, "theta2"):
                    local = gauge
                case _:
                    raise ValueError(f"No gauge rule for block '{block.name}' in {self.regime.regime.value}")
            padding = [sps.csr_matrix((local.shape[0], other.size)) for other in self.blocks]
            padding[index] = sps.csr_matrix(local)
            rows.append(sps.hstack(padding))
        return sps.vstack(rows, format="csr")

    # ------------------------------------------------------------------------
    # Energies and solves
    # ------------------------------------------------------------------------

    def energy(self, vector: np.ndarray, ms: MacroStrain) -> float:
        macro = ms.vector()
        x = np.asarray(vector, dtype=float)
        if x.shape != (self.n_dofs,):
            raise ValueError(f"Corrector has {x.shape} dofs, cell problem expects ({self.n_dofs},)")
        return 0.5 * float(x @ (self.matrix @ x)) + float((self.loads @ macro) @ x) + 0.5 * float(macro @ self.macro_gram @ macro)

    def solve_vector(self, macro: np.ndarray) -> tuple[np.ndarray, int, float]:
        report = minimize_constrained_quadratic(
            matrix=self.matrix,
            rhs=-(self.loads @ macro),
            constraints=self.constraints,
            method=self.method,
            rtol=self.rtol,
            max_iterations=self.max_iterations,
        )
        return report.solution, report.iterations, report.residual

    def corrector(self, vector: np.ndarray, ms: MacroStrain, iterations: int = 0, residual: float = 0.0) -> CorrectorField:
        return CorrectorField(
            regime=self.regime.regime,
            gamma=self.regime.gamma,
            period=self.grid.period,
            axial=self.grid.scheme,
            section=self.cs,
            macro_strain=ms,
            layout=self.layout,
            vector=np.asarray(vector, dtype=float),
            iterations=iterations,
            residual=residual,
        )

    def solve(self, ms: MacroStrain) -> CorrectorField:
        vector, iterations, residual = self.solve_vector(macro=ms.vector())
        LOGGER.info(f"Corrector for {ms.vector().tolist()}: {iterations} iterations, relative residual {residual:.3e}")
        return self.corrector(vector=vector, ms=ms, iterations=iterations, residual=residual)

    def unit_correctors(self, threads: int = 1) -> list[CorrectorField]:
        """Correctors of e_ρ, e_κ₁, e_κ₂, e_κ₃, solved concurrently; results keep that order."""
        self.assemble()
        with ThreadPoolExecutor(max_workers=max(1, threads)) as executor:
            return list(executor.map(lambda index: self.solve(ms=MacroStrain.unit(index=index)), range(4)))

    def effective_form(self, threads: int = 1) -> EffectiveForm:
        correctors = self.unit_correctors(threads=threads)
        return self.effective_form_from(correctors=correctors)

    def effective_form_from(self, correctors: Sequence[CorrectorField]) -> EffectiveForm:
        """a0_ij = energy bilinear form of (macro + corrector) pairs for the unit strains."""
        X = np.column_stack([corrector.vector for corrector in correctors])
        a0 = X.T @ (self.matrix @ X) + X.T @ self.loads + self.loads.T @ X + self.macro_gram
        asymmetry = float(np.max(np.abs(a0 - a0.T)))
        if asymmetry > 1e-12 * float(np.max(np.abs(a0))):
            LOGGER.warning(f"Symmetrizing effective form with asymmetry {asymmetry:.3e}")
        a0 = 0.5 * (a0 + a0.T)
        form = EffectiveForm.from_a0(
            a0=a0,
            residuals=[corrector.residual for corrector in correctors],
            iterations=[corrector.iterations for corrector in correctors],
            mesh_stats=self.mesh_stats(),
        )
        LOGGER.info(f"Effective form diagonal {np.diag(form.a0).tolist()}")
        return form

    def project_admissible(self, vector: np.ndarray) -> np.ndarray:
        """Euclidean projection onto the gauge-constrained space."""
        C = self.constraints.toarray()
        multipliers = np.linalg.lstsq(C @ C.T, C @ vector, rcond=None)[0]
        return vector - C.T @ multipliers

    # ------------------------------------------------------------------------
    # Strain evaluation
    # ------------------------------------------------------------------------

    def strain_fields(
        self,
        vectors: np.ndarray,
        macros: np.ndarray,
        basis: SectionQuadrature,
        s: np.ndarray | None = None,
        axial: AxialSamples | None = None,
    ) -> np.ndarray:
        """
        Voigt strains ι(m) + corrector strain for paired columns of vectors (n_dofs, k) and macros (4, k).

        Evaluated on the given axial samples, by interpolation at the points s, or on the cell's
        own sample rule when neither is given; returns shape (k, n_s, P, 6).
        """
        if axial is None:
            axial = self.samples if s is None else self.grid.at(s=s, micro=self.micro)
        vectors = np.asarray(vectors, dtype=float).reshape(self.n_dofs, -1)
        macros = np.asarray(macros, dtype=float).reshape(4, -1)
        n_s = axial.size
        strains = np.repeat((self._macro_voigt(basis=basis) @ macros).T[:, None, :], n_s, axis=1)
        offset = 0
        for block in self.blocks:
            coefficients = vectors[offset : offset + block.size].T.reshape(-1, block.n_axial, block.n_section)
            offset += block.size
            for term in block.terms:
                operator = _axial_operator(kind=term.axial, samples=axial)
                section = _section_operator(kind=term.section, basis=basis)
                axial_part = np.einsum("ma,kan->kmn", operator, coefficients).reshape(-1, block.n_section)
                strains += term.scale * (section @ axial_part.T).T.reshape(strains.shape)
        return strains.reshape(macros.shape[1], n_s, basis.n_points, VOIGT_SIZE)


# ============================================================================
# Module-level Operations
# ============================================================================


def solve_corrector(
    regime: RegimeSpec, cs: CrossSection, micro: MicrostructureRealization, ms: MacroStrain, **options: Any
) -> CorrectorField:
    """Discrete minimizer of the regime's cell functional over the gauge-constrained space."""
    return CellProblem(regime=regime, cs=cs, micro=micro, **options).solve(ms=ms)


def effective_form(
    regime: RegimeSpec, cs: CrossSection, micro: MicrostructureRealization, threads: int = 1, **options: Any
) -> EffectiveForm:
    return CellProblem(regime=regime, cs=cs, micro=micro, **options).effective_form(threads=threads)


def cell_energy(
    corrector: CorrectorField, regime: RegimeSpec, cs: CrossSection, micro: MicrostructureRealization, ms: MacroStrain
) -> float:
    """Averaged cell energy of ι(m) + corrector strain; the minimum when corrector solves the cell problem."""
    skew_block = regime.regime == Regime.GAMMA_FINITE and any(name == "psi1" for name, _ in corrector.layout)
    problem = CellProblem(regime=regime, cs=cs, micro=micro, skew_block=skew_block)
    if corrector.layout != problem.layout:
        raise ValueError(f"Corrector layout {corrector.layout} does not match the cell problem layout {problem.layout}")
    return problem.energy(vector=corrector.vector, ms=ms)


class RveRow(BaseModel):
    window: float
    mean_diagonal: list[float]
    variance_diagonal: list[float]


def rve_window_sweep(
    regime: RegimeSpec,
    cs: CrossSection,
    spec: MicrostructureSpec,
    windows: Sequence[float],
    seeds: Sequence[int],
    threads: int = 1,
) -> list[RveRow]:
    """Mean and sample variance of the a0 diagonal over seeds, per RVE window length."""
    rows = []
    for window in windows:
        windowed = regime.model_copy(update={"window": window})
        diagonals = np.array(
            [
                np.diag(
                    effective_form(
                        regime=windowed, cs=cs, micro=realize(spec=spec.model_copy(update={"seed": seed})), threads=threads
                    ).a0
                )
                for seed in seeds
            ]
        )
        variance = np.var(diagonals, axis=0, ddof=1) if len(seeds) > 1 else np.zeros(4)
        rows.append(RveRow(window=window, mean_diagonal=diagonals.mean(axis=0).tolist(), variance_diagonal=variance.tolist()))
        LOGGER.info(f"RVE window {window}: a0 diagonal variance {variance.tolist()}")
    return rows
