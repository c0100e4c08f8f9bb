"""Axial microstructure: periodic, quasiperiodic and renewal phase layouts, and Birkhoff averages along a trajectory."""

import logging
import math
import threading
from collections.abc import Sequence
from enum import Enum
from fractions import Fraction
from typing import Self

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.integrate import quad
from scipy.optimize import brentq

from rod_homogenization.material import ElasticityTensor, tensor_from_block
from utils.constants import (
    MAX_RATIONAL_DENOMINATOR,
    MAX_SEED,
    QUASIPERIODIC_SCAN_STEPS_PER_PERIOD,
    RATIONALITY_TOL,
    RENEWAL_BLOCK_SIZE,
)
from utils.models import MicrostructureBlock
from utils.output_helpers import fit_loglog_slope

LOGGER = logging.getLogger(__name__)


class MicrostructureKind(Enum):
    """
    Axial dynamical systems.

    Attributes:
        value: config identifier
        period: length of the exact period in s (None when there is none)
    """

    PERIODIC = ("periodic", 1.0)
    QUASIPERIODIC = ("quasiperiodic", None)
    RENEWAL = ("renewal", None)

    def __init__(self, value: str, period: float | None):
        self._value_ = value
        self.period = period


# ============================================================================
# Microstructure Specification
# ============================================================================


def is_rational_ratio(ratio: float) -> bool:
    """True when ratio lies within RATIONALITY_TOL of a fraction with a small denominator."""
    approximation = Fraction(ratio).limit_denominator(MAX_RATIONAL_DENOMINATOR)
    return abs(ratio - float(approximation)) <= RATIONALITY_TOL * max(1.0, abs(ratio))


class MicrostructureSpec(BaseModel):
    """
    Phase layout along the scaled axial coordinate s.

    periodic: ``layout`` lists (phase, volume fraction) pairs filling the unit cell in order.
    quasiperiodic: phase k where thresholds[k-1] <= cos(2πf₁s) + cos(2πf₂s) < thresholds[k].
    renewal: consecutive segments cycle through the phases with exponential lengths of the given means.
    """

    model_config = ConfigDict(frozen=True)

    kind: MicrostructureKind
    phases: list[ElasticityTensor] = Field(min_length=1)
    layout: list[tuple[int, float]] | None = None
    frequencies: tuple[float, float] | None = None
    thresholds: list[float] | None = None
    mean_lengths: list[float] | None = None
    seed: int = Field(default=0, ge=0, le=MAX_SEED)

    @model_validator(mode="after")
    def _valid_layout(self) -> Self:
        n_phases = len(self.phases)
        match self.kind:
            case MicrostructureKind.PERIODIC:
                if not self.layout:
                    raise ValueError("periodic microstructure requires a layout")
                if any(not 0 <= phase < n_phases for phase, _ in self.layout):
                    raise ValueError(f"layout references a phase outside [0, {n_phases})")
                fractions = [fraction for _, fraction in self.layout]
                if any(fraction <= 0.0 for fraction in fractions):
                    raise ValueError(f"volume fractions must be positive, got {fractions}")
                if abs(math.fsum(fractions) - 1.0) > 1e-12:
                    raise ValueError(f"volume fractions must sum to 1, got {math.fsum(fractions)}")
            case MicrostructureKind.QUASIPERIODIC:
                if self.frequencies is None or any(f <= 0.0 for f in self.frequencies):
                    raise ValueError("quasiperiodic microstructure requires two positive frequencies")
                f1, f2 = self.frequencies
                if is_rational_ratio(ratio=f1 / f2):
                    raise ValueError(f"frequency ratio {f1}/{f2} is rational to working precision")
                if self.thresholds is None or len(self.thresholds) != n_phases - 1:
                    raise ValueError(f"quasiperiodic microstructure with {n_phases} phases needs {n_phases - 1} thresholds")
                if any(a >= b for a, b in zip(self.thresholds, self.thresholds[1:], strict=False)):
                    raise ValueError("thresholds must be strictly increasing")
            case MicrostructureKind.RENEWAL:
                if self.mean_lengths is None or len(self.mean_lengths) != n_phases:
                    raise ValueError(f"renewal microstructure needs one mean segment length per phase ({n_phases})")
                if any(length <= 0.0 for length in self.mean_lengths):
                    raise ValueError(f"mean segment lengths must be positive, got {self.mean_lengths}")
        return self

    @classmethod
    def homogeneous(cls, tensor: ElasticityTensor) -> "MicrostructureSpec":
        return cls(kind=MicrostructureKind.PERIODIC, phases=[tensor], layout=[(0, 1.0)])

    @classmethod
    def from_block(cls, block: MicrostructureBlock, seed: int) -> "MicrostructureSpec":
        phases = [tensor_from_block(block=phase) for phase in block.phases]
        layout = block.layout
        if block.kind == "periodic" and layout is None:
            fractions = block.fractions if block.fractions is not None else [1.0 / len(phases)] * len(phases)
            layout = list(enumerate(fractions))
        thresholds = block.thresholds
        if block.kind == "quasiperiodic" and thresholds is None and len(phases) == 2:
            thresholds = [0.0]
        return cls(
            kind=MicrostructureKind(block.kind),
            phases=phases,
            layout=layout,
            frequencies=block.frequencies,
            thresholds=thresholds,
            mean_lengths=block.mean_lengths,
            seed=seed,
        )

    @property
    def n_phases(self) -> int:
        return len(self.phases)


# ============================================================================
# Realizations
# ============================================================================


class MicrostructureRealization:
    """
    Deterministic trajectory s ↦ phase of one seeded microstructure.

    Renewal boundaries are generated lazily in blocks; block b of side d is drawn from a
    Philox stream keyed by the seed with counter (0, 0, b, d), so every boundary is a pure
    function of (seed, index) and the cache may be extended in any order.
    """

    def __init__(self, spec: MicrostructureSpec):
        self.spec = spec
        self._lock = threading.Lock()
        if spec.kind == MicrostructureKind.PERIODIC:
            fractions = np.array([fraction for _, fraction in spec.layout or []])
            self._cell_bounds = np.cumsum(fractions)
            self._cell_bounds[-1] = 1.0
            self._cell_phases = np.array([phase for phase, _ in spec.layout or []], dtype=np.int64)
        if spec.kind == MicrostructureKind.RENEWAL:
            self._means = np.array(spec.mean_lengths)
            probabilities = np.cumsum(self._means) / np.sum(self._means)
            draw = np.random.Generator(np.random.Philox(key=spec.seed, counter=[0, 0, 0, 2])).random()
            self._initial_phase = int(np.searchsorted(probabilities, draw, side="right"))
            self._forward = np.zeros(0)
            self._backward = np.zeros(0)
            self._forward_blocks = 0
            self._backward_blocks = 0

    def __repr__(self) -> str:
        return f"MicrostructureRealization(kind='{self.spec.kind.value}', seed={self.spec.seed})"

    @property
    def period(self) -> float | None:
        return self.spec.kind.period

    # ------------------------------------------------------------------------
    # Renewal cache
    # ------------------------------------------------------------------------

    def _standard_exponentials(self, block: int, side: int) -> np.ndarray:
        generator = np.random.Generator(np.random.Philox(key=self.spec.seed, counter=[0, 0, block, side]))
        return generator.standard_exponential(RENEWAL_BLOCK_SIZE)

    def _segment_lengths(self, block: int, side: int) -> np.ndarray:
        n_phases = self.spec.n_phases
        index = block * RENEWAL_BLOCK_SIZE + np.arange(RENEWAL_BLOCK_SIZE)
        phases = (self._initial_phase + (index if side == 0 else -index)) % n_phases
        return self._standard_exponentials(block=block, side=side) * self._means[phases]

    def _extend(self, lower: float, upper: float) -> tuple[np.ndarray, np.ndarray]:
        """Grow the boundary cache to cover [lower, upper]; returns (forward ends, backward starts)."""
        with self._lock:
            while len(self._forward) == 0 or self._forward[-1] <= upper:
                start = self._forward[-1] if len(self._forward) else 0.0
                lengths = self._segment_lengths(block=self._forward_blocks, side=0)
                self._forward = np.concatenate([self._forward, start + np.cumsum(lengths)])
                self._forward_blocks += 1
                LOGGER.debug(f"Extended forward renewal boundaries to {self._forward[-1]:.6g}")
            while len(self._backward) == 0 or self._backward[-1] > lower:
                start = self._backward[-1] if len(self._backward) else 0.0
                lengths = self._segment_lengths(block=self._backward_blocks, side=1)
                self._backward = np.concatenate([self._backward, start - np.cumsum(lengths)])
                self._backward_blocks += 1
                LOGGER.debug(f"Extended backward renewal boundaries to {self._backward[-1]:.6g}")
            return self._forward, self._backward

    def renewal_boundaries(self, lower: float, upper: float) -> np.ndarray:
        """Strictly increasing renewal boundaries covering [lower, upper]."""
        forward, backward = self._extend(lower=lower, upper=upper)
        return np.concatenate([backward[::-1], forward])

    # ------------------------------------------------------------------------
    # Evaluation
    # ------------------------------------------------------------------------

    def _quasiperiodic_signal(self, s: np.ndarray) -> np.ndarray:
        f1, f2 = self.spec.frequencies or (1.0, 1.0)
        return np.cos(2.0 * math.pi * f1 * s) + np.cos(2.0 * math.pi * f2 * s)

    def phase_at(self, s: float | np.ndarray) -> int | np.ndarray:
        """Phase index at scaled axial coordinate(s) s; segments are closed on the left."""
        values = np.asarray(s, dtype=float)
        flat = np.atleast_1d(values).ravel()
        match self.spec.kind:
            case MicrostructureKind.PERIODIC:
                fractional = flat - np.floor(flat)
                cell = np.minimum(np.searchsorted(self._cell_bounds, fractional, side="right"), len(self._cell_bounds) - 1)
                phases = self._cell_phases[cell]
            case MicrostructureKind.QUASIPERIODIC:
                phases = np.searchsorted(np.array(self.spec.thresholds), self._quasiperiodic_signal(flat), side="right")
            case MicrostructureKind.RENEWAL:
                forward, backward = self._extend(lower=float(flat.min()), upper=float(flat.max()))
                phases = np.empty(len(flat), dtype=np.int64)
                ahead = flat >= backward[0]
                phases[ahead] = self._initial_phase + np.searchsorted(forward, flat[ahead], side="right")
                phases[~ahead] = self._initial_phase - np.searchsorted(-backward, -flat[~ahead], side="left")
                phases %= self.spec.n_phases
        phases = phases.astype(np.int64)
        if values.ndim == 0:
            return int(phases[0])
        return phases.reshape(values.shape)

    def boundaries(self, a: float, b: float) -> np.ndarray:
        """Sorted phase-change candidates strictly inside (a, b)."""
        match self.spec.kind:
            case MicrostructureKind.PERIODIC:
                periods = np.arange(math.floor(a), math.ceil(b) + 1, dtype=float)
                points = (periods[:, None] + self._cell_bounds[None, :]).ravel()
            case MicrostructureKind.QUASIPERIODIC:
                points = self._quasiperiodic_roots(a=a, b=b)
            case MicrostructureKind.RENEWAL:
                points = self.renewal_boundaries(lower=a, upper=b)
        points = np.sort(points)
        return points[(points > a) & (points < b)]

    def _quasiperiodic_roots(self, a: float, b: float) -> np.ndarray:
        f_max = max(self.spec.frequencies or (1.0, 1.0))
        n_steps = max(2, math.ceil((b - a) * f_max * QUASIPERIODIC_SCAN_STEPS_PER_PERIOD))
        grid = np.linspace(a, b, n_steps + 1)
        roots = []
        for threshold in self.spec.thresholds or []:
            shifted = self._quasiperiodic_signal(grid) - threshold
            for k in np.nonzero(shifted[:-1] * shifted[1:] < 0.0)[0]:
                roots.append(
                    brentq(
                        lambda x, t=threshold: float(self._quasiperiodic_signal(np.array(x))) - t,
                        grid[k],
                        grid[k + 1],
                        xtol=1e-15,
                    )
                )
        return np.array(roots)

    def segments(self, a: float, b: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(starts, ends, phases) of the constant-phase pieces covering [a, b]."""
        edges = np.concatenate([[a], self.boundaries(a=a, b=b), [b]])
        starts, ends = edges[:-1], edges[1:]
        phases = np.asarray(self.phase_at(0.5 * (starts + ends)))
        return starts, ends, phases


def realize(spec: MicrostructureSpec) -> MicrostructureRealization:
    """Seeded realization standing for one typical trajectory of the system."""
    realization = MicrostructureRealization(spec=spec)
    LOGGER.info(f"Realized {realization!r} with {spec.n_phases} phase(s)")
    return realization


# ============================================================================
# Ergodic Averages
# ============================================================================


def birkhoff_average(r: MicrostructureRealization, g: Sequence[float], T: float) -> float:
    """(1/T)∫₀ᵀ g(phase(s)) ds, integrated exactly over constant-phase segments."""
    if T <= 0.0:
        raise ValueError(f"Birkhoff window must be positive, got {T}")
    values = np.asarray(g, dtype=float)
    if len(values) != r.spec.n_phases:
        raise ValueError(f"Expected {r.spec.n_phases} per-phase values, got {len(values)}")
    starts, ends, phases = r.segments(a=0.0, b=T)
    return float(np.sum(values[phases] * (ends - starts))) / T


def _quasiperiodic_exceedance(threshold: float) -> float:
    """P(cos 2πθ₁ + cos 2πθ₂ ≥ t) for independent uniform angles θ₁, θ₂."""

    def conditional(theta: float) -> float:
        level = min(1.0, max(-1.0, threshold - math.cos(2.0 * math.pi * theta)))
        return math.acos(level) / math.pi

    return float(quad(conditional, 0.0, 1.0, limit=200)[0])


def phase_probabilities(spec: MicrostructureSpec) -> np.ndarray:
    """Stationary probability of each phase (ensemble volume fractions)."""
    probabilities = np.zeros(spec.n_phases)
    match spec.kind:
        case MicrostructureKind.PERIODIC:
            for phase, fraction in spec.layout or []:
                probabilities[phase] += fraction
        case MicrostructureKind.RENEWAL:
            means = np.array(spec.mean_lengths)
            probabilities = means / np.sum(means)
        case MicrostructureKind.QUASIPERIODIC:
            tails = [1.0] + [_quasiperiodic_exceedance(threshold=t) for t in spec.thresholds or []] + [0.0]
            probabilities = -np.diff(tails)
    return probabilities


def ensemble_mean(spec: MicrostructureSpec, g: Sequence[float]) -> float:
    return float(np.asarray(g, dtype=float) @ phase_probabilities(spec=spec))


class BirkhoffRow(BaseModel):
    T: float
    average: float
    abs_error: float
    stderr: float


class BirkhoffSweep(BaseModel):
    rows: list[BirkhoffRow]
    ensemble_mean: float
    fitted_rate: float | None


def birkhoff_sweep(
    spec: MicrostructureSpec, g: Sequence[float], windows: Sequence[float], seeds: Sequence[int]
) -> BirkhoffSweep:
    """Seed-averaged Birkhoff averages and absolute errors against the ensemble mean per window."""
    target = ensemble_mean(spec=spec, g=g)
    realizations = [realize(spec=spec.model_copy(update={"seed": seed})) for seed in seeds]
    rows = []
    for T in windows:
        averages = np.array([birkhoff_average(r=r, g=g, T=T) for r in realizations])
        errors = np.abs(averages - target)
        stderr = float(np.std(averages, ddof=1) / math.sqrt(len(averages))) if len(averages) > 1 else 0.0
        rows.append(BirkhoffRow(T=T, average=float(np.mean(averages)), abs_error=float(np.mean(errors)), stderr=stderr))
        LOGGER.info(f"Birkhoff window T={T}: mean average {rows[-1].average:.8g}, mean abs error {rows[-1].abs_error:.3e}")
    rate = fit_loglog_slope(x=[row.T for row in rows], y=[row.abs_error for row in rows])
    return BirkhoffSweep(rows=rows, ensemble_mean=target, fitted_rate=rate)
