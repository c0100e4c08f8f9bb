"""Pydantic models for the JSON run configuration and its per-module blocks."""

import json
from pathlib import Path
from typing import Annotated, Literal, Self

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from utils.constants import (
    BC_CLAMPED_LEFT,
    DEFAULT_ROD_NODES,
    MAX_SEED,
    REGIME_GAMMA_FINITE,
    REGIME_GAMMA_INFINITE,
    REGIME_GAMMA_ZERO,
    SOLVER_MAX_ITERATIONS,
    SOLVER_PCG,
    SOLVER_RTOL,
)


class ConfigError(ValueError):
    """A run configuration could not be read or failed validation."""


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


# ============================================================================
# Material
# ============================================================================


class IsotropicMaterialBlock(_Block):
    kind: Literal["isotropic"]
    lame_lambda: float = Field(alias="lambda", ge=0.0)
    lame_mu: float = Field(alias="mu", gt=0.0)


class Matrix6MaterialBlock(_Block):
    kind: Literal["matrix6"]
    rows: list[list[float]]

    @field_validator("rows")
    @classmethod
    def _six_by_six(cls, rows: list[list[float]]) -> list[list[float]]:
        if len(rows) != 6 or any(len(row) != 6 for row in rows):
            raise ValueError("rows must be a 6x6 matrix")
        return rows


MaterialBlock = Annotated[IsotropicMaterialBlock | Matrix6MaterialBlock, Field(discriminator="kind")]


# ============================================================================
# Microstructure
# ============================================================================


class MicrostructureBlock(_Block):
    """
    Axial phase layout.

    periodic: ``fractions`` (one per phase, laid out in phase order) or explicit ``layout`` pairs.
    quasiperiodic: ``frequencies`` (f1, f2) and ``thresholds`` on cos(2πf1 s) + cos(2πf2 s).
    renewal: ``mean_lengths`` of the exponential segment lengths, one per phase.
    """

    kind: Literal["periodic", "quasiperiodic", "renewal"]
    phases: list[MaterialBlock] = Field(min_length=1)
    fractions: list[float] | None = None
    layout: list[tuple[int, float]] | None = None
    frequencies: tuple[float, float] | None = None
    thresholds: list[float] | None = None
    mean_lengths: list[float] | None = None
    seed: int | None = Field(default=None, ge=0, le=MAX_SEED)

    @model_validator(mode="after")
    def _layout_fields(self) -> Self:
        if self.kind == "periodic" and self.fractions is not None and self.layout is not None:
            raise ValueError("give either fractions or layout for a periodic microstructure, not both")
        if self.kind == "quasiperiodic" and self.frequencies is None:
            raise ValueError("quasiperiodic microstructure requires frequencies")
        if self.kind == "renewal" and self.mean_lengths is None:
            raise ValueError("renewal microstructure requires mean_lengths")
        return self


# ============================================================================
# Section, Regime and Solver
# ============================================================================


class SectionBlock(_Block):
    shape: Literal["disk", "rect", "polygon"]
    params: dict[str, float | list[list[float]]] = Field(default_factory=dict)
    mesh_h: float = Field(gt=0.0)
    normalize: bool = True


class RegimeBlock(_Block):
    regime: Literal["gamma_zero", "gamma_finite", "gamma_infinite"] = REGIME_GAMMA_FINITE
    gamma: float | None = Field(default=None, gt=0.0)
    nodes: int = Field(default=8, ge=2)
    window: float | None = Field(default=None, gt=0.0)
    axial: Literal["fourier", "p1"] | None = None

    @model_validator(mode="after")
    def _gamma_matches_regime(self) -> Self:
        if self.regime == REGIME_GAMMA_FINITE and self.gamma is None:
            raise ValueError("gamma_finite regime requires gamma > 0")
        if self.regime in (REGIME_GAMMA_ZERO, REGIME_GAMMA_INFINITE) and self.gamma is not None:
            raise ValueError(f"{self.regime} regime takes no gamma")
        return self


class SolverBlock(_Block):
    method: Literal["pcg", "direct"] = SOLVER_PCG
    rtol: float = Field(default=SOLVER_RTOL, gt=0.0)
    max_iterations: int = Field(default=SOLVER_MAX_ITERATIONS, ge=1)


# ============================================================================
# Rod
# ============================================================================


class LoadFunctionBlock(_Block):
    """Either polynomial coefficients c0 + c1 x + ... or values on a uniform grid over [0, L]."""

    poly: list[float] | None = None
    table: list[float] | None = None

    @model_validator(mode="after")
    def _exactly_one(self) -> Self:
        if (self.poly is None) == (self.table is None):
            raise ValueError("a load function needs exactly one of 'poly' or 'table'")
        if self.table is not None and len(self.table) < 2:
            raise ValueError("a load table needs at least two values")
        return self


class LoadBlock(_Block):
    length: float = Field(default=1.0, alias="L", gt=0.0)
    f2: LoadFunctionBlock = Field(default_factory=lambda: LoadFunctionBlock(poly=[0.0]))
    f3: LoadFunctionBlock = Field(default_factory=lambda: LoadFunctionBlock(poly=[0.0]))
    n_nodes: int = Field(default=DEFAULT_ROD_NODES, ge=3)

    @field_validator("n_nodes")
    @classmethod
    def _odd_nodes(cls, value: int) -> int:
        if value % 2 == 0:
            raise ValueError(f"n_nodes must be odd for composite Simpson integration, got {value}")
        return value


class EffectiveBlock(_Block):
    """Effective form given inline or as the path of an ``effective`` output file (relative to the config)."""

    path: str | None = None
    a0: list[list[float]] | None = None
    a0_1: list[list[float]] | None = None
    rho0: list[float] | None = None

    @model_validator(mode="after")
    def _source(self) -> Self:
        if (self.path is None) == (self.a0 is None):
            raise ValueError("effective block needs exactly one of 'path' or 'a0'")
        return self


# ============================================================================
# Verification and Birkhoff Sweeps
# ============================================================================


class MacroStrainBlock(_Block):
    rho: float = 0.0
    kappa: tuple[float, float, float] = (0.0, 0.0, 0.0)


class VerifyBlock(_Block):
    length: float = Field(default=1.0, alias="L", gt=0.0)
    macro_strain: MacroStrainBlock = Field(default_factory=MacroStrainBlock)


class BirkhoffBlock(_Block):
    values: list[float] = Field(min_length=1)
    windows: list[float] = Field(min_length=1)
    seeds: int = Field(default=1, ge=1)

    @field_validator("windows")
    @classmethod
    def _positive_windows(cls, windows: list[float]) -> list[float]:
        if any(window <= 0.0 for window in windows):
            raise ValueError("Birkhoff windows must be positive")
        return windows


class OutputsBlock(_Block):
    path: str | None = None
    summary: str | None = None


# ============================================================================
# Run Configuration
# ============================================================================


class RunConfig(_Block):
    material: MaterialBlock | None = None
    microstructure: MicrostructureBlock | None = None
    section: SectionBlock | None = None
    regime: RegimeBlock | None = None
    solver: SolverBlock = Field(default_factory=SolverBlock)
    load: LoadBlock | None = None
    bc: Literal["clamped_left", "sliding_right"] = BC_CLAMPED_LEFT
    effective: EffectiveBlock | None = None
    verify: VerifyBlock | None = None
    birkhoff: BirkhoffBlock | None = None
    outputs: OutputsBlock = Field(default_factory=OutputsBlock)
    h_list: list[float] | None = None
    seed: int = Field(default=0, ge=0, le=MAX_SEED)
    threads: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def _single_material_source(self) -> Self:
        if self.material is not None and self.microstructure is not None:
            raise ValueError("give either a material block or a microstructure block, not both")
        return self

    @property
    def microstructure_seed(self) -> int:
        if self.microstructure is not None and self.microstructure.seed is not None:
            return self.microstructure.seed
        return self.seed


def format_validation_error(exc: ValidationError) -> str:
    """One line per failing field, as ``field.path: message``."""
    lines = []
    for error in exc.errors():
        location = ".".join(str(part) for part in error["loc"]) or "<root>"
        lines.append(f"{location}: {error['msg']}")
    return "; ".join(lines)


def load_run_config(path: str | Path) -> RunConfig:
    """Read and validate a run configuration, raising ConfigError with a line or field diagnostic."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"Cannot read config {path}: {exc.strerror}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(f"{path}: {format_validation_error(exc)}") from exc
