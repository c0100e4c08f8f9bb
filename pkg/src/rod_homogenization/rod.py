"""Homogenized von Kármán rod: moment equations, pointwise constitutive inversion, kinematic integration and a Galerkin oracle."""

import logging
from collections.abc import Sequence
from typing import Any, Self

import numpy as np
from numpy.polynomial import Legendre, Polynomial
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy.integrate import cumulative_simpson, simpson
from scipy.interpolate import BSpline, make_interp_spline

from rod_homogenization.cell import EffectiveForm
from utils.constants import (
    BC_CLAMPED_LEFT,
    BC_SLIDING_RIGHT,
    DEFAULT_ROD_NODES,
    GALERKIN_MAX_CONDITION,
    GALERKIN_QUADRATURE_POINTS,
)
from utils.models import LoadBlock, LoadFunctionBlock

LOGGER = logging.getLogger(__name__)

BOUNDARY_CONDITIONS = (BC_CLAMPED_LEFT, BC_SLIDING_RIGHT)

# An effective form constant along the rod, or one per grid node.
Effective = EffectiveForm | Sequence[EffectiveForm]


# ============================================================================
# Loads
# ============================================================================


class LoadFunction(BaseModel):
    """
    Transverse force density on [0, L].

    Either polynomial coefficients c0 + c1 x + ... or values on a uniform grid over [0, L]
    (piecewise linear in between).
    """

    model_config = ConfigDict(frozen=True)

    length: float = Field(gt=0.0)
    poly: list[float] | None = None
    table: list[float] | None = None

    @model_validator(mode="after")
    def _exactly_one(self) -> Self:
        if (self.poly is None) == (self.table is None):
            raise ValueError("a load function needs exactly one of 'poly' or 'table'")
        if self.table is not None and len(self.table) < 2:
            raise ValueError("a load table needs at least two values")
        if not np.all(np.isfinite(self.poly or self.table or [])):
            raise ValueError("load coefficients must be finite")
        return self

    @classmethod
    def zero(cls, length: float) -> "LoadFunction":
        return cls(length=length, poly=[0.0])

    @classmethod
    def from_block(cls, block: LoadFunctionBlock, length: float) -> "LoadFunction":
        return cls(length=length, poly=block.poly, table=block.table)

    @property
    def breakpoints(self) -> np.ndarray:
        if self.table is None:
            return np.array([0.0, self.length])
        return np.linspace(0.0, self.length, len(self.table))

    def _antiderivatives(self) -> tuple[Any, Any, Any]:
        """(f, F, F₂) with F′ = f, F₂′ = F, all exact piecewise polynomials."""
        if self.poly is not None:
            f: Polynomial | BSpline = Polynomial(self.poly)
        else:
            f = make_interp_spline(self.breakpoints, np.asarray(self.table, dtype=float), k=1)
        if isinstance(f, Polynomial):
            return f, f.integ(m=1), f.integ(m=2)
        return f, f.antiderivative(1), f.antiderivative(2)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        f, _, _ = self._antiderivatives()
        return np.asarray(f(np.asarray(x, dtype=float)), dtype=float)

    def tail_moment(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """
        M(x) = −∫ₓᴸ (t − x) f(t) dt and M′(x), the solution of M″ + f = 0 with M(L) = M′(L) = 0.

        Uses ∫ₓᴸ (t − x) f dt = (L − x)F(L) − F₂(L) + F₂(x), exact for both load kinds.
        """
        x = np.asarray(x, dtype=float)
        _, F, F2 = self._antiderivatives()
        L = self.length
        moment = -((L - x) * F(L) - F2(L) + F2(x))
        derivative = F(L) - F(x)
        return np.asarray(moment, dtype=float), np.asarray(derivative, dtype=float)


class LoadSpec(BaseModel):
    """Normal loads f = f₂e₂ + f₃e₃ on the mid-fibre (0, L)."""

    model_config = ConfigDict(frozen=True)

    length: float = Field(gt=0.0)
    f2: LoadFunction
    f3: LoadFunction
    n_nodes: int = Field(default=DEFAULT_ROD_NODES, ge=3)

    @field_validator("n_nodes")
    @classmethod
    def _odd_nodes(cls, value: int) -> int:
        if value % 2 == 0:
            raise ValueError(f"n_nodes must be odd for composite Simpson integration, got {value}")
        return value

    @model_validator(mode="after")
    def _consistent_lengths(self) -> Self:
        if self.f2.length != self.length or self.f3.length != self.length:
            raise ValueError(f"load functions must be defined on [0, {self.length}]")
        return self

    @classmethod
    def from_block(cls, block: LoadBlock) -> "LoadSpec":
        return cls(
            length=block.length,
            f2=LoadFunction.from_block(block=block.f2, length=block.length),
            f3=LoadFunction.from_block(block=block.f3, length=block.length),
            n_nodes=block.n_nodes,
        )

    def scaled(self, factor: float) -> "LoadSpec":
        def scale(f: LoadFunction) -> LoadFunction:
            if f.poly is not None:
                return f.model_copy(update={"poly": [factor * c for c in f.poly]})
            return f.model_copy(update={"table": [factor * c for c in f.table or []]})

        return self.model_copy(update={"f2": scale(self.f2), "f3": scale(self.f3)})

    def grid(self, n_nodes: int | None = None) -> np.ndarray:
        return np.linspace(0.0, self.length, n_nodes or self.n_nodes)


# ============================================================================
# Domain Types
# ============================================================================


class _Fields(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)


class MomentFields(_Fields):
    """First-order moments Ẽ₁₁, Ê₁₁ and the torsion moment Ê₁₂ − Ẽ₁₃ on the rod grid."""

    grid: np.ndarray
    e11_tilde: np.ndarray
    e11_hat: np.ndarray
    m_torsion: np.ndarray
    e11_tilde_prime: np.ndarray
    e11_hat_prime: np.ndarray

    def norm(self) -> float:
        return float(max(np.max(np.abs(self.e11_tilde)), np.max(np.abs(self.e11_hat)), np.max(np.abs(self.m_torsion))))


class Kinematics(_Fields):
    """Twist and bending fields with κ = (w′, −v₃″, v₂″)."""

    grid: np.ndarray
    kappa: np.ndarray
    w: np.ndarray
    v2: np.ndarray
    v3: np.ndarray
    v2p: np.ndarray
    v3p: np.ndarray
    bc: str


class RodSolution(_Fields):
    grid: np.ndarray
    u: np.ndarray
    v2: np.ndarray
    v3: np.ndarray
    w: np.ndarray
    up: np.ndarray
    v2p: np.ndarray
    v3p: np.ndarray
    wp: np.ndarray
    v2pp: np.ndarray
    v3pp: np.ndarray
    moments: MomentFields
    bc: str = BC_CLAMPED_LEFT
    energy: float = 0.0

    @property
    def kappa(self) -> np.ndarray:
        return np.column_stack([self.wp, -self.v3pp, self.v2pp])

    def to_rows(self) -> np.ndarray:
        """Columns x1, u, v2, v3, w, wp, v2pp, v3pp, E11t, E11h, Mt."""
        return np.column_stack(
            [
                self.grid,
                self.u,
                self.v2,
                self.v3,
                self.w,
                self.wp,
                self.v2pp,
                self.v3pp,
                self.moments.e11_tilde,
                self.moments.e11_hat,
                self.moments.m_torsion,
            ]
        )


# ============================================================================
# Helpers
# ============================================================================


def _validate_bc(bc: str) -> None:
    if bc not in BOUNDARY_CONDITIONS:
        raise ValueError(f"Unknown boundary condition variant '{bc}', expected one of {BOUNDARY_CONDITIONS}")


def _nodal_forms(eff: Effective, n_nodes: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(a0, a0_1, rho0_coeffs) with a leading node axis."""
    if isinstance(eff, EffectiveForm):
        forms: Sequence[EffectiveForm] = [eff]
    else:
        forms = list(eff)
        if len(forms) != n_nodes:
            raise ValueError(f"Effective form table has {len(forms)} entries for {n_nodes} grid nodes")
    a0 = np.array([form.a0 for form in forms])
    a0_1 = np.array([form.a0_1 for form in forms])
    rho0 = np.array([form.rho0_coeffs for form in forms])
    if len(forms) == 1:
        a0, a0_1, rho0 = (np.repeat(array, n_nodes, axis=0) for array in (a0, a0_1, rho0))
    return a0, a0_1, rho0


def _integrate(values: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Cumulative integral from x = 0."""
    return cumulative_simpson(values, x=grid, initial=0.0)


def _integrate_second_order(curvature: np.ndarray, grid: np.ndarray, bc: str) -> tuple[np.ndarray, np.ndarray]:
    """(v, v′) from v″ with v(0) = 0 and v′(0) = 0 (clamped_left) or v′(L) = 0 (sliding_right)."""
    slope = _integrate(values=curvature, grid=grid)
    if bc == BC_SLIDING_RIGHT:
        slope = slope - slope[-1]
    return _integrate(values=slope, grid=grid), slope


# ============================================================================
# Operations
# ============================================================================


def compute_moments(load: LoadSpec, n_nodes: int | None = None) -> MomentFields:
    """Ẽ₁₁″ + f₂ = 0, Ê₁₁″ + f₃ = 0 with zero moment and shear at x₁ = L; no distributed torque."""
    n_nodes = n_nodes or load.n_nodes
    if n_nodes < 3:
        raise ValueError(f"n_nodes must be at least 3, got {n_nodes}")
    grid = load.grid(n_nodes=n_nodes)
    e11_tilde, e11_tilde_prime = load.f2.tail_moment(x=grid)
    e11_hat, e11_hat_prime = load.f3.tail_moment(x=grid)
    return MomentFields(
        grid=grid,
        e11_tilde=e11_tilde,
        e11_hat=e11_hat,
        m_torsion=np.zeros_like(grid),
        e11_tilde_prime=e11_tilde_prime,
        e11_hat_prime=e11_hat_prime,
    )


def solve_kinematics(eff: Effective, moments: MomentFields, bc: str = BC_CLAMPED_LEFT) -> Kinematics:
    """Per node a0_1·κ = (−m_torsion, Ê₁₁, −Ẽ₁₁), then w′ = κ₁, v₃″ = −κ₂, v₂″ = κ₃ integrated from x₁ = 0."""
    _validate_bc(bc=bc)
    grid = moments.grid
    _, a0_1, _ = _nodal_forms(eff=eff, n_nodes=len(grid))
    rhs = np.column_stack([-moments.m_torsion, moments.e11_hat, -moments.e11_tilde])
    try:
        kappa = np.linalg.solve(a0_1, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"Singular reduced effective form a0_1: {exc}") from exc

    residual = float(np.max(np.abs(np.einsum("nij,nj->ni", a0_1, kappa) - rhs)))
    scale = moments.norm()
    if scale > 0.0 and residual > 1e-10 * scale:
        LOGGER.warning(f"Constitutive residual {residual:.3e} exceeds tolerance for moment scale {scale:.3e}")

    w = _integrate(values=kappa[:, 0], grid=grid)
    v2, v2p = _integrate_second_order(curvature=kappa[:, 2], grid=grid, bc=bc)
    v3, v3p = _integrate_second_order(curvature=-kappa[:, 1], grid=grid, bc=bc)
    return Kinematics(grid=grid, kappa=kappa, w=w, v2=v2, v3=v3, v2p=v2p, v3p=v3p, bc=bc)


def recover_axial(eff: Effective, kin: Kinematics) -> tuple[np.ndarray, np.ndarray]:
    """(u, u′) from u′ = ρ₀(κ) − ½(v₂′² + v₃′²) and u(0) = 0."""
    _, _, rho0 = _nodal_forms(eff=eff, n_nodes=len(kin.grid))
    up = np.einsum("ni,ni->n", rho0, kin.kappa) - 0.5 * (kin.v2p**2 + kin.v3p**2)
    return _integrate(values=up, grid=kin.grid), up


def total_energy(eff: Effective, sol: RodSolution, load: LoadSpec) -> float:
    """∫ ½(a, κ)ᵀ a0 (a, κ) − ∫(f₂v₂ + f₃v₃) with a = u′ + ½(v₂′² + v₃′²) and κ = (w′, −v₃″, v₂″)."""
    grid = sol.grid
    a0, _, _ = _nodal_forms(eff=eff, n_nodes=len(grid))
    stretch = sol.up + 0.5 * (sol.v2p**2 + sol.v3p**2)
    strain = np.column_stack([stretch, sol.kappa])
    elastic = 0.5 * np.einsum("ni,nij,nj->n", strain, a0, strain)
    work = load.f2(grid) * sol.v2 + load.f3(grid) * sol.v3
    return float(simpson(elastic - work, x=grid))


def solve_rod(eff: Effective, load: LoadSpec, bc: str = BC_CLAMPED_LEFT) -> RodSolution:
    moments = compute_moments(load=load)
    kin = solve_kinematics(eff=eff, moments=moments, bc=bc)
    u, up = recover_axial(eff=eff, kin=kin)
    solution = RodSolution(
        grid=kin.grid,
        u=u,
        v2=kin.v2,
        v3=kin.v3,
        w=kin.w,
        up=up,
        v2p=kin.v2p,
        v3p=kin.v3p,
        wp=kin.kappa[:, 0],
        v2pp=kin.kappa[:, 2],
        v3pp=-kin.kappa[:, 1],
        moments=moments,
        bc=bc,
    )
    energy = total_energy(eff=eff, sol=solution, load=load)
    LOGGER.info(f"Rod solved on {len(kin.grid)} nodes ({bc}): v2(L)={kin.v2[-1]:.6g}, u(L)={u[-1]:.6g}, energy={energy:.6g}")
    return solution.model_copy(update={"energy": energy})


# ============================================================================
# Galerkin Oracle
# ============================================================================


def _piecewise_gauss(breakpoints: np.ndarray, points_per_piece: int) -> tuple[np.ndarray, np.ndarray]:
    reference, weights = np.polynomial.legendre.leggauss(points_per_piece)
    lower, upper = breakpoints[:-1, None], breakpoints[1:, None]
    nodes = 0.5 * (upper - lower) * reference[None, :] + 0.5 * (upper + lower)
    return nodes.ravel(), (0.5 * (upper - lower) * weights[None, :]).ravel()


def _deflection_basis(mode: Legendre, bc: str, length: float) -> tuple[Legendre, Legendre]:
    """(V, V′) with V″ = mode, V(0) = 0 and the variant's slope condition."""
    slope = mode.integ(m=1, lbnd=length if bc == BC_SLIDING_RIGHT else 0.0)
    return slope.integ(m=1, lbnd=0.0), slope


def galerkin_solve(eff: Effective, load: LoadSpec, bc: str = BC_CLAMPED_LEFT, n_modes: int = 16) -> RodSolution:
    """
    Minimize the reduced energy ∫ ½κᵀa0_1κ − ∫(f₂v₂ + f₃v₃) over κ in shifted Legendre polynomials.

    The deflections are the exact double integrals of the curvature modes satisfying the
    essential conditions, so the problem is a dense quadratic in 3·n_modes coefficients;
    u is recovered afterwards with a = ρ₀(κ).
    """
    _validate_bc(bc=bc)
    if n_modes < 4:
        raise ValueError(f"n_modes must be at least 4, got {n_modes}")
    L = load.length
    domain = [0.0, L]
    modes = [Legendre.basis(deg=j, domain=domain) for j in range(n_modes)]
    deflections = [_deflection_basis(mode=mode, bc=bc, length=L) for mode in modes]

    breakpoints = np.union1d(load.f2.breakpoints, load.f3.breakpoints)
    points_per_piece = max(GALERKIN_QUADRATURE_POINTS // len(breakpoints), n_modes + 4)
    x_q, w_q = _piecewise_gauss(breakpoints=breakpoints, points_per_piece=points_per_piece)
    phi = np.array([mode(x_q) for mode in modes])  # (n_modes, n_q)
    deflection_q = np.array([V(x_q) for V, _ in deflections])

    grid = load.grid()
    _, a0_1_nodes, _ = _nodal_forms(eff=eff, n_nodes=len(grid))
    a0_1_q = np.moveaxis(
        np.array([[np.interp(x_q, grid, a0_1_nodes[:, i, j]) for j in range(3)] for i in range(3)]), -1, 0
    )

    hessian = np.einsum("q,qab,jq,kq->ajbk", w_q, a0_1_q, phi, phi).reshape(3 * n_modes, 3 * n_modes)
    rhs = np.zeros((3, n_modes))
    # v₂ = Σ c₃ⱼVⱼ and v₃ = −Σ c₂ⱼVⱼ
    rhs[2] = deflection_q @ (w_q * load.f2(x_q))
    rhs[1] = -deflection_q @ (w_q * load.f3(x_q))
    condition = float(np.linalg.cond(hessian))
    if not np.isfinite(condition) or condition > GALERKIN_MAX_CONDITION:
        raise ValueError(f"Ill-conditioned Galerkin Gram matrix (condition number {condition:.3e})")
    coefficients = np.linalg.solve(hessian, rhs.ravel()).reshape(3, n_modes)
    LOGGER.info(f"Galerkin solve with {n_modes} modes per component, condition number {condition:.3e}")

    phi_grid = np.array([mode(grid) for mode in modes])
    kappa = coefficients @ phi_grid  # (3, n_nodes)
    twist = sum(c * mode.integ(m=1, lbnd=0.0) for c, mode in zip(coefficients[0], modes))
    v_grid = np.array([V(grid) for V, _ in deflections])
    vp_grid = np.array([Vp(grid) for _, Vp in deflections])
    kin = Kinematics(
        grid=grid,
        kappa=kappa.T,
        w=twist(grid),
        v2=coefficients[2] @ v_grid,
        v3=-(coefficients[1] @ v_grid),
        v2p=coefficients[2] @ vp_grid,
        v3p=-(coefficients[1] @ vp_grid),
        bc=bc,
    )
    u, up = recover_axial(eff=eff, kin=kin)
    solution = RodSolution(
        grid=grid,
        u=u,
        v2=kin.v2,
        v3=kin.v3,
        w=kin.w,
        up=up,
        v2p=kin.v2p,
        v3p=kin.v3p,
        wp=kappa[0],
        v2pp=kappa[2],
        v3pp=-kappa[1],
        moments=compute_moments(load=load),
        bc=bc,
    )
    return solution.model_copy(update={"energy": total_energy(eff=eff, sol=solution, load=load)})
