"""Cross-section meshes, normalization to centred principal axes, section moments and the macro-strain field."""

import logging
import math
from typing import Any, Self

import numpy as np
import scipy.sparse as sps
from pydantic import BaseModel, ConfigDict, field_validator, model_validator
from scipy.spatial import Delaunay

from utils.constants import (
    DEGENERATE_AREA_FACTOR,
    NORMALIZATION_TOL,
    POINT_LOCATION_TOL,
    PRINCIPAL_AXES_TIE_TOL,
)

LOGGER = logging.getLogger(__name__)

SHAPE_ALIASES = {"rect": "rectangle", "rectangle": "rectangle", "disk": "disk", "polygon": "polygon"}

# Barycentric coordinates and reference weights (fractions of the triangle area) per rule order.
_QUADRATURE_RULES = {
    1: (np.array([[1.0, 1.0, 1.0]]) / 3.0, np.array([1.0])),
    2: (np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]]), np.full(3, 1.0 / 3.0)),
}


# ============================================================================
# Domain Types
# ============================================================================


class SectionTransform(BaseModel):
    """Similarity map x ↦ scale·R(angle)ᵀ(x − centroid) applied by normalize_section."""

    model_config = ConfigDict(frozen=True)

    centroid: tuple[float, float]
    angle: float
    scale: float


class CrossSection(BaseModel):
    """P1 triangle mesh of the cross-section ω in the (x₂, x₃) plane."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    vertices: np.ndarray
    triangles: np.ndarray
    quadrature_order: int = 2
    transform: SectionTransform | None = None

    @field_validator("vertices", mode="before")
    @classmethod
    def _vertices_array(cls, value: Any) -> np.ndarray:
        vertices = np.array(value, dtype=float)
        if vertices.ndim != 2 or vertices.shape[1] != 2 or len(vertices) < 3:
            raise ValueError(f"vertices must be an (n, 2) array with n >= 3, got shape {vertices.shape}")
        vertices.setflags(write=False)
        return vertices

    @field_validator("triangles", mode="before")
    @classmethod
    def _triangles_array(cls, value: Any) -> np.ndarray:
        triangles = np.array(value, dtype=np.int64)
        if triangles.ndim != 2 or triangles.shape[1] != 3 or len(triangles) == 0:
            raise ValueError(f"triangles must be a non-empty (n, 3) index array, got shape {triangles.shape}")
        triangles.setflags(write=False)
        return triangles

    @field_validator("quadrature_order")
    @classmethod
    def _supported_order(cls, value: int) -> int:
        if value not in _QUADRATURE_RULES:
            raise ValueError(f"quadrature_order must be one of {sorted(_QUADRATURE_RULES)}, got {value}")
        return value

    @model_validator(mode="after")
    def _valid_mesh(self) -> Self:
        if self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices):
            raise ValueError("triangle indices out of range")
        extent = float(np.max(np.ptp(self.vertices, axis=0)))
        areas = triangle_areas(vertices=self.vertices, triangles=self.triangles)
        if np.any(areas <= DEGENERATE_AREA_FACTOR * extent**2):
            bad = int(np.argmin(areas))
            raise ValueError(
                f"triangle {bad} is degenerate or negatively oriented (signed area {areas[bad]:.3e})"
            )
        return self

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def area(self) -> float:
        return float(np.sum(triangle_areas(vertices=self.vertices, triangles=self.triangles)))

    @property
    def max_edge(self) -> float:
        corners = self.vertices[self.triangles]
        edges = corners - np.roll(corners, shift=-1, axis=1)
        return float(np.max(np.linalg.norm(edges, axis=-1)))


class SectionProperties(BaseModel):
    model_config = ConfigDict(frozen=True)

    area: float
    i2: float
    i3: float
    mu_omega: float


class MacroStrain(BaseModel):
    """Macroscopic strain (ρ, κ) with κ = axl Ψ = (w′, −v₃″, v₂″)."""

    model_config = ConfigDict(frozen=True)

    rho: float = 0.0
    kappa: tuple[float, float, float] = (0.0, 0.0, 0.0)

    @classmethod
    def from_vector(cls, vector: np.ndarray) -> "MacroStrain":
        rho, k1, k2, k3 = (float(value) for value in vector)
        return cls(rho=rho, kappa=(k1, k2, k3))

    @classmethod
    def unit(cls, index: int) -> "MacroStrain":
        """Unit macro strain e_ρ, e_κ₁, e_κ₂, e_κ₃ for index 0..3."""
        return cls.from_vector(vector=np.eye(4)[index])

    def vector(self) -> np.ndarray:
        return np.array([self.rho, *self.kappa])

    def skew(self) -> np.ndarray:
        return skew_from_axial(axial=np.array(self.kappa))


class SectionQuadrature(BaseModel):
    """Quadrature points of a section with P1 basis values and gradients at each point."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    points: np.ndarray
    weights: np.ndarray
    values: sps.csr_matrix
    grad2: sps.csr_matrix
    grad3: sps.csr_matrix

    @property
    def n_points(self) -> int:
        return len(self.weights)


# ============================================================================
# Skew Matrices
# ============================================================================


def skew_from_axial(axial: np.ndarray) -> np.ndarray:
    """Skew matrix Ψ with axl Ψ = (Ψ₃₂, Ψ₁₃, Ψ₂₁) equal to the given vector."""
    k1, k2, k3 = axial
    return np.array([[0.0, -k3, k2], [k3, 0.0, -k1], [-k2, k1, 0.0]])


def axial_vector(skew: np.ndarray) -> np.ndarray:
    return np.array([skew[2, 1], skew[0, 2], skew[1, 0]])


def macro_strain_field(ms: MacroStrain, xp: np.ndarray) -> np.ndarray:
    """m(ρ, Ψ)(x′) = ρe₁ + Ψp(x′) with p = (0, x₂, x₃); vectorized over leading axes of xp."""
    xp = np.asarray(xp, dtype=float)
    x2, x3 = xp[..., 0], xp[..., 1]
    k1, k2, k3 = ms.kappa
    return np.stack([ms.rho - k3 * x2 + k2 * x3, -k1 * x3, k1 * x2], axis=-1)


# ============================================================================
# Mesh Helpers
# ============================================================================


def triangle_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Signed areas; positive for counter-clockwise triangles."""
    p0, p1, p2 = (vertices[triangles[:, k]] for k in range(3))
    e1, e2 = p1 - p0, p2 - p0
    return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def _orient_counterclockwise(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    triangles = np.array(triangles, dtype=np.int64)
    flipped = triangle_areas(vertices=vertices, triangles=triangles) < 0.0
    triangles[flipped] = triangles[flipped][:, [0, 2, 1]]
    return triangles


def _drop_slivers(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    extent = float(np.max(np.ptp(vertices, axis=0)))
    keep = triangle_areas(vertices=vertices, triangles=triangles) > DEGENERATE_AREA_FACTOR * extent**2
    return triangles[keep]


def _compact(vertices: np.ndarray, triangles: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Remove vertices no triangle references and renumber."""
    used, renumbered = np.unique(triangles, return_inverse=True)
    return vertices[used], renumbered.reshape(triangles.shape)


def _segments_intersect(p: np.ndarray, q: np.ndarray, r: np.ndarray, s: np.ndarray) -> bool:
    def orient(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> float:
        return float((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))

    d1, d2, d3, d4 = orient(r, s, p), orient(r, s, q), orient(p, q, r), orient(p, q, s)
    return d1 * d2 < 0.0 and d3 * d4 < 0.0


def polygon_is_simple(polygon: np.ndarray) -> bool:
    n = len(polygon)
    for i in range(n):
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            if _segments_intersect(polygon[i], polygon[(i + 1) % n], polygon[j], polygon[(j + 1) % n]):
                return False
    return len({tuple(point) for point in polygon.tolist()}) == n


def polygon_signed_area(polygon: np.ndarray) -> float:
    x, y = polygon[:, 0], polygon[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def points_in_polygon(points: np.ndarray, polygon: np.ndarray) -> np.ndarray:
    """Even-odd ray casting, vectorized over points."""
    x, y = points[:, 0][:, None], points[:, 1][:, None]
    ax, ay = polygon[:, 0][None, :], polygon[:, 1][None, :]
    bx, by = np.roll(polygon[:, 0], -1)[None, :], np.roll(polygon[:, 1], -1)[None, :]
    straddles = (ay > y) != (by > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        crossing_x = ax + (y - ay) * (bx - ax) / (by - ay)
    crossings = straddles & (x < crossing_x)
    return np.count_nonzero(crossings, axis=1) % 2 == 1


def _distance_to_polygon(points: np.ndarray, polygon: np.ndarray) -> np.ndarray:
    a = polygon[None, :, :]
    b = np.roll(polygon, -1, axis=0)[None, :, :]
    p = points[:, None, :]
    ab = b - a
    t = np.clip(np.sum((p - a) * ab, axis=-1) / np.sum(ab * ab, axis=-1), 0.0, 1.0)
    closest = a + t[..., None] * ab
    return np.min(np.linalg.norm(p - closest, axis=-1), axis=1)


def _refine_to_target(cs: CrossSection, target_h: float) -> CrossSection:
    while cs.max_edge > target_h:
        cs = refine_uniform(cs=cs)
    return cs


# ============================================================================
# Mesh Generators
# ============================================================================


def _rectangle_mesh(width: float, height: float, center: tuple[float, float], target_h: float) -> CrossSection:
    """Criss-cross mesh: each grid cell split into four triangles through its centre (reflection symmetric)."""
    nx = max(1, math.ceil(width / target_h - 1e-9))
    ny = max(1, math.ceil(height / target_h - 1e-9))
    xs = center[0] - 0.5 * width + width * np.arange(nx + 1) / nx
    ys = center[1] - 0.5 * height + height * np.arange(ny + 1) / ny
    grid_x, grid_y = np.meshgrid(xs, ys, indexing="ij")
    corners = np.column_stack([grid_x.ravel(), grid_y.ravel()])
    mid_x, mid_y = np.meshgrid(0.5 * (xs[:-1] + xs[1:]), 0.5 * (ys[:-1] + ys[1:]), indexing="ij")
    centres = np.column_stack([mid_x.ravel(), mid_y.ravel()])
    vertices = np.vstack([corners, centres])

    i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    i, j = i.ravel(), j.ravel()
    a = i * (ny + 1) + j
    b = (i + 1) * (ny + 1) + j
    c = (i + 1) * (ny + 1) + j + 1
    d = i * (ny + 1) + j + 1
    m = len(corners) + i * ny + j
    triangles = np.concatenate(
        [np.column_stack([a, b, m]), np.column_stack([b, c, m]), np.column_stack([c, d, m]), np.column_stack([d, a, m])]
    )
    return CrossSection(vertices=vertices, triangles=triangles)


def _disk_mesh(radius: float, center: tuple[float, float], target_h: float) -> CrossSection:
    spacing = target_h / math.sqrt(2.0)
    n_rings = max(1, math.ceil(radius / spacing - 1e-9))
    points = [np.zeros((1, 2))]
    for ring in range(1, n_rings + 1):
        ring_radius = radius * ring / n_rings
        n_points = max(6, math.ceil(2.0 * math.pi * ring_radius / spacing))
        angles = 2.0 * math.pi * np.arange(n_points) / n_points
        points.append(ring_radius * np.column_stack([np.cos(angles), np.sin(angles)]))
    vertices = np.vstack(points) + np.asarray(center)
    triangles = _orient_counterclockwise(vertices=vertices, triangles=Delaunay(vertices).simplices)
    triangles = _drop_slivers(vertices=vertices, triangles=triangles)
    vertices, triangles = _compact(vertices=vertices, triangles=triangles)
    return _refine_to_target(cs=CrossSection(vertices=vertices, triangles=triangles), target_h=target_h)


def _polygon_mesh(polygon: np.ndarray, target_h: float) -> CrossSection:
    spacing = target_h / math.sqrt(2.0)
    boundary = []
    for start, end in zip(polygon, np.roll(polygon, -1, axis=0), strict=True):
        pieces = max(1, math.ceil(float(np.linalg.norm(end - start)) / spacing))
        t = np.arange(pieces)[:, None] / pieces
        boundary.append(start + t * (end - start))
    boundary_points = np.vstack(boundary)

    lower, upper = polygon.min(axis=0), polygon.max(axis=0)
    gx, gy = np.meshgrid(np.arange(lower[0], upper[0], spacing), np.arange(lower[1], upper[1], spacing), indexing="ij")
    candidates = np.column_stack([gx.ravel(), gy.ravel()])
    inside = points_in_polygon(points=candidates, polygon=polygon)
    candidates = candidates[inside]
    if len(candidates):
        candidates = candidates[_distance_to_polygon(points=candidates, polygon=polygon) >= 0.5 * spacing]
    vertices = np.vstack([boundary_points, candidates])

    triangles = _orient_counterclockwise(vertices=vertices, triangles=Delaunay(vertices).simplices)
    centroids = vertices[triangles].mean(axis=1)
    triangles = triangles[points_in_polygon(points=centroids, polygon=polygon)]
    triangles = _drop_slivers(vertices=vertices, triangles=triangles)
    vertices, triangles = _compact(vertices=vertices, triangles=triangles)
    return _refine_to_target(cs=CrossSection(vertices=vertices, triangles=triangles), target_h=target_h)


def build_section(shape: str, target_h: float, params: dict[str, Any] | None = None) -> CrossSection:
    """
    Conforming P1 mesh of a rectangle, disk or simple polygon with max edge ≤ target_h.

    params:
        rectangle: width, height (default 1), center_x2, center_x3 (default 0)
        disk: radius (default 1), center_x2, center_x3
        polygon: vertices as [[x2, x3], ...]
    """
    params = params or {}
    if target_h <= 0.0:
        raise ValueError(f"target_h must be positive, got {target_h}")
    kind = SHAPE_ALIASES.get(shape)
    if kind is None:
        raise ValueError(f"Unknown section shape '{shape}', expected one of {sorted(SHAPE_ALIASES)}")
    center = (float(params.get("center_x2", 0.0)), float(params.get("center_x3", 0.0)))

    if kind == "rectangle":
        width, height = float(params.get("width", 1.0)), float(params.get("height", 1.0))
        if width <= 0.0 or height <= 0.0:
            raise ValueError(f"Degenerate rectangle {width} x {height}")
        cs = _rectangle_mesh(width=width, height=height, center=center, target_h=target_h)
    elif kind == "disk":
        radius = float(params.get("radius", 1.0))
        if radius <= 0.0:
            raise ValueError(f"Degenerate disk radius {radius}")
        cs = _disk_mesh(radius=radius, center=center, target_h=target_h)
    else:
        polygon = np.array(params.get("vertices", []), dtype=float)
        if polygon.ndim != 2 or polygon.shape[1] != 2 or len(polygon) < 3:
            raise ValueError("polygon needs at least three [x2, x3] vertices")
        if not polygon_is_simple(polygon=polygon):
            raise ValueError("polygon is not simple (self-intersecting or repeated vertices)")
        signed_area = polygon_signed_area(polygon=polygon)
        if abs(signed_area) <= DEGENERATE_AREA_FACTOR * float(np.max(np.ptp(polygon, axis=0))) ** 2:
            raise ValueError("polygon has zero area")
        if signed_area < 0.0:
            polygon = polygon[::-1]
        cs = _polygon_mesh(polygon=polygon, target_h=target_h)

    LOGGER.info(f"Built {kind} section: {cs.n_vertices} vertices, {cs.n_triangles} triangles, max edge {cs.max_edge:.4g}")
    return cs


def refine_uniform(cs: CrossSection) -> CrossSection:
    """Split every triangle into four through its edge midpoints; coarse vertices keep their indices."""
    triangles = cs.triangles
    edges = np.sort(np.stack([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]], axis=1), axis=-1)
    unique_edges, edge_index = np.unique(edges.reshape(-1, 2), axis=0, return_inverse=True)
    midpoints = 0.5 * (cs.vertices[unique_edges[:, 0]] + cs.vertices[unique_edges[:, 1]])
    vertices = np.vstack([cs.vertices, midpoints])
    mid = cs.n_vertices + edge_index.reshape(-1, 3)
    a, b, c = triangles[:, 0], triangles[:, 1], triangles[:, 2]
    m_ab, m_bc, m_ca = mid[:, 0], mid[:, 1], mid[:, 2]
    fine = np.concatenate(
        [
            np.column_stack([a, m_ab, m_ca]),
            np.column_stack([m_ab, b, m_bc]),
            np.column_stack([m_ca, m_bc, c]),
            np.column_stack([m_ab, m_bc, m_ca]),
        ]
    )
    return CrossSection(
        vertices=vertices, triangles=fine, quadrature_order=cs.quadrature_order, transform=cs.transform
    )


# ============================================================================
# Quadrature and Moments
# ============================================================================


def _basis_gradients(cs: CrossSection) -> np.ndarray:
    """Constant gradients of the three P1 basis functions per triangle, shape (nt, 3, 2)."""
    corners = cs.vertices[cs.triangles]
    areas = triangle_areas(vertices=cs.vertices, triangles=cs.triangles)
    # ∇λ_i = (y_j − y_k, x_k − x_j) / 2A over cyclic (i, j, k)
    nxt, prv = np.roll(corners, -1, axis=1), np.roll(corners, -2, axis=1)
    return np.stack([nxt[..., 1] - prv[..., 1], prv[..., 0] - nxt[..., 0]], axis=-1) / (2.0 * areas[:, None, None])


def section_quadrature(cs: CrossSection, order: int | None = None) -> SectionQuadrature:
    """Quadrature points, weights, P1 values and gradients; the order-2 rule is exact for quadratics."""
    barycentric, reference_weights = _QUADRATURE_RULES[order or cs.quadrature_order]
    corners = cs.vertices[cs.triangles]  # (nt, 3, 2)
    areas = triangle_areas(vertices=cs.vertices, triangles=cs.triangles)
    n_local = len(reference_weights)
    n_points = cs.n_triangles * n_local

    points = np.einsum("qa,tad->tqd", barycentric, corners).reshape(n_points, 2)
    weights = (areas[:, None] * reference_weights[None, :]).ravel()

    gradients = _basis_gradients(cs=cs)

    rows = np.repeat(np.arange(n_points), 3)
    cols = np.repeat(cs.triangles, n_local, axis=0).ravel()
    shape = (n_points, cs.n_vertices)
    values = sps.csr_matrix((np.tile(barycentric, (cs.n_triangles, 1)).ravel(), (rows, cols)), shape=shape)
    values.eliminate_zeros()
    grad_per_point = np.repeat(gradients, n_local, axis=0)  # (n_points, 3, 2)
    grad2 = sps.csr_matrix((grad_per_point[..., 0].ravel(), (rows, cols)), shape=shape)
    grad3 = sps.csr_matrix((grad_per_point[..., 1].ravel(), (rows, cols)), shape=shape)
    return SectionQuadrature(points=points, weights=weights, values=values, grad2=grad2, grad3=grad3)


def section_moments(cs: CrossSection) -> tuple[float, np.ndarray, np.ndarray]:
    """Exact (area, ∫x′, ∫x′⊗x′) of the polygonal mesh domain."""
    quadrature = section_quadrature(cs=cs, order=2)
    w, x = quadrature.weights, quadrature.points
    return float(np.sum(w)), w @ x, np.einsum("q,qi,qj->ij", w, x, x)


def section_properties(cs: CrossSection) -> SectionProperties:
    area, first, second = section_moments(cs=cs)
    if float(np.max(np.abs(first))) > NORMALIZATION_TOL:
        LOGGER.warning(f"Section properties requested for a section with off-centre centroid {first / area}")
    i2, i3 = float(second[0, 0]), float(second[1, 1])
    return SectionProperties(area=area, i2=i2, i3=i3, mu_omega=i2 + i3)


def normalize_section(cs: CrossSection) -> CrossSection:
    """Translate to the centroid, rotate to principal axes (∫x₂x₃ = 0) and scale to unit area."""
    area, first, second = section_moments(cs=cs)
    if area <= 0.0:
        raise ValueError("Cannot normalize a zero-area section")
    centroid = first / area
    inertia = second - area * np.outer(centroid, centroid)
    if abs(inertia[0, 1]) <= PRINCIPAL_AXES_TIE_TOL * (inertia[0, 0] + inertia[1, 1]):
        angle = 0.0
    else:
        angle = 0.5 * math.atan2(2.0 * inertia[0, 1], inertia[0, 0] - inertia[1, 1])
    rotation = np.array([[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]])
    scale = 1.0 / math.sqrt(area)
    vertices = scale * (cs.vertices - centroid) @ rotation
    transform = SectionTransform(centroid=(float(centroid[0]), float(centroid[1])), angle=angle, scale=scale)
    LOGGER.debug(f"Normalized section: centroid {centroid}, angle {angle:.6g}, scale {scale:.6g}")
    return CrossSection(
        vertices=vertices, triangles=cs.triangles, quadrature_order=cs.quadrature_order, transform=transform
    )


def locate_points(cs: CrossSection, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Containing triangle index and barycentric coordinates for each point; ValueError outside the mesh."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    corners = cs.vertices[cs.triangles]
    p0 = corners[:, 0, :]
    basis = np.stack([corners[:, 1, :] - p0, corners[:, 2, :] - p0], axis=-1)  # (nt, 2, 2)
    inverse = np.linalg.inv(basis)
    local = np.einsum("tij,ptj->pti", inverse, points[:, None, :] - p0[None, :, :])
    barycentric = np.concatenate([1.0 - local.sum(axis=-1, keepdims=True), local], axis=-1)
    inside = np.all(barycentric >= -POINT_LOCATION_TOL, axis=-1)
    if not np.all(inside.any(axis=1)):
        missing = points[~inside.any(axis=1)][0]
        raise ValueError(f"Point {missing.tolist()} lies outside the cross-section")
    triangle = np.argmax(inside, axis=1)
    return triangle, barycentric[np.arange(len(points)), triangle]


def point_basis(cs: CrossSection, points: np.ndarray) -> SectionQuadrature:
    """P1 values and gradients at arbitrary section points (zero weights)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    triangle, barycentric = locate_points(cs=cs, points=points)
    gradients = _basis_gradients(cs=cs)[triangle]  # (n_points, 3, 2)
    rows = np.repeat(np.arange(len(points)), 3)
    cols = cs.triangles[triangle].ravel()
    shape = (len(points), cs.n_vertices)
    return SectionQuadrature(
        points=points,
        weights=np.zeros(len(points)),
        values=sps.csr_matrix((barycentric.ravel(), (rows, cols)), shape=shape),
        grad2=sps.csr_matrix((gradients[..., 0].ravel(), (rows, cols)), shape=shape),
        grad3=sps.csr_matrix((gradients[..., 1].ravel(), (rows, cols)), shape=shape),
    )


def mesh_to_dict(cs: CrossSection) -> dict[str, Any]:
    """Mesh dump for external inspection."""
    return {
        "vertices": cs.vertices.tolist(),
        "triangles": cs.triangles.tolist(),
        "quadrature_order": cs.quadrature_order,
        "transform": cs.transform.model_dump() if cs.transform else None,
    }
