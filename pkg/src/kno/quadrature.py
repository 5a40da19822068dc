"""Quadrature on intervals, the reference triangle and triangle meshes."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._triangle_tables import TRIANGLE_RULES
from .errors import ContractError, NumericError

# The rules are tabulated on this triangle (area 1/4).
REFERENCE_TRIANGLE = np.array([[0.0, 0.0], [1.0, 0.0], [math.sqrt(3.0) / 2.0, 0.5]])
REFERENCE_AREA = 0.25
MAX_TRIANGLE_DEGREE = max(TRIANGLE_RULES)


@dataclass
class QuadRule:
    points: np.ndarray
    weights: np.ndarray
    domain_measure: float

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.ndim == 1:
            self.points = self.points[:, None]
        self.weights = np.asarray(self.weights, dtype=np.float64).ravel()
        if self.points.shape[0] != self.weights.size or self.weights.size == 0:
            raise ContractError("a quadrature rule needs matching, non-empty points and weights")

    @property
    def n(self) -> int:
        return self.weights.size

    @property
    def dim(self) -> int:
        return self.points.shape[1]


def gauss_legendre(n: int, a: float = -1.0, b: float = 1.0) -> QuadRule:
    """n-point Gauss-Legendre rule on [a, b], exact through degree 2n - 1."""
    if n < 1 or int(n) != n:
        raise ContractError("Gauss-Legendre needs n >= 1")
    if not a < b:
        raise ContractError("Gauss-Legendre needs a < b")
    x, w = np.polynomial.legendre.leggauss(int(n))
    half = 0.5 * (b - a)
    return QuadRule(a + half * (x + 1.0), half * w, b - a)


def triangle_reference_rule(degree: int) -> QuadRule:
    """Fully symmetric positive rule on the reference triangle."""
    if degree not in TRIANGLE_RULES:
        raise ContractError(f"no tabulated triangle rule of degree {degree} "
                            f"(available: 1..{MAX_TRIANGLE_DEGREE})")
    bary, w = TRIANGLE_RULES[degree]
    bary = np.asarray(bary, dtype=np.float64)
    return QuadRule(bary @ REFERENCE_TRIANGLE, REFERENCE_AREA * np.asarray(w), REFERENCE_AREA)


# -- meshes ---------------------------------------------------------------------

def _signed_areas(vertices, triangles):
    a, b, c = (vertices[triangles[:, k]] for k in range(3))
    return 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))


def _boundary_vertices(triangles) -> np.ndarray:
    edges = np.sort(np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]]), axis=1)
    uniq, counts = np.unique(edges, axis=0, return_counts=True)
    return np.unique(uniq[counts == 1])


@dataclass
class Mesh:
    """Triangle mesh; triangles are stored counter-clockwise."""

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_vertices: np.ndarray = field(default=None)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 2)
        self.triangles = np.array(self.triangles, dtype=np.int64).reshape(-1, 3)
        V = self.vertices.shape[0]
        if self.triangles.size and (self.triangles.min() < 0 or self.triangles.max() >= V):
            raise ContractError("triangle vertex index out of range")
        area = _signed_areas(self.vertices, self.triangles)
        flat = np.flatnonzero(np.abs(area) <= 1e-14)
        if flat.size:
            raise ContractError(f"triangle {int(flat[0])} is degenerate (zero area)")
        flip = area < 0
        self.triangles[flip] = self.triangles[flip][:, [0, 2, 1]]
        if V > 1:
            from scipy.spatial import cKDTree
            if cKDTree(self.vertices).query_pairs(1e-12):
                raise ContractError("mesh has duplicate vertices")
        if self.boundary_vertices is None:
            self.boundary_vertices = _boundary_vertices(self.triangles)
        self.boundary_vertices = np.asarray(self.boundary_vertices, dtype=np.int64)

    @property
    def areas(self) -> np.ndarray:
        return _signed_areas(self.vertices, self.triangles)

    @property
    def area(self) -> float:
        return float(self.areas.sum())

    @property
    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.vertices.shape[0], dtype=bool)
        mask[self.boundary_vertices] = True
        return mask

    @classmethod
    def read(cls, path) -> "Mesh":
        """Text format: ``V T`` then V lines ``x y`` then T lines ``i j k``."""
        lines = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()]
        V, T = int(lines[0][0]), int(lines[0][1])
        verts = np.array([[float(t) for t in ln[:2]] for ln in lines[1:1 + V]])
        tris = np.array([[int(t) for t in ln[:3]] for ln in lines[1 + V:1 + V + T]], dtype=np.int64)
        return cls(verts, tris)

    def write(self, path) -> None:
        out = [f"{self.vertices.shape[0]} {self.triangles.shape[0]}"]
        out += [f"{float(x)!r} {float(y)!r}" for x, y in self.vertices]
        out += [f"{i} {j} {k}" for i, j, k in self.triangles]
        Path(path).write_text("\n".join(out) + "\n")


def refine(mesh: Mesh, n: int) -> Mesh:
    """Split every triangle into n^2 congruent triangles (conforming)."""
    if n == 1:
        return mesh
    verts: dict = {}
    coords = []
    tris = []

    def vid(p):
        key = (round(p[0], 11), round(p[1], 11))
        if key not in verts:
            verts[key] = len(coords)
            coords.append(p)
        return verts[key]

    for a, b, c in mesh.vertices[mesh.triangles]:
        grid = {}
        for i in range(n + 1):
            for j in range(n + 1 - i):
                grid[i, j] = vid(a + (b - a) * i / n + (c - a) * j / n)
        for i in range(n):
            for j in range(n - i):
                tris.append((grid[i, j], grid[i + 1, j], grid[i, j + 1]))
                if i + j < n - 1:
                    tris.append((grid[i + 1, j], grid[i + 1, j + 1], grid[i, j + 1]))
    return Mesh(np.array(coords), np.array(tris))


def reference_mesh() -> Mesh:
    return Mesh(REFERENCE_TRIANGLE.copy(), [[0, 1, 2]])


def unit_square_mesh(n_cells: int = 2) -> Mesh:
    """[0,1]^2 cut into n_cells^2 squares, each split into two triangles."""
    xs = np.linspace(0.0, 1.0, n_cells + 1)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    verts = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange((n_cells + 1) ** 2).reshape(n_cells + 1, n_cells + 1)
    tris = []
    for i in range(n_cells):
        for j in range(n_cells):
            v00, v10, v01, v11 = idx[i, j], idx[i + 1, j], idx[i, j + 1], idx[i + 1, j + 1]
            tris += [(v00, v10, v11), (v00, v11, v01)]
    return Mesh(verts, np.array(tris))


def map_rule_to_mesh(ref_rule: QuadRule, mesh: Mesh) -> QuadRule:
    """Composite rule: the reference rule pushed affinely onto every triangle."""
    if ref_rule.dim != 2:
        raise ContractError("reference rule must live on the reference triangle")
    R = REFERENCE_TRIANGLE
    Rinv = np.linalg.inv(np.column_stack([R[1] - R[0], R[2] - R[0]]))
    local = (ref_rule.points - R[0]) @ Rinv.T  # coordinates in the (R1-R0, R2-R0) frame
    pts, wts = [], []
    for t, (a, b, c) in enumerate(mesh.vertices[mesh.triangles]):
        J = np.column_stack([b - a, c - a])
        det = np.linalg.det(J)
        if abs(det) <= 1e-14:
            raise ContractError(f"triangle {t} is degenerate (zero area)")
        pts.append(a + local @ J.T)
        wts.append(ref_rule.weights * abs(det) / (2.0 * REFERENCE_AREA))
    return QuadRule(np.concatenate(pts), np.concatenate(wts), mesh.area)


def rule_for_budget(mesh: Mesh, budget: int) -> tuple[QuadRule, int, int]:
    """Composite rule with at least ``budget`` points.

    Refines the mesh by the smallest factor at which the largest tabulated rule
    reaches the budget, then takes the smallest degree that does. Returns
    ``(rule, degree, refinement)``.
    """
    degrees = sorted(TRIANGLE_RULES)
    n = 1
    while True:
        n_tri = mesh.triangles.shape[0] * n * n
        for deg in degrees:
            if n_tri * len(TRIANGLE_RULES[deg][1]) >= budget:
                return map_rule_to_mesh(triangle_reference_rule(deg), refine(mesh, n)), deg, n
        n += 1


def integrate(rule: QuadRule, f) -> float:
    """sum_i w_i f(y_i); ``f`` is a callable on (N, d) points or a value array."""
    vals = f(rule.points if rule.dim > 1 else rule.points[:, 0]) if callable(f) else f
    vals = np.asarray(vals, dtype=np.float64)
    if not np.all(np.isfinite(vals)):
        raise NumericError("integrand is not finite at a quadrature point")
    return float(np.tensordot(rule.weights, vals, axes=(0, 0)))
