"""Triangulations of 2D polygonal domains and P1/P0 element matrices.

Mesh coordinates are ``(r1, r3)``: the solution is constant along ``r2``,
so the in-plane directions of ``s`` are its first and third components.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .angular import AngularBasis
from .errors import MeshError

_AREA_TOL = 1e-300


@dataclass(frozen=True)
class BoundaryEdge:
    vertices: tuple[int, int]
    triangle: int
    normal: np.ndarray
    length: float


@dataclass(frozen=True)
class TriMesh:
    vertices: np.ndarray      # (V, 2)
    triangles: np.ndarray     # (T, 3), counter-clockwise
    boundary_edges: tuple[BoundaryEdge, ...]

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def areas(self) -> np.ndarray:
        return signed_areas(self.vertices, self.triangles)

    @classmethod
    def from_arrays(cls, vertices, triangles) -> "TriMesh":
        """Build a mesh, reorienting clockwise triangles and finding the boundary."""
        verts = np.ascontiguousarray(vertices, dtype=float)
        tris = np.array(triangles, dtype=np.int64, copy=True)
        if verts.ndim != 2 or verts.shape[1] != 2:
            raise MeshError("vertices must have shape (V, 2)")
        if tris.ndim != 2 or tris.shape[1] != 3:
            raise MeshError("triangles must have shape (T, 3)")
        if tris.size and (tris.min() < 0 or tris.max() >= len(verts)):
            raise MeshError("triangle references a vertex that does not exist")
        area = signed_areas(verts, tris)
        if np.any(np.abs(area) <= _AREA_TOL):
            bad = int(np.argmin(np.abs(area)))
            raise MeshError(f"degenerate (zero-area) triangle {bad}")
        flip = area < 0
        tris[flip] = tris[flip][:, [0, 2, 1]]
        return cls(verts, tris, _find_boundary(verts, tris))


def signed_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p0 = vertices[triangles[:, 0]]
    p1 = vertices[triangles[:, 1]]
    p2 = vertices[triangles[:, 2]]
    d1 = p1 - p0
    d2 = p2 - p0
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def _find_boundary(verts, tris) -> tuple[BoundaryEdge, ...]:
    owner: dict[tuple[int, int], list] = {}
    for t, tri in enumerate(tris):
        for k in range(3):
            a, b = int(tri[k]), int(tri[(k + 1) % 3])
            key = (min(a, b), max(a, b))
            owner.setdefault(key, []).append((t, a, b))
    edges = []
    for key in sorted(owner):
        uses = owner[key]
        if len(uses) > 2:
            raise MeshError(f"edge {key} shared by more than two triangles")
        if len(uses) == 1:
            t, a, b = uses[0]
            d = verts[b] - verts[a]
            length = float(np.hypot(d[0], d[1]))
            # Outward for a counter-clockwise triangle: rotate the edge clockwise.
            normal = np.array([d[1], -d[0]]) / length
            edges.append(BoundaryEdge((a, b), t, normal, length))
    return tuple(edges)


def unit_square_mesh(divisions: int) -> TriMesh:
    """Structured mesh of (0,1)^2; each cell split along its lower-left/upper-right diagonal."""
    n = int(divisions)
    if n < 1:
        raise MeshError("divisions must be >= 1")
    x = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(x, x, indexing="xy")
    verts = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    i, j = i.ravel(), j.ravel()
    v00 = j * (n + 1) + i
    v10 = v00 + 1
    v01 = v00 + (n + 1)
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    tris = np.empty((2 * n * n, 3), dtype=np.int64)
    tris[0::2] = lower
    tris[1::2] = upper
    return TriMesh.from_arrays(verts, tris)


def read_mesh(path: str | Path) -> TriMesh:
    """Read the plain-text format: a ``#vertices`` block of ``x y`` lines
    followed by a ``#triangles`` block of zero-based ``i j k`` lines."""
    verts, tris = [], []
    section = None
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            tag = line[1:].strip().lower()
            if tag in ("vertices", "triangles"):
                section = tag
            continue
        parts = line.split()
        try:
            if section == "vertices":
                verts.append([float(p) for p in parts[:2]])
            elif section == "triangles":
                tris.append([int(p) for p in parts[:3]])
            else:
                raise MeshError(f"{path}:{lineno}: data before a section header")
        except ValueError as exc:
            raise MeshError(f"{path}:{lineno}: cannot parse {line!r}") from exc
    if not verts or not tris:
        raise MeshError(f"{path}: missing vertices or triangles")
    return TriMesh.from_arrays(np.array(verts), np.array(tris))


def write_mesh(mesh: TriMesh, path: str | Path) -> None:
    lines = ["#vertices"]
    lines += [f"{x:.17g} {y:.17g}" for x, y in mesh.vertices]
    lines.append("#triangles")
    lines += [f"{a} {b} {c}" for a, b, c in mesh.triangles]
    Path(path).write_text("\n".join(lines) + "\n")


def hat_gradients(mesh: TriMesh) -> np.ndarray:
    """Constant gradients of the three P1 hat functions per triangle, shape (T, 3, 2)."""
    p = mesh.vertices[mesh.triangles]  # (T, 3, 2)
    area2 = 2.0 * mesh.areas
    grads = np.empty_like(p)
    for k in range(3):
        a = p[:, (k + 1) % 3]
        b = p[:, (k + 2) % 3]
        # grad lambda_k is perpendicular to the opposite edge (a, b).
        grads[:, k, 0] = (a[:, 1] - b[:, 1]) / area2
        grads[:, k, 1] = (b[:, 0] - a[:, 0]) / area2
    return grads


@dataclass(frozen=True)
class SpatialMatrices:
    """Element matrices for P1 (even) and P0 (odd) spatial coefficients.

    ``G[d][K, v] = int_K d/dr_d lambda_v`` for ``d`` in (0, 1), i.e. the
    ``r1`` and ``r3`` directions.  ``boundary`` holds one ``(normal,
    trace-mass)`` pair per distinct outward normal.
    """

    M_plus: sp.csr_matrix
    M_minus: np.ndarray
    G: tuple[sp.csr_matrix, sp.csr_matrix]
    boundary: tuple[tuple[np.ndarray, sp.csr_matrix], ...]


def assemble_spatial(mesh: TriMesh, normal_tol: float = 1e-12) -> SpatialMatrices:
    V, T = mesh.n_vertices, mesh.n_triangles
    area = mesh.areas
    if np.any(area <= _AREA_TOL):
        raise MeshError("degenerate (zero-area) triangle in mesh")
    tri = mesh.triangles

    local = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    vals = (area[:, None, None] * local[None]).ravel()
    M_plus = sp.csr_matrix((vals, (rows, cols)), shape=(V, V))

    grads = hat_gradients(mesh)
    trow = np.repeat(np.arange(T), 3)
    G = tuple(
        sp.csr_matrix(((area[:, None] * grads[:, :, d]).ravel(), (trow, tri.ravel())),
                      shape=(T, V))
        for d in range(2)
    )

    groups: list[tuple[np.ndarray, list]] = []
    for edge in mesh.boundary_edges:
        for nrm, members in groups:
            if np.linalg.norm(nrm - edge.normal) < normal_tol:
                members.append(edge)
                break
        else:
            groups.append((edge.normal, [edge]))
    emass = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
    boundary = []
    for nrm, members in groups:
        ab = np.array([e.vertices for e in members])
        ln = np.array([e.length for e in members])
        r = np.repeat(ab, 2, axis=1).ravel()
        c = np.tile(ab, (1, 2)).ravel()
        v = (ln[:, None, None] * emass[None]).ravel()
        boundary.append((nrm.copy(), sp.csr_matrix((v, (r, c)), shape=(V, V))))
    return SpatialMatrices(M_plus, area.copy(), G, tuple(boundary))


def dof_count(basis: AngularBasis | int, mesh: TriMesh | None = None, *,
              n_vertices: int | None = None, n_triangles: int | None = None) -> int:
    """Number of unknowns ``V * n_even + T * n_odd``."""
    if isinstance(basis, int):
        basis = AngularBasis.create(basis)
    V = mesh.n_vertices if mesh is not None else n_vertices
    T = mesh.n_triangles if mesh is not None else n_triangles
    if V is None or T is None:
        raise ValueError("need a mesh or explicit vertex/triangle counts")
    return V * basis.n_even + T * basis.n_odd


# Symmetric 7-point rule, exact for degree 5 (barycentric coords, weights sum to 1).
_R15 = np.sqrt(15.0)
_A1 = (6.0 - _R15) / 21.0
_A2 = (6.0 + _R15) / 21.0
TRI7_BARY = np.array([
    [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
    [_A1, _A1, 1.0 - 2.0 * _A1], [_A1, 1.0 - 2.0 * _A1, _A1], [1.0 - 2.0 * _A1, _A1, _A1],
    [_A2, _A2, 1.0 - 2.0 * _A2], [_A2, 1.0 - 2.0 * _A2, _A2], [1.0 - 2.0 * _A2, _A2, _A2],
])
TRI7_WEIGHTS = np.array(
    [9.0 / 40.0] + [(155.0 - _R15) / 1200.0] * 3 + [(155.0 + _R15) / 1200.0] * 3
)


def triangle_quadrature(mesh: TriMesh) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Degree-5 points on every triangle.

    Returns ``(points, weights, bary)`` with ``points`` of shape ``(T, 7, 2)``,
    ``weights`` of shape ``(T, 7)`` (already scaled by the area) and the
    barycentric coordinates ``(7, 3)`` which double as P1 hat values.
    """
    p = mesh.vertices[mesh.triangles]
    pts = np.einsum("qk,tkd->tqd", TRI7_BARY, p)
    w = mesh.areas[:, None] * TRI7_WEIGHTS[None, :]
    return pts, w, TRI7_BARY
