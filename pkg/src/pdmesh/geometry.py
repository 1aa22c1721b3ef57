"""Discrete differential geometry: normals, mixed areas, curvatures.

Mean curvature comes from the norm of the cotangent-weighted umbrella
vector over four times the mixed Voronoi area; Gaussian curvature from
the angle deficit over the mixed area.  Mixed areas follow the usual
rule for triangulated surfaces: circumcentric (Voronoi) areas in
non-obtuse triangles, area/2 at the obtuse corner and area/4 at the
other two corners of obtuse triangles.

Faces below an area threshold are kept in the connectivity but excluded
from every geometric quantity; affected vertices are flagged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import Mesh
from .sparse import SparseMatrix

DEGENERATE_AREA = 1e-12
COT_CLAMP = 1e4


@dataclass(frozen=True)
class GeometryCache:
    """Per-mesh geometric quantities shared by the operators below."""

    face_normals: np.ndarray       # (f, 3) unit rows, zeros where degenerate
    face_areas: np.ndarray         # (f,)
    corner_angles: np.ndarray      # (f, 3) interior angle at each face corner
    cot_weights: SparseMatrix      # symmetric (n, n) cotangent edge weights
    mixed_areas: np.ndarray        # (n,)
    valid_faces: np.ndarray        # (f,) bool
    valid_vertices: np.ndarray     # (n,) bool: positive area + defined normal
    boundary_vertices: np.ndarray  # (n,) bool: touch an edge with one face
    degenerate_face_count: int


@dataclass(frozen=True)
class LocalFeatures:
    """Per-vertex [unit normal | mean curvature | Gaussian curvature]."""

    values: np.ndarray  # (n, 5)
    valid: np.ndarray   # (n,) bool


def compute_geometry(mesh: Mesh) -> GeometryCache:
    p, faces = mesh.positions, mesh.faces
    n, f = mesh.n_vertices, mesh.n_faces

    e0 = p[faces[:, 2]] - p[faces[:, 1]]  # edge opposite corner 0
    e1 = p[faces[:, 0]] - p[faces[:, 2]]
    e2 = p[faces[:, 1]] - p[faces[:, 0]]
    cross = np.cross(e2, -e1)             # (v1 - v0) x (v2 - v0)
    double_area = np.linalg.norm(cross, axis=1)
    areas = double_area / 2.0
    valid = areas >= DEGENERATE_AREA

    normals = np.zeros((f, 3))
    normals[valid] = cross[valid] / double_area[valid, None]

    # interior angles via arccos of normalized incident edge pairs
    lengths = np.stack([np.linalg.norm(e0, axis=1),
                        np.linalg.norm(e1, axis=1),
                        np.linalg.norm(e2, axis=1)], axis=1)
    angles = np.zeros((f, 3))
    pairs = ((0, e2, -e1), (1, e0, -e2), (2, e1, -e0))
    for corner, u, v in pairs:
        lu = np.linalg.norm(u, axis=1)
        lv = np.linalg.norm(v, axis=1)
        denom = np.where(valid, lu * lv, 1.0)
        cosine = np.clip(np.einsum("ij,ij->i", u, v) / denom, -1.0, 1.0)
        angles[:, corner] = np.where(valid, np.arccos(cosine), 0.0)

    with np.errstate(divide="ignore", invalid="ignore"):
        cots = np.cos(angles) / np.sin(angles)
    cots = np.clip(np.nan_to_num(cots, nan=0.0, posinf=COT_CLAMP,
                                 neginf=-COT_CLAMP), -COT_CLAMP, COT_CLAMP)
    cots[~valid] = 0.0

    # cotangent weights: edge opposite corner t collects cot(angle at t)
    edge_u = faces[:, [1, 2, 0]].reshape(-1)
    edge_v = faces[:, [2, 0, 1]].reshape(-1)
    w_vals = cots.reshape(-1)
    lo = np.minimum(edge_u, edge_v)
    hi = np.maximum(edge_u, edge_v)
    key = lo * np.int64(n) + hi
    uniq, inverse, counts = np.unique(key, return_inverse=True,
                                      return_counts=True)
    acc = np.zeros(uniq.size)
    np.add.at(acc, inverse, w_vals)
    ul, uh = uniq // n, uniq % n
    cot_weights = SparseMatrix(
        (n, n),
        np.concatenate([ul, uh]), np.concatenate([uh, ul]),
        np.concatenate([acc, acc]))

    mixed = np.zeros(n)
    obtuse = angles > (np.pi / 2.0 + 0.0)
    any_obtuse = obtuse.any(axis=1)
    sq = lengths ** 2
    for corner in range(3):
        j, k = (corner + 1) % 3, (corner + 2) % 3
        voronoi = (sq[:, j] * cots[:, j] + sq[:, k] * cots[:, k]) / 8.0
        obtuse_share = np.where(obtuse[:, corner], areas / 2.0, areas / 4.0)
        contrib = np.where(any_obtuse, obtuse_share, voronoi)
        contrib = np.where(valid, contrib, 0.0)
        np.add.at(mixed, faces[:, corner], contrib)

    # boundary: undirected edges with exactly one incident face
    he = np.sort(faces[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
    uniq_e, edge_counts = np.unique(he, axis=0, return_counts=True)
    boundary = np.zeros(n, dtype=bool)
    boundary[uniq_e[edge_counts == 1].reshape(-1)] = True

    has_valid_face = np.zeros(n, dtype=bool)
    has_valid_face[faces[valid].reshape(-1)] = True

    return GeometryCache(
        face_normals=normals,
        face_areas=areas,
        corner_angles=angles,
        cot_weights=cot_weights,
        mixed_areas=mixed,
        valid_faces=valid,
        valid_vertices=(mixed > 0.0) & has_valid_face,
        boundary_vertices=boundary,
        degenerate_face_count=int((~valid).sum()),
    )


def face_normals(mesh: Mesh, cache: GeometryCache | None = None) -> np.ndarray:
    """Unit face normals, (v1 - v0) x (v2 - v0); zero rows for degenerate faces."""
    cache = cache or compute_geometry(mesh)
    return cache.face_normals


def mixed_voronoi_areas(mesh: Mesh, cache: GeometryCache | None = None) -> np.ndarray:
    cache = cache or compute_geometry(mesh)
    return cache.mixed_areas


def cot_laplacian(mesh: Mesh, cache: GeometryCache | None = None) -> SparseMatrix:
    """Operator L with (L P)_v = sum_u w_vu (P_v - P_u)."""
    cache = cache or compute_geometry(mesh)
    w = cache.cot_weights
    n = w.shape[0]
    rows = np.repeat(np.arange(n, dtype=np.int64), np.diff(w.indptr))
    rows = np.concatenate([rows, np.arange(n, dtype=np.int64)])
    cols = np.concatenate([w.indices, np.arange(n, dtype=np.int64)])
    vals = np.concatenate([-w.data, w.row_sums()])
    return SparseMatrix((n, n), rows, cols, vals)


def mean_curvature(mesh: Mesh, cache: GeometryCache | None = None) -> np.ndarray:
    """|sum_u w_vu (P_v - P_u)| / (4 A_mixed); zero where the area vanishes."""
    cache = cache or compute_geometry(mesh)
    umbrella = cot_laplacian(mesh, cache).matmul(mesh.positions)
    norms = np.linalg.norm(umbrella, axis=1)
    ok = cache.mixed_areas > 0.0
    out = np.zeros(mesh.n_vertices)
    out[ok] = norms[ok] / (4.0 * cache.mixed_areas[ok])
    return out


def angle_deficits(mesh: Mesh, cache: GeometryCache | None = None) -> np.ndarray:
    """2*pi minus the sum of incident interior angles, per vertex."""
    cache = cache or compute_geometry(mesh)
    sums = np.zeros(mesh.n_vertices)
    contrib = np.where(cache.valid_faces[:, None], cache.corner_angles, 0.0)
    np.add.at(sums, mesh.faces.reshape(-1), contrib.reshape(-1))
    return 2.0 * np.pi - sums


def gaussian_curvature(mesh: Mesh, cache: GeometryCache | None = None) -> np.ndarray:
    cache = cache or compute_geometry(mesh)
    ok = cache.mixed_areas > 0.0
    out = np.zeros(mesh.n_vertices)
    out[ok] = angle_deficits(mesh, cache)[ok] / cache.mixed_areas[ok]
    return out


def vertex_normals(mesh: Mesh, cache: GeometryCache | None = None,
                   weighting: str = "area") -> np.ndarray:
    """Weighted average of incident valid face normals, unit length.

    ``weighting`` is "area" (default) or "angle" (incident corner angle).
    Vertices with no valid incident face get a zero row.
    """
    cache = cache or compute_geometry(mesh)
    if weighting == "area":
        w = np.repeat(cache.face_areas[:, None], 3, axis=1)
    elif weighting == "angle":
        w = cache.corner_angles
    else:
        raise ValueError(f"unknown weighting {weighting!r}")
    w = np.where(cache.valid_faces[:, None], w, 0.0)
    acc = np.zeros((mesh.n_vertices, 3))
    for corner in range(3):
        np.add.at(acc, mesh.faces[:, corner],
                  w[:, corner, None] * cache.face_normals)
    norms = np.linalg.norm(acc, axis=1)
    ok = norms > 0.0
    acc[ok] /= norms[ok, None]
    acc[~ok] = 0.0
    return acc


def local_features(mesh: Mesh, cache: GeometryCache | None = None) -> LocalFeatures:
    """Per-vertex feature targets: [normal (3) | kappa_H (1) | kappa_G (1)]."""
    cache = cache or compute_geometry(mesh)
    values = np.concatenate([
        vertex_normals(mesh, cache),
        mean_curvature(mesh, cache)[:, None],
        gaussian_curvature(mesh, cache)[:, None],
    ], axis=1)
    return LocalFeatures(values=values, valid=cache.valid_vertices)
