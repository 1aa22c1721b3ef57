"""Triangle mesh representation and graph operator construction.

A mesh is vertex positions plus triangular face connectivity.  Manifold
topology is not required anywhere in the package; the builders below
work on any triangle soup whose faces index valid, distinct vertices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sparse import SparseMatrix


class DegenerateGeometryError(ValueError):
    """Raised when geometry collapses below what an operation tolerates."""


@dataclass(frozen=True)
class Mesh:
    """Immutable triangle mesh: positions (n, 3) and faces (f, 3).

    Invariants checked on construction: n >= 3, f >= 1, all face indices
    in range, and no face repeats a vertex.
    """

    positions: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        positions = np.asarray(self.positions, dtype=np.float64)
        faces = np.asarray(self.faces, dtype=np.int64)
        if positions.ndim != 2 or positions.shape[1] != 3:
            raise ValueError("positions must be (n, 3)")
        if faces.ndim != 2 or faces.shape[1] != 3:
            raise ValueError("faces must be (f, 3)")
        if positions.shape[0] < 3:
            raise ValueError("mesh needs at least 3 vertices")
        if faces.shape[0] < 1:
            raise ValueError("mesh needs at least 1 face")
        if faces.min() < 0 or faces.max() >= positions.shape[0]:
            raise ValueError("face index out of range")
        if ((faces[:, 0] == faces[:, 1]) | (faces[:, 1] == faces[:, 2])
                | (faces[:, 0] == faces[:, 2])).any():
            raise ValueError("face repeats a vertex index")
        if not np.isfinite(positions).all():
            raise ValueError("non-finite vertex position")
        positions.setflags(write=False)
        faces.setflags(write=False)
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "faces", faces)

    @property
    def n_vertices(self) -> int:
        return self.positions.shape[0]

    @property
    def n_faces(self) -> int:
        return self.faces.shape[0]

    def with_positions(self, positions: np.ndarray) -> "Mesh":
        """Same connectivity, new coordinates."""
        return Mesh(positions, self.faces)

    def edges(self) -> np.ndarray:
        """Unique undirected edges as a sorted (m, 2) array."""
        e = self.faces[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)
        e = np.sort(e, axis=1)
        return np.unique(e, axis=0)


def build_vertex_adjacency(mesh: Mesh) -> SparseMatrix:
    """Symmetric binary vertex adjacency from shared face edges."""
    e = mesh.edges()
    rows = np.concatenate([e[:, 0], e[:, 1]])
    cols = np.concatenate([e[:, 1], e[:, 0]])
    n = mesh.n_vertices
    return SparseMatrix((n, n), rows, cols, np.ones(rows.size))


def build_face_adjacency(mesh: Mesh) -> SparseMatrix:
    """Symmetric binary face adjacency: faces sharing an undirected edge.

    Non-manifold edges (more than two incident faces) connect every pair
    of their incident faces.
    """
    f = mesh.n_faces
    halfedges = np.sort(mesh.faces[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
    face_of = np.repeat(np.arange(f, dtype=np.int64), 3)
    order = np.lexsort((halfedges[:, 1], halfedges[:, 0]))
    halfedges, face_of = halfedges[order], face_of[order]
    _, starts, counts = np.unique(halfedges, axis=0,
                                  return_index=True, return_counts=True)
    pairs = set()
    for s, c in zip(starts, counts):
        if c < 2:
            continue
        group = face_of[s:s + c]
        for i in range(c):
            for j in range(i + 1, c):
                a, b = int(group[i]), int(group[j])
                if a != b:
                    pairs.add((min(a, b), max(a, b)))
    if pairs:
        p = np.array(sorted(pairs), dtype=np.int64)
        rows = np.concatenate([p[:, 0], p[:, 1]])
        cols = np.concatenate([p[:, 1], p[:, 0]])
        vals = np.ones(rows.size)
    else:
        rows = cols = np.empty(0, dtype=np.int64)
        vals = np.empty(0)
    return SparseMatrix((f, f), rows, cols, vals)


def build_vertex_face_adjacency(mesh: Mesh) -> SparseMatrix:
    """Binary n x f incidence; column sums are exactly 3."""
    rows = mesh.faces.reshape(-1)
    cols = np.repeat(np.arange(mesh.n_faces, dtype=np.int64), 3)
    return SparseMatrix((mesh.n_vertices, mesh.n_faces),
                        rows, cols, np.ones(rows.size))


def normalize_adjacency(adj: SparseMatrix) -> SparseMatrix:
    """Symmetric degree normalization of a binary adjacency.

    Adds a self loop to every node, then rescales each surviving entry
    (i, j) by ((1 + deg_i) * (1 + deg_j)) ** -0.5.  The result is
    symmetric with spectral radius at most 1.
    """
    n, m = adj.shape
    if n != m:
        raise ValueError("adjacency must be square")
    deg = adj.row_sums()
    inv_sqrt = 1.0 / np.sqrt(deg + 1.0)
    rows = np.repeat(np.arange(n, dtype=np.int64), np.diff(adj.indptr))
    cols = adj.indices
    rows = np.concatenate([rows, np.arange(n, dtype=np.int64)])
    cols = np.concatenate([cols, np.arange(n, dtype=np.int64)])
    vals = inv_sqrt[rows] * inv_sqrt[cols]
    return SparseMatrix((n, n), rows, cols, vals)


@dataclass(frozen=True)
class CanonicalTransform:
    """Translate-then-scale map into the origin-centered unit cube."""

    translation: np.ndarray  # added before scaling
    scale: float             # strictly positive

    def apply(self, positions: np.ndarray) -> np.ndarray:
        return (positions + self.translation) * self.scale

    def invert(self, positions: np.ndarray) -> np.ndarray:
        return positions / self.scale - self.translation


def canonicalize(mesh: Mesh) -> tuple[Mesh, CanonicalTransform]:
    """Center the bounding box at the origin and scale the longest side to 1.

    Raises :class:`DegenerateGeometryError` when every point coincides
    (zero maximum extent), since no scale can then be defined.
    """
    lo = mesh.positions.min(axis=0)
    hi = mesh.positions.max(axis=0)
    extent = float((hi - lo).max())
    if extent <= 0.0:
        raise DegenerateGeometryError("mesh has zero extent, cannot canonicalize")
    transform = CanonicalTransform(translation=-(lo + hi) / 2.0,
                                   scale=1.0 / extent)
    return mesh.with_positions(transform.apply(mesh.positions)), transform
