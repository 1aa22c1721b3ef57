"""Synthetic meshes for tests, training smoke runs, and benchmarks."""

from __future__ import annotations

import numpy as np

from .mesh import Mesh


def tetrahedron() -> Mesh:
    """Regular tetrahedron, all four vertices mutually adjacent."""
    positions = np.array([
        [1.0, 1.0, 1.0],
        [1.0, -1.0, -1.0],
        [-1.0, 1.0, -1.0],
        [-1.0, -1.0, 1.0],
    ]) / np.sqrt(3.0)
    faces = np.array([[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]])
    return Mesh(positions, faces)


def icosahedron(radius: float = 1.0) -> Mesh:
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array([
        [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
        [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
        [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
    ], dtype=np.float64)
    verts *= radius / np.linalg.norm(verts[0])
    faces = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ])
    return Mesh(verts, faces)


def icosphere(subdivisions: int, radius: float = 1.0) -> Mesh:
    """Icosahedron refined by edge midpoint splits, projected to a sphere.

    Subdivision 3 gives 642 vertices / 1280 faces.
    """
    mesh = icosahedron(radius)
    for _ in range(subdivisions):
        verts = list(mesh.positions)
        midpoint = {}

        def split(a: int, b: int) -> int:
            key = (min(a, b), max(a, b))
            if key not in midpoint:
                p = (verts[a] + verts[b]) / 2.0
                p *= radius / np.linalg.norm(p)
                midpoint[key] = len(verts)
                verts.append(p)
            return midpoint[key]

        faces = []
        for a, b, c in mesh.faces:
            ab, bc, ca = split(a, b), split(b, c), split(c, a)
            faces += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        mesh = Mesh(np.array(verts), np.array(faces))
    return mesh


def uv_sphere(n_rings: int, n_segments: int, radius: float = 1.0) -> Mesh:
    """Closed latitude/longitude sphere with n_rings * n_segments + 2 vertices."""
    if n_rings < 2 or n_segments < 3:
        raise ValueError("need n_rings >= 2 and n_segments >= 3")
    verts = [np.array([0.0, 0.0, radius])]
    for i in range(1, n_rings + 1):
        theta = np.pi * i / (n_rings + 1)
        for j in range(n_segments):
            phi = 2.0 * np.pi * j / n_segments
            verts.append(radius * np.array([
                np.sin(theta) * np.cos(phi),
                np.sin(theta) * np.sin(phi),
                np.cos(theta),
            ]))
    south = len(verts)
    verts.append(np.array([0.0, 0.0, -radius]))

    def ring(i: int, j: int) -> int:
        return 1 + i * n_segments + (j % n_segments)

    faces = []
    for j in range(n_segments):
        faces.append([0, ring(0, j), ring(0, j + 1)])
    for i in range(n_rings - 1):
        for j in range(n_segments):
            a, b = ring(i, j), ring(i, j + 1)
            c, d = ring(i + 1, j), ring(i + 1, j + 1)
            faces += [[a, c, d], [a, d, b]]
    for j in range(n_segments):
        faces.append([south, ring(n_rings - 1, j + 1), ring(n_rings - 1, j)])
    return Mesh(np.array(verts), np.array(faces))


def sphere_with_vertex_count(target: int, radius: float = 1.0) -> Mesh:
    """Closed sphere whose vertex count approximates ``target``."""
    if target < 8:
        raise ValueError("target too small")
    # n = rings * segments + 2 with segments ~ 2 * rings
    rings = max(2, int(round(np.sqrt((target - 2) / 2.0))))
    segments = max(3, int(round((target - 2) / rings)))
    return uv_sphere(rings, segments, radius)


def grid_patch(nx: int, ny: int, z: float = 0.0) -> Mesh:
    """Planar triangulated grid over [0, 1]^2 at height z (open mesh)."""
    if nx < 2 or ny < 2:
        raise ValueError("need at least a 2x2 grid")
    xs = np.linspace(0.0, 1.0, nx)
    ys = np.linspace(0.0, 1.0, ny)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    verts = np.stack([gx.ravel(), gy.ravel(), np.full(nx * ny, z)], axis=1)
    faces = []
    for i in range(nx - 1):
        for j in range(ny - 1):
            a = i * ny + j
            b = a + ny
            faces += [[a, b, a + 1], [b, b + 1, a + 1]]
    return Mesh(verts, np.array(faces))


def cube(side: float = 1.0) -> Mesh:
    """Axis-aligned cube, two triangles per side, centered at the origin."""
    h = side / 2.0
    verts = np.array([[x, y, z] for x in (-h, h) for y in (-h, h) for z in (-h, h)])
    quads = [
        (0, 1, 3, 2), (4, 6, 7, 5),  # x- x+
        (0, 4, 5, 1), (2, 3, 7, 6),  # y- y+
        (0, 2, 6, 4), (1, 5, 7, 3),  # z- z+
    ]
    faces = []
    for a, b, c, d in quads:
        faces += [[a, b, c], [a, c, d]]
    return Mesh(verts, np.array(faces))
