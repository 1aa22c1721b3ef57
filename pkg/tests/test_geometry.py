import numpy as np
import pytest

from pdmesh.geometry import (angle_deficits, compute_geometry, face_normals,
                             gaussian_curvature, local_features,
                             mean_curvature, mixed_voronoi_areas,
                             vertex_normals)
from pdmesh.mesh import Mesh
from pdmesh.noise import random_rotation
from pdmesh.shapes import grid_patch, icosphere, tetrahedron

from conftest import bumpy_icosahedron


def single_triangle(p0, p1, p2):
    return Mesh(np.array([p0, p1, p2], dtype=float), np.array([[0, 1, 2]]))


class TestFaceNormals:
    def test_ccw_xy_plane(self):
        m = single_triangle([0, 0, 0], [1, 0, 0], [0, 1, 0])
        assert np.allclose(face_normals(m), [[0, 0, 1]], atol=1e-15)

    def test_orientation_flip(self):
        m = single_triangle([0, 0, 0], [0, 1, 0], [1, 0, 0])
        assert np.allclose(face_normals(m), [[0, 0, -1]], atol=1e-15)

    def test_slanted(self):
        m = single_triangle([0, 0, 0], [1, 0, 0], [1, 1, 1])
        want = np.array([0.0, -1.0, 1.0]) / np.sqrt(2.0)
        assert np.allclose(face_normals(m), [want], atol=1e-15)

    def test_degenerate_flagged(self):
        m = Mesh(np.array([[0.0, 0, 0], [1, 0, 0], [2, 0, 0], [0, 1, 0]]),
                 np.array([[0, 1, 2], [0, 1, 3]]))  # first face is colinear
        cache = compute_geometry(m)
        assert cache.degenerate_face_count == 1
        assert not cache.valid_faces[0] and cache.valid_faces[1]
        assert np.array_equal(cache.face_normals[0], np.zeros(3))


def circumcenter(a, b, c):
    # intersection of perpendicular bisectors, in the triangle plane
    ab, ac = b - a, c - a
    n = np.cross(ab, ac)
    to = (np.dot(ab, ab) * np.cross(n, ac) + np.dot(ac, ac) * np.cross(ab, n))
    return a + to / (2.0 * np.dot(n, n))


def voronoi_corner_area(a, b, c):
    """Area of the Voronoi cell of corner ``a`` inside a non-obtuse
    triangle, from the explicit circumcenter construction (quadrilateral
    a, midpoint(ab), circumcenter, midpoint(ac))."""
    cc = circumcenter(a, b, c)
    quad = [a, (a + b) / 2.0, cc, (a + c) / 2.0]
    area = 0.0
    for i in range(4):
        p, q = quad[i], quad[(i + 1) % 4]
        area += np.cross(p - a, q - a) / 2.0
    return float(np.linalg.norm(area))


class TestMixedAreas:
    def test_partition_of_closed_surface(self, rng):
        m = bumpy_icosahedron(rng)
        cache = compute_geometry(m)
        assert cache.mixed_areas.sum() == pytest.approx(
            cache.face_areas.sum(), rel=1e-6)

    def test_equilateral_thirds(self):
        m = single_triangle([0, 0, 0], [1, 0, 0], [0.5, np.sqrt(3) / 2, 0])
        areas = mixed_voronoi_areas(m)
        assert np.allclose(areas, np.sqrt(3) / 12.0, atol=1e-12)

    def test_right_isoceles_vs_circumcenter_oracle(self):
        a, b, c = (np.array([0.0, 0, 0]), np.array([1.0, 0, 0]),
                   np.array([0.0, 1, 0]))
        m = single_triangle(a, b, c)
        areas = mixed_voronoi_areas(m)
        assert areas[0] == pytest.approx(voronoi_corner_area(a, b, c), abs=1e-12)
        assert areas[1] == pytest.approx(voronoi_corner_area(b, c, a), abs=1e-12)
        assert areas[2] == pytest.approx(voronoi_corner_area(c, a, b), abs=1e-12)
        assert areas.sum() == pytest.approx(0.5, abs=1e-12)

    def test_acute_triangles_vs_oracle(self, rng):
        for _ in range(20):
            pts = rng.normal(size=(3, 3))
            m = single_triangle(*pts)
            angles = compute_geometry(m).corner_angles[0]
            if angles.max() >= np.pi / 2 or angles.min() < 0.15:
                continue
            areas = mixed_voronoi_areas(m)
            for corner in range(3):
                a, b, c = pts[corner], pts[(corner + 1) % 3], pts[(corner + 2) % 3]
                assert areas[corner] == pytest.approx(
                    voronoi_corner_area(a, b, c), rel=1e-9)

    def test_obtuse_rule(self):
        # obtuse at vertex 0: gets area/2, others area/4
        m = single_triangle([0.0, 0.5, 0], [-2.0, 0, 0], [2.0, 0, 0])
        cache = compute_geometry(m)
        area = cache.face_areas[0]
        assert cache.corner_angles[0, 0] > np.pi / 2
        assert np.allclose(mixed_voronoi_areas(m, cache),
                           [area / 2, area / 4, area / 4], atol=1e-12)


class TestCurvature:
    def test_unit_icosphere_mean_curvature(self):
        m = icosphere(3)
        kh = mean_curvature(m)
        assert 0.95 <= kh.mean() <= 1.05

    def test_unit_icosphere_gaussian_curvature(self):
        m = icosphere(3)
        kg = gaussian_curvature(m)
        assert 0.9 <= kg.mean() <= 1.1

    def test_radius_two_sphere(self):
        m = icosphere(3, radius=2.0)
        assert mean_curvature(m).mean() == pytest.approx(0.5, rel=0.05)

    def test_flat_grid_interior(self):
        m = grid_patch(7, 7)
        cache = compute_geometry(m)
        interior = ~cache.boundary_vertices
        assert interior.any()
        assert mean_curvature(m, cache)[interior].max() < 1e-6
        assert np.abs(gaussian_curvature(m, cache)[interior]).max() < 1e-6

    def test_gauss_bonnet_closed_genus_zero(self, rng):
        for mesh in (icosphere(2), bumpy_icosahedron(rng), tetrahedron()):
            assert abs(angle_deficits(mesh).sum() - 4.0 * np.pi) < 1e-9

    def test_rigid_motion_invariance(self, rng):
        m = bumpy_icosahedron(rng)
        rot = random_rotation(rng)
        moved = m.with_positions(m.positions @ rot.T + np.array([3.0, -1.0, 2.0]))
        assert np.abs(mean_curvature(moved) - mean_curvature(m)).max() < 1e-9
        assert np.abs(gaussian_curvature(moved)
                      - gaussian_curvature(m)).max() < 1e-9
        n0 = vertex_normals(m) @ rot.T
        assert np.abs(vertex_normals(moved) - n0).max() < 1e-9

    def test_scale_covariance(self, rng):
        m = bumpy_icosahedron(rng)
        s = 2.75
        scaled = m.with_positions(m.positions * s)
        kh, khs = mean_curvature(m), mean_curvature(scaled)
        kg, kgs = gaussian_curvature(m), gaussian_curvature(scaled)
        assert np.allclose(khs, kh / s, rtol=1e-7)
        assert np.allclose(kgs, kg / s ** 2, rtol=1e-7)

    def test_cotangent_weight_symmetry(self, rng):
        m = bumpy_icosahedron(rng)
        w = compute_geometry(m).cot_weights.to_dense()
        assert np.array_equal(w, w.T)


class TestVertexNormals:
    def test_flat_plane(self):
        m = grid_patch(5, 5)
        assert np.allclose(vertex_normals(m), [[0, 0, 1]] * m.n_vertices,
                           atol=1e-12)

    def test_sphere_radial(self):
        m = icosphere(2)
        n = vertex_normals(m)
        radial = m.positions / np.linalg.norm(m.positions, axis=1)[:, None]
        assert (np.sum(n * radial, axis=1) > 0.99).all()

    def test_corner_with_equal_area_faces(self):
        # three unit right triangles in the coordinate planes meeting at 0
        m = Mesh(np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]]),
                 np.array([[0, 1, 2], [0, 2, 3], [0, 3, 1]]))
        n = vertex_normals(m)
        assert np.allclose(n[0], np.ones(3) / np.sqrt(3.0), atol=1e-12)

    def test_angle_weighting_flag(self, rng):
        m = bumpy_icosahedron(rng)
        area_w = vertex_normals(m, weighting="area")
        angle_w = vertex_normals(m, weighting="angle")
        assert area_w.shape == angle_w.shape
        assert not np.allclose(area_w, angle_w)  # genuinely different rule
        with pytest.raises(ValueError, match="weighting"):
            vertex_normals(m, weighting="nope")


class TestLocalFeatures:
    def test_shape_and_composition(self, rng):
        m = bumpy_icosahedron(rng)
        feats = local_features(m)
        assert feats.values.shape == (m.n_vertices, 5)
        assert np.array_equal(feats.values[:, :3], vertex_normals(m))
        assert np.array_equal(feats.values[:, 3], mean_curvature(m))
        assert np.array_equal(feats.values[:, 4], gaussian_curvature(m))

    def test_icosphere_rows(self):
        m = icosphere(3)
        feats = local_features(m).values
        radial = m.positions / np.linalg.norm(m.positions, axis=1)[:, None]
        assert (np.sum(feats[:, :3] * radial, axis=1) > 0.99).all()
        assert feats[:, 3].mean() == pytest.approx(1.0, abs=0.05)
        assert feats[:, 4].mean() == pytest.approx(1.0, abs=0.1)

    def test_plane_rows(self):
        m = grid_patch(6, 6)
        cache = compute_geometry(m)
        feats = local_features(m, cache)
        interior = ~cache.boundary_vertices
        assert np.allclose(feats.values[interior, :3], [0, 0, 1], atol=1e-9)
        assert np.abs(feats.values[interior, 3:]).max() < 1e-6

    def test_normals_unit_where_valid(self, rng):
        m = bumpy_icosahedron(rng)
        feats = local_features(m)
        norms = np.linalg.norm(feats.values[:, :3], axis=1)
        assert np.allclose(norms[feats.valid], 1.0, atol=1e-6)

    def test_all_finite(self, rng):
        m = bumpy_icosahedron(rng)
        assert np.isfinite(local_features(m).values).all()
