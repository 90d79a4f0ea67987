"""Mesh I/O tests: OBJ parsing corner cases, write/parse round-trips, PLY
layout, unit-sphere normalization, and permutation bookkeeping."""

import struct

import numpy as np
import pytest

from npt.meshio import (Mesh, MeshError, build_edge_list, format_obj,
                        index_colors, inverse_permutation,
                        normalize_unit_sphere, parse_obj, permute_vertices,
                        read_obj, write_obj, write_ply_colored)


def random_mesh(rng, v=12, f=15):
    vertices = rng.uniform(-2, 2, (v, 3))
    faces = []
    while len(faces) < f:
        tri = rng.choice(v, size=3, replace=False)
        faces.append(tuple(tri))
    return Mesh(vertices, np.array(faces))


class TestParseObj:
    def test_minimal_triangle(self):
        mesh = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n")
        assert mesh.num_vertices == 3
        np.testing.assert_array_equal(mesh.faces, [[0, 1, 2]])

    def test_quad_fan_triangulation(self):
        mesh = parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
        np.testing.assert_array_equal(mesh.faces, [[0, 1, 2], [0, 2, 3]])

    def test_slash_suffixes_ignored(self):
        plain = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n")
        suffixed = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1/1/1 2/2/2 3/3/3\n")
        np.testing.assert_array_equal(plain.faces, suffixed.faces)

    def test_negative_relative_indices(self):
        mesh = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n")
        np.testing.assert_array_equal(mesh.faces, [[0, 1, 2]])

    def test_comments_and_blank_lines(self):
        mesh = parse_obj("# header\n\nv 0 0 0 # trailing\nv 1 0 0\nv 0 1 0\nf 1 2 3\n")
        assert mesh.num_vertices == 3

    def test_unknown_records_warn_with_count(self):
        text = "vn 0 0 1\nvt 0 0\nv 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n"
        with pytest.warns(UserWarning, match="skipped 2"):
            parse_obj(text)

    def test_malformed_coordinate_reports_line(self):
        with pytest.raises(MeshError, match="line 2"):
            parse_obj("v 0 0 0\nv 1 oops 0\n")

    def test_face_index_out_of_range_reports_line(self):
        with pytest.raises(MeshError, match="line 2"):
            parse_obj("v 0 0 0\nf 1 2 3\n")

    def test_zero_vertices_rejected(self):
        with pytest.raises(MeshError, match="no vertices"):
            parse_obj("# nothing here\n")


class TestRoundTrip:
    def test_write_parse_preserves_structure(self, tmp_path):
        rng = np.random.default_rng(21)
        for k in range(10):
            mesh = random_mesh(rng)
            path = tmp_path / f"m{k}.obj"
            write_obj(mesh, path)
            back = read_obj(path)
            assert back.num_vertices == mesh.num_vertices
            np.testing.assert_array_equal(back.faces, mesh.faces)
            np.testing.assert_allclose(back.vertices, mesh.vertices, atol=1e-8)

    def test_format_is_nine_significant_digits(self):
        mesh = Mesh([[0.123456789123, 1.0, -2.0]], np.zeros((0, 3)))
        assert "v 0.123456789 1 -2" in format_obj(mesh)


class TestPly:
    def test_header_and_binary_layout(self, tmp_path):
        rng = np.random.default_rng(22)
        mesh = random_mesh(rng, v=7, f=4)
        path = tmp_path / "m.ply"
        write_ply_colored(mesh, index_colors(7), path)
        raw = path.read_bytes()
        header, _, body = raw.partition(b"end_header\n")
        assert b"format binary_little_endian 1.0" in header
        assert b"element vertex 7" in header
        assert b"element face 4" in header
        assert len(body) == 7 * (12 + 3) + 4 * (1 + 12)
        x, y, z, r, g, b = struct.unpack_from("<fffBBB", body, 0)
        np.testing.assert_allclose([x, y, z], mesh.vertices[0], rtol=1e-6)
        assert (r, g, b) == (255, 0, 0)  # vertex 0 is hue 0: red

    def test_color_count_must_match(self, tmp_path):
        rng = np.random.default_rng(23)
        mesh = random_mesh(rng, v=5, f=3)
        with pytest.raises(MeshError):
            write_ply_colored(mesh, index_colors(4), tmp_path / "m.ply")

    def test_hue_ramp_monotone_in_index(self):
        colors = index_colors(16)
        assert colors.shape == (16, 3)
        assert tuple(colors[0]) == (255, 0, 0)
        assert not np.array_equal(colors[1], colors[14])


class TestNormalize:
    def test_idempotent(self):
        rng = np.random.default_rng(24)
        mesh = random_mesh(rng)
        once, _, _ = normalize_unit_sphere(mesh)
        twice, _, _ = normalize_unit_sphere(once)
        np.testing.assert_allclose(twice.vertices, once.vertices, atol=1e-12)

    def test_similarity_invariance(self):
        rng = np.random.default_rng(25)
        mesh = random_mesh(rng)
        base, _, _ = normalize_unit_sphere(mesh)
        moved = Mesh(3.0 * mesh.vertices + np.array([1.0, 2.0, 3.0]), mesh.faces)
        renorm, _, _ = normalize_unit_sphere(moved)
        np.testing.assert_allclose(renorm.vertices, base.vertices, atol=1e-12)

    def test_two_point_example(self):
        mesh = Mesh([[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]], np.zeros((0, 3)))
        out, centroid, scale = normalize_unit_sphere(mesh)
        np.testing.assert_allclose(out.vertices, [[-1, 0, 0], [1, 0, 0]], atol=1e-15)
        np.testing.assert_allclose(centroid, [1, 0, 0])
        assert scale == 1.0

    def test_max_radius_is_one(self):
        rng = np.random.default_rng(26)
        mesh = random_mesh(rng)
        out, _, _ = normalize_unit_sphere(mesh)
        radius = np.linalg.norm(out.vertices, axis=1).max()
        assert abs(radius - 1.0) < 1e-12

    def test_coincident_vertices_rejected(self):
        with pytest.raises(MeshError):
            normalize_unit_sphere(Mesh(np.ones((4, 3)), np.zeros((0, 3))))

    def test_denormalization_transform_returned(self):
        rng = np.random.default_rng(27)
        mesh = random_mesh(rng)
        out, centroid, scale = normalize_unit_sphere(mesh)
        np.testing.assert_allclose(out.vertices * scale + centroid, mesh.vertices, atol=1e-12)


class TestPermute:
    def test_identity_permutation(self):
        rng = np.random.default_rng(28)
        mesh = random_mesh(rng)
        out = permute_vertices(mesh, np.arange(mesh.num_vertices))
        np.testing.assert_array_equal(out.vertices, mesh.vertices)
        np.testing.assert_array_equal(out.faces, mesh.faces)

    def test_inverse_restores_exactly(self):
        rng = np.random.default_rng(29)
        mesh = random_mesh(rng)
        perm = rng.permutation(mesh.num_vertices)
        back = permute_vertices(permute_vertices(mesh, perm), inverse_permutation(perm))
        np.testing.assert_array_equal(back.vertices, mesh.vertices)
        np.testing.assert_array_equal(back.faces, mesh.faces)

    def test_geometry_preserved(self):
        def face_areas(mesh):
            a = mesh.vertices[mesh.faces[:, 0]]
            b = mesh.vertices[mesh.faces[:, 1]]
            c = mesh.vertices[mesh.faces[:, 2]]
            return np.sort(0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1))

        rng = np.random.default_rng(30)
        mesh = random_mesh(rng)
        perm = rng.permutation(mesh.num_vertices)
        shuffled = permute_vertices(mesh, perm)
        np.testing.assert_allclose(face_areas(shuffled), face_areas(mesh), rtol=1e-12)

    def test_invalid_permutation_rejected(self):
        rng = np.random.default_rng(31)
        mesh = random_mesh(rng, v=5)
        with pytest.raises(MeshError):
            permute_vertices(mesh, np.array([0, 1, 2, 3, 3]))


class TestEdgeList:
    def test_single_triangle_has_six_pairs(self):
        mesh = Mesh(np.eye(3), [[0, 1, 2]])
        edges = build_edge_list(mesh)
        assert len(edges) == 6

    def test_shared_edge_counted_once(self):
        mesh = Mesh(np.vstack([np.eye(3), [[1, 1, 1]]]), [[0, 1, 2], [1, 2, 3]])
        edges = build_edge_list(mesh)
        assert len(edges) == 10  # 5 undirected edges

    def test_symmetry_and_no_self_pairs(self):
        rng = np.random.default_rng(32)
        mesh = random_mesh(rng)
        edges = build_edge_list(mesh)
        pairs = {tuple(p) for p in edges.pairs}
        assert len(pairs) == len(edges)
        for p, v in pairs:
            assert p != v
            assert (v, p) in pairs
