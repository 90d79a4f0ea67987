"""Kinematic body tests: template integrity, skinning weights, forward
kinematics, and rigid-motion oracles."""

import numpy as np
import pytest

from npt.body import (DEFAULT_JOINT_RANGES, NUM_JOINTS, IdentityParams,
                      PoseParams, make_body, sample_identity, sample_pose,
                      skin_mesh)
from npt.meshio import Mesh


def test_body_shape_and_invariants(small_body):
    body = small_body
    assert body.parents[0] == -1
    assert (body.parents[1:] < np.arange(1, NUM_JOINTS)).all()  # topological order
    mesh = Mesh(np.zeros((body.num_vertices, 3)), body.faces)
    mesh.vertices = skin_mesh(body, IdentityParams.rest(), PoseParams.rest()).vertices
    mesh.validate()


def test_skin_weights_rows(small_body):
    w = small_body.skin_weights
    np.testing.assert_allclose(w.sum(axis=1), 1.0, atol=1e-6)
    assert ((w > 0).sum(axis=1) <= 2).all()
    assert (w >= 0).all()


def test_rest_pose_returns_scaled_template_exactly(small_body):
    rng = np.random.default_rng(60)
    alpha = sample_identity(rng)
    a = skin_mesh(small_body, alpha, PoseParams.rest())
    b = skin_mesh(small_body, alpha, PoseParams.rest())
    assert np.array_equal(a.vertices, b.vertices)
    # alpha=1, beta=0 reproduces the canonical template bit-exactly
    t1 = skin_mesh(small_body, IdentityParams.rest(), PoseParams.rest())
    t2 = skin_mesh(small_body, IdentityParams.rest(), PoseParams.rest())
    assert np.array_equal(t1.vertices, t2.vertices)


def test_rest_pose_is_fixed_point_of_posing(small_body):
    """beta=0 must leave every vertex exactly where the template puts it."""
    alpha = sample_identity(np.random.default_rng(61))
    rest = skin_mesh(small_body, alpha, PoseParams.rest())
    near_rest = skin_mesh(small_body, alpha, PoseParams(np.zeros((NUM_JOINTS, 3))))
    assert np.array_equal(rest.vertices, near_rest.vertices)


def test_root_rotation_is_rigid(small_body):
    from npt.body import _euler_xyz
    angles = np.zeros((NUM_JOINTS, 3))
    angles[0] = (10.0, 25.0, -40.0)
    posed = skin_mesh(small_body, IdentityParams.rest(), PoseParams(angles))
    rest = skin_mesh(small_body, IdentityParams.rest(), PoseParams.rest())
    rotation = _euler_xyz(angles[0])
    np.testing.assert_allclose(posed.vertices, rest.vertices @ rotation.T, atol=1e-9)


def test_bent_knee_moves_only_the_shin(small_body):
    angles = np.zeros((NUM_JOINTS, 3))
    angles[9] = (90.0, 0.0, 0.0)  # left knee
    posed = skin_mesh(small_body, IdentityParams.rest(), PoseParams(angles))
    rest = skin_mesh(small_body, IdentityParams.rest(), PoseParams.rest())
    moved = np.linalg.norm(posed.vertices - rest.vertices, axis=1)
    shin = small_body.vertex_bone == 9
    head = small_body.vertex_bone == 3
    assert moved[shin].max() > 0.1
    assert moved[head].max() < 1e-12


def test_hard_weights_preserve_intra_bone_edge_lengths(small_body):
    """With one-hot weights, LBS is rigid per bone: edge lengths inside a
    bone are exactly preserved under any pose."""
    import dataclasses
    hard = np.zeros_like(small_body.skin_weights)
    hard[np.arange(small_body.num_vertices), small_body.vertex_bone] = 1.0
    body = dataclasses.replace(small_body, skin_weights=hard)
    beta = sample_pose(np.random.default_rng(62))
    posed = skin_mesh(body, IdentityParams.rest(), beta)
    rest = skin_mesh(body, IdentityParams.rest(), PoseParams.rest())
    same_bone = body.vertex_bone[body.faces[:, 0]] == body.vertex_bone[body.faces[:, 1]]
    a, b = body.faces[same_bone, 0], body.faces[same_bone, 1]
    posed_len = np.linalg.norm(posed.vertices[a] - posed.vertices[b], axis=1)
    rest_len = np.linalg.norm(rest.vertices[a] - rest.vertices[b], axis=1)
    assert len(posed_len) > 0
    np.testing.assert_allclose(posed_len, rest_len, atol=1e-9)


def test_identity_scales_change_proportions(small_body):
    alpha = IdentityParams.rest()
    alpha.bone_length = alpha.bone_length.copy()
    alpha.bone_length[9] = 1.3  # longer left shin
    scaled = skin_mesh(small_body, alpha, PoseParams.rest())
    rest = skin_mesh(small_body, IdentityParams.rest(), PoseParams.rest())
    shin = small_body.vertex_bone == 9
    torso = small_body.vertex_bone == 0
    assert np.abs(scaled.vertices[shin] - rest.vertices[shin]).max() > 0.05
    np.testing.assert_array_equal(scaled.vertices[torso], rest.vertices[torso])


class TestSampling:
    def test_collapsed_ranges_give_rest_pose(self):
        rng = np.random.default_rng(63)
        beta = sample_pose(rng, np.zeros((NUM_JOINTS, 3, 2)))
        np.testing.assert_array_equal(beta.angles, np.zeros((NUM_JOINTS, 3)))

    def test_knee_angle_always_in_paper_range(self):
        rng = np.random.default_rng(64)
        for _ in range(10_000):
            beta = sample_pose(rng)
            for knee in (9, 11):
                assert 0.0 <= beta.angles[knee, 0] <= 100.0
                assert beta.angles[knee, 1] == 0.0
                assert beta.angles[knee, 2] == 0.0

    def test_all_angles_inside_ranges(self):
        rng = np.random.default_rng(65)
        lo, hi = DEFAULT_JOINT_RANGES[..., 0], DEFAULT_JOINT_RANGES[..., 1]
        for _ in range(200):
            beta = sample_pose(rng)
            assert (beta.angles >= lo).all() and (beta.angles <= hi).all()

    def test_identity_scales_inside_ranges(self):
        rng = np.random.default_rng(66)
        for _ in range(200):
            alpha = sample_identity(rng)
            assert (0.7 <= alpha.bone_length).all() and (alpha.bone_length <= 1.3).all()
            assert (0.7 <= alpha.bone_radius).all() and (alpha.bone_radius <= 1.3).all()
            assert 0.9 <= alpha.global_scale <= 1.1

    def test_same_seed_identical_sequences(self):
        a = [sample_pose(np.random.default_rng(67)).angles for _ in range(1)][0]
        b = [sample_pose(np.random.default_rng(67)).angles for _ in range(1)][0]
        np.testing.assert_array_equal(a, b)

    def test_inverted_range_rejected(self):
        bad = DEFAULT_JOINT_RANGES.copy()
        bad[0, 0] = (5.0, -5.0)
        with pytest.raises(ValueError):
            sample_pose(np.random.default_rng(68), bad)
