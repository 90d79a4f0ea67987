"""Dataset generation tests: pair construction, the exact transfer oracle,
determinism, and the on-disk manifest round trip."""

import json
import os

import numpy as np

from npt.body import make_body
from npt.dataset import (load_dataset, make_dataset, make_pair, manifest_dict,
                         pair_from_params, save_dataset,
                         skeleton_oracle_transfer)
from npt.losses import pmd_meshes
from npt.meshio import read_obj


def test_pair_structure(small_body):
    rng = np.random.default_rng(70)
    pair = make_pair(small_body, rng)
    assert pair.id_mesh.num_vertices == small_body.num_vertices
    np.testing.assert_array_equal(pair.id_mesh.faces, pair.gt_mesh.faces)
    for mesh in (pair.id_mesh, pair.pose_mesh, pair.gt_mesh):
        radius = np.linalg.norm(mesh.vertices, axis=1).max()
        assert abs(radius - 1.0) < 1e-9
        mesh.validate()


def test_identical_params_give_zero_pmd(small_body):
    rng = np.random.default_rng(71)
    pair = make_pair(small_body, rng)
    same = pair_from_params(small_body, pair.alpha1, pair.beta1,
                            pair.alpha1, pair.beta1,
                            pair.theta1, pair.theta1)
    assert pmd_meshes(same.gt_mesh.vertices, same.id_mesh.vertices) == 0.0


def test_gt_differs_from_id_when_poses_differ(small_body):
    rng = np.random.default_rng(72)
    for _ in range(5):
        pair = make_pair(small_body, rng)
        if not np.array_equal(pair.beta1.angles, pair.beta2.angles):
            assert pmd_meshes(pair.gt_mesh.vertices, pair.id_mesh.vertices) > 1e-6


def test_oracle_reproduces_ground_truth_exactly(small_body):
    rng = np.random.default_rng(73)
    for _ in range(20):
        pair = make_pair(small_body, rng)
        oracle = skeleton_oracle_transfer(pair, small_body)
        assert pmd_meshes(oracle.vertices, pair.gt_mesh.vertices) < 1e-12


def test_oracle_ignores_pose_shuffle(small_body):
    rng = np.random.default_rng(74)
    pair = make_pair(small_body, rng)
    shuffled = pair_from_params(small_body, pair.alpha1, pair.beta1,
                                pair.alpha2, pair.beta2, pair.theta1,
                                rng.permutation(small_body.num_vertices))
    a = skeleton_oracle_transfer(pair, small_body)
    b = skeleton_oracle_transfer(shuffled, small_body)
    np.testing.assert_array_equal(a.vertices, b.vertices)


def test_oracle_beats_copy_identity_baseline(small_body):
    rng = np.random.default_rng(75)
    hits = 0
    for _ in range(10):
        pair = make_pair(small_body, rng)
        if np.array_equal(pair.beta1.angles, pair.beta2.angles):
            continue
        oracle_pmd = pmd_meshes(skeleton_oracle_transfer(pair, small_body).vertices,
                                pair.gt_mesh.vertices)
        copy_pmd = pmd_meshes(pair.id_mesh.vertices, pair.gt_mesh.vertices)
        assert copy_pmd > oracle_pmd
        hits += 1
    assert hits > 0


class TestMakeDataset:
    def test_split_structure(self, small_dataset):
        ds = small_dataset
        assert len(ds.train_alphas) == 2 and len(ds.train_betas) == 4
        seen = [p for p in ds.eval_pairs if p.split == "seen"]
        unseen = [p for p in ds.eval_pairs if p.split == "unseen"]
        assert len(seen) == 3 and len(unseen) == 3

    def test_eval_identities_disjoint_from_train(self, small_dataset):
        ds = small_dataset
        train = {a.bone_length.tobytes() for a in ds.train_alphas}
        for alpha in ds.eval_alphas:
            assert alpha.bone_length.tobytes() not in train

    def test_seen_pairs_use_training_poses(self, small_dataset):
        ds = small_dataset
        train_betas = {b.angles.tobytes() for b in ds.train_betas}
        for pair in ds.eval_pairs:
            if pair.split == "seen":
                assert pair.beta2.angles.tobytes() in train_betas
            else:
                assert pair.beta2.angles.tobytes() not in train_betas

    def test_eval_pose_mesh_bodies_are_fresh(self, small_dataset):
        # the splits differ only in pose novelty: even seen-pose pairs carry
        # the training pose on a body shape never seen in training
        ds = small_dataset
        train_alphas = {a.bone_length.tobytes() for a in ds.train_alphas}
        for pair in ds.eval_pairs:
            assert pair.alpha2.bone_length.tobytes() not in train_alphas

    def test_regeneration_is_bit_exact(self):
        a = make_dataset(2, 3, seed=5, eval_identities=2, eval_pairs_per_split=2,
                         rings=3, segments=6)
        b = make_dataset(2, 3, seed=5, eval_identities=2, eval_pairs_per_split=2,
                         rings=3, segments=6)
        for pa, pb in zip(a.eval_pairs, b.eval_pairs):
            assert np.array_equal(pa.id_mesh.vertices, pb.id_mesh.vertices)
            assert np.array_equal(pa.pose_mesh.vertices, pb.pose_mesh.vertices)
            assert np.array_equal(pa.gt_mesh.vertices, pb.gt_mesh.vertices)


class TestOnDisk:
    def test_save_and_reload_round_trip(self, small_dataset, tmp_path):
        out = tmp_path / "ds"
        save_dataset(small_dataset, out, write_pool=True)
        assert (out / "manifest.json").exists()
        pool_files = sorted((out / "pool").glob("*.obj"))
        assert len(pool_files) == 2 * 4
        triples = sorted(out.glob("*_gt.obj"))
        assert len(triples) == 6

        reloaded = load_dataset(out)
        for pa, pb in zip(small_dataset.eval_pairs, reloaded.eval_pairs):
            assert np.array_equal(pa.gt_mesh.vertices, pb.gt_mesh.vertices)

    def test_written_meshes_match_memory(self, small_dataset, tmp_path):
        out = tmp_path / "ds"
        save_dataset(small_dataset, out, write_pool=False)
        pair = small_dataset.eval_pairs[0]
        disk = read_obj(out / f"{pair.index:03d}_id.obj")
        np.testing.assert_allclose(disk.vertices, pair.id_mesh.vertices, atol=1e-8)
        np.testing.assert_array_equal(disk.faces, pair.id_mesh.faces)

    def test_manifest_contents(self, small_dataset):
        manifest = manifest_dict(small_dataset)
        assert manifest["seed"] == small_dataset.seed
        assert manifest["counts"]["train_identities"] == 2
        assert len(manifest["samples"]) == len(small_dataset.eval_pairs)
        assert json.dumps(manifest)  # serializable
