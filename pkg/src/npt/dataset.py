"""Training-pair and dataset generation on the synthetic body.

A pair holds an identity mesh M(a1, b1) under vertex shuffle t1, a pose mesh
M(a2, b2) under an independent shuffle t2, and the ground truth M(a1, b2)
under the identity's shuffle t1. All meshes are unit-sphere normalized
independently. Everything derives deterministically from integer seeds, and
the on-disk manifest records enough to regenerate each sample bit-exactly.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .body import (DEFAULT_JOINT_RANGES, IdentityParams, KinematicBody,
                   PoseParams, make_body, sample_identity, sample_pose,
                   skin_mesh)
from .meshio import Mesh, normalize_unit_sphere, permute_vertices, write_obj


def _rng_from(*entropy) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(list(entropy))))


@dataclass
class PairSample:
    id_mesh: Mesh
    pose_mesh: Mesh
    gt_mesh: Mesh
    theta1: np.ndarray
    theta2: np.ndarray
    alpha1: IdentityParams
    beta1: PoseParams
    alpha2: IdentityParams
    beta2: PoseParams
    split: str = "train"
    index: int = -1


def pair_from_params(body: KinematicBody, alpha1, beta1, alpha2, beta2,
                     theta1, theta2, split="train", index=-1) -> PairSample:
    """Assemble a pair: shuffle ground truth with the identity's permutation."""
    id_mesh, _, _ = normalize_unit_sphere(permute_vertices(skin_mesh(body, alpha1, beta1), theta1))
    pose_mesh, _, _ = normalize_unit_sphere(permute_vertices(skin_mesh(body, alpha2, beta2), theta2))
    gt_mesh, _, _ = normalize_unit_sphere(permute_vertices(skin_mesh(body, alpha1, beta2), theta1))
    return PairSample(id_mesh, pose_mesh, gt_mesh, np.asarray(theta1), np.asarray(theta2),
                      alpha1, beta1, alpha2, beta2, split=split, index=index)


def make_pair(body: KinematicBody, rng: np.random.Generator,
              ranges: np.ndarray = DEFAULT_JOINT_RANGES) -> PairSample:
    alpha1 = sample_identity(rng)
    beta1 = sample_pose(rng, ranges)
    alpha2 = sample_identity(rng)
    beta2 = sample_pose(rng, ranges)
    theta1 = rng.permutation(body.num_vertices)
    theta2 = rng.permutation(body.num_vertices)
    return pair_from_params(body, alpha1, beta1, alpha2, beta2, theta1, theta2)


def skeleton_oracle_transfer(sample: PairSample, body: KinematicBody) -> Mesh:
    """Re-pose the identity skeleton with the pose parameters, exactly.

    The generator's shape and pose parameters are known here, so this
    reconstructs the ground truth by construction; it anchors the evaluation
    pipeline with a zero-error reference.
    """
    mesh, _, _ = normalize_unit_sphere(
        permute_vertices(skin_mesh(body, sample.alpha1, sample.beta2), sample.theta1))
    return mesh


@dataclass
class Dataset:
    """Parameter pools plus fixed evaluation pairs, all seed-derived."""

    seed: int
    rings: int
    segments: int
    n_identities: int
    n_poses: int
    eval_identities: int
    eval_pairs_per_split: int
    ranges: np.ndarray
    body: KinematicBody
    train_alphas: list[IdentityParams]
    train_betas: list[PoseParams]
    eval_alphas: list[IdentityParams]
    eval_pairs: list[PairSample] = field(default_factory=list)


def make_dataset(n_identities: int, n_poses: int, seed: int,
                 eval_identities: int = 4, eval_pairs_per_split: int = 24,
                 rings: int = 5, segments: int = 8,
                 ranges: np.ndarray = DEFAULT_JOINT_RANGES,
                 body: Optional[KinematicBody] = None) -> Dataset:
    """Sample disjoint train/eval identity pools and fixed evaluation pairs.

    Seen-pose eval pairs draw their pose parameters from the training pose
    pool; unseen-pose pairs draw fresh poses. Evaluation identities are
    always fresh, including the pose mesh's own body shape, so the splits
    differ only in whether the transferred pose was seen during training.
    Each eval pair derives from its own child seed sequence so samples
    regenerate independently.
    """
    if n_identities < 1 or n_poses < 1:
        raise ValueError("need at least one identity and one pose")
    body = body if body is not None else make_body(rings, segments)
    alpha_rng = _rng_from(seed, 0)
    train_alphas = [sample_identity(alpha_rng) for _ in range(n_identities)]
    beta_rng = _rng_from(seed, 1)
    train_betas = [sample_pose(beta_rng, ranges) for _ in range(n_poses)]
    eval_rng = _rng_from(seed, 2)
    eval_alphas = [sample_identity(eval_rng) for _ in range(eval_identities)]

    dataset = Dataset(seed=seed, rings=rings, segments=segments,
                      n_identities=n_identities, n_poses=n_poses,
                      eval_identities=eval_identities,
                      eval_pairs_per_split=eval_pairs_per_split,
                      ranges=np.asarray(ranges, dtype=np.float64), body=body,
                      train_alphas=train_alphas, train_betas=train_betas,
                      eval_alphas=eval_alphas)

    v = body.num_vertices
    index = 0
    for split_tag, stream in (("seen", 3), ("unseen", 4)):
        for k in range(eval_pairs_per_split):
            rng = _rng_from(seed, stream, k)
            alpha1 = eval_alphas[int(rng.integers(eval_identities))]
            if split_tag == "seen":
                beta1 = train_betas[int(rng.integers(n_poses))]
                alpha2 = sample_identity(rng)
                beta2 = train_betas[int(rng.integers(n_poses))]
            else:
                beta1 = sample_pose(rng, ranges)
                alpha2 = sample_identity(rng)
                beta2 = sample_pose(rng, ranges)
            theta1 = rng.permutation(v)
            theta2 = rng.permutation(v)
            dataset.eval_pairs.append(pair_from_params(
                body, alpha1, beta1, alpha2, beta2, theta1, theta2,
                split=split_tag, index=index))
            index += 1
    return dataset


def manifest_dict(dataset: Dataset) -> dict:
    return {
        "seed": dataset.seed,
        "rings": dataset.rings,
        "segments": dataset.segments,
        "counts": {
            "train_identities": dataset.n_identities,
            "train_poses": dataset.n_poses,
            "eval_identities": dataset.eval_identities,
            "eval_pairs_per_split": dataset.eval_pairs_per_split,
        },
        "ranges": dataset.ranges.tolist(),
        "samples": [
            {"idx": p.index, "split": p.split,
             "entropy": [dataset.seed, 3 if p.split == "seen" else 4,
                         p.index if p.split == "seen" else p.index - dataset.eval_pairs_per_split]}
            for p in dataset.eval_pairs
        ],
    }


def save_dataset(dataset: Dataset, out_dir, write_pool: bool = True) -> dict:
    """Write manifest.json, eval-pair OBJ triples, and the raw training pool."""
    os.makedirs(out_dir, exist_ok=True)
    manifest = manifest_dict(dataset)
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    for pair in dataset.eval_pairs:
        stem = os.path.join(out_dir, f"{pair.index:03d}")
        write_obj(pair.id_mesh, stem + "_id.obj")
        write_obj(pair.pose_mesh, stem + "_pose.obj")
        write_obj(pair.gt_mesh, stem + "_gt.obj")
    if write_pool:
        pool_dir = os.path.join(out_dir, "pool")
        os.makedirs(pool_dir, exist_ok=True)
        for i, alpha in enumerate(dataset.train_alphas):
            for j, beta in enumerate(dataset.train_betas):
                write_obj(skin_mesh(dataset.body, alpha, beta),
                          os.path.join(pool_dir, f"{i:02d}_{j:03d}.obj"))
    return manifest


def load_dataset(path) -> Dataset:
    """Regenerate a dataset from its manifest (the manifest is authoritative)."""
    manifest_path = os.path.join(path, "manifest.json") if os.path.isdir(path) else path
    with open(manifest_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    counts = manifest["counts"]
    return make_dataset(
        n_identities=counts["train_identities"],
        n_poses=counts["train_poses"],
        seed=manifest["seed"],
        eval_identities=counts["eval_identities"],
        eval_pairs_per_split=counts["eval_pairs_per_split"],
        rings=manifest["rings"],
        segments=manifest["segments"],
        ranges=np.asarray(manifest["ranges"], dtype=np.float64),
    )
