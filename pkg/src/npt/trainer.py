"""Training loop, evaluation protocol, ablation suite, and robustness probes."""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .body import skin_mesh
from .checkpoint import save_checkpoint
from .dataset import Dataset, PairSample
from .losses import pmd_meshes, total_loss
from .meshio import Mesh, build_edge_list, inverse_permutation, permute_vertices
from .network import DESK_WIDTHS, ModelConfig, ModelParams, forward, init_params
from .optim import AdamState, adam_step
from .tensor import DiffGraph, Tensor3, tensor3


class TrainingDiverged(RuntimeError):
    """Raised when the loss goes non-finite; carries the offending batch."""


@dataclass
class TrainConfig:
    lr: float = 5e-5
    batch_size: int = 8
    epochs: int = 30
    lambda_edge: float = 5e-4
    variant: str = "full"
    widths: tuple = DESK_WIDTHS
    seed: int = 0
    precision: str = "f32"        # f32 for training, f64 for gradient checks
    checkpoint_every: int = 10
    pairs_per_epoch: int = 2200   # desk-calibrated; 30 epochs => 8250 Adam steps
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.lr <= 0 or self.batch_size < 1 or self.lambda_edge < 0:
            raise ValueError("invalid training configuration")
        if self.precision not in ("f32", "f64"):
            raise ValueError(f"precision must be f32 or f64, got {self.precision!r}")

    @property
    def dtype(self):
        return np.float32 if self.precision == "f32" else np.float64

    def model_config(self) -> ModelConfig:
        return ModelConfig(widths=tuple(self.widths), variant=self.variant, seed=self.seed)


@dataclass
class MetricsLog:
    rows: list = field(default_factory=list)

    COLUMNS = ("epoch", "rec", "edge", "total", "seen_pmd", "unseen_pmd", "seconds")

    def append(self, **row):
        self.rows.append({key: row[key] for key in self.COLUMNS})

    def to_csv(self) -> str:
        lines = [",".join(self.COLUMNS)]
        for row in self.rows:
            cells = [str(row["epoch"])] + [f"{row[k]:.10g}" for k in self.COLUMNS[1:]]
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"

    def write_csv(self, path):
        with open(path, "w", encoding="ascii") as fh:
            fh.write(self.to_csv())


@dataclass
class EvalReport:
    seen_pmd: float
    unseen_pmd: float
    copy_identity_seen: float
    copy_identity_unseen: float
    per_sample: list


def mesh_tensor(vertices: np.ndarray, dtype) -> Tensor3:
    """Stack (V, 3) vertex arrays (or a [B, V, 3] batch) into a [N, 3, V] tensor."""
    arr = np.asarray(vertices, dtype=dtype)
    if arr.ndim == 2:
        arr = arr[None]
    return tensor3(arr.transpose(0, 2, 1), dtype=dtype)


def _eval_threads() -> int:
    try:
        return max(1, int(os.environ.get("NPT_THREADS", "1")))
    except ValueError:
        return 1


def _forward_vertices(params: ModelParams, cfg: ModelConfig, pose_batch, id_batch, dtype):
    out = forward(mesh_tensor(pose_batch, dtype), mesh_tensor(id_batch, dtype), params, cfg)
    return out.data.transpose(0, 2, 1)


def evaluate(params: ModelParams, cfg: ModelConfig, eval_pairs: list,
             dtype=np.float32) -> EvalReport:
    """Mean PMD per split plus the copy-identity floor (predict the identity mesh).

    Samples are batched per worker chunk; normalization statistics are
    per-sample, so the chunking cannot change any result.
    """
    threads = min(_eval_threads(), max(1, len(eval_pairs)))
    chunks = np.array_split(np.arange(len(eval_pairs)), threads)
    preds: list = [None] * threads

    def run(worker: int):
        idxs = chunks[worker]
        if len(idxs) == 0:
            preds[worker] = np.zeros((0, 3, 3))
            return
        pose = np.stack([eval_pairs[i].pose_mesh.vertices for i in idxs])
        ident = np.stack([eval_pairs[i].id_mesh.vertices for i in idxs])
        preds[worker] = _forward_vertices(params, cfg, pose, ident, dtype)

    if threads == 1:
        run(0)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run, range(threads)))

    per_sample = []
    flat_preds = np.concatenate([p for p in preds if len(p)], axis=0)
    for idx, pair in enumerate(eval_pairs):
        per_sample.append({
            "index": pair.index,
            "split": pair.split,
            "pmd": pmd_meshes(flat_preds[idx], pair.gt_mesh.vertices),
            "copy_identity_pmd": pmd_meshes(pair.id_mesh.vertices, pair.gt_mesh.vertices),
        })

    def mean_over(split, key):
        vals = [row[key] for row in per_sample if row["split"] == split]
        return float(np.mean(vals)) if vals else float("nan")

    return EvalReport(
        seen_pmd=mean_over("seen", "pmd"),
        unseen_pmd=mean_over("unseen", "pmd"),
        copy_identity_seen=mean_over("seen", "copy_identity_pmd"),
        copy_identity_unseen=mean_over("unseen", "copy_identity_pmd"),
        per_sample=per_sample,
    )


def _normalized(vertices: np.ndarray) -> np.ndarray:
    centroid = vertices.mean(axis=0)
    shifted = vertices - centroid
    radius = np.sqrt((shifted * shifted).sum(axis=1).max())
    return shifted / radius


def train(dataset: Dataset, cfg: TrainConfig, out_dir: Optional[str] = None):
    """Train on resampled identity/pose grid pairs; returns (params, log, checkpoints).

    Each epoch redraws pairs_per_epoch (identity, pose) grid combinations and
    fresh vertex shuffles from an epoch-seeded stream, so the run is fully
    deterministic for a given config.
    """
    dtype = cfg.dtype
    model_cfg = cfg.model_config()
    params = init_params(model_cfg, dtype=dtype)
    state = AdamState(params.all(), lr=cfg.lr, beta1=cfg.adam_beta1,
                      beta2=cfg.adam_beta2, eps=cfg.adam_eps)
    body = dataset.body
    pool_verts = [[skin_mesh(body, dataset.train_alphas[i], dataset.train_betas[j]).vertices
                   for j in range(dataset.n_poses)]
                  for i in range(dataset.n_identities)]
    template_pairs = build_edge_list(Mesh(pool_verts[0][0], body.faces)).pairs
    v = body.num_vertices

    log = MetricsLog()
    checkpoints = []
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)

    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([cfg.seed, 5, epoch])))
        draws = rng.integers(0, [dataset.n_identities, dataset.n_poses,
                                 dataset.n_identities, dataset.n_poses],
                             size=(cfg.pairs_per_epoch, 4))
        thetas1 = [rng.permutation(v) for _ in range(cfg.pairs_per_epoch)]
        thetas2 = [rng.permutation(v) for _ in range(cfg.pairs_per_epoch)]

        rec_sum = edge_sum = total_sum = 0.0
        batches = 0
        for start in range(0, cfg.pairs_per_epoch, cfg.batch_size):
            stop = min(start + cfg.batch_size, cfg.pairs_per_epoch)
            id_b, pose_b, gt_b, pairs_b = [], [], [], []
            for s in range(start, stop):
                i, j, k, l = (int(x) for x in draws[s])
                theta1, theta2 = thetas1[s], thetas2[s]
                id_b.append(_normalized(pool_verts[i][j][theta1]))
                pose_b.append(_normalized(pool_verts[k][l][theta2]))
                gt_b.append(_normalized(pool_verts[i][l][theta1]))
                pairs_b.append(inverse_permutation(theta1)[template_pairs])
            graph = DiffGraph()
            for p in params.all():
                graph.track(p)
            out = forward(mesh_tensor(np.stack(pose_b), dtype),
                          mesh_tensor(np.stack(id_b), dtype), params, model_cfg)
            breakdown = total_loss(out, mesh_tensor(np.stack(gt_b), dtype), None,
                                   cfg.lambda_edge, per_sample_pairs=np.stack(pairs_b))
            if not np.isfinite(breakdown.total):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch} batch {batches}: "
                    f"rec={breakdown.rec} edge={breakdown.edge} total={breakdown.total}")
            grads = graph.backward(breakdown.total_tensor)
            adam_step(params.all(), [grads.of(p) for p in params.all()], state)
            rec_sum += breakdown.rec
            edge_sum += breakdown.edge
            total_sum += breakdown.total
            batches += 1

        report = evaluate(params, model_cfg, dataset.eval_pairs, dtype=dtype)
        log.append(epoch=epoch, rec=rec_sum / batches, edge=edge_sum / batches,
                   total=total_sum / batches, seen_pmd=report.seen_pmd,
                   unseen_pmd=report.unseen_pmd, seconds=time.perf_counter() - t0)
        if out_dir and ((epoch + 1) % cfg.checkpoint_every == 0 or epoch + 1 == cfg.epochs):
            path = os.path.join(out_dir, f"checkpoint_ep{epoch + 1:03d}.npt")
            save_checkpoint(params, model_cfg, path)
            checkpoints.append(path)

    if out_dir:
        final = os.path.join(out_dir, "checkpoint.npt")
        save_checkpoint(params, model_cfg, final)
        checkpoints.append(final)
        log.write_csv(os.path.join(out_dir, "metrics.csv"))
    return params, log, checkpoints


ABLATION_VARIANTS = ("full", "no_edge", "no_spadain", "concat1", "maxpool")


def run_ablation_suite(dataset: Dataset, base_cfg: TrainConfig,
                       out_dir: Optional[str] = None,
                       trained_full: Optional[tuple] = None):
    """Train every ablation variant under one budget and tabulate eval PMD.

    trained_full, when given as (params, report), is reused for the "full"
    row; with deterministic training it equals a fresh run at the same seed.
    """
    rows = []
    for tag in ABLATION_VARIANTS:
        if tag == "full" and trained_full is not None:
            params, report = trained_full
        else:
            cfg = replace(base_cfg,
                          variant="full" if tag == "no_edge" else tag,
                          lambda_edge=0.0 if tag == "no_edge" else base_cfg.lambda_edge)
            params, _, _ = train(dataset, cfg)
            report = evaluate(params, cfg.model_config(), dataset.eval_pairs, dtype=cfg.dtype)
        rows.append({"variant": tag, "seen_pmd": report.seen_pmd,
                     "unseen_pmd": report.unseen_pmd,
                     "copy_identity_seen": report.copy_identity_seen,
                     "copy_identity_unseen": report.copy_identity_unseen})
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "ablation.csv"), "w", encoding="ascii") as fh:
            fh.write("variant,seen_pmd,unseen_pmd,copy_identity_seen,copy_identity_unseen\n")
            for row in rows:
                fh.write(f"{row['variant']},{row['seen_pmd']:.10g},{row['unseen_pmd']:.10g},"
                         f"{row['copy_identity_seen']:.10g},{row['copy_identity_unseen']:.10g}\n")
    return rows


def format_ablation_table(rows) -> str:
    header = f"{'variant':<12}{'seen_pmd':>14}{'unseen_pmd':>14}"
    lines = [header, "-" * len(header)]
    for row in rows:
        lines.append(f"{row['variant']:<12}{row['seen_pmd']:>14.6g}{row['unseen_pmd']:>14.6g}")
    return "\n".join(lines)


def robustness_probe(params: ModelParams, cfg: ModelConfig, sample: PairSample,
                     noise_sigma: float = 0.01, n_shuffles: int = 10,
                     seed: int = 0, dtype=np.float32) -> dict:
    """Perturbation probes on one pair after training.

    Gaussian noise on the normalized pose-mesh vertices measures metric
    degradation; repeated pose-mesh shuffles measure output spread (the
    identity mesh, which fixes the output order, stays put).
    """
    rng = np.random.default_rng(seed)
    id_verts = sample.id_mesh.vertices
    pose_verts = sample.pose_mesh.vertices
    gt_verts = sample.gt_mesh.vertices

    clean_pred = _forward_vertices(params, cfg, pose_verts, id_verts, dtype)[0]
    clean_pmd = pmd_meshes(clean_pred, gt_verts)

    noisy_pose = pose_verts + rng.normal(0.0, noise_sigma, size=pose_verts.shape) if noise_sigma > 0 else pose_verts
    noisy_pred = _forward_vertices(params, cfg, noisy_pose, id_verts, dtype)[0]
    noisy_pmd = pmd_meshes(noisy_pred, gt_verts)

    outputs = []
    for _ in range(n_shuffles):
        theta = rng.permutation(pose_verts.shape[0])
        shuffled = permute_vertices(sample.pose_mesh, theta)
        outputs.append(_forward_vertices(params, cfg, shuffled.vertices, id_verts, dtype)[0])
    spread = 0.0
    for a in range(len(outputs)):
        for b in range(a + 1, len(outputs)):
            spread = max(spread, pmd_meshes(outputs[a], outputs[b]))

    return {
        "clean_pmd": clean_pmd,
        "noisy_pmd": noisy_pmd,
        "noise_pmd_delta": noisy_pmd - clean_pmd,
        "shuffle_pmd_spread": spread,
    }
