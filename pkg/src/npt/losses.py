"""Training losses and the point-wise mesh distance metric."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .meshio import EdgeList
from .tensor import Tensor3, add, gather_vertices, mul, scale, sub, sum_all

DEFAULT_LAMBDA_EDGE = 5e-4


@dataclass
class LossBreakdown:
    """Batch-mean loss components; total = rec + lambda_edge * edge as computed."""

    rec: float
    edge: float
    total: float
    lambda_edge: float
    total_tensor: Tensor3


def reconstruction_loss(pred: Tensor3, gt: Tensor3) -> Tensor3:
    """Summed squared vertex distance between prediction and ground truth.

    Sums over the batch as well; the batch mean is taken once in total_loss.
    """
    d = sub(pred, gt)
    return sum_all(mul(d, d))


def edge_length_loss(pred: Tensor3, edges: EdgeList | None,
                     per_sample_pairs: np.ndarray | None = None) -> Tensor3:
    """Sum of squared edge vectors over all directed neighbor pairs.

    Every undirected edge appears in both orientations, so it counts twice.
    per_sample_pairs, when given as [N, E, 2], overrides the shared edge list
    with per-sample vertex indices (used when batch samples carry different
    vertex shuffles of one topology).
    """
    if edges is None and per_sample_pairs is None:
        raise ValueError("edge_length_loss needs an edge list or per-sample pairs")
    pairs = edges.pairs if per_sample_pairs is None else np.asarray(per_sample_pairs)
    if pairs.size == 0:
        return sum_all(scale(pred, 0.0))
    if pairs.min() < 0 or pairs.max() >= pred.v:
        raise IndexError(f"edge index out of range for V={pred.v}")
    head = gather_vertices(pred, pairs[..., 0])
    tail = gather_vertices(pred, pairs[..., 1])
    d = sub(head, tail)
    return sum_all(mul(d, d))


def total_loss(pred: Tensor3, gt: Tensor3, edges: EdgeList | None,
               lambda_edge: float = DEFAULT_LAMBDA_EDGE,
               per_sample_pairs: np.ndarray | None = None) -> LossBreakdown:
    """Reconstruction plus weighted edge regularization, averaged over the batch."""
    inv_n = 1.0 / pred.n
    rec = scale(reconstruction_loss(pred, gt), inv_n)
    edge = scale(edge_length_loss(pred, edges, per_sample_pairs), inv_n)
    total = add(rec, scale(edge, lambda_edge))
    return LossBreakdown(rec=rec.item(), edge=edge.item(), total=total.item(),
                         lambda_edge=lambda_edge, total_tensor=total)


def pmd(pred, gt):
    """Point-wise mesh Euclidean distance: per-vertex mean of squared distance.

    Despite the name this is a squared quantity. Accepts [N,3,V] arrays or
    Tensor3 values; returns (per-sample values, batch mean).
    """
    p = pred.data if isinstance(pred, Tensor3) else np.asarray(pred, dtype=np.float64)
    q = gt.data if isinstance(gt, Tensor3) else np.asarray(gt, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"pmd requires equal shapes, got {p.shape} and {q.shape}")
    d = p.astype(np.float64) - q.astype(np.float64)
    per_sample = (d * d).sum(axis=1).mean(axis=1)
    return per_sample, float(per_sample.mean())


def pmd_meshes(pred_vertices: np.ndarray, gt_vertices: np.ndarray) -> float:
    """PMD between two single meshes given as (V, 3) vertex arrays."""
    per_sample, _ = pmd(pred_vertices.T[None], gt_vertices.T[None])
    return float(per_sample[0])
