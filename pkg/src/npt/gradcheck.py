"""Finite-difference verification of every differentiable primitive and of
the composed model loss, all at 64-bit precision."""

from __future__ import annotations

import numpy as np

from .losses import total_loss
from .meshio import Mesh, build_edge_list
from .network import DESK_WIDTHS, ModelConfig, forward, init_params
from .tensor import (Param, add, broadcast_vertices, concat_channels,
                     finite_diff_check, gather_vertices, global_max_pool,
                     instance_norm, mul, pointwise_linear, relu, scale, sub,
                     sum_all, tanh_act, tensor3)

# regular icosahedron: the 12-vertex test mesh for the composed-model check
_PHI = (1.0 + np.sqrt(5.0)) / 2.0
ICOSAHEDRON_VERTICES = np.array([
    (-1, _PHI, 0), (1, _PHI, 0), (-1, -_PHI, 0), (1, -_PHI, 0),
    (0, -1, _PHI), (0, 1, _PHI), (0, -1, -_PHI), (0, 1, -_PHI),
    (_PHI, 0, -1), (_PHI, 0, 1), (-_PHI, 0, -1), (-_PHI, 0, 1),
], dtype=np.float64) / np.sqrt(1.0 + _PHI * _PHI)
ICOSAHEDRON_FACES = np.array([
    (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
    (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
    (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
    (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
], dtype=np.int64)


def icosahedron() -> Mesh:
    return Mesh(ICOSAHEDRON_VERTICES.copy(), ICOSAHEDRON_FACES.copy())


def _rand(rng, *shape):
    return rng.uniform(-1.0, 1.0, size=shape)


def _weighted_sum(rng, t):
    """Scalarize through a fixed random projection so gradients are generic."""
    w = tensor3(rng.uniform(-1.0, 1.0, size=t.shape))
    return sum_all(mul(t, w))


def primitive_checks(seed: int = 1, step: float = 1e-6):
    """Yield (name, max relative error) for every differentiable primitive."""
    rng = np.random.default_rng(seed)
    n, c, v = 2, 4, 6
    checks = []

    x = tensor3(_rand(rng, n, c, v))
    w = Param("w", _rand(rng, 3, c))
    b = Param("b", _rand(rng, 3))
    checks.append(("pointwise_linear", finite_diff_check(
        lambda xx, ww, bb: sum_all(pointwise_linear(xx, ww, bb)), [x, w, b], step)))

    x = tensor3(_rand(rng, n, c, v))
    proj = rng.uniform(-1.0, 1.0, size=(n, c, v))
    checks.append(("instance_norm", finite_diff_check(
        lambda xx: sum_all(mul(instance_norm(xx, 1e-5), tensor3(proj))), [x], step)))

    x_raw = _rand(rng, n, c, v)
    x_raw += np.where(x_raw >= 0, 0.05, -0.05)  # keep every coordinate off the kink
    checks.append(("relu", finite_diff_check(
        lambda xx: _weighted_sum(np.random.default_rng(seed + 1), relu(xx)),
        [tensor3(x_raw)], step)))

    x = tensor3(_rand(rng, n, c, v))
    checks.append(("tanh", finite_diff_check(
        lambda xx: _weighted_sum(np.random.default_rng(seed + 2), tanh_act(xx)), [x], step)))

    a = tensor3(_rand(rng, n, c, v))
    bb = tensor3(_rand(rng, n, c, v))
    checks.append(("add", finite_diff_check(
        lambda u, w2: _weighted_sum(np.random.default_rng(seed + 3), add(u, w2)), [a, bb], step)))
    a = tensor3(_rand(rng, n, c, v))
    bb = tensor3(_rand(rng, n, c, v))
    checks.append(("sub", finite_diff_check(
        lambda u, w2: _weighted_sum(np.random.default_rng(seed + 4), sub(u, w2)), [a, bb], step)))
    a = tensor3(_rand(rng, n, c, v))
    bb = tensor3(_rand(rng, n, c, v))
    checks.append(("mul", finite_diff_check(
        lambda u, w2: sum_all(mul(u, w2)), [a, bb], step)))
    x = tensor3(_rand(rng, n, c, v))
    checks.append(("scale", finite_diff_check(
        lambda u: sum_all(scale(u, 0.731)), [x], step)))

    a = tensor3(_rand(rng, n, 2, v))
    bb = tensor3(_rand(rng, n, 3, v))
    checks.append(("concat_channels", finite_diff_check(
        lambda u, w2: _weighted_sum(np.random.default_rng(seed + 5), concat_channels(u, w2)),
        [a, bb], step)))

    x = tensor3(_rand(rng, n, c, v))
    checks.append(("global_max_pool", finite_diff_check(
        lambda u: _weighted_sum(np.random.default_rng(seed + 6), global_max_pool(u)), [x], step)))

    x = tensor3(_rand(rng, n, c, 1))
    checks.append(("broadcast_vertices", finite_diff_check(
        lambda u: _weighted_sum(np.random.default_rng(seed + 7), broadcast_vertices(u, v)),
        [x], step)))

    x = tensor3(_rand(rng, n, c, v))
    idx = np.random.default_rng(seed + 8).integers(0, v, size=(n, 9))
    checks.append(("gather_vertices", finite_diff_check(
        lambda u: _weighted_sum(np.random.default_rng(seed + 9), gather_vertices(u, idx)),
        [x], step)))

    x = tensor3(_rand(rng, n, c, v))
    checks.append(("sum_all", finite_diff_check(lambda u: sum_all(u), [x], step)))

    x = tensor3(_rand(rng, n, c, v) * 2.0)
    w = Param("w", _rand(rng, 5, c))
    b = Param("b", _rand(rng, 5))
    checks.append(("composite relu(linear)", finite_diff_check(
        lambda xx, ww, bbb: sum_all(relu(pointwise_linear(xx, ww, bbb))), [x, w, b], step)))
    return checks


def full_model_check(seed: int = 1, step: float = 1e-6,
                     widths=DESK_WIDTHS, coords_per_param: int = 4) -> float:
    """Finite differences through the whole model + loss on a 12-vertex pair.

    Every coordinate of both input meshes is checked; parameter tensors are
    spot-checked on a seeded coordinate subset to stay inside the time budget.
    """
    rng = np.random.default_rng(seed)
    cfg = ModelConfig(widths=widths, variant="full", seed=seed)
    params = init_params(cfg, dtype=np.float64)
    mesh = icosahedron()
    edges = build_edge_list(mesh)
    batch = 2
    pose = tensor3(np.stack([mesh.vertices.T, (mesh.vertices * 0.8 + 0.05).T])
                   + 0.01 * rng.standard_normal((batch, 3, 12)))
    ident = tensor3(np.stack([(mesh.vertices * 0.9).T, (mesh.vertices * 1.1).T])
                    + 0.01 * rng.standard_normal((batch, 3, 12)))
    gt = np.tanh(ident.data * 0.9 + 0.03)

    def program(*tracked):
        # closes over the same objects the harness tracks and perturbs
        out = forward(pose, ident, params, cfg)
        return total_loss(out, tensor3(gt), edges).total_tensor

    worst = finite_diff_check(program, [pose, ident], step)
    sampled = finite_diff_check(program, params.all(), step,
                                max_coords_per_input=coords_per_param, seed=seed)
    return max(worst, sampled)


def run_gradcheck(seed: int = 1, step: float = 1e-6, tolerance: float = 1e-4):
    """Run all checks; returns (per-check list, overall max, pass flag)."""
    checks = primitive_checks(seed, step)
    checks.append(("full_model", full_model_check(seed, step)))
    worst = max(err for _, err in checks)
    return checks, worst, worst < tolerance
