"""The pose-transfer network: permutation-aware pose encoder, spatially
adaptive instance-norm units and residual blocks, and the conditioned decoder.

Activations flow as [N, C, V]; the conditioning mesh is the identity mesh,
whose coordinates drive a per-vertex scale and shift after each
instance normalization.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .tensor import (Param, ShapeMismatch, Tensor3, add, broadcast_vertices,
                     concat_channels, global_max_pool, instance_norm, mul,
                     pointwise_linear, relu, tanh_act)

# full-scale widths; the desk preset keeps training runs in the minutes range
REFERENCE_WIDTHS = (64, 128, 1024, 513, 256)
DESK_WIDTHS = (16, 32, 128, 64, 32)

VARIANTS = ("full", "concat1", "no_spadain", "maxpool")


@dataclass(frozen=True)
class ModelConfig:
    widths: tuple[int, int, int, int, int] = DESK_WIDTHS
    variant: str = "full"
    eps: float = 1e-5
    seed: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if len(self.widths) != 5 or any(w < 1 for w in self.widths):
            raise ValueError(f"widths must be 5 positive ints, got {self.widths}")


def _spadain_shapes(prefix: str, width: int) -> OrderedDict:
    shapes = OrderedDict()
    for part in ("gamma", "beta"):
        shapes[f"{prefix}.{part}.weight"] = (width, 3)
        shapes[f"{prefix}.{part}.bias"] = (width,)
    return shapes


def _resblock_shapes(prefix: str, width: int, with_spadain: bool) -> OrderedDict:
    shapes = OrderedDict()
    units = ("spadain1", "spadain2", "spadain_skip")
    convs = ("conv1", "conv2", "conv_skip")
    if with_spadain:
        for unit in units:
            shapes.update(_spadain_shapes(f"{prefix}.{unit}", width))
    for conv in convs:
        shapes[f"{prefix}.{conv}.weight"] = (width, width)
        shapes[f"{prefix}.{conv}.bias"] = (width,)
    return shapes


def param_shapes(widths, variant: str) -> OrderedDict:
    """Stable name -> shape map for every learnable tensor of a variant."""
    c1, c2, c3, w2, w3 = widths
    width0 = c3 + 3
    shapes = OrderedDict()
    for name, cin, cout in (("conv1", 3, c1), ("conv2", c1, c2), ("conv3", c2, c3)):
        shapes[f"enc.{name}.weight"] = (cout, cin)
        shapes[f"enc.{name}.bias"] = (cout,)
    shapes["dec.conv0.weight"] = (width0, width0)
    shapes["dec.conv0.bias"] = (width0,)
    with_spadain = variant in ("full", "maxpool")
    if variant != "concat1":
        shapes.update(_resblock_shapes("res1", width0, with_spadain))
    shapes["dec.conv1.weight"] = (w2, width0)
    shapes["dec.conv1.bias"] = (w2,)
    if variant != "concat1":
        shapes.update(_resblock_shapes("res2", w2, with_spadain))
    shapes["dec.conv2.weight"] = (w3, w2)
    shapes["dec.conv2.bias"] = (w3,)
    if variant != "concat1":
        shapes.update(_resblock_shapes("res3", w3, with_spadain))
    shapes["dec.out.weight"] = (3, w3)
    shapes["dec.out.bias"] = (3,)
    return shapes


class ModelParams:
    """All learnable weights, addressable by stable names in a fixed order."""

    def __init__(self, widths, variant: str, tensors: "OrderedDict[str, Param]"):
        self.widths = tuple(widths)
        self.variant = variant
        self.tensors = tensors

    def get(self, name: str) -> Param:
        return self.tensors[name]

    def all(self) -> list[Param]:
        return list(self.tensors.values())

    def names(self) -> list[str]:
        return list(self.tensors.keys())

    def count(self) -> int:
        return sum(p.data.size for p in self.tensors.values())

    def astype(self, dtype) -> "ModelParams":
        cast = OrderedDict((name, Param(name, p.data.astype(dtype)))
                           for name, p in self.tensors.items())
        return ModelParams(self.widths, self.variant, cast)


def expected_param_count(widths, variant: str) -> int:
    return sum(int(np.prod(shape)) for shape in param_shapes(widths, variant).values())


def init_params(cfg: ModelConfig, seed: Optional[int] = None, dtype=np.float64) -> ModelParams:
    """Weights uniform in (-s, s) with s = sqrt(1/fan_in); biases zero."""
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    tensors: OrderedDict[str, Param] = OrderedDict()
    for name, shape in param_shapes(cfg.widths, cfg.variant).items():
        if len(shape) == 2:
            bound = np.sqrt(1.0 / shape[1])
            data = rng.uniform(-bound, bound, size=shape).astype(dtype)
        else:
            data = np.zeros(shape, dtype=dtype)
        tensors[name] = Param(name, data)
    return ModelParams(cfg.widths, cfg.variant, tensors)


def _linear(x: Tensor3, params: ModelParams, prefix: str) -> Tensor3:
    return pointwise_linear(x, params.get(f"{prefix}.weight"), params.get(f"{prefix}.bias"))


def encode_pose(pose_mesh: Tensor3, params: ModelParams, cfg: ModelConfig) -> Tensor3:
    """Three stacked per-vertex conv + instance-norm + relu blocks.

    Keeps one feature column per input vertex, so the features stay attached
    to vertices instead of collapsing into a single global vector.
    """
    if pose_mesh.c != 3:
        raise ShapeMismatch(f"pose mesh must have 3 channels, got {pose_mesh.c}")
    h = pose_mesh
    for name in ("conv1", "conv2", "conv3"):
        h = relu(instance_norm(_linear(h, params, f"enc.{name}"), cfg.eps))
    return h


def spadain(h: Tensor3, id_mesh: Tensor3, params: ModelParams, prefix: str,
            eps: float = 1e-5, capture: Optional[list] = None,
            skip_norm: bool = False) -> Tensor3:
    """Instance-normalize, then modulate per vertex from the identity mesh.

    gamma and beta are per-vertex 1x1 convolutions of the conditioning mesh
    coordinates, so the affine varies spatially. skip_norm drops the
    normalization step but keeps the modulation (used by the pooled-feature
    variant, where normalizing a constant feature would erase it).
    """
    if h.n != id_mesh.n or h.v != id_mesh.v:
        raise ShapeMismatch(f"activations {h.shape} and conditioning mesh {id_mesh.shape} disagree")
    if skip_norm:
        normalized = h
    else:
        normalized = instance_norm(h, eps)
        if capture is not None:
            capture.append({"unit": prefix, "pre": h.data, "normalized": normalized.data})
    gamma = _linear(id_mesh, params, f"{prefix}.gamma")
    beta = _linear(id_mesh, params, f"{prefix}.beta")
    return add(mul(gamma, normalized), beta)


def spadain_resblock(h: Tensor3, id_mesh: Tensor3, params: ModelParams, prefix: str,
                     eps: float = 1e-5, use_spadain: bool = True,
                     capture: Optional[list] = None,
                     skip_first_norm: bool = False) -> Tensor3:
    """Residual block of conditioned-normalization + conv units.

    Main branch: norm -> conv -> relu, twice. Skip branch: norm -> conv ->
    relu once, from the block input. The two branch outputs are summed with
    no activation after the sum. With use_spadain=False the conditioned
    units degrade to plain instance normalization.
    """
    def norm(x: Tensor3, unit: str, skip: bool = False) -> Tensor3:
        if use_spadain:
            return spadain(x, id_mesh, params, f"{prefix}.{unit}", eps, capture, skip)
        return x if skip else instance_norm(x, eps)

    mid = relu(_linear(norm(h, "spadain1", skip_first_norm), params, f"{prefix}.conv1"))
    main = relu(_linear(norm(mid, "spadain2"), params, f"{prefix}.conv2"))
    skip = relu(_linear(norm(h, "spadain_skip"), params, f"{prefix}.conv_skip"))
    return add(main, skip)


def forward(pose_mesh: Tensor3, id_mesh: Tensor3, params: ModelParams,
            cfg: ModelConfig, capture: Optional[list] = None) -> Tensor3:
    """Full pose transfer: encode the pose mesh, concatenate the identity
    mesh, decode under identity conditioning, squash with tanh.

    The output vertex order follows the identity mesh. Both meshes must be
    [N, 3, V] with matching N and V; inputs are expected unit-sphere
    normalized (tanh bounds the output to (-1, 1)).
    """
    if pose_mesh.c != 3 or id_mesh.c != 3:
        raise ShapeMismatch(f"meshes must be [N,3,V], got {pose_mesh.shape} and {id_mesh.shape}")
    if pose_mesh.n != id_mesh.n or pose_mesh.v != id_mesh.v:
        raise ShapeMismatch(
            f"pose mesh {pose_mesh.shape} and identity mesh {id_mesh.shape} must share N and V")
    variant = cfg.variant
    features = encode_pose(pose_mesh, params, cfg)
    if variant == "maxpool":
        features = broadcast_vertices(global_max_pool(features), pose_mesh.v)
    z = concat_channels(features, id_mesh)

    if variant == "concat1":
        h = relu(_linear(z, params, "dec.conv0"))
        h = relu(_linear(h, params, "dec.conv1"))
        h = relu(_linear(h, params, "dec.conv2"))
        return tanh_act(_linear(h, params, "dec.out"))

    use_spadain = variant != "no_spadain"
    h = _linear(z, params, "dec.conv0")
    h = spadain_resblock(h, id_mesh, params, "res1", cfg.eps, use_spadain, capture,
                         skip_first_norm=(variant == "maxpool"))
    h = _linear(h, params, "dec.conv1")
    h = spadain_resblock(h, id_mesh, params, "res2", cfg.eps, use_spadain, capture)
    h = _linear(h, params, "dec.conv2")
    h = spadain_resblock(h, id_mesh, params, "res3", cfg.eps, use_spadain, capture)
    return tanh_act(_linear(h, params, "dec.out"))
