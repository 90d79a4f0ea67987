"""Binary checkpoint format for model parameters.

Layout: magic "NPT1", an 8-byte little-endian header length, a UTF-8 JSON
header {version, widths, variant, seed, tensors:[{name, shape, offset,
count}]}, then all parameters as little-endian float32 in header order.
Offsets and counts are in elements.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from collections import OrderedDict

import numpy as np

from .network import ModelConfig, ModelParams, param_shapes
from .tensor import Param

MAGIC = b"NPT1"
VERSION = 1


class CheckpointError(ValueError):
    """Raised for unreadable, corrupt, or inconsistent checkpoint files."""


def save_checkpoint(params: ModelParams, cfg: ModelConfig, path):
    """Write atomically: a temp file in the target directory, then rename."""
    entries = []
    offset = 0
    blobs = []
    for name, p in params.tensors.items():
        count = int(p.data.size)
        entries.append({"name": name, "shape": list(p.data.shape),
                        "offset": offset, "count": count})
        blobs.append(np.ascontiguousarray(p.data, dtype="<f4").tobytes())
        offset += count
    header = {
        "version": VERSION,
        "widths": list(params.widths),
        "variant": params.variant,
        "seed": cfg.seed,
        "tensors": entries,
    }
    header_bytes = json.dumps(header, separators=(",", ":"), sort_keys=True).encode("utf-8")
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".ckpt.tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<Q", len(header_bytes)))
            fh.write(header_bytes)
            for blob in blobs:
                fh.write(blob)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def load_checkpoint(path):
    """Read a checkpoint back into (ModelParams, ModelConfig) as float32."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < len(MAGIC) + 8 or raw[:4] != MAGIC:
        raise CheckpointError(f"bad magic in {path}: not a checkpoint file")
    (header_len,) = struct.unpack("<Q", raw[4:12])
    if len(raw) < 12 + header_len:
        raise CheckpointError(f"truncated header in {path}")
    try:
        header = json.loads(raw[12:12 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable header in {path}: {exc}") from None
    if header.get("version") != VERSION:
        raise CheckpointError(
            f"version mismatch in {path}: file has {header.get('version')}, reader supports {VERSION}")

    widths = tuple(header["widths"])
    variant = header["variant"]
    cfg = ModelConfig(widths=widths, variant=variant, seed=int(header.get("seed", 0)))
    expected = param_shapes(widths, variant)
    entries = header["tensors"]
    names = [e["name"] for e in entries]
    if names != list(expected.keys()):
        raise CheckpointError(f"tensor list mismatch in {path}: header names do not match "
                              f"the {variant} layout for widths {widths}")

    payload = raw[12 + header_len:]
    total = sum(e["count"] for e in entries)
    if len(payload) < 4 * total:
        raise CheckpointError(f"truncated payload in {path}: "
                              f"need {4 * total} bytes, found {len(payload)}")
    flat = np.frombuffer(payload[:4 * total], dtype="<f4")

    tensors: OrderedDict[str, Param] = OrderedDict()
    for entry in entries:
        name, shape = entry["name"], tuple(entry["shape"])
        if shape != expected[name]:
            raise CheckpointError(
                f"shape mismatch for layer {name}: header says {shape}, "
                f"widths {widths} imply {expected[name]}")
        if int(np.prod(shape)) != entry["count"]:
            raise CheckpointError(f"inconsistent count for layer {name}")
        data = flat[entry["offset"]:entry["offset"] + entry["count"]].reshape(shape).copy()
        tensors[name] = Param(name, data)
    return ModelParams(widths, variant, tensors), cfg
