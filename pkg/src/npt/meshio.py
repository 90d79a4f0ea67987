"""Triangle-mesh data model, OBJ/PLY I/O, normalization, and vertex shuffling."""

from __future__ import annotations

import colorsys
import struct
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np


class MeshError(ValueError):
    """Raised for malformed mesh files or invalid mesh operations."""


@dataclass
class Mesh:
    vertices: np.ndarray  # (V, 3) float
    faces: np.ndarray     # (F, 3) int, zero-based
    name: Optional[str] = None

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_faces(self) -> int:
        return self.faces.shape[0]

    def validate(self):
        if self.faces.size:
            if self.faces.min() < 0 or self.faces.max() >= self.num_vertices:
                raise MeshError("face index out of range")
            a, b, c = self.faces[:, 0], self.faces[:, 1], self.faces[:, 2]
            if np.any((a == b) | (b == c) | (a == c)):
                raise MeshError("degenerate face with a repeated vertex index")
            if self.num_vertices < 3:
                raise MeshError("a mesh with faces needs at least 3 vertices")
        return self


@dataclass
class EdgeList:
    """Directed vertex-neighbor pairs; both orientations of every face edge."""

    pairs: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))

    def __post_init__(self):
        self.pairs = np.asarray(self.pairs, dtype=np.int64).reshape(-1, 2)

    def __len__(self):
        return self.pairs.shape[0]


def parse_obj(text: str, name: Optional[str] = None) -> Mesh:
    """Parse ASCII OBJ text: `v x y z` and `f ...` records.

    Face vertex references may carry `/t/n` suffixes (ignored) and negative
    indices (relative to the vertices defined so far). Polygons with more
    than 3 corners are fan-triangulated. Unsupported record types are
    skipped; one warning reports how many were skipped.
    """
    vertices: list[tuple[float, float, float]] = []
    faces: list[tuple[int, int, int]] = []
    skipped = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        kind = fields[0]
        if kind == "v":
            if len(fields) < 4:
                raise MeshError(f"line {lineno}: vertex record needs 3 coordinates")
            try:
                x, y, z = (float(tok) for tok in fields[1:4])
            except ValueError as exc:
                raise MeshError(f"line {lineno}: malformed vertex coordinate: {exc}") from None
            vertices.append((x, y, z))
        elif kind == "f":
            if len(fields) < 4:
                raise MeshError(f"line {lineno}: face record needs at least 3 indices")
            corners = []
            for tok in fields[1:]:
                head = tok.split("/", 1)[0]
                try:
                    ref = int(head)
                except ValueError:
                    raise MeshError(f"line {lineno}: malformed face index {tok!r}") from None
                if ref == 0:
                    raise MeshError(f"line {lineno}: OBJ face indices are 1-based, got 0")
                idx = ref - 1 if ref > 0 else len(vertices) + ref
                if idx < 0 or idx >= len(vertices):
                    raise MeshError(f"line {lineno}: face index {ref} out of range")
                corners.append(idx)
            for k in range(1, len(corners) - 1):
                faces.append((corners[0], corners[k], corners[k + 1]))
        else:
            skipped += 1
    if not vertices:
        raise MeshError("OBJ contains no vertices")
    if skipped:
        warnings.warn(f"skipped {skipped} unsupported OBJ record(s)", stacklevel=2)
    return Mesh(np.array(vertices, dtype=np.float64),
                np.array(faces, dtype=np.int64).reshape(-1, 3), name=name).validate()


def read_obj(path) -> Mesh:
    with open(path, "r", encoding="ascii") as fh:
        return parse_obj(fh.read(), name=str(path))


def format_obj(mesh: Mesh) -> str:
    lines = []
    for x, y, z in mesh.vertices:
        lines.append(f"v {x:.9g} {y:.9g} {z:.9g}")
    for a, b, c in mesh.faces:
        lines.append(f"f {a + 1} {b + 1} {c + 1}")
    return "\n".join(lines) + "\n"


def write_obj(mesh: Mesh, path):
    with open(path, "w", encoding="ascii") as fh:
        fh.write(format_obj(mesh))


def index_colors(num_vertices: int) -> np.ndarray:
    """Vertex-order colormap: hue ramp i/V at full saturation, as RGB bytes."""
    colors = np.empty((num_vertices, 3), dtype=np.uint8)
    for i in range(num_vertices):
        r, g, b = colorsys.hsv_to_rgb(i / num_vertices, 1.0, 1.0)
        colors[i] = (round(r * 255), round(g * 255), round(b * 255))
    return colors


def write_ply_colored(mesh: Mesh, colors: np.ndarray, path):
    """Write binary little-endian PLY with per-vertex uchar RGB."""
    colors = np.asarray(colors, dtype=np.uint8)
    if colors.shape != (mesh.num_vertices, 3):
        raise MeshError(f"need one RGB triple per vertex, got {colors.shape} for V={mesh.num_vertices}")
    header = (
        "ply\n"
        "format binary_little_endian 1.0\n"
        f"element vertex {mesh.num_vertices}\n"
        "property float x\n"
        "property float y\n"
        "property float z\n"
        "property uchar red\n"
        "property uchar green\n"
        "property uchar blue\n"
        f"element face {mesh.num_faces}\n"
        "property list uchar int vertex_indices\n"
        "end_header\n"
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        for pos, rgb in zip(mesh.vertices.astype(np.float32), colors):
            fh.write(struct.pack("<fffBBB", pos[0], pos[1], pos[2], rgb[0], rgb[1], rgb[2]))
        for a, b, c in mesh.faces:
            fh.write(struct.pack("<Biii", 3, a, b, c))


def normalize_unit_sphere(mesh: Mesh):
    """Center on the vertex centroid and scale so the max radius is 1.

    Returns (normalized mesh, centroid, scale) so outputs can be mapped back:
    original = normalized * scale + centroid.
    """
    centroid = mesh.vertices.mean(axis=0)
    shifted = mesh.vertices - centroid
    radius = float(np.sqrt((shifted * shifted).sum(axis=1).max()))
    if radius <= 0.0:
        raise MeshError("cannot normalize a mesh whose vertices all coincide")
    out = Mesh(shifted / radius, mesh.faces.copy(), name=mesh.name)
    return out, centroid, radius


def permute_vertices(mesh: Mesh, perm: np.ndarray) -> Mesh:
    """Reorder vertices (output vertex i = input vertex perm[i]); faces follow."""
    perm = np.asarray(perm, dtype=np.int64)
    v = mesh.num_vertices
    if perm.shape != (v,) or not np.array_equal(np.sort(perm), np.arange(v)):
        raise MeshError(f"perm must be a bijection on 0..{v - 1}")
    inverse = np.empty(v, dtype=np.int64)
    inverse[perm] = np.arange(v)
    return Mesh(mesh.vertices[perm], inverse[mesh.faces], name=mesh.name)


def inverse_permutation(perm: np.ndarray) -> np.ndarray:
    perm = np.asarray(perm, dtype=np.int64)
    inverse = np.empty_like(perm)
    inverse[perm] = np.arange(perm.shape[0])
    return inverse


def build_edge_list(mesh: Mesh) -> EdgeList:
    """Both orientations of every unique face edge, deduplicated and sorted."""
    if mesh.faces.size == 0:
        return EdgeList()
    f = mesh.faces
    raw = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]], axis=0)
    lo = np.minimum(raw[:, 0], raw[:, 1])
    hi = np.maximum(raw[:, 0], raw[:, 1])
    undirected = np.unique(np.stack([lo, hi], axis=1), axis=0)
    directed = np.concatenate([undirected, undirected[:, ::-1]], axis=0)
    order = np.lexsort((directed[:, 1], directed[:, 0]))
    return EdgeList(directed[order])
