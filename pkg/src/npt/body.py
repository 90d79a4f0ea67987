"""Parametric articulated body: a 12-joint capsule humanoid posed by forward
kinematics and deformed with linear blend skinning.

Stands in for a licensed statistical body model: identity parameters scale
bone lengths and radii, pose parameters rotate joints inside anatomical
ranges, and the skinned surface provides ground-truth correspondence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .meshio import Mesh

# joint table: name, parent, attach offset in parent frame, bone axis, length, radius
_JOINT_TABLE = [
    ("pelvis",     -1, (0.00, 0.00, 0.0), (0.0,  1.0, 0.0), 0.25, 0.130),
    ("spine",       0, (0.00, 0.25, 0.0), (0.0,  1.0, 0.0), 0.30, 0.120),
    ("neck",        1, (0.00, 0.30, 0.0), (0.0,  1.0, 0.0), 0.10, 0.050),
    ("head",        2, (0.00, 0.10, 0.0), (0.0,  1.0, 0.0), 0.22, 0.110),
    ("shoulder_l",  1, (0.16, 0.26, 0.0), (1.0,  0.0, 0.0), 0.28, 0.045),
    ("elbow_l",     4, (0.28, 0.00, 0.0), (1.0,  0.0, 0.0), 0.26, 0.035),
    ("shoulder_r",  1, (-0.16, 0.26, 0.0), (-1.0, 0.0, 0.0), 0.28, 0.045),
    ("elbow_r",     6, (-0.28, 0.00, 0.0), (-1.0, 0.0, 0.0), 0.26, 0.035),
    ("hip_l",       0, (0.09, 0.00, 0.0), (0.0, -1.0, 0.0), 0.42, 0.070),
    ("knee_l",      8, (0.00, -0.42, 0.0), (0.0, -1.0, 0.0), 0.40, 0.050),
    ("hip_r",       0, (-0.09, 0.00, 0.0), (0.0, -1.0, 0.0), 0.42, 0.070),
    ("knee_r",     10, (0.00, -0.42, 0.0), (0.0, -1.0, 0.0), 0.40, 0.050),
]

JOINT_NAMES = [row[0] for row in _JOINT_TABLE]
NUM_JOINTS = len(_JOINT_TABLE)

# per-joint (x, y, z) rotation limits in degrees; wide for hips/knees/shoulders,
# near-zero for joints a body keeps rigid
DEFAULT_JOINT_RANGES = np.array([
    [(-2, 2), (-2, 2), (-2, 2)],          # pelvis
    [(-10, 10), (-10, 10), (-1, 1)],      # spine
    [(-3, 3), (-3, 3), (-3, 3)],          # neck
    [(-5, 5), (-10, 10), (-5, 5)],        # head
    [(-1, 1), (-30, 30), (-30, 30)],      # shoulder_l
    [(0, 0), (0, 60), (0, 0)],            # elbow_l
    [(-1, 1), (-30, 30), (-30, 30)],      # shoulder_r
    [(0, 0), (-60, 0), (0, 0)],           # elbow_r
    [(-90, 0), (0, 0), (0, 40)],          # hip_l
    [(0, 100), (0, 0), (0, 0)],           # knee_l
    [(-90, 0), (0, 0), (-40, 0)],         # hip_r
    [(0, 100), (0, 0), (0, 0)],           # knee_r
], dtype=np.float64)


@dataclass
class IdentityParams:
    """Shape parameters: per-bone length/radius scales and a global scale."""

    bone_length: np.ndarray   # (K,) in [0.7, 1.3]
    bone_radius: np.ndarray   # (K,) in [0.7, 1.3]
    global_scale: float       # in [0.9, 1.1]

    def to_json(self):
        return {"bone_length": self.bone_length.tolist(),
                "bone_radius": self.bone_radius.tolist(),
                "global_scale": self.global_scale}

    @staticmethod
    def from_json(obj):
        return IdentityParams(np.asarray(obj["bone_length"], dtype=np.float64),
                              np.asarray(obj["bone_radius"], dtype=np.float64),
                              float(obj["global_scale"]))

    @staticmethod
    def rest():
        return IdentityParams(np.ones(NUM_JOINTS), np.ones(NUM_JOINTS), 1.0)


@dataclass
class PoseParams:
    """Per-joint Euler angles in degrees, applied in x, y, z order."""

    angles: np.ndarray  # (K, 3)

    def to_json(self):
        return {"angles": self.angles.tolist()}

    @staticmethod
    def from_json(obj):
        return PoseParams(np.asarray(obj["angles"], dtype=np.float64))

    @staticmethod
    def rest():
        return PoseParams(np.zeros((NUM_JOINTS, 3)))


@dataclass
class KinematicBody:
    """Joint tree plus a canonical capsule surface and its skinning weights."""

    parents: np.ndarray        # (K,) parent index, -1 for the root
    rest_offsets: np.ndarray   # (K, 3) attach point in parent frame, unscaled
    bone_axes: np.ndarray      # (K, 3) unit bone direction in rest pose
    bone_lengths: np.ndarray   # (K,)
    bone_radii: np.ndarray     # (K,)
    vertex_bone: np.ndarray    # (V,) owning bone per template vertex
    vertex_axial: np.ndarray   # (V,) position along the bone axis, unscaled
    vertex_radial: np.ndarray  # (V, 3) offset perpendicular to the axis, unscaled
    faces: np.ndarray          # (F, 3)
    skin_weights: np.ndarray   # (V, K) row-stochastic, at most 2 nonzero per row

    @property
    def num_vertices(self) -> int:
        return self.vertex_bone.shape[0]

    @property
    def num_joints(self) -> int:
        return self.parents.shape[0]


def _perp_frame(axis):
    """Two unit vectors orthogonal to axis (axis is +-X or +-Y here)."""
    axis = np.asarray(axis, dtype=np.float64)
    helper = np.array([0.0, 0.0, 1.0])
    u = np.cross(axis, helper)
    u /= np.linalg.norm(u)
    v = np.cross(axis, u)
    return u, v


def make_body(rings: int = 5, segments: int = 8) -> KinematicBody:
    """Build the canonical body surface and skinning weights (alpha = rest)."""
    if rings < 2 or segments < 3:
        raise ValueError("need at least 2 rings and 3 segments per capsule")
    parents = np.array([row[1] for row in _JOINT_TABLE], dtype=np.int64)
    offsets = np.array([row[2] for row in _JOINT_TABLE], dtype=np.float64)
    axes = np.array([row[3] for row in _JOINT_TABLE], dtype=np.float64)
    lengths = np.array([row[4] for row in _JOINT_TABLE], dtype=np.float64)
    radii = np.array([row[5] for row in _JOINT_TABLE], dtype=np.float64)

    vertex_bone, vertex_axial, vertex_radial, faces = [], [], [], []
    ring_fracs = np.linspace(0.04, 0.96, rings)
    taper = np.sqrt(1.0 - 0.6 * (2.0 * ring_fracs - 1.0) ** 2)  # capsule-like profile
    angles = 2.0 * np.pi * np.arange(segments) / segments
    for k in range(NUM_JOINTS):
        u, v = _perp_frame(axes[k])
        base = len(vertex_bone)
        # bottom pole, ring grid, top pole
        vertex_bone.append(k)
        vertex_axial.append(0.0)
        vertex_radial.append(np.zeros(3))
        for i, frac in enumerate(ring_fracs):
            rho = radii[k] * taper[i]
            for phi in angles:
                vertex_bone.append(k)
                vertex_axial.append(frac * lengths[k])
                vertex_radial.append(rho * (np.cos(phi) * u + np.sin(phi) * v))
        vertex_bone.append(k)
        vertex_axial.append(lengths[k])
        vertex_radial.append(np.zeros(3))

        bottom = base
        top = base + 1 + rings * segments
        ring_at = lambda i, j: base + 1 + i * segments + (j % segments)
        for j in range(segments):
            faces.append((bottom, ring_at(0, j + 1), ring_at(0, j)))
            faces.append((top, ring_at(rings - 1, j), ring_at(rings - 1, j + 1)))
        for i in range(rings - 1):
            for j in range(segments):
                a, b = ring_at(i, j), ring_at(i, j + 1)
                c, d = ring_at(i + 1, j + 1), ring_at(i + 1, j)
                faces.append((a, b, c))
                faces.append((a, c, d))

    vertex_bone = np.array(vertex_bone, dtype=np.int64)
    vertex_axial = np.array(vertex_axial, dtype=np.float64)
    vertex_radial = np.array(vertex_radial, dtype=np.float64)
    faces = np.array(faces, dtype=np.int64)

    body = KinematicBody(parents, offsets, axes, lengths, radii,
                         vertex_bone, vertex_axial, vertex_radial, faces,
                         skin_weights=np.zeros((len(vertex_bone), NUM_JOINTS)))
    body.skin_weights = _capsule_skin_weights(body)
    return body


def _rest_joint_origins(body: KinematicBody, alpha: IdentityParams) -> np.ndarray:
    """Joint origins in the scaled rest pose (identity orientations)."""
    scale = alpha.global_scale
    origins = np.zeros((body.num_joints, 3))
    for k in range(body.num_joints):
        parent = body.parents[k]
        if parent < 0:
            continue
        origins[k] = origins[parent] + body.rest_offsets[k] * alpha.bone_length[parent] * scale
    return origins


def _template_vertices(body: KinematicBody, alpha: IdentityParams,
                       origins: np.ndarray) -> np.ndarray:
    k = body.vertex_bone
    scale = alpha.global_scale
    axial = body.vertex_axial * alpha.bone_length[k] * scale
    radial = body.vertex_radial * (alpha.bone_radius[k] * scale)[:, None]
    return origins[k] + axial[:, None] * body.bone_axes[k] + radial


def _point_segment_distance(points, seg_a, seg_b):
    d = seg_b - seg_a
    denom = float(d @ d)
    if denom == 0.0:
        closest = seg_a[None, :]
    else:
        t = np.clip((points - seg_a) @ d / denom, 0.0, 1.0)
        closest = seg_a + t[:, None] * d
    return np.linalg.norm(points - closest, axis=1)


def _capsule_skin_weights(body: KinematicBody, temperature: float = 0.1) -> np.ndarray:
    """Blend each vertex over its 2 nearest bones by capsule distance."""
    alpha = IdentityParams.rest()
    origins = _rest_joint_origins(body, alpha)
    verts = _template_vertices(body, alpha, origins)
    dist = np.empty((body.num_vertices, body.num_joints))
    for k in range(body.num_joints):
        tip = origins[k] + body.bone_axes[k] * body.bone_lengths[k]
        dist[:, k] = np.maximum(_point_segment_distance(verts, origins[k], tip)
                                - body.bone_radii[k], 0.0)
    nearest2 = np.argsort(dist, axis=1, kind="stable")[:, :2]
    picked = np.take_along_axis(dist, nearest2, axis=1)
    logits = np.exp(-picked / temperature)
    logits /= logits.sum(axis=1, keepdims=True)
    weights = np.zeros_like(dist)
    rows = np.arange(body.num_vertices)[:, None]
    weights[rows, nearest2] = logits
    return weights


def _euler_xyz(degrees) -> np.ndarray:
    """Rotation matrix applying x, then y, then z rotations (degrees)."""
    rx, ry, rz = np.deg2rad(np.asarray(degrees, dtype=np.float64))
    cx, sx = np.cos(rx), np.sin(rx)
    cy, sy = np.cos(ry), np.sin(ry)
    cz, sz = np.cos(rz), np.sin(rz)
    mx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    my = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    mz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return mz @ my @ mx


def skin_mesh(body: KinematicBody, alpha: IdentityParams, beta: PoseParams) -> Mesh:
    """Pose the scaled template with linear blend skinning.

    Forward kinematics walks the joint tree (parents precede children),
    composing each joint's Euler rotation on top of the scaled rest offsets.
    Every vertex then follows the weight-blended rigid motion of its bones.
    """
    origins = _rest_joint_origins(body, alpha)
    rest_verts = _template_vertices(body, alpha, origins)
    scale = alpha.global_scale

    rot = np.zeros((body.num_joints, 3, 3))
    pos = np.zeros((body.num_joints, 3))
    for k in range(body.num_joints):
        local = _euler_xyz(beta.angles[k])
        parent = body.parents[k]
        if parent < 0:
            rot[k] = local
            pos[k] = 0.0
        else:
            offset = body.rest_offsets[k] * alpha.bone_length[parent] * scale
            rot[k] = rot[parent] @ local
            pos[k] = pos[parent] + rot[parent] @ offset

    # displacement form: at rest every delta is exactly zero, so the
    # alpha-scaled template comes back bit-identical
    posed = rest_verts.copy()
    eye = np.eye(3)
    for k in range(body.num_joints):
        w = body.skin_weights[:, k]
        active = w > 0.0
        if not np.any(active):
            continue
        delta = (rest_verts[active] - origins[k]) @ (rot[k] - eye).T + (pos[k] - origins[k])
        posed[active] += w[active, None] * delta
    return Mesh(posed, body.faces.copy())


def sample_identity(rng: np.random.Generator) -> IdentityParams:
    return IdentityParams(
        bone_length=rng.uniform(0.7, 1.3, size=NUM_JOINTS),
        bone_radius=rng.uniform(0.7, 1.3, size=NUM_JOINTS),
        global_scale=float(rng.uniform(0.9, 1.1)),
    )


def sample_pose(rng: np.random.Generator, ranges: np.ndarray = DEFAULT_JOINT_RANGES) -> PoseParams:
    ranges = np.asarray(ranges, dtype=np.float64)
    if ranges.shape != (NUM_JOINTS, 3, 2):
        raise ValueError(f"ranges must be ({NUM_JOINTS}, 3, 2), got {ranges.shape}")
    if np.any(ranges[..., 0] > ranges[..., 1]):
        raise ValueError("inverted joint range (low > high)")
    lo, hi = ranges[..., 0], ranges[..., 1]
    u = rng.uniform(0.0, 1.0, size=(NUM_JOINTS, 3))
    return PoseParams(lo + u * (hi - lo))
