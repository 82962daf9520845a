"""
Skeleton-only MANO-style hand model.

Joint layout (16 articulated joints, MANO order):
0 wrist, 1-3 index, 4-6 middle, 7-9 pinky, 10-12 ring, 13-15 thumb.
Fingertips follow as points 16-20 in the order thumb, index, middle, ring, pinky.
Angles are intrinsic X-Y-Z Euler angles in radians, lengths are meters.
"""

import json
import os
import typing as t
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import DimensionMismatch, TooShort
from .types import HandPose, HandShape, HandTrack, JointSet, Side

EULER_ORDER = "XYZ"
MIRROR = np.diag([-1.0, 1.0, 1.0])

# right hand, palm down, fingers along +Y, thumb towards -X
_PARENTS = (0, 0, 1, 2, 0, 4, 5, 0, 7, 8, 0, 10, 11, 0, 13, 14)
_OFFSETS = (
    (0.0, 0.0, 0.0),
    (-0.022, 0.090, 0.0),
    (0.0, 0.039, 0.0),
    (0.0, 0.022, 0.0),
    (0.0, 0.094, 0.0),
    (0.0, 0.044, 0.0),
    (0.0, 0.026, 0.0),
    (0.038, 0.080, 0.0),
    (0.0, 0.032, 0.0),
    (0.0, 0.018, 0.0),
    (0.020, 0.088, 0.0),
    (0.0, 0.041, 0.0),
    (0.0, 0.025, 0.0),
    (-0.030, 0.025, -0.008),
    (-0.022, 0.028, 0.0),
    (-0.012, 0.030, 0.0),
)
_TIP_PARENTS = (15, 3, 6, 12, 9)
_TIP_OFFSETS = (
    (-0.010, 0.024, 0.0),
    (0.0, 0.020, 0.0),
    (0.0, 0.022, 0.0),
    (0.0, 0.021, 0.0),
    (0.0, 0.018, 0.0),
)


@dataclass(frozen=True, eq=False)
class HandTemplate:
    parent: tuple[int, ...]
    offsets: np.ndarray
    tip_parents: tuple[int, ...] = _TIP_PARENTS
    tip_offsets: np.ndarray = field(default_factory=lambda: np.array(_TIP_OFFSETS))
    shape_basis: t.Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        offsets = np.asarray(self.offsets, dtype=float)
        tips = np.asarray(self.tip_offsets, dtype=float)
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "tip_offsets", tips)
        if self.parent[0] != 0:
            raise ValueError("joint 0 must be the root (its own parent)")
        if any(not 0 <= p < i for i, p in enumerate(self.parent) if i > 0):
            raise ValueError("parents must precede their children")
        tip_shape = (len(self.tip_parents), 3)
        if offsets.shape != (self.joints, 3) or tips.shape != tip_shape:
            raise ValueError("offset tables do not match the joint layout")
        bones = np.concatenate([offsets[1:], tips])
        if np.any(np.linalg.norm(bones, axis=1) <= 0):
            raise ValueError("every non-root bone needs a positive length")
        if self.shape_basis is not None:
            basis = np.asarray(self.shape_basis, dtype=float)
            if basis.shape != (self.points, 3, 10):
                raise ValueError(f"shape basis must be ({self.points}, 3, 10)")
            object.__setattr__(self, "shape_basis", basis)

    @property
    def joints(self) -> int:
        return len(self.parent)

    @property
    def points(self) -> int:
        return self.joints + len(self.tip_parents)

    def bone_offsets(self, shape: t.Optional[HandShape] = None) -> np.ndarray:
        """(points, 3) parent-frame offsets of joints then tips, shape applied."""
        bones = np.concatenate([self.offsets, self.tip_offsets])
        if self.shape_basis is not None and shape is not None:
            bones = bones + self.shape_basis @ shape.rho
        return bones

    def to_json(self) -> dict[str, t.Any]:
        return {
            "parent": list(self.parent),
            "offsets": self.offsets.tolist(),
            "tip_parents": list(self.tip_parents),
            "tip_offsets": self.tip_offsets.tolist(),
            "shape_basis": (
                None
                if self.shape_basis is None
                else self.shape_basis.reshape(-1).tolist()
            ),
        }

    @classmethod
    def from_json(cls, payload: dict[str, t.Any]) -> "HandTemplate":
        parent = tuple(payload["parent"])
        tip_parents = tuple(payload.get("tip_parents", _TIP_PARENTS))
        basis = payload.get("shape_basis")
        if basis is not None:
            basis = np.asarray(basis, dtype=float).reshape(
                len(parent) + len(tip_parents), 3, 10
            )
        return cls(
            parent=parent,
            offsets=np.asarray(payload["offsets"], dtype=float),
            tip_parents=tip_parents,
            tip_offsets=np.asarray(
                payload.get("tip_offsets", _TIP_OFFSETS), dtype=float
            ),
            shape_basis=basis,
        )


def default_template() -> HandTemplate:
    return HandTemplate(parent=_PARENTS, offsets=np.array(_OFFSETS))


def load_template(path: t.Optional[t.Union[str, os.PathLike]] = None) -> HandTemplate:
    if path is None:
        return default_template()
    with open(path) as f:
        return HandTemplate.from_json(json.load(f))


def euler_matrices(theta: np.ndarray) -> np.ndarray:
    """Rotation matrices (..., 3, 3) for intrinsic X-Y-Z Euler angles (..., 3)."""
    theta = np.asarray(theta, dtype=float)
    flat = Rotation.from_euler(EULER_ORDER, theta.reshape(-1, 3)).as_matrix()
    return flat.reshape(theta.shape[:-1] + (3, 3))


def axis_angle_to_euler(axis_angle: np.ndarray) -> np.ndarray:
    axis_angle = np.asarray(axis_angle, dtype=float)
    euler = Rotation.from_rotvec(axis_angle.reshape(-1, 3)).as_euler(EULER_ORDER)
    return euler.reshape(axis_angle.shape)


def euler_to_axis_angle(theta: np.ndarray) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    rotvec = Rotation.from_euler(EULER_ORDER, theta.reshape(-1, 3)).as_rotvec()
    return rotvec.reshape(theta.shape)


def mirror_pose(pose: HandPose) -> HandPose:
    """Reflect a pose across the X axis and swap its side."""
    theta = pose.theta * np.array([1.0, -1.0, -1.0])
    trans = pose.trans * np.array([-1.0, 1.0, 1.0])
    side: Side = "left" if pose.side == "right" else "right"
    return HandPose(theta=theta, trans=trans, side=side)


def forward_kinematics_batch(
    theta: np.ndarray,
    trans: np.ndarray,
    side: Side = "right",
    shape: t.Optional[HandShape] = None,
    template: t.Optional[HandTemplate] = None,
) -> np.ndarray:
    """World positions (N, points, 3) for N poses of one hand."""
    template = template or default_template()
    theta = np.asarray(theta, dtype=float)
    trans = np.asarray(trans, dtype=float)
    if theta.ndim != 3 or theta.shape[1:] != (template.joints, 3):
        raise DimensionMismatch(
            f"theta {theta.shape} does not fit a {template.joints}-joint template"
        )
    if trans.shape != (theta.shape[0], 3):
        raise DimensionMismatch(f"trans {trans.shape} does not match theta")

    bones = template.bone_offsets(shape)
    if side == "left":
        bones = bones @ MIRROR
    local = euler_matrices(theta)

    n = theta.shape[0]
    rot = np.empty_like(local)
    pos = np.empty((n, template.points, 3))
    rot[:, 0] = local[:, 0]
    pos[:, 0] = trans
    for j in range(1, template.joints):
        p = template.parent[j]
        rot[:, j] = rot[:, p] @ local[:, j]
        pos[:, j] = pos[:, p] + np.einsum("nij,j->ni", rot[:, p], bones[j])
    for k, p in enumerate(template.tip_parents):
        pos[:, template.joints + k] = pos[:, p] + np.einsum(
            "nij,j->ni", rot[:, p], bones[template.joints + k]
        )
    return pos


def forward_kinematics(
    pose: HandPose,
    shape: t.Optional[HandShape] = None,
    template: t.Optional[HandTemplate] = None,
) -> JointSet:
    positions = forward_kinematics_batch(
        pose.theta[None], pose.trans[None], pose.side, shape, template
    )
    return JointSet(positions=positions[0])


@dataclass(frozen=True, eq=False)
class AccelerationSeries:
    """
    Central-difference accelerations (N, points, 3) in m/s^2.
    Frame n is valid when frames n-1, n and n+1 are all visible.
    """

    values: np.ndarray
    valid: np.ndarray

    def mean_magnitude(self) -> np.ndarray:
        """Per-point mean acceleration magnitude over the valid frames."""
        if not self.valid.any():
            raise TooShort("no three consecutive visible frames")
        return np.linalg.norm(self.values[self.valid], axis=-1).mean(axis=0)


def joint_accelerations(
    track: HandTrack,
    fps: float,
    shape: t.Optional[HandShape] = None,
    template: t.Optional[HandTemplate] = None,
) -> AccelerationSeries:
    template = template or default_template()
    n = len(track)
    if n < 3:
        raise TooShort(f"{n} frames, need at least 3 for accelerations")

    theta = np.where(track.visible[:, None, None], track.theta, 0.0)
    trans = np.where(track.visible[:, None], track.trans, 0.0)
    x = forward_kinematics_batch(theta, trans, track.side, shape, template)

    values = np.zeros_like(x)
    values[1:-1] = (x[2:] - 2.0 * x[1:-1] + x[:-2]) * fps**2
    valid = np.zeros(n, dtype=bool)
    valid[1:-1] = track.visible[2:] & track.visible[1:-1] & track.visible[:-2]
    return AccelerationSeries(values=values, valid=valid)
