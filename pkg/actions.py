"""Action-space geometry: legal ranges, gripper-frame motion, network features."""

import math
from typing import Optional

import numpy as np

from models.schemas import (
    FORCE_MAX,
    FORCE_MIN,
    MAX_TRANSLATION,
    MAX_YAW,
    Action,
    Pose,
)

ARENA_HALF_WIDTH = 0.15  # meters
HEIGHT_SCALE = 0.15

FEATURE_SIZE = 12
POSE_SLOTS = slice(5, 9)

# action (5) | pose (4) | gripper-frame motion (3)
_ACTION_SCALE = np.array([MAX_TRANSLATION, MAX_TRANSLATION, MAX_TRANSLATION, MAX_YAW, FORCE_MAX])
_POSE_SCALE = np.array([ARENA_HALF_WIDTH, ARENA_HALF_WIDTH, HEIGHT_SCALE, math.pi])


def _clamp_force_delta(dforce: float, current_force: Optional[float]) -> float:
    if current_force is None:
        span = FORCE_MAX - FORCE_MIN
        return float(min(max(dforce, -span), span))
    resulting = current_force + dforce
    if resulting < FORCE_MIN:
        return FORCE_MIN - current_force
    if resulting > FORCE_MAX:
        return FORCE_MAX - current_force
    return dforce


def clamp_action(a: Action, current_force: Optional[float] = None) -> Action:
    """Clip every component into its legal range.

    With `current_force` the force delta is clipped so the resulting commanded
    force lands in [4, 25] N; without it only the delta magnitude is bounded.
    In-range components are returned untouched, which keeps clamping idempotent.
    """
    return Action(
        dx=float(np.clip(a.dx, -MAX_TRANSLATION, MAX_TRANSLATION)),
        dy=float(np.clip(a.dy, -MAX_TRANSLATION, MAX_TRANSLATION)),
        dz=float(np.clip(a.dz, -MAX_TRANSLATION, MAX_TRANSLATION)),
        dyaw=float(np.clip(a.dyaw, -MAX_YAW, MAX_YAW)),
        dforce=_clamp_force_delta(a.dforce, current_force),
    )


def to_gripper_frame(motion, yaw: float) -> np.ndarray:
    """Rotate a world-frame motion by -yaw about the vertical axis."""
    m = np.asarray(motion, dtype=np.float64)
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([c * m[0] + s * m[1], -s * m[0] + c * m[1], m[2]], dtype=np.float64)


def batch_features(actions: np.ndarray, poses: np.ndarray) -> np.ndarray:
    """Feature rows for (n, 5) actions taken from (n, 4) poses."""
    actions = np.atleast_2d(np.asarray(actions, dtype=np.float64))
    poses = np.atleast_2d(np.asarray(poses, dtype=np.float64))
    n = actions.shape[0]
    c, s = np.cos(poses[:, 3]), np.sin(poses[:, 3])
    local = np.empty((n, 3), dtype=np.float64)
    local[:, 0] = c * actions[:, 0] + s * actions[:, 1]
    local[:, 1] = -s * actions[:, 0] + c * actions[:, 1]
    local[:, 2] = actions[:, 2]

    features = np.empty((n, FEATURE_SIZE), dtype=np.float64)
    features[:, 0:5] = actions / _ACTION_SCALE
    features[:, POSE_SLOTS] = poses / _POSE_SCALE
    features[:, 9:12] = local / MAX_TRANSLATION
    return features


def actions_to_features(actions: np.ndarray, pose: Pose) -> np.ndarray:
    """Vectorized action_to_feature for an (n, 5) candidate array sharing one pose."""
    actions = np.atleast_2d(np.asarray(actions, dtype=np.float64))
    return batch_features(actions, np.broadcast_to(pose.as_array(), (actions.shape[0], 4)))


def action_to_feature(a: Action, p: Pose) -> np.ndarray:
    return actions_to_features(a.as_array()[None, :], p)[0]


def drop_pose_slots(features: np.ndarray) -> np.ndarray:
    """Feature view for models trained without the end-effector pose."""
    keep = [i for i in range(FEATURE_SIZE) if not (POSE_SLOTS.start <= i < POSE_SLOTS.stop)]
    return features[..., keep]
