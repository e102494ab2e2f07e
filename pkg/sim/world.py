"""2.5-D grasp world: convex prisms on a plane, a top-down parallel-jaw gripper.

Every step is a pure function of its inputs. Randomness comes from
`np.random.default_rng([rng_seed, stream])`, so a WorldState replays exactly.
"""

import logging
import math
from typing import Optional

import numpy as np

import config
from actions import ARENA_HALF_WIDTH
from errors import InvalidObjectError, InvalidTrialError
from models.schemas import (
    FORCE_MAX,
    FORCE_MIN,
    Action,
    ContactPatch,
    Cylinder,
    GraspState,
    ObjectSpec,
    Outcome,
    Pose,
    WorldState,
    wrap_angle,
)
from sim.geometry import (
    GRIPPER,
    clip_to_strip,
    edge_position,
    enclosing_circle,
    jaw_axes,
    polygon_centroid,
    rotation,
    signed_area,
    slice_at,
    transform_points,
)
from sim.objects import validate_object_spec
from sim.render import render_tactile, render_vision

logger = logging.getLogger(__name__)

GRAVITY = 9.81
OPEN_REFERENCE_FORCE = 10.0  # commanded force held by an open gripper

SPAWN_CLEARANCE = 0.03

# jaw-closing displacement model
ALIGN_LIMIT = math.radians(30.0)
CORNER_FRACTION = 0.15
EJECTION_FORCE = 15.0
EJECTION_PROBABILITY = 0.5
EJECTION_GAP = 0.002

# lift capacity check
TORQUE_GAIN = 0.8
TORQUE_CAP = 2.0
MARGINAL_BAND = (0.9, 1.1)
FLIP_PROBABILITY = 0.2

_STREAM_CLOSE = 1
_STREAM_LIFT = 2
_SEED_BOUND = 2**62


def _stream(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([seed, stream])


def footprint(w: WorldState) -> np.ndarray:
    """Object footprint vertices in the world frame."""
    if w.object is None:
        return np.empty((0, 2))
    return transform_points(np.asarray(w.object.vertices, dtype=np.float64), w.object_pose)


def contact_depth(spec: ObjectSpec) -> float:
    """How far a finger face sinks into the footprint; softer objects give longer patches."""
    return 0.0005 + 0.002 * spec.compliance


def spawn_scene(spec: ObjectSpec, seed: int) -> WorldState:
    validate_object_spec(spec)
    poly = np.asarray(spec.vertices, dtype=np.float64)
    reach = float(np.max(np.hypot(poly[:, 0], poly[:, 1])))
    limit = ARENA_HALF_WIDTH - reach - SPAWN_CLEARANCE
    if limit <= 0.0:
        raise InvalidObjectError(f"{spec.name}: footprint too large for the arena")
    rng = np.random.default_rng(seed)
    x, y = rng.uniform(-limit, limit, size=2)
    yaw = wrap_angle(rng.uniform(-math.pi, math.pi))
    return WorldState(
        object=spec,
        object_pose=(float(x), float(y), yaw),
        gripper=None,
        aperture=GRIPPER.opening_width,
        commanded_force=OPEN_REFERENCE_FORCE,
        closed=False,
        rng_seed=int(rng.integers(0, _SEED_BOUND)),
    )


def fit_bounding_cylinder(w: WorldState) -> Cylinder:
    if w.object is None:
        raise ValueError("no object in the scene")
    cx, cy, r = enclosing_circle(footprint(w))
    return Cylinder(center=(cx, cy), radius=r, height=w.object.height)


def _check_in_arena(pose: Pose) -> None:
    if abs(pose.x) > ARENA_HALF_WIDTH or abs(pose.y) > ARENA_HALF_WIDTH:
        raise InvalidTrialError(f"gripper commanded outside the arena at ({pose.x:.4f}, {pose.y:.4f})")


def place_gripper(w: WorldState, pose: Pose, force: float = OPEN_REFERENCE_FORCE) -> WorldState:
    """Put the open gripper at `pose` without touching the object."""
    _check_in_arena(pose)
    return w.model_copy(
        update={
            "gripper": pose,
            "aperture": GRIPPER.opening_width,
            "commanded_force": float(force),
            "closed": False,
            "in_contact": (False, False),
            "contacts": (None, None),
            "ejected": False,
        }
    )


def release_gripper(w: WorldState) -> WorldState:
    """Open the fingers where they are; the object stays put."""
    if w.gripper is None:
        raise ValueError("gripper is not placed")
    return place_gripper(w, w.gripper, OPEN_REFERENCE_FORCE)


def apply_action(w: WorldState, a: Action) -> WorldState:
    if w.gripper is None:
        raise ValueError("place the gripper before applying an action")
    g = w.gripper
    target = Pose(x=g.x + a.dx, y=g.y + a.dy, z=max(0.0, g.z + a.dz), yaw=g.yaw + a.dyaw)
    _check_in_arena(target)
    force = w.commanded_force + a.dforce
    if not (FORCE_MIN - 1e-6 <= force <= FORCE_MAX + 1e-6):
        raise InvalidTrialError(f"commanded force {force:.3f} N outside [4, 25] N; clamp the action first")
    return close_at(w, target, float(np.clip(force, FORCE_MIN, FORCE_MAX)))


def close_at(w: WorldState, pose: Pose, force: float) -> WorldState:
    """Open, move to `pose`, and close the fingers with `force`."""
    _check_in_arena(pose)
    rng = _stream(w.rng_seed, _STREAM_CLOSE)
    next_seed = int(rng.integers(0, _SEED_BOUND))
    eject_draw = float(rng.random())
    base = {
        "object": w.object,
        "gripper": pose,
        "commanded_force": force,
        "closed": True,
        "rng_seed": next_seed,
    }

    spec = w.object
    if spec is None or pose.z >= spec.height:
        return WorldState(object_pose=w.object_pose, aperture=0.0, **base)

    center = np.array([pose.x, pose.y])
    u, v = jaw_axes(pose.yaw)

    def jaw_coords(pts: np.ndarray) -> np.ndarray:
        rel = pts - center
        return np.column_stack([rel @ u, rel @ v])

    obj_pose = w.object_pose
    strip = clip_to_strip(jaw_coords(transform_points(np.asarray(spec.vertices), obj_pose)), GRIPPER.half_face)
    if len(strip) < 3 or signed_area(strip) < 1e-12:
        return WorldState(object_pose=obj_pose, aperture=0.0, **base)

    half_open = GRIPPER.half_opening
    s_max, s_min = float(strip[:, 0].max()), float(strip[:, 0].min())
    right_blocked, left_blocked = s_max > half_open, s_min < -half_open

    if right_blocked and left_blocked:
        return WorldState(object_pose=obj_pose, aperture=GRIPPER.opening_width, **base)
    if right_blocked or left_blocked:
        # one finger rests on top of the object; the other closes onto it without pushing
        if right_blocked:
            patch = _patch(spec, strip, s_min + contact_depth(spec), pose, center, u, v, w)
            contacts, aperture = (patch, None), half_open - s_min
        else:
            patch = _patch(spec, strip, s_max - contact_depth(spec), pose, center, u, v, w)
            contacts, aperture = (None, patch), s_max + half_open
        return WorldState(
            object_pose=obj_pose,
            aperture=aperture,
            in_contact=(contacts[0] is not None, contacts[1] is not None),
            contacts=contacts,
            **base,
        )

    # first contact rotates the object toward edge alignment, attenuated by friction
    right_first = (half_open - s_max) <= (s_min + half_open)
    phi = _alignment_angle(strip, right_first)
    if phi and abs(phi) < ALIGN_LIMIT:
        gain = float(np.clip(1.0 - spec.friction, 0.2, 0.8))
        rotated = _rotate_about_centroid(spec, obj_pose, gain * phi)
        rotated_strip = clip_to_strip(jaw_coords(transform_points(np.asarray(spec.vertices), rotated)), GRIPPER.half_face)
        if len(rotated_strip) >= 3 and np.ptp(rotated_strip[:, 0]) <= GRIPPER.opening_width:
            obj_pose, strip = rotated, rotated_strip

    # push until centered between the fingers
    shift = -0.5 * (float(strip[:, 0].max()) + float(strip[:, 0].min()))
    if shift != 0.0:
        obj_pose = (obj_pose[0] + shift * u[0], obj_pose[1] + shift * u[1], obj_pose[2])
        strip = strip + np.array([shift, 0.0])

    s_max, s_min = float(strip[:, 0].max()), float(strip[:, 0].min())
    depth = contact_depth(spec)
    moved = w.model_copy(update={"object_pose": obj_pose})
    left = _patch(spec, strip, s_min + depth, pose, center, u, v, moved)
    right = _patch(spec, strip, s_max - depth, pose, center, u, v, moved)

    if (left.corner or right.corner) and force > EJECTION_FORCE and eject_draw < EJECTION_PROBABILITY:
        corner = right if right.corner else left
        obj_pose = _eject(spec, obj_pose, corner, jaw_coords, v)
        logger.debug(f"Object {spec.name} ejected at {force:.1f} N")
        return WorldState(object_pose=obj_pose, aperture=0.0, ejected=True, **base)

    return WorldState(
        object_pose=obj_pose,
        aperture=s_max - s_min,
        in_contact=(True, True),
        contacts=(left, right),
        **base,
    )


def _alignment_angle(strip: np.ndarray, right_first: bool) -> Optional[float]:
    """Rotation that makes the edge at the first-contact vertex parallel to the finger face."""
    idx = int(np.argmax(strip[:, 0])) if right_first else int(np.argmin(strip[:, 0]))
    n = len(strip)
    best = None
    for j in ((idx - 1) % n, (idx + 1) % n):
        ds, dt = strip[j] - strip[idx]
        if abs(dt) < 1e-12:
            continue
        phi = math.atan(ds / dt)
        if best is None or abs(phi) < abs(best):
            best = phi
    return best


def _rotate_about_centroid(spec: ObjectSpec, obj_pose, angle: float):
    local_centroid = polygon_centroid(np.asarray(spec.vertices, dtype=np.float64))
    c = transform_points(local_centroid[None, :], obj_pose)[0]
    origin = np.array(obj_pose[:2])
    new_origin = c + rotation(angle) @ (origin - c)
    return (float(new_origin[0]), float(new_origin[1]), wrap_angle(obj_pose[2] + angle))


def _patch(spec, strip, s, pose, center, u, v, w: WorldState) -> ContactPatch:
    extent = slice_at(strip, s)
    if extent is None:
        tip = strip[int(np.argmin(np.abs(strip[:, 0] - s)))]
        extent = (float(tip[1]), float(tip[1]))
    t_low, t_high = extent
    mid = center + s * u + 0.5 * (t_low + t_high) * v
    near_vertex, edge_length = edge_position(footprint(w), mid)
    return ContactPatch(
        centroid=(float(mid[0]), float(mid[1])),
        t_low=t_low,
        t_high=t_high,
        z_low=pose.z,
        z_high=min(spec.height, pose.z + GRIPPER.finger_length),
        corner=bool(near_vertex < CORNER_FRACTION * edge_length),
    )


def _eject(spec, obj_pose, corner: ContactPatch, jaw_coords, v):
    """Squeeze the object out along the finger face, away from the gripper center."""
    st = jaw_coords(transform_points(np.asarray(spec.vertices), obj_pose))
    if 0.5 * (corner.t_low + corner.t_high) >= 0.0:
        delta = GRIPPER.half_face + EJECTION_GAP - float(st[:, 1].min())
    else:
        delta = -(GRIPPER.half_face + EJECTION_GAP) - float(st[:, 1].max())
    return (obj_pose[0] + delta * v[0], obj_pose[1] + delta * v[1], obj_pose[2])


def com_world(w: WorldState) -> np.ndarray:
    cx, cy, _ = w.object.com
    return transform_points(np.array([[cx, cy]]), w.object_pose)[0]


def torque_penalty(w: WorldState) -> float:
    """Grows with the COM offset from the grip, relative to the contact half-extent."""
    left, right = w.contacts
    spec = w.object
    floor = 0.001 + 0.004 * spec.compliance
    grip = 0.5 * (np.array(left.centroid) + np.array(right.centroid))
    offset = float(np.hypot(*(grip - com_world(w))))
    a_h = 0.5 * (max(left.half_length, floor) + max(right.half_length, floor))
    a_v = 0.5 * (max(left.half_height, floor) + max(right.half_height, floor))
    return min(TORQUE_GAIN * offset / math.sqrt(a_h * a_v), TORQUE_CAP)


def lift_oracle(friction: float, force: float, mass: float, tau: float = 0.0) -> bool:
    """Coulomb capacity of two frictional contacts against the (torque-inflated) weight."""
    return 2.0 * friction * force >= mass * GRAVITY * (1.0 + tau)


def lift_margin(w: WorldState) -> Optional[float]:
    """Capacity / demand ratio, or None when the grasp lacks two contacts."""
    if w.object is None or not all(w.in_contact):
        return None
    spec = w.object
    capacity = 2.0 * spec.friction * w.commanded_force
    demand = spec.mass * GRAVITY * (1.0 + torque_penalty(w))
    return capacity / demand


def attempt_lift(w: WorldState, noise: Optional[bool] = None) -> Outcome:
    if not w.closed:
        raise ValueError("attempt_lift needs closed fingers")
    if noise is None:
        noise = config.LIFT_NOISE
    ratio = lift_margin(w)
    if ratio is None:
        return Outcome(success=0)
    success = ratio >= 1.0
    lo, hi = MARGINAL_BAND
    if noise and lo <= ratio <= hi:
        if _stream(w.rng_seed, _STREAM_LIFT).random() < FLIP_PROBABILITY:
            success = not success
    return Outcome(success=int(success))


def contact_kind(w: WorldState) -> str:
    """none | single | corner | stable, for analysis filters."""
    flags = sum(w.in_contact)
    if flags == 0:
        return "none"
    if flags == 1:
        return "single"
    return "corner" if any(p.corner for p in w.contacts) else "stable"


def observe(w: WorldState) -> GraspState:
    if w.gripper is None:
        raise ValueError("observe needs a placed gripper")
    left, right = render_tactile(w)
    return GraspState(
        vision=render_vision(w),
        tactile_left=left,
        tactile_right=right,
        pose=w.gripper,
        force=w.commanded_force,
    )
