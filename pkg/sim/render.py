"""Synthetic sensors: top-down depth-like vision and GelSight-style tactile grids."""

from typing import Optional, Tuple

import numpy as np
from scipy.ndimage import gaussian_filter

from actions import ARENA_HALF_WIDTH
from models.schemas import FORCE_MAX, TACTILE_SIZE, VISION_SIZE, ContactPatch, WorldState
from sim.geometry import GRIPPER, jaw_axes, points_in_convex_polygon, transform_points

PIXEL_PITCH = 2.0 * ARENA_HALF_WIDTH / VISION_SIZE
FINGER_INTENSITY = 1.0
HEIGHT_RANGE = 0.15

PRESSURE_GAIN = 3.0
REFERENCE_LENGTH = 0.004  # contact length at which full force gives level PRESSURE_GAIN
MIN_CONTACT_LENGTH = 0.002

# pixel centers: column index grows with +x, row 0 is the +y edge
_cols = -ARENA_HALF_WIDTH + (np.arange(VISION_SIZE) + 0.5) * PIXEL_PITCH
_rows = ARENA_HALF_WIDTH - (np.arange(VISION_SIZE) + 0.5) * PIXEL_PITCH
_PIXEL_CENTERS = np.column_stack([np.tile(_cols, VISION_SIZE), np.repeat(_rows, VISION_SIZE)])

# taxel centers: rows run across the face from +t (row 0) to -t, columns up from the finger bottom
_TAXEL_T = GRIPPER.half_face - (np.arange(TACTILE_SIZE) + 0.5) * (GRIPPER.face_width / TACTILE_SIZE)
_TAXEL_H = (np.arange(TACTILE_SIZE) + 0.5) * (GRIPPER.finger_length / TACTILE_SIZE)


def quantize(raster: np.ndarray) -> np.ndarray:
    """8-bit quantization; keeps renders bit-stable across platforms."""
    return np.round(np.clip(raster, 0.0, 1.0) * 255.0) / 255.0


def _finger_polygons(w: WorldState):
    g = w.gripper
    u, v = jaw_axes(g.yaw)
    center = np.array([g.x, g.y])
    half_t = 0.5 * GRIPPER.finger_thickness
    polys = []
    for side in (-1.0, 1.0):
        mid = center + side * (0.5 * w.aperture + half_t) * u
        corners = [
            mid + half_t * u - GRIPPER.half_face * v,
            mid + half_t * u + GRIPPER.half_face * v,
            mid - half_t * u + GRIPPER.half_face * v,
            mid - half_t * u - GRIPPER.half_face * v,
        ]
        polys.append(np.array(corners))
    return polys


def render_vision(w: WorldState) -> np.ndarray:
    raster = np.zeros(VISION_SIZE * VISION_SIZE, dtype=np.float64)
    if w.object is not None:
        poly = transform_points(np.asarray(w.object.vertices, dtype=np.float64), w.object_pose)
        inside = points_in_convex_polygon(_PIXEL_CENTERS, poly)
        raster[inside] = 0.2 + 0.8 * min(w.object.height / HEIGHT_RANGE, 1.0)
    if w.gripper is not None:
        for finger in _finger_polygons(w):
            raster[points_in_convex_polygon(_PIXEL_CENTERS, finger)] = FINGER_INTENSITY
    return quantize(raster.reshape(VISION_SIZE, VISION_SIZE))


def _contact_mask(patch: ContactPatch, finger_z: float) -> np.ndarray:
    in_t = (_TAXEL_T >= patch.t_low) & (_TAXEL_T <= patch.t_high)
    z = finger_z + _TAXEL_H
    in_z = (z >= patch.z_low) & (z <= patch.z_high)
    mask = np.outer(in_t, in_z).astype(np.float64)
    if not mask.any():
        # contact thinner than one taxel: light the nearest one
        r = int(np.argmin(np.abs(_TAXEL_T - 0.5 * (patch.t_low + patch.t_high))))
        c = int(np.argmin(np.abs(z - 0.5 * (patch.z_low + patch.z_high))))
        mask[r, c] = 1.0
    return mask


def _finger_grid(patch: Optional[ContactPatch], w: WorldState) -> np.ndarray:
    if patch is None:
        return np.zeros((TACTILE_SIZE, TACTILE_SIZE), dtype=np.float64)
    compliance = w.object.compliance if w.object is not None else 0.0
    profile = gaussian_filter(_contact_mask(patch, w.gripper.z), sigma=0.5 + 3.0 * compliance, mode="constant")
    profile /= profile.max()
    length = max(patch.t_high - patch.t_low, MIN_CONTACT_LENGTH)
    level = PRESSURE_GAIN * (w.commanded_force / FORCE_MAX) * (REFERENCE_LENGTH / length)
    grid = quantize(1.0 - np.exp(-level * profile))
    if grid.max() == 0.0:
        grid[np.unravel_index(int(np.argmax(profile)), grid.shape)] = 1.0 / 255.0
    return grid


def render_tactile(w: WorldState) -> Tuple[np.ndarray, np.ndarray]:
    """(left, right) taxel grids, already background-subtracted."""
    if w.gripper is None:
        empty = np.zeros((TACTILE_SIZE, TACTILE_SIZE), dtype=np.float64)
        return empty, empty.copy()
    left, right = w.contacts
    return _finger_grid(left, w), _finger_grid(right, w)
