"""
Synthetic vision and tactile sensors.

Covers:
1. Empty scenes and open fingers render as zeros
2. Rasters are 8-bit quantized and in [0, 1]
3. Tactile intensity grows with force; softer objects spread the imprint
4. Taxel columns run up the finger: an edge grasp lights the bottom columns
5. The vision raster moves with the scene: whole-pixel shifts exactly, sub-pixel within one pixel
"""

import numpy as np

from models.schemas import TACTILE_SIZE, VISION_SIZE, Action, Pose, WorldState
from sim.render import PIXEL_PITCH, render_tactile, render_vision
from sim.world import apply_action, place_gripper, release_gripper
from tests.helpers import centered_world, make_box


def _is_quantized(raster: np.ndarray) -> bool:
    return bool(np.allclose(raster * 255.0, np.round(raster * 255.0), atol=1e-9))


def test_empty_arena_renders_zeros():
    world = WorldState()
    assert np.all(render_vision(world) == 0.0)
    left, right = render_tactile(world)
    assert not left.any() and not right.any()


def test_vision_shows_object_and_fingers(box):
    world = centered_world(box)
    raster = render_vision(world)
    assert raster.shape == (VISION_SIZE, VISION_SIZE)
    assert _is_quantized(raster)
    assert 0.0 < raster[VISION_SIZE // 2, VISION_SIZE // 2] < 1.0
    assert np.any(raster == 1.0)

    without_gripper = render_vision(WorldState(object=box))
    assert not np.any(without_gripper == 1.0)


def test_open_fingers_have_no_tactile_signal(box):
    left, right = render_tactile(centered_world(box))
    assert left.shape == right.shape == (TACTILE_SIZE, TACTILE_SIZE)
    assert not left.any() and not right.any()


def test_grasp_lights_both_fingers_and_release_clears_them(box):
    closed = apply_action(centered_world(box), Action())
    left, right = render_tactile(closed)
    assert left.any() and right.any()
    assert _is_quantized(left) and left.max() <= 1.0
    released = render_tactile(release_gripper(closed))
    assert not released[0].any() and not released[1].any()


def test_tactile_intensity_grows_with_force(box):
    world = centered_world(box)
    soft = render_tactile(apply_action(world, Action(dforce=-5.0)))[0]
    hard = render_tactile(apply_action(world, Action(dforce=10.0)))[0]
    assert hard.sum() > soft.sum()


def test_compliance_spreads_the_imprint():
    z = 0.08 - 0.006
    rigid = render_tactile(apply_action(centered_world(make_box(compliance=0.0), z=z), Action()))[0]
    soft = render_tactile(apply_action(centered_world(make_box(compliance=0.8), z=z), Action()))[0]
    assert np.count_nonzero(soft) >= np.count_nonzero(rigid)


def test_edge_grasp_lights_bottom_columns():
    spec = make_box()
    closed = apply_action(centered_world(spec, z=spec.height - 0.006), Action())
    left, _ = render_tactile(closed)
    cols = np.nonzero(left > 0.0)[1]
    assert cols.mean() < TACTILE_SIZE / 2


def test_gripper_pose_moves_the_fingers(box):
    world = centered_world(box)
    moved = place_gripper(world, Pose(x=0.05, y=0.05, z=0.02))
    assert not np.array_equal(render_vision(world), render_vision(moved))


def test_vision_shifts_with_object_and_gripper(box):
    base = render_vision(centered_world(box))
    dx, dy = 3 * PIXEL_PITCH, -2 * PIXEL_PITCH
    moved = WorldState(object=box, object_pose=(dx, dy, 0.0), aperture=0.1, rng_seed=7)
    shifted = render_vision(place_gripper(moved, Pose(x=dx, y=dy, z=0.02)))
    # nothing near the border wraps around; rows grow toward -y
    assert not base[:, -3:].any() and not base[-2:, :].any()
    assert np.array_equal(shifted, np.roll(base, (2, 3), axis=(0, 1)))


def test_object_blob_follows_sub_pixel_translation(box):
    def blob_column(world):
        cols = np.nonzero(render_vision(world))[1]
        return cols.mean()

    dx = 2.4 * PIXEL_PITCH
    base = blob_column(WorldState(object=box))
    moved = blob_column(WorldState(object=box, object_pose=(dx, 0.0, 0.0)))
    assert abs((moved - base) - round(dx / PIXEL_PITCH)) <= 1.0
