"""Shared builders for tests: tiny model configs, hand-placed worlds, synthetic records."""

import numpy as np

from models.schemas import Action, GraspState, ModelConfig, ObjectSpec, Outcome, Pose, TrialRecord, WorldState
from sim.world import place_gripper

# Tiny towers on small rasters: 24 -> 10 -> 4 -> 1 and 16 -> 6 -> 2
TINY = ModelConfig(
    vision_size=24,
    tactile_size=16,
    vision_widths=(2, 2, 2),
    tactile_widths=(2, 2),
    branch_units=4,
    action_hidden=4,
    fusion_hidden=6,
)

# Tiny towers on the simulator's full-size rasters
SIM_TINY = {
    "vision_widths": [2],
    "tactile_widths": [2],
    "branch_units": 4,
    "action_hidden": 4,
    "fusion_hidden": 6,
}


def make_box(name="box", side=0.04, height=0.08, mass=0.2, friction=0.6, compliance=0.0, com=None) -> ObjectSpec:
    h = 0.5 * side
    return ObjectSpec(
        name=name,
        vertices=[(h, -h), (h, h), (-h, h), (-h, -h)],
        height=height,
        mass=mass,
        com=com or (0.0, 0.0, 0.5 * height),
        friction=friction,
        compliance=compliance,
    )


def centered_world(spec: ObjectSpec, z: float = 0.02, yaw: float = 0.0, seed: int = 7) -> WorldState:
    """Object at the origin, open gripper straddling it with the jaw along x."""
    world = WorldState(object=spec, object_pose=(0.0, 0.0, 0.0), aperture=0.1, rng_seed=seed)
    return place_gripper(world, Pose(x=0.0, y=0.0, z=z, yaw=yaw))


def _raster(rng: np.random.Generator, size: int, blank: bool) -> np.ndarray:
    if blank:
        return np.full((size, size), 0.5)
    return np.round(rng.random((size, size)) * 255) / 255


def synthetic_state(
    rng: np.random.Generator, config: ModelConfig = TINY, pose: Pose = None, force: float = 10.0, blank: bool = False
) -> GraspState:
    return GraspState(
        vision=_raster(rng, config.vision_size, blank),
        tactile_left=_raster(rng, config.tactile_size, blank),
        tactile_right=_raster(rng, config.tactile_size, blank),
        pose=pose or Pose(x=0.01, y=-0.02, z=0.03, yaw=0.4),
        force=force,
    )


def synthetic_records(n_objects: int = 6, per_object: int = 40, seed: int = 0, config: ModelConfig = TINY, blank: bool = False):
    """Records whose label is 'resulting force above 14.5 N'; every state holds 10 N."""
    rng = np.random.default_rng(seed)
    records = []
    for o in range(n_objects):
        for i in range(per_object):
            dforce = float(rng.uniform(-6.0, 15.0))
            records.append(
                TrialRecord(
                    state=synthetic_state(rng, config, blank=blank),
                    action=Action(dx=float(rng.uniform(-0.02, 0.02)), dforce=dforce),
                    outcome=Outcome(success=int(dforce > 4.5)),
                    object_id=f"obj{o}",
                    episode_id=f"syn-{o}-{i}",
                )
            )
    return records
