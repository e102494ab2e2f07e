from sim.objects import load_library, object_sets, resolve_object_set, save_library, validate_object_spec
from sim.render import render_tactile, render_vision
from sim.world import (
    GRIPPER,
    OPEN_REFERENCE_FORCE,
    apply_action,
    attempt_lift,
    fit_bounding_cylinder,
    lift_margin,
    lift_oracle,
    observe,
    place_gripper,
    release_gripper,
    spawn_scene,
)

__all__ = [
    "GRIPPER",
    "OPEN_REFERENCE_FORCE",
    "apply_action",
    "attempt_lift",
    "fit_bounding_cylinder",
    "lift_margin",
    "lift_oracle",
    "load_library",
    "object_sets",
    "observe",
    "place_gripper",
    "release_gripper",
    "render_tactile",
    "render_vision",
    "resolve_object_set",
    "save_library",
    "spawn_scene",
    "validate_object_spec",
]
