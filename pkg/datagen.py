"""Self-supervised trial collection: initialize near the object, act, lift, label."""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Sequence

import numpy as np

import config
from dataset import Dataset
from errors import InvalidTrialError
from models.schemas import (
    FORCE_MIN,
    MAX_TRANSLATION,
    MAX_YAW,
    Action,
    CollectConfig,
    ObjectSpec,
    Outcome,
    Pose,
    TrialRecord,
    WorldState,
)
from policy import ModelScorer, Scorer, derive_seed, select_action
from sim.world import (
    OPEN_REFERENCE_FORCE,
    apply_action,
    attempt_lift,
    fit_bounding_cylinder,
    observe,
    place_gripper,
    release_gripper,
    spawn_scene,
)

logger = logging.getLogger(__name__)


def initialize_gripper(world: WorldState, rng: np.random.Generator, perturbation_scale: Optional[float] = None) -> WorldState:
    """Open gripper above a point near the fitted cylinder center.

    Horizontal offset is uniform on a disc of radius `perturbation_scale`
    (default: half the cylinder radius); height uniform over the object
    height; yaw uniform. Fingers stay open.
    """
    cylinder = fit_bounding_cylinder(world)
    radius = perturbation_scale if perturbation_scale is not None else 0.5 * cylinder.radius
    r = radius * np.sqrt(rng.random())
    theta = rng.uniform(0.0, 2.0 * np.pi)
    pose = Pose(
        x=cylinder.center[0] + r * np.cos(theta),
        y=cylinder.center[1] + r * np.sin(theta),
        z=float(rng.uniform(0.0, cylinder.height)),
        yaw=float(rng.uniform(-np.pi, np.pi)),
    )
    return place_gripper(world, pose, OPEN_REFERENCE_FORCE)


def random_action(rng: np.random.Generator, current_force: float, force_range=(FORCE_MIN, 25.0)) -> Action:
    """Uniform over the motion ranges; the resulting force is uniform over `force_range`."""
    dx, dy, dz = rng.uniform(-MAX_TRANSLATION, MAX_TRANSLATION, size=3)
    dyaw = rng.uniform(-MAX_YAW, MAX_YAW)
    target_force = rng.uniform(*force_range)
    return Action(dx=dx, dy=dy, dz=dz, dyaw=dyaw, dforce=target_force - current_force)


def random_trial(
    world: WorldState,
    cfg: CollectConfig,
    seed: int,
    episode_id: str = "",
    scene_seed: Optional[int] = None,
    scorer: Optional[Scorer] = None,
) -> List[TrialRecord]:
    """One labeled trial (s0, a, o) with its gripping and post-release snapshots attached.

    With a scorer the action comes from the regrasp search instead of the
    uniform distribution. Returns an empty list when every retry left the arena.
    """
    rng = np.random.default_rng(seed)
    object_id = world.object.name if world.object else ""
    for attempt in range(config.COLLECT_MAX_RETRIES):
        w0 = initialize_gripper(world, rng, cfg.perturbation_scale)
        s0 = observe(w0)
        if scorer is None:
            action = random_action(rng, w0.commanded_force, cfg.force_range)
        else:
            action, _ = select_action(scorer, s0, cfg.search, derive_seed(seed, attempt), w0)
        try:
            w1 = apply_action(w0, action)
        except InvalidTrialError as e:
            logger.debug(f"Trial {episode_id} attempt {attempt} resampled: {e}")
            continue
        outcome = attempt_lift(w1)
        return [
            TrialRecord(
                state=s0,
                action=action,
                outcome=outcome,
                object_id=object_id,
                episode_id=episode_id,
                scene_seed=scene_seed,
                kind="trial",
                hold_state=observe(w1),
                release_state=observe(release_gripper(w1)),
            )
        ]
    logger.warning(f"Trial {episode_id} skipped after {config.COLLECT_MAX_RETRIES} invalid attempts")
    return []


def augment(records: Sequence[TrialRecord]) -> List[TrialRecord]:
    """Each trial yields three records sharing its label.

    (s0, a, o); the gripping state with a hold action (no motion, no force
    change); and the post-release state with the original action.
    """
    out: List[TrialRecord] = []
    hold = Action()
    for r in records:
        plain = r.model_copy(update={"hold_state": None, "release_state": None})
        out.append(plain)
        if r.hold_state is None or r.release_state is None:
            logger.warning(f"Record {r.episode_id} has no snapshots; passed through un-augmented")
            continue
        out.append(plain.model_copy(update={"state": r.hold_state, "action": hold, "kind": "hold"}))
        out.append(plain.model_copy(update={"state": r.release_state, "kind": "release"}))
    return out


def _trial_task(args):
    index, spec, cfg, scorer = args
    scene_seed = derive_seed(cfg.seed, index, 0)
    world = spawn_scene(spec, scene_seed)
    return random_trial(
        world,
        cfg,
        derive_seed(cfg.seed, index, 1),
        episode_id=f"c{cfg.seed}-t{index:06d}",
        scene_seed=scene_seed,
        scorer=scorer,
    )


def collect(
    cfg: CollectConfig,
    objects: Sequence[ObjectSpec],
    scorer: Optional[Scorer] = None,
    workers: int = 1,
) -> Dataset:
    """Run cfg.n_trials trials round-robin over `objects` and augment them.

    Every trial re-spawns its object from a seed derived from (cfg.seed, index),
    so the dataset is a pure function of cfg regardless of worker count.
    """
    if not objects:
        raise ValueError("collect needs at least one object")
    if cfg.policy == "on_policy" and scorer is None:
        raise ValueError("on_policy collection needs a scorer")
    tasks = [(i, objects[i % len(objects)], cfg, scorer) for i in range(cfg.n_trials)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            batches = list(pool.map(_trial_task, tasks))
    else:
        batches = [_trial_task(t) for t in tasks]
    trials = [r for batch in batches for r in batch]
    positives = sum(r.outcome.success for r in trials)
    logger.info(f"Collected {len(trials)}/{cfg.n_trials} trials ({cfg.policy}), {positives} successes")
    return Dataset(augment(trials), [o.name for o in objects])


def on_policy_scorer(params, calibration=None, workers: int = 1) -> ModelScorer:
    return ModelScorer(params, calibration, batch_size=config.SCORING_BATCH, workers=workers)


def replay_trial(record: TrialRecord, spec: ObjectSpec) -> Outcome:
    """Re-run a recorded trial from its scene seed, starting pose and action."""
    if record.scene_seed is None:
        raise InvalidTrialError(f"record {record.episode_id} carries no scene seed")
    world = spawn_scene(spec, record.scene_seed)
    w0 = place_gripper(world, record.state.pose, record.state.force)
    return attempt_lift(apply_action(w0, record.action))
