"""Closed-loop regrasping: sampled action search, lift-threshold rule, min-force variant."""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Protocol, Tuple

import numpy as np

from errors import InvalidTrialError
from models.schemas import (
    FORCE_MAX,
    FORCE_MIN,
    MAX_TRANSLATION,
    MAX_YAW,
    Action,
    Calibration,
    GraspState,
    Pose,
    RegraspResult,
    SearchConfig,
    WorldState,
)
from nn.network import ParamStore
from predictor import apply_calibration, candidate_scores
from sim.geometry import GRIPPER
from sim.world import apply_action, attempt_lift, close_at, fit_bounding_cylinder, observe

logger = logging.getLogger(__name__)

BASELINE_FORCE = 10.0


def derive_seed(*parts: int) -> int:
    """Child seed from a tuple of integers; stable across runs and platforms."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1, dtype=np.uint64)[0] >> 2)


class Scorer(Protocol):
    def score(self, state: GraspState, candidates: np.ndarray, world: Optional[WorldState] = None) -> np.ndarray:
        """Success probability for each (n, 5) candidate row."""


class ModelScorer:
    """Learned predictor, optionally Platt-calibrated; chunks are scored in parallel threads."""

    def __init__(self, params: ParamStore, calibration: Optional[Calibration] = None, batch_size: int = 256, workers: int = 1):
        self.params = params
        self.calibration = calibration
        self.batch_size = batch_size
        self.workers = workers

    def score(self, state: GraspState, candidates: np.ndarray, world: Optional[WorldState] = None) -> np.ndarray:
        if self.workers <= 1 or len(candidates) <= self.batch_size:
            scores = candidate_scores(self.params, state, candidates, self.batch_size)
        else:
            chunks = [candidates[i : i + self.batch_size] for i in range(0, len(candidates), self.batch_size)]
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                # map keeps chunk order, so the reduction is by index
                parts = list(pool.map(lambda c: candidate_scores(self.params, state, c, self.batch_size), chunks))
            scores = np.concatenate(parts)
        return apply_calibration(scores, self.calibration)


class OracleScorer:
    """Simulator ground truth with lift noise off: 1.0 where the grasp would hold."""

    def score(self, state: GraspState, candidates: np.ndarray, world: Optional[WorldState] = None) -> np.ndarray:
        if world is None:
            raise ValueError("the oracle scorer needs the live world")
        probs = np.zeros(len(candidates), dtype=np.float64)
        for i, row in enumerate(candidates):
            try:
                after = apply_action(world, Action.from_array(row))
            except InvalidTrialError:
                continue
            probs[i] = float(attempt_lift(after, noise=False).success)
        return probs


class RandomScorer:
    """Uniform random scores; with the lift threshold it becomes a one-shot random regrasp."""

    def __init__(self, seed: int = 0):
        self.seed = seed

    def score(self, state: GraspState, candidates: np.ndarray, world: Optional[WorldState] = None) -> np.ndarray:
        key = int(np.round(state.pose.x * 1e6)) ^ int(np.round(state.pose.y * 1e6))
        return np.random.default_rng([self.seed, key & 0xFFFFFFFF]).random(len(candidates))


def sample_candidate_array(current_force: float, cfg: SearchConfig, seed: int) -> np.ndarray:
    """(n_random + n_force_sweep, 5) rows: uniform legal actions, then a pure force sweep."""
    rng = np.random.default_rng(seed)
    n = cfg.n_random
    random_block = np.empty((n, 5), dtype=np.float64)
    random_block[:, 0:3] = rng.uniform(-MAX_TRANSLATION, MAX_TRANSLATION, size=(n, 3))
    random_block[:, 3] = rng.uniform(-MAX_YAW, MAX_YAW, size=n)
    random_block[:, 4] = rng.uniform(FORCE_MIN, FORCE_MAX, size=n) - current_force
    sweep = np.zeros((cfg.n_force_sweep, 5), dtype=np.float64)
    if cfg.n_force_sweep == 1:
        sweep[:, 4] = FORCE_MAX - current_force
    elif cfg.n_force_sweep > 1:
        sweep[:, 4] = np.linspace(FORCE_MIN, FORCE_MAX, cfg.n_force_sweep) - current_force
    return np.vstack([random_block, sweep])


def sample_candidates(current_force: float, cfg: SearchConfig, seed: int) -> List[Action]:
    return [Action.from_array(row) for row in sample_candidate_array(current_force, cfg, seed)]


def _search(scorer: Scorer, s: GraspState, cfg: SearchConfig, seed: Optional[int], world: Optional[WorldState]):
    candidates = sample_candidate_array(s.force, cfg, cfg.seed if seed is None else seed)
    return candidates, np.asarray(scorer.score(s, candidates, world), dtype=np.float64)


def _pick(candidates: np.ndarray, probs: np.ndarray, i: int) -> Tuple[Action, float]:
    return Action.from_array(candidates[i]), float(probs[i])


def select_action(
    scorer: Scorer, s: GraspState, cfg: SearchConfig, seed: Optional[int] = None, world: Optional[WorldState] = None
) -> Tuple[Action, float]:
    candidates, probs = _search(scorer, s, cfg, seed, world)
    # np.argmax returns the first maximizer
    return _pick(candidates, probs, int(np.argmax(probs)))


def select_action_min_force(
    scorer: Scorer, s: GraspState, cfg: SearchConfig, seed: Optional[int] = None, world: Optional[WorldState] = None
) -> Tuple[Action, float]:
    candidates, probs = _search(scorer, s, cfg, seed, world)
    qualifying = np.flatnonzero(probs >= cfg.lift_threshold)
    if len(qualifying) == 0:
        return _pick(candidates, probs, int(np.argmax(probs)))
    forces = s.force + candidates[qualifying, 4]
    # lowest resulting force, then higher probability, then sampling order
    best = qualifying[np.lexsort((qualifying, -probs[qualifying], forces))[0]]
    return _pick(candidates, probs, int(best))


def select_action_weighted(
    scorer: Scorer, s: GraspState, cfg: SearchConfig, seed: Optional[int] = None, world: Optional[WorldState] = None
) -> Tuple[Action, float]:
    """Maximize p - w * F / 25: trades success probability against squeezing force."""
    candidates, probs = _search(scorer, s, cfg, seed, world)
    objective = probs - cfg.force_weight * (s.force + candidates[:, 4]) / FORCE_MAX
    return _pick(candidates, probs, int(np.argmax(objective)))


_SELECTORS = {
    "max_success": select_action,
    "min_force": select_action_min_force,
    "weighted": select_action_weighted,
}


def regrasp_episode(
    world: WorldState,
    scorer: Scorer,
    cfg: SearchConfig,
    episode_id: str = "",
    object_id: str = "",
    method: str = "",
    world_seed: int = 0,
) -> RegraspResult:
    """Select, apply, observe; lift once the chosen action clears the threshold.

    After `max_regrasps` actions without clearing it the episode ends with a
    forced lift. A gripper pushed out of the arena aborts the episode.
    """
    select = _SELECTORS[cfg.objective]
    actions: List[Action] = []
    probabilities: List[float] = []
    forces: List[float] = []
    w = world

    def result(**kwargs) -> RegraspResult:
        return RegraspResult(
            episode_id=episode_id,
            object_id=object_id or (world.object.name if world.object else ""),
            method=method,
            world_seed=world_seed,
            search_seed=cfg.seed,
            actions=actions,
            probabilities=probabilities,
            forces=forces,
            **kwargs,
        )

    for step in range(cfg.max_regrasps):
        state = observe(w)
        action, p = select(scorer, state, cfg, derive_seed(cfg.seed, step), w)
        try:
            w = apply_action(w, action)
        except InvalidTrialError as e:
            logger.warning(f"Episode {episode_id} aborted at step {step}: {e}")
            return result(aborted=True)
        actions.append(action)
        probabilities.append(p)
        forces.append(w.commanded_force)
        if p >= cfg.lift_threshold:
            return result(outcome=attempt_lift(w).success)

    return result(outcome=attempt_lift(w).success, forced_lift=True)


def cylinder_baseline_episode(
    world: WorldState, episode_id: str = "", world_seed: int = 0, force: float = BASELINE_FORCE
) -> RegraspResult:
    """Grasp the center of the fitted cylinder at mid-height with a constant force, then lift."""
    cylinder = fit_bounding_cylinder(world)
    yaw = world.gripper.yaw if world.gripper is not None else 0.0
    z = max(0.0, 0.5 * cylinder.height - 0.5 * GRIPPER.finger_length)
    target = Pose(x=cylinder.center[0], y=cylinder.center[1], z=z, yaw=yaw)
    start = world.gripper or target
    closed = close_at(world, target, force)
    move = Action(
        dx=target.x - start.x,
        dy=target.y - start.y,
        dz=target.z - start.z,
        dyaw=0.0,
        dforce=force - world.commanded_force,
    )
    return RegraspResult(
        episode_id=episode_id,
        object_id=world.object.name if world.object else "",
        method="cylinder",
        world_seed=world_seed,
        search_seed=0,
        actions=[move],
        probabilities=[1.0],
        forces=[closed.commanded_force],
        outcome=attempt_lift(closed).success,
    )
