"""Policy evaluation: seeded episode runner, scorer setup per method, report arithmetic."""

import json
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from datagen import initialize_gripper
from models.schemas import EvalReport, ObjectSpec, ObjectTally, RegraspResult, SearchConfig
from nn.checkpoint import load_checkpoint
from policy import ModelScorer, OracleScorer, RandomScorer, Scorer, cylinder_baseline_episode, derive_seed, regrasp_episode
from sim.world import spawn_scene

logger = logging.getLogger(__name__)

METHODS = ("fusion", "vision_only", "tactile_only", "cylinder", "random", "oracle")
LEARNED_METHODS = ("fusion", "vision_only", "tactile_only")
# methods whose actions come from the bounded regrasp candidate search
REGRASP_METHODS = LEARNED_METHODS + ("random", "oracle")
FORCE_BIN_EDGES = [float(e) for e in np.linspace(4.0, 25.0, 22)]

_INIT_STREAM = 2


@dataclass(frozen=True)
class EpisodeSpec:
    """Everything that fixes one episode, so it can be re-run from the ledger."""

    method: str
    object_index: int
    episode_index: int
    spec: ObjectSpec
    world_seed: int
    search: SearchConfig
    episode_id: str


def episode_plan(
    method: str, objects: Sequence[ObjectSpec], n_episodes: int, seed: int, search: SearchConfig, tag: str = ""
) -> List[EpisodeSpec]:
    """Seed-ordered episode list; world and search seeds depend on (seed, object, episode) only,
    so every method sees the same scenes."""
    plan = []
    label = f"{method}{'/' + tag if tag else ''}"
    for i, spec in enumerate(objects):
        for e in range(n_episodes):
            plan.append(
                EpisodeSpec(
                    method=method,
                    object_index=i,
                    episode_index=e,
                    spec=spec,
                    world_seed=derive_seed(seed, i, e),
                    search=search.model_copy(update={"seed": derive_seed(seed, i, e, 1)}),
                    episode_id=f"{label}-{spec.name}-s{seed}-e{e:03d}",
                )
            )
    return plan


def start_world(spec: ObjectSpec, world_seed: int):
    """Spawned scene with the open gripper placed by the collection initializer."""
    world = spawn_scene(spec, world_seed)
    return initialize_gripper(world, np.random.default_rng([world_seed, _INIT_STREAM]))


def run_episode(plan: EpisodeSpec, scorer: Optional[Scorer]) -> RegraspResult:
    world = start_world(plan.spec, plan.world_seed)
    if plan.method == "cylinder":
        return cylinder_baseline_episode(world, plan.episode_id, plan.world_seed)
    if plan.method == "random":
        scorer = RandomScorer(plan.search.seed)
    elif plan.method == "oracle":
        scorer = OracleScorer()
    if scorer is None:
        raise ValueError(f"method {plan.method} needs a scorer")
    return regrasp_episode(world, scorer, plan.search, plan.episode_id, plan.spec.name, plan.method, plan.world_seed)


def make_scorer(method: str, checkpoint: Optional[str] = None, calibration=None, workers: int = 1, batch_size: int = 256) -> Optional[Scorer]:
    """Model scorer for learned methods; None for methods that build their own per episode."""
    if method in ("cylinder", "random", "oracle"):
        return None
    if method in LEARNED_METHODS:
        if not checkpoint:
            raise ValueError(f"method {method} needs a checkpoint")
        params, _ = load_checkpoint(checkpoint)
        return ModelScorer(params, calibration, batch_size=batch_size, workers=workers)
    raise ValueError(f"unknown method '{method}'")


def trace_line(result: RegraspResult) -> str:
    """Canonical JSON-lines form of an episode trace; replay compares these bytes."""
    return json.dumps(result.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))


def final_force(result: RegraspResult) -> Optional[float]:
    return result.forces[-1] if result.forces else None


def build_eval_report(method: str, results: Sequence[RegraspResult], object_order: Sequence[str] = ()) -> EvalReport:
    """Per-object and aggregate tallies; aborted episodes count as failed trials."""
    per_object: Dict[str, ObjectTally] = {name: ObjectTally() for name in object_order}
    regrasp_counts: Dict[int, int] = {}
    success_forces: List[float] = []
    forced = aborted = 0
    for r in results:
        tally = per_object.get(r.object_id, ObjectTally())
        success = int(r.outcome == 1)
        per_object[r.object_id] = ObjectTally(successes=tally.successes + success, trials=tally.trials + 1)
        steps = len(r.actions)
        regrasp_counts[steps] = regrasp_counts.get(steps, 0) + 1
        forced += int(r.forced_lift)
        aborted += int(r.aborted)
        if success:
            force = final_force(r)
            if force is not None:
                success_forces.append(force)

    total_trials = sum(t.trials for t in per_object.values())
    total_successes = sum(t.successes for t in per_object.values())
    edges = FORCE_BIN_EDGES
    clipped = np.clip(np.asarray(success_forces, dtype=np.float64), edges[0], edges[-1])
    counts = np.histogram(clipped, bins=edges)[0] if success_forces else np.zeros(len(edges) - 1, dtype=int)
    return EvalReport(
        method=method,
        per_object=per_object,
        aggregate_success=total_successes / total_trials if total_trials else 0.0,
        regrasp_counts=dict(sorted(regrasp_counts.items())),
        force_bin_edges=list(edges),
        force_histogram=[int(c) for c in counts],
        mean_success_force=float(np.mean(success_forces)) if success_forces else None,
        forced_lifts=forced,
        aborted=aborted,
    )


def successful_actions(results: Sequence[RegraspResult]) -> np.ndarray:
    """(n, 5) actions from successful episodes, in trace order."""
    rows = [a.as_array() for r in results if r.outcome == 1 for a in r.actions]
    return np.array(rows, dtype=np.float64).reshape(-1, 5)
