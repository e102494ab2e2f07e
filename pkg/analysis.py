"""Behavioral probes of a trained predictor: force sweep, height sweep, downward preference, action histograms."""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from evaluation import start_world
from models.schemas import FORCE_MAX, FORCE_MIN, MAX_TRANSLATION, MAX_YAW, Action, Calibration, GraspState, ObjectSpec, RegraspResult, WorldState
from nn.network import ParamStore
from policy import derive_seed
from predictor import apply_calibration, candidate_scores
from sim.geometry import GRIPPER
from sim.world import apply_action, contact_kind, observe

logger = logging.getLogger(__name__)

FORCE_SWEEP_POINTS = 22
HEIGHT_GRID = np.linspace(-MAX_TRANSLATION, MAX_TRANSLATION, 9)
HEIGHT_GRID[4] = 0.0
MONOTONE_TOLERANCE = 1e-3
BOTTOM_FRACTION = 0.25

ACTION_HIST_EDGES = {
    "dz": np.linspace(-MAX_TRANSLATION, MAX_TRANSLATION, 21),
    "dyaw": np.linspace(-MAX_YAW, MAX_YAW, 21),
    "planar": np.linspace(0.0, MAX_TRANSLATION * np.sqrt(2.0), 21),
    "force": np.linspace(FORCE_MIN, FORCE_MAX, 22),
}


@dataclass
class ProbeState:
    object_id: str
    index: int
    kind: str  # stable | corner
    region: str  # top | middle | bottom: where the fingers sit on the object
    state: GraspState
    world: WorldState


def grip_region(w: WorldState) -> str:
    h = w.object.height
    z = w.gripper.z
    if z + GRIPPER.finger_length > h:
        return "top"
    if z < BOTTOM_FRACTION * h:
        return "bottom"
    return "middle"


def finger_region(state: GraspState) -> str:
    """upper | lower: mean taxel column of the contact, column 0 being the finger bottom."""
    grid = state.tactile_left + state.tactile_right
    if not np.any(grid > 0.0):
        return "none"
    cols = np.nonzero(grid > 0.0)[1]
    return "upper" if cols.mean() >= 0.5 * (grid.shape[1] - 1) else "lower"


def sample_contact_states(objects: Sequence[ObjectSpec], per_object: int, seed: int, max_attempts: int = 20) -> List[ProbeState]:
    """Two-finger contact states: the collection initializer, then a close in place at the open force."""
    probes: List[ProbeState] = []
    for i, spec in enumerate(objects):
        found = 0
        for attempt in range(per_object * max_attempts):
            if found == per_object:
                break
            world = start_world(spec, derive_seed(seed, i, attempt))
            closed = apply_action(world, Action())
            kind = contact_kind(closed)
            if kind not in ("stable", "corner"):
                continue
            probes.append(ProbeState(spec.name, len(probes), kind, grip_region(closed), observe(closed), closed))
            found += 1
        if found < per_object:
            logger.warning(f"Only {found}/{per_object} contact states found for {spec.name}")
    return probes


def _score(params: ParamStore, calib: Optional[Calibration], state: GraspState, actions: np.ndarray) -> np.ndarray:
    return apply_calibration(candidate_scores(params, state, actions), calib)


def force_sweep(params: ParamStore, calib: Optional[Calibration], state: GraspState, n_points: int = FORCE_SWEEP_POINTS) -> Tuple[np.ndarray, np.ndarray]:
    """Predicted success over resulting forces spanning [4, 25] N with zero motion."""
    forces = np.linspace(FORCE_MIN, FORCE_MAX, n_points)
    actions = np.zeros((n_points, 5))
    actions[:, 4] = forces - state.force
    return forces, _score(params, calib, state, actions)


def height_sweep(params: ParamStore, calib: Optional[Calibration], state: GraspState, grid: np.ndarray = HEIGHT_GRID) -> Tuple[np.ndarray, np.ndarray]:
    actions = np.zeros((len(grid), 5))
    actions[:, 2] = grid
    return np.asarray(grid, dtype=np.float64), _score(params, calib, state, actions)


def downward_improvement(params: ParamStore, calib: Optional[Calibration], state: GraspState) -> Tuple[float, float, float]:
    """(p(dz=-0.02) - p(dz=0), p(dz=0), p(dz=-0.02))."""
    actions = np.zeros((2, 5))
    actions[1, 2] = -MAX_TRANSLATION
    p0, p_down = _score(params, calib, state, actions)
    return float(p_down - p0), float(p0), float(p_down)


def is_non_decreasing(probs: np.ndarray, tol: float = MONOTONE_TOLERANCE) -> bool:
    return bool(np.all(np.diff(probs) >= -tol))


def drops_at_max_force(probs: np.ndarray, tol: float = MONOTONE_TOLERANCE) -> bool:
    """True when squeezing hardest is not the best choice."""
    return bool(probs[-1] < probs.max() - tol)


def action_components(results: Sequence[RegraspResult]) -> Dict[str, np.ndarray]:
    """dz, dyaw, planar translation and resulting force of every action in a successful episode."""
    rows: List[Tuple[float, float, float, float]] = []
    for r in results:
        if r.outcome != 1:
            continue
        for a, f in zip(r.actions, r.forces):
            rows.append((a.dz, a.dyaw, float(np.hypot(a.dx, a.dy)), f))
    data = np.array(rows, dtype=np.float64).reshape(-1, 4)
    return {"dz": data[:, 0], "dyaw": data[:, 1], "planar": data[:, 2], "force": data[:, 3]}


def action_histograms(results: Sequence[RegraspResult]) -> Dict[str, Tuple[np.ndarray, np.ndarray]]:
    """Four histograms over successful-episode actions; out-of-range values land in the end bins."""
    histograms = {}
    for name, values in action_components(results).items():
        edges = ACTION_HIST_EDGES[name]
        counts = np.histogram(np.clip(values, edges[0], edges[-1]), bins=edges)[0] if len(values) else np.zeros(len(edges) - 1, dtype=int)
        histograms[name] = (edges, counts.astype(int))
    return histograms


def histogram_mode(edges: np.ndarray, counts: np.ndarray) -> Optional[float]:
    """Center of the most populated bin (first on ties), None for an empty histogram."""
    if counts.sum() == 0:
        return None
    i = int(np.argmax(counts))
    return float(0.5 * (edges[i] + edges[i + 1]))
