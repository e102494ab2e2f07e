import math
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

# Action-space bounds
MAX_TRANSLATION = 0.02  # meters, per axis
MAX_YAW = math.radians(17.0)  # ≈0.29671 rad
FORCE_MIN = 4.0  # newtons
FORCE_MAX = 25.0

VISION_SIZE = 64
TACTILE_SIZE = 32


def wrap_angle(angle: float) -> float:
    """Normalize an angle to (-pi, pi]."""
    wrapped = math.remainder(float(angle), 2.0 * math.pi)
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


def _frozen_raster(value, name: str) -> np.ndarray:
    arr = np.array(value, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-D raster, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise ValueError(f"{name} values must lie in [0, 1]")
    arr.setflags(write=False)
    return arr


class Pose(BaseModel):
    model_config = ConfigDict(frozen=True)

    x: float
    y: float
    z: float = Field(ge=0.0)  # height of the finger bottom edge above the floor
    yaw: float = 0.0

    @field_validator("yaw")
    @classmethod
    def _normalize_yaw(cls, v: float) -> float:
        return wrap_angle(v)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z, self.yaw], dtype=np.float64)


class Action(BaseModel):
    """Relative adjustment; legality is checked by clamp_action, not here."""

    model_config = ConfigDict(frozen=True)

    dx: float = 0.0
    dy: float = 0.0
    dz: float = 0.0
    dyaw: float = 0.0
    dforce: float = 0.0

    @field_validator("dx", "dy", "dz", "dyaw", "dforce")
    @classmethod
    def _finite(cls, v: float) -> float:
        if not math.isfinite(v):
            raise ValueError("action components must be finite")
        return float(v)

    def as_array(self) -> np.ndarray:
        return np.array([self.dx, self.dy, self.dz, self.dyaw, self.dforce], dtype=np.float64)

    @classmethod
    def from_array(cls, values) -> "Action":
        dx, dy, dz, dyaw, dforce = (float(v) for v in values)
        return cls(dx=dx, dy=dy, dz=dz, dyaw=dyaw, dforce=dforce)

    def is_legal(self, current_force: float, tol: float = 1e-9) -> bool:
        resulting = current_force + self.dforce
        return (
            abs(self.dx) <= MAX_TRANSLATION + tol
            and abs(self.dy) <= MAX_TRANSLATION + tol
            and abs(self.dz) <= MAX_TRANSLATION + tol
            and abs(self.dyaw) <= MAX_YAW + tol
            and FORCE_MIN - 1e-6 <= resulting <= FORCE_MAX + 1e-6
        )


class GraspState(BaseModel):
    """Observation: background-subtracted rasters, gripper pose, commanded force."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    vision: np.ndarray
    tactile_left: np.ndarray
    tactile_right: np.ndarray
    pose: Pose
    force: float = Field(ge=0.0)

    @field_validator("vision", "tactile_left", "tactile_right", mode="before")
    @classmethod
    def _check_raster(cls, v, info):
        return _frozen_raster(v, info.field_name)

    def left_in_contact(self) -> bool:
        return bool(np.any(self.tactile_left > 0.0))

    def right_in_contact(self) -> bool:
        return bool(np.any(self.tactile_right > 0.0))


class Outcome(BaseModel):
    model_config = ConfigDict(frozen=True)

    success: Literal[0, 1]


class TrialRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    state: GraspState
    action: Action
    outcome: Outcome
    object_id: str
    episode_id: str
    scene_seed: Optional[int] = None
    kind: Literal["trial", "hold", "release"] = "trial"
    # snapshots used by datagen.augment; never serialized
    hold_state: Optional[GraspState] = Field(default=None, exclude=True)
    release_state: Optional[GraspState] = Field(default=None, exclude=True)

    @model_validator(mode="after")
    def _action_in_range(self) -> "TrialRecord":
        if not self.action.is_legal(self.state.force):
            raise ValueError(f"action outside legal ranges for record {self.episode_id}")
        return self


class ObjectSpec(BaseModel):
    """Convex prism. Geometric invariants are checked by sim.objects.validate_object_spec."""

    model_config = ConfigDict(frozen=True)

    name: str
    vertices: List[Tuple[float, float]]
    height: float = Field(gt=0.0)
    mass: float = Field(gt=0.0)
    com: Tuple[float, float, float]
    friction: float = Field(gt=0.0)
    compliance: float = Field(default=0.0, ge=0.0, le=1.0)


class Cylinder(BaseModel):
    model_config = ConfigDict(frozen=True)

    center: Tuple[float, float]
    radius: float = Field(gt=0.0)
    height: float = Field(gt=0.0)


class ContactPatch(BaseModel):
    """Where one finger touches the footprint, in world and finger-face coordinates."""

    model_config = ConfigDict(frozen=True)

    centroid: Tuple[float, float]
    t_low: float  # along the finger face width, relative to the gripper center
    t_high: float
    z_low: float
    z_high: float
    corner: bool = False

    @property
    def half_length(self) -> float:
        return 0.5 * (self.t_high - self.t_low)

    @property
    def half_height(self) -> float:
        return 0.5 * (self.z_high - self.z_low)


class WorldState(BaseModel):
    model_config = ConfigDict(frozen=True)

    object: Optional[ObjectSpec] = None
    object_pose: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    gripper: Optional[Pose] = None  # None: parked out of view
    aperture: float = Field(default=0.0, ge=0.0)
    commanded_force: float = Field(default=10.0, ge=0.0)
    closed: bool = False
    in_contact: Tuple[bool, bool] = (False, False)  # (left, right)
    contacts: Tuple[Optional[ContactPatch], Optional[ContactPatch]] = (None, None)
    ejected: bool = False
    rng_seed: int = 0

    @model_validator(mode="after")
    def _contacts_consistent(self) -> "WorldState":
        for flag, patch in zip(self.in_contact, self.contacts):
            if flag != (patch is not None):
                raise ValueError("contact flags disagree with contact patches")
        if self.closed and not (FORCE_MIN - 1e-6 <= self.commanded_force <= FORCE_MAX + 1e-6):
            raise ValueError("closed fingers need a commanded force in [4, 25] N")
        return self


class LayerSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["conv", "dense", "relu", "sigmoid", "flatten"]
    name: str = ""
    out_channels: int = Field(default=1, ge=1)
    kernel: int = Field(default=1, ge=1)
    stride: int = Field(default=1, ge=1)
    out_units: int = Field(default=1, ge=1)
    seed: int = 0

    @property
    def has_params(self) -> bool:
        return self.kind in ("conv", "dense")


class ModelConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    variant: Literal["fusion", "vision_only", "tactile_only", "no_action"] = "fusion"
    vision_widths: Tuple[int, ...] = (8, 16, 16)
    tactile_widths: Tuple[int, ...] = (8, 16)
    branch_units: int = Field(default=64, ge=1)
    action_hidden: int = Field(default=64, ge=1)
    fusion_hidden: int = Field(default=128, ge=1)
    tie_tactile: bool = True
    use_pose: bool = True
    vision_size: int = Field(default=VISION_SIZE, ge=8)
    tactile_size: int = Field(default=TACTILE_SIZE, ge=8)

    @field_validator("vision_widths", "tactile_widths")
    @classmethod
    def _positive_widths(cls, v: Tuple[int, ...]) -> Tuple[int, ...]:
        if not v or any(w < 1 for w in v):
            raise ValueError("conv widths must be >= 1")
        return tuple(int(w) for w in v)

    @property
    def uses_vision(self) -> bool:
        return self.variant in ("fusion", "vision_only", "no_action")

    @property
    def uses_tactile(self) -> bool:
        return self.variant in ("fusion", "tactile_only", "no_action")

    @property
    def uses_action(self) -> bool:
        return self.variant != "no_action"


class Calibration(BaseModel):
    model_config = ConfigDict(frozen=True)

    A: float
    B: float

    @field_validator("A", "B")
    @classmethod
    def _finite(cls, v: float) -> float:
        if not math.isfinite(v):
            raise ValueError("calibration coefficients must be finite")
        return v


class TrainSchedule(BaseModel):
    model_config = ConfigDict(frozen=True)

    batch_size: int = Field(default=16, ge=1)
    total_iterations: int = Field(default=9000, ge=0)
    lr_drop_iteration: int = Field(default=7000, ge=0)
    lr_drop_factor: float = Field(default=10.0, gt=0.0)
    base_lr: float = Field(default=1e-3, ge=0.0)
    seed: int = 0

    @model_validator(mode="after")
    def _drop_inside_run(self) -> "TrainSchedule":
        # total_iterations == 0 is the "return the initial params" case
        if self.total_iterations > 0 and not (0 < self.lr_drop_iteration < self.total_iterations):
            raise ValueError("lr_drop_iteration must lie strictly inside (0, total_iterations)")
        return self


class FoldScores(BaseModel):
    variant: str
    accuracies: List[float]
    mean: float
    stderr: float


class TrainingReport(BaseModel):
    variant: str
    seed: int
    schedule: TrainSchedule
    loss_curve: List[Tuple[int, float]] = Field(default_factory=list)
    train_accuracy: Optional[float] = None
    val_accuracy: Optional[float] = None
    class_balance: Dict[str, int] = Field(default_factory=dict)
    warnings: List[str] = Field(default_factory=list)


class SearchConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    n_random: int = Field(default=4900, ge=0)
    n_force_sweep: int = Field(default=100, ge=0)
    lift_threshold: float = Field(default=0.9, ge=0.0, lt=1.0)
    max_regrasps: int = Field(default=10, ge=1)
    objective: Literal["max_success", "min_force", "weighted"] = "max_success"
    force_weight: float = Field(default=0.0, ge=0.0)
    scoring_batch: int = Field(default=256, ge=1)
    seed: int = 0

    @model_validator(mode="after")
    def _non_empty(self) -> "SearchConfig":
        if self.n_random + self.n_force_sweep < 1:
            raise ValueError("search needs at least one candidate")
        return self


class RegraspResult(BaseModel):
    episode_id: str
    object_id: str
    method: str
    world_seed: int
    search_seed: int
    actions: List[Action] = Field(default_factory=list)
    probabilities: List[float] = Field(default_factory=list)
    forces: List[float] = Field(default_factory=list)
    outcome: Optional[Literal[0, 1]] = None
    forced_lift: bool = False
    aborted: bool = False

    @model_validator(mode="after")
    def _lengths(self) -> "RegraspResult":
        if not (len(self.actions) == len(self.probabilities) == len(self.forces)):
            raise ValueError("trace lists must have equal length")
        if self.aborted and self.outcome is not None:
            raise ValueError("aborted episodes carry no outcome")
        return self


class CollectConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    n_trials: int = Field(ge=1)
    object_set: str = "train"
    perturbation_scale: Optional[float] = Field(default=None, gt=0.0)  # meters; None: half the cylinder radius
    force_range: Tuple[float, float] = (FORCE_MIN, FORCE_MAX)
    seed: int = 0
    policy: Literal["random", "on_policy"] = "random"
    checkpoint: Optional[str] = None
    calibration: Optional[str] = None
    search: SearchConfig = Field(default_factory=lambda: SearchConfig(n_random=490, n_force_sweep=10))

    @model_validator(mode="after")
    def _policy_inputs(self) -> "CollectConfig":
        if self.policy == "on_policy" and not self.checkpoint:
            raise ValueError("on_policy collection needs a checkpoint")
        lo, hi = self.force_range
        if not (FORCE_MIN <= lo < hi <= FORCE_MAX):
            raise ValueError("force_range must lie inside [4, 25] N")
        return self


class ObjectTally(BaseModel):
    successes: int = Field(default=0, ge=0)
    trials: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def _bounded(self) -> "ObjectTally":
        if self.successes > self.trials:
            raise ValueError("successes cannot exceed trials")
        return self

    @property
    def rate(self) -> float:
        return self.successes / self.trials if self.trials else 0.0


class EvalReport(BaseModel):
    method: str
    per_object: Dict[str, ObjectTally] = Field(default_factory=dict)
    aggregate_success: float = 0.0
    regrasp_counts: Dict[int, int] = Field(default_factory=dict)  # actions taken -> episodes
    force_bin_edges: List[float] = Field(default_factory=list)
    force_histogram: List[int] = Field(default_factory=list)  # successful grasps only
    mean_success_force: Optional[float] = None
    forced_lifts: int = 0
    aborted: int = 0

    @model_validator(mode="after")
    def _histogram_mass(self) -> "EvalReport":
        successes = sum(t.successes for t in self.per_object.values())
        if self.force_histogram and sum(self.force_histogram) != successes:
            raise ValueError("force histogram mass must equal the number of successful grasps")
        return self


class EpisodeEntry(BaseModel):
    """Ledger index row: where an episode's trace lives and what produced it."""

    episode_id: str
    run_id: int
    method: str
    object_id: str
    world_seed: int
    search_seed: int
    checkpoint: Optional[str] = None
    calibration: Optional[str] = None
    search: Dict[str, object] = Field(default_factory=dict)
    trace_file: str
    line: int = Field(ge=0)


class LogEntry(BaseModel):
    run_id: Optional[int] = None
    level: str = "INFO"
    event: str
    details: Optional[str] = None
    timestamp: Optional[str] = None
