import json
import logging
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from sklearn.model_selection import GroupKFold, GroupShuffleSplit

from errors import FoldError, MissingInputError
from models.schemas import Action, GraspState, Outcome, Pose, TrialRecord

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


def _raster_to_dict(raster: np.ndarray) -> dict:
    return {
        "height": int(raster.shape[0]),
        "width": int(raster.shape[1]),
        "data": [float(v) for v in raster.ravel()],
    }


def _raster_from_dict(payload: dict) -> np.ndarray:
    data = np.asarray(payload["data"], dtype=np.float64)
    return data.reshape(int(payload["height"]), int(payload["width"]))


def record_to_dict(record: TrialRecord) -> dict:
    state = record.state
    return {
        "schema_version": SCHEMA_VERSION,
        "episode_id": record.episode_id,
        "object_id": record.object_id,
        "kind": record.kind,
        "scene_seed": record.scene_seed,
        "vision": _raster_to_dict(state.vision),
        "tactile_left": _raster_to_dict(state.tactile_left),
        "tactile_right": _raster_to_dict(state.tactile_right),
        "pose": [state.pose.x, state.pose.y, state.pose.z, state.pose.yaw],
        "force": state.force,
        "action": [float(v) for v in record.action.as_array()],
        "outcome": int(record.outcome.success),
    }


def record_from_dict(payload: dict) -> TrialRecord:
    version = payload.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ValueError(f"unsupported dataset schema_version {version}")
    x, y, z, yaw = payload["pose"]
    state = GraspState(
        vision=_raster_from_dict(payload["vision"]),
        tactile_left=_raster_from_dict(payload["tactile_left"]),
        tactile_right=_raster_from_dict(payload["tactile_right"]),
        pose=Pose(x=x, y=y, z=z, yaw=yaw),
        force=payload["force"],
    )
    return TrialRecord(
        state=state,
        action=Action.from_array(payload["action"]),
        outcome=Outcome(success=int(payload["outcome"])),
        object_id=payload["object_id"],
        episode_id=payload["episode_id"],
        scene_seed=payload.get("scene_seed"),
        kind=payload.get("kind", "trial"),
    )


class Dataset:
    """Ordered trial records plus the registry of object identifiers they may use."""

    def __init__(self, records: Iterable[TrialRecord], objects: Optional[Sequence[str]] = None):
        self.records: List[TrialRecord] = list(records)
        if objects is None:
            objects = list(dict.fromkeys(r.object_id for r in self.records))
        self.objects: List[str] = list(objects)
        unknown = {r.object_id for r in self.records} - set(self.objects)
        if unknown:
            raise ValueError(f"records reference unregistered objects: {sorted(unknown)}")

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[TrialRecord]:
        return iter(self.records)

    def __getitem__(self, index: int) -> TrialRecord:
        return self.records[index]

    @property
    def object_ids(self) -> List[str]:
        """Objects that actually have records, in registry order."""
        used = {r.object_id for r in self.records}
        return [o for o in self.objects if o in used]

    def labels(self) -> np.ndarray:
        return np.array([r.outcome.success for r in self.records], dtype=np.float64)

    def positive_rate(self) -> float:
        return float(self.labels().mean()) if self.records else 0.0

    def class_balance(self) -> Dict[str, int]:
        labels = self.labels()
        positives = int(labels.sum())
        return {"success": positives, "failure": len(labels) - positives}

    def subset(self, object_ids: Iterable[str]) -> "Dataset":
        keep = set(object_ids)
        return Dataset([r for r in self.records if r.object_id in keep], [o for o in self.objects if o in keep])

    def concat(self, other: "Dataset") -> "Dataset":
        objects = list(dict.fromkeys(list(self.objects) + list(other.objects)))
        return Dataset(self.records + other.records, objects)

    def _shuffled_groups(self, seed: int) -> np.ndarray:
        """Per-record group labels: each object's rank in a seeded shuffle of the object ids."""
        objects = sorted(self.object_ids)
        order = np.random.default_rng(seed).permutation(len(objects))
        rank = {objects[i]: r for r, i in enumerate(order)}
        return np.array([rank[r.object_id] for r in self.records])

    def object_folds(self, k: int, seed: int = 0) -> List[Tuple[List[str], List[str]]]:
        """Split by object identity: no object contributes to both sides of a fold."""
        n_objects = len(self.object_ids)
        if k < 2:
            raise FoldError(f"need at least 2 folds, got {k}")
        if n_objects < k:
            raise FoldError(f"{n_objects} distinct objects cannot fill {k} folds")
        groups = self._shuffled_groups(seed)
        folds = []
        for train_idx, test_idx in GroupKFold(n_splits=k).split(groups, groups=groups):
            train_ids = sorted({self.records[i].object_id for i in train_idx})
            test_ids = sorted({self.records[i].object_id for i in test_idx})
            folds.append((train_ids, test_ids))
        return folds

    def split_objects(self, fraction: float, seed: int = 0) -> Tuple["Dataset", "Dataset"]:
        """Hold out roughly `fraction` of the objects, e.g. for Platt validation."""
        n_objects = len(self.object_ids)
        if n_objects < 2:
            raise FoldError("need at least 2 objects to hold some out")
        n_held = min(max(1, int(round(fraction * n_objects))), n_objects - 1)
        groups = self._shuffled_groups(seed)
        splitter = GroupShuffleSplit(n_splits=1, test_size=n_held, random_state=seed)
        _, test_idx = next(splitter.split(groups, groups=groups))
        held = {self.records[i].object_id for i in test_idx}
        return self.subset(o for o in self.object_ids if o not in held), self.subset(held)

    def to_arrays(self, dtype=np.float32) -> Dict[str, np.ndarray]:
        n = len(self.records)
        if n == 0:
            raise ValueError("empty dataset")
        first = self.records[0].state
        arrays = {
            "vision": np.empty((n, 1) + first.vision.shape, dtype=dtype),
            "tactile_left": np.empty((n, 1) + first.tactile_left.shape, dtype=dtype),
            "tactile_right": np.empty((n, 1) + first.tactile_right.shape, dtype=dtype),
            "action": np.empty((n, 5), dtype=np.float64),
            "pose": np.empty((n, 4), dtype=np.float64),
            "labels": self.labels(),
        }
        for i, r in enumerate(self.records):
            arrays["vision"][i, 0] = r.state.vision
            arrays["tactile_left"][i, 0] = r.state.tactile_left
            arrays["tactile_right"][i, 0] = r.state.tactile_right
            arrays["action"][i] = r.action.as_array()
            arrays["pose"][i] = r.state.pose.as_array()
        return arrays

    def to_jsonl(self, path: Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8") as f:
            for record in self.records:
                f.write(json.dumps(record_to_dict(record), separators=(",", ":")))
                f.write("\n")
        logger.info(f"Wrote {len(self.records)} records to {path}")

    @classmethod
    def from_jsonl(cls, path: Path, objects: Optional[Sequence[str]] = None) -> "Dataset":
        path = Path(path)
        if not path.exists():
            raise MissingInputError(f"dataset not found: {path}")
        records = []
        with path.open("r", encoding="utf-8") as f:
            for line_no, line in enumerate(f, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    records.append(record_from_dict(json.loads(line)))
                except (ValueError, KeyError) as e:
                    raise ValueError(f"{path}:{line_no}: bad record ({e})") from e
        logger.info(f"Loaded {len(records)} records from {path}")
        return cls(records, objects)
