"""Action-conditioned grasp-success predictor: late fusion of vision, touch and action branches."""

import logging
import math
import zlib
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit

from actions import batch_features, drop_pose_slots
from dataset import Dataset
from errors import ShapeMismatchError
from models.schemas import (
    Action,
    Calibration,
    FoldScores,
    GraspState,
    LayerSpec,
    ModelConfig,
    TrainingReport,
    TrainSchedule,
)
from nn.network import ForwardCache, ParamStore, backward_with_input, cross_entropy, forward, init_params
from nn.optim import AdamState, optimizer_step

logger = logging.getLogger(__name__)

LOSS_WINDOW = 100
EVAL_BATCH = 256


def _layer_seed(seed: int, name: str) -> int:
    return int(np.random.SeedSequence([seed, zlib.crc32(name.encode("utf-8"))]).generate_state(1)[0])


@dataclass(frozen=True)
class Branch:
    name: str
    input_key: str
    input_shape: Tuple[int, ...]
    layers: Tuple[LayerSpec, ...]


@dataclass
class FusionCache:
    branches: List[ForwardCache]
    widths: List[int]
    head: ForwardCache


class FusionNetwork:
    """Branch towers whose outputs are concatenated and fed to a dense head.

    The two tactile towers share layer names when `tie_tactile` is set, which
    ties their weights through the common ParamStore.
    """

    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        self.seed = seed
        self.branches: List[Branch] = []
        if config.uses_vision:
            self.branches.append(self._conv_branch("vision", "vision", "vision", config.vision_widths, config.vision_size))
        if config.uses_tactile:
            left = "tactile" if config.tie_tactile else "tactile_left"
            right = "tactile" if config.tie_tactile else "tactile_right"
            self.branches.append(self._conv_branch("tactile_left", "tactile_left", left, config.tactile_widths, config.tactile_size))
            self.branches.append(self._conv_branch("tactile_right", "tactile_right", right, config.tactile_widths, config.tactile_size))
        if config.uses_action:
            width = 12 if config.use_pose else 8
            self.branches.append(
                Branch(
                    "action",
                    "action",
                    (width,),
                    (
                        self._layer("dense", "action.fc1", out_units=config.action_hidden),
                        LayerSpec(kind="relu"),
                        self._layer("dense", "action.fc2", out_units=config.action_hidden),
                    ),
                )
            )
        self.head: Tuple[LayerSpec, ...] = (
            self._layer("dense", "fusion.fc1", out_units=config.fusion_hidden),
            LayerSpec(kind="relu"),
            self._layer("dense", "fusion.fc2", out_units=1),
            LayerSpec(kind="sigmoid"),
        )

    def _layer(self, kind: str, name: str, **kwargs) -> LayerSpec:
        return LayerSpec(kind=kind, name=name, seed=_layer_seed(self.seed, name), **kwargs)

    def _conv_branch(self, name: str, input_key: str, prefix: str, widths: Sequence[int], size: int) -> Branch:
        layers: List[LayerSpec] = []
        for i, width in enumerate(widths):
            kernel = 5 if i == 0 else 3
            layers.append(self._layer("conv", f"{prefix}.conv{i + 1}", out_channels=width, kernel=kernel, stride=2))
            layers.append(LayerSpec(kind="relu"))
        layers.append(LayerSpec(kind="flatten"))
        layers.append(self._layer("dense", f"{prefix}.fc", out_units=self.config.branch_units))
        return Branch(name, input_key, (1, size, size), tuple(layers))

    @property
    def state_branches(self) -> List[Branch]:
        return [b for b in self.branches if b.input_key != "action"]

    @property
    def action_branch(self) -> Optional[Branch]:
        return next((b for b in self.branches if b.input_key == "action"), None)

    def embedding_width(self) -> int:
        widths = [b.layers[-1].out_units for b in self.branches]
        return int(sum(widths))

    def init(self) -> ParamStore:
        store = ParamStore(meta={"config": self.config.model_dump(mode="json"), "seed": self.seed})
        for branch in self.branches:
            init_params(branch.layers, branch.input_shape, store)
        init_params(self.head, (self.embedding_width(),), store)
        return store

    def forward(self, params: ParamStore, inputs: Dict[str, np.ndarray]) -> Tuple[np.ndarray, np.ndarray, FusionCache]:
        """(probabilities, pre-sigmoid scores, cache) for a batch of inputs."""
        embeddings, caches = [], []
        for branch in self.branches:
            out, cache = forward(branch.layers, params, inputs[branch.input_key])
            embeddings.append(out)
            caches.append(cache)
        z = np.concatenate(embeddings, axis=1)
        probs, head_cache = forward(self.head, params, z)
        scores = head_cache.inputs[-1][:, 0]
        return probs[:, 0], scores, FusionCache(caches, [e.shape[1] for e in embeddings], head_cache)

    def backward(self, params: ParamStore, cache: FusionCache, dprob: np.ndarray) -> ParamStore:
        return self._backward(params, cache, self.head, cache.head, dprob)

    def backward_from_score(self, params: ParamStore, cache: FusionCache, dscore: np.ndarray) -> ParamStore:
        """Gradients from d(loss)/d(score); the output sigmoid is skipped."""
        head = cache.head
        below_sigmoid = ForwardCache(
            version=head.version,
            layer_names=head.layer_names[:-1],
            inputs=head.inputs[:-1],
            outputs=head.outputs[:-1],
        )
        return self._backward(params, cache, self.head[:-1], below_sigmoid, dscore)

    def _backward(
        self, params: ParamStore, cache: FusionCache, head: Sequence[LayerSpec], head_cache: ForwardCache, grad_out: np.ndarray
    ) -> ParamStore:
        grads, dz = backward_with_input(head, params, head_cache, grad_out[:, None])
        offset = 0
        for branch, branch_cache, width in zip(self.branches, cache.branches, cache.widths):
            branch_grads, _ = backward_with_input(branch.layers, params, branch_cache, dz[:, offset : offset + width])
            grads.accumulate(branch_grads)
            offset += width
        return grads

    def score_candidates(
        self, params: ParamStore, state: GraspState, features: np.ndarray, batch_size: int = EVAL_BATCH
    ) -> np.ndarray:
        """Pre-sigmoid scores for many action features from one state; state towers run once."""
        state_inputs = state_to_inputs(state, self.config)
        state_embeddings = {}
        for branch in self.state_branches:
            out, _ = forward(branch.layers, params, state_inputs[branch.input_key])
            state_embeddings[branch.name] = out
        action = self.action_branch
        scores = np.empty(len(features), dtype=np.float64)
        for start in range(0, len(features), batch_size):
            chunk = features[start : start + batch_size]
            n = len(chunk)
            parts = []
            for branch in self.branches:
                if branch is action:
                    parts.append(forward(branch.layers, params, chunk)[0])
                else:
                    parts.append(np.repeat(state_embeddings[branch.name], n, axis=0))
            _, head_cache = forward(self.head, params, np.concatenate(parts, axis=1))
            scores[start : start + n] = head_cache.inputs[-1][:, 0]
        return scores


@lru_cache(maxsize=16)
def _network_for(config_json: str) -> FusionNetwork:
    return FusionNetwork(ModelConfig.model_validate_json(config_json))


def network_for(params: ParamStore) -> FusionNetwork:
    if "config" not in params.meta:
        raise ShapeMismatchError("meta", "params carry no model config")
    return _network_for(ModelConfig.model_validate(params.meta["config"]).model_dump_json())


def model_config(params: ParamStore) -> ModelConfig:
    return network_for(params).config


def build(config: ModelConfig, seed: int) -> ParamStore:
    return FusionNetwork(config, seed).init()


def _check_raster(name: str, raster: np.ndarray, size: int) -> None:
    if raster.shape != (size, size):
        raise ShapeMismatchError(name, f"expected {size}x{size} raster, got {raster.shape}")


def state_to_inputs(state: GraspState, config: ModelConfig) -> Dict[str, np.ndarray]:
    _check_raster("vision", state.vision, config.vision_size)
    _check_raster("tactile_left", state.tactile_left, config.tactile_size)
    _check_raster("tactile_right", state.tactile_right, config.tactile_size)
    return {
        "vision": state.vision[None, None, :, :],
        "tactile_left": state.tactile_left[None, None, :, :],
        "tactile_right": state.tactile_right[None, None, :, :],
    }


def action_features(actions: np.ndarray, poses: np.ndarray, config: ModelConfig) -> np.ndarray:
    features = batch_features(actions, poses)
    return features if config.use_pose else drop_pose_slots(features)


def apply_calibration(scores: np.ndarray, calib: Optional[Calibration]) -> np.ndarray:
    """Platt mapping p = 1 / (1 + exp(A*s + B)); identity sigmoid without calibration."""
    scores = np.asarray(scores, dtype=np.float64)
    if calib is None:
        return expit(scores)
    return expit(-(calib.A * scores + calib.B))


def candidate_scores(params: ParamStore, state: GraspState, actions: np.ndarray, batch_size: int = EVAL_BATCH) -> np.ndarray:
    net = network_for(params)
    actions = np.atleast_2d(np.asarray(actions, dtype=np.float64))
    poses = np.broadcast_to(state.pose.as_array(), (len(actions), 4))
    return net.score_candidates(params, state, action_features(actions, poses, net.config), batch_size)


def predict(params: ParamStore, calib: Optional[Calibration], s: GraspState, a: Action) -> float:
    score = candidate_scores(params, s, a.as_array()[None, :])
    return float(apply_calibration(score, calib)[0])


def dataset_inputs(arrays: Dict[str, np.ndarray], config: ModelConfig, index=slice(None)) -> Dict[str, np.ndarray]:
    return {
        "vision": arrays["vision"][index].astype(np.float64),
        "tactile_left": arrays["tactile_left"][index].astype(np.float64),
        "tactile_right": arrays["tactile_right"][index].astype(np.float64),
        "action": action_features(arrays["action"][index], arrays["pose"][index], config),
    }


def dataset_scores(params: ParamStore, dataset: Dataset, batch_size: int = EVAL_BATCH) -> Tuple[np.ndarray, np.ndarray]:
    """(pre-sigmoid scores, labels) for every record."""
    net = network_for(params)
    arrays = dataset.to_arrays()
    n = len(dataset)
    scores = np.empty(n, dtype=np.float64)
    for start in range(0, n, batch_size):
        idx = slice(start, min(start + batch_size, n))
        _, s, _ = net.forward(params, dataset_inputs(arrays, net.config, idx))
        scores[idx] = s
    return scores, arrays["labels"]


def accuracy(params: ParamStore, dataset: Dataset, calib: Optional[Calibration] = None) -> float:
    scores, labels = dataset_scores(params, dataset)
    return float(np.mean((apply_calibration(scores, calib) >= 0.5) == (labels >= 0.5)))


def train_with_report(
    config: ModelConfig,
    dataset: Dataset,
    schedule: TrainSchedule,
    validation: Optional[Dataset] = None,
) -> Tuple[ParamStore, TrainingReport, AdamState]:
    """Adam on cross-entropy with one step-wise learning-rate drop; returns the final optimizer state too."""
    params = build(config, schedule.seed)
    state = AdamState()
    report = TrainingReport(variant=config.variant, seed=schedule.seed, schedule=schedule)
    report.class_balance = dataset.class_balance()
    if len(dataset) == 0:
        report.warnings.append("empty training set; returning initial parameters")
        logger.warning(report.warnings[-1])
        return params, report, state
    if min(report.class_balance.values()) == 0:
        report.warnings.append("training labels contain a single class")
        logger.warning(report.warnings[-1])

    net = FusionNetwork(config, schedule.seed)
    arrays = dataset.to_arrays()
    labels = arrays["labels"]
    n = len(labels)
    rng = np.random.default_rng([schedule.seed, 1])
    order = rng.permutation(n)
    cursor = 0
    window: List[float] = []

    for it in range(schedule.total_iterations):
        if cursor + min(schedule.batch_size, n) > n:
            order = rng.permutation(n)
            cursor = 0
        idx = np.sort(order[cursor : cursor + schedule.batch_size])
        cursor += len(idx)

        lr = schedule.base_lr if it < schedule.lr_drop_iteration else schedule.base_lr / schedule.lr_drop_factor
        probs, _, cache = net.forward(params, dataset_inputs(arrays, config, idx))
        o = labels[idx]
        window.append(float(np.mean(cross_entropy(probs, o))))
        # d(cross-entropy)/d(score) is p - o; the sigmoid derivative cancels
        grads = net.backward_from_score(params, cache, (probs - o) / len(idx))
        params, state = optimizer_step(params, grads, state, lr)

        if len(window) == LOSS_WINDOW or it == schedule.total_iterations - 1:
            report.loss_curve.append((it + 1, float(np.mean(window))))
            window = []
        if (it + 1) % 1000 == 0:
            logger.info(f"[{config.variant}] iteration {it + 1}/{schedule.total_iterations} loss {report.loss_curve[-1][1]:.4f}")

    report.train_accuracy = accuracy(params, dataset)
    if validation is not None and len(validation):
        report.val_accuracy = accuracy(params, validation)
    return params, report, state


def train(config: ModelConfig, dataset: Dataset, schedule: TrainSchedule) -> ParamStore:
    return train_with_report(config, dataset, schedule)[0]


def _fold_summary(variant: str, accuracies: List[float]) -> FoldScores:
    arr = np.asarray(accuracies, dtype=np.float64)
    stderr = float(arr.std(ddof=1) / math.sqrt(len(arr))) if len(arr) > 1 else 0.0
    return FoldScores(variant=variant, accuracies=[float(a) for a in arr], mean=float(arr.mean()), stderr=stderr)


def kfold_eval(
    config: ModelConfig, dataset: Dataset, k: int = 3, seed: int = 0, schedule: Optional[TrainSchedule] = None
) -> FoldScores:
    """Object-grouped K-fold accuracy: mean and standard error over folds."""
    schedule = schedule or TrainSchedule(seed=seed)
    accuracies = []
    for fold, (train_ids, test_ids) in enumerate(dataset.object_folds(k, seed)):
        params = train(config, dataset.subset(train_ids), schedule)
        acc = accuracy(params, dataset.subset(test_ids))
        logger.info(f"[{config.variant}] fold {fold + 1}/{k}: accuracy {acc:.4f} on {len(test_ids)} held-out objects")
        accuracies.append(acc)
    return _fold_summary(config.variant, accuracies)


def chance_kfold(dataset: Dataset, k: int = 3, seed: int = 0) -> FoldScores:
    """Majority-class rate of each held-out fold."""
    accuracies = []
    for _, test_ids in dataset.object_folds(k, seed):
        rate = dataset.subset(test_ids).positive_rate()
        accuracies.append(max(rate, 1.0 - rate))
    return _fold_summary("chance", accuracies)


def grad_check_model(config: ModelConfig, seed: int, batch: int = 2, max_coords: int = 200, step: float = 1e-5) -> float:
    """Central-difference check of the whole fused network on loss sum(p * r)."""
    rng = np.random.default_rng(seed)
    net = FusionNetwork(config, seed)
    params = net.init()
    width = 12 if config.use_pose else 8
    inputs = {
        "vision": rng.random((batch, 1, config.vision_size, config.vision_size)),
        "tactile_left": rng.random((batch, 1, config.tactile_size, config.tactile_size)),
        "tactile_right": rng.random((batch, 1, config.tactile_size, config.tactile_size)),
        "action": rng.normal(size=(batch, width)),
    }
    r = rng.normal(size=batch)
    _, _, cache = net.forward(params, inputs)
    grads = net.backward(params, cache, r)

    def relu_pattern(c: FusionCache) -> List[np.ndarray]:
        pattern = []
        for layers, fc in [(b.layers, bc) for b, bc in zip(net.branches, c.branches)] + [(net.head, c.head)]:
            pattern.extend(x > 0.0 for layer, x in zip(layers, fc.inputs) if layer.kind == "relu")
        return pattern

    base = relu_pattern(cache)
    coords = [(key, idx) for key in params.keys() for idx in np.ndindex(params[key].shape)]
    picks = rng.choice(len(coords), size=min(max_coords, len(coords)), replace=False)
    worst = 0.0
    for i in sorted(picks):
        key, idx = coords[i]
        original = params.tensors[key][idx]
        losses, kink = [], False
        for sign in (1.0, -1.0):
            params.tensors[key][idx] = original + sign * step
            p, _, c = net.forward(params, inputs)
            losses.append(float(np.sum(p * r)))
            kink = kink or any(np.any(a != b) for a, b in zip(base, relu_pattern(c)))
        params.tensors[key][idx] = original
        if kink:
            continue
        numeric = (losses[0] - losses[1]) / (2.0 * step)
        analytic = float(grads[key][idx])
        worst = max(worst, abs(numeric - analytic) / max(abs(numeric), abs(analytic), 1e-4))
    return worst
