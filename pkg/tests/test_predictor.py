"""
Fused grasp-success predictor.

Covers:
1. Whole-model gradients for every variant
2. Branch wiring: tied tactile towers, ablations, pose-free features
3. Candidate scoring agrees with the batched forward pass
4. Training: determinism, zero-iteration runs, degenerate label sets, learning a separable rule,
   the loss gradient taken on the score so saturated outputs keep learning
5. Object-grouped K-fold evaluation and the chance baseline
"""

import numpy as np
import pytest

from dataset import Dataset
from nn.network import cross_entropy_grad
from errors import FoldError, ShapeMismatchError
from models.schemas import Action, Calibration, Pose, TrainSchedule
from predictor import (
    FusionNetwork,
    accuracy,
    action_features,
    apply_calibration,
    build,
    candidate_scores,
    chance_kfold,
    dataset_scores,
    grad_check_model,
    kfold_eval,
    model_config,
    predict,
    state_to_inputs,
    train,
    train_with_report,
)
from tests.helpers import TINY, synthetic_records, synthetic_state

GRAD_TOLERANCE = 1e-4
SHORT = TrainSchedule(batch_size=16, total_iterations=40, lr_drop_iteration=30, base_lr=1e-2, seed=2)


@pytest.mark.parametrize("seed", range(3))
@pytest.mark.parametrize("variant", ["fusion", "vision_only", "tactile_only", "no_action"])
def test_model_gradients(variant, seed):
    config = TINY.model_copy(update={"variant": variant})
    assert grad_check_model(config, seed, max_coords=80) < GRAD_TOLERANCE


def test_untied_tactile_gradients():
    config = TINY.model_copy(update={"tie_tactile": False})
    assert grad_check_model(config, 0, max_coords=80) < GRAD_TOLERANCE


def test_tactile_towers_share_weights_when_tied():
    tied = build(TINY, 0)
    assert "tactile.conv1.W" in tied and "tactile_left.conv1.W" not in tied
    untied = build(TINY.model_copy(update={"tie_tactile": False}), 0)
    assert "tactile_left.conv1.W" in untied and "tactile_right.conv1.W" in untied
    assert untied.num_parameters() > tied.num_parameters()


def test_ablations_drop_branches():
    vision_only = build(TINY.model_copy(update={"variant": "vision_only"}), 0)
    assert not any(k.startswith("tactile") for k in vision_only.keys())
    tactile_only = build(TINY.model_copy(update={"variant": "tactile_only"}), 0)
    assert not any(k.startswith("vision") for k in tactile_only.keys())
    no_action = build(TINY.model_copy(update={"variant": "no_action"}), 0)
    assert not any(k.startswith("action") for k in no_action.keys())


def test_build_is_seeded():
    a, b, c = build(TINY, 4), build(TINY, 4), build(TINY, 5)
    assert a.allclose(b)
    assert not a.allclose(c)
    assert model_config(a) == TINY


def test_forward_outputs_probabilities(rng):
    net = FusionNetwork(TINY, 0)
    params = net.init()
    inputs = {
        "vision": rng.random((3, 1, 24, 24)),
        "tactile_left": rng.random((3, 1, 16, 16)),
        "tactile_right": rng.random((3, 1, 16, 16)),
        "action": rng.normal(size=(3, 12)),
    }
    probs, scores, _ = net.forward(params, inputs)
    assert probs.shape == scores.shape == (3,)
    assert np.all((probs > 0.0) & (probs < 1.0))
    assert np.allclose(probs, apply_calibration(scores, None))


def test_wrong_raster_size_is_rejected(rng):
    state = synthetic_state(rng)
    with pytest.raises(ShapeMismatchError) as info:
        state_to_inputs(state, TINY.model_copy(update={"vision_size": 32}))
    assert info.value.layer == "vision"


def test_candidate_scores_match_batched_forward(rng):
    net = FusionNetwork(TINY, 1)
    params = net.init()
    state = synthetic_state(rng)
    actions = rng.uniform(-0.02, 0.02, size=(300, 5))
    actions[:, 4] = rng.uniform(-6.0, 15.0, size=300)
    fast = candidate_scores(params, state, actions, batch_size=64)

    single = state_to_inputs(state, TINY)
    inputs = {k: np.repeat(v, len(actions), axis=0) for k, v in single.items()}
    inputs["action"] = action_features(actions, np.broadcast_to(state.pose.as_array(), (300, 4)), TINY)
    _, scores, _ = net.forward(params, inputs)
    assert np.allclose(fast, scores, rtol=0.0, atol=1e-10)


def test_pose_free_model_ignores_pose(rng):
    params = build(TINY.model_copy(update={"use_pose": False}), 0)
    base = synthetic_state(rng)
    moved = base.model_copy(update={"pose": Pose(x=-0.1, y=0.1, z=0.0, yaw=base.pose.yaw)})
    a = Action(dz=-0.01, dforce=3.0)
    assert predict(params, None, base, a) == predict(params, None, moved, a)


def test_no_action_model_ignores_actions(rng):
    params = build(TINY.model_copy(update={"variant": "no_action"}), 0)
    state = synthetic_state(rng)
    scores = candidate_scores(params, state, rng.uniform(-0.02, 0.02, size=(20, 5)))
    assert np.allclose(scores, scores[0], rtol=0.0, atol=1e-12)


def test_calibration_is_applied():
    scores = np.array([-1.0, 0.0, 2.0])
    calib = Calibration(A=-2.0, B=0.5)
    assert np.allclose(apply_calibration(scores, calib), 1.0 / (1.0 + np.exp(-2.0 * scores + 0.5)))


def test_zero_iterations_returns_initial_params():
    dataset = Dataset(synthetic_records(2, 5))
    schedule = TrainSchedule(total_iterations=0, lr_drop_iteration=0, seed=7)
    assert train(TINY, dataset, schedule).allclose(build(TINY, 7))


def test_empty_dataset_warns_and_returns_initial_params():
    schedule = SHORT
    params, report, state = train_with_report(TINY, Dataset([]), schedule)
    assert params.allclose(build(TINY, schedule.seed))
    assert report.warnings and state.step == 0


def test_single_class_labels_warn():
    records = [r for r in synthetic_records(2, 20) if r.outcome.success == 0]
    _, report, _ = train_with_report(TINY, Dataset(records), SHORT)
    assert any("single class" in w for w in report.warnings)


def test_training_is_deterministic():
    dataset = Dataset(synthetic_records(3, 10))
    a = train(TINY, dataset, SHORT)
    b = train(TINY, dataset, SHORT)
    assert a.allclose(b, atol=0.0)


def test_training_report_and_optimizer_state():
    dataset = Dataset(synthetic_records(3, 10))
    params, report, state = train_with_report(TINY, dataset, SHORT, validation=Dataset(synthetic_records(1, 10, seed=9)))
    assert state.step == SHORT.total_iterations
    assert params.version == SHORT.total_iterations
    assert report.loss_curve[-1][0] == SHORT.total_iterations
    assert report.class_balance == dataset.class_balance()
    assert report.train_accuracy is not None and report.val_accuracy is not None


def test_learns_a_force_rule():
    train_set = Dataset(synthetic_records(4, 60, seed=0, blank=True))
    held_out = Dataset(synthetic_records(2, 60, seed=1, blank=True))
    schedule = TrainSchedule(batch_size=16, total_iterations=600, lr_drop_iteration=450, base_lr=1e-2, seed=0)
    params = train(TINY, train_set, schedule)
    assert accuracy(params, held_out) > 0.8


def test_dataset_scores_align_with_labels():
    dataset = Dataset(synthetic_records(2, 7))
    scores, labels = dataset_scores(build(TINY, 0), dataset, batch_size=4)
    assert scores.shape == labels.shape == (14,)
    assert np.array_equal(labels, dataset.labels())


def test_kfold_needs_enough_objects():
    dataset = Dataset(synthetic_records(2, 5))
    with pytest.raises(FoldError):
        kfold_eval(TINY, dataset, k=3, schedule=SHORT)


def test_kfold_reports_one_accuracy_per_fold():
    dataset = Dataset(synthetic_records(6, 8))
    scores = kfold_eval(TINY, dataset, k=3, seed=1, schedule=SHORT)
    assert len(scores.accuracies) == 3
    assert scores.mean == pytest.approx(np.mean(scores.accuracies))
    assert scores.stderr >= 0.0


def test_chance_baseline_is_majority_rate():
    dataset = Dataset(synthetic_records(6, 8))
    chance = chance_kfold(dataset, k=3, seed=1)
    for (_, test_ids), acc in zip(dataset.object_folds(3, 1), chance.accuracies):
        rate = dataset.subset(test_ids).positive_rate()
        assert acc == pytest.approx(max(rate, 1.0 - rate))


def _batch(rng, config, n=3):
    return {
        "vision": rng.random((n, 1, config.vision_size, config.vision_size)),
        "tactile_left": rng.random((n, 1, config.tactile_size, config.tactile_size)),
        "tactile_right": rng.random((n, 1, config.tactile_size, config.tactile_size)),
        "action": rng.normal(size=(n, 12)),
    }


def test_score_gradient_matches_the_probability_path(rng):
    net = FusionNetwork(TINY, 0)
    params = net.init()
    probs, _, cache = net.forward(params, _batch(rng, TINY))
    o = np.array([1.0, 0.0, 1.0])
    through_sigmoid = net.backward(params, cache, cross_entropy_grad(probs, o))
    from_score = net.backward_from_score(params, cache, probs - o)
    assert from_score.allclose(through_sigmoid, atol=1e-9)


def test_saturated_outputs_still_get_a_gradient(rng):
    net = FusionNetwork(TINY, 0)
    params = net.init()
    params.tensors["fusion.fc2.b"][:] = 60.0
    probs, _, cache = net.forward(params, _batch(rng, TINY))
    assert np.all(probs == 1.0)
    o = np.zeros(3)
    assert not np.any(net.backward(params, cache, cross_entropy_grad(probs, o))["fusion.fc2.b"])
    grads = net.backward_from_score(params, cache, (probs - o) / 3)
    assert grads["fusion.fc2.b"][0] == pytest.approx(1.0)


def test_tied_tactile_towers_agree_after_training(rng):
    params = train(TINY, Dataset(synthetic_records(3, 10)), SHORT)
    assert not [k for k in params.keys() if k.startswith(("tactile_left.", "tactile_right."))]
    net = FusionNetwork(TINY, SHORT.seed)
    batch = _batch(rng, TINY, n=2)
    batch["tactile_right"] = batch["tactile_left"].copy()
    _, _, cache = net.forward(params, batch)
    left, right = (cache.branches[i].outputs[-1] for i, b in enumerate(net.branches) if b.name.startswith("tactile"))
    assert np.array_equal(left, right)
