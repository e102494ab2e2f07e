"""
Hand-written network layers, optimizer and checkpoints.

Covers:
1. Backprop against central differences for every layer kind, over many seeds
2. Stale caches and mismatched shapes are rejected with the offending layer named
3. Tied layers accumulate the gradients of both uses and stay one tensor through Adam
4. Adam update size and versioning
5. Checkpoints reload bit-exactly, optimizer moments included
"""

import numpy as np
import pytest

from errors import MissingInputError, ShapeMismatchError, StaleCacheError
from models.schemas import LayerSpec
from nn.checkpoint import load_checkpoint, save_checkpoint
from nn.network import backward, cross_entropy, cross_entropy_grad, forward, grad_check, init_params
from nn.optim import AdamState, optimizer_step

GRAD_TOLERANCE = 1e-4

DENSE_NET = (
    LayerSpec(kind="dense", name="fc1", out_units=5, seed=1),
    LayerSpec(kind="relu"),
    LayerSpec(kind="dense", name="fc2", out_units=3, seed=2),
    LayerSpec(kind="sigmoid"),
)

CONV_NET = (
    LayerSpec(kind="conv", name="conv1", out_channels=2, kernel=3, stride=2, seed=3),
    LayerSpec(kind="relu"),
    LayerSpec(kind="conv", name="conv2", out_channels=2, kernel=3, stride=1, seed=4),
    LayerSpec(kind="flatten"),
    LayerSpec(kind="dense", name="fc", out_units=2, seed=5),
    LayerSpec(kind="sigmoid"),
)


@pytest.mark.parametrize("seed", range(20))
def test_dense_gradients(seed):
    assert grad_check(DENSE_NET, seed, (4,)) < GRAD_TOLERANCE


@pytest.mark.parametrize("seed", range(20))
def test_conv_gradients(seed):
    assert grad_check(CONV_NET, seed, (1, 9, 9), batch=2) < GRAD_TOLERANCE


def test_forward_shapes():
    params = init_params(CONV_NET, (1, 9, 9))
    out, cache = forward(CONV_NET, params, np.zeros((3, 1, 9, 9)))
    assert out.shape == (3, 2)
    assert len(cache.inputs) == len(CONV_NET)
    assert cache.inputs[2].shape == (3, 2, 4, 4)


def test_shape_mismatch_names_the_layer():
    params = init_params(DENSE_NET, (4,))
    with pytest.raises(ShapeMismatchError) as info:
        forward(DENSE_NET, params, np.zeros((2, 6)))
    assert info.value.layer == "fc1"

    conv_params = init_params(CONV_NET, (1, 9, 9))
    with pytest.raises(ShapeMismatchError) as info:
        forward(CONV_NET, conv_params, np.zeros((1, 1, 2, 2)))
    assert info.value.layer == "conv1"


def test_init_rejects_tied_layers_of_different_shape():
    store = init_params(DENSE_NET, (4,))
    with pytest.raises(ShapeMismatchError):
        init_params(DENSE_NET, (6,), store)


def test_backward_after_update_raises_stale_cache(rng):
    params = init_params(DENSE_NET, (4,))
    out, cache = forward(DENSE_NET, params, rng.normal(size=(2, 4)))
    grads = backward(DENSE_NET, params, cache, np.ones_like(out))
    updated, _ = optimizer_step(params, grads, AdamState(), 1e-3)
    assert updated.version == params.version + 1
    with pytest.raises(StaleCacheError):
        backward(DENSE_NET, updated, cache, np.ones_like(out))


def test_backward_rejects_wrong_gradient_shape(rng):
    params = init_params(DENSE_NET, (4,))
    _, cache = forward(DENSE_NET, params, rng.normal(size=(2, 4)))
    with pytest.raises(ShapeMismatchError):
        backward(DENSE_NET, params, cache, np.ones((2, 4)))


def test_tied_layers_sum_their_gradients(rng):
    layer = (LayerSpec(kind="dense", name="shared", out_units=2, seed=9),)
    params = init_params(layer, (3,))
    xa, xb = rng.normal(size=(2, 3)), rng.normal(size=(2, 3))
    ga = backward(layer, params, forward(layer, params, xa)[1], np.ones((2, 2)))
    gb = backward(layer, params, forward(layer, params, xb)[1], np.ones((2, 2)))
    total = ga.copy()
    total.accumulate(gb)
    assert np.allclose(total["shared.W"], (xa + xb).T @ np.ones((2, 2)))
    assert np.allclose(total["shared.b"], [4.0, 4.0])


def test_tied_towers_stay_identical_through_adam(rng):
    left = (LayerSpec(kind="conv", name="touch.conv", out_channels=2, kernel=3, stride=2, seed=3), LayerSpec(kind="relu"))
    right = (LayerSpec(kind="conv", name="touch.conv", out_channels=2, kernel=3, stride=2, seed=77), LayerSpec(kind="relu"))
    params = init_params(left, (1, 7, 7))
    init_params(right, (1, 7, 7), params)

    state = AdamState()
    for _ in range(5):
        xa, xb = rng.random((2, 1, 7, 7)), rng.random((2, 1, 7, 7))
        out_a, cache_a = forward(left, params, xa)
        out_b, cache_b = forward(right, params, xb)
        grads = backward(left, params, cache_a, rng.normal(size=out_a.shape))
        grads.accumulate(backward(right, params, cache_b, rng.normal(size=out_b.shape)))
        params, state = optimizer_step(params, grads, state, lr=0.01)

    x = rng.random((1, 1, 7, 7))
    assert np.array_equal(forward(left, params, x)[0], forward(right, params, x)[0])
    assert set(params.keys()) == {"touch.conv.W", "touch.conv.b"}


def test_first_adam_step_moves_by_learning_rate():
    params = init_params(DENSE_NET, (4,))
    grads = params.zeros_like()
    grads.tensors["fc1.W"] = np.full_like(params["fc1.W"], 0.5)
    grads.tensors["fc2.b"] = np.full_like(params["fc2.b"], -2.0)
    updated, state = optimizer_step(params, grads, AdamState(), lr=0.01)
    assert state.step == 1
    assert np.allclose(updated["fc1.W"] - params["fc1.W"], -0.01, atol=1e-9)
    assert np.allclose(updated["fc2.b"] - params["fc2.b"], 0.01, atol=1e-9)
    assert np.array_equal(updated["fc1.b"], params["fc1.b"])


def test_cross_entropy_is_clipped():
    assert cross_entropy(0.5, 1.0) == pytest.approx(np.log(2.0))
    assert np.isfinite(cross_entropy(0.0, 1.0))
    assert cross_entropy(0.0, 1.0) == pytest.approx(-np.log(1e-7))
    assert np.isfinite(cross_entropy_grad(np.array([0.0, 1.0]), np.array([1.0, 0.0]))).all()


def test_checkpoint_round_trip_is_bit_exact(tmp_path, rng):
    params = init_params(CONV_NET, (1, 9, 9))
    params.meta = {"note": "bit-exact"}
    out, cache = forward(CONV_NET, params, rng.normal(size=(2, 1, 9, 9)))
    updated, state = optimizer_step(params, backward(CONV_NET, params, cache, np.ones_like(out)), AdamState(), 1e-3)

    path = save_checkpoint(tmp_path / "ckpt.json", updated, state)
    loaded, loaded_state = load_checkpoint(path)
    assert loaded.keys() == updated.keys()
    for key in updated.keys():
        assert loaded[key].tobytes() == updated[key].tobytes()
        assert loaded_state.m[key].tobytes() == state.m[key].tobytes()
        assert loaded_state.v[key].tobytes() == state.v[key].tobytes()
    assert loaded.version == updated.version
    assert loaded.meta == updated.meta
    assert loaded_state.step == 1

    again = save_checkpoint(tmp_path / "again.json", loaded, loaded_state)
    assert again.read_bytes() == path.read_bytes()


def test_missing_checkpoint(tmp_path):
    with pytest.raises(MissingInputError):
        load_checkpoint(tmp_path / "none.json")
