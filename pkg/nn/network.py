"""Sequential conv/dense networks with explicit forward caches and hand-written backprop.

Tensors are batch-first: (N, C, H, W) for conv stacks and (N, D) after flatten.
Parameters live in a ParamStore keyed by layer name, so two layer lists that use
the same names share (tie) weights.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from errors import ShapeMismatchError, StaleCacheError
from models.schemas import LayerSpec

logger = logging.getLogger(__name__)

EPSILON = 1e-7


class ParamStore:
    """Named weight/bias tensors plus a version counter bumped by every update."""

    def __init__(self, tensors: Optional[Dict[str, np.ndarray]] = None, version: int = 0, meta: Optional[dict] = None):
        self.tensors: Dict[str, np.ndarray] = dict(tensors or {})
        self.version = version
        self.meta: dict = dict(meta or {})

    def __getitem__(self, key: str) -> np.ndarray:
        return self.tensors[key]

    def __contains__(self, key: str) -> bool:
        return key in self.tensors

    def __len__(self) -> int:
        return len(self.tensors)

    def keys(self) -> List[str]:
        return sorted(self.tensors)

    def items(self) -> Iterable[Tuple[str, np.ndarray]]:
        return ((k, self.tensors[k]) for k in self.keys())

    def num_parameters(self) -> int:
        return int(sum(t.size for t in self.tensors.values()))

    def zeros_like(self) -> "ParamStore":
        return ParamStore({k: np.zeros_like(v) for k, v in self.tensors.items()}, self.version, self.meta)

    def copy(self) -> "ParamStore":
        return ParamStore({k: v.copy() for k, v in self.tensors.items()}, self.version, self.meta)

    def accumulate(self, other: "ParamStore") -> None:
        """In-place sum; used to merge gradients of tied layers."""
        for k, v in other.tensors.items():
            if k in self.tensors:
                self.tensors[k] = self.tensors[k] + v
            else:
                self.tensors[k] = v.copy()

    def allclose(self, other: "ParamStore", atol: float = 0.0) -> bool:
        if set(self.tensors) != set(other.tensors):
            return False
        return all(np.allclose(self.tensors[k], other.tensors[k], rtol=0.0, atol=atol) for k in self.tensors)


@dataclass
class ForwardCache:
    """Per-layer inputs recorded by forward; only valid for the params version it saw."""

    version: int
    layer_names: Tuple[str, ...]
    inputs: List[np.ndarray] = field(default_factory=list)
    outputs: List[np.ndarray] = field(default_factory=list)


def weight_key(layer: LayerSpec) -> str:
    return f"{layer.name}.W"


def bias_key(layer: LayerSpec) -> str:
    return f"{layer.name}.b"


def output_shape(layer: LayerSpec, shape: Tuple[int, ...]) -> Tuple[int, ...]:
    """Shape of one sample after `layer`, given the sample shape before it."""
    if layer.kind == "conv":
        if len(shape) != 3:
            raise ShapeMismatchError(layer.name, f"conv expects (C, H, W), got {shape}")
        _, h, w = shape
        if h < layer.kernel or w < layer.kernel:
            raise ShapeMismatchError(layer.name, f"input {h}x{w} smaller than kernel {layer.kernel}")
        return (layer.out_channels, (h - layer.kernel) // layer.stride + 1, (w - layer.kernel) // layer.stride + 1)
    if layer.kind == "dense":
        if len(shape) != 1:
            raise ShapeMismatchError(layer.name, f"dense expects a flat input, got {shape}")
        return (layer.out_units,)
    if layer.kind == "flatten":
        return (int(np.prod(shape)),)
    return shape


def init_params(
    net: Sequence[LayerSpec], input_shape: Tuple[int, ...], store: Optional[ParamStore] = None
) -> ParamStore:
    """Fan-in scaled uniform weights and zero biases, seeded per layer.

    Layers whose name is already in `store` are tied: their shapes must agree.
    """
    store = store if store is not None else ParamStore()
    shape = tuple(input_shape)
    for layer in net:
        if layer.has_params:
            if not layer.name:
                raise ShapeMismatchError(layer.kind, "parameterized layers need a name")
            if layer.kind == "conv":
                fan_in = shape[0] * layer.kernel * layer.kernel
                w_shape = (layer.out_channels, shape[0], layer.kernel, layer.kernel)
                b_shape = (layer.out_channels,)
            else:
                if len(shape) != 1:
                    raise ShapeMismatchError(layer.name, f"dense expects a flat input, got {shape}")
                fan_in = shape[0]
                w_shape = (shape[0], layer.out_units)
                b_shape = (layer.out_units,)
            key = weight_key(layer)
            if key in store:
                if store[key].shape != w_shape:
                    raise ShapeMismatchError(layer.name, f"tied weight shape {store[key].shape} != {w_shape}")
            else:
                rng = np.random.default_rng(layer.seed)
                limit = np.sqrt(6.0 / fan_in)
                store.tensors[key] = rng.uniform(-limit, limit, size=w_shape)
                store.tensors[bias_key(layer)] = np.zeros(b_shape)
        shape = output_shape(layer, shape)
    return store


def _windows(x: np.ndarray, layer: LayerSpec) -> np.ndarray:
    win = sliding_window_view(x, (layer.kernel, layer.kernel), axis=(2, 3))
    return win[:, :, :: layer.stride, :: layer.stride]


def _layer_forward(layer: LayerSpec, params: ParamStore, x: np.ndarray) -> np.ndarray:
    if layer.kind == "conv":
        W, b = params[weight_key(layer)], params[bias_key(layer)]
        if x.ndim != 4 or x.shape[1] != W.shape[1]:
            raise ShapeMismatchError(layer.name, f"expected (N, {W.shape[1]}, H, W), got {x.shape}")
        if x.shape[2] < layer.kernel or x.shape[3] < layer.kernel:
            raise ShapeMismatchError(layer.name, f"input {x.shape[2:]} smaller than kernel {layer.kernel}")
        out = np.einsum("nchwij,ocij->nohw", _windows(x, layer), W, optimize=True)
        return out + b[None, :, None, None]
    if layer.kind == "dense":
        W, b = params[weight_key(layer)], params[bias_key(layer)]
        if x.ndim != 2 or x.shape[1] != W.shape[0]:
            raise ShapeMismatchError(layer.name or "dense", f"expected (N, {W.shape[0]}), got {x.shape}")
        return x @ W + b
    if layer.kind == "relu":
        return np.maximum(x, 0.0)
    if layer.kind == "sigmoid":
        return expit(x)
    return x.reshape(x.shape[0], -1)


def forward(net: Sequence[LayerSpec], params: ParamStore, x: np.ndarray) -> Tuple[np.ndarray, ForwardCache]:
    cache = ForwardCache(version=params.version, layer_names=tuple(l.name or l.kind for l in net))
    out = x
    for layer in net:
        cache.inputs.append(out)
        out = _layer_forward(layer, params, out)
        cache.outputs.append(out)
    return out, cache


def _layer_backward(
    layer: LayerSpec, params: ParamStore, x: np.ndarray, y: np.ndarray, g: np.ndarray, grads: ParamStore
) -> np.ndarray:
    if layer.kind == "conv":
        W = params[weight_key(layer)]
        win = _windows(x, layer)
        dW = np.einsum("nohw,nchwij->ocij", g, win, optimize=True)
        grads.accumulate(ParamStore({weight_key(layer): dW, bias_key(layer): g.sum(axis=(0, 2, 3))}))
        dwin = np.einsum("nohw,ocij->nchwij", g, W, optimize=True)
        dx = np.zeros_like(x, dtype=np.float64)
        k, s = layer.kernel, layer.stride
        ho, wo = g.shape[2], g.shape[3]
        for i in range(k):
            for j in range(k):
                dx[:, :, i : i + s * (ho - 1) + 1 : s, j : j + s * (wo - 1) + 1 : s] += dwin[..., i, j]
        return dx
    if layer.kind == "dense":
        W = params[weight_key(layer)]
        grads.accumulate(ParamStore({weight_key(layer): x.T @ g, bias_key(layer): g.sum(axis=0)}))
        return g @ W.T
    if layer.kind == "relu":
        return g * (x > 0.0)
    if layer.kind == "sigmoid":
        return g * y * (1.0 - y)
    return g.reshape(x.shape)


def backward_with_input(
    net: Sequence[LayerSpec], params: ParamStore, cache: ForwardCache, grad_out: np.ndarray
) -> Tuple[ParamStore, np.ndarray]:
    """Gradients for every parameter the net touches, plus d(loss)/d(input)."""
    if cache.version != params.version:
        raise StaleCacheError(f"cache from params version {cache.version}, params are at {params.version}")
    if len(cache.inputs) != len(net):
        raise StaleCacheError("cache was recorded for a different network")
    grads = ParamStore(version=params.version)
    g = grad_out
    for layer, x, y in zip(reversed(net), reversed(cache.inputs), reversed(cache.outputs)):
        if g.shape != y.shape:
            raise ShapeMismatchError(layer.name or layer.kind, f"upstream gradient {g.shape} != output {y.shape}")
        g = _layer_backward(layer, params, x, y, g, grads)
    return grads, g


def backward(net: Sequence[LayerSpec], params: ParamStore, cache: ForwardCache, grad_out: np.ndarray) -> ParamStore:
    return backward_with_input(net, params, cache, grad_out)[0]


def cross_entropy(p, o):
    """Binary cross-entropy, probabilities clipped to [1e-7, 1 - 1e-7]."""
    pc = np.clip(p, EPSILON, 1.0 - EPSILON)
    loss = -(o * np.log(pc) + (1.0 - o) * np.log(1.0 - pc))
    return float(loss) if np.ndim(loss) == 0 else loss


def cross_entropy_grad(p, o):
    pc = np.clip(p, EPSILON, 1.0 - EPSILON)
    return (pc - o) / (pc * (1.0 - pc))


def _relu_pattern(net: Sequence[LayerSpec], cache: ForwardCache) -> List[np.ndarray]:
    return [x > 0.0 for layer, x in zip(net, cache.inputs) if layer.kind == "relu"]


def grad_check(
    net: Sequence[LayerSpec],
    seed: int,
    input_shape: Tuple[int, ...],
    batch: int = 3,
    step: float = 1e-5,
    max_coords: Optional[int] = None,
) -> float:
    """Max relative error between backprop and central differences.

    Loss is sum(output * r) for a fixed random r. Coordinates whose +/- step
    flips any ReLU input sign sit on a kink and are skipped.
    """
    rng = np.random.default_rng(seed)
    params = init_params(net, input_shape)
    x = rng.normal(size=(batch,) + tuple(input_shape))
    out, cache = forward(net, params, x)
    r = rng.normal(size=out.shape)
    grads = backward(net, params, cache, r)
    base_pattern = _relu_pattern(net, cache)

    coords = [(k, idx) for k in params.keys() for idx in np.ndindex(params[k].shape)]
    if max_coords is not None and len(coords) > max_coords:
        picks = rng.choice(len(coords), size=max_coords, replace=False)
        coords = [coords[i] for i in sorted(picks)]

    worst = 0.0
    skipped = 0
    for key, idx in coords:
        original = params.tensors[key][idx]
        losses = []
        kink = False
        for sign in (1.0, -1.0):
            params.tensors[key][idx] = original + sign * step
            o, c = forward(net, params, x)
            losses.append(float(np.sum(o * r)))
            if any(np.any(a != b) for a, b in zip(base_pattern, _relu_pattern(net, c))):
                kink = True
        params.tensors[key][idx] = original
        if kink:
            skipped += 1
            continue
        numeric = (losses[0] - losses[1]) / (2.0 * step)
        analytic = float(grads[key][idx])
        denom = max(abs(numeric), abs(analytic), 1e-4)
        worst = max(worst, abs(numeric - analytic) / denom)
    if skipped:
        logger.debug(f"grad_check skipped {skipped} coordinates on ReLU kinks")
    return worst
