from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from nn.network import ParamStore

BETA1 = 0.9
BETA2 = 0.999
ADAM_EPSILON = 1e-8


@dataclass
class AdamState:
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def optimizer_step(
    params: ParamStore,
    grads: ParamStore,
    state: AdamState,
    lr: float,
    beta1: float = BETA1,
    beta2: float = BETA2,
    eps: float = ADAM_EPSILON,
) -> Tuple[ParamStore, AdamState]:
    """One bias-corrected Adam update; returns new params (version + 1) and new moments."""
    step = state.step + 1
    new_tensors: Dict[str, np.ndarray] = {}
    m_next: Dict[str, np.ndarray] = {}
    v_next: Dict[str, np.ndarray] = {}
    for key, value in params.tensors.items():
        g = grads.tensors.get(key)
        if g is None:
            g = np.zeros_like(value)
        m = beta1 * state.m.get(key, np.zeros_like(value)) + (1.0 - beta1) * g
        v = beta2 * state.v.get(key, np.zeros_like(value)) + (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1**step)
        v_hat = v / (1.0 - beta2**step)
        new_tensors[key] = value - lr * m_hat / (np.sqrt(v_hat) + eps)
        m_next[key], v_next[key] = m, v
    return ParamStore(new_tensors, params.version + 1, params.meta), AdamState(m_next, v_next, step)
