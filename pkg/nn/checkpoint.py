"""JSON checkpoints: float64 tensors as base64 little-endian bytes, plus Adam moments and model meta."""

import base64
import json
import logging
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np

from errors import MissingInputError
from nn.network import ParamStore
from nn.optim import AdamState

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "regrasp-checkpoint"
CHECKPOINT_VERSION = 1


def _encode(arr: np.ndarray) -> dict:
    data = np.ascontiguousarray(arr, dtype="<f8")
    return {"shape": list(data.shape), "data": base64.b64encode(data.tobytes()).decode("ascii")}


def _decode(payload: dict) -> np.ndarray:
    raw = base64.b64decode(payload["data"])
    return np.frombuffer(raw, dtype="<f8").reshape(payload["shape"]).astype(np.float64)


def _encode_all(tensors: Dict[str, np.ndarray]) -> dict:
    return {k: _encode(tensors[k]) for k in sorted(tensors)}


def checkpoint_to_dict(params: ParamStore, opt_state: Optional[AdamState] = None) -> dict:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "params_version": params.version,
        "meta": params.meta,
        "params": _encode_all(params.tensors),
    }
    if opt_state is not None:
        payload["adam"] = {"step": opt_state.step, "m": _encode_all(opt_state.m), "v": _encode_all(opt_state.v)}
    return payload


def checkpoint_from_dict(payload: dict) -> Tuple[ParamStore, Optional[AdamState]]:
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError("not a regrasp checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {payload.get('version')}")
    params = ParamStore(
        {k: _decode(v) for k, v in payload["params"].items()},
        version=int(payload.get("params_version", 0)),
        meta=payload.get("meta", {}),
    )
    opt_state = None
    adam = payload.get("adam")
    if adam is not None:
        opt_state = AdamState(
            m={k: _decode(v) for k, v in adam["m"].items()},
            v={k: _decode(v) for k, v in adam["v"].items()},
            step=int(adam["step"]),
        )
    return params, opt_state


def save_checkpoint(path: Path, params: ParamStore, opt_state: Optional[AdamState] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(checkpoint_to_dict(params, opt_state), sort_keys=True, separators=(",", ":"))
    path.write_text(text, encoding="utf-8")
    logger.info(f"Checkpoint saved: {path} ({params.num_parameters()} parameters)")
    return path


def load_checkpoint(path: Path) -> Tuple[ParamStore, Optional[AdamState]]:
    path = Path(path)
    if not path.exists():
        raise MissingInputError(f"checkpoint not found: {path}")
    return checkpoint_from_dict(json.loads(path.read_text(encoding="utf-8")))
