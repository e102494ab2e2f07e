import json
import os
from pathlib import Path
from typing import Any, Dict, Optional

from dotenv import load_dotenv

# Load .env file automatically at import time
load_dotenv()


def _env_bool(name: str, default: str) -> bool:
    return os.getenv(name, default).lower() in ["1", "true", "yes"]


# Output / storage
OUT_DIR = os.getenv("REGRASP_OUT_DIR", "runs")
LEDGER_PATH = os.getenv("LEDGER_PATH", "runs/ledger.db")
LOG_FILE = os.getenv("LOG_FILE", "regrasp.log")
LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")

# Execution
MAX_WORKERS = int(os.getenv("MAX_WORKERS", "4"))
DEFAULT_SEED = int(os.getenv("DEFAULT_SEED", "0"))

# Regrasp search
SEARCH_N_RANDOM = int(os.getenv("SEARCH_N_RANDOM", "4900"))
SEARCH_N_FORCE_SWEEP = int(os.getenv("SEARCH_N_FORCE_SWEEP", "100"))
LIFT_THRESHOLD = float(os.getenv("LIFT_THRESHOLD", "0.9"))
MAX_REGRASPS = int(os.getenv("MAX_REGRASPS", "10"))
SCORING_BATCH = int(os.getenv("SCORING_BATCH", "256"))
EPISODES_PER_OBJECT = int(os.getenv("EPISODES_PER_OBJECT", "50"))

# Training schedule (batch 16, 9000 iterations, x10 drop at 7000)
TRAIN_ITERATIONS = int(os.getenv("TRAIN_ITERATIONS", "9000"))
TRAIN_LR_DROP = int(os.getenv("TRAIN_LR_DROP", "7000"))
TRAIN_BATCH = int(os.getenv("TRAIN_BATCH", "16"))
BASE_LR = float(os.getenv("BASE_LR", "1e-3"))

# Data collection sizing
COLLECT_RANDOM_TRIALS = int(os.getenv("COLLECT_RANDOM_TRIALS", "6000"))
COLLECT_ON_POLICY_TRIALS = int(os.getenv("COLLECT_ON_POLICY_TRIALS", "8500"))
COLLECT_MAX_RETRIES = int(os.getenv("COLLECT_MAX_RETRIES", "5"))

# Simulator
LIFT_NOISE = _env_bool("LIFT_NOISE", "true")

# Reference numbers printed next to simulator results (never asserted)
HARDWARE_REFERENCE = {
    "model_accuracy": {
        "chance": "62.80% ± 0.85%",
        "vision_only": "73.03% ± 0.24%",
        "tactile_only": "79.34% ± 0.66%",
        "fusion": "80.28% ± 0.68%",
        "no_action": "76.43% ± 0.42%",
    },
    "policy_success": {
        "easy": {"vision_only": "63.2%", "fusion": "94.0%", "cylinder": "75.9%"},
        "hard": {"vision_only": "50%", "fusion": "73.6%", "cylinder": "66.8%"},
    },
    "min_force": {
        "fusion": {"success": "95% vs 94%", "mean_force": "20 N vs 10 N"},
        "vision_only": {"success": "76% vs 76%", "mean_force": "18 N vs 6 N"},
    },
}

# CLI messages
MESSAGES = {
    "setup": "Setting up regrasp harness...",
    "ledger_ready": "Run ledger initialized at {path}",
    "command_start": "Running '{command}' (seed={seed}, out={out})",
    "command_done": "'{command}' finished, manifest {manifest}",
    "command_failed": "'{command}' failed: {error}",
    "dataset_written": "Dataset written: {path} ({records} records, {trials} trials)",
    "checkpoint_written": "Checkpoint written: {path}",
    "calibration_written": "Calibration written: {path} (ECE {before:.4f} -> {after:.4f})",
    "report_written": "Report written: {path}",
    "missing_input": "Required input '{name}' not found: {path}",
    "missing_validation": "calibrate needs a validation split (--validation)",
    "reference_note": "Reference values from the hardware study are printed for context only.",
    "forced_lift_note": "Episodes that never reached the lift threshold end with a forced lift after max_regrasps.",
    "count_note": "Trial counts are standardized per object; the hardware study used 10-100 trials per object.",
}


def load_run_config(path: Optional[str]) -> Dict[str, Any]:
    """Read the per-command JSON config file; missing path means no overrides."""
    if not path:
        return {}
    config_path = Path(path)
    if not config_path.exists():
        from errors import MissingInputError
        raise MissingInputError(MESSAGES["missing_input"].format(name="--config", path=path))
    with config_path.open("r", encoding="utf-8") as f:
        data = json.load(f)
    if not isinstance(data, dict):
        raise ValueError(f"config file {path} must hold a JSON object")
    return data
