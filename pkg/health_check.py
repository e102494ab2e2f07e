#!/usr/bin/env python3
"""
Health check for the regrasp harness.

Checks:
1. Gradient correctness of a small fused predictor
2. Simulator lift outcomes against the analytic friction/torque oracle
3. Run ledger initialization and a write/read round trip

Usage: python health_check.py
"""

import asyncio
import os
import sys
import tempfile
from pathlib import Path
from typing import Tuple

import numpy as np

sys.path.append(os.path.dirname(os.path.abspath(__file__)))

HEALTH_MESSAGES = {
    "title": "Regrasp harness health check",
    "starting": "Starting checks...",
    "grad_check": "Gradient check (fused predictor)",
    "oracle_check": "Simulator vs analytic lift oracle",
    "ledger_check": "Run ledger round trip",
    "test_passed": "PASSED",
    "test_failed": "FAILED",
    "summary": "Summary",
    "all_passed": "All checks passed.",
    "some_failed": "Some checks failed; see details above.",
    "critical_error": "Critical error during checks:",
}

GRAD_TOLERANCE = 1e-4
GRAD_SEEDS = 3
ORACLE_WORLDS = 500


def print_header(title: str):
    print("\n" + "=" * 60)
    print(f"  {title}")
    print("=" * 60)


def print_test_result(test_name: str, success: bool, details: str = ""):
    status = HEALTH_MESSAGES["test_passed"] if success else HEALTH_MESSAGES["test_failed"]
    print(f"{test_name}: {status}")
    if details:
        print(f"   {details}")


def oracle_disagreements(n_worlds: int, seed: int = 0) -> Tuple[int, int]:
    """(worlds checked, disagreements) between attempt_lift with noise off and lift_oracle."""
    from datagen import initialize_gripper, random_action
    from errors import InvalidTrialError
    from policy import derive_seed
    from sim.objects import object_sets
    from sim.world import apply_action, attempt_lift, lift_oracle, spawn_scene, torque_penalty

    objects = object_sets()["all"]
    rng = np.random.default_rng(seed)
    checked = disagreements = 0
    for i in range(n_worlds):
        spec = objects[i % len(objects)]
        world = initialize_gripper(spawn_scene(spec, derive_seed(seed, i)), rng)
        try:
            closed = apply_action(world, random_action(rng, world.commanded_force))
        except InvalidTrialError:
            continue
        if all(closed.in_contact):
            expected = lift_oracle(spec.friction, closed.commanded_force, spec.mass, torque_penalty(closed))
        else:
            expected = False
        checked += 1
        disagreements += int(bool(attempt_lift(closed, noise=False).success) != expected)
    return checked, disagreements


async def test_gradients() -> tuple[bool, str]:
    try:
        from models.schemas import ModelConfig
        from predictor import grad_check_model

        config = ModelConfig(vision_size=24, tactile_size=16, vision_widths=(2, 2, 2), tactile_widths=(2, 2), branch_units=4, action_hidden=4, fusion_hidden=6)
        worst = max(grad_check_model(config, seed, max_coords=60) for seed in range(GRAD_SEEDS))
        return worst < GRAD_TOLERANCE, f"max relative error {worst:.2e} over {GRAD_SEEDS} seeds"
    except Exception as e:
        return False, f"error: {e}"


async def test_oracle() -> tuple[bool, str]:
    try:
        checked, disagreements = await asyncio.to_thread(oracle_disagreements, ORACLE_WORLDS)
        return disagreements == 0, f"{disagreements} disagreements in {checked} worlds"
    except Exception as e:
        return False, f"error: {e}"


async def test_ledger() -> tuple[bool, str]:
    try:
        from database import Ledger
        from models.schemas import EpisodeEntry

        with tempfile.TemporaryDirectory() as tmp:
            ledger = Ledger(str(Path(tmp) / "ledger.db"))
            await ledger.init_db()
            run_id = await ledger.start_run("health-check", 0, {})
            if run_id is None:
                return False, "could not start a run"
            entry = EpisodeEntry(
                episode_id="health-check-e000",
                run_id=run_id,
                method="cylinder",
                object_id="probe",
                world_seed=1,
                search_seed=2,
                trace_file="traces.jsonl",
                line=0,
            )
            if not await ledger.add_episode(entry):
                return False, "could not index an episode"
            loaded = await ledger.get_episode(entry.episode_id)
            if loaded != entry:
                return False, "episode index entry changed on read"
            await ledger.finish_run(run_id, "done", manifest_hash="0" * 64)
            return True, "ledger tables and round trip OK"
    except Exception as e:
        return False, f"error: {e}"


async def main():
    print(HEALTH_MESSAGES["title"])
    print(HEALTH_MESSAGES["starting"])

    results = []
    for key, check in (("grad_check", test_gradients), ("oracle_check", test_oracle), ("ledger_check", test_ledger)):
        print_header(HEALTH_MESSAGES[key])
        success, details = await check()
        print_test_result(HEALTH_MESSAGES[key], success, details)
        results.append((HEALTH_MESSAGES[key], success))

    print_header(HEALTH_MESSAGES["summary"])
    passed = sum(1 for _, success in results if success)
    for name, success in results:
        print(f"{name}: {HEALTH_MESSAGES['test_passed'] if success else HEALTH_MESSAGES['test_failed']}")
    print(f"\n{passed}/{len(results)} checks passed")

    if passed == len(results):
        print(f"\n{HEALTH_MESSAGES['all_passed']}")
        return 0
    print(f"\n{HEALTH_MESSAGES['some_failed']}")
    return 1


if __name__ == "__main__":
    try:
        sys.exit(asyncio.run(main()))
    except KeyboardInterrupt:
        print("\nStopped by user")
        sys.exit(1)
    except Exception as e:
        print(f"\n{HEALTH_MESSAGES['critical_error']} {e}")
        sys.exit(1)
