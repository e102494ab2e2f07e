"""
Command-line harness end to end, on tiny models and short runs.

Covers:
1. Every subcommand is registered
2. Missing inputs exit with code 2 and a JSON error line
3. collect -> train -> calibrate; a repeated collect reproduces its manifest hash
4. eval-policy traces are indexed in the ledger and replay bit-identically
5. action-hist over recorded traces; cylinder-baseline episodes are left out and counted
6. eval-model, eval-min-force, replay of a min-force episode and the three sweep analyses
"""

import asyncio
import json

import pytest

from harness import build_parser, main, router
from tests.helpers import SIM_TINY


def _run(capsys, argv):
    code = asyncio.run(main(argv))
    out = capsys.readouterr().out.strip().splitlines()
    return code, json.loads(out[-1]) if out else None


@pytest.fixture
def workspace(tmp_path):
    cfg = tmp_path / "tiny.json"
    cfg.write_text(
        json.dumps(
            {
                "model": SIM_TINY,
                "schedule": {"batch_size": 4, "total_iterations": 6, "lr_drop_iteration": 4, "base_lr": 1e-2},
                "search": {"n_random": 40, "n_force_sweep": 5, "max_regrasps": 2},
            }
        ),
        encoding="utf-8",
    )
    base = ["--out", str(tmp_path / "out"), "--ledger", str(tmp_path / "ledger.db"), "--workers", "2", "--config", str(cfg)]
    return tmp_path, base


def test_parser_knows_every_command():
    expected = {
        "collect",
        "train",
        "calibrate",
        "eval-model",
        "eval-policy",
        "eval-min-force",
        "replay",
        "analyze-force-sweep",
        "analyze-height-sweep",
        "analyze-downward",
        "action-hist",
    }
    assert set(router.commands) == expected
    args = build_parser().parse_args(["--seed", "3", "replay", "fusion-x-s0-e000"])
    assert args.command == "replay" and args.seed == 3 and args.episode_id == "fusion-x-s0-e000"


def test_calibrate_without_validation_split(capsys, workspace):
    _, base = workspace
    code, error = _run(capsys, base + ["calibrate", "--checkpoint", "nowhere.json"])
    assert code == 2
    assert error["error"] == "missing_input"


def test_missing_dataset(capsys, workspace):
    _, base = workspace
    code, error = _run(capsys, base + ["train", "--dataset", "absent.jsonl"])
    assert code == 2 and error["error"] == "missing_input"


def test_invalid_config_values(capsys, workspace):
    tmp_path, _ = workspace
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"schedule": {"batch_size": 0}}), encoding="utf-8")
    dataset = tmp_path / "d.jsonl"
    dataset.write_text("", encoding="utf-8")
    code, error = _run(capsys, ["--out", str(tmp_path / "o"), "--ledger", str(tmp_path / "l.db"), "--config", str(bad), "train", "--dataset", str(dataset)])
    assert code == 2 and error["error"] == "invalid_config"


def test_collect_train_calibrate(capsys, workspace):
    tmp_path, base = workspace
    out = tmp_path / "out"
    code, first = _run(capsys, base + ["--seed", "5", "collect", "--trials", "8", "--objects", "train"])
    assert code == 0
    assert first["summary"]["trials"] == 8
    assert first["summary"]["records"] == 24
    code, again = _run(capsys, base + ["--seed", "5", "collect", "--trials", "8", "--objects", "train"])
    assert code == 0
    assert again["manifest_hash"] == first["manifest_hash"]
    assert again["run_id"] != first["run_id"]

    dataset = first["summary"]["dataset"]
    code, trained = _run(capsys, base + ["--seed", "5", "train", "--dataset", dataset])
    assert code == 0
    checkpoint = trained["summary"]["checkpoint"]
    assert (out / "checkpoint-fusion.json").exists()
    assert (out / "loss_curve-fusion.dat").exists()

    code, _ = _run(capsys, base + ["--seed", "6", "collect", "--trials", "8", "--objects", "train", "--output", str(out / "val.jsonl")])
    assert code == 0
    code, calib = _run(capsys, base + ["calibrate", "--checkpoint", checkpoint, "--validation", str(out / "val.jsonl")])
    if code == 0:
        payload = json.loads((out / "calibration.json").read_text(encoding="utf-8"))
        assert payload["n_validation"] == 24
        assert (out / "reliability_before.dat").exists()
    else:
        # eight trials can come out single-class
        assert calib["error"] == "calibration_error"


def test_eval_policy_replay_and_histograms(capsys, workspace):
    tmp_path, base = workspace
    out = tmp_path / "out"
    code, result = _run(capsys, base + ["--seed", "2", "eval-policy", "--methods", "cylinder,random", "--episodes", "1", "--objects", "easy"])
    assert code == 0
    assert set(result["summary"]["success"]) == {"cylinder", "random"}
    assert (out / "policy_success.csv").exists()
    assert (out / "force_hist-random.dat").exists()
    report = json.loads((out / "policy_report.json").read_text(encoding="utf-8"))
    assert report["notes"]

    trace = out / "traces" / "random.jsonl"
    first = json.loads(trace.read_text(encoding="utf-8").splitlines()[0])
    code, replayed = _run(capsys, base + ["replay", first["episode_id"], "--objects", "easy"])
    assert code == 0
    assert replayed["summary"]["match"] is True

    code, missing = _run(capsys, base + ["replay", "never-ran"])
    assert code == 2 and missing["error"] == "missing_input"

    traces = f"{trace},{out / 'traces' / 'cylinder.jsonl'}"
    code, hist = _run(capsys, base + ["action-hist", "--traces", traces])
    assert code == 0
    n_random = len(trace.read_text(encoding="utf-8").splitlines())
    assert hist["summary"]["episodes"] == n_random
    assert hist["summary"]["excluded_episodes"] == {"cylinder": n_random}
    assert (out / "action_hist-force.dat").exists()


def test_model_commands_end_to_end(capsys, workspace):
    tmp_path, base = workspace
    out = tmp_path / "out"
    code, collected = _run(capsys, base + ["--seed", "4", "collect", "--trials", "12", "--objects", "train"])
    assert code == 0
    dataset = collected["summary"]["dataset"]
    code, trained = _run(capsys, base + ["--seed", "4", "train", "--dataset", dataset])
    assert code == 0
    checkpoint = trained["summary"]["checkpoint"]

    code, model = _run(capsys, base + ["eval-model", "--dataset", dataset, "--variants", "fusion,no_action"])
    assert code == 0
    assert set(model["summary"]["accuracy"]) == {"chance", "fusion", "no_action"}
    assert all(0.0 <= a <= 1.0 for a in model["summary"]["accuracy"].values())
    table = (out / "model_accuracy.csv").read_text(encoding="utf-8").splitlines()
    assert table[0].startswith("model,mean,stderr") and len(table) == 4
    assert json.loads((out / "model_accuracy.json").read_text(encoding="utf-8"))["folds"] == 3

    code, low_force = _run(capsys, base + ["--seed", "4", "eval-min-force", "--checkpoint", checkpoint, "--episodes", "1"])
    assert code == 0
    assert set(low_force["summary"]["success"]) == {"max_success", "min_force"}
    assert (out / "min_force.csv").exists()
    assert (out / "force_hist-fusion-min_force.dat").exists()
    min_force_traces = out / "traces" / "fusion-min_force.jsonl"
    episode = json.loads(min_force_traces.read_text(encoding="utf-8").splitlines()[0])
    assert episode["episode_id"].startswith("fusion/min_force-")
    code, replayed = _run(capsys, base + ["replay", episode["episode_id"]])
    assert code == 0 and replayed["summary"]["match"] is True

    sweep_args = ["--checkpoint", checkpoint, "--objects", "easy", "--states", "1"]
    code, force = _run(capsys, base + ["analyze-force-sweep"] + sweep_args)
    assert code == 0
    assert set(force["summary"]) == {"stable", "corner"}
    assert force["summary"]["stable"]["states"] + force["summary"]["corner"]["states"] > 0
    assert (out / "force_sweep-stable.dat").exists() and (out / "force_sweep-corner.dat").exists()

    code, height = _run(capsys, base + ["analyze-height-sweep"] + sweep_args)
    assert code == 0
    assert set(height["summary"]) == {"top", "middle", "bottom"}
    assert (out / "height_sweep-middle.dat").exists()

    code, downward = _run(capsys, base + ["analyze-downward"] + sweep_args)
    assert code == 0
    assert downward["summary"]["states"] == force["summary"]["stable"]["states"] + force["summary"]["corner"]["states"]
    assert (out / "downward_ranking.dat").exists()

    code, hist = _run(capsys, base + ["action-hist", "--traces", str(min_force_traces)])
    assert code == 0
    assert hist["summary"]["episodes"] == 1 and hist["summary"]["excluded_episodes"] == {}
    for name in ("dz", "dyaw", "planar", "force"):
        assert (out / f"action_hist-{name}.dat").exists()
