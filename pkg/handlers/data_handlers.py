"""collect / train / calibrate: the commands that produce datasets, checkpoints and calibrations."""

import asyncio
import logging
from pathlib import Path
from typing import Any, Dict

import numpy as np
from scipy.special import expit

import config
from calibration import expected_calibration_error, platt_fit_scores, reliability_table
from datagen import collect, on_policy_scorer
from dataset import Dataset
from errors import MissingInputError
from handlers import CommandContext, Router, arg, load_calibration
from models.schemas import CollectConfig, ModelConfig, TrainSchedule
from nn.checkpoint import load_checkpoint, save_checkpoint
from predictor import apply_calibration, dataset_scores, train_with_report
from sim.objects import resolve_object_set
from utils.reporting import write_dat, write_json

logger = logging.getLogger(__name__)

data_router = Router("data")

VARIANTS = ("fusion", "vision_only", "tactile_only", "no_action")


def model_config_for(ctx: CommandContext, variant: str) -> ModelConfig:
    values = dict(ctx.run_config.get("model", {}))
    values["variant"] = variant
    return ModelConfig(**values)


def train_schedule_for(ctx: CommandContext) -> TrainSchedule:
    values = {
        "batch_size": config.TRAIN_BATCH,
        "total_iterations": config.TRAIN_ITERATIONS,
        "lr_drop_iteration": config.TRAIN_LR_DROP,
        "base_lr": config.BASE_LR,
        "seed": ctx.seed,
    }
    values.update(ctx.run_config.get("schedule", {}))
    for flag, key in (("iterations", "total_iterations"), ("lr_drop", "lr_drop_iteration"), ("batch", "batch_size")):
        value = getattr(ctx.args, flag, None)
        if value is not None:
            values[key] = value
    return TrainSchedule(**values)


@data_router.command(
    "collect",
    help="Collect self-supervised grasp trials into a JSON-lines dataset",
    arguments=[
        arg("--objects", help="object set (train, easy, hard, test, all) or library JSON"),
        arg("--trials", type=int, help="number of trials"),
        arg("--policy", choices=["random", "on_policy"]),
        arg("--checkpoint", help="checkpoint for on-policy collection"),
        arg("--calibration", help="calibration JSON for on-policy collection"),
        arg("--perturbation", type=float, help="initial offset radius in meters"),
        arg("--append-to", dest="append_to", help="existing dataset to extend"),
        arg("--output", help="dataset path (default <out>/dataset.jsonl)"),
    ],
)
async def cmd_collect(ctx: CommandContext) -> Dict[str, Any]:
    policy = ctx.option("policy", "random")
    default_trials = config.COLLECT_ON_POLICY_TRIALS if policy == "on_policy" else config.COLLECT_RANDOM_TRIALS
    object_set = ctx.option("objects", "train")
    objects = resolve_object_set(object_set)
    search = ctx.search_config(**({} if "search" in ctx.run_config else {"n_random": 490, "n_force_sweep": 10}))
    cfg = CollectConfig(
        n_trials=int(ctx.option("trials", default_trials)),
        object_set=object_set,
        perturbation_scale=ctx.option("perturbation"),
        seed=ctx.seed,
        policy=policy,
        checkpoint=ctx.option("checkpoint"),
        calibration=ctx.option("calibration"),
        search=search,
    )

    scorer = None
    if cfg.policy == "on_policy":
        params, _ = load_checkpoint(Path(cfg.checkpoint))
        scorer = on_policy_scorer(params, load_calibration(cfg.calibration))

    dataset = await asyncio.to_thread(collect, cfg, objects, scorer, ctx.workers)
    trials = sum(1 for r in dataset if r.kind == "trial")

    append_to = ctx.option("append_to")
    if append_to:
        previous = Dataset.from_jsonl(Path(append_to))
        dataset = previous.concat(dataset)
        logger.info(f"Appended to {append_to}: {len(previous)} + {len(dataset) - len(previous)} records")

    output = Path(ctx.option("output") or ctx.path("dataset.jsonl"))
    await asyncio.to_thread(dataset.to_jsonl, output)
    ctx.record(output, "dataset")
    summary = {
        "dataset": str(output),
        "records": len(dataset),
        "trials": trials,
        "objects": dataset.object_ids,
        "class_balance": dataset.class_balance(),
        "collect_config": cfg.model_dump(mode="json"),
    }
    ctx.record(await write_json(ctx.path("collect_summary.json"), summary), "report")
    logger.info(config.MESSAGES["dataset_written"].format(path=output, records=len(dataset), trials=trials))
    return summary


@data_router.command(
    "train",
    help="Train one predictor variant on a dataset",
    arguments=[
        arg("--dataset", help="training dataset (JSON lines)"),
        arg("--variant", choices=list(VARIANTS)),
        arg("--validation", help="held-out dataset for validation accuracy"),
        arg("--iterations", type=int),
        arg("--lr-drop", dest="lr_drop", type=int),
        arg("--batch", type=int),
        arg("--output", help="checkpoint path (default <out>/checkpoint-<variant>.json)"),
    ],
)
async def cmd_train(ctx: CommandContext) -> Dict[str, Any]:
    dataset = Dataset.from_jsonl(ctx.existing_path("dataset"))
    validation_path = ctx.option("validation")
    validation = Dataset.from_jsonl(Path(validation_path)) if validation_path else None
    variant = ctx.option("variant", "fusion")
    model = model_config_for(ctx, variant)
    schedule = train_schedule_for(ctx)

    params, report, opt_state = await asyncio.to_thread(train_with_report, model, dataset, schedule, validation)

    output = Path(ctx.option("output") or ctx.path(f"checkpoint-{variant}.json"))
    save_checkpoint(output, params, opt_state)
    ctx.record(output, "checkpoint")
    ctx.record(await write_json(ctx.path(f"train_report-{variant}.json"), report.model_dump(mode="json")), "report")
    ctx.record(
        await write_dat(ctx.path(f"loss_curve-{variant}.dat"), ["iteration", "mean_loss"], report.loss_curve, [f"variant {variant}"]),
        "curve",
    )
    logger.info(config.MESSAGES["checkpoint_written"].format(path=output))
    return {
        "checkpoint": str(output),
        "variant": variant,
        "train_accuracy": report.train_accuracy,
        "val_accuracy": report.val_accuracy,
        "warnings": report.warnings,
    }


@data_router.command(
    "calibrate",
    help="Fit Platt scaling for a checkpoint on a held-out split",
    arguments=[
        arg("--checkpoint", help="trained checkpoint"),
        arg("--validation", help="held-out dataset (JSON lines)"),
        arg("--output", help="calibration path (default <out>/calibration.json)"),
    ],
)
async def cmd_calibrate(ctx: CommandContext) -> Dict[str, Any]:
    if ctx.option("validation") is None:
        raise MissingInputError(config.MESSAGES["missing_validation"])
    params, _ = load_checkpoint(ctx.existing_path("checkpoint"))
    validation = Dataset.from_jsonl(ctx.existing_path("validation"))

    scores, labels = await asyncio.to_thread(dataset_scores, params, validation)
    calib = platt_fit_scores(scores, labels)
    before = expit(scores)
    after = apply_calibration(scores, calib)
    ece_before = expected_calibration_error(before, labels)
    ece_after = expected_calibration_error(after, labels)

    output = Path(ctx.option("output") or ctx.path("calibration.json"))
    payload = {
        "A": calib.A,
        "B": calib.B,
        "ece_before": ece_before,
        "ece_after": ece_after,
        "n_validation": int(len(labels)),
        "positive_rate": float(np.mean(labels)),
    }
    ctx.record(await write_json(output, payload), "calibration")
    columns = ["bin_low", "bin_high", "count", "confidence", "accuracy"]
    for name, probs, ece in (("before", before, ece_before), ("after", after, ece_after)):
        rows = [[row[c] for c in columns] for row in reliability_table(probs, labels)]
        path = await write_dat(ctx.path(f"reliability_{name}.dat"), columns, rows, [f"{name} Platt scaling, ECE {ece:.6f}"])
        ctx.record(path, "curve")
    logger.info(config.MESSAGES["calibration_written"].format(path=output, before=ece_before, after=ece_after))
    return payload
