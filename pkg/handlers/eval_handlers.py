"""eval-model / eval-policy / eval-min-force / replay."""

import asyncio
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import config
from dataset import Dataset
from errors import MissingInputError, ReplayMismatchError
from evaluation import (
    METHODS,
    EpisodeSpec,
    build_eval_report,
    episode_plan,
    make_scorer,
    run_episode,
    trace_line,
)
from handlers import CommandContext, Router, arg, load_calibration
from handlers.data_handlers import VARIANTS, model_config_for, train_schedule_for
from models.schemas import EpisodeEntry, EvalReport, RegraspResult, SearchConfig
from policy import Scorer
from predictor import chance_kfold, kfold_eval
from sim.objects import find_object, object_sets, resolve_object_set
from utils.reporting import format_mean_stderr, format_rate, read_line, write_csv, write_dat, write_json, write_jsonl

logger = logging.getLogger(__name__)

eval_router = Router("eval")

ORACLE_SEARCH = {"n_random": 490, "n_force_sweep": 10}


def _as_list(value: Any) -> List[str]:
    if value is None:
        return []
    if isinstance(value, str):
        return [v.strip() for v in value.split(",") if v.strip()]
    return [str(v) for v in value]


async def run_plan(ctx: CommandContext, plan: Sequence[EpisodeSpec], scorer: Optional[Scorer]) -> List[RegraspResult]:
    """Episodes run concurrently; results come back in plan order, never completion order."""
    semaphore = asyncio.Semaphore(max(1, ctx.workers))

    async def one(p: EpisodeSpec) -> RegraspResult:
        async with semaphore:
            return await asyncio.to_thread(run_episode, p, scorer)

    return list(await asyncio.gather(*(one(p) for p in plan)))


async def store_traces(
    ctx: CommandContext,
    name: str,
    plan: Sequence[EpisodeSpec],
    results: Sequence[RegraspResult],
    checkpoint: Optional[str],
    calibration: Optional[str],
) -> Path:
    """Write one JSON line per episode and index every line in the ledger."""
    path = ctx.path("traces", f"{name.replace('/', '-')}.jsonl")
    lines = [trace_line(r) for r in results]
    await write_jsonl(path, [r.model_dump(mode="json") for r in results])
    ctx.record(path, "traces")
    if ctx.ledger is not None and ctx.run_id is not None:
        entries = [
            EpisodeEntry(
                episode_id=p.episode_id,
                run_id=ctx.run_id,
                method=p.method,
                object_id=p.spec.name,
                world_seed=p.world_seed,
                search_seed=p.search.seed,
                checkpoint=checkpoint,
                calibration=calibration,
                search=p.search.model_dump(mode="json"),
                trace_file=str(path),
                line=i,
            )
            for i, p in enumerate(plan)
        ]
        await ctx.ledger.add_episodes(entries)
    logger.info(f"{len(lines)} {name} traces written to {path}")
    return path


async def write_force_histogram(ctx: CommandContext, name: str, report: EvalReport) -> Path:
    edges = report.force_bin_edges
    rows = [(edges[i], edges[i + 1], c) for i, c in enumerate(report.force_histogram)]
    mean = "n/a" if report.mean_success_force is None else f"{report.mean_success_force:.4f}"
    path = await write_dat(
        ctx.path(f"force_hist-{name.replace('/', '-')}.dat"),
        ["force_low", "force_high", "successful_grasps"],
        rows,
        [f"method {name}", f"mean force on successful grasps {mean} N"],
    )
    return ctx.record(path, "histogram")


def _report_notes(reports: Dict[str, EvalReport]) -> List[str]:
    notes = [config.MESSAGES["reference_note"], config.MESSAGES["count_note"]]
    if any(r.forced_lifts for r in reports.values()):
        notes.append(config.MESSAGES["forced_lift_note"])
    return notes


@eval_router.command(
    "eval-model",
    help="Object-grouped K-fold accuracy of every predictor variant",
    arguments=[
        arg("--dataset", help="dataset (JSON lines)"),
        arg("--folds", type=int, help="number of folds (default 3)"),
        arg("--variants", help="comma-separated variants (default all)"),
    ],
)
async def cmd_eval_model(ctx: CommandContext) -> Dict[str, Any]:
    dataset = Dataset.from_jsonl(ctx.existing_path("dataset"))
    k = int(ctx.option("folds", 3))
    variants = _as_list(ctx.option("variants")) or list(VARIANTS)
    schedule = train_schedule_for(ctx)
    semaphore = asyncio.Semaphore(max(1, ctx.workers))

    async def evaluate(variant: str):
        async with semaphore:
            return await asyncio.to_thread(kfold_eval, model_config_for(ctx, variant), dataset, k, ctx.seed, schedule)

    rows = [chance_kfold(dataset, k, ctx.seed)]
    rows.extend(await asyncio.gather(*(evaluate(v) for v in variants)))

    reference = config.HARDWARE_REFERENCE["model_accuracy"]
    csv_path = await write_csv(
        ctx.path("model_accuracy.csv"),
        ["model", "mean", "stderr", "fold_accuracies", "formatted", "reference_hardware"],
        [
            [r.variant, f"{r.mean:.6f}", f"{r.stderr:.6f}", ";".join(f"{a:.6f}" for a in r.accuracies), format_mean_stderr(r.mean, r.stderr), reference.get(r.variant, "")]
            for r in rows
        ],
    )
    ctx.record(csv_path, "table")
    payload = {
        "folds": k,
        "rows": [r.model_dump(mode="json") for r in rows],
        "reference_hardware": reference,
        "notes": [config.MESSAGES["reference_note"]],
    }
    ctx.record(await write_json(ctx.path("model_accuracy.json"), payload), "report")
    logger.info(config.MESSAGES["report_written"].format(path=csv_path))
    return {"table": str(csv_path), "accuracy": {r.variant: r.mean for r in rows}}


@eval_router.command(
    "eval-policy",
    help="Closed-loop grasp success of each method on held-out objects",
    arguments=[
        arg("--objects", help="object set or library JSON (default test)"),
        arg("--methods", help=f"comma-separated subset of {','.join(METHODS)}"),
        arg("--episodes", type=int, help="episodes per object and method"),
        arg("--checkpoint", help="fusion checkpoint"),
        arg("--calibration", help="fusion calibration"),
        arg("--vision-checkpoint", dest="vision_checkpoint"),
        arg("--vision-calibration", dest="vision_calibration"),
        arg("--tactile-checkpoint", dest="tactile_checkpoint"),
        arg("--tactile-calibration", dest="tactile_calibration"),
    ],
)
async def cmd_eval_policy(ctx: CommandContext) -> Dict[str, Any]:
    objects = resolve_object_set(ctx.option("objects", "test"))
    methods = _as_list(ctx.option("methods")) or ["fusion", "vision_only", "cylinder"]
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise ValueError(f"unknown methods: {unknown}")
    n_episodes = int(ctx.option("episodes", config.EPISODES_PER_OBJECT))
    inputs = {
        "fusion": ("checkpoint", "calibration"),
        "vision_only": ("vision_checkpoint", "vision_calibration"),
        "tactile_only": ("tactile_checkpoint", "tactile_calibration"),
    }

    reports: Dict[str, EvalReport] = {}
    for method in methods:
        checkpoint = calibration = None
        if method in inputs:
            checkpoint = str(ctx.existing_path(inputs[method][0]))
            calibration = ctx.option(inputs[method][1])
        if method == "oracle":
            search = ctx.search_config(**ctx.run_config.get("oracle_search", ORACLE_SEARCH))
        else:
            search = ctx.search_config()
        scorer = make_scorer(method, checkpoint, load_calibration(calibration), batch_size=search.scoring_batch)
        plan = episode_plan(method, objects, n_episodes, ctx.seed, search)
        results = await run_plan(ctx, plan, scorer)
        await store_traces(ctx, method, plan, results, checkpoint, calibration)
        reports[method] = build_eval_report(method, results, [o.name for o in objects])
        await write_force_histogram(ctx, method, reports[method])
        logger.info(f"[{method}] success {reports[method].aggregate_success:.3f} over {len(results)} episodes")

    rows = []
    for method, report in reports.items():
        for name, tally in report.per_object.items():
            rows.append([method, name, tally.successes, tally.trials, format_rate(tally.successes, tally.trials)])
        successes = sum(t.successes for t in report.per_object.values())
        trials = sum(t.trials for t in report.per_object.values())
        rows.append([method, "ALL", successes, trials, format_rate(successes, trials)])
    for difficulty, values in config.HARDWARE_REFERENCE["policy_success"].items():
        for method, value in values.items():
            rows.append([f"reference:{method}", f"hardware-{difficulty}", "", "", value])
    csv_path = ctx.record(await write_csv(ctx.path("policy_success.csv"), ["method", "object", "successes", "trials", "rate"], rows), "table")

    payload = {
        "methods": {m: r.model_dump(mode="json") for m, r in reports.items()},
        "episodes_per_object": n_episodes,
        "notes": _report_notes(reports),
        "reference_hardware": config.HARDWARE_REFERENCE["policy_success"],
    }
    ctx.record(await write_json(ctx.path("policy_report.json"), payload), "report")
    logger.info(config.MESSAGES["report_written"].format(path=csv_path))
    return {"table": str(csv_path), "success": {m: r.aggregate_success for m, r in reports.items()}}


@eval_router.command(
    "eval-min-force",
    help="Paired max-success vs min-force regrasping on one object",
    arguments=[
        arg("--checkpoint", help="predictor checkpoint"),
        arg("--calibration"),
        arg("--method", choices=["fusion", "vision_only", "tactile_only"]),
        arg("--object", help="object name (default: first hard object)"),
        arg("--objects", help="object set or library JSON holding --object"),
        arg("--episodes", type=int),
    ],
)
async def cmd_eval_min_force(ctx: CommandContext) -> Dict[str, Any]:
    checkpoint = str(ctx.existing_path("checkpoint"))
    calibration = ctx.option("calibration")
    method = ctx.option("method", "fusion")
    library = resolve_object_set(ctx.option("objects", "all"))
    name = ctx.option("object") or object_sets()["hard"][0].name
    objects = [find_object(name, library)]
    n_episodes = int(ctx.option("episodes", 100))
    scorer = make_scorer(method, checkpoint, load_calibration(calibration))

    reports: Dict[str, EvalReport] = {}
    for objective in ("max_success", "min_force"):
        search = ctx.search_config(objective=objective)
        label = f"{method}/{objective}"
        plan = episode_plan(method, objects, n_episodes, ctx.seed, search, tag=objective)
        results = await run_plan(ctx, plan, scorer)
        await store_traces(ctx, label, plan, results, checkpoint, calibration)
        reports[objective] = build_eval_report(label, results, [name])
        await write_force_histogram(ctx, label, reports[objective])

    base, low = reports["max_success"], reports["min_force"]
    reduction = None
    if base.mean_success_force and low.mean_success_force is not None:
        reduction = 1.0 - low.mean_success_force / base.mean_success_force
    rows = []
    for objective, report in reports.items():
        tally = report.per_object[name]
        mean = "" if report.mean_success_force is None else f"{report.mean_success_force:.4f}"
        rows.append([objective, tally.successes, tally.trials, format_rate(tally.successes, tally.trials), mean])
    reference = config.HARDWARE_REFERENCE["min_force"].get(method, {})
    if reference:
        rows.append([f"reference:{method}", "", "", reference["success"], reference["mean_force"]])
    csv_path = ctx.record(
        await write_csv(ctx.path("min_force.csv"), ["objective", "successes", "trials", "rate", "mean_success_force"], rows),
        "table",
    )
    payload = {
        "method": method,
        "object": name,
        "reports": {k: r.model_dump(mode="json") for k, r in reports.items()},
        "success_gap": base.aggregate_success - low.aggregate_success,
        "force_reduction": reduction,
        "notes": _report_notes(reports),
        "reference_hardware": reference,
    }
    ctx.record(await write_json(ctx.path("min_force.json"), payload), "report")
    return {"table": str(csv_path), "force_reduction": reduction, "success": {k: r.aggregate_success for k, r in reports.items()}}


@eval_router.command(
    "replay",
    help="Re-run a recorded episode from the ledger and compare its trace",
    arguments=[
        arg("episode_id", help="episode id as written in the traces"),
        arg("--objects", help="object set or library JSON the episode used (default all)"),
    ],
)
async def cmd_replay(ctx: CommandContext) -> Dict[str, Any]:
    episode_id = ctx.args.episode_id
    if ctx.ledger is None:
        raise MissingInputError(config.MESSAGES["missing_input"].format(name="ledger", path=config.LEDGER_PATH))
    entry = await ctx.ledger.get_episode(episode_id)
    if entry is None:
        raise MissingInputError(config.MESSAGES["missing_input"].format(name=f"episode {episode_id}", path=ctx.ledger.db_path))
    if not Path(entry.trace_file).exists():
        raise MissingInputError(config.MESSAGES["missing_input"].format(name="trace file", path=entry.trace_file))
    recorded = await read_line(Path(entry.trace_file), entry.line)
    if recorded is None:
        raise MissingInputError(config.MESSAGES["missing_input"].format(name=f"trace line {entry.line}", path=entry.trace_file))

    spec = find_object(entry.object_id, resolve_object_set(ctx.option("objects", "all")))
    plan = EpisodeSpec(
        method=entry.method,
        object_index=-1,
        episode_index=-1,
        spec=spec,
        world_seed=entry.world_seed,
        search=SearchConfig(**entry.search),
        episode_id=entry.episode_id,
    )
    scorer = make_scorer(entry.method, entry.checkpoint, load_calibration(entry.calibration), batch_size=plan.search.scoring_batch)
    result = await asyncio.to_thread(run_episode, plan, scorer)
    replayed = trace_line(result)
    if replayed != recorded:
        raise ReplayMismatchError(f"episode {episode_id} diverged from {entry.trace_file}:{entry.line}")
    logger.info(f"Episode {episode_id} replayed bit-identically")
    return {"episode_id": episode_id, "match": True, "outcome": result.outcome}
