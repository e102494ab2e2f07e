"""Predictor probes: force sweep, height sweep, downward-motion ranking, action histograms."""

import asyncio
import logging
from pathlib import Path
from typing import Any, Dict, List, Tuple

import numpy as np

import config
from analysis import (
    action_histograms,
    downward_improvement,
    drops_at_max_force,
    finger_region,
    force_sweep,
    height_sweep,
    histogram_mode,
    is_non_decreasing,
    sample_contact_states,
)
from errors import MissingInputError
from evaluation import REGRASP_METHODS
from handlers import CommandContext, Router, arg, load_calibration
from models.schemas import RegraspResult
from nn.checkpoint import load_checkpoint
from sim.objects import resolve_object_set
from utils.reporting import read_jsonl, write_dat, write_json

logger = logging.getLogger(__name__)

analysis_router = Router("analysis")

PROBE_ARGUMENTS = [
    arg("--checkpoint", help="predictor checkpoint"),
    arg("--calibration"),
    arg("--objects", help="object set or library JSON for probe states (default test)"),
    arg("--states", type=int, help="contact states per object (default 10)"),
]


async def _probe_inputs(ctx: CommandContext):
    params, _ = load_checkpoint(ctx.existing_path("checkpoint"))
    calib = load_calibration(ctx.option("calibration"))
    objects = resolve_object_set(ctx.option("objects", "test"))
    per_object = int(ctx.option("states", 10))
    probes = await asyncio.to_thread(sample_contact_states, objects, per_object, ctx.seed)
    return params, calib, probes


def _fraction(flags: List[bool]) -> float:
    return float(np.mean(flags)) if flags else 0.0


@analysis_router.command("analyze-force-sweep", help="Predicted success against grasp force, stable vs corner contacts", arguments=PROBE_ARGUMENTS)
async def cmd_analyze_force_sweep(ctx: CommandContext) -> Dict[str, Any]:
    params, calib, probes = await _probe_inputs(ctx)
    curves: Dict[str, List[Tuple]] = {"stable": [], "corner": []}
    monotone, dropping = [], []
    for probe in probes:
        forces, probs = force_sweep(params, calib, probe.state)
        curves[probe.kind].extend((probe.index, probe.object_id, f, p) for f, p in zip(forces, probs))
        if probe.kind == "stable":
            monotone.append(is_non_decreasing(probs))
        else:
            dropping.append(drops_at_max_force(probs))

    for kind, rows in curves.items():
        path = await write_dat(ctx.path(f"force_sweep-{kind}.dat"), ["state", "object", "force", "p_success"], rows, [f"{kind} contact states"])
        ctx.record(path, "curve")
    summary = {
        "stable": {"states": len(monotone), "non_decreasing": int(sum(monotone)), "fraction": _fraction(monotone)},
        "corner": {"states": len(dropping), "drops_at_max_force": int(sum(dropping)), "fraction": _fraction(dropping)},
    }
    ctx.record(await write_json(ctx.path("force_sweep.json"), summary), "report")
    return summary


@analysis_router.command("analyze-height-sweep", help="Predicted success against vertical motion", arguments=PROBE_ARGUMENTS)
async def cmd_analyze_height_sweep(ctx: CommandContext) -> Dict[str, Any]:
    params, calib, probes = await _probe_inputs(ctx)
    curves: Dict[str, List[Tuple]] = {"top": [], "middle": [], "bottom": []}
    prefers_down: Dict[str, List[bool]] = {region: [] for region in curves}
    for probe in probes:
        grid, probs = height_sweep(params, calib, probe.state)
        curves[probe.region].extend((probe.index, probe.object_id, dz, p) for dz, p in zip(grid, probs))
        prefers_down[probe.region].append(bool(probs[0] > probs[-1]))

    for region, rows in curves.items():
        path = await write_dat(ctx.path(f"height_sweep-{region}.dat"), ["state", "object", "dz", "p_success"], rows, [f"fingers at the {region} of the object"])
        ctx.record(path, "curve")
    summary = {
        region: {"states": len(flags), "prefers_down": int(sum(flags)), "fraction": _fraction(flags)}
        for region, flags in prefers_down.items()
    }
    ctx.record(await write_json(ctx.path("height_sweep.json"), summary), "report")
    return summary


@analysis_router.command("analyze-downward", help="Rank contact states by predicted gain from moving down", arguments=PROBE_ARGUMENTS)
async def cmd_analyze_downward(ctx: CommandContext) -> Dict[str, Any]:
    params, calib, probes = await _probe_inputs(ctx)
    scored = []
    for probe in probes:
        gain, p0, p_down = downward_improvement(params, calib, probe.state)
        scored.append((gain, probe.index, probe, p0, p_down))
    # highest gain first; state index keeps ties stable
    scored.sort(key=lambda item: (-item[0], item[1]))

    rows = [
        (rank, probe.index, probe.object_id, finger_region(probe.state), probe.region, gain, p0, p_down)
        for rank, (gain, _, probe, p0, p_down) in enumerate(scored)
    ]
    path = await write_dat(
        ctx.path("downward_ranking.dat"),
        ["rank", "state", "object", "finger_region", "grip_region", "improvement", "p_dz0", "p_down"],
        rows,
        ["improvement = p(dz=-0.02) - p(dz=0)"],
    )
    ctx.record(path, "table")
    head = max(1, len(rows) // 5) if rows else 0

    def regions(selection) -> Dict[str, int]:
        counts: Dict[str, int] = {}
        for row in selection:
            counts[row[3]] = counts.get(row[3], 0) + 1
        return dict(sorted(counts.items()))

    summary = {
        "states": len(rows),
        "mean_improvement": float(np.mean([r[5] for r in rows])) if rows else 0.0,
        "most_improved_finger_regions": regions(rows[:head]),
        "least_improved_finger_regions": regions(rows[-head:] if head else []),
    }
    ctx.record(await write_json(ctx.path("downward.json"), summary), "report")
    return summary


@analysis_router.command(
    "action-hist",
    help="Histograms of the actions taken in successful episodes",
    arguments=[arg("--traces", help="comma-separated episode trace files (JSON lines)")],
)
async def cmd_action_hist(ctx: CommandContext) -> Dict[str, Any]:
    value = ctx.required("traces")
    paths = [Path(p.strip()) for p in (value.split(",") if isinstance(value, str) else value) if str(p).strip()]
    results: List[RegraspResult] = []
    for path in paths:
        if not path.exists():
            raise MissingInputError(config.MESSAGES["missing_input"].format(name="--traces", path=path))
        results.extend(RegraspResult.model_validate(row) for row in await read_jsonl(path))

    # the cylinder baseline moves straight to the fitted center; its steps are not regrasp actions
    excluded: Dict[str, int] = {}
    for r in results:
        if r.method not in REGRASP_METHODS:
            excluded[r.method] = excluded.get(r.method, 0) + 1
    if excluded:
        logger.warning(f"Leaving {sum(excluded.values())} non-regrasp episodes out of the action histograms: {excluded}")
    results = [r for r in results if r.method in REGRASP_METHODS]

    histograms = action_histograms(results)
    summary: Dict[str, Any] = {
        "episodes": len(results),
        "successful_episodes": sum(1 for r in results if r.outcome == 1),
        "excluded_episodes": dict(sorted(excluded.items())),
    }
    for name, (edges, counts) in histograms.items():
        rows = [(edges[i], edges[i + 1], int(c)) for i, c in enumerate(counts)]
        path = await write_dat(ctx.path(f"action_hist-{name}.dat"), [f"{name}_low", f"{name}_high", "count"], rows)
        ctx.record(path, "histogram")
        summary[name] = {"total": int(counts.sum()), "mode": histogram_mode(edges, counts)}
    dz_mode = summary["dz"]["mode"]
    summary["downward_preference"] = dz_mode is not None and dz_mode <= 0.0
    ctx.record(await write_json(ctx.path("action_hist.json"), summary), "report")
    return summary
