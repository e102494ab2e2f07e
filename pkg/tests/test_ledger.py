"""
Run ledger on SQLite.

Covers:
1. Run lifecycle: start, finish with a manifest hash, read back
2. Episode index: insert, replace on re-run, count per run
3. Journal entries newest first
4. Artifacts per run
"""

import asyncio

import pytest

from database import Ledger
from models.schemas import EpisodeEntry, LogEntry


@pytest.fixture
def ledger(tmp_path):
    db = Ledger(str(tmp_path / "runs" / "ledger.db"))
    asyncio.run(db.init_db())
    return db


def _entry(episode_id, run_id, line=0, trace="trace.jsonl"):
    return EpisodeEntry(
        episode_id=episode_id,
        run_id=run_id,
        method="fusion",
        object_id="obj0",
        world_seed=11,
        search_seed=12,
        checkpoint="ckpt.json",
        search={"n_random": 490, "lift_threshold": 0.9},
        trace_file=trace,
        line=line,
    )


def test_run_lifecycle(ledger):
    async def scenario():
        run_id = await ledger.start_run("collect", 3, {"n_trials": 10})
        assert await ledger.finish_run(run_id, "ok", manifest_hash="abc123")
        return await ledger.get_run(run_id)

    run = asyncio.run(scenario())
    assert run["command"] == "collect"
    assert run["seed"] == 3
    assert run["config"] == {"n_trials": 10}
    assert run["status"] == "ok" and run["manifest_hash"] == "abc123"
    assert run["finished_at"] is not None


def test_missing_run_is_none(ledger):
    assert asyncio.run(ledger.get_run(404)) is None


def test_episode_index(ledger):
    async def scenario():
        first = await ledger.start_run("eval-policy", 0)
        second = await ledger.start_run("eval-policy", 0)
        await ledger.add_episodes([_entry("e1", first, 0), _entry("e2", first, 1)])
        await ledger.add_episode(_entry("e1", second, 5, trace="newer.jsonl"))
        return (
            await ledger.get_episode("e1"),
            await ledger.get_episode("missing"),
            await ledger.count_episodes(),
            await ledger.count_episodes(first),
        )

    e1, missing, total, in_first = asyncio.run(scenario())
    assert e1.trace_file == "newer.jsonl" and e1.line == 5
    assert e1.search == {"n_random": 490, "lift_threshold": 0.9}
    assert missing is None
    assert total == 2 and in_first == 1


def test_empty_episode_batch_is_a_no_op(ledger):
    assert asyncio.run(ledger.add_episodes([]))


def test_logs_newest_first(ledger):
    async def scenario():
        for i in range(3):
            await ledger.add_log(LogEntry(run_id=1, event=f"step{i}"))
        await ledger.add_log(LogEntry(run_id=2, level="ERROR", event="other", details="boom"))
        return await ledger.get_logs(run_id=1), await ledger.get_logs(limit=2)

    mine, latest = asyncio.run(scenario())
    assert [log.event for log in mine] == ["step2", "step1", "step0"]
    assert [log.event for log in latest] == ["other", "step2"]
    assert latest[0].level == "ERROR" and latest[0].details == "boom"


def test_artifacts_are_listed_by_path(ledger):
    async def scenario():
        run_id = await ledger.start_run("train", 1)
        await ledger.add_artifact(run_id, "out/b.json", "22", "checkpoint")
        await ledger.add_artifact(run_id, "out/a.jsonl", "11", "dataset")
        return await ledger.get_artifacts(run_id), await ledger.get_artifacts(run_id + 1)

    rows, none = asyncio.run(scenario())
    assert [r["path"] for r in rows] == ["out/a.jsonl", "out/b.json"]
    assert rows[1]["kind"] == "checkpoint"
    assert none == []
