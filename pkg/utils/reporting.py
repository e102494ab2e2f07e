"""Report writers: JSON, CSV, JSON-lines and gnuplot-style .dat files."""

import csv
import io
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

import aiofiles
import numpy as np

logger = logging.getLogger(__name__)


def _ensure_parent(path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def dumps(payload: Any) -> str:
    """Canonical JSON text; byte-stable for identical payloads."""
    return json.dumps(payload, sort_keys=True, indent=2, default=_default) + "\n"


def _default(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if hasattr(value, "model_dump"):
        return value.model_dump(mode="json")
    raise TypeError(f"not JSON serializable: {type(value).__name__}")


async def write_text(path: Path, text: str) -> Path:
    path = _ensure_parent(path)
    async with aiofiles.open(path, "w", encoding="utf-8") as f:
        await f.write(text)
    logger.info(f"Wrote {path}")
    return path


async def write_json(path: Path, payload: Any) -> Path:
    return await write_text(path, dumps(payload))


async def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(row)
    return await write_text(path, buffer.getvalue())


async def write_jsonl(path: Path, payloads: Iterable[Dict[str, Any]]) -> Path:
    lines = [json.dumps(p, sort_keys=True, separators=(",", ":"), default=_default) for p in payloads]
    return await write_text(path, "".join(line + "\n" for line in lines))


async def write_dat(path: Path, columns: Sequence[str], rows: Iterable[Sequence[Any]], comments: Sequence[str] = ()) -> Path:
    """Whitespace-separated columns with '#' comment header, readable by gnuplot."""
    lines = [f"# {c}" for c in comments]
    lines.append("# " + " ".join(columns))
    for row in rows:
        lines.append(" ".join(_format_cell(v) for v in row))
    if not any(not line.startswith("#") for line in lines):
        lines.append("# (no data)")
    return await write_text(path, "\n".join(lines) + "\n")


def _format_cell(value: Any) -> str:
    if value is None:
        return "nan"
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.6g}"
    return str(value)


async def read_jsonl(path: Path) -> List[Dict[str, Any]]:
    async with aiofiles.open(path, "r", encoding="utf-8") as f:
        text = await f.read()
    return [json.loads(line) for line in text.splitlines() if line.strip()]


async def read_line(path: Path, line_no: int) -> Optional[str]:
    """Zero-based line of a text file, without its newline."""
    async with aiofiles.open(path, "r", encoding="utf-8") as f:
        text = await f.read()
    lines = text.splitlines()
    return lines[line_no] if 0 <= line_no < len(lines) else None


def format_rate(successes: int, trials: int) -> str:
    """'94.0% (47/50)' as in grasp-success tables."""
    if trials == 0:
        return "n/a (0/0)"
    return f"{100.0 * successes / trials:.1f}% ({successes}/{trials})"


def format_mean_stderr(mean: float, stderr: float) -> str:
    return f"{100.0 * mean:.2f}% ± {100.0 * stderr:.2f}%"
