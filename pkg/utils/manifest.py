"""Artifact manifests: sha256 of every output so reruns can be compared byte-for-byte."""

import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, Optional

import aiofiles

logger = logging.getLogger(__name__)

_CHUNK = 1 << 20


async def sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    async with aiofiles.open(path, "rb") as f:
        while True:
            chunk = await f.read(_CHUNK)
            if not chunk:
                break
            digest.update(chunk)
    return digest.hexdigest()


async def build_manifest(
    command: str,
    seed: int,
    run_config: Dict[str, Any],
    files: Iterable[Path],
    root: Optional[Path] = None,
) -> Dict[str, Any]:
    """Manifest body: command, seed, config and {relative path: sha256}. No timestamps."""
    artifacts = {}
    for path in sorted({Path(p) for p in files}):
        if not path.exists():
            logger.warning(f"Manifest skipped missing artifact {path}")
            continue
        name = str(path.relative_to(root)) if root is not None and root in path.parents else str(path)
        artifacts[name] = await sha256_file(path)
    return {"command": command, "seed": seed, "config": run_config, "artifacts": artifacts}


def manifest_hash(manifest: Dict[str, Any]) -> str:
    text = json.dumps(manifest, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()
