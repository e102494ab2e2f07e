import argparse
import asyncio
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import ValidationError

import config
from database import Ledger
from errors import RegraspError
from handlers import CommandContext, Router
from handlers.analysis_handlers import analysis_router
from handlers.data_handlers import data_router
from handlers.eval_handlers import eval_router
from models.schemas import LogEntry
from utils.manifest import build_manifest, manifest_hash, sha256_file
from utils.reporting import write_json

logger = logging.getLogger(__name__)

router = Router("regrasp").include(data_router, eval_router, analysis_router)

# Flags that change where or how fast a run happens, never what it produces
_UNTRACKED_FLAGS = ("command", "config", "out", "ledger", "workers")


def setup_logging():
    logging.basicConfig(
        level=getattr(logging, config.LOG_LEVEL.upper(), logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            logging.FileHandler(config.LOG_FILE),
            logging.StreamHandler(sys.stdout),
        ],
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="regrasp", description="Visuo-tactile regrasping experiments on the built-in simulator")
    parser.add_argument("--config", help="per-command JSON config file")
    parser.add_argument("--seed", type=int, help=f"root seed (default {config.DEFAULT_SEED})")
    parser.add_argument("--out", help=f"output directory (default {config.OUT_DIR})")
    parser.add_argument("--workers", type=int, help=f"parallel episodes / trials (default {config.MAX_WORKERS})")
    parser.add_argument("--ledger", help=f"run ledger database (default {config.LEDGER_PATH})")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name, command in router.commands.items():
        sub = subparsers.add_parser(name, help=command.help)
        for flags, kwargs in command.arguments:
            sub.add_argument(*flags, **kwargs)
    return parser


class RegraspHarness:
    def __init__(self, args: argparse.Namespace, ledger: Optional[Ledger] = None):
        self.args = args
        self.run_config: Dict[str, Any] = config.load_run_config(args.config)
        seed = args.seed if args.seed is not None else self.run_config.get("seed", config.DEFAULT_SEED)
        self.seed = int(seed)
        self.out_dir = Path(args.out or self.run_config.get("out") or config.OUT_DIR)
        workers = args.workers if args.workers is not None else self.run_config.get("workers", config.MAX_WORKERS)
        self.workers = max(1, int(workers))
        self.ledger = ledger or Ledger(args.ledger or config.LEDGER_PATH)
        self.run_id: Optional[int] = None

    def tracked_config(self) -> Dict[str, Any]:
        flags = {k: v for k, v in sorted(vars(self.args).items()) if v is not None and k not in _UNTRACKED_FLAGS}
        return {"flags": flags, "config": self.run_config}

    async def setup(self):
        """Create the output directory and the ledger tables."""
        logger.info(config.MESSAGES["setup"])
        self.out_dir.mkdir(parents=True, exist_ok=True)
        try:
            await self.ledger.init_db()
            logger.info(config.MESSAGES["ledger_ready"].format(path=self.ledger.db_path))
        except Exception as e:
            logger.error(f"Failed to initialize ledger: {e}")
            raise

    async def run(self) -> Dict[str, Any]:
        name = self.args.command
        command = router.commands[name]
        tracked = self.tracked_config()
        self.run_id = await self.ledger.start_run(name, self.seed, tracked)
        ctx = CommandContext(
            command=name,
            args=self.args,
            seed=self.seed,
            out_dir=self.out_dir,
            run_config=self.run_config,
            run_id=self.run_id,
            workers=self.workers,
            ledger=self.ledger,
        )
        logger.info(config.MESSAGES["command_start"].format(command=name, seed=self.seed, out=self.out_dir))
        await self.ledger.add_log(LogEntry(run_id=self.run_id, event="command_start", details=json.dumps(tracked, sort_keys=True, default=str)))
        try:
            summary = await command.handler(ctx)
        except Exception as e:
            if self.run_id is not None:
                await self.ledger.finish_run(self.run_id, "failed", error=str(e))
            await self.ledger.add_log(LogEntry(run_id=self.run_id, level="ERROR", event="command_failed", details=str(e)))
            raise

        files: List[Path] = [path for path, _ in ctx.artifacts]
        manifest = await build_manifest(name, self.seed, tracked, files, root=self.out_dir)
        manifest_path = await write_json(self.out_dir / f"manifest-{name}.json", manifest)
        digest = manifest_hash(manifest)
        if self.run_id is not None:
            for path, kind in ctx.artifacts:
                if path.exists():
                    await self.ledger.add_artifact(self.run_id, str(path), await sha256_file(path), kind)
            await self.ledger.finish_run(self.run_id, "done", manifest_hash=digest)
        await self.ledger.add_log(LogEntry(run_id=self.run_id, event="command_done", details=digest))
        logger.info(config.MESSAGES["command_done"].format(command=name, manifest=manifest_path))
        return {
            "command": name,
            "run_id": self.run_id,
            "manifest": str(manifest_path),
            "manifest_hash": digest,
            "summary": summary,
        }

    async def cleanup(self):
        await self.ledger.close()


def _error_line(code: str, message: str) -> str:
    return json.dumps({"error": code, "message": message}, sort_keys=True)


async def main(argv: Optional[List[str]] = None) -> int:
    """Run one subcommand; returns the process exit code."""
    args = build_parser().parse_args(argv)
    harness: Optional[RegraspHarness] = None
    try:
        harness = RegraspHarness(args)
        await harness.setup()
        result = await harness.run()
        print(json.dumps(result, sort_keys=True, default=str))
        return 0
    except RegraspError as e:
        logger.error(config.MESSAGES["command_failed"].format(command=args.command, error=e))
        print(json.dumps(e.to_dict(), sort_keys=True))
        return 2
    except ValidationError as e:
        logger.error(config.MESSAGES["command_failed"].format(command=args.command, error=e))
        print(_error_line("invalid_config", str(e)))
        return 2
    except Exception as e:
        logger.exception(config.MESSAGES["command_failed"].format(command=args.command, error=e))
        print(_error_line("internal", str(e)))
        return 1
    finally:
        if harness is not None:
            await harness.cleanup()


if __name__ == "__main__":
    setup_logging()
    try:
        sys.exit(asyncio.run(main()))
    except KeyboardInterrupt:
        logger.info("Application terminated by user")
        sys.exit(130)
