# Handlers module initialization
import argparse
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Awaitable, Callable, Dict, List, Optional, Sequence, Tuple

import config
from errors import MissingInputError
from models.schemas import Calibration, SearchConfig

logger = logging.getLogger(__name__)

Argument = Tuple[Tuple[str, ...], Dict[str, Any]]


def arg(*flags: str, **kwargs: Any) -> Argument:
    return flags, kwargs


@dataclass
class CommandContext:
    """Everything a command handler needs: parsed flags, merged config, output dir, run id."""

    command: str
    args: argparse.Namespace
    seed: int
    out_dir: Path
    run_config: Dict[str, Any] = field(default_factory=dict)
    run_id: Optional[int] = None
    workers: int = 1
    ledger: Any = None
    artifacts: List[Tuple[Path, str]] = field(default_factory=list)

    def option(self, name: str, default: Any = None) -> Any:
        """CLI flag if given, else the --config entry, else `default`."""
        value = getattr(self.args, name, None)
        if value is not None:
            return value
        return self.run_config.get(name, default)

    def required(self, name: str, flag: Optional[str] = None) -> Any:
        value = self.option(name)
        if value is None:
            raise MissingInputError(config.MESSAGES["missing_input"].format(name=flag or f"--{name.replace('_', '-')}", path="(not given)"))
        return value

    def existing_path(self, name: str, flag: Optional[str] = None) -> Path:
        path = Path(self.required(name, flag))
        if not path.exists():
            raise MissingInputError(config.MESSAGES["missing_input"].format(name=flag or f"--{name.replace('_', '-')}", path=path))
        return path

    def path(self, *parts: str) -> Path:
        return self.out_dir.joinpath(*parts)

    def record(self, path: Path, kind: str) -> Path:
        self.artifacts.append((Path(path), kind))
        return Path(path)

    def search_config(self, **overrides: Any) -> SearchConfig:
        values = {
            "n_random": config.SEARCH_N_RANDOM,
            "n_force_sweep": config.SEARCH_N_FORCE_SWEEP,
            "lift_threshold": config.LIFT_THRESHOLD,
            "max_regrasps": config.MAX_REGRASPS,
            "scoring_batch": config.SCORING_BATCH,
            "seed": self.seed,
        }
        values.update(self.run_config.get("search", {}))
        values.update(overrides)
        return SearchConfig(**values)


def load_calibration(path: Optional[str]) -> Optional[Calibration]:
    if not path:
        return None
    calib_path = Path(path)
    if not calib_path.exists():
        raise MissingInputError(config.MESSAGES["missing_input"].format(name="--calibration", path=path))
    payload = json.loads(calib_path.read_text(encoding="utf-8"))
    return Calibration(A=payload["A"], B=payload["B"])


Handler = Callable[[CommandContext], Awaitable[Dict[str, Any]]]


@dataclass
class Command:
    name: str
    help: str
    arguments: Sequence[Argument]
    handler: Handler


class Router:
    """Maps CLI subcommand names to async handlers."""

    def __init__(self, name: str):
        self.name = name
        self.commands: Dict[str, Command] = {}

    def command(self, name: str, help: str = "", arguments: Sequence[Argument] = ()):
        def decorator(func: Handler) -> Handler:
            if name in self.commands:
                raise ValueError(f"command '{name}' registered twice on router {self.name}")
            self.commands[name] = Command(name, help, tuple(arguments), func)
            return func

        return decorator

    def include(self, *routers: "Router") -> "Router":
        for router in routers:
            for name, command in router.commands.items():
                if name in self.commands:
                    raise ValueError(f"command '{name}' registered twice")
                self.commands[name] = command
        return self
