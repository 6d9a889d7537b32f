"""
Base Command - Foundation class for every command-line subcommand

Provides the shared run context (validated config, output directory, parsed flags), a logger
bound to the command name, and small helpers for writing artifacts.
"""

import argparse
import json
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Any, Dict, List

import structlog

from console.app.run_config import RunConfig

logger = structlog.get_logger(__name__)


class BaseCommand(ABC):
    """
    Base class for all subcommands

    Subclasses set ``name`` and ``help``, declare their own flags in ``add_arguments`` and
    implement ``execute``, which returns the summary lines printed on success.
    """

    name: str = ""
    help: str = ""

    def __init__(self, config: RunConfig, out_dir: Path, args: argparse.Namespace):
        self.config = config
        self.out_dir = Path(out_dir)
        self.args = args
        self.log = logger.bind(command=self.name)

    @classmethod
    def add_arguments(cls, parser: argparse.ArgumentParser) -> None:
        """Declare command-specific flags"""

    @abstractmethod
    def execute(self) -> List[str]:
        """
        Run the command

        Returns:
            Summary lines for stdout

        Raises:
            TrajPoseError: On any pipeline failure
        """

    def run(self) -> List[str]:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.log.info("command_started", out_dir=str(self.out_dir), seed=self.config.seed)
        summary = self.execute()
        self.log.info("command_finished")
        return summary

    def artifact(self, filename: str) -> Path:
        return self.out_dir / filename

    def write_json(self, filename: str, payload: Dict[str, Any]) -> Path:
        path = self.artifact(filename)
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        self.log.info("artifact_written", path=str(path))
        return path

    def __repr__(self) -> str:
        return f"<{self.__class__.__name__} out_dir={self.out_dir}>"
