"""
Subcommands of the trajpose command line
"""

from .base_command import BaseCommand
from .eval_command import EvalCommand
from .gen_command import GenCommand
from .reproject_command import ReprojectCommand
from .sweep_command import SweepCommand
from .train_command import TrainCommand

COMMANDS = {command.name: command for command in (GenCommand, TrainCommand, EvalCommand, SweepCommand, ReprojectCommand)}

__all__ = ['BaseCommand', 'COMMANDS', 'EvalCommand', 'GenCommand', 'ReprojectCommand', 'SweepCommand', 'TrainCommand']
