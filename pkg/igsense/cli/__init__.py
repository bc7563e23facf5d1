"""CLI module - comandos e emissão de CSV."""

from .commands import COMMANDS, CommandResult

__all__ = ["COMMANDS", "CommandResult"]
