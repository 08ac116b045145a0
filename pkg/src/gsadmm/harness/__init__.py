"""CLI, persistence, and experiment orchestration."""

from . import cli, io

__all__ = ["cli", "io"]
