"""Experiment harness: drivers, fits, artifacts and the exit-code contract."""

from .runner import run, run_experiments

__all__ = ["run", "run_experiments"]
