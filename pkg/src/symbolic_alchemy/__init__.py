"""Symbolic alchemy workbench: task, baselines, agent, analysis, tooling."""

__version__ = "0.1.0"
