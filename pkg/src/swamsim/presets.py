"""Bundled demonstration scenarios."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from .scenario import Scenario, load_scenario, parse_scenario

PRESETS = ("kite", "exp1", "exp2", "exp3", "micro")


def preset_text(name: str) -> str:
    return (
        resources.files("swamsim").joinpath(f"scenarios/{name}.scn").read_text()
    )


def resolve(ref: str | Path) -> Scenario:
    """A preset name or a path to a scenario file."""
    if isinstance(ref, str) and ref in PRESETS:
        return parse_scenario(preset_text(ref), name=ref)
    return load_scenario(ref)
