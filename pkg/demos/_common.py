"""Shared helper: load a shipped config by name."""
from pathlib import Path

from rydberg_tj.runner import load_config, validate_config

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def shipped(name):
    raw, _ = load_config(CONFIGS / name)
    return validate_config(raw, base_dir=CONFIGS)
