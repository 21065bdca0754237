"""Bundled model files for the small worked examples (regenerate with scripts/make_fixtures.py)."""
from importlib import resources
from pathlib import Path

from ..io import load_model


def fixture_path(name: str) -> Path:
    if not name.endswith(".json"):
        name += ".json"
    return Path(str(resources.files(__package__).joinpath(name)))


def load_fixture(name: str):
    return load_model(fixture_path(name))


def available() -> list:
    return sorted(p.stem for p in Path(str(resources.files(__package__))).glob("*.json"))
