"""Bundled model, property, and configuration files."""
from importlib import resources
from pathlib import Path


def data_path(name: str) -> Path:
    """Filesystem path of a bundled data file."""
    return Path(resources.files(__name__) / name)


def bone_model_path() -> Path:
    return data_path("bone_remodeling.sm")


def bone_properties_path() -> Path:
    return data_path("bone_remodeling.props")
