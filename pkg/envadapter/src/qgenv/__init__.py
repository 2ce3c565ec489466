"""RL environment adapter for qgbench fixture files."""

from .env import FixtureEnv
from .errors import BadFixture, QgEnvError, ShapeMismatch
from .fixture import FixtureModel, canonical_checksum, load_fixture
from .noise import NoiseChannel, load_noise_dump, load_trajectory_dump

__all__ = [
    "BadFixture",
    "FixtureEnv",
    "FixtureModel",
    "NoiseChannel",
    "QgEnvError",
    "ShapeMismatch",
    "canonical_checksum",
    "load_fixture",
    "load_noise_dump",
    "load_trajectory_dump",
]
