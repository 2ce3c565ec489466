"""Shared material for the adapter tests.

Everything the adapter consumes is produced here through the generator
suite's *command line* — fixture YAML files, a noise dump, and trajectory
dumps — never through its Python API.
"""
from __future__ import annotations

import pathlib
import subprocess
import sys

import pytest

GEN_SEED = 424242
ROLLOUT_TRIAL = 3
ROLLOUT_HORIZON = 100
ROLLOUT_POLICY = "scaled:0.8"


def _run_cli(*args: str) -> None:
    proc = subprocess.run(
        [sys.executable, "-m", "qgbench", *args],
        capture_output=True,
        text=True,
    )
    if proc.returncode != 0:
        raise RuntimeError(
            f"qgbench {' '.join(args)} failed ({proc.returncode}):\n{proc.stderr}"
        )


@pytest.fixture(scope="session")
def shared(tmp_path_factory) -> dict:
    """Five fixtures plus per-fixture trajectory and noise dumps."""
    root = tmp_path_factory.mktemp("shared")
    fixture_dir = root / "fixtures"
    _run_cli(
        "generate",
        "--family", "mixed",
        "--count", "5",
        "--seed", str(GEN_SEED),
        "--out", str(fixture_dir),
        "--grid-size", "48",
        "--horizon", "64",
        "--rollouts", "2",
    )
    fixtures = sorted(fixture_dir.glob("*.yaml"), key=lambda p: p.name)
    assert len(fixtures) == 5
    dumps = []
    for i, path in enumerate(fixtures):
        traj = root / f"traj_{i}.jsonl"
        noise = root / f"noise_{i}.jsonl"
        _run_cli(
            "rollout", str(path),
            "--policy", ROLLOUT_POLICY,
            "--trial", str(ROLLOUT_TRIAL),
            "--horizon", str(ROLLOUT_HORIZON),
            "--out", str(traj),
            "--noise-out", str(noise),
        )
        dumps.append({"fixture": path, "trajectory": traj, "noise": noise})
    return {"root": root, "fixtures": fixtures, "dumps": dumps}


@pytest.fixture(scope="session")
def arm_fixture(shared) -> pathlib.Path:
    for path in shared["fixtures"]:
        if path.name.startswith("arm_"):
            return path
    raise RuntimeError("no arm fixture generated")


@pytest.fixture(scope="session")
def nvdex_fixture(shared) -> pathlib.Path:
    for path in shared["fixtures"]:
        if path.name.startswith("nvdex_"):
            return path
    raise RuntimeError("no vehicle fixture generated")
