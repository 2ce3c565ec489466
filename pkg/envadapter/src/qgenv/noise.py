"""Counter-based noise, rebuilt from the published contract.

The simulator's randomness is addressable: trial ``t``, step ``k`` of a
stream with seed ``s`` and dimension ``d`` is produced by

- Philox4x64 keyed by ``s`` with the 256-bit counter set to
  ``t * 2**128 + k * C`` where ``C = ceil(d / 4)``,
- 64-bit words mapped to open-interval uniforms ``((w >> 11) + 0.5) * 2**-53``,
- uniforms mapped to normals through the inverse CDF,
- normals pushed through a factor ``L`` of the covariance (Cholesky when
  positive definite, the symmetric PSD square root otherwise): ``w = L z``.

Reimplementing that contract here gives statistical parity with the
generator suite in normal runs and — because the construction is exact —
bit parity, which the cross-check tests pin against dumped noise files.
For replay-style verification the JSON-lines dump files written by the
``rollout``/``dump-noise`` commands can be consumed directly.
"""
from __future__ import annotations

import json

import numpy as np
from scipy.special import ndtri

from .errors import BadFixture, ShapeMismatch

_TRIAL_STRIDE = 1 << 128


def _uniforms(seed: int, counter: int, count: int) -> np.ndarray:
    bits = np.random.Philox(key=seed, counter=counter)
    words = np.random.Generator(bits).integers(
        0, 2**64, size=count, dtype=np.uint64, endpoint=False
    )
    return ((words >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


class NoiseChannel:
    """Addressable Gaussian noise with a fixed covariance."""

    def __init__(self, seed: int, sigma) -> None:
        sigma = np.asarray(sigma, dtype=float)
        if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
            raise ShapeMismatch("covariance must be a square matrix")
        self.seed = int(seed)
        self.sigma = 0.5 * (sigma + sigma.T)
        self.dim = self.sigma.shape[0]
        self.words_per_step = -(-self.dim // 4)
        self.factor = self._factor()
        self.degenerate = bool(np.all(self.factor == 0.0))

    def _factor(self) -> np.ndarray:
        vals = np.linalg.eigvalsh(self.sigma)
        scale = max(abs(vals[0]), abs(vals[-1]))
        if vals[0] < -1e-12 * max(scale, 1e-300):
            raise BadFixture("noise covariance must be PSD")
        if scale == 0.0:
            return np.zeros_like(self.sigma)
        if vals[0] > 1e-12 * scale:
            return np.linalg.cholesky(self.sigma)
        w, vecs = np.linalg.eigh(self.sigma)
        return (vecs * np.sqrt(np.clip(w, 0.0, None))) @ vecs.T

    def vector(self, trial: int, k: int) -> np.ndarray:
        """The noise vector for one (trial, step) address."""
        if self.degenerate:
            return np.zeros(self.dim)
        counter = trial * _TRIAL_STRIDE + k * self.words_per_step
        return self.factor @ ndtri(_uniforms(self.seed, counter, self.dim))

    def block(self, trial: int, horizon: int) -> np.ndarray:
        """Noise for steps 0..horizon-1, shape (horizon, dim); bitwise equal
        to reading the per-step vectors one by one."""
        if self.degenerate:
            return np.zeros((horizon, self.dim))
        per_step = 4 * self.words_per_step
        u = _uniforms(self.seed, trial * _TRIAL_STRIDE, horizon * per_step)
        z = ndtri(u.reshape(horizon, per_step)[:, : self.dim])
        return z @ self.factor.T


def _read_json_lines(path: str, kind: str) -> list[dict]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            rows = [json.loads(line) for line in fh if line.strip()]
    except OSError as exc:
        raise BadFixture(f"could not read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise BadFixture(f"{path} is not a JSON-lines dump: {exc}") from exc
    if not rows or rows[0].get("type") != "header" or rows[0].get("kind") != kind:
        raise BadFixture(f"{path} is not a {kind} dump")
    return rows


def load_noise_dump(path: str) -> dict:
    """Parse a noise dump into {"header": ..., "blocks": {trial: array}}."""
    rows = _read_json_lines(path, "noise")
    header = rows[0]
    blocks = {
        int(t): np.full((int(header["horizon"]), int(header["dim"])), np.nan)
        for t in header["trials"]
    }
    for row in rows[1:]:
        if row.get("type") != "noise":
            continue
        blocks[int(row["trial"])][int(row["k"])] = row["w"]
    for t, block in blocks.items():
        if not np.all(np.isfinite(block)):
            raise BadFixture(f"{path} is missing noise rows for trial {t}")
    return {"header": header, "blocks": blocks}


def load_trajectory_dump(path: str) -> dict:
    """Parse a trajectory dump into arrays keyed the way the header names them."""
    rows = _read_json_lines(path, "trajectory")
    header = rows[0]
    steps = [r for r in rows[1:] if r.get("type") == "step"]
    states = [r["state"] for r in steps]
    final = [r for r in rows[1:] if r.get("type") == "final"]
    if final:
        states.append(final[0]["state"])
    out = {
        "header": header,
        "states": np.asarray(states, dtype=float),
        "actions": np.asarray([r["action"] for r in steps], dtype=float),
        "rewards": np.asarray([r["reward"] for r in steps], dtype=float),
    }
    if steps and "oracle_action" in steps[0]:
        out["oracle_actions"] = np.asarray(
            [r["oracle_action"] for r in steps], dtype=float
        )
    if steps and "oracle_value" in steps[0]:
        values = [r["oracle_value"] for r in steps]
        if final and "oracle_value" in final[0]:
            values.append(final[0]["oracle_value"])
        out["oracle_values"] = np.asarray(values, dtype=float)
    return out
