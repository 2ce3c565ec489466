"""Fixture loading and native oracle reconstruction.

A fixture file is a YAML document with three top-level keys::

    format_version: 1
    checksum: "<sha256 of the canonical payload dump>"
    fixture: {family, index, params, instance, seeds, validation, ...}

The ``instance`` block is a complete recipe: cost/value/noise matrices, the
discount and control strength, the input coupling, and the drift
construction (an orthogonal rotation field or a direction field).  This
module rebuilds the dynamics and the certified optimum from that recipe
alone — it does not call into the generator package.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np
import yaml

from .errors import BadFixture, ShapeMismatch

SUPPORTED_FORMAT = 1

_ANGLE_KINDS = ("constant", "state", "sin_state", "tanh_product", "tanh_diff")


def canonical_checksum(payload: dict) -> str:
    """SHA-256 of the canonical (sorted-keys) YAML dump of the payload."""
    blob = yaml.safe_dump(payload, sort_keys=True)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _sym(mat: np.ndarray) -> np.ndarray:
    return 0.5 * (mat + mat.T)


def _sym_power(mat: np.ndarray, power: float, what: str) -> np.ndarray:
    """Symmetric matrix power via eigendecomposition; rejects bad spectra."""
    vals, vecs = np.linalg.eigh(_sym(mat))
    scale = float(max(abs(vals[0]), abs(vals[-1]), 1e-300))
    if power < 0 and vals[0] <= 1e-12 * scale:
        raise BadFixture(f"{what} must be positive definite in this fixture")
    if vals[0] < -1e-10 * scale:
        raise BadFixture(f"{what} must be positive semidefinite in this fixture")
    if power >= 0:
        vals = np.clip(vals, 0.0, None)
    return (vecs * vals**power) @ vecs.T


def _square(data, what: str) -> np.ndarray:
    mat = np.asarray(data, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise BadFixture(f"{what} must be a square matrix")
    if not np.all(np.isfinite(mat)):
        raise BadFixture(f"{what} contains non-finite entries")
    return _sym(mat)


def _angle_value(term: dict, s: np.ndarray, p: float) -> float:
    kind = term["kind"]
    if kind not in _ANGLE_KINDS:
        raise BadFixture(f"unknown angle term kind {kind!r}")
    gain = float(term["gain"]) * (p if term["p_scaled"] else 1.0)
    scale = float(term["scale"])
    u, v = int(term["u"]), int(term["v"])
    if kind == "constant":
        return gain
    if kind == "state":
        return gain * s[u]
    if kind == "sin_state":
        return gain * math.sin(scale * s[u])
    if kind == "tanh_product":
        return gain * math.tanh(scale * s[u] * s[v])
    return gain * math.tanh(scale * (s[v] - s[u]))


@dataclass(frozen=True)
class FixtureModel:
    """A loaded fixture with everything needed to simulate and score it."""

    family: str
    index: int
    checksum: str
    params: dict
    seeds: dict
    domain_lo: np.ndarray
    domain_hi: np.ndarray
    validation_horizon: int
    difficulty: float

    Q: np.ndarray
    R: np.ndarray
    P: np.ndarray
    Sigma: np.ndarray
    gamma: float
    p: float
    drift_gain: float
    parameterization: str
    coupling: dict
    field: dict

    # ----- dimensions -------------------------------------------------

    @property
    def state_dim(self) -> int:
        return self.P.shape[0]

    @property
    def action_dim(self) -> int:
        return self.R.shape[0]

    # ----- recipe pieces ----------------------------------------------

    def input_matrix(self, s: np.ndarray) -> np.ndarray:
        """Coupling g(s), shape (n, m)."""
        if self.coupling["kind"] == "constant":
            return self._g_const
        out = np.zeros((self.state_dim, self.action_dim))
        for i in range(int(self.coupling["n_joints"])):
            out[2 * i + 1, i] = math.cos(s[2 * i])
        return out

    def rotation(self, s: np.ndarray) -> np.ndarray:
        """Orthogonal field S(s): left-to-right product of plane rotations."""
        out = np.eye(self.state_dim)
        for rot in self.field["rotations"]:
            theta = sum(_angle_value(t, s, self.p) for t in rot["terms"])
            c, sn = math.cos(theta), math.sin(theta)
            i, j = int(rot["axis_i"]), int(rot["axis_j"])
            givens = np.eye(self.state_dim)
            givens[i, i] = c
            givens[i, j] = -sn
            givens[j, i] = sn
            givens[j, j] = c
            out = out @ givens
        return out

    def hessian(self, s: np.ndarray) -> np.ndarray:
        """Action-space curvature B(s) = R + gamma p^2 g'Pg."""
        g = self.input_matrix(s)
        return _sym(self.R + self.gamma * self.p**2 * g.T @ self.P @ g)

    def metric(self, s: np.ndarray) -> np.ndarray:
        """Drift metric H(s) = gamma (P - gamma p^2 Pg B^{-1} g'P)."""
        g = self.input_matrix(s)
        pg = self.P @ g
        inner = pg @ np.linalg.solve(self.hessian(s), pg.T)
        return _sym(self.gamma * (self.P - self.gamma * self.p**2 * inner))

    def drift(self, s: np.ndarray) -> np.ndarray:
        """Drift f(s) rebuilt from the serialized recipe."""
        half = _sym_power(self.metric(s), -0.5, "drift metric")
        if self.parameterization == "metric-normalized":
            out = half @ self.rotation(s) @ (self._e_sqrt @ s)
            return self.drift_gain * out
        energy = float(s @ self._e_mat @ s)
        direction = self._direction(s)
        norm = float(np.linalg.norm(direction))
        if norm == 0.0:
            if energy > 0.0:
                raise BadFixture(
                    "direction field vanished at a state with positive energy"
                )
            return np.zeros(self.state_dim)
        return self.drift_gain * math.sqrt(max(energy, 0.0)) * (half @ (direction / norm))

    def _direction(self, s: np.ndarray) -> np.ndarray:
        kind = self.field["kind"]
        if kind == "state":
            return np.array(s, dtype=float)
        if kind == "constant":
            return np.asarray(self.field["vector"], dtype=float)
        if kind == "linear":
            return np.asarray(self.field["matrix"], dtype=float) @ s
        raise BadFixture(f"unknown direction field kind {kind!r}")

    # ----- oracle -----------------------------------------------------

    def oracle_action(self, s: np.ndarray) -> np.ndarray:
        """Certified optimal action a*(s) = -gamma p B^{-1} g'P f(s)."""
        s = self.check_state(s)
        g = self.input_matrix(s)
        rhs = self.gamma * self.p * (g.T @ (self.P @ self.drift(s)))
        return -np.linalg.solve(self.hessian(s), rhs)

    def oracle_value(self, s: np.ndarray) -> float:
        """Certified optimal cost-to-go V*(s) = s'Ps + b."""
        s = self.check_state(s)
        return float(s @ self.P @ s) + self.noise_offset

    def reward(self, s: np.ndarray, a: np.ndarray) -> float:
        """Per-step reward -(s'Qs + a'Ra)."""
        return -(float(s @ self.Q @ s) + float(a @ self.R @ a))

    def next_state(self, s: np.ndarray, a: np.ndarray, w: np.ndarray) -> np.ndarray:
        """One transition s' = f(s) + p g(s) a + w."""
        return self.drift(s) + self.p * (self.input_matrix(s) @ a) + w

    # ----- shape guards -----------------------------------------------

    def check_state(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float).reshape(-1)
        if s.shape != (self.state_dim,):
            raise ShapeMismatch(
                f"state has shape {s.shape}, fixture expects ({self.state_dim},)"
            )
        return s

    def check_action(self, a) -> np.ndarray:
        a = np.asarray(a, dtype=float).reshape(-1)
        if a.shape != (self.action_dim,):
            raise ShapeMismatch(
                f"action has shape {a.shape}, fixture expects ({self.action_dim},)"
            )
        return a

    # ----- cached derived pieces (plain attributes via __post_init__) --

    def __post_init__(self):
        object.__setattr__(self, "_e_mat", _sym(self.P - self.Q))
        object.__setattr__(self, "_e_sqrt", _sym_power(self._e_mat, 0.5, "P - Q"))
        if self.coupling["kind"] == "constant":
            g = np.asarray(self.coupling["matrix"], dtype=float)
            object.__setattr__(self, "_g_const", g)
        trace = float(np.trace(self.P @ self.Sigma))
        object.__setattr__(
            self, "noise_offset", self.gamma * trace / (1.0 - self.gamma)
        )


def _build_model(doc: dict, checksum: str) -> FixtureModel:
    payload = doc["fixture"]
    inst = payload["instance"]
    validation = payload["validation"]
    coupling = inst["coupling"]
    if coupling["kind"] not in ("constant", "arm_cos"):
        raise BadFixture(f"unknown coupling kind {coupling['kind']!r}")
    gamma = float(inst["gamma"])
    if not 0.0 < gamma < 1.0:
        raise BadFixture(f"discount must lie in (0, 1), got {gamma}")
    return FixtureModel(
        family=str(payload["family"]),
        index=int(payload["index"]),
        checksum=checksum,
        params=dict(payload["params"]),
        seeds={k: int(v) for k, v in payload["seeds"].items()},
        domain_lo=np.asarray(validation["domain_lo"], dtype=float),
        domain_hi=np.asarray(validation["domain_hi"], dtype=float),
        validation_horizon=int(validation["boundedness"]["horizon"]),
        difficulty=float(payload["difficulty"]),
        Q=_square(inst["Q"], "Q"),
        R=_square(inst["R"], "R"),
        P=_square(inst["P"], "P"),
        Sigma=_square(inst["Sigma"], "Sigma"),
        gamma=gamma,
        p=float(inst["p"]),
        drift_gain=float(inst["drift_gain"]),
        parameterization=str(inst["parameterization"]),
        coupling=coupling,
        field=dict(inst["field"]),
    )


def load_fixture(path: str) -> FixtureModel:
    """Read, checksum-verify, and reconstruct a fixture file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise BadFixture(f"could not read {path}: {exc}") from exc
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise BadFixture(f"{path} is not valid YAML: {exc}") from exc
    if (
        not isinstance(doc, dict)
        or "fixture" not in doc
        or "checksum" not in doc
        or "format_version" not in doc
    ):
        raise BadFixture(f"{path} does not look like a fixture file")
    version = doc["format_version"]
    if version != SUPPORTED_FORMAT:
        raise BadFixture(
            f"{path} has format version {version}, adapter supports {SUPPORTED_FORMAT}"
        )
    expected = canonical_checksum(doc["fixture"])
    if expected != doc["checksum"]:
        raise BadFixture(f"{path} failed its checksum: contents were altered")
    try:
        return _build_model(doc, str(doc["checksum"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise BadFixture(f"{path} is missing required fixture fields: {exc}") from exc
