"""Simulation: noise streams, initial-state schedules, policies, rollouts.

Common-random-numbers contract
------------------------------
Noise is generated counter-based so that any (trial, step) pair can be
reproduced in isolation, in any order, by any implementation:

* cipher: Philox4x64 keyed with the stream seed,
* counter for step ``k`` of trial ``t``: ``t * 2**128 + k * C`` where
  ``C = ceil(dim / 4)`` (each counter increment yields 4 words),
* the next ``dim`` raw 64-bit words ``w_j`` map to open-interval uniforms
  ``u_j = ((w_j >> 11) + 0.5) * 2**-53``,
* standard normals are ``z_j = ndtri(u_j)`` (inverse normal CDF),
* the noise vector is ``L @ z`` where ``L`` is the lower Cholesky factor of
  the covariance, or its symmetric PSD square root when the covariance is
  singular.

Initial-state schedules reuse the same word-to-uniform mapping with their own
seed at counter ``t * 2**128``.  Fetching steps ``0..T-1`` as one block equals
the per-step construction bit for bit.
"""

from __future__ import annotations

import json
import os
import select
import shlex
import subprocess
import time
from dataclasses import dataclass, field as dc_field
from functools import cached_property

import numpy as np
from scipy.special import ndtri

from .errors import (
    InvalidHorizon,
    IoFailure,
    LengthMismatch,
    NonFinite,
    NotPsd,
    PolicyFailure,
    ShapeMismatch,
)
from .linalg import spd_sqrt, symmetrize
from .qg import QGInstance, drift, optimal_action, reward, value

WIRE_VERSION = 1
DUMP_VERSION = 1
_TWO_POW_128 = 1 << 128


def _raw_uniforms(seed: int, counter: int, count: int) -> np.ndarray:
    """``count`` open-interval uniforms from Philox at the given counter."""
    bits = np.random.Philox(key=seed, counter=counter)
    words = np.random.Generator(bits).integers(
        0, 2**64, size=count, dtype=np.uint64, endpoint=False
    )
    return ((words >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


@dataclass(frozen=True, eq=False)
class NoiseStream:
    """Counter-based Gaussian noise with covariance ``sigma`` (see module docs)."""

    seed: int
    sigma: np.ndarray

    def __post_init__(self) -> None:
        sigma = np.asarray(self.sigma, dtype=float)
        if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
            raise ShapeMismatch("covariance must be a square matrix")
        object.__setattr__(self, "sigma", symmetrize(sigma))

    @property
    def dim(self) -> int:
        return self.sigma.shape[0]

    @property
    def increments_per_step(self) -> int:
        return -(-self.dim // 4)

    @cached_property
    def factor(self) -> np.ndarray:
        w = np.linalg.eigvalsh(self.sigma)
        scale = max(abs(w[0]), abs(w[-1]))
        if w[0] < -1e-12 * max(scale, 1e-300):
            raise NotPsd("noise covariance must be PSD")
        if scale == 0.0:
            return np.zeros_like(self.sigma)
        if w[0] > 1e-12 * scale:
            return np.linalg.cholesky(self.sigma)
        return spd_sqrt(self.sigma)

    @cached_property
    def is_degenerate(self) -> bool:
        return bool(np.all(self.factor == 0.0))

    def vector(self, trial: int, k: int) -> np.ndarray:
        """Noise vector for one (trial, step) pair."""
        if self.is_degenerate:
            return np.zeros(self.dim)
        counter = trial * _TWO_POW_128 + k * self.increments_per_step
        u = _raw_uniforms(self.seed, counter, self.dim)
        return self.factor @ ndtri(u)

    def block(self, trial: int, horizon: int) -> np.ndarray:
        """Noise for steps ``0..horizon-1`` of a trial, shape ``(horizon, dim)``."""
        if self.is_degenerate:
            return np.zeros((horizon, self.dim))
        per_step = 4 * self.increments_per_step
        u = _raw_uniforms(self.seed, trial * _TWO_POW_128, horizon * per_step)
        z = ndtri(u.reshape(horizon, per_step)[:, : self.dim])
        return z @ self.factor.T


@dataclass(frozen=True, eq=False)
class InitialStateSchedule:
    """Deterministic map from trial index to starting state.

    ``fixed`` always returns ``state``; ``random`` draws uniformly from the
    box ``[lo, hi]`` using the counter-based uniform contract with this
    schedule's own seed.
    """

    mode: str
    seed: int = 0
    state: np.ndarray | None = None
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.mode == "fixed":
            if self.state is None:
                raise ValueError("fixed schedule needs a state")
            object.__setattr__(
                self, "state", np.asarray(self.state, dtype=float).reshape(-1)
            )
        elif self.mode == "random":
            if self.lo is None or self.hi is None:
                raise ValueError("random schedule needs box bounds")
            lo = np.asarray(self.lo, dtype=float).reshape(-1)
            hi = np.asarray(self.hi, dtype=float).reshape(-1)
            if lo.shape != hi.shape:
                raise ShapeMismatch("box bounds must have matching shapes")
            if np.any(hi < lo):
                raise ValueError("box upper bounds must dominate lower bounds")
            object.__setattr__(self, "lo", lo)
            object.__setattr__(self, "hi", hi)
        else:
            raise ValueError(f"unknown schedule mode {self.mode!r}")

    @property
    def dim(self) -> int:
        if self.mode == "fixed":
            return self.state.shape[0]
        return self.lo.shape[0]

    def initial_state(self, trial: int) -> np.ndarray:
        if self.mode == "fixed":
            return self.state.copy()
        u = _raw_uniforms(self.seed, trial * _TWO_POW_128, self.dim)
        return self.lo + (self.hi - self.lo) * u

    def initial_states(self, trials: list[int] | np.ndarray) -> np.ndarray:
        return np.stack([self.initial_state(int(t)) for t in trials])


class BuiltinPolicy:
    """Base for in-process policies; ``act`` accepts batched states."""

    descriptor = "builtin"

    def reset(self, trial: int) -> None:
        return None

    def act(self, s: np.ndarray) -> np.ndarray:  # pragma: no cover - interface
        raise NotImplementedError

    def close(self) -> None:
        return None

    def __enter__(self) -> "BuiltinPolicy":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


class OraclePolicy(BuiltinPolicy):
    """Plays the certified optimal action."""

    descriptor = "oracle"

    def __init__(self, inst: QGInstance):
        self.inst = inst

    def act(self, s: np.ndarray) -> np.ndarray:
        return optimal_action(self.inst, s)


class ScaledOraclePolicy(BuiltinPolicy):
    """Plays ``kappa * a*(s)``: a controlled degradation of the oracle."""

    def __init__(self, inst: QGInstance, kappa: float):
        self.inst = inst
        self.kappa = float(kappa)
        self.descriptor = f"scaled:{self.kappa:g}"

    def act(self, s: np.ndarray) -> np.ndarray:
        return self.kappa * optimal_action(self.inst, s)


class ZeroPolicy(BuiltinPolicy):
    """Never actuates."""

    descriptor = "zero"

    def __init__(self, action_dim: int):
        self.action_dim = action_dim

    def act(self, s: np.ndarray) -> np.ndarray:
        return np.zeros(s.shape[:-1] + (self.action_dim,))


class LinearPolicy(BuiltinPolicy):
    """Plays ``gain @ s`` for a fixed gain matrix of shape (m, n)."""

    descriptor = "linear"

    def __init__(self, gain: np.ndarray):
        self.gain = np.asarray(gain, dtype=float)
        if self.gain.ndim != 2:
            raise ShapeMismatch("linear policy gain must be a matrix")

    def act(self, s: np.ndarray) -> np.ndarray:
        return np.einsum("mn,...n->...m", self.gain, s)


class ExternalPolicy:
    """Subprocess policy speaking line-delimited JSON on stdin/stdout.

    Request:  ``{"v": 1, "type": "act", "state": [...]}``
    Response: ``{"v": 1, "type": "action", "action": [...]}``
    Resets are one-way: ``{"v": 1, "type": "reset", "trial": t}``.

    Every malformed response, wrong shape, non-finite entry, process death or
    silence past the timeout raises :class:`PolicyFailure`.
    """

    def __init__(self, command: str, action_dim: int, timeout: float = 10.0):
        self.command = command
        self.action_dim = action_dim
        self.timeout = timeout
        self.descriptor = f"exec:{command}"
        self._buffer = b""
        try:
            self._proc = subprocess.Popen(
                shlex.split(command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
            )
        except OSError as exc:
            raise PolicyFailure(f"could not launch policy process: {exc}") from exc

    def _send(self, payload: dict) -> None:
        if self._proc.poll() is not None:
            raise PolicyFailure("policy process exited")
        try:
            self._proc.stdin.write((json.dumps(payload) + "\n").encode())
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise PolicyFailure(f"could not write to policy process: {exc}") from exc

    def _read_line(self) -> bytes:
        fd = self._proc.stdout.fileno()
        deadline = time.monotonic() + self.timeout
        while b"\n" not in self._buffer:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise PolicyFailure(
                    f"policy gave no response within {self.timeout} seconds"
                )
            ready, _, _ = select.select([fd], [], [], remaining)
            if not ready:
                continue
            chunk = os.read(fd, 65536)
            if not chunk:
                raise PolicyFailure("policy process closed its output")
            self._buffer += chunk
        line, _, self._buffer = self._buffer.partition(b"\n")
        return line

    def reset(self, trial: int) -> None:
        self._send({"v": WIRE_VERSION, "type": "reset", "trial": int(trial)})

    def act(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if s.ndim != 1:
            raise ShapeMismatch("external policies act on one state at a time")
        self._send({"v": WIRE_VERSION, "type": "act", "state": s.tolist()})
        line = self._read_line()
        try:
            msg = json.loads(line)
        except json.JSONDecodeError as exc:
            raise PolicyFailure(f"policy sent malformed JSON: {line[:200]!r}") from exc
        if not isinstance(msg, dict) or msg.get("v") != WIRE_VERSION:
            raise PolicyFailure(f"policy sent unsupported message: {msg!r}")
        if msg.get("type") != "action":
            raise PolicyFailure(f"expected an action message, got {msg!r}")
        action = np.asarray(msg.get("action"), dtype=float)
        if action.shape != (self.action_dim,):
            raise PolicyFailure(
                f"action has shape {action.shape}, expected ({self.action_dim},)"
            )
        if not np.all(np.isfinite(action)):
            raise PolicyFailure("action has non-finite entries")
        return action

    def close(self) -> None:
        if self._proc.poll() is None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=2.0)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()

    def __enter__(self) -> "ExternalPolicy":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def parse_policy_spec(spec: str, inst: QGInstance) -> BuiltinPolicy | ExternalPolicy:
    """Build a policy from a CLI-style descriptor.

    ``oracle`` | ``zero`` | ``scaled:<kappa>`` | ``linear:<json file>`` |
    ``exec:<command>``.
    """
    if spec == "oracle":
        return OraclePolicy(inst)
    if spec == "zero":
        return ZeroPolicy(inst.m)
    if spec.startswith("scaled:"):
        return ScaledOraclePolicy(inst, float(spec.split(":", 1)[1]))
    if spec.startswith("linear:"):
        path = spec.split(":", 1)[1]
        try:
            with open(path, "r", encoding="utf-8") as fh:
                gain = json.load(fh)
        except OSError as exc:
            raise IoFailure(f"could not read gain file {path}: {exc}") from exc
        return LinearPolicy(np.asarray(gain, dtype=float))
    if spec.startswith("exec:"):
        return ExternalPolicy(spec.split(":", 1)[1], inst.m)
    raise ValueError(f"unknown policy spec {spec!r}")


def step(
    inst: QGInstance, s: np.ndarray, a: np.ndarray, w: np.ndarray
) -> np.ndarray:
    """One transition ``s' = f(s) + p g(s) a + w`` (batched)."""
    s = np.asarray(s, dtype=float)
    a = np.asarray(a, dtype=float)
    g = inst.coupling.evaluate(s)
    nxt = drift(inst, s) + inst.p * np.einsum("...nm,...m->...n", g, a) + w
    if not np.all(np.isfinite(nxt)):
        raise NonFinite("state diverged to non-finite values")
    return nxt


@dataclass(frozen=True, eq=False)
class Trajectory:
    """One rollout: ``horizon`` transitions plus the visited states."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    gamma: float
    trial: int
    policy: str
    meta: dict = dc_field(default_factory=dict)

    @property
    def horizon(self) -> int:
        return self.actions.shape[0]

    @cached_property
    def discounted_return(self) -> float:
        weights = self.gamma ** np.arange(self.horizon)
        return float(weights @ self.rewards)


@dataclass(frozen=True, eq=False)
class PairedTrajectory:
    """A rollout plus the oracle's counterfactual actions at the visited states."""

    trajectory: Trajectory
    oracle_actions: np.ndarray
    oracle_rewards: np.ndarray


def _check_horizon(horizon: int) -> int:
    if not isinstance(horizon, (int, np.integer)) or horizon < 1:
        raise InvalidHorizon(f"horizon must be a positive integer, got {horizon!r}")
    return int(horizon)


def _clip_action(a: np.ndarray, bound: float | None) -> np.ndarray:
    if bound is None:
        return a
    return np.clip(a, -bound, bound)


def rollout(
    inst: QGInstance,
    policy,
    schedule: InitialStateSchedule,
    noise: NoiseStream,
    trial: int,
    horizon: int,
    action_bound: float | None = None,
) -> Trajectory:
    """Roll one trial; states, actions and per-step rewards are recorded."""
    horizon = _check_horizon(horizon)
    policy.reset(trial)
    s = schedule.initial_state(trial)
    block = noise.block(trial, horizon)
    states = np.empty((horizon + 1, inst.n))
    actions = np.empty((horizon, inst.m))
    rewards = np.empty(horizon)
    states[0] = s
    for k in range(horizon):
        a = _clip_action(np.asarray(policy.act(s), dtype=float), action_bound)
        rewards[k] = reward(inst, s, a)
        s = step(inst, s, a, block[k])
        actions[k] = a
        states[k + 1] = s
    return Trajectory(
        states=states,
        actions=actions,
        rewards=rewards,
        gamma=inst.gamma,
        trial=trial,
        policy=getattr(policy, "descriptor", "unknown"),
        meta={"noise_seed": noise.seed, "schedule_seed": schedule.seed},
    )


def paired_rollout(
    inst: QGInstance,
    policy,
    schedule: InitialStateSchedule,
    noise: NoiseStream,
    trial: int,
    horizon: int,
    action_bound: float | None = None,
) -> PairedTrajectory:
    """Rollout under ``policy`` plus the oracle action at every visited state.

    When ``policy`` is the oracle itself the counterfactual actions coincide
    bit for bit, so downstream per-step gaps are exactly zero.
    """
    horizon = _check_horizon(horizon)
    policy.reset(trial)
    s = schedule.initial_state(trial)
    block = noise.block(trial, horizon)
    states = np.empty((horizon + 1, inst.n))
    actions = np.empty((horizon, inst.m))
    rewards = np.empty(horizon)
    oracle_actions = np.empty((horizon, inst.m))
    oracle_rewards = np.empty(horizon)
    states[0] = s
    for k in range(horizon):
        a = _clip_action(np.asarray(policy.act(s), dtype=float), action_bound)
        a_star = optimal_action(inst, s)
        rewards[k] = reward(inst, s, a)
        oracle_rewards[k] = reward(inst, s, a_star)
        s = step(inst, s, a, block[k])
        actions[k] = a
        oracle_actions[k] = a_star
        states[k + 1] = s
    traj = Trajectory(
        states=states,
        actions=actions,
        rewards=rewards,
        gamma=inst.gamma,
        trial=trial,
        policy=getattr(policy, "descriptor", "unknown"),
        meta={"noise_seed": noise.seed, "schedule_seed": schedule.seed},
    )
    return PairedTrajectory(
        trajectory=traj, oracle_actions=oracle_actions, oracle_rewards=oracle_rewards
    )


@dataclass(frozen=True, eq=False)
class BatchRollout:
    """Vectorized rollout summary across trials."""

    returns: np.ndarray
    max_state_norms: np.ndarray
    final_states: np.ndarray


def rollout_returns(
    inst: QGInstance,
    policy: BuiltinPolicy,
    schedule: InitialStateSchedule,
    noise: NoiseStream,
    trials: list[int] | np.ndarray,
    horizon: int,
    action_bound: float | None = None,
) -> BatchRollout:
    """Discounted returns for many trials at once (in-process policies only)."""
    horizon = _check_horizon(horizon)
    trials = [int(t) for t in trials]
    s = schedule.initial_states(trials)
    blocks = np.stack([noise.block(t, horizon) for t in trials])
    returns = np.zeros(len(trials))
    max_norms = np.linalg.norm(s, axis=-1)
    disc = 1.0
    for k in range(horizon):
        a = _clip_action(np.asarray(policy.act(s), dtype=float), action_bound)
        returns += disc * reward(inst, s, a)
        s = step(inst, s, a, blocks[:, k, :])
        np.maximum(max_norms, np.linalg.norm(s, axis=-1), out=max_norms)
        disc *= inst.gamma
    return BatchRollout(returns=returns, max_state_norms=max_norms, final_states=s)


def _open_for_write(path: str):
    try:
        return open(path, "w", encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"could not open {path} for writing: {exc}") from exc


def dump_trajectory(
    traj: Trajectory,
    path: str,
    oracle_actions: np.ndarray | None = None,
    fixture_checksum: str | None = None,
    inst: QGInstance | None = None,
) -> None:
    """Write a line-delimited JSON trajectory dump.

    Each step line carries the visited state, action taken and reward.  When
    the instance is supplied, the oracle's value at each visited state is
    recorded too; explicit ``oracle_actions`` (from a paired rollout) ride
    along for cross-implementation checks.
    """
    oracle_values = None
    if inst is not None:
        oracle_values = value(inst, traj.states)
    with _open_for_write(path) as fh:
        header = {
            "type": "header",
            "version": DUMP_VERSION,
            "kind": "trajectory",
            "trial": traj.trial,
            "horizon": traj.horizon,
            "gamma": traj.gamma,
            "state_dim": traj.states.shape[1],
            "action_dim": traj.actions.shape[1],
            "policy": traj.policy,
            "fixture_checksum": fixture_checksum,
            "seeds": {k: v for k, v in sorted(traj.meta.items())},
            "discounted_return": traj.discounted_return,
        }
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for k in range(traj.horizon):
            row = {
                "type": "step",
                "k": k,
                "state": traj.states[k].tolist(),
                "action": traj.actions[k].tolist(),
                "reward": float(traj.rewards[k]),
            }
            if oracle_actions is not None:
                row["oracle_action"] = np.asarray(oracle_actions[k]).tolist()
            if oracle_values is not None:
                row["oracle_value"] = float(oracle_values[k])
            fh.write(json.dumps(row, sort_keys=True) + "\n")
        final = {
            "type": "final",
            "k": traj.horizon,
            "state": traj.states[traj.horizon].tolist(),
        }
        if oracle_values is not None:
            final["oracle_value"] = float(oracle_values[traj.horizon])
        fh.write(json.dumps(final, sort_keys=True) + "\n")


def read_trajectory_dump(path: str) -> dict:
    """Parse a trajectory dump back into arrays (inverse of dump_trajectory)."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = [json.loads(line) for line in fh if line.strip()]
    except OSError as exc:
        raise IoFailure(f"could not read {path}: {exc}") from exc
    if not lines or lines[0].get("type") != "header":
        raise IoFailure(f"{path} is not a trajectory dump")
    header = lines[0]
    steps = [row for row in lines[1:] if row.get("type") == "step"]
    final = [row for row in lines[1:] if row.get("type") == "final"]
    state_rows = [row["state"] for row in steps]
    if final:
        state_rows.append(final[0]["state"])
    out = {
        "header": header,
        "states": np.array(state_rows),
        "actions": np.array([row["action"] for row in steps]),
        "rewards": np.array([row["reward"] for row in steps]),
    }
    if steps and "oracle_action" in steps[0]:
        out["oracle_actions"] = np.array([row["oracle_action"] for row in steps])
    if steps and "oracle_value" in steps[0]:
        values = [row["oracle_value"] for row in steps]
        if final and "oracle_value" in final[0]:
            values.append(final[0]["oracle_value"])
        out["oracle_values"] = np.array(values)
    return out


def dump_noise(
    noise: NoiseStream, trials: list[int], horizon: int, path: str
) -> None:
    """Write the exact noise vectors for the given trials as JSON lines."""
    horizon = _check_horizon(horizon)
    with _open_for_write(path) as fh:
        header = {
            "type": "header",
            "version": DUMP_VERSION,
            "kind": "noise",
            "seed": int(noise.seed),
            "dim": noise.dim,
            "trials": [int(t) for t in trials],
            "horizon": horizon,
        }
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for t in trials:
            block = noise.block(int(t), horizon)
            for k in range(horizon):
                row = {
                    "type": "noise",
                    "trial": int(t),
                    "k": k,
                    "w": block[k].tolist(),
                }
                fh.write(json.dumps(row, sort_keys=True) + "\n")


def read_noise_dump(path: str) -> dict:
    """Parse a noise dump into ``{trial: (horizon, dim) array}`` plus header."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = [json.loads(line) for line in fh if line.strip()]
    except OSError as exc:
        raise IoFailure(f"could not read {path}: {exc}") from exc
    if not lines or lines[0].get("type") != "header" or lines[0].get("kind") != "noise":
        raise IoFailure(f"{path} is not a noise dump")
    header = lines[0]
    horizon = header["horizon"]
    blocks: dict[int, np.ndarray] = {}
    for t in header["trials"]:
        blocks[int(t)] = np.empty((horizon, header["dim"]))
    for row in lines[1:]:
        if row.get("type") != "noise":
            continue
        blocks[int(row["trial"])][int(row["k"])] = row["w"]
    return {"header": header, "blocks": blocks}


def regret_gaps(paired: PairedTrajectory) -> np.ndarray:
    """Per-step control-cost gaps ``rho(a*(s_k)) - rho(pi(s_k))`` at shared states.

    Equal to ``reward_pi - reward_oracle`` stepwise since the state cost
    cancels at a shared state.
    """
    return paired.trajectory.rewards - paired.oracle_rewards


def discounted_regret(paired: PairedTrajectory, gamma: float, horizon: int) -> float:
    """Discounted sum of the per-step gaps over ``k < horizon``."""
    horizon = _check_horizon(horizon)
    gaps = regret_gaps(paired)
    if horizon > gaps.shape[0]:
        raise LengthMismatch(
            f"horizon {horizon} exceeds recorded steps {gaps.shape[0]}"
        )
    weights = gamma ** np.arange(horizon)
    return float(weights @ gaps[:horizon])
