"""Reset/step environment over a fixture file.

``FixtureEnv`` exposes a benchmark fixture through the conventional episodic
interface: ``reset`` returns a start state drawn from the same schedule the
generator suite uses, ``step`` applies the fixture dynamics with addressable
noise and returns the five-tuple ``(observation, reward, terminated,
truncated, info)``.  ``info`` carries the certified optimal action and value at the
state the agent just acted from, so training curves can be plotted against
the true optimum without extra machinery.
"""
from __future__ import annotations

import numpy as np

from .errors import BadFixture, ShapeMismatch
from .fixture import FixtureModel, load_fixture
from .noise import NoiseChannel, _uniforms, load_noise_dump

_TRIAL_STRIDE = 1 << 128


class FixtureEnv:
    """One environment instance per fixture; no shared state across copies.

    Parameters
    ----------
    fixture : path of a fixture YAML file, or an already-loaded FixtureModel
    horizon : episode length before truncation (default: the fixture's
        validation horizon)
    noise_seed, init_seed : stream seeds; the defaults (1, 2) match the
        generator suite's evaluation and rollout defaults
    action_bound : optional symmetric clip applied to every action
    initial_state : optional fixed start state used for every reset instead
        of the seeded random schedule
    noise_dump : optional path of a noise dump file; when given, episodes
        replay the dumped vectors exactly instead of generating natively
    """

    def __init__(
        self,
        fixture,
        horizon: int | None = None,
        noise_seed: int = 1,
        init_seed: int = 2,
        action_bound: float | None = None,
        initial_state=None,
        noise_dump: str | None = None,
    ) -> None:
        self.model = (
            fixture if isinstance(fixture, FixtureModel) else load_fixture(fixture)
        )
        self.horizon = int(
            self.model.validation_horizon if horizon is None else horizon
        )
        if self.horizon < 1:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        self.noise_seed = int(noise_seed)
        self.init_seed = int(init_seed)
        self.action_bound = None if action_bound is None else float(action_bound)
        self.fixed_start = (
            None if initial_state is None else self.model.check_state(initial_state)
        )
        self._replay = None
        if noise_dump is not None:
            dump = load_noise_dump(noise_dump)
            if dump["header"]["dim"] != self.model.state_dim:
                raise BadFixture(
                    "noise dump dimension does not match the fixture state"
                )
            self._replay = dump
        else:
            self._noise = NoiseChannel(self.noise_seed, self.model.Sigma)
        self._next_trial = 0
        self._state: np.ndarray | None = None
        self._trial = 0
        self._k = 0
        self._done = False

    # ----- dimensions ---------------------------------------------------

    @property
    def observation_dim(self) -> int:
        return self.model.state_dim

    @property
    def action_dim(self) -> int:
        return self.model.action_dim

    # ----- schedule -----------------------------------------------------

    def _start_state(self, trial: int) -> np.ndarray:
        if self.fixed_start is not None:
            return self.fixed_start.copy()
        lo, hi = self.model.domain_lo, self.model.domain_hi
        u = _uniforms(self.init_seed, trial * _TRIAL_STRIDE, lo.size)
        return lo + (hi - lo) * u

    def _noise_vector(self, trial: int, k: int) -> np.ndarray:
        if self._replay is None:
            return self._noise.vector(trial, k)
        blocks = self._replay["blocks"]
        if trial not in blocks:
            raise BadFixture(f"noise dump has no trial {trial}")
        block = blocks[trial]
        if k >= block.shape[0]:
            raise BadFixture(
                f"noise dump covers {block.shape[0]} steps, step {k} requested"
            )
        return block[k]

    # ----- episodic interface -------------------------------------------

    def reset(self, trial: int | None = None) -> np.ndarray:
        """Start an episode and return its initial observation.

        Passing ``trial`` pins the episode to that schedule slot; leaving it
        unset consumes the next slot in order (0, 1, 2, ... or continuing
        after the last pinned slot), so repeated unseeded resets walk the
        schedule deterministically.
        """
        if trial is None:
            trial = self._next_trial
        self._trial = int(trial)
        self._next_trial = self._trial + 1
        self._k = 0
        self._done = False
        self._state = self._start_state(self._trial)
        return self._state.copy()

    def sync_state(self, state) -> None:
        """Overwrite the current state without touching trial/step counters.

        Cross-check hook: replay harnesses use it to re-anchor the episode on
        a reference trajectory between steps, so per-step transition parity
        can be measured without chaotic error amplification.  Not part of the
        training loop.
        """
        if self._state is None:
            raise RuntimeError("call reset() before sync_state()")
        self._state = self.model.check_state(state).copy()

    def step(self, action):
        """Apply an action; returns (obs, reward, terminated, truncated, info)."""
        if self._state is None:
            raise RuntimeError("call reset() before step()")
        if self._done:
            raise RuntimeError("episode is over; call reset()")
        a = self.model.check_action(action)
        if self.action_bound is not None:
            a = np.clip(a, -self.action_bound, self.action_bound)
        s = self._state
        info = {
            "trial": self._trial,
            "step": self._k,
            "oracle_action": self.model.oracle_action(s),
            "oracle_value": self.model.oracle_value(s),
        }
        reward = self.model.reward(s, a)
        w = self._noise_vector(self._trial, self._k)
        nxt = self.model.next_state(s, a, w)
        self._k += 1
        self._state = nxt
        truncated = self._k >= self.horizon
        self._done = truncated
        return nxt.copy(), reward, False, truncated, info

    # ----- oracle accessors ----------------------------------------------

    def oracle_policy(self, state) -> np.ndarray:
        """Certified optimal action at an arbitrary state."""
        return self.model.oracle_action(state)

    def oracle_value(self, state) -> float:
        """Certified optimal cost-to-go at an arbitrary state."""
        return self.model.oracle_value(state)
