from __future__ import annotations

import json
import pathlib

import numpy as np
import pytest

import support
from qgbench.errors import (
    InvalidHorizon,
    IoFailure,
    LengthMismatch,
    NonFinite,
    NotPsd,
    PolicyFailure,
    ShapeMismatch,
)
from qgbench.qg import control_cost, optimal_action, reward, value
from qgbench.sim import (
    ExternalPolicy,
    InitialStateSchedule,
    LinearPolicy,
    NoiseStream,
    OraclePolicy,
    ScaledOraclePolicy,
    ZeroPolicy,
    discounted_regret,
    dump_noise,
    dump_trajectory,
    paired_rollout,
    parse_policy_spec,
    read_noise_dump,
    read_trajectory_dump,
    regret_gaps,
    rollout,
    rollout_returns,
    step,
)

STUB = str(pathlib.Path(__file__).parent / "helpers" / "policy_stub.py")

# Frozen reference draws for the counter-based noise contract, derived from
# the documented construction (Philox4x64 keyed by the seed at counter
# trial * 2**128 + k * ceil(dim/4); u = ((word >> 11) + 0.5) * 2**-53;
# z = ndtri(u)).  Any implementation of the contract must reproduce these
# bit for bit.
Z_SEED123_T2_K5_DIM3 = np.array(
    [1.4006886639097833, 0.3609966136938204, 2.2048861981993513]
)
Z_SEED123_T0_K0_DIM3 = np.array(
    [0.042638728124941266, -0.9009766014754629, -0.7966152309922583]
)
Z_SEED7_T1_K3_DIM5 = np.array(
    [
        1.478079070427437,
        0.8533437280842884,
        0.7314122883623059,
        1.3249098075587034,
        0.25426650950413127,
    ]
)
U_SEED11_T4_DIM2 = np.array([0.4094227247835002, 0.9263148894501378])


class TestNoiseContract:
    def test_frozen_unit_covariance_draws(self):
        stream = NoiseStream(seed=123, sigma=np.eye(3))
        assert np.array_equal(stream.vector(2, 5), Z_SEED123_T2_K5_DIM3)
        assert np.array_equal(stream.vector(0, 0), Z_SEED123_T0_K0_DIM3)

    def test_frozen_draw_wide_state(self):
        # dim 5 consumes two counter increments per step
        stream = NoiseStream(seed=7, sigma=np.eye(5))
        assert stream.increments_per_step == 2
        assert np.array_equal(stream.vector(1, 3), Z_SEED7_T1_K3_DIM5)

    def test_block_matches_per_step(self):
        stream = NoiseStream(seed=9, sigma=np.diag([1.0, 2.0, 0.5]))
        block = stream.block(3, 9)
        assert block.shape == (9, 3)
        for k in range(9):
            assert np.array_equal(block[k], stream.vector(3, k))

    def test_trials_are_separated(self):
        stream = NoiseStream(seed=5, sigma=np.eye(2))
        assert not np.array_equal(stream.vector(0, 0), stream.vector(1, 0))
        # and far-apart steps of one trial never collide with the next trial
        assert not np.array_equal(stream.vector(0, 10**6), stream.vector(1, 0))

    def test_covariance_factor_applied(self):
        sigma = np.array([[4.0, 1.0], [1.0, 2.0]])
        stream = NoiseStream(seed=21, sigma=sigma)
        chol = np.linalg.cholesky(sigma)
        unit = NoiseStream(seed=21, sigma=np.eye(2))
        z = unit.vector(0, 0)
        assert np.allclose(stream.vector(0, 0), chol @ z, atol=1e-15)

    def test_singular_covariance_uses_symmetric_root(self):
        # rank-1 covariance forces both coordinates equal
        stream = NoiseStream(seed=3, sigma=np.array([[1.0, 1.0], [1.0, 1.0]]))
        block = stream.block(0, 50)
        assert np.allclose(block[:, 0], block[:, 1], atol=1e-12)

    def test_zero_covariance_degenerate(self):
        stream = NoiseStream(seed=0, sigma=np.zeros((3, 3)))
        assert stream.is_degenerate
        assert np.array_equal(stream.vector(0, 0), np.zeros(3))
        assert np.array_equal(stream.block(2, 4), np.zeros((4, 3)))

    def test_covariance_validation(self):
        with pytest.raises(NotPsd):
            NoiseStream(seed=0, sigma=np.diag([1.0, -1.0])).factor
        with pytest.raises(ShapeMismatch):
            NoiseStream(seed=0, sigma=np.ones((2, 3)))

    def test_marginal_statistics(self):
        sigma = np.diag([2.0, 0.5])
        stream = NoiseStream(seed=17, sigma=sigma)
        draws = stream.block(0, 40_000)
        assert np.allclose(draws.mean(axis=0), 0.0, atol=0.05)
        cov = np.cov(draws.T)
        assert np.allclose(cov, sigma, atol=0.06)

    def test_increments_per_step_table(self):
        for dim, expected in ((1, 1), (3, 1), (4, 1), (5, 2), (9, 3)):
            stream = NoiseStream(seed=0, sigma=np.eye(dim))
            assert stream.increments_per_step == expected


class TestInitialStateSchedule:
    def test_fixed_returns_copies(self):
        sched = InitialStateSchedule(mode="fixed", state=np.array([1.0, 2.0]))
        out = sched.initial_state(0)
        out[0] = 99.0
        assert sched.initial_state(5)[0] == 1.0
        assert sched.dim == 2

    def test_random_frozen_draw(self):
        lo = np.array([-1.0, -1.0])
        hi = np.array([1.0, 3.0])
        sched = InitialStateSchedule(mode="random", seed=11, lo=lo, hi=hi)
        expected = lo + (hi - lo) * U_SEED11_T4_DIM2
        assert np.allclose(sched.initial_state(4), expected, atol=1e-15)

    def test_random_within_box_and_deterministic(self):
        sched = InitialStateSchedule(
            mode="random", seed=2, lo=np.array([-2.0]), hi=np.array([0.5])
        )
        states = sched.initial_states(range(100))
        assert states.shape == (100, 1)
        assert np.all(states >= -2.0) and np.all(states <= 0.5)
        again = sched.initial_states(range(100))
        assert np.array_equal(states, again)

    def test_validation(self):
        with pytest.raises(ValueError):
            InitialStateSchedule(mode="fixed")
        with pytest.raises(ValueError):
            InitialStateSchedule(mode="random", lo=np.zeros(2))
        with pytest.raises(ValueError):
            InitialStateSchedule(
                mode="random", lo=np.array([1.0]), hi=np.array([0.0])
            )
        with pytest.raises(ShapeMismatch):
            InitialStateSchedule(
                mode="random", lo=np.zeros(2), hi=np.ones(3)
            )
        with pytest.raises(ValueError):
            InitialStateSchedule(mode="gaussian", seed=0)


class TestBuiltinPolicies:
    def test_oracle_matches_optimal_action(self, small_arm):
        _, inst = small_arm
        policy = OraclePolicy(inst)
        s = support.random_states(inst.n, 1, seed=40)[0]
        assert np.array_equal(policy.act(s), optimal_action(inst, s))
        assert policy.descriptor == "oracle"

    def test_scaled_oracle(self, small_arm):
        _, inst = small_arm
        policy = ScaledOraclePolicy(inst, 0.5)
        s = support.random_states(inst.n, 1, seed=41)[0]
        assert np.allclose(policy.act(s), 0.5 * optimal_action(inst, s), atol=1e-15)
        assert policy.descriptor == "scaled:0.5"

    def test_zero_and_linear(self):
        zero = ZeroPolicy(3)
        assert np.array_equal(zero.act(np.ones(5)), np.zeros(3))
        assert zero.descriptor == "zero"
        gain = np.array([[1.0, -1.0], [0.5, 0.0]])
        lin = LinearPolicy(gain)
        s = np.array([2.0, 3.0])
        assert np.array_equal(lin.act(s), gain @ s)

    def test_policies_act_batched(self, small_arm):
        _, inst = small_arm
        states = support.random_states(inst.n, 6, seed=42)
        oracle = OraclePolicy(inst)
        batch = oracle.act(states)
        for k in range(6):
            assert np.array_equal(batch[k], oracle.act(states[k]))
        gain = np.zeros((inst.m, inst.n))
        gain[0, 0] = -0.3
        lin = LinearPolicy(gain)
        lbatch = lin.act(states)
        for k in range(6):
            assert np.array_equal(lbatch[k], lin.act(states[k]))

    def test_parse_policy_spec(self, small_arm, tmp_path):
        _, inst = small_arm
        assert isinstance(parse_policy_spec("oracle", inst), OraclePolicy)
        assert isinstance(parse_policy_spec("zero", inst), ZeroPolicy)
        scaled = parse_policy_spec("scaled:0.25", inst)
        assert isinstance(scaled, ScaledOraclePolicy)
        gain_file = tmp_path / "gain.json"
        gain_file.write_text(json.dumps(np.zeros((inst.m, inst.n)).tolist()))
        lin = parse_policy_spec(f"linear:{gain_file}", inst)
        assert isinstance(lin, LinearPolicy)
        with pytest.raises(IoFailure):
            parse_policy_spec("linear:/no/such/file.json", inst)
        with pytest.raises(ValueError):
            parse_policy_spec("rainbow", inst)


class TestStep:
    def test_scalar_closed_loop_frozen(self, s1):
        s = np.array([1.0])
        a = optimal_action(s1, s)
        nxt = step(s1, s, a, np.zeros(1))
        assert np.isclose(nxt[0], (10.0 / 19.0) * np.sqrt(19.0 / 18.0), atol=1e-12)

    def test_noise_enters_additively(self, small_arm):
        _, inst = small_arm
        s = support.random_states(inst.n, 1, seed=43)[0]
        a = np.full(inst.m, 0.1)
        w = np.full(inst.n, 0.2)
        assert np.allclose(
            step(inst, s, a, w), step(inst, s, a, np.zeros(inst.n)) + w, atol=1e-15
        )

    def test_non_finite_raises(self, s1):
        with pytest.raises(NonFinite):
            step(s1, np.array([1.0]), np.array([0.0]), np.array([np.inf]))


class TestRollout:
    def _stable_setup(self, sigma=0.01):
        _, inst = support.make_arm(seed=19, n_joints=2, sigma_scale=sigma)
        sched = InitialStateSchedule(
            mode="random", seed=2, lo=-np.ones(inst.n), hi=np.ones(inst.n)
        )
        noise = NoiseStream(seed=1, sigma=inst.Sigma)
        return inst, sched, noise

    def test_deterministic_and_consistent(self):
        inst, sched, noise = self._stable_setup()
        t1 = rollout(inst, OraclePolicy(inst), sched, noise, trial=3, horizon=20)
        t2 = rollout(inst, OraclePolicy(inst), sched, noise, trial=3, horizon=20)
        assert np.array_equal(t1.states, t2.states)
        assert np.array_equal(t1.actions, t2.actions)
        assert np.array_equal(t1.rewards, t2.rewards)
        # recorded rewards and transitions recompute exactly
        block = noise.block(3, 20)
        for k in range(20):
            assert t1.rewards[k] == reward(inst, t1.states[k], t1.actions[k])
            assert np.array_equal(
                t1.states[k + 1], step(inst, t1.states[k], t1.actions[k], block[k])
            )
        weights = inst.gamma ** np.arange(20)
        assert np.isclose(t1.discounted_return, weights @ t1.rewards, atol=1e-14)

    def test_noiseless_oracle_return_telescopes(self):
        # With no noise, V(s0) = sum of discounted costs + gamma^T V(s_T)
        # exactly along the oracle trajectory.
        _, inst = support.make_arm(seed=23, n_joints=2, sigma_scale=0.0)
        sched = InitialStateSchedule(
            mode="fixed", state=0.7 * np.ones(inst.n)
        )
        noise = NoiseStream(seed=0, sigma=inst.Sigma)
        for horizon in (5, 40):
            traj = rollout(inst, OraclePolicy(inst), sched, noise, 0, horizon)
            v0 = float(value(inst, traj.states[0]))
            v_end = float(value(inst, traj.states[-1]))
            assert np.isclose(
                traj.discounted_return + v0,
                inst.gamma**horizon * v_end,
                atol=1e-10 * (1.0 + v0),
            )

    def test_action_bound_applied(self):
        inst, sched, noise = self._stable_setup()
        traj = rollout(
            inst, OraclePolicy(inst), sched, noise, 0, 10, action_bound=0.01
        )
        assert np.max(np.abs(traj.actions)) <= 0.01 + 1e-15

    def test_invalid_horizon(self):
        inst, sched, noise = self._stable_setup()
        for bad in (0, -3, 2.5):
            with pytest.raises(InvalidHorizon):
                rollout(inst, OraclePolicy(inst), sched, noise, 0, bad)

    def test_paired_oracle_gaps_exactly_zero(self):
        inst, sched, noise = self._stable_setup(sigma=0.02)
        paired = paired_rollout(inst, OraclePolicy(inst), sched, noise, 1, 30)
        assert np.array_equal(paired.trajectory.actions, paired.oracle_actions)
        assert np.array_equal(paired.trajectory.rewards, paired.oracle_rewards)
        assert np.all(regret_gaps(paired) == 0.0)

    def test_paired_scaled_gap_law(self):
        # at each visited state: gap = (1 - kappa^2) rho(a*)
        inst, sched, noise = self._stable_setup(sigma=0.02)
        kappa = 0.5
        paired = paired_rollout(
            inst, ScaledOraclePolicy(inst, kappa), sched, noise, 2, 25
        )
        gaps = regret_gaps(paired)
        expected = (1.0 - kappa**2) * control_cost(inst, paired.oracle_actions)
        assert np.allclose(gaps, expected, rtol=1e-12, atol=1e-15)
        assert np.all(gaps >= 0.0)

    def test_batch_matches_sequential(self):
        inst, sched, noise = self._stable_setup()
        trials = [0, 1, 5, 9]
        batch = rollout_returns(inst, OraclePolicy(inst), sched, noise, trials, 15)
        for idx, t in enumerate(trials):
            traj = rollout(inst, OraclePolicy(inst), sched, noise, t, 15)
            assert np.isclose(batch.returns[idx], traj.discounted_return, atol=1e-10)
            assert np.allclose(batch.final_states[idx], traj.states[-1], atol=1e-10)
            norms = np.linalg.norm(traj.states, axis=1)
            assert np.isclose(batch.max_state_norms[idx], norms.max(), atol=1e-10)


class TestRegret:
    def test_gamma_zero_keeps_first_gap_only(self, s1):
        sched = InitialStateSchedule(mode="fixed", state=np.array([1.0]))
        noise = NoiseStream(seed=0, sigma=s1.Sigma)
        paired = paired_rollout(s1, ZeroPolicy(1), sched, noise, 0, 10)
        # 0^0 = 1 by convention: only the step-0 gap survives
        r0 = discounted_regret(paired, 0.0, 10)
        # zero policy at s0=1: gap = rho(a*(1)) = (9/19)^2 * (19/18) = 9/38
        assert r0 == pytest.approx(9.0 / 38.0, abs=1e-12)

    def test_discounted_sum_manual(self, s1):
        sched = InitialStateSchedule(mode="fixed", state=np.array([1.0]))
        noise = NoiseStream(seed=0, sigma=s1.Sigma)
        paired = paired_rollout(s1, ScaledOraclePolicy(s1, 0.3), sched, noise, 0, 12)
        gaps = regret_gaps(paired)
        manual = float((0.9 ** np.arange(8)) @ gaps[:8])
        assert discounted_regret(paired, 0.9, 8) == pytest.approx(manual, abs=1e-14)

    def test_horizon_overrun(self, s1):
        sched = InitialStateSchedule(mode="fixed", state=np.array([1.0]))
        noise = NoiseStream(seed=0, sigma=s1.Sigma)
        paired = paired_rollout(s1, ZeroPolicy(1), sched, noise, 0, 5)
        with pytest.raises(LengthMismatch):
            discounted_regret(paired, 0.9, 6)


class TestDumps:
    def test_trajectory_round_trip(self, tmp_path, small_arm):
        _, inst = small_arm
        sched = InitialStateSchedule(
            mode="random", seed=4, lo=-np.ones(inst.n), hi=np.ones(inst.n)
        )
        noise = NoiseStream(seed=6, sigma=inst.Sigma)
        paired = paired_rollout(inst, ScaledOraclePolicy(inst, 0.7), sched, noise, 2, 12)
        path = str(tmp_path / "traj.jsonl")
        dump_trajectory(
            paired.trajectory,
            path,
            oracle_actions=paired.oracle_actions,
            fixture_checksum="abc123",
            inst=inst,
        )
        loaded = read_trajectory_dump(path)
        assert loaded["header"]["trial"] == 2
        assert loaded["header"]["horizon"] == 12
        assert loaded["header"]["fixture_checksum"] == "abc123"
        assert loaded["header"]["policy"] == "scaled:0.7"
        assert np.array_equal(loaded["states"], paired.trajectory.states)
        assert np.array_equal(loaded["actions"], paired.trajectory.actions)
        assert np.array_equal(loaded["rewards"], paired.trajectory.rewards)
        assert np.array_equal(loaded["oracle_actions"], paired.oracle_actions)
        assert np.array_equal(
            loaded["oracle_values"], value(inst, paired.trajectory.states)
        )

    def test_noise_round_trip(self, tmp_path):
        stream = NoiseStream(seed=44, sigma=np.diag([1.0, 0.25]))
        path = str(tmp_path / "noise.jsonl")
        dump_noise(stream, [0, 3], 7, path)
        loaded = read_noise_dump(path)
        assert loaded["header"]["seed"] == 44
        assert loaded["header"]["trials"] == [0, 3]
        for t in (0, 3):
            assert np.array_equal(loaded["blocks"][t], stream.block(t, 7))

    def test_io_failures(self, tmp_path):
        stream = NoiseStream(seed=0, sigma=np.eye(1))
        with pytest.raises(IoFailure):
            dump_noise(stream, [0], 2, "/no/such/dir/noise.jsonl")
        with pytest.raises(IoFailure):
            read_noise_dump("/no/such/dir/noise.jsonl")
        with pytest.raises(IoFailure):
            read_trajectory_dump("/no/such/dir/traj.jsonl")
        bad = tmp_path / "bad.jsonl"
        bad.write_text('{"type": "step"}\n')
        with pytest.raises(IoFailure):
            read_trajectory_dump(str(bad))


class TestExternalPolicy:
    def _setup(self):
        _, inst = support.make_arm(seed=31, n_joints=2, sigma_scale=0.0)
        sched = InitialStateSchedule(mode="fixed", state=0.5 * np.ones(inst.n))
        noise = NoiseStream(seed=0, sigma=inst.Sigma)
        return inst, sched, noise

    def test_matches_equivalent_linear_policy(self):
        inst, sched, noise = self._setup()
        gain = np.zeros((inst.m, inst.n))
        gain[0, 0] = -0.5
        gain[1, 1] = -0.5
        with ExternalPolicy(
            f"python3 {STUB} --mode linear --scale -0.5 --m {inst.m}", inst.m
        ) as ext:
            ext_traj = rollout(inst, ext, sched, noise, 0, 8)
        lin_traj = rollout(inst, LinearPolicy(gain), sched, noise, 0, 8)
        # JSON float round trip is exact, so the trajectories agree bit for bit
        assert np.array_equal(ext_traj.states, lin_traj.states)
        assert np.array_equal(ext_traj.actions, lin_traj.actions)

    def test_timeout_raises(self):
        inst, sched, noise = self._setup()
        with ExternalPolicy(
            f"python3 {STUB} --mode sleep --delay 5", inst.m, timeout=0.4
        ) as ext:
            with pytest.raises(PolicyFailure, match="no response"):
                ext.act(np.zeros(inst.n))

    def test_garbage_raises(self):
        inst, _, _ = self._setup()
        with ExternalPolicy(f"python3 {STUB} --mode garbage", inst.m) as ext:
            with pytest.raises(PolicyFailure, match="malformed"):
                ext.act(np.zeros(inst.n))

    def test_wrong_shape_raises(self):
        inst, _, _ = self._setup()
        with ExternalPolicy(
            f"python3 {STUB} --mode badshape --m {inst.m}", inst.m
        ) as ext:
            with pytest.raises(PolicyFailure, match="shape"):
                ext.act(np.zeros(inst.n))

    def test_non_finite_action_raises(self):
        inst, _, _ = self._setup()
        with ExternalPolicy(
            f"python3 {STUB} --mode inf --m {inst.m}", inst.m
        ) as ext:
            with pytest.raises(PolicyFailure, match="non-finite"):
                ext.act(np.zeros(inst.n))

    def test_dead_process_raises(self):
        inst, _, _ = self._setup()
        ext = ExternalPolicy("python3 -c pass", inst.m)
        import time

        time.sleep(0.3)
        with pytest.raises(PolicyFailure):
            ext.act(np.zeros(inst.n))
        ext.close()

    def test_missing_executable_raises(self):
        with pytest.raises(PolicyFailure):
            ExternalPolicy("no-such-binary-anywhere", 1)
