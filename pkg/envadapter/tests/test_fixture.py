from __future__ import annotations

import numpy as np
import pytest
import yaml

from qgenv import BadFixture, canonical_checksum, load_fixture


class TestLoading:
    def test_loads_every_shared_fixture(self, shared):
        for path in shared["fixtures"]:
            model = load_fixture(str(path))
            assert model.family in ("arm", "nvdex")
            assert model.state_dim >= 1
            assert model.action_dim >= 1
            assert model.P.shape == (model.state_dim, model.state_dim)
            assert 0.0 < model.gamma < 1.0
            assert model.validation_horizon >= 1
            assert model.domain_lo.shape == (model.state_dim,)
            assert np.all(model.domain_hi >= model.domain_lo)

    def test_checksum_matches_file(self, shared):
        path = shared["fixtures"][0]
        doc = yaml.safe_load(path.read_text())
        model = load_fixture(str(path))
        assert model.checksum == doc["checksum"]
        assert canonical_checksum(doc["fixture"]) == doc["checksum"]

    def test_tampered_payload_rejected(self, shared, tmp_path):
        doc = yaml.safe_load(shared["fixtures"][0].read_text())
        doc["fixture"]["difficulty"] += 1.0
        bad = tmp_path / "tampered.yaml"
        bad.write_text(yaml.safe_dump(doc, sort_keys=True))
        with pytest.raises(BadFixture, match="checksum"):
            load_fixture(str(bad))

    def test_wrong_version_rejected(self, shared, tmp_path):
        doc = yaml.safe_load(shared["fixtures"][0].read_text())
        doc["format_version"] = 99
        bad = tmp_path / "future.yaml"
        bad.write_text(yaml.safe_dump(doc, sort_keys=True))
        with pytest.raises(BadFixture, match="version"):
            load_fixture(str(bad))

    def test_truncated_file_rejected(self, shared, tmp_path):
        text = shared["fixtures"][0].read_text()
        bad = tmp_path / "cut.yaml"
        bad.write_text(text[: len(text) // 2])
        with pytest.raises(BadFixture):
            load_fixture(str(bad))

    def test_missing_file_rejected(self):
        with pytest.raises(BadFixture, match="could not read"):
            load_fixture("/no/such/fixture.yaml")

    def test_non_fixture_yaml_rejected(self, tmp_path):
        junk = tmp_path / "junk.yaml"
        junk.write_text("- 1\n- 2\n")
        with pytest.raises(BadFixture, match="does not look like"):
            load_fixture(str(junk))


class TestReconstruction:
    def test_energy_identity_holds(self, shared):
        """The rebuilt drift satisfies f'Hf = s'(P-Q)s on random states."""
        for path in shared["fixtures"]:
            model = load_fixture(str(path))
            rng = np.random.default_rng(7)
            for _ in range(25):
                s = rng.uniform(model.domain_lo, model.domain_hi)
                f = model.drift(s)
                lhs = float(f @ model.metric(s) @ f)
                rhs = float(s @ (model.P - model.Q) @ s)
                assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-12)

    def test_rotation_is_orthogonal(self, shared):
        for path in shared["fixtures"]:
            model = load_fixture(str(path))
            rng = np.random.default_rng(11)
            s = rng.uniform(model.domain_lo, model.domain_hi)
            rot = model.rotation(s)
            assert np.allclose(rot @ rot.T, np.eye(model.state_dim), atol=1e-12)

    def test_oracle_at_origin(self, shared):
        """State 0: the optimal action vanishes and the value is the offset."""
        for path in shared["fixtures"]:
            model = load_fixture(str(path))
            zero = np.zeros(model.state_dim)
            assert np.linalg.norm(model.oracle_action(zero)) <= 1e-12
            expected = model.gamma * float(
                np.trace(model.P @ model.Sigma)
            ) / (1.0 - model.gamma)
            assert model.oracle_value(zero) == pytest.approx(expected, abs=1e-12)

    def test_reward_formula(self, shared):
        path = shared["fixtures"][0]
        model = load_fixture(str(path))
        rng = np.random.default_rng(3)
        s = rng.standard_normal(model.state_dim)
        a = rng.standard_normal(model.action_dim)
        direct = -(float(s @ model.Q @ s) + float(a @ model.R @ a))
        assert model.reward(s, a) == pytest.approx(direct, abs=1e-12)
