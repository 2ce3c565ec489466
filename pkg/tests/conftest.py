from __future__ import annotations

import numpy as np
import pytest

try:
    from hypothesis import settings

    settings.register_profile("ci", max_examples=50, derandomize=True, deadline=None)
    settings.load_profile("ci")
except ImportError:  # pragma: no cover - hypothesis is an optional test dep
    pass

import support


@pytest.fixture
def s1():
    """Scalar reference instance with known closed-form quantities."""
    return support.make_scalar_reference()


@pytest.fixture
def small_arm():
    return support.make_arm(seed=7, n_joints=2)


@pytest.fixture
def small_nvdex():
    return support.make_nvdex(seed=11, K=1, r_v=1, r_w=1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
