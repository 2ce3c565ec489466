"""Deterministic instance builders shared across test modules."""

from __future__ import annotations

import numpy as np

from qgbench import (
    InputCoupling,
    OrthogonalField,
    QGInstance,
    random_spd,
)
from qgbench.families import ArmParams, NvdexParams, build_arm, build_nvdex


def make_scalar_reference() -> QGInstance:
    """The 1-D worked example: P=1, Q=0.5, R=1, gamma=0.9, unit coupling."""
    return QGInstance(
        Q=np.array([[0.5]]),
        R=np.array([[1.0]]),
        P=np.array([[1.0]]),
        Sigma=np.array([[0.0]]),
        gamma=0.9,
        p=1.0,
        coupling=InputCoupling(kind="constant", matrix=np.array([[1.0]])),
        field=OrthogonalField(dim=1),
    )


def make_arm(
    seed: int = 0,
    n_joints: int = 2,
    sigma_scale: float = 0.0,
    gamma: float = 0.9,
    p: float = 0.8,
    q_frac: float = 0.6,
    alpha0: float = 0.4,
    beta0: float = 0.3,
    g0: float = 0.2,
) -> tuple[ArmParams, QGInstance]:
    rng = np.random.default_rng(seed)
    n = 2 * n_joints
    P = random_spd(n, 4.0, rng)
    params = ArmParams(
        n_joints=n_joints,
        p=p,
        gamma=gamma,
        Q=q_frac * P,
        R=0.5 * np.eye(n_joints),
        P=P,
        Sigma=sigma_scale * np.eye(n),
        alpha0=alpha0,
        beta0=beta0,
        kappa1=1.5,
        kappa2=2.0,
        g0=g0,
        tau=0.1,
    )
    return params, build_arm(params)


def make_nvdex(
    seed: int = 0,
    K: int = 1,
    r_v: int = 1,
    r_w: int = 1,
    sigma_scale: float = 0.0,
    gamma: float = 0.9,
    p: float = 0.7,
    alpha: float = 0.4,
    rho_target: float | None = None,
    r_scale: float = 0.5,
    cross_coupling: bool = False,
) -> tuple[NvdexParams, QGInstance]:
    rng = np.random.default_rng(seed)
    n = (3 + r_v + r_w) * K
    m = 2 * K
    P = random_spd(n, 3.0, rng)
    params = NvdexParams(
        K=K,
        r_v=r_v,
        r_w=r_w,
        p=p,
        gamma=gamma,
        R=r_scale * np.eye(m),
        P=P,
        Sigma=sigma_scale * np.eye(n),
        alpha=alpha,
        kappa=1.2,
        tau=0.1,
        Q=None if rho_target is not None else 0.5 * P,
        rho_target=rho_target,
        cross_coupling=cross_coupling,
    )
    return params, build_nvdex(params)


def random_states(n: int, count: int, seed: int, radius: float = 1.0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.uniform(-radius, radius, size=(count, n))
