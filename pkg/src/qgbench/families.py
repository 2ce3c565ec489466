"""Benchmark instance families.

Two constructions ship by default:

* ``arm``: an articulated chain of J joints with state
  ``[angle_1, rate_1, ..., angle_J, rate_J]``.  Actuation authority on each
  joint fades with ``cos(angle)``, adjacent joints couple through their rates,
  and each joint's angle/rate plane rotates by a saturating function of the
  joint's own motion plus a gravity-like ``sin(angle)`` term.

* ``nvdex``: K planar vehicle modules with per-module state
  ``[x, y, heading, v^(0..r_v-1), w^(0..r_w-1)]`` (integrator chains for the
  forward and turning rates).  Inputs push the top derivative of each chain
  through a constant coupling, position advances along the heading, and an
  optional saturating coupling twists the velocity planes.  The family
  supports tuning the open-loop spectral radius to a target, which yields
  certified-unstable instances.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from .errors import NotSpd, Unreachable
from .linalg import spd_inv_sqrt, spd_sqrt, spectral_radius, symmetrize
from .qg import (
    METRIC_NORMALIZED,
    AngleTerm,
    InputCoupling,
    OrthogonalField,
    PlaneRotation,
    QGInstance,
    discounted_metric,
)

MAX_TUNING_HALVINGS = 60


@dataclass(frozen=True, eq=False)
class ArmParams:
    """Parameters of the articulated-arm family (state dimension 2 * n_joints)."""

    n_joints: int
    p: float
    gamma: float
    Q: np.ndarray
    R: np.ndarray
    P: np.ndarray
    Sigma: np.ndarray
    alpha0: float
    beta0: float
    kappa1: float
    kappa2: float
    g0: float
    tau: float

    def __post_init__(self) -> None:
        if self.n_joints < 1:
            raise ValueError("arm needs at least one joint")

    @property
    def state_dim(self) -> int:
        return 2 * self.n_joints

    @property
    def action_dim(self) -> int:
        return self.n_joints

    def scalar_summary(self) -> dict:
        return {
            "n_joints": int(self.n_joints),
            "p": float(self.p),
            "gamma": float(self.gamma),
            "alpha0": float(self.alpha0),
            "beta0": float(self.beta0),
            "kappa1": float(self.kappa1),
            "kappa2": float(self.kappa2),
            "g0": float(self.g0),
            "tau": float(self.tau),
        }


@dataclass(frozen=True, eq=False)
class NvdexParams:
    """Parameters of the vehicle-module family.

    When ``rho_target`` is set, ``Q`` is derived by instability tuning
    (``Q = beta P``) and any supplied ``Q`` is ignored; otherwise ``Q`` is
    required.
    """

    K: int
    r_v: int
    r_w: int
    p: float
    gamma: float
    R: np.ndarray
    P: np.ndarray
    Sigma: np.ndarray
    alpha: float
    kappa: float
    tau: float
    Q: np.ndarray | None = None
    rho_target: float | None = None
    cross_coupling: bool = False

    def __post_init__(self) -> None:
        if self.K < 1:
            raise ValueError("need at least one vehicle module")
        if self.r_v < 1 or self.r_w < 1:
            raise ValueError("integrator chains need at least one stage")
        if self.Q is None and self.rho_target is None:
            raise ValueError("supply Q directly or a rho_target to derive it")
        if self.rho_target is not None and self.rho_target <= 0.0:
            raise ValueError("rho_target must be positive")

    @property
    def module_dim(self) -> int:
        return 3 + self.r_v + self.r_w

    @property
    def state_dim(self) -> int:
        return self.module_dim * self.K

    @property
    def action_dim(self) -> int:
        return 2 * self.K

    def scalar_summary(self) -> dict:
        return {
            "K": int(self.K),
            "r_v": int(self.r_v),
            "r_w": int(self.r_w),
            "p": float(self.p),
            "gamma": float(self.gamma),
            "alpha": float(self.alpha),
            "kappa": float(self.kappa),
            "tau": float(self.tau),
            "rho_target": None if self.rho_target is None else float(self.rho_target),
            "cross_coupling": bool(self.cross_coupling),
        }


@dataclass(frozen=True)
class DifficultyWeights:
    """Weights of the scalar difficulty index; all default to 1."""

    size: float = 1.0
    control: float = 1.0
    noise: float = 1.0
    nonlinearity: float = 1.0
    conditioning: float = 1.0

    def to_dict(self) -> dict:
        return {k: float(v) for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, data: dict) -> "DifficultyWeights":
        return cls(**data)


def arm_input_coupling(n_joints: int) -> InputCoupling:
    """Coupling with ``cos(angle_i)`` on joint i's rate row."""
    return InputCoupling(kind="arm_cos", n_joints=n_joints)


def arm_orthogonal_field(params: ArmParams) -> OrthogonalField:
    """Rotation field of the arm.

    Leftmost factors couple adjacent rate planes (i, i+1) by a saturating
    function of the angle gap; then each joint's own (angle, rate) plane turns
    by a saturating self-motion term plus a gravity-like sine.  All gains
    scale with the control strength.
    """
    rotations: list[PlaneRotation] = []
    for i in range(params.n_joints - 1):
        rate_i = 2 * i + 1
        rate_next = 2 * i + 3
        rotations.append(
            PlaneRotation(
                axis_i=rate_i,
                axis_j=rate_next,
                terms=(
                    AngleTerm(
                        kind="tanh_diff",
                        gain=params.beta0,
                        scale=params.kappa2,
                        u=2 * i,
                        v=2 * i + 2,
                        p_scaled=True,
                    ),
                ),
            )
        )
    for i in range(params.n_joints):
        angle_i = 2 * i
        rate_i = 2 * i + 1
        rotations.append(
            PlaneRotation(
                axis_i=angle_i,
                axis_j=rate_i,
                terms=(
                    AngleTerm(
                        kind="tanh_product",
                        gain=params.alpha0,
                        scale=params.kappa1,
                        u=angle_i,
                        v=rate_i,
                        p_scaled=True,
                    ),
                    AngleTerm(
                        kind="sin_state",
                        gain=params.g0,
                        scale=1.0,
                        u=angle_i,
                        p_scaled=True,
                    ),
                ),
            )
        )
    return OrthogonalField(dim=params.state_dim, rotations=tuple(rotations))


def build_arm(params: ArmParams) -> QGInstance:
    """Assemble the arm instance (metric-normalized drift)."""
    return QGInstance(
        Q=params.Q,
        R=params.R,
        P=params.P,
        Sigma=params.Sigma,
        gamma=params.gamma,
        p=params.p,
        coupling=arm_input_coupling(params.n_joints),
        field=arm_orthogonal_field(params),
        parameterization=METRIC_NORMALIZED,
        tau=params.tau,
    )


def nvdex_input_coupling(K: int, r_v: int, r_w: int, tau: float) -> InputCoupling:
    """Block-diagonal constant coupling pushing each chain's top derivative."""
    d = 3 + r_v + r_w
    mat = np.zeros((d * K, 2 * K))
    for k in range(K):
        base = d * k
        mat[base + 2 + r_v, 2 * k] = tau
        mat[base + 2 + r_v + r_w, 2 * k + 1] = tau
    return InputCoupling(kind="constant", matrix=mat)


def nvdex_orthogonal_field(params: NvdexParams) -> OrthogonalField:
    """Rotation field of the vehicle family.

    Per module: the (x, y) plane turns by the heading state, and the
    (v, w) base-rate plane twists by a saturating product of the two rates.
    With ``cross_coupling`` the position coordinates also couple into the
    rate chains through the same saturating template.
    """
    d = params.module_dim
    rotations: list[PlaneRotation] = []
    for k in range(params.K):
        base = d * k
        x, y, heading = base, base + 1, base + 2
        v0 = base + 3
        w0 = base + 3 + params.r_v
        rotations.append(
            PlaneRotation(
                axis_i=x,
                axis_j=y,
                terms=(AngleTerm(kind="state", gain=1.0, u=heading),),
            )
        )
        rotations.append(
            PlaneRotation(
                axis_i=v0,
                axis_j=w0,
                terms=(
                    AngleTerm(
                        kind="tanh_product",
                        gain=params.alpha,
                        scale=params.kappa,
                        u=v0,
                        v=w0,
                    ),
                ),
            )
        )
        if params.cross_coupling:
            rotations.append(
                PlaneRotation(
                    axis_i=x,
                    axis_j=v0,
                    terms=(
                        AngleTerm(
                            kind="tanh_product",
                            gain=params.alpha,
                            scale=params.kappa,
                            u=x,
                            v=v0,
                        ),
                    ),
                )
            )
            rotations.append(
                PlaneRotation(
                    axis_i=y,
                    axis_j=w0,
                    terms=(
                        AngleTerm(
                            kind="tanh_product",
                            gain=params.alpha,
                            scale=params.kappa,
                            u=y,
                            v=w0,
                        ),
                    ),
                )
            )
    return OrthogonalField(dim=params.state_dim, rotations=tuple(rotations))


@dataclass(frozen=True, eq=False)
class TuningResult:
    """Outcome of instability tuning."""

    beta: float
    R: np.ndarray
    rho_base: float
    rho_achieved: float
    halvings: int


def instability_beta(rho_base: float, rho_target: float) -> float:
    """Mixing weight that scales the base radius down to the target:
    ``beta = 1 - (rho_target / rho_base)^2``."""
    if rho_base <= rho_target:
        raise Unreachable(
            f"base radius {rho_base:.6g} does not exceed target {rho_target:.6g}"
        )
    return 1.0 - (rho_target / rho_base) ** 2


def tune_instability(
    P: np.ndarray,
    R: np.ndarray,
    gamma: float,
    coupling_matrix: np.ndarray,
    p: float,
    rho_target: float,
) -> TuningResult:
    """Pick ``Q = beta P`` so the open-loop linearization has radius ``rho_target``.

    With ``Q = beta P`` the zero-rotation drift linearization is
    ``A0 = H^{-1/2} (P - Q)^{1/2} = sqrt(1 - beta) H^{-1/2} P^{1/2}``, so the
    achievable radius is capped by the base radius at ``beta = 0``.  The
    metric ``H`` does not depend on ``Q``, but it does grow softer as ``R``
    shrinks, so ``R`` is halved until the base radius clears the target.
    """
    P = symmetrize(np.asarray(P, dtype=float))
    R = symmetrize(np.asarray(R, dtype=float))
    G = np.asarray(coupling_matrix, dtype=float)
    p_sqrt = spd_sqrt(P)
    halvings = 0
    while True:
        B = symmetrize(R + gamma * p**2 * G.T @ P @ G)
        PG = P @ G
        H = symmetrize(gamma * (P - gamma * p**2 * PG @ np.linalg.solve(B, PG.T)))
        try:
            base = spd_inv_sqrt(H) @ p_sqrt
        except NotSpd as exc:
            raise Unreachable(
                "metric degenerated below the SPD floor before the base "
                f"radius cleared the target {rho_target:.6g}"
            ) from exc
        rho_base = spectral_radius(base)
        if rho_base > rho_target:
            break
        if halvings >= MAX_TUNING_HALVINGS:
            raise Unreachable(
                f"base radius {rho_base:.6g} still at or below target "
                f"{rho_target:.6g} after {halvings} halvings of R"
            )
        R = 0.5 * R
        halvings += 1
    beta = instability_beta(rho_base, rho_target)
    rho_achieved = float(np.sqrt(1.0 - beta) * rho_base)
    return TuningResult(
        beta=beta, R=R, rho_base=rho_base, rho_achieved=rho_achieved, halvings=halvings
    )


def build_nvdex(params: NvdexParams) -> QGInstance:
    """Assemble the vehicle instance, running instability tuning if requested."""
    coupling = nvdex_input_coupling(params.K, params.r_v, params.r_w, params.tau)
    R = np.asarray(params.R, dtype=float)
    if params.rho_target is not None:
        tuned = tune_instability(
            params.P, R, params.gamma, coupling.matrix, params.p, params.rho_target
        )
        Q = tuned.beta * symmetrize(np.asarray(params.P, dtype=float))
        R = tuned.R
    else:
        Q = params.Q
    return QGInstance(
        Q=Q,
        R=R,
        P=params.P,
        Sigma=params.Sigma,
        gamma=params.gamma,
        p=params.p,
        coupling=coupling,
        field=nvdex_orthogonal_field(params),
        parameterization=METRIC_NORMALIZED,
        tau=params.tau,
    )


def open_loop_linearization(inst: QGInstance) -> np.ndarray:
    """``A0 = H^{-1/2} (P - Q)^{1/2}`` at the origin-frozen rotation field.

    For instances whose rotation field is the identity at small states (all
    vehicle instances with ``alpha = 0``) this is the exact open-loop
    transition matrix of the unforced dynamics.
    """
    h = discounted_metric(inst, np.zeros(inst.n))
    return spd_inv_sqrt(h) @ spd_sqrt(inst.energy_matrix)


def difficulty_index(
    params: ArmParams | NvdexParams,
    weights: DifficultyWeights = DifficultyWeights(),
) -> float:
    """Scalar difficulty score.

    ``size`` counts joints for the arm and state variables for the vehicle
    family (module richness matters there); ``control`` grows as actuation
    weakens (``1 / p^2``); ``noise`` is ``tr(Sigma)``; ``nonlinearity`` is the
    family's saturating-gain amplitude; ``conditioning`` is ``cond(P)``.
    """
    if isinstance(params, ArmParams):
        size = float(params.n_joints)
        nonlinearity = float(params.alpha0)
    else:
        size = float(params.state_dim)
        nonlinearity = float(params.alpha)
    eigs = np.linalg.eigvalsh(symmetrize(np.asarray(params.P, dtype=float)))
    conditioning = float(eigs[-1] / eigs[0])
    return float(
        weights.size * size
        + weights.control / params.p**2
        + weights.noise * float(np.trace(np.asarray(params.Sigma, dtype=float)))
        + weights.nonlinearity * nonlinearity
        + weights.conditioning * conditioning
    )
