"""Quadratic-Gaussian benchmark instances with certified optimal policies.

An instance fixes a quadratic state cost ``s.T Q s``, control cost
``a.T R a``, discount ``gamma``, control strength ``p``, input coupling
``g(s)`` and Gaussian noise covariance ``Sigma``, then *constructs* the drift
``f`` so that the quadratic ``V(s) = s.T P s + b`` is exactly the optimal
cost-to-go.  Everything downstream (validation, simulation, evaluation) leans
on the closed forms collected here.

State arguments are batched: shape ``(..., n)`` in, matching leading axes out.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field, replace
from functools import cached_property

import numpy as np

from .errors import (
    IndexOutOfRange,
    NotPsd,
    NotSpd,
    ShapeMismatch,
    ZeroDirectionField,
)
from .linalg import (
    SPD_FLOOR_REL,
    quad_form,
    rotate_rows,
    spd_inv_sqrt,
    spd_sqrt,
    symmetrize,
)

METRIC_NORMALIZED = "metric-normalized"
SQUARE_ROOT = "square-root"

_TERM_KINDS = ("constant", "state", "sin_state", "tanh_product", "tanh_diff")


@dataclass(frozen=True)
class AngleTerm:
    """One additive contribution to a rotation angle.

    kind:
        ``constant``      -> gain
        ``state``         -> gain * s[u]
        ``sin_state``     -> gain * sin(scale * s[u])
        ``tanh_product``  -> gain * tanh(scale * s[u] * s[v])
        ``tanh_diff``     -> gain * tanh(scale * (s[v] - s[u]))

    When ``p_scaled`` is set the gain is multiplied by the instance's control
    strength, which keeps the nonlinearity proportional to actuation.
    """

    kind: str
    gain: float
    scale: float = 1.0
    u: int = 0
    v: int = 0
    p_scaled: bool = False

    def __post_init__(self) -> None:
        if self.kind not in _TERM_KINDS:
            raise ValueError(f"unknown angle term kind {self.kind!r}")

    def evaluate(self, s: np.ndarray, p: float) -> np.ndarray:
        gain = self.gain * p if self.p_scaled else self.gain
        if self.kind == "constant":
            return np.full(s.shape[:-1], gain)
        if self.kind == "state":
            return gain * s[..., self.u]
        if self.kind == "sin_state":
            return gain * np.sin(self.scale * s[..., self.u])
        if self.kind == "tanh_product":
            return gain * np.tanh(self.scale * s[..., self.u] * s[..., self.v])
        return gain * np.tanh(self.scale * (s[..., self.v] - s[..., self.u]))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "gain": float(self.gain),
            "scale": float(self.scale),
            "u": int(self.u),
            "v": int(self.v),
            "p_scaled": bool(self.p_scaled),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AngleTerm":
        return cls(
            kind=data["kind"],
            gain=data["gain"],
            scale=data["scale"],
            u=data["u"],
            v=data["v"],
            p_scaled=data["p_scaled"],
        )


@dataclass(frozen=True)
class PlaneRotation:
    """State-dependent Givens rotation in the (axis_i, axis_j) plane."""

    axis_i: int
    axis_j: int
    terms: tuple[AngleTerm, ...]

    def __post_init__(self) -> None:
        if self.axis_i == self.axis_j:
            raise IndexOutOfRange("rotation plane needs two distinct axes")

    def angle(self, s: np.ndarray, p: float) -> np.ndarray:
        total = np.zeros(s.shape[:-1])
        for term in self.terms:
            total = total + term.evaluate(s, p)
        return total

    def to_dict(self) -> dict:
        return {
            "axis_i": int(self.axis_i),
            "axis_j": int(self.axis_j),
            "terms": [t.to_dict() for t in self.terms],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PlaneRotation":
        return cls(
            axis_i=data["axis_i"],
            axis_j=data["axis_j"],
            terms=tuple(AngleTerm.from_dict(t) for t in data["terms"]),
        )


@dataclass(frozen=True)
class OrthogonalField:
    """Pointwise-orthogonal matrix field: an ordered product of plane rotations.

    ``matrix(s, p)`` returns ``G_1(s) @ G_2(s) @ ... @ G_L(s)`` where the
    rotations are taken in list order (first entry is the leftmost factor).
    An empty rotation list is the identity field.
    """

    dim: int
    rotations: tuple[PlaneRotation, ...] = ()

    def __post_init__(self) -> None:
        for rot in self.rotations:
            for axis in (rot.axis_i, rot.axis_j):
                if not 0 <= axis < self.dim:
                    raise IndexOutOfRange(
                        f"rotation axis {axis} exceeds dimension {self.dim}"
                    )
            for term in rot.terms:
                for idx in (term.u, term.v):
                    if not 0 <= idx < self.dim:
                        raise IndexOutOfRange(
                            f"angle term index {idx} exceeds dimension {self.dim}"
                        )

    @property
    def is_identity(self) -> bool:
        return len(self.rotations) == 0

    def matrix(self, s: np.ndarray, p: float) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        batch = s.shape[:-1]
        out = np.zeros(batch + (self.dim, self.dim))
        out[...] = np.eye(self.dim)
        for rot in reversed(self.rotations):
            theta = rot.angle(s, p)
            rotate_rows(out, rot.axis_i, rot.axis_j, np.cos(theta), np.sin(theta))
        return out

    def to_dict(self) -> dict:
        return {
            "dim": int(self.dim),
            "rotations": [r.to_dict() for r in self.rotations],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "OrthogonalField":
        return cls(
            dim=data["dim"],
            rotations=tuple(PlaneRotation.from_dict(r) for r in data["rotations"]),
        )


@dataclass(frozen=True, eq=False)
class DirectionField:
    """Drift direction used by the square-root parameterization.

    ``state`` points along the state itself, ``constant`` along a fixed
    vector, ``linear`` along ``matrix @ s``.  Only the direction matters; the
    drift construction normalizes it.
    """

    kind: str
    vector: np.ndarray | None = None
    matrix: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("state", "constant", "linear"):
            raise ValueError(f"unknown direction field kind {self.kind!r}")
        if self.kind == "constant" and self.vector is None:
            raise ValueError("constant direction field needs a vector")
        if self.kind == "linear" and self.matrix is None:
            raise ValueError("linear direction field needs a matrix")

    def evaluate(self, s: np.ndarray) -> np.ndarray:
        if self.kind == "state":
            return np.array(s, dtype=float, copy=True)
        if self.kind == "constant":
            vec = np.asarray(self.vector, dtype=float)
            return np.broadcast_to(vec, s.shape).copy()
        mat = np.asarray(self.matrix, dtype=float)
        return np.einsum("ij,...j->...i", mat, s)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "vector": None if self.vector is None else np.asarray(self.vector).tolist(),
            "matrix": None if self.matrix is None else np.asarray(self.matrix).tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DirectionField":
        return cls(
            kind=data["kind"],
            vector=None if data["vector"] is None else np.asarray(data["vector"], dtype=float),
            matrix=None if data["matrix"] is None else np.asarray(data["matrix"], dtype=float),
        )


@dataclass(frozen=True, eq=False)
class InputCoupling:
    """State-to-input coupling ``g(s)`` with shape ``(n, m)``.

    ``constant`` wraps a fixed matrix.  ``arm_cos`` is the articulated-arm
    pattern: joint i's velocity row carries ``cos(angle_i)`` in column i, so
    actuation authority fades as a joint folds.
    """

    kind: str
    matrix: np.ndarray | None = None
    n_joints: int = 0

    def __post_init__(self) -> None:
        if self.kind == "constant":
            if self.matrix is None:
                raise ValueError("constant coupling needs a matrix")
            mat = np.asarray(self.matrix, dtype=float)
            if mat.ndim != 2:
                raise ShapeMismatch("coupling matrix must be 2-D")
            object.__setattr__(self, "matrix", mat)
        elif self.kind == "arm_cos":
            if self.n_joints < 1:
                raise ValueError("arm_cos coupling needs at least one joint")
        else:
            raise ValueError(f"unknown coupling kind {self.kind!r}")

    @property
    def n(self) -> int:
        if self.kind == "constant":
            return self.matrix.shape[0]
        return 2 * self.n_joints

    @property
    def m(self) -> int:
        if self.kind == "constant":
            return self.matrix.shape[1]
        return self.n_joints

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant"

    @property
    def recipe(self) -> str:
        if self.kind == "constant":
            return f"constant {self.n}x{self.m} matrix"
        return f"cos(angle_i) on velocity row of each of {self.n_joints} joints"

    def evaluate(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if s.shape[-1] != self.n:
            raise ShapeMismatch(
                f"state has dimension {s.shape[-1]}, coupling expects {self.n}"
            )
        if self.kind == "constant":
            return np.broadcast_to(self.matrix, s.shape[:-1] + self.matrix.shape)
        out = np.zeros(s.shape[:-1] + (self.n, self.m))
        for i in range(self.n_joints):
            out[..., 2 * i + 1, i] = np.cos(s[..., 2 * i])
        return out

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "matrix": None if self.matrix is None else np.asarray(self.matrix).tolist(),
            "n_joints": int(self.n_joints),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "InputCoupling":
        return cls(
            kind=data["kind"],
            matrix=None if data["matrix"] is None else np.asarray(data["matrix"], dtype=float),
            n_joints=data["n_joints"],
        )


@dataclass(frozen=True)
class NoiseOffset:
    """Constant part of the optimal value: ``value = gamma * trace / (1 - gamma)``."""

    value: float
    trace: float


def _check_psd(mat: np.ndarray, name: str) -> None:
    w = np.linalg.eigvalsh(symmetrize(mat))
    scale = max(abs(w[0]), abs(w[-1]))
    if w[0] < -1e-12 * max(scale, 1e-300):
        raise NotPsd(f"{name} has eigenvalue {w[0]:.3e}; must be PSD")


def _check_spd(mat: np.ndarray, name: str) -> None:
    w = np.linalg.eigvalsh(symmetrize(mat))
    if w[0] <= SPD_FLOOR_REL * abs(w[-1]) or w[-1] <= 0.0:
        raise NotSpd(f"{name} has eigenvalue {w[0]:.3e}; must be SPD")


@dataclass(frozen=True, eq=False)
class QGInstance:
    """One benchmark instance.  Construction validates every matrix contract.

    Fields
    ------
    Q, R, P : state cost, control cost, value matrix (Q PSD; R, P SPD; P - Q PSD)
    Sigma : noise covariance, PSD
    gamma : discount in (0, 1)
    p : control strength in (0, 1]
    coupling : input coupling g(s)
    field : OrthogonalField (metric-normalized) or DirectionField (square-root)
    parameterization : which drift construction the field feeds
    tau : integrator step used by family builders, kept for bookkeeping
    drift_gain : multiplies the constructed drift; anything but 1.0 breaks
        optimality on purpose (corruption knob for validator tests)
    """

    Q: np.ndarray
    R: np.ndarray
    P: np.ndarray
    Sigma: np.ndarray
    gamma: float
    p: float
    coupling: InputCoupling
    field: OrthogonalField | DirectionField = dc_field(default=None)  # type: ignore[assignment]
    parameterization: str = METRIC_NORMALIZED
    tau: float | None = None
    drift_gain: float = 1.0

    def __post_init__(self) -> None:
        for name in ("Q", "R", "P", "Sigma"):
            mat = np.asarray(getattr(self, name), dtype=float)
            if mat.ndim == 0:
                mat = mat.reshape(1, 1)
            if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
                raise ShapeMismatch(f"{name} must be a square matrix")
            object.__setattr__(self, name, symmetrize(mat))
        n = self.P.shape[0]
        m = self.R.shape[0]
        if self.Q.shape != (n, n) or self.Sigma.shape != (n, n):
            raise ShapeMismatch("Q, P, Sigma must share the state dimension")
        if self.coupling.n != n or self.coupling.m != m:
            raise ShapeMismatch(
                f"coupling is {self.coupling.n}x{self.coupling.m}, "
                f"instance needs {n}x{m}"
            )
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if not 0.0 < self.p <= 1.0:
            raise ValueError(f"control strength must lie in (0, 1], got {self.p}")
        if not np.isfinite(self.drift_gain):
            raise ValueError("drift gain must be finite")
        if self.parameterization not in (METRIC_NORMALIZED, SQUARE_ROOT):
            raise ValueError(f"unknown parameterization {self.parameterization!r}")
        fld = self.field
        if fld is None:
            fld = (
                OrthogonalField(dim=n)
                if self.parameterization == METRIC_NORMALIZED
                else DirectionField(kind="state")
            )
            object.__setattr__(self, "field", fld)
        if self.parameterization == METRIC_NORMALIZED:
            if not isinstance(fld, OrthogonalField):
                raise ValueError("metric-normalized drift needs an OrthogonalField")
            if fld.dim != n:
                raise ShapeMismatch("field dimension must match the state dimension")
        else:
            if not isinstance(fld, DirectionField):
                raise ValueError("square-root drift needs a DirectionField")
        _check_spd(self.P, "P")
        _check_spd(self.R, "R")
        _check_psd(self.Q, "Q")
        _check_psd(self.Sigma, "Sigma")
        _check_psd(self.P - self.Q, "P - Q")

    @property
    def n(self) -> int:
        return self.P.shape[0]

    @property
    def m(self) -> int:
        return self.R.shape[0]

    @cached_property
    def energy_matrix(self) -> np.ndarray:
        return symmetrize(self.P - self.Q)

    @cached_property
    def energy_sqrt(self) -> np.ndarray:
        return spd_sqrt(self.energy_matrix)

    @cached_property
    def _r_inv(self) -> np.ndarray:
        return np.linalg.inv(self.R)

    @cached_property
    def _p_inv(self) -> np.ndarray:
        return np.linalg.inv(self.P)

    @cached_property
    def _const_hessian(self) -> np.ndarray:
        g = self.coupling.matrix
        return symmetrize(self.R + self.gamma * self.p**2 * g.T @ self.P @ g)

    @cached_property
    def _const_metric(self) -> np.ndarray:
        g = self.coupling.matrix
        pg = self.P @ g
        inner = pg @ np.linalg.solve(self._const_hessian, pg.T)
        return symmetrize(self.gamma * (self.P - self.gamma * self.p**2 * inner))

    @cached_property
    def _const_metric_inv_sqrt(self) -> np.ndarray:
        return spd_inv_sqrt(self._const_metric)

    @cached_property
    def _noise_offset(self) -> NoiseOffset:
        trace = float(np.trace(self.P @ self.Sigma))
        return NoiseOffset(
            value=self.gamma * trace / (1.0 - self.gamma), trace=trace
        )

    def with_control_strength(self, p: float) -> "QGInstance":
        """Same instance at a different control strength (fields re-scale)."""
        return replace(self, p=p)

    def with_drift_gain(self, gain: float) -> "QGInstance":
        return replace(self, drift_gain=gain)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "m": self.m,
            "Q": self.Q.tolist(),
            "R": self.R.tolist(),
            "P": self.P.tolist(),
            "Sigma": self.Sigma.tolist(),
            "gamma": float(self.gamma),
            "p": float(self.p),
            "coupling": self.coupling.to_dict(),
            "field": self.field.to_dict(),
            "parameterization": self.parameterization,
            "tau": None if self.tau is None else float(self.tau),
            "drift_gain": float(self.drift_gain),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "QGInstance":
        parameterization = data["parameterization"]
        if parameterization == METRIC_NORMALIZED:
            fld = OrthogonalField.from_dict(data["field"])
        else:
            fld = DirectionField.from_dict(data["field"])
        return cls(
            Q=np.asarray(data["Q"], dtype=float),
            R=np.asarray(data["R"], dtype=float),
            P=np.asarray(data["P"], dtype=float),
            Sigma=np.asarray(data["Sigma"], dtype=float),
            gamma=data["gamma"],
            p=data["p"],
            coupling=InputCoupling.from_dict(data["coupling"]),
            field=fld,
            parameterization=parameterization,
            tau=data["tau"],
            drift_gain=data["drift_gain"],
        )


def _as_states(inst: QGInstance, s: np.ndarray) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    if s.shape[-1:] != (inst.n,):
        raise ShapeMismatch(
            f"state has trailing dimension {s.shape[-1:]}, expected ({inst.n},)"
        )
    return s


def control_hessian(inst: QGInstance, s: np.ndarray) -> np.ndarray:
    """Curvature of the one-step objective in the action:
    ``B_p(s) = R + gamma p^2 g(s).T P g(s)``.  Always SPD because R is."""
    s = _as_states(inst, s)
    if inst.coupling.is_constant:
        return np.broadcast_to(inst._const_hessian, s.shape[:-1] + (inst.m, inst.m))
    g = inst.coupling.evaluate(s)
    gtp = np.einsum("...nm,nk->...mk", g, inst.P)
    gtpg = np.einsum("...mn,...nl->...ml", gtp, g)
    return symmetrize(inst.R + inst.gamma * inst.p**2 * gtpg)


def discounted_metric(inst: QGInstance, s: np.ndarray) -> np.ndarray:
    """Metric that measures the drift:
    ``H(s) = gamma (P - gamma p^2 P g B^{-1} g.T P)``.  SPD wherever B is."""
    s = _as_states(inst, s)
    if inst.coupling.is_constant:
        return np.broadcast_to(inst._const_metric, s.shape[:-1] + (inst.n, inst.n))
    g = inst.coupling.evaluate(s)
    gtp = np.einsum("...nm,nk->...mk", g, inst.P)
    hess = control_hessian(inst, s)
    solved = np.linalg.solve(hess, gtp)
    inner = np.einsum("...mn,...mk->...nk", gtp, solved)
    return symmetrize(inst.gamma * (inst.P - inst.gamma * inst.p**2 * inner))


def discounted_metric_woodbury(inst: QGInstance, s: np.ndarray) -> np.ndarray:
    """Same metric through the matrix-inversion identity:
    ``H(s) = gamma (P^{-1} + gamma p^2 g R^{-1} g.T)^{-1}``.

    Kept as an independent route for cross-checking the primal formula; both
    must agree to tight tolerance on every valid instance.
    """
    s = _as_states(inst, s)
    g = inst.coupling.evaluate(s)
    grg = np.einsum("...nm,mk,...lk->...nl", g, inst._r_inv, g)
    inner = inst._p_inv + inst.gamma * inst.p**2 * grg
    return symmetrize(inst.gamma * np.linalg.inv(inner))


def metric_inv_sqrt(inst: QGInstance, s: np.ndarray) -> np.ndarray:
    """``H(s)^{-1/2}``, cached when the coupling is constant."""
    s = _as_states(inst, s)
    if inst.coupling.is_constant:
        return np.broadcast_to(
            inst._const_metric_inv_sqrt, s.shape[:-1] + (inst.n, inst.n)
        )
    return spd_inv_sqrt(discounted_metric(inst, s))


def energy(inst: QGInstance, s: np.ndarray) -> np.ndarray:
    """Drift energy budget ``s.T (P - Q) s``."""
    s = _as_states(inst, s)
    return quad_form(inst.energy_matrix, s)


def drift(inst: QGInstance, s: np.ndarray) -> np.ndarray:
    """Constructed drift ``f(s)``.

    Metric-normalized: ``f = H^{-1/2} S(s) (P - Q)^{1/2} s`` with ``S``
    orthogonal, which satisfies the energy identity for any rotation field.

    Square-root: ``f = sqrt(s.T (P - Q) s) * H^{-1/2} d(s) / ||d(s)||`` with
    ``d`` the direction field (Euclidean norm).  Zero energy gives ``f = 0``;
    a vanishing direction at positive energy is an error.
    """
    s = _as_states(inst, s)
    half = metric_inv_sqrt(inst, s)
    if inst.parameterization == METRIC_NORMALIZED:
        y = np.einsum("ij,...j->...i", inst.energy_sqrt, s)
        rotated = np.einsum("...ij,...j->...i", inst.field.matrix(s, inst.p), y)
        out = np.einsum("...ij,...j->...i", half, rotated)
        return inst.drift_gain * out
    e = np.clip(energy(inst, s), 0.0, None)
    d = inst.field.evaluate(s)
    norm = np.linalg.norm(d, axis=-1)
    degenerate = (norm == 0.0) & (e > 0.0)
    if np.any(degenerate):
        raise ZeroDirectionField(
            "direction field vanished at a state with positive energy"
        )
    safe = np.where(norm == 0.0, 1.0, norm)
    unit = d / safe[..., None]
    out = np.sqrt(e)[..., None] * np.einsum("...ij,...j->...i", half, unit)
    return inst.drift_gain * out


def optimal_action(inst: QGInstance, s: np.ndarray) -> np.ndarray:
    """Certified optimal action ``a*(s) = -gamma p B(s)^{-1} g(s).T P f(s)``."""
    s = _as_states(inst, s)
    f = drift(inst, s)
    g = inst.coupling.evaluate(s)
    pf = np.einsum("ij,...j->...i", inst.P, f)
    rhs = inst.gamma * inst.p * np.einsum("...nm,...n->...m", g, pf)
    hess = control_hessian(inst, s)
    return -np.linalg.solve(hess, rhs[..., None])[..., 0]


def value(inst: QGInstance, s: np.ndarray) -> np.ndarray:
    """Optimal cost-to-go ``V(s) = s.T P s + b``."""
    s = _as_states(inst, s)
    return quad_form(inst.P, s) + noise_offset(inst).value


def reward_value(inst: QGInstance, s: np.ndarray) -> np.ndarray:
    """Optimal discounted reward ``-V(s)`` (rewards are negated costs)."""
    return -value(inst, s)


def stage_cost(inst: QGInstance, s: np.ndarray) -> np.ndarray:
    s = _as_states(inst, s)
    return quad_form(inst.Q, s)


def control_cost(inst: QGInstance, a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.shape[-1:] != (inst.m,):
        raise ShapeMismatch(
            f"action has trailing dimension {a.shape[-1:]}, expected ({inst.m},)"
        )
    return quad_form(inst.R, a)


def reward(inst: QGInstance, s: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Per-step reward ``-(s.T Q s + a.T R a)``."""
    return -(stage_cost(inst, s) + control_cost(inst, a))


def noise_offset(inst: QGInstance) -> NoiseOffset:
    """Constant value offset from noise: ``b = gamma tr(P Sigma) / (1 - gamma)``."""
    return inst._noise_offset


def expected_next_value(
    inst: QGInstance, s: np.ndarray, a: np.ndarray
) -> np.ndarray:
    """``E[V(f(s) + p g(s) a + w)]`` in closed form (no sampling).

    The Gaussian integral of a quadratic gives
    ``z.T P z + tr(P Sigma) + b`` with ``z`` the deterministic next mean.
    """
    s = _as_states(inst, s)
    a = np.asarray(a, dtype=float)
    g = inst.coupling.evaluate(s)
    z = drift(inst, s) + inst.p * np.einsum("...nm,...m->...n", g, a)
    off = noise_offset(inst)
    return quad_form(inst.P, z) + off.trace + off.value


def bellman_integrand(
    inst: QGInstance, s: np.ndarray, a: np.ndarray
) -> np.ndarray:
    """One-step cost-to-go estimate ``q(s) + rho(a) + gamma E[V(next)]``.

    The optimal action minimizes this in ``a``; at ``a*`` it equals ``V(s)``
    up to roundoff on a valid instance.
    """
    return (
        stage_cost(inst, s)
        + control_cost(inst, a)
        + inst.gamma * expected_next_value(inst, s, a)
    )


def bellman_residual(inst: QGInstance, s: np.ndarray) -> np.ndarray:
    """Absolute fixed-point defect ``|V(s) - (q + rho(a*) + gamma E[V])|``."""
    s = _as_states(inst, s)
    a = optimal_action(inst, s)
    return np.abs(value(inst, s) - bellman_integrand(inst, s, a))


def energy_residual(inst: QGInstance, s: np.ndarray) -> np.ndarray:
    """Absolute defect of the energy identity ``s.T(P-Q)s = f.T H f``."""
    s = _as_states(inst, s)
    f = drift(inst, s)
    h = discounted_metric(inst, s)
    return np.abs(energy(inst, s) - quad_form(h, f))
