"""Instance generation: sampling, validation, and fixture files.

A fixture is one validated benchmark instance frozen to disk: every matrix,
every field gain, the seeds that drove sampling, the validation trace with
its margins, and a difficulty score.  Files are YAML with a format version
and a content checksum so corruption and drift are loud.
"""

from __future__ import annotations

import hashlib
import json
import os
import warnings
from dataclasses import dataclass

import numpy as np
import yaml
from scipy.stats import qmc

from .errors import (
    ChecksumMismatch,
    EmptyGrid,
    IoFailure,
    NonFinite,
    NotSpd,
    RetryBudgetExhausted,
    SamplingExhausted,
    SchemaVersionMismatch,
    Unreachable,
)
from .families import (
    ArmParams,
    DifficultyWeights,
    NvdexParams,
    build_arm,
    build_nvdex,
    difficulty_index,
    nvdex_input_coupling,
    tune_instability,
)
from .linalg import random_orthogonal, random_spd, spd_sqrt, symmetrize
from .qg import QGInstance, bellman_residual, control_hessian, discounted_metric, value
from .sim import InitialStateSchedule, NoiseStream, OraclePolicy, rollout_returns

FORMAT_VERSION = 1


def evaluation_grid(
    lo: np.ndarray, hi: np.ndarray, size: int = 512, seed: int = 0
) -> np.ndarray:
    """Deterministic state grid: scrambled low-discrepancy points in the box,
    plus the center and the points one half-width out along each axis."""
    lo = np.asarray(lo, dtype=float).reshape(-1)
    hi = np.asarray(hi, dtype=float).reshape(-1)
    n = lo.shape[0]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        sampler = qmc.Sobol(d=n, scramble=True, seed=int(seed))
        unit = sampler.random(int(size))
    pts = lo + (hi - lo) * unit
    center = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    axis_pts = np.concatenate([center + np.diag(half), center - np.diag(half)])
    return np.vstack([pts, center[None, :], axis_pts])


@dataclass(frozen=True)
class SpdCheck:
    """Definiteness margins of the control curvature and metric over a grid."""

    passed: bool
    hessian_margin: float
    metric_margin: float

    def to_dict(self) -> dict:
        return {
            "passed": bool(self.passed),
            "hessian_margin": float(self.hessian_margin),
            "metric_margin": float(self.metric_margin),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SpdCheck":
        return cls(**data)


@dataclass(frozen=True)
class BellmanCheck:
    """Worst normalized fixed-point defect ``max |delta| / (1 + |V|)`` over a grid."""

    passed: bool
    max_residual: float
    epsilon: float

    def to_dict(self) -> dict:
        return {
            "passed": bool(self.passed),
            "max_residual": float(self.max_residual),
            "epsilon": float(self.epsilon),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BellmanCheck":
        return cls(**data)


@dataclass(frozen=True)
class BoundednessCheck:
    """Largest state norm reached by seeded oracle rollouts."""

    passed: bool
    max_norm: float
    bound: float
    horizon: int
    n_rollouts: int

    def to_dict(self) -> dict:
        return {
            "passed": bool(self.passed),
            "max_norm": float(self.max_norm),
            "bound": float(self.bound),
            "horizon": int(self.horizon),
            "n_rollouts": int(self.n_rollouts),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BoundednessCheck":
        return cls(**data)


@dataclass(frozen=True)
class ValidationTrace:
    """Everything needed to re-run validation exactly as it first ran."""

    domain_lo: tuple[float, ...]
    domain_hi: tuple[float, ...]
    grid_size: int
    grid_seed: int
    noise_seed: int
    init_seed: int
    spd: SpdCheck
    bellman: BellmanCheck
    boundedness: BoundednessCheck

    @property
    def passed(self) -> bool:
        return self.spd.passed and self.bellman.passed and self.boundedness.passed

    def to_dict(self) -> dict:
        return {
            "domain_lo": [float(x) for x in self.domain_lo],
            "domain_hi": [float(x) for x in self.domain_hi],
            "grid_size": int(self.grid_size),
            "grid_seed": int(self.grid_seed),
            "noise_seed": int(self.noise_seed),
            "init_seed": int(self.init_seed),
            "spd": self.spd.to_dict(),
            "bellman": self.bellman.to_dict(),
            "boundedness": self.boundedness.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ValidationTrace":
        return cls(
            domain_lo=tuple(data["domain_lo"]),
            domain_hi=tuple(data["domain_hi"]),
            grid_size=data["grid_size"],
            grid_seed=data["grid_seed"],
            noise_seed=data["noise_seed"],
            init_seed=data["init_seed"],
            spd=SpdCheck.from_dict(data["spd"]),
            bellman=BellmanCheck.from_dict(data["bellman"]),
            boundedness=BoundednessCheck.from_dict(data["boundedness"]),
        )


def validate_spd(inst: QGInstance, grid: np.ndarray) -> SpdCheck:
    """Smallest eigenvalues of ``B(s)`` and ``H(s)`` over the grid; both must
    be strictly positive."""
    if grid.shape[0] == 0:
        raise EmptyGrid("definiteness check needs at least one grid point")
    hess_eigs = np.linalg.eigvalsh(control_hessian(inst, grid))
    metric_eigs = np.linalg.eigvalsh(discounted_metric(inst, grid))
    hessian_margin = float(hess_eigs[..., 0].min())
    metric_margin = float(metric_eigs[..., 0].min())
    return SpdCheck(
        passed=bool(hessian_margin > 0.0 and metric_margin > 0.0),
        hessian_margin=hessian_margin,
        metric_margin=metric_margin,
    )


def validate_bellman(
    inst: QGInstance, grid: np.ndarray, epsilon: float = 1e-8
) -> BellmanCheck:
    """Exact-oracle fixed-point check on the grid.

    The expectation over noise is evaluated in closed form, never sampled, so
    the tolerance can sit at numerical roundoff scale.
    """
    if grid.shape[0] == 0:
        raise EmptyGrid("fixed-point check needs at least one grid point")
    residual = bellman_residual(inst, grid) / (1.0 + np.abs(value(inst, grid)))
    worst = float(residual.max())
    return BellmanCheck(passed=bool(worst <= epsilon), max_residual=worst, epsilon=epsilon)


def validate_boundedness(
    inst: QGInstance,
    domain_lo: np.ndarray,
    domain_hi: np.ndarray,
    horizon: int = 512,
    bound: float | None = None,
    n_rollouts: int = 8,
    noise_seed: int = 0,
    init_seed: int = 0,
) -> BoundednessCheck:
    """Seeded oracle rollouts from random starts must stay inside ``bound``.

    Default bound is 1000x the largest coordinate radius of the domain.
    """
    lo = np.asarray(domain_lo, dtype=float).reshape(-1)
    hi = np.asarray(domain_hi, dtype=float).reshape(-1)
    if bound is None:
        bound = 1e3 * float(np.max(np.abs(np.concatenate([lo, hi]))))
    schedule = InitialStateSchedule(mode="random", seed=init_seed, lo=lo, hi=hi)
    noise = NoiseStream(seed=noise_seed, sigma=inst.Sigma)
    try:
        batch = rollout_returns(
            inst, OraclePolicy(inst), schedule, noise, list(range(n_rollouts)), horizon
        )
        max_norm = float(batch.max_state_norms.max())
    except NonFinite:
        max_norm = float("inf")
    return BoundednessCheck(
        passed=bool(max_norm <= bound),
        max_norm=max_norm,
        bound=float(bound),
        horizon=int(horizon),
        n_rollouts=int(n_rollouts),
    )


@dataclass(frozen=True)
class ValidationSettings:
    """Validator knobs shared by generation and re-validation."""

    grid_size: int = 512
    epsilon: float = 1e-8
    horizon: int = 512
    n_rollouts: int = 8
    bound_factor: float = 1e3


def validate_instance(
    inst: QGInstance,
    domain_lo: np.ndarray,
    domain_hi: np.ndarray,
    grid_seed: int,
    noise_seed: int,
    init_seed: int,
    settings: ValidationSettings = ValidationSettings(),
) -> ValidationTrace:
    """Run all three validators and bundle the trace."""
    lo = np.asarray(domain_lo, dtype=float).reshape(-1)
    hi = np.asarray(domain_hi, dtype=float).reshape(-1)
    grid = evaluation_grid(lo, hi, settings.grid_size, grid_seed)
    spd = validate_spd(inst, grid)
    bellman = validate_bellman(inst, grid, settings.epsilon)
    bound = settings.bound_factor * float(np.max(np.abs(np.concatenate([lo, hi]))))
    boundedness = validate_boundedness(
        inst,
        lo,
        hi,
        horizon=settings.horizon,
        bound=bound,
        n_rollouts=settings.n_rollouts,
        noise_seed=noise_seed,
        init_seed=init_seed,
    )
    return ValidationTrace(
        domain_lo=tuple(float(x) for x in lo),
        domain_hi=tuple(float(x) for x in hi),
        grid_size=int(settings.grid_size),
        grid_seed=int(grid_seed),
        noise_seed=int(noise_seed),
        init_seed=int(init_seed),
        spd=spd,
        bellman=bellman,
        boundedness=boundedness,
    )


@dataclass(frozen=True)
class ArmRanges:
    """Sampling box for arm parameters (inclusive integer bounds)."""

    n_joints: tuple[int, int] = (1, 4)
    p: tuple[float, float] = (0.4, 1.0)
    gamma: tuple[float, float] = (0.85, 0.95)
    cond_P: tuple[float, float] = (1.0, 10.0)
    q_frac: tuple[float, float] = (0.2, 0.9)
    r_scale: tuple[float, float] = (0.1, 2.0)
    cond_R: tuple[float, float] = (1.0, 5.0)
    sigma_scale: tuple[float, float] = (0.0, 0.02)
    cond_sigma: tuple[float, float] = (1.0, 3.0)
    alpha0: tuple[float, float] = (0.0, 0.6)
    beta0: tuple[float, float] = (0.0, 0.6)
    kappa1: tuple[float, float] = (0.5, 3.0)
    kappa2: tuple[float, float] = (0.5, 3.0)
    g0: tuple[float, float] = (0.0, 0.5)
    tau: tuple[float, float] = (0.05, 0.2)


@dataclass(frozen=True)
class NvdexRanges:
    """Sampling box for vehicle parameters.

    With ``rho_target`` set (a range), instances are tuned unstable and ``Q``
    comes out of the tuning; otherwise ``Q`` follows the same spectral-fraction
    recipe as the arm.
    """

    K: tuple[int, int] = (1, 2)
    r_v: tuple[int, int] = (1, 2)
    r_w: tuple[int, int] = (1, 2)
    p: tuple[float, float] = (0.4, 1.0)
    gamma: tuple[float, float] = (0.85, 0.95)
    cond_P: tuple[float, float] = (1.0, 8.0)
    q_frac: tuple[float, float] = (0.2, 0.9)
    r_scale: tuple[float, float] = (0.5, 2.0)
    cond_R: tuple[float, float] = (1.0, 4.0)
    sigma_scale: tuple[float, float] = (0.0, 0.02)
    cond_sigma: tuple[float, float] = (1.0, 3.0)
    alpha: tuple[float, float] = (0.0, 0.6)
    kappa: tuple[float, float] = (0.5, 3.0)
    tau: tuple[float, float] = (0.05, 0.2)
    rho_target: tuple[float, float] | None = None
    cross_coupling: bool = False


DEFAULT_ARM_RANGES = ArmRanges()
DEFAULT_NVDEX_RANGES = NvdexRanges()


def _uniform(rng: np.random.Generator, bounds: tuple[float, float]) -> float:
    lo, hi = bounds
    if hi < lo:
        raise ValueError(f"range ({lo}, {hi}) is inverted")
    if hi == lo:
        return float(lo)
    return float(rng.uniform(lo, hi))


def _int_uniform(rng: np.random.Generator, bounds: tuple[int, int]) -> int:
    lo, hi = bounds
    if hi < lo:
        raise ValueError(f"range ({lo}, {hi}) is inverted")
    return int(rng.integers(lo, hi + 1))


def _sample_cost_matrices(
    rng: np.random.Generator,
    n: int,
    m: int,
    gamma: float,
    cond_P: tuple[float, float],
    q_frac: tuple[float, float],
    r_scale: tuple[float, float],
    cond_R: tuple[float, float],
    sigma_scale: tuple[float, float],
    cond_sigma: tuple[float, float],
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Draw (P, Q, R, Sigma) with closed-loop stability built in.

    ``Q`` is a spectral fraction of ``P``: ``Q = P^{1/2} W P^{1/2}`` with the
    eigenvalues of ``W`` uniform in ``[q_lo, q_hi]`` where the lower end is
    lifted above ``1 - gamma``.  That keeps ``P - Q`` strictly positive (the
    drift has energy to spend) and makes the oracle's closed loop a strict
    contraction in the ``P`` norm, so boundedness validation is not a matter
    of luck.
    """
    P = random_spd(n, _uniform(rng, cond_P) if n > 1 else 1.0, rng)
    q_lo = max(q_frac[0], 1.0 - gamma + 0.05)
    q_hi = max(q_frac[1], q_lo)
    fractions = rng.uniform(q_lo, q_hi, size=n)
    basis = random_orthogonal(n, rng)
    w = symmetrize(basis @ np.diag(fractions) @ basis.T)
    p_half = spd_sqrt(P)
    Q = symmetrize(p_half @ w @ p_half)
    R = _uniform(rng, r_scale) * random_spd(
        m, _uniform(rng, cond_R) if m > 1 else 1.0, rng
    )
    Sigma = _uniform(rng, sigma_scale) * random_spd(
        n, _uniform(rng, cond_sigma) if n > 1 else 1.0, rng
    )
    return P, Q, R, Sigma


def sample_arm_params(ranges: ArmRanges, rng: np.random.Generator) -> ArmParams:
    """Draw one arm parameter set (fixed draw order keeps this reproducible)."""
    n_joints = _int_uniform(rng, ranges.n_joints)
    gamma = _uniform(rng, ranges.gamma)
    p = _uniform(rng, ranges.p)
    n = 2 * n_joints
    P, Q, R, Sigma = _sample_cost_matrices(
        rng,
        n,
        n_joints,
        gamma,
        ranges.cond_P,
        ranges.q_frac,
        ranges.r_scale,
        ranges.cond_R,
        ranges.sigma_scale,
        ranges.cond_sigma,
    )
    return ArmParams(
        n_joints=n_joints,
        p=p,
        gamma=gamma,
        Q=Q,
        R=R,
        P=P,
        Sigma=Sigma,
        alpha0=_uniform(rng, ranges.alpha0),
        beta0=_uniform(rng, ranges.beta0),
        kappa1=_uniform(rng, ranges.kappa1),
        kappa2=_uniform(rng, ranges.kappa2),
        g0=_uniform(rng, ranges.g0),
        tau=_uniform(rng, ranges.tau),
    )


def sample_nvdex_params(ranges: NvdexRanges, rng: np.random.Generator) -> NvdexParams:
    """Draw one vehicle parameter set.

    For unstable draws the control cost is shrunk until the tuned mix
    ``Q = beta P`` keeps the oracle's closed loop contractive (one-step
    factor at most 0.9 in the ``P`` norm); without that floor a tuned
    instance could pass every algebraic check yet drift unboundedly.
    """
    K = _int_uniform(rng, ranges.K)
    r_v = _int_uniform(rng, ranges.r_v)
    r_w = _int_uniform(rng, ranges.r_w)
    gamma = _uniform(rng, ranges.gamma)
    p = _uniform(rng, ranges.p)
    tau = _uniform(rng, ranges.tau)
    n = (3 + r_v + r_w) * K
    m = 2 * K
    P, Q, R, Sigma = _sample_cost_matrices(
        rng,
        n,
        m,
        gamma,
        ranges.cond_P,
        ranges.q_frac,
        ranges.r_scale,
        ranges.cond_R,
        ranges.sigma_scale,
        ranges.cond_sigma,
    )
    alpha = _uniform(rng, ranges.alpha)
    kappa = _uniform(rng, ranges.kappa)
    if ranges.rho_target is None:
        return NvdexParams(
            K=K,
            r_v=r_v,
            r_w=r_w,
            p=p,
            gamma=gamma,
            R=R,
            P=P,
            Sigma=Sigma,
            alpha=alpha,
            kappa=kappa,
            tau=tau,
            Q=Q,
            cross_coupling=ranges.cross_coupling,
        )
    rho_target = _uniform(rng, ranges.rho_target)
    coupling = nvdex_input_coupling(K, r_v, r_w, tau)
    beta_floor = 1.0 - 0.81 * gamma
    R_cur = R
    for _ in range(60):
        try:
            tuned = tune_instability(P, R_cur, gamma, coupling.matrix, p, rho_target)
        except (NotSpd, Unreachable) as exc:
            raise SamplingExhausted(
                "metric went singular before the tuned mix became contractive"
            ) from exc
        if tuned.beta > beta_floor:
            return NvdexParams(
                K=K,
                r_v=r_v,
                r_w=r_w,
                p=p,
                gamma=gamma,
                R=tuned.R,
                P=P,
                Sigma=Sigma,
                alpha=alpha,
                kappa=kappa,
                tau=tau,
                rho_target=rho_target,
                cross_coupling=ranges.cross_coupling,
            )
        R_cur = 0.5 * tuned.R
    raise SamplingExhausted(
        "could not reach a contractive tuned mix within the halving budget"
    )


def sample_params(
    family: str, ranges: ArmRanges | NvdexRanges, rng: np.random.Generator
) -> ArmParams | NvdexParams:
    if family == "arm":
        return sample_arm_params(ranges, rng)
    if family == "nvdex":
        return sample_nvdex_params(ranges, rng)
    raise ValueError(f"unknown family {family!r}")


def build_instance(params: ArmParams | NvdexParams) -> QGInstance:
    if isinstance(params, ArmParams):
        return build_arm(params)
    return build_nvdex(params)


@dataclass(frozen=True, eq=False)
class Fixture:
    """A validated instance frozen to disk together with its generation metadata."""

    family: str
    index: int
    params: dict
    instance_data: dict
    seeds: dict
    validation: ValidationTrace
    difficulty: float
    difficulty_weights: dict
    format_version: int = FORMAT_VERSION

    def instance(self) -> QGInstance:
        return QGInstance.from_dict(self.instance_data)

    @property
    def filename(self) -> str:
        return f"{self.family}_{self.index:04d}_{self.seeds['generation']}.yaml"

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "index": int(self.index),
            "params": self.params,
            "instance": self.instance_data,
            "seeds": {k: int(v) for k, v in sorted(self.seeds.items())},
            "validation": self.validation.to_dict(),
            "difficulty": float(self.difficulty),
            "difficulty_weights": self.difficulty_weights,
        }

    @classmethod
    def from_dict(cls, data: dict, format_version: int = FORMAT_VERSION) -> "Fixture":
        return cls(
            family=data["family"],
            index=data["index"],
            params=data["params"],
            instance_data=data["instance"],
            seeds=dict(data["seeds"]),
            validation=ValidationTrace.from_dict(data["validation"]),
            difficulty=data["difficulty"],
            difficulty_weights=dict(data["difficulty_weights"]),
            format_version=format_version,
        )

    def checksum(self) -> str:
        return fixture_checksum(self.to_dict())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Fixture):
            return NotImplemented
        return self.to_dict() == other.to_dict()


def fixture_checksum(payload: dict) -> str:
    canonical = yaml.safe_dump(payload, sort_keys=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def export_fixture(fixture: Fixture, path: str) -> str:
    """Write the fixture atomically; returns the file path actually written.

    ``path`` may be a directory, in which case the canonical
    ``<family>_<index>_<seed>.yaml`` name is used.
    """
    if os.path.isdir(path):
        path = os.path.join(path, fixture.filename)
    payload = fixture.to_dict()
    doc = {
        "format_version": int(fixture.format_version),
        "checksum": fixture_checksum(payload),
        "fixture": payload,
    }
    tmp = path + ".tmp"
    try:
        with open(tmp, "w", encoding="utf-8") as fh:
            yaml.safe_dump(doc, fh, sort_keys=True)
        os.replace(tmp, path)
    except OSError as exc:
        raise IoFailure(f"could not write fixture to {path}: {exc}") from exc
    return path


def import_fixture(path: str) -> Fixture:
    """Read a fixture file, verifying format version and checksum."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise IoFailure(f"could not read fixture from {path}: {exc}") from exc
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ChecksumMismatch(f"{path} is unparseable (truncated?): {exc}") from exc
    if (
        not isinstance(doc, dict)
        or "fixture" not in doc
        or "checksum" not in doc
        or "format_version" not in doc
    ):
        raise ChecksumMismatch(f"{path} does not look like a fixture file")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise SchemaVersionMismatch(
            f"{path} has format version {version!r}, supported: {FORMAT_VERSION}"
        )
    recomputed = fixture_checksum(doc["fixture"])
    if recomputed != doc["checksum"]:
        raise ChecksumMismatch(
            f"{path} checksum {doc['checksum'][:12]}... does not match "
            f"content {recomputed[:12]}..."
        )
    try:
        return Fixture.from_dict(doc["fixture"], format_version=version)
    except (KeyError, TypeError) as exc:
        raise ChecksumMismatch(f"{path} has a damaged fixture payload: {exc}") from exc


def revalidate(fixture: Fixture) -> ValidationTrace:
    """Re-run the validators with the settings and seeds stored in the fixture."""
    inst = fixture.instance()
    stored = fixture.validation
    settings = ValidationSettings(
        grid_size=stored.grid_size,
        epsilon=stored.bellman.epsilon,
        horizon=stored.boundedness.horizon,
        n_rollouts=stored.boundedness.n_rollouts,
        bound_factor=stored.boundedness.bound
        / max(np.max(np.abs(np.concatenate([stored.domain_lo, stored.domain_hi]))), 1e-300),
    )
    return validate_instance(
        inst,
        np.asarray(stored.domain_lo),
        np.asarray(stored.domain_hi),
        grid_seed=stored.grid_seed,
        noise_seed=stored.noise_seed,
        init_seed=stored.init_seed,
        settings=settings,
    )


@dataclass(frozen=True)
class GeneratorConfig:
    """Dataset generation settings.

    ``families`` cycles over the requested instances, so ("arm", "nvdex")
    alternates them.  ``jobs`` is accepted for interface stability but
    generation is sequential: determinism is part of the output contract.
    """

    count: int
    master_seed: int
    out_dir: str
    families: tuple[str, ...] = ("arm",)
    arm_ranges: ArmRanges = DEFAULT_ARM_RANGES
    nvdex_ranges: NvdexRanges = DEFAULT_NVDEX_RANGES
    settings: ValidationSettings = ValidationSettings()
    retry_budget: int = 20
    difficulty_weights: DifficultyWeights = DifficultyWeights()
    jobs: int = 1

    def __post_init__(self) -> None:
        if self.count < 1:
            raise ValueError("dataset needs at least one instance")
        if not self.families:
            raise ValueError("at least one family is required")
        for fam in self.families:
            if fam not in ("arm", "nvdex"):
                raise ValueError(f"unknown family {fam!r}")


def generate_dataset(config: GeneratorConfig) -> dict:
    """Generate, validate and export ``config.count`` fixtures.

    Per slot: sample parameters, build the instance, run the validators;
    rejected draws are retried on fresh child seeds up to the retry budget.
    Writes one YAML per fixture plus a ``summary.json`` and returns the
    summary dict.  Byte-identical across runs with the same config.
    """
    os.makedirs(config.out_dir, exist_ok=True)
    root = np.random.SeedSequence(config.master_seed)
    slot_seqs = root.spawn(config.count)
    files: list[str] = []
    difficulties: list[float] = []
    family_counts: dict[str, int] = {}
    rejections = 0
    attempts_total = 0
    margins = {
        "hessian_min": float("inf"),
        "metric_min": float("inf"),
        "bellman_max": 0.0,
        "max_norm": 0.0,
    }
    for index in range(config.count):
        family = config.families[index % len(config.families)]
        ranges = config.arm_ranges if family == "arm" else config.nvdex_ranges
        attempt_seqs = slot_seqs[index].spawn(config.retry_budget)
        fixture = None
        for attempt_seq in attempt_seqs:
            attempts_total += 1
            rng = np.random.default_rng(attempt_seq)
            gen_seed, noise_seed, init_seed, grid_seed = (
                int(x) for x in attempt_seq.generate_state(4, np.uint64)
            )
            try:
                params = sample_params(family, ranges, rng)
                inst = build_instance(params)
            except SamplingExhausted:
                rejections += 1
                continue
            lo = -np.ones(inst.n)
            hi = np.ones(inst.n)
            trace = validate_instance(
                inst,
                lo,
                hi,
                grid_seed=grid_seed,
                noise_seed=noise_seed,
                init_seed=init_seed,
                settings=config.settings,
            )
            if not trace.passed:
                rejections += 1
                continue
            difficulty = difficulty_index(params, config.difficulty_weights)
            fixture = Fixture(
                family=family,
                index=index,
                params=params.scalar_summary(),
                instance_data=inst.to_dict(),
                seeds={
                    "generation": gen_seed,
                    "noise": noise_seed,
                    "init": init_seed,
                    "grid": grid_seed,
                },
                validation=trace,
                difficulty=difficulty,
                difficulty_weights=config.difficulty_weights.to_dict(),
            )
            break
        if fixture is None:
            raise RetryBudgetExhausted(
                f"slot {index} ({family}) failed validation "
                f"{config.retry_budget} times"
            )
        path = export_fixture(fixture, config.out_dir)
        files.append(os.path.basename(path))
        difficulties.append(fixture.difficulty)
        family_counts[family] = family_counts.get(family, 0) + 1
        margins["hessian_min"] = min(
            margins["hessian_min"], fixture.validation.spd.hessian_margin
        )
        margins["metric_min"] = min(
            margins["metric_min"], fixture.validation.spd.metric_margin
        )
        margins["bellman_max"] = max(
            margins["bellman_max"], fixture.validation.bellman.max_residual
        )
        margins["max_norm"] = max(
            margins["max_norm"], fixture.validation.boundedness.max_norm
        )
    summary = {
        "count": config.count,
        "written": len(files),
        "out_dir": config.out_dir,
        "master_seed": config.master_seed,
        "families": dict(sorted(family_counts.items())),
        "attempts": attempts_total,
        "rejections": rejections,
        "files": files,
        "difficulty": {
            "min": min(difficulties),
            "max": max(difficulties),
            "mean": sum(difficulties) / len(difficulties),
            "values": difficulties,
        },
        "margins": margins,
    }
    summary_path = os.path.join(config.out_dir, "summary.json")
    try:
        with open(summary_path, "w", encoding="utf-8") as fh:
            json.dump(summary, fh, sort_keys=True, indent=2)
            fh.write("\n")
    except OSError as exc:
        raise IoFailure(f"could not write {summary_path}: {exc}") from exc
    return summary
