"""Policy evaluation against the certified oracle.

Metrics are computed per trial under common random numbers:

* optimality gap: ``(v_pi - v_star) / (|v_star| + epsilon)`` where ``v_star``
  is the *analytic* optimal return at the trial's start state (no oracle
  rollout involved); negative when the policy underperforms,
* discounted regret: sum of per-step control-cost gaps between the oracle's
  counterfactual action and the policy's action at the states the policy
  actually visited,
* CRN regret variant: the oracle's rollout return minus the policy's return
  on the same noise and start state.

Aggregates carry percentile-bootstrap confidence intervals resampled over
trials with a stored seed, so every report is recomputable bit for bit.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import EmptyInput, IoFailure
from .generator import Fixture
from .qg import reward_value
from .sim import (
    InitialStateSchedule,
    NoiseStream,
    OraclePolicy,
    discounted_regret,
    paired_rollout,
    rollout,
)

DEFAULT_EPSILON = 1e-8


def opt_gap(v_pi: float, v_star: float, epsilon: float = DEFAULT_EPSILON) -> float:
    """Normalized return gap; zero when the policy matches the oracle."""
    return (v_pi - v_star) / (abs(v_star) + epsilon)


@dataclass(frozen=True)
class BootstrapSummary:
    mean: float
    lo: float
    hi: float

    def to_dict(self) -> dict:
        return {"mean": float(self.mean), "lo": float(self.lo), "hi": float(self.hi)}


def paired_bootstrap(
    values: np.ndarray,
    resamples: int = 10_000,
    level: float = 0.95,
    seed: int = 0,
) -> BootstrapSummary:
    """Percentile bootstrap of the mean over trials.

    ``values`` are per-trial quantities that are already paired differences
    under common random numbers, so resampling trials preserves the pairing.
    Deterministic given the seed.
    """
    values = np.asarray(values, dtype=float).reshape(-1)
    if values.size == 0:
        raise EmptyInput("bootstrap needs at least one value")
    if not 0.0 < level < 1.0:
        raise ValueError(f"confidence level must lie in (0, 1), got {level}")
    if resamples < 1:
        raise ValueError("need at least one resample")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, values.size, size=(int(resamples), values.size))
    means = values[idx].mean(axis=1)
    tail = 0.5 * (1.0 - level)
    lo, hi = np.quantile(means, [tail, 1.0 - tail])
    return BootstrapSummary(mean=float(values.mean()), lo=float(lo), hi=float(hi))


@dataclass(frozen=True)
class EvalProtocol:
    """Evaluation settings; defaults follow the benchmark conventions."""

    n_trials: int = 64
    horizon: int = 512
    epsilon: float = DEFAULT_EPSILON
    resamples: int = 10_000
    level: float = 0.95
    noise_seed: int = 1
    init_seed: int = 2
    bootstrap_seed: int = 3
    action_bound: float | None = None

    def to_dict(self) -> dict:
        return {
            "n_trials": int(self.n_trials),
            "horizon": int(self.horizon),
            "epsilon": float(self.epsilon),
            "resamples": int(self.resamples),
            "level": float(self.level),
            "noise_seed": int(self.noise_seed),
            "init_seed": int(self.init_seed),
            "bootstrap_seed": int(self.bootstrap_seed),
            "action_bound": None if self.action_bound is None else float(self.action_bound),
        }


@dataclass(frozen=True)
class TrialRecord:
    """Per-trial outcomes under common random numbers."""

    trial: int
    v_pi: float
    v_star: float
    v_star_crn: float
    opt_gap: float
    regret: float
    regret_crn: float

    def to_dict(self) -> dict:
        return {
            "trial": int(self.trial),
            "v_pi": float(self.v_pi),
            "v_star": float(self.v_star),
            "v_star_crn": float(self.v_star_crn),
            "opt_gap": float(self.opt_gap),
            "regret": float(self.regret),
            "regret_crn": float(self.regret_crn),
        }


@dataclass(frozen=True, eq=False)
class EvalReport:
    """Full evaluation outcome: per-trial records plus bootstrap aggregates."""

    fixture_checksum: str
    family: str
    policy: str
    protocol: EvalProtocol
    trials: tuple[TrialRecord, ...]
    aggregates: dict = dc_field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "fixture_checksum": self.fixture_checksum,
            "family": self.family,
            "policy": self.policy,
            "protocol": self.protocol.to_dict(),
            "trials": [t.to_dict() for t in self.trials],
            "aggregates": self.aggregates,
        }


METRIC_NAMES = ("opt_gap", "regret", "regret_crn")


def evaluate(fixture: Fixture, policy, protocol: EvalProtocol = EvalProtocol()) -> EvalReport:
    """Evaluate a policy on a fixture under common random numbers.

    Every trial reuses the same noise stream and start state for the policy
    and the oracle's reference rollout, so the CRN variant differences carry
    no between-trial noise.  The headline optimality gap is taken against the
    closed-form optimal return at the start state.
    """
    inst = fixture.instance()
    lo = np.asarray(fixture.validation.domain_lo, dtype=float)
    hi = np.asarray(fixture.validation.domain_hi, dtype=float)
    schedule = InitialStateSchedule(
        mode="random", seed=protocol.init_seed, lo=lo, hi=hi
    )
    noise = NoiseStream(seed=protocol.noise_seed, sigma=inst.Sigma)
    oracle = OraclePolicy(inst)
    records = []
    for trial in range(protocol.n_trials):
        paired = paired_rollout(
            inst,
            policy,
            schedule,
            noise,
            trial,
            protocol.horizon,
            action_bound=protocol.action_bound,
        )
        reference = rollout(
            inst, oracle, schedule, noise, trial, protocol.horizon
        )
        s0 = paired.trajectory.states[0]
        v_pi = paired.trajectory.discounted_return
        v_star = float(reward_value(inst, s0))
        v_star_crn = reference.discounted_return
        records.append(
            TrialRecord(
                trial=trial,
                v_pi=v_pi,
                v_star=v_star,
                v_star_crn=v_star_crn,
                opt_gap=opt_gap(v_pi, v_star, protocol.epsilon),
                regret=discounted_regret(paired, inst.gamma, protocol.horizon),
                regret_crn=v_star_crn - v_pi,
            )
        )
    aggregates = {}
    for name in METRIC_NAMES:
        values = np.array([getattr(r, name) for r in records])
        aggregates[name] = paired_bootstrap(
            values,
            resamples=protocol.resamples,
            level=protocol.level,
            seed=protocol.bootstrap_seed,
        ).to_dict()
    return EvalReport(
        fixture_checksum=fixture.checksum(),
        family=fixture.family,
        policy=getattr(policy, "descriptor", "unknown"),
        protocol=protocol,
        trials=tuple(records),
        aggregates=aggregates,
    )


CSV_COLUMNS = (
    "fixture_checksum",
    "family",
    "policy",
    "n_trials",
    "horizon",
    "opt_gap_mean",
    "opt_gap_lo",
    "opt_gap_hi",
    "regret_mean",
    "regret_lo",
    "regret_hi",
    "regret_crn_mean",
    "regret_crn_lo",
    "regret_crn_hi",
)


def report_csv_row(report: EvalReport) -> dict:
    row = {
        "fixture_checksum": report.fixture_checksum,
        "family": report.family,
        "policy": report.policy,
        "n_trials": report.protocol.n_trials,
        "horizon": report.protocol.horizon,
    }
    for name in METRIC_NAMES:
        agg = report.aggregates[name]
        row[f"{name}_mean"] = repr(agg["mean"])
        row[f"{name}_lo"] = repr(agg["lo"])
        row[f"{name}_hi"] = repr(agg["hi"])
    return row


def write_csv(reports: list[EvalReport], path: str) -> None:
    """One row per report; floats serialized via repr for exact round-trips."""
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
            writer.writeheader()
            for report in reports:
                writer.writerow(report_csv_row(report))
    except OSError as exc:
        raise IoFailure(f"could not write {path}: {exc}") from exc


def export_heatmap_csv(
    entries: list[tuple[float, float, float]], path: str, value_name: str = "value"
) -> None:
    """Pivot (x, y, value) triples into a dense CSV grid.

    Rows are sorted unique x values, columns sorted unique y values; missing
    cells are left empty.  Intended for difficulty sweeps such as control
    strength against system size.
    """
    if not entries:
        raise EmptyInput("heatmap needs at least one entry")
    xs = sorted({e[0] for e in entries})
    ys = sorted({e[1] for e in entries})
    table: dict[tuple[float, float], list[float]] = {}
    for x, y, v in entries:
        table.setdefault((x, y), []).append(float(v))
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([value_name] + [repr(y) for y in ys])
            for x in xs:
                row: list[str] = [repr(x)]
                for y in ys:
                    cell = table.get((x, y))
                    row.append("" if cell is None else repr(sum(cell) / len(cell)))
                writer.writerow(row)
    except OSError as exc:
        raise IoFailure(f"could not write {path}: {exc}") from exc
