"""Command-line interface.

Subcommands: ``generate``, ``validate``, ``eval``, ``rollout``, ``dump-noise``.
Every run echoes its effective configuration to stdout before doing work.
Exit codes: 0 success, 1 domain failure (validation failed, rollout diverged,
policy broke), 2 usage or input-file problems.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np
import yaml

from .errors import (
    ChecksumMismatch,
    EmptyGrid,
    EmptyInput,
    InvalidHorizon,
    IoFailure,
    LengthMismatch,
    NonFinite,
    NotPsd,
    NotSpd,
    PolicyFailure,
    QGBenchError,
    RetryBudgetExhausted,
    SamplingExhausted,
    SchemaVersionMismatch,
    ShapeMismatch,
    Unreachable,
    ZeroDirectionField,
)
from .evaluation import EvalProtocol, evaluate, write_csv
from .generator import (
    DEFAULT_NVDEX_RANGES,
    GeneratorConfig,
    ValidationSettings,
    generate_dataset,
    import_fixture,
    revalidate,
)
from .sim import (
    InitialStateSchedule,
    NoiseStream,
    dump_noise,
    dump_trajectory,
    paired_rollout,
    parse_policy_spec,
)

USAGE_ERRORS = (
    IoFailure,
    SchemaVersionMismatch,
    ChecksumMismatch,
    InvalidHorizon,
    ShapeMismatch,
    EmptyGrid,
    EmptyInput,
    LengthMismatch,
    ValueError,
)
DOMAIN_ERRORS = (
    NotPsd,
    NotSpd,
    NonFinite,
    PolicyFailure,
    RetryBudgetExhausted,
    SamplingExhausted,
    Unreachable,
    ZeroDirectionField,
)


def _echo_config(command: str, options: dict) -> None:
    doc = {"command": command, "options": options}
    sys.stdout.write("# effective configuration\n")
    sys.stdout.write(yaml.safe_dump(doc, sort_keys=True))
    sys.stdout.write("# ---\n")


def _default_out_dir() -> str:
    return os.environ.get("QGBENCH_OUT", "fixtures")


def _add_generate(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("generate", help="sample, validate and export fixtures")
    p.add_argument("--family", choices=("arm", "nvdex", "mixed"), default="arm")
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="output directory (env QGBENCH_OUT)")
    p.add_argument("--grid-size", type=int, default=512)
    p.add_argument("--epsilon", type=float, default=1e-8)
    p.add_argument("--horizon", type=int, default=512)
    p.add_argument("--rollouts", type=int, default=8)
    p.add_argument("--bound-factor", type=float, default=1e3)
    p.add_argument("--retry-budget", type=int, default=20)
    p.add_argument(
        "--unstable-rho",
        default=None,
        metavar="LO:HI",
        help="tune vehicle fixtures to an open-loop radius in this range",
    )
    p.add_argument("--jobs", type=int, default=1, help="accepted; runs sequentially")


def _run_generate(args: argparse.Namespace) -> int:
    out_dir = args.out if args.out is not None else _default_out_dir()
    families = ("arm", "nvdex") if args.family == "mixed" else (args.family,)
    nvdex_ranges = DEFAULT_NVDEX_RANGES
    if args.unstable_rho is not None:
        try:
            lo_s, hi_s = args.unstable_rho.split(":", 1)
            rho_range = (float(lo_s), float(hi_s))
        except ValueError as exc:
            raise ValueError(
                f"--unstable-rho wants LO:HI, got {args.unstable_rho!r}"
            ) from exc
        nvdex_ranges = dataclasses.replace(nvdex_ranges, rho_target=rho_range)
    if args.horizon < 1:
        raise InvalidHorizon(f"horizon must be positive, got {args.horizon}")
    config = GeneratorConfig(
        count=args.count,
        master_seed=args.seed,
        out_dir=out_dir,
        families=families,
        nvdex_ranges=nvdex_ranges,
        settings=ValidationSettings(
            grid_size=args.grid_size,
            epsilon=args.epsilon,
            horizon=args.horizon,
            n_rollouts=args.rollouts,
            bound_factor=args.bound_factor,
        ),
        retry_budget=args.retry_budget,
        jobs=args.jobs,
    )
    _echo_config(
        "generate",
        {
            "family": args.family,
            "count": args.count,
            "seed": args.seed,
            "out": out_dir,
            "grid_size": args.grid_size,
            "epsilon": args.epsilon,
            "horizon": args.horizon,
            "rollouts": args.rollouts,
            "bound_factor": args.bound_factor,
            "retry_budget": args.retry_budget,
            "unstable_rho": args.unstable_rho,
            "jobs": args.jobs,
        },
    )
    summary = generate_dataset(config)
    sys.stdout.write(json.dumps(summary, sort_keys=True, indent=2) + "\n")
    return 0


def _add_validate(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("validate", help="re-run validation on fixture files")
    p.add_argument("fixtures", nargs="+", help="fixture YAML files")


def _run_validate(args: argparse.Namespace) -> int:
    _echo_config("validate", {"fixtures": list(args.fixtures)})
    all_passed = True
    for path in args.fixtures:
        fixture = import_fixture(path)
        trace = revalidate(fixture)
        status = "PASS" if trace.passed else "FAIL"
        all_passed = all_passed and trace.passed
        sys.stdout.write(
            f"{status} {path}: hessian_margin={trace.spd.hessian_margin:.6e} "
            f"metric_margin={trace.spd.metric_margin:.6e} "
            f"bellman_max={trace.bellman.max_residual:.6e} "
            f"max_norm={trace.boundedness.max_norm:.6e}\n"
        )
    return 0 if all_passed else 1


def _add_eval(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("eval", help="evaluate a policy against the oracle")
    p.add_argument("fixture", help="fixture YAML file")
    p.add_argument(
        "--policy",
        default="oracle",
        help="oracle | zero | scaled:<kappa> | linear:<json gain file> | exec:<command>",
    )
    p.add_argument("--trials", type=int, default=64)
    p.add_argument("--horizon", type=int, default=512)
    p.add_argument("--epsilon", type=float, default=1e-8)
    p.add_argument("--resamples", type=int, default=10_000)
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--noise-seed", type=int, default=1)
    p.add_argument("--init-seed", type=int, default=2)
    p.add_argument("--bootstrap-seed", type=int, default=3)
    p.add_argument("--action-bound", type=float, default=None)
    p.add_argument("--json", dest="json_out", default=None, help="write full report")
    p.add_argument("--csv", dest="csv_out", default=None, help="write summary row")


def _run_eval(args: argparse.Namespace) -> int:
    if args.horizon < 1:
        raise InvalidHorizon(f"horizon must be positive, got {args.horizon}")
    if args.trials < 1:
        raise ValueError(f"need at least one trial, got {args.trials}")
    _echo_config(
        "eval",
        {
            "fixture": args.fixture,
            "policy": args.policy,
            "trials": args.trials,
            "horizon": args.horizon,
            "epsilon": args.epsilon,
            "resamples": args.resamples,
            "level": args.level,
            "noise_seed": args.noise_seed,
            "init_seed": args.init_seed,
            "bootstrap_seed": args.bootstrap_seed,
            "action_bound": args.action_bound,
            "json": args.json_out,
            "csv": args.csv_out,
        },
    )
    fixture = import_fixture(args.fixture)
    inst = fixture.instance()
    protocol = EvalProtocol(
        n_trials=args.trials,
        horizon=args.horizon,
        epsilon=args.epsilon,
        resamples=args.resamples,
        level=args.level,
        noise_seed=args.noise_seed,
        init_seed=args.init_seed,
        bootstrap_seed=args.bootstrap_seed,
        action_bound=args.action_bound,
    )
    policy = parse_policy_spec(args.policy, inst)
    try:
        report = evaluate(fixture, policy, protocol)
    finally:
        close = getattr(policy, "close", None)
        if close is not None:
            close()
    payload = report.to_dict()
    if args.json_out:
        try:
            with open(args.json_out, "w", encoding="utf-8") as fh:
                json.dump(payload, fh, sort_keys=True, indent=2)
                fh.write("\n")
        except OSError as exc:
            raise IoFailure(f"could not write {args.json_out}: {exc}") from exc
    if args.csv_out:
        write_csv([report], args.csv_out)
    sys.stdout.write(
        json.dumps(
            {"policy": report.policy, "aggregates": report.aggregates},
            sort_keys=True,
            indent=2,
        )
        + "\n"
    )
    return 0


def _add_rollout(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("rollout", help="roll one trial and dump the trajectory")
    p.add_argument("fixture", help="fixture YAML file")
    p.add_argument("--policy", default="oracle")
    p.add_argument("--trial", type=int, default=0)
    p.add_argument("--horizon", type=int, default=100)
    p.add_argument("--noise-seed", type=int, default=1)
    p.add_argument("--init-seed", type=int, default=2)
    p.add_argument("--action-bound", type=float, default=None)
    p.add_argument("--out", default=None, help="trajectory JSON-lines file")
    p.add_argument("--noise-out", default=None, help="also dump the noise vectors")


def _run_rollout(args: argparse.Namespace) -> int:
    if args.horizon < 1:
        raise InvalidHorizon(f"horizon must be positive, got {args.horizon}")
    _echo_config(
        "rollout",
        {
            "fixture": args.fixture,
            "policy": args.policy,
            "trial": args.trial,
            "horizon": args.horizon,
            "noise_seed": args.noise_seed,
            "init_seed": args.init_seed,
            "action_bound": args.action_bound,
            "out": args.out,
            "noise_out": args.noise_out,
        },
    )
    fixture = import_fixture(args.fixture)
    inst = fixture.instance()
    lo = np.asarray(fixture.validation.domain_lo, dtype=float)
    hi = np.asarray(fixture.validation.domain_hi, dtype=float)
    schedule = InitialStateSchedule(mode="random", seed=args.init_seed, lo=lo, hi=hi)
    noise = NoiseStream(seed=args.noise_seed, sigma=inst.Sigma)
    policy = parse_policy_spec(args.policy, inst)
    try:
        paired = paired_rollout(
            inst,
            policy,
            schedule,
            noise,
            args.trial,
            args.horizon,
            action_bound=args.action_bound,
        )
    finally:
        close = getattr(policy, "close", None)
        if close is not None:
            close()
    traj = paired.trajectory
    if args.out:
        dump_trajectory(
            traj,
            args.out,
            oracle_actions=paired.oracle_actions,
            fixture_checksum=fixture.checksum(),
            inst=inst,
        )
    if args.noise_out:
        dump_noise(noise, [args.trial], args.horizon, args.noise_out)
    sys.stdout.write(
        json.dumps(
            {
                "trial": traj.trial,
                "policy": traj.policy,
                "discounted_return": traj.discounted_return,
                "final_state": traj.states[-1].tolist(),
            },
            sort_keys=True,
        )
        + "\n"
    )
    return 0


def _add_dump_noise(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser(
        "dump-noise", help="write the exact noise vectors for chosen trials"
    )
    p.add_argument("fixture", help="fixture YAML file")
    p.add_argument("--trials", type=int, default=1, help="dump trials 0..N-1")
    p.add_argument("--horizon", type=int, default=100)
    p.add_argument("--seed", type=int, default=1, help="noise stream seed")
    p.add_argument("--out", required=True)


def _run_dump_noise(args: argparse.Namespace) -> int:
    if args.horizon < 1:
        raise InvalidHorizon(f"horizon must be positive, got {args.horizon}")
    if args.trials < 1:
        raise ValueError(f"need at least one trial, got {args.trials}")
    _echo_config(
        "dump-noise",
        {
            "fixture": args.fixture,
            "trials": args.trials,
            "horizon": args.horizon,
            "seed": args.seed,
            "out": args.out,
        },
    )
    fixture = import_fixture(args.fixture)
    inst = fixture.instance()
    noise = NoiseStream(seed=args.seed, sigma=inst.Sigma)
    dump_noise(noise, list(range(args.trials)), args.horizon, args.out)
    sys.stdout.write(json.dumps({"written": args.out}, sort_keys=True) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qgbench",
        description="stochastic control benchmarks with certified optimal policies",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    _add_generate(sub)
    _add_validate(sub)
    _add_eval(sub)
    _add_rollout(sub)
    _add_dump_noise(sub)
    return parser


_RUNNERS = {
    "generate": _run_generate,
    "validate": _run_validate,
    "eval": _run_eval,
    "rollout": _run_rollout,
    "dump-noise": _run_dump_noise,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _RUNNERS[args.command](args)
    except DOMAIN_ERRORS as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except USAGE_ERRORS as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    except QGBenchError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
