"""Console script for ismdp."""

from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import replace
from typing import Any, Callable, Sequence

import numpy as np
import pandas as pd
import yaml

from ismdp.config import FORMATS, RunConfig, describe_keys, load_config
from ismdp.core.distributions import RandomStream
from ismdp.core.empirical import build_weighted_sample, dump_weighted_sample
from ismdp.exceptions import (
    ConfigError,
    IsmdpError,
    NumericalError,
    TruthUnavailableError,
)
from ismdp.stats.audit import karamata_diagnostic, run_audit
from ismdp.stats.experiments import (
    ExperimentPlan,
    compare_schemes,
    ensure_feasible,
    mdp_decay_check,
    run_experiment,
)
from ismdp.stats.rates import mdp_half_width, rate_report

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_AUDIT_FAIL = 5


class Output:
    """A command result: a table for delimited output, a record for structured."""

    def __init__(self, table: pd.DataFrame, record: dict[str, Any]):
        self.table = table
        self.record = record

    def render(self, fmt: str) -> str:
        if fmt == "delimited":
            return str(self.table.to_csv(index=False, float_format="%.9g"))
        return yaml.safe_dump(_rounded(self.record), sort_keys=False)


def _rounded(value: Any) -> Any:
    """Floats at 9 significant digits, recursively; numpy scalars become Python."""
    if isinstance(value, dict):
        return {str(k): _rounded(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_rounded(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if not math.isfinite(value) else float(f"{value:.9g}")
    return value


def cmd_estimate(config: RunConfig, workers: int) -> tuple[Output, int]:
    settings = config.section("estimate")
    mu, scheme, target = config.distribution, config.scheme, settings.target
    ensure_feasible(scheme, settings.override_feasibility)
    values = scheme.sampler.sample(RandomStream(config.seed, 0), settings.n)
    ws = build_weighted_sample(values, scheme)
    if settings.dump:
        dump_weighted_sample(ws, settings.dump)
    estimate, deficient = target.estimate(ws)
    if deficient:
        logger.warning("sample is mass deficient at %s", target.describe())
    try:
        truth: float | None = target.truth(mu)
    except TruthUnavailableError:
        truth = None
    half_width = mdp_half_width(
        target.variance(mu, scheme), settings.n, settings.significance
    )
    record: dict[str, Any] = {
        "target": target.describe(),
        "scheme": scheme.describe(),
        "n": settings.n,
        "estimate": estimate,
        "truth": truth,
        "half_width": half_width,
        "significance": settings.significance,
        "total_mass": ws.total_mass,
        "effective_sample_size": ws.effective_sample_size,
        "max_weight": ws.max_weight,
        "mass_deficient": deficient,
    }
    return Output(pd.DataFrame([record]), record), EXIT_OK


def cmd_rate(config: RunConfig, workers: int) -> tuple[Output, int]:
    settings = config.section("rate")
    report = rate_report(
        config.distribution,
        config.scheme,
        settings.p,
        q_grid=settings.q_grid,
        delta_grid=settings.delta_grid,
        z_grid=settings.z_grid,
    )
    rows: list[dict[str, Any]] = [
        {"quantity": "sigma_p_sq", "value": report.sigma_p_sq}
    ]
    rows += [
        {"quantity": "sigma_qp_sq", "q": q, "value": v}
        for q, v in report.sigma_qp_sq.items()
    ]
    for q, delta, *values in report.kappa:
        rows += [
            {"quantity": name, "q": q, "delta": delta, "value": v}
            for name, v in zip(("kappa1", "kappa2", "kappa3"), values)
        ]
    rows += [
        {"quantity": "es_rate", "z": z, "value": v}
        for z, v in report.es_rate_at.items()
    ]
    table = pd.DataFrame.from_records(
        rows, columns=["quantity", "q", "delta", "z", "value"]
    )
    return Output(table, report.to_dict()), EXIT_OK


def cmd_audit(config: RunConfig, workers: int) -> tuple[Output, int]:
    settings = config.section("audit")
    report = run_audit(
        config.distribution,
        config.scheme,
        q_grid=settings.q_grid,
        speed=settings.speed,
        slope_threshold=settings.slope_threshold,
    )
    record: dict[str, Any] = {"checks": report.to_dict()}
    rows = [
        {"check": name, "verdict": c.verdict.value, "reason": c.reason}
        for name, c in report.checks.items()
    ]
    if settings.karamata_grid:
        karamata = karamata_diagnostic(
            config.distribution,
            settings.karamata_grid,
            slope_threshold=settings.slope_threshold,
        )
        record["karamata"] = karamata.to_dict()
        rows.append(
            {
                "check": "karamata",
                "verdict": karamata.verdict.value,
                "reason": karamata.reason,
            }
        )
    for row in rows:
        logger.info("%s: %s (%s)", row["check"], row["verdict"], row["reason"])
    status = EXIT_AUDIT_FAIL if report.failed else EXIT_OK
    return Output(pd.DataFrame(rows), record), status


def cmd_experiment(config: RunConfig, workers: int) -> tuple[Output, int]:
    settings = config.section("experiment")
    plan = ExperimentPlan(
        config.distribution,
        config.scheme,
        settings.target,
        settings.n_grid,
        speed=settings.speed,
        replications=settings.replications,
        delta_grid=settings.delta_grid,
        seed=config.seed,
        override_feasibility=settings.override_feasibility,
    )
    result = run_experiment(plan, workers=workers)
    table = result.to_frame()
    record: dict[str, Any] = {
        "target": settings.target.describe(),
        "scheme": config.scheme.describe(),
        "replications": settings.replications,
        "rows": table.to_dict(orient="records"),
    }
    try:
        variance = settings.target.variance(config.distribution, config.scheme)
    except NumericalError as exc:
        logger.warning("no asymptotic variance for the decay check: %s", exc)
    else:
        if variance > 0.0:
            record["decay"] = [
                mdp_decay_check(result, d * d / (2.0 * variance), d).to_dict()
                for d in settings.delta_grid
            ]
    return Output(table, record), EXIT_OK


def cmd_compare(config: RunConfig, workers: int) -> tuple[Output, int]:
    settings = config.section("compare")
    comparison = compare_schemes(
        config.distribution,
        settings.schemes,
        settings.target,
        delta=settings.delta,
        n=settings.n,
        replications=settings.replications,
        seed=config.seed,
        workers=workers,
    )
    table = comparison.table.sort_values(
        ["rank"], kind="stable", na_position="last"
    ).reset_index(drop=True)
    record = {
        "target": comparison.target,
        "delta": comparison.delta,
        "ranking": comparison.ranking,
        "schemes": table.to_dict(orient="records"),
    }
    return Output(table, record), EXIT_OK


COMMANDS: dict[str, Callable[[RunConfig, int], tuple[Output, int]]] = {
    "estimate": cmd_estimate,
    "rate": cmd_rate,
    "audit": cmd_audit,
    "experiment": cmd_experiment,
    "compare": cmd_compare,
}

_HELP = {
    "estimate": "point estimate, MDP half-width and weight diagnostics",
    "rate": "asymptotic variances, variational constants and rate values",
    "audit": "growth condition, scheme feasibility and tail assumptions",
    "experiment": "replication study of the MDP scaling along an n grid",
    "compare": "rank sampling schemes by their MDP rate",
}


def _add_common(parser: argparse.ArgumentParser, suppress: bool) -> None:
    # Subcommand copies default to SUPPRESS so they only override flags given there.
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=default, help="YAML configuration file")
    parser.add_argument(
        "--seed", type=int, default=default, help="overrides the configured seed"
    )
    parser.add_argument(
        "--workers", type=int, default=default, help="parallel worker processes"
    )
    parser.add_argument(
        "--out", default=default, help="output path (default: standard output)"
    )
    parser.add_argument(
        "--format", choices=FORMATS, default=default, help="output format"
    )
    parser.add_argument(
        "--log-level",
        default=argparse.SUPPRESS if suppress else "WARNING",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
    )


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    _add_common(common, suppress=True)

    parser = argparse.ArgumentParser(
        prog="ismdp",
        description="Importance sampling tail estimation with MDP rates.",
        epilog=describe_keys(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    _add_common(parser, suppress=False)
    commands = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        commands.add_parser(
            name,
            parents=[common],
            help=_HELP[name],
            description=_HELP[name],
            epilog=describe_keys(),
            formatter_class=argparse.RawDescriptionHelpFormatter,
        )
    return parser


def _with_overrides(config: RunConfig, args: argparse.Namespace) -> RunConfig:
    changes: dict[str, Any] = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.workers is not None:
        changes["workers"] = args.workers
    output = config.output
    if args.out is not None:
        output = replace(output, path=args.out)
    if args.format is not None:
        output = replace(output, format=args.format)
    return replace(config, output=output, **changes)


def _write(text: str, path: str | None) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write(text)


def main(argv: Sequence[str] | None = None) -> int:
    """Run one command; returns the process exit status."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config is None:
        parser.error("the following arguments are required: --config")
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        config = _with_overrides(load_config(args.config), args)
        if config.workers < 1:
            raise ConfigError("--workers must be positive")
        logger.info("running %s with %s", args.command, args.config)
        output, status = COMMANDS[args.command](config, config.workers)
        text = output.render(config.output.format)
    except IsmdpError as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        print(f"ismdp {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    _write(text, config.output.path)
    logger.info("%s finished with status %d", args.command, status)
    return status


if __name__ == "__main__":
    sys.exit(main())  # pragma: no cover
