"""
Run configuration: one YAML file with nested sections, parsed into frozen dataclasses.

Every key is validated before any computation; unknown keys raise ConfigError.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping

import yaml

from ismdp.core.distributions import (
    FAMILIES,
    AnalyticDistribution,
    family_parameters,
    make_distribution,
)
from ismdp.core.schemes import SamplingScheme, make_scheme, unit_scheme
from ismdp.exceptions import ConfigError, DomainError
from ismdp.stats.audit import DEFAULT_Q_GRID, DEFAULT_SLOPE_THRESHOLD
from ismdp.stats.scaling import LambdaSpec
from ismdp.stats.targets import Target

logger = logging.getLogger(__name__)

FORMATS = ("delimited", "structured")

# Recognised keys per section; also rendered into the CLI help.
SECTION_KEYS: dict[str, tuple[str, ...]] = {
    "distribution": ("family", "<family parameters>"),
    "scheme": ("'unit'", "family", "<family parameters>"),
    "output": ("path", "format"),
    "target": ("kind", "p", "q", "t"),
    "speed": ("beta", "A", "delta"),
    "estimate": (
        "target",
        "n",
        "significance",
        "speed",
        "override_feasibility",
        "dump",
    ),
    "rate": ("p", "q_grid", "delta_grid", "z_grid"),
    "audit": ("q_grid", "slope_threshold", "speed", "karamata_grid"),
    "experiment": (
        "target",
        "n_grid",
        "replications",
        "delta_grid",
        "speed",
        "override_feasibility",
    ),
    "compare": ("schemes", "target", "delta", "n", "replications"),
}
TOP_LEVEL_KEYS = (
    "distribution",
    "scheme",
    "seed",
    "workers",
    "output",
    "estimate",
    "rate",
    "audit",
    "experiment",
    "compare",
)


def describe_keys() -> str:
    """Multi-line listing of every recognised key, for ``--help``."""
    lines = ["configuration keys:", f"  top level: {', '.join(TOP_LEVEL_KEYS)}"]
    for section, keys in SECTION_KEYS.items():
        lines.append(f"  {section}: {', '.join(keys)}")
    for family in FAMILIES:
        lines.append(f"  family {family}: {', '.join(family_parameters(family))}")
    return "\n".join(lines)


def _mapping(raw: Any, where: str) -> dict[str, Any]:
    if raw is None:
        return {}
    if not isinstance(raw, Mapping):
        raise ConfigError(f"section {where!r} must be a mapping")
    return dict(raw)


def _reject_unknown(raw: Mapping[str, Any], section: str) -> None:
    unknown = set(raw) - set(SECTION_KEYS[section])
    if unknown:
        raise ConfigError(
            f"unknown keys {sorted(unknown)} in section {section!r}; "
            f"expected {list(SECTION_KEYS[section])}"
        )


def _convert(value: Any, convert: Callable[[Any], Any], key: str) -> Any:
    try:
        return convert(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid value for {key!r}: {value!r}") from exc


def _floats(values: Any, key: str) -> tuple[float, ...]:
    if not isinstance(values, (list, tuple)):
        raise ConfigError(f"{key!r} must be a list")
    return tuple(_convert(v, float, key) for v in values)


def _ints(values: Any, key: str) -> tuple[int, ...]:
    if not isinstance(values, (list, tuple)):
        raise ConfigError(f"{key!r} must be a list")
    return tuple(_convert(v, int, key) for v in values)


def _flag(value: Any, key: str) -> bool:
    if not isinstance(value, bool):
        raise ConfigError(f"{key!r} must be true or false")
    return value


def _require(raw: Mapping[str, Any], key: str, section: str) -> Any:
    if key not in raw:
        raise ConfigError(f"section {section!r} is missing required key {key!r}")
    return raw[key]


def parse_distribution(raw: Any, where: str = "distribution") -> AnalyticDistribution:
    spec = _mapping(raw, where)
    if not spec:
        raise ConfigError(f"section {where!r} is required")
    return make_distribution(spec)


def parse_scheme(raw: Any, mu: AnalyticDistribution) -> SamplingScheme:
    """``unit`` or a distribution spec for the sampling law ν."""
    if raw is None or raw == "unit":
        return unit_scheme(mu)
    if isinstance(raw, str):
        raise ConfigError(
            f"scheme must be 'unit' or a distribution mapping, got {raw!r}"
        )
    return make_scheme(mu, parse_distribution(raw, "scheme"))


def parse_target(raw: Any) -> Target:
    spec = _mapping(raw, "target")
    _reject_unknown(spec, "target")
    return Target.from_mapping(spec)


def parse_speed(raw: Any) -> LambdaSpec:
    spec = _mapping(raw, "speed")
    _reject_unknown(spec, "speed")
    try:
        return LambdaSpec(**{k: _convert(v, float, k) for k, v in spec.items()})
    except DomainError as exc:
        raise ConfigError(f"invalid speed: {exc}") from exc


@dataclass(frozen=True)
class OutputConfig:
    path: str | None = None
    format: str = "delimited"


@dataclass(frozen=True)
class EstimateConfig:
    target: Target
    n: int
    significance: float = 0.05
    speed: LambdaSpec = field(default_factory=LambdaSpec)
    override_feasibility: bool = False
    dump: str | None = None


@dataclass(frozen=True)
class RateConfig:
    p: float
    q_grid: tuple[float, ...] = ()
    delta_grid: tuple[float, ...] = ()
    z_grid: tuple[float, ...] = (0.0, 1.0)


@dataclass(frozen=True)
class AuditConfig:
    q_grid: tuple[float, ...] = DEFAULT_Q_GRID
    slope_threshold: float = DEFAULT_SLOPE_THRESHOLD
    speed: LambdaSpec = field(default_factory=LambdaSpec)
    karamata_grid: tuple[float, ...] = ()


@dataclass(frozen=True)
class ExperimentConfig:
    target: Target
    n_grid: tuple[int, ...]
    replications: int = 1000
    delta_grid: tuple[float, ...] = (1.0,)
    speed: LambdaSpec = field(default_factory=LambdaSpec)
    override_feasibility: bool = False


@dataclass(frozen=True)
class CompareConfig:
    schemes: tuple[SamplingScheme, ...]
    target: Target
    delta: float = 1.0
    n: int | None = None
    replications: int | None = None


@dataclass(frozen=True)
class RunConfig:
    """A parsed configuration file."""

    distribution: AnalyticDistribution
    scheme: SamplingScheme
    seed: int = 0
    workers: int = 1
    output: OutputConfig = field(default_factory=OutputConfig)
    estimate: EstimateConfig | None = None
    rate: RateConfig | None = None
    audit: AuditConfig | None = None
    experiment: ExperimentConfig | None = None
    compare: CompareConfig | None = None

    def section(self, name: str) -> Any:
        value = getattr(self, name)
        if value is None:
            raise ConfigError(f"the {name!r} command needs a {name!r} section")
        return value


def _parse_output(raw: Any) -> OutputConfig:
    spec = _mapping(raw, "output")
    _reject_unknown(spec, "output")
    fmt = spec.get("format", "delimited")
    if fmt not in FORMATS:
        raise ConfigError(f"output format must be one of {FORMATS}, got {fmt!r}")
    path = spec.get("path")
    return OutputConfig(None if path is None else str(path), fmt)


def _parse_estimate(raw: Any) -> EstimateConfig:
    spec = _mapping(raw, "estimate")
    _reject_unknown(spec, "estimate")
    n = _convert(_require(spec, "n", "estimate"), int, "n")
    significance = _convert(spec.get("significance", 0.05), float, "significance")
    if n < 1:
        raise ConfigError(f"estimate.n must be positive, got {n}")
    if not 0.0 < significance < 1.0:
        raise ConfigError(f"significance must lie in (0, 1), got {significance}")
    dump = spec.get("dump")
    return EstimateConfig(
        target=parse_target(_require(spec, "target", "estimate")),
        n=n,
        significance=significance,
        speed=parse_speed(spec.get("speed")),
        override_feasibility=_flag(
            spec.get("override_feasibility", False), "override_feasibility"
        ),
        dump=None if dump is None else str(dump),
    )


def _parse_rate(raw: Any) -> RateConfig:
    spec = _mapping(raw, "rate")
    _reject_unknown(spec, "rate")
    p = _convert(_require(spec, "p", "rate"), float, "p")
    if not 0.0 < p < 1.0:
        raise ConfigError(f"rate.p must lie in (0, 1), got {p}")
    q_grid = _floats(spec.get("q_grid", []), "q_grid")
    if any(not 0.0 < q < 1.0 for q in q_grid):
        raise ConfigError("rate.q_grid values must lie in (0, 1)")
    delta_grid = _floats(spec.get("delta_grid", []), "delta_grid")
    if any(d < 0.0 for d in delta_grid):
        raise ConfigError("rate.delta_grid values must be non-negative")
    return RateConfig(
        p=p,
        q_grid=q_grid,
        delta_grid=delta_grid,
        z_grid=_floats(spec.get("z_grid", [0.0, 1.0]), "z_grid"),
    )


def _parse_audit(raw: Any) -> AuditConfig:
    spec = _mapping(raw, "audit")
    _reject_unknown(spec, "audit")
    q_grid = _floats(spec.get("q_grid", list(DEFAULT_Q_GRID)), "q_grid")
    if len(q_grid) < 4 or any(b >= a for a, b in zip(q_grid, q_grid[1:])):
        raise ConfigError("audit.q_grid must hold 4 or more decreasing levels")
    return AuditConfig(
        q_grid=q_grid,
        slope_threshold=_convert(
            spec.get("slope_threshold", DEFAULT_SLOPE_THRESHOLD),
            float,
            "slope_threshold",
        ),
        speed=parse_speed(spec.get("speed")),
        karamata_grid=_floats(spec.get("karamata_grid", []), "karamata_grid"),
    )


def _parse_experiment(raw: Any) -> ExperimentConfig:
    spec = _mapping(raw, "experiment")
    _reject_unknown(spec, "experiment")
    n_grid = _ints(_require(spec, "n_grid", "experiment"), "n_grid")
    replications = _convert(spec.get("replications", 1000), int, "replications")
    delta_grid = _floats(spec.get("delta_grid", [1.0]), "delta_grid")
    if not n_grid or n_grid[0] < 1 or any(b <= a for a, b in zip(n_grid, n_grid[1:])):
        raise ConfigError("experiment.n_grid must be positive and increasing")
    if replications < 2:
        raise ConfigError("experiment.replications must be at least 2")
    if not delta_grid or any(not d > 0.0 for d in delta_grid):
        raise ConfigError("experiment.delta_grid must hold positive values")
    return ExperimentConfig(
        target=parse_target(_require(spec, "target", "experiment")),
        n_grid=n_grid,
        replications=replications,
        delta_grid=delta_grid,
        speed=parse_speed(spec.get("speed")),
        override_feasibility=_flag(
            spec.get("override_feasibility", False), "override_feasibility"
        ),
    )


def _parse_compare(raw: Any, mu: AnalyticDistribution) -> CompareConfig:
    spec = _mapping(raw, "compare")
    _reject_unknown(spec, "compare")
    schemes_raw = _require(spec, "schemes", "compare")
    if not isinstance(schemes_raw, list) or len(schemes_raw) < 2:
        raise ConfigError("compare.schemes must list at least two schemes")
    n = spec.get("n")
    replications = spec.get("replications")
    if (n is None) != (replications is None):
        raise ConfigError("compare.n and compare.replications go together")
    delta = _convert(spec.get("delta", 1.0), float, "delta")
    if not delta > 0.0:
        raise ConfigError(f"compare.delta must be positive, got {delta}")
    return CompareConfig(
        schemes=tuple(parse_scheme(s, mu) for s in schemes_raw),
        target=parse_target(_require(spec, "target", "compare")),
        delta=delta,
        n=None if n is None else _convert(n, int, "n"),
        replications=None if replications is None else _convert(
            replications, int, "replications"
        ),
    )


def parse_config(raw: Any) -> RunConfig:
    """
    Validate a loaded YAML document and build the RunConfig.

    Raises
    ------
    ConfigError
        On unknown keys, missing required keys or out-of-range values.
    """
    doc = _mapping(raw, "<root>")
    unknown = set(doc) - set(TOP_LEVEL_KEYS)
    if unknown:
        raise ConfigError(
            f"unknown top-level keys {sorted(unknown)}; expected {list(TOP_LEVEL_KEYS)}"
        )
    mu = parse_distribution(doc.get("distribution"))
    seed = _convert(doc.get("seed", 0), int, "seed")
    workers = _convert(doc.get("workers", 1), int, "workers")
    if not 0 <= seed < 2**64:
        raise ConfigError(f"seed must be a 64-bit unsigned integer, got {seed}")
    if workers < 1:
        raise ConfigError(f"workers must be positive, got {workers}")
    parsers: dict[str, Callable[[Any], Any]] = {
        "estimate": _parse_estimate,
        "rate": _parse_rate,
        "audit": _parse_audit,
        "experiment": _parse_experiment,
        "compare": lambda section: _parse_compare(section, mu),
    }
    sections = {
        name: parse(doc[name]) for name, parse in parsers.items() if name in doc
    }
    return RunConfig(
        distribution=mu,
        scheme=parse_scheme(doc.get("scheme", "unit"), mu),
        seed=seed,
        workers=workers,
        output=_parse_output(doc.get("output")),
        **sections,
    )


def load_config(path: str | Path) -> RunConfig:
    """Read and parse a YAML configuration file."""
    try:
        with open(path, encoding="utf-8") as handle:
            raw = yaml.safe_load(handle)
    except OSError as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed configuration {path}: {exc}") from exc
    logger.debug("loaded configuration from %s", path)
    return parse_config(raw)
