"""
Replication studies of the importance sampling estimators.

Replication r at sample size n draws its n values from ``RandomStream(seed, r)``, so
a study is reproducible bit for bit at any worker count: replications are split
into contiguous chunks, evaluated independently and reassembled in index order.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
import pandas as pd

from ismdp.core.distributions import AnalyticDistribution, FloatArray, RandomStream
from ismdp.core.empirical import (
    WeightedSample,
    build_weighted_sample,
    empirical_quantile,
    empirical_tail,
    integrated_tail,
    quantile_integral,
)
from ismdp.core.schemes import SamplingScheme
from ismdp.exceptions import DomainError, InfeasibleSchemeError
from ismdp.stats.audit import Verdict, check_scheme_feasibility
from ismdp.stats.scaling import LambdaSpec
from ismdp.stats.targets import Target

logger = logging.getLogger(__name__)

# Below this many replications exceedance probabilities are coarse.
RECOMMENDED_REPLICATIONS = 100


def _draw(scheme: SamplingScheme, seed: int, index: int, n: int) -> WeightedSample:
    values = scheme.sampler.sample(RandomStream(seed, index), n)
    return build_weighted_sample(values, scheme)


def _estimate_chunk(
    scheme: SamplingScheme, target: Target, seed: int, n: int, indices: range
) -> list[tuple[float, bool]]:
    """Estimates for the replications in ``indices``; runs in a worker process."""
    return [target.estimate(_draw(scheme, seed, r, n)) for r in indices]


def _chunks(total: int, workers: int) -> list[range]:
    size = max(1, math.ceil(total / (4 * workers)))
    return [range(start, min(start + size, total)) for start in range(0, total, size)]


def _run_chunks(fn: Any, args: tuple[Any, ...], total: int, workers: int) -> list[Any]:
    """Map ``fn(*args, chunk)`` over contiguous chunks and concatenate in order."""
    chunks = _chunks(total, workers)
    if workers <= 1:
        parts = [fn(*args, chunk) for chunk in chunks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            parts = list(executor.map(fn, *zip(*[(*args, c) for c in chunks])))
    return [item for part in parts for item in part]


@dataclass(frozen=True)
class ExperimentPlan:
    """
    Configuration of a replication study.

    Attributes
    ----------
    mu : AnalyticDistribution
        Nominal law.
    scheme : SamplingScheme
        Sampling scheme for ``mu``.
    target : Target
        Functional to estimate.
    n_grid : tuple of int
        Strictly increasing sample sizes.
    speed : LambdaSpec
        Speed λ_n and scale b_n.
    replications : int
        Replications R per sample size, at least 2.
    delta_grid : tuple of float
        Positive deviation thresholds δ for P̂(b_n |error| >= δ).
    seed : int
        Root seed.
    override_feasibility : bool
        Run even when the feasibility audit fails.
    """

    mu: AnalyticDistribution
    scheme: SamplingScheme
    target: Target
    n_grid: tuple[int, ...]
    speed: LambdaSpec = field(default_factory=LambdaSpec)
    replications: int = 1000
    delta_grid: tuple[float, ...] = (1.0,)
    seed: int = 0
    override_feasibility: bool = False

    def __post_init__(self) -> None:
        n_grid = tuple(int(n) for n in self.n_grid)
        increasing = all(b > a for a, b in zip(n_grid, n_grid[1:]))
        if not n_grid or n_grid[0] < 1 or not increasing:
            raise DomainError(f"n_grid must be positive and increasing, got {n_grid}")
        if self.replications < 2:
            raise DomainError(
                f"replications must be at least 2, got {self.replications}"
            )
        deltas = tuple(float(d) for d in self.delta_grid)
        if not deltas or any(not d > 0.0 for d in deltas):
            raise DomainError(f"delta_grid must hold positive values, got {deltas}")
        object.__setattr__(self, "n_grid", n_grid)
        object.__setattr__(self, "delta_grid", deltas)


@dataclass
class ExperimentRow:
    """Statistics of the R replications at one sample size."""

    n: int
    lambda_n: float
    b_n: float
    mean_error: float
    var_sqrt_n_error: float
    p_hat: dict[float, float]
    scaled_log: dict[float, float]
    censored: dict[float, bool]
    mass_deficient: int
    wall_clock: float = 0.0
    errors: FloatArray = field(default_factory=lambda: np.empty(0), repr=False)


@dataclass
class ExperimentResult:
    """Per-n statistics of a study, in ``n_grid`` order."""

    target: str
    replications: int
    delta_grid: tuple[float, ...]
    rows: list[ExperimentRow]

    def row(self, n: int) -> ExperimentRow:
        for row in self.rows:
            if row.n == n:
                return row
        raise KeyError(n)

    def to_frame(self) -> pd.DataFrame:
        """
        The delimited-output table; wall-clock times are left out so that identical
        plans give identical tables.
        """
        records = []
        for row in self.rows:
            record: dict[str, Any] = {
                "n": row.n,
                "lambda_n": row.lambda_n,
                "b_n": row.b_n,
                "target": self.target,
                "mean_error": row.mean_error,
                "var_sqrt_n_error": row.var_sqrt_n_error,
            }
            for delta in self.delta_grid:
                record[f"p_hat_{delta:g}"] = row.p_hat[delta]
                record[f"scaled_log_{delta:g}"] = row.scaled_log[delta]
            for delta in self.delta_grid:
                record[f"censored_{delta:g}"] = row.censored[delta]
            record["mass_deficient"] = row.mass_deficient
            records.append(record)
        return pd.DataFrame.from_records(records)


def summarize_errors(
    errors: FloatArray,
    deficient: np.ndarray,
    n: int,
    speed: LambdaSpec,
    delta_grid: Sequence[float],
) -> ExperimentRow:
    """
    Aggregate one sample size.

    Mass-deficient replications are left out of every statistic but still count in
    the denominator R of the exceedance probabilities. A cell with no exceedance
    reports the resolution 1/R and is flagged censored.
    """
    total = errors.size
    valid = errors[~deficient]
    lam, b_n = speed.lambda_n(n), speed.b_n(n)
    mean = float(valid.mean()) if valid.size else math.nan
    var = float(np.var(math.sqrt(n) * valid, ddof=1)) if valid.size > 1 else math.nan
    p_hat, scaled, censored = {}, {}, {}
    for delta in delta_grid:
        hits = int(np.count_nonzero(b_n * np.abs(valid) >= delta))
        censored[delta] = hits == 0
        p_hat[delta] = max(hits, 1) / total
        scaled[delta] = math.log(p_hat[delta]) / lam**2
    return ExperimentRow(
        n=n,
        lambda_n=lam,
        b_n=b_n,
        mean_error=mean,
        var_sqrt_n_error=var,
        p_hat=p_hat,
        scaled_log=scaled,
        censored=censored,
        mass_deficient=int(np.count_nonzero(deficient)),
        errors=errors,
    )


def ensure_feasible(scheme: SamplingScheme, override: bool = False) -> None:
    """
    Raise InfeasibleSchemeError on a failed feasibility audit unless overridden.
    """
    check = check_scheme_feasibility(scheme)
    if check.verdict is Verdict.FAIL:
        if not override:
            raise InfeasibleSchemeError(f"{scheme.describe()}: {check.reason}")
        logger.warning("running infeasible scheme %s on override", scheme.describe())
    elif check.verdict is Verdict.INCONCLUSIVE:
        logger.warning(
            "feasibility of %s is inconclusive: %s", scheme.describe(), check.reason
        )


class ReplicationStudy:
    """
    Runs an ExperimentPlan: for each n, R replications of draw, weight, estimate.

    Parameters
    ----------
    plan : ExperimentPlan
        The study to run.
    workers : int, optional
        Worker processes (default 1, in-process).
    """

    def __init__(self, plan: ExperimentPlan, *, workers: int = 1):
        self.plan = plan
        self.workers = max(1, int(workers))

    def run(self) -> ExperimentResult:
        plan = self.plan
        ensure_feasible(plan.scheme, plan.override_feasibility)
        if plan.replications < RECOMMENDED_REPLICATIONS:
            logger.warning(
                "only %d replications; probabilities below %.3g are censored",
                plan.replications,
                1.0 / plan.replications,
            )
        truth = plan.target.truth(plan.mu)
        rows = []
        for n in plan.n_grid:
            start = time.perf_counter()
            errors, deficient = self._errors_at(n, truth)
            row = summarize_errors(errors, deficient, n, plan.speed, plan.delta_grid)
            row.wall_clock = time.perf_counter() - start
            if row.mass_deficient:
                logger.warning(
                    "n=%d: %d of %d replications were mass deficient",
                    n,
                    row.mass_deficient,
                    plan.replications,
                )
            logger.info("n=%d done in %.2fs", n, row.wall_clock)
            rows.append(row)
        return ExperimentResult(
            plan.target.describe(), plan.replications, plan.delta_grid, rows
        )

    def _errors_at(self, n: int, truth: float) -> tuple[FloatArray, np.ndarray]:
        plan = self.plan
        estimates = _run_chunks(
            _estimate_chunk,
            (plan.scheme, plan.target, plan.seed, n),
            plan.replications,
            self.workers,
        )
        values = np.array([value for value, _ in estimates], dtype=float)
        deficient = np.array([flag for _, flag in estimates], dtype=bool)
        return values - truth, deficient


def run_experiment(plan: ExperimentPlan, *, workers: int = 1) -> ExperimentResult:
    """Run ``plan``; see ReplicationStudy."""
    return ReplicationStudy(plan, workers=workers).run()


@dataclass
class DecayReport:
    """
    Trend of (1/λ_n²) log P̂(b_n |error| >= δ) along n.

    ``trend`` is ``non_increasing``, ``increasing`` or ``inconclusive``; ``gap`` is the
    last scaled value plus the rate, None when inconclusive.
    """

    delta: float
    rate_value: float
    scaled: list[tuple[int, float]]
    trend: str
    gap: float | None
    resolution: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "delta": self.delta,
            "rate": self.rate_value,
            "trend": self.trend,
            "gap": self.gap,
            "resolution": self.resolution,
            "scaled_log": [[n, v] for n, v in self.scaled],
        }


def mdp_decay_check(
    result: ExperimentResult, rate_value: float, delta: float
) -> DecayReport:
    """
    Compare the empirical scaled log-probabilities with -rate_value.

    Only uncensored cells are used. With fewer than three of them the trend is
    inconclusive and the resolution 1/R is reported. The check reports a trend,
    never convergence.
    """
    if delta not in result.delta_grid:
        raise DomainError(f"delta {delta} is not among {result.delta_grid}")
    resolution = 1.0 / result.replications
    scaled = [
        (row.n, row.scaled_log[delta]) for row in result.rows if not row.censored[delta]
    ]
    if len(scaled) < 3:
        return DecayReport(delta, rate_value, scaled, "inconclusive", None, resolution)
    values = [v for _, v in scaled]
    tol = 1e-12 * max(1.0, max(abs(v) for v in values))
    non_increasing = all(b <= a + tol for a, b in zip(values, values[1:]))
    trend = "non_increasing" if non_increasing else "increasing"
    return DecayReport(
        delta, rate_value, scaled, trend, values[-1] + rate_value, resolution
    )


@dataclass
class ExpApproxDiagnostics:
    """
    Empirical probabilities of the truncation gap and of the events bounding it.

    ``gap`` is P̂(b_n/p |∫₀^q (Q_n - Q)| >= δ). ``mid``, ``first`` and ``last``
    use threshold δ/4; ``last_split`` holds the two δ/8 halves of the product term.
    """

    gap: float
    mid: float
    first: float
    last: float
    last_split: tuple[float, float]
    replications: int
    mass_deficient: int

    @property
    def resolution(self) -> float:
        return 1.0 / self.replications

    def to_dict(self) -> dict[str, Any]:
        return {
            "gap": self.gap,
            "mid": self.mid,
            "first": self.first,
            "last": self.last,
            "last_product": self.last_split[0],
            "last_level": self.last_split[1],
            "replications": self.replications,
            "mass_deficient": self.mass_deficient,
        }


def _decomposition_chunk(
    scheme: SamplingScheme,
    seed: int,
    n: int,
    q: float,
    b: float,
    indices: range,
) -> list[tuple[float, float, float, float, bool]]:
    """Per replication: ∫₀^q Q_n, Q_n(q) - b, ∫_b^∞ T_n, T_n(b), mass flag."""
    out = []
    for r in indices:
        ws = _draw(scheme, seed, r, n)
        est = empirical_quantile(ws, q)
        out.append(
            (
                quantile_integral(ws, 0.0, q),
                est.value - b,
                integrated_tail(ws, b),
                float(empirical_tail(ws, b)),
                est.mass_deficient,
            )
        )
    return out


def exp_approx_diagnostics(
    mu: AnalyticDistribution,
    scheme: SamplingScheme,
    p: float,
    q: float,
    delta: float,
    n: int,
    replications: int,
    seed: int,
    *,
    speed: LambdaSpec | None = None,
    workers: int = 1,
) -> ExpApproxDiagnostics:
    """
    Estimate the probabilities in the bound that makes γ_{q,p} an exponentially good
    approximation of γ_p.

    With b = T⁻¹(q), Δ = Q_n(q) - b and scale s = b_n / p, the events are

        gap:   s |∫₀^q Q_n - q ES(q)|          >= δ
        mid:   s q |Δ|                          >= δ/4
        first: s |∫_b^∞ (T_n - T)|              >= δ/4
        last:  s T_n(b) |Δ|                     >= δ/4

    and ``gap`` implies one of the other three on every replication. Mass
    deficient replications never count as an event; frequencies stay over all
    replications.
    """
    if not 0.0 < q < p < 1.0:
        raise DomainError(f"need 0 < q < p < 1, got q={q}, p={p}")
    if not delta > 0.0:
        raise DomainError(f"delta must be positive, got {delta}")
    if replications < 2:
        raise DomainError("replications must be at least 2")
    speed = speed or LambdaSpec()
    b = float(mu.quantile(q))
    es_q = mu.expected_shortfall(q)
    head_truth = q * es_q
    tail_truth = q * (es_q - b)
    s = speed.b_n(n) / p

    results = _run_chunks(
        _decomposition_chunk, (scheme, seed, n, q, b), replications, workers
    )
    head, dq, tail, t_at_b = np.array([item[:4] for item in results], dtype=float).T
    flagged = np.array([item[4] for item in results], dtype=bool)
    deficient = int(flagged.sum())
    if deficient:
        logger.warning(
            "%d of %d replications were mass deficient at q=%g",
            deficient,
            replications,
            q,
        )

    def freq(event: np.ndarray) -> float:
        return float(np.count_nonzero(event & ~flagged)) / replications

    return ExpApproxDiagnostics(
        gap=freq(s * np.abs(head - head_truth) >= delta),
        mid=freq(s * q * np.abs(dq) >= delta / 4.0),
        first=freq(s * np.abs(tail - tail_truth) >= delta / 4.0),
        last=freq(s * t_at_b * np.abs(dq) >= delta / 4.0),
        last_split=(
            freq(s * np.abs(t_at_b - q) * np.abs(dq) >= delta / 8.0),
            freq(s * q * np.abs(dq) >= delta / 8.0),
        ),
        replications=replications,
        mass_deficient=deficient,
    )


@dataclass
class SchemeComparison:
    """
    Schemes ranked by the asymptotic variance of one target.

    ``table`` has one row per scheme with columns scheme, feasible, reason,
    variance, rate, empirical_var and rank (1 = most efficient; ties share a rank).
    """

    target: str
    delta: float
    table: pd.DataFrame

    @property
    def ranking(self) -> list[str]:
        ranked = self.table.dropna(subset=["rank"]).sort_values(
            ["rank", "scheme"], kind="stable"
        )
        return ranked["scheme"].tolist()


def compare_schemes(
    mu: AnalyticDistribution,
    schemes: Sequence[SamplingScheme],
    target: Target,
    *,
    delta: float = 1.0,
    n: int | None = None,
    replications: int | None = None,
    seed: int = 0,
    workers: int = 1,
) -> SchemeComparison:
    """
    Rank sampling schemes for ``target`` by their quadratic MDP rate δ²/(2σ²).

    Schemes that fail the feasibility audit stay in the table unranked, with the
    reason. When ``n`` and ``replications`` are given, the empirical variance of
    √n·error is added per feasible scheme.
    """
    if len(schemes) < 2:
        raise DomainError("compare_schemes needs at least two schemes")
    if not delta > 0.0:
        raise DomainError(f"delta must be positive, got {delta}")
    records = []
    for scheme in schemes:
        record: dict[str, Any] = {
            "scheme": scheme.describe(),
            "feasible": True,
            "reason": "",
            "variance": math.nan,
            "rate": math.nan,
            "empirical_var": math.nan,
        }
        check = check_scheme_feasibility(scheme)
        if check.verdict is Verdict.FAIL:
            record.update(feasible=False, reason=check.reason)
            logger.info("excluding %s: %s", scheme.describe(), check.reason)
            records.append(record)
            continue
        variance = target.variance(mu, scheme)
        record["variance"] = variance
        record["rate"] = delta**2 / (2.0 * variance) if variance > 0 else math.inf
        if n is not None and replications is not None:
            plan = ExperimentPlan(
                mu,
                scheme,
                target,
                (n,),
                replications=replications,
                seed=seed,
                override_feasibility=True,
            )
            row = run_experiment(plan, workers=workers).rows[0]
            record["empirical_var"] = row.var_sqrt_n_error
        records.append(record)
    table = pd.DataFrame.from_records(records)
    table["rank"] = table["variance"].rank(method="min")
    return SchemeComparison(target.describe(), delta, table)
