import math

import numpy as np
import pytest

from ismdp.core import (
    RandomStream,
    WeightedSample,
    build_weighted_sample,
    deviation_process,
    dump_weighted_sample,
    empirical_quantile,
    empirical_tail,
    expected_shortfall,
    integrated_tail,
    load_weighted_sample,
    quantile_integral,
    truncated_expected_shortfall,
    unit_scheme,
)
from ismdp.exceptions import DomainError, MassDeficiencyError


@pytest.fixture
def three_atoms():
    """Atoms 1, 2, 3 with unit weights: T_n steps 1 -> 2/3 -> 1/3 -> 0."""
    return WeightedSample.from_atoms([3.0, 1.0, 2.0], [1.0, 1.0, 1.0])


def test_atoms_are_sorted_and_merged():
    ws = WeightedSample.from_atoms([2.0, 1.0, 2.0], [1.0, 0.5, 1.0])
    assert ws.atoms == [(1.0, 0.5), (2.0, 2.0)]
    assert ws.n == 3
    assert len(ws) == 2
    assert ws.total_mass == pytest.approx(2.5 / 3.0)


def test_from_atoms_rejects_bad_input():
    with pytest.raises(DomainError):
        WeightedSample.from_atoms([], [])
    with pytest.raises(DomainError):
        WeightedSample.from_atoms([1.0, 2.0], [1.0])
    with pytest.raises(DomainError):
        WeightedSample.from_atoms([1.0], [-1.0])


def test_empirical_tail_is_right_continuous(three_atoms):
    assert empirical_tail(three_atoms, 0.0) == pytest.approx(1.0)
    assert empirical_tail(three_atoms, 1.0) == pytest.approx(2.0 / 3.0)
    assert empirical_tail(three_atoms, 1.5) == pytest.approx(2.0 / 3.0)
    assert empirical_tail(three_atoms, 3.0) == 0.0
    np.testing.assert_allclose(
        empirical_tail(three_atoms, np.array([0.5, 2.5])), [1.0, 1.0 / 3.0]
    )


def test_empirical_quantile(three_atoms):
    assert empirical_quantile(three_atoms, 0.5).value == 2.0
    assert empirical_quantile(three_atoms, 1.0 / 3.0).value == 2.0
    assert empirical_quantile(three_atoms, 0.1).value == 3.0
    assert not empirical_quantile(three_atoms, 0.1).mass_deficient


def test_quantile_above_total_mass_is_flagged():
    ws = WeightedSample.from_atoms([1.0, 2.0, 3.0], [0.5, 0.5, 0.5])
    estimate = empirical_quantile(ws, 0.6)
    assert estimate.mass_deficient
    assert estimate.value == 1.0
    with pytest.raises(MassDeficiencyError):
        expected_shortfall(ws, 0.6)


def test_expected_shortfall_sweeps_steps(three_atoms):
    # Q_n = 3 on [0, 1/3), 2 on [1/3, 2/3), 1 on [2/3, 1).
    assert quantile_integral(three_atoms, 0.0, 1.0) == pytest.approx(2.0)
    assert expected_shortfall(three_atoms, 0.5) == pytest.approx(8.0 / 3.0)
    assert truncated_expected_shortfall(three_atoms, 0.25, 0.5) == pytest.approx(
        (3.0 / 12.0 + 2.0 / 6.0) / 0.5
    )
    with pytest.raises(DomainError):
        truncated_expected_shortfall(three_atoms, 0.5, 0.25)


@pytest.fixture
def uneven_atoms():
    """Atoms 1, 2, 3 with weights 0.5, 1, 1.5 out of three draws."""
    return WeightedSample.from_atoms([1.0, 2.0, 3.0], [0.5, 1.0, 1.5])


def test_shortfall_of_uneven_atoms(uneven_atoms):
    # Q_n = 3 on [0, 0.5), 2 on [0.5, 5/6), 1 on [5/6, 1).
    assert uneven_atoms.total_mass == pytest.approx(1.0)
    assert expected_shortfall(uneven_atoms, 0.6) == pytest.approx(2.833333, abs=1e-6)
    assert truncated_expected_shortfall(uneven_atoms, 0.5, 0.6) == pytest.approx(
        0.333333, abs=1e-6
    )
    vanishing = truncated_expected_shortfall(uneven_atoms, 1e-9, 0.6)
    assert vanishing == pytest.approx(17.0 / 6.0, abs=1e-8)


def _random_sample(rng, max_draws=50, high=10.0):
    size = int(rng.integers(1, max_draws + 1))
    values = rng.uniform(0.0, high, size)
    weights = rng.uniform(0.0, 3.0, size) * (rng.random(size) > 0.1)
    return values, weights


def _filled_shortfall(values, weights, p):
    # Fill the level p with the largest atoms first.
    order = np.argsort(values)[::-1]
    filled, total = 0.0, 0.0
    for value, weight in zip(values[order], weights[order] / values.size):
        remaining = p - filled
        if remaining <= 0.0:
            break
        take = min(weight, remaining)
        total += value * take
        filled += take
    return total / p


def test_step_functions_match_brute_force():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        values, weights = _random_sample(rng)
        ws = WeightedSample.from_atoms(values, weights)
        n = values.size
        for t in rng.uniform(-1.0, 11.0, 3):
            direct = weights[values > t].sum() / n
            assert empirical_tail(ws, t) == pytest.approx(direct, abs=1e-12)

        p = float(rng.uniform(0.01, 1.5))
        total = weights.sum() / n
        estimate = empirical_quantile(ws, p)
        if p >= total:
            assert estimate == (values.min(), True)
            with pytest.raises(MassDeficiencyError):
                expected_shortfall(ws, p)
            continue
        admissible = [v for v in values if weights[values > v].sum() / n <= p]
        assert estimate == (min(admissible), False)
        assert expected_shortfall(ws, p) == pytest.approx(
            _filled_shortfall(values, weights, p), abs=1e-9
        )


def test_integrated_tail(three_atoms):
    assert integrated_tail(three_atoms, 1.5) == pytest.approx(2.0 / 3.0)
    assert integrated_tail(three_atoms, 5.0) == 0.0


def test_sample_diagnostics():
    ws = WeightedSample.from_atoms([1.0, 2.0, 3.0], [1.0, 1.0, 2.0])
    assert ws.effective_sample_size == pytest.approx(16.0 / 6.0)
    assert ws.max_weight == 2.0
    step = ws.step_tail
    assert step.total_mass == pytest.approx(4.0 / 3.0)
    np.testing.assert_allclose(step.levels, [1.0, 2.0 / 3.0, 0.0])


def test_build_weighted_sample_applies_weights(tilted_exponential):
    ws = build_weighted_sample([2.0, 4.0], tilted_exponential)
    np.testing.assert_allclose(
        ws.weights, [2.0 * math.exp(-1.0), 2.0 * math.exp(-2.0)], rtol=1e-12
    )
    with pytest.raises(DomainError):
        build_weighted_sample([], tilted_exponential)


def test_weighted_mass_is_unbiased(tilted_exponential):
    draws = tilted_exponential.sampler.sample(RandomStream(11), 100_000)
    ws = build_weighted_sample(draws, tilted_exponential)
    assert ws.total_mass == pytest.approx(1.0, abs=0.02)
    assert empirical_tail(ws, 3.0) == pytest.approx(math.exp(-3.0), abs=0.005)


def test_deviation_process(exponential, three_atoms):
    grid = [0.5, 1.5, 2.5]
    out = deviation_process(three_atoms, exponential, grid, 10.0)
    expected = 10.0 * (np.array([1.0, 2.0 / 3.0, 1.0 / 3.0]) - np.exp(-np.array(grid)))
    np.testing.assert_allclose(out, expected)
    with pytest.raises(DomainError):
        deviation_process(three_atoms, exponential, [2.0, 1.0], 10.0)


def test_dump_and_reload_is_exact(tmp_path, tilted_exponential):
    draws = tilted_exponential.sampler.sample(RandomStream(3), 50)
    ws = build_weighted_sample(draws, tilted_exponential)
    path = tmp_path / "atoms.csv"
    dump_weighted_sample(ws, path)
    assert path.read_text().startswith("# n=50\n")
    again = load_weighted_sample(path)
    np.testing.assert_array_equal(again.values, ws.values)
    np.testing.assert_array_equal(again.weights, ws.weights)
    assert again.n == ws.n


@pytest.mark.slow
def test_expected_shortfall_is_consistent(unit_exponential, exponential):
    draws = exponential.sample(RandomStream(2024), 1_000_000)
    ws = build_weighted_sample(draws, unit_exponential)
    assert expected_shortfall(ws, 0.05) == pytest.approx(3.995732, abs=0.03)


@pytest.mark.slow
def test_expected_shortfall_matches_a_riemann_sum():
    rng = np.random.default_rng(99)
    checked = 0
    while checked < 100:
        values, weights = _random_sample(rng, high=1.0)
        ws = WeightedSample.from_atoms(values, weights)
        p = float(rng.uniform(0.05, 0.95))
        if p >= ws.total_mass:
            continue
        order = np.argsort(values)[::-1]
        filled = np.cumsum(weights[order]) / values.size
        cells = round(p / 1e-6)
        midpoints = (np.arange(cells) + 0.5) * (p / cells)
        quantiles = values[order][np.searchsorted(filled, midpoints, side="right")]
        # Q_n is monotone with range inside [0, 1], so the midpoint rule is off
        # by at most half a cell width.
        riemann = float(quantiles.sum()) / cells
        assert expected_shortfall(ws, p) == pytest.approx(riemann, abs=2e-6 / p)
        checked += 1


@pytest.mark.slow
def test_pareto_expected_shortfall_is_consistent(pareto):
    draws = pareto.sample(RandomStream(31), 1_000_000)
    ws = build_weighted_sample(draws, unit_scheme(pareto))
    assert expected_shortfall(ws, 0.1) == pytest.approx(3.231652, rel=0.01)
