import pytest

from ismdp.core import Exponential, Pareto, make_scheme, unit_scheme


@pytest.fixture
def exponential():
    return Exponential(rate=1.0)


@pytest.fixture
def pareto():
    return Pareto(alpha=3.0, scale=1.0)


@pytest.fixture
def unit_exponential(exponential):
    """Standard Monte Carlo for the unit exponential."""
    return unit_scheme(exponential)


@pytest.fixture
def tilted_exponential(exponential):
    """Exponential(1) sampled under Exponential(0.5): w(x) = 2 exp(-x/2) <= 2."""
    return make_scheme(exponential, Exponential(rate=0.5))
