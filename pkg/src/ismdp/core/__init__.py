from ismdp.core.distributions import (  # noqa: F401
    FAMILIES,
    AnalyticDistribution,
    Exponential,
    LogNormal,
    Normal,
    Pareto,
    RandomStream,
    make_distribution,
)
from ismdp.core.empirical import (  # noqa: F401
    QuantileEstimate,
    StepTail,
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
)
from ismdp.core.schemes import (  # noqa: F401
    SamplingScheme,
    WeightKind,
    make_scheme,
    unit_scheme,
    weight,
)
