from ismdp.stats.audit import (  # noqa: F401
    AuditReport,
    CheckResult,
    Verdict,
    check_A1_A4,
    check_lambda_condition,
    check_scheme_feasibility,
    karamata_diagnostic,
    regular_variation_ratio,
    run_audit,
)
from ismdp.stats.experiments import (  # noqa: F401
    ExperimentPlan,
    ExperimentResult,
    ReplicationStudy,
    compare_schemes,
    exp_approx_diagnostics,
    mdp_decay_check,
    run_experiment,
)
from ismdp.stats.rates import (  # noqa: F401
    RateReport,
    es_rate,
    gao_wang_variance,
    mdp_confidence_interval,
    quantile_variance,
    rate_report,
    sigma_p_squared,
    sigma_qp_squared,
    tail_variance,
    truncated_es_rate,
)
from ismdp.stats.scaling import LambdaSpec  # noqa: F401
from ismdp.stats.targets import VARIANCES, Target, TargetKind  # noqa: F401
from ismdp.stats.variational import (  # noqa: F401
    KAPPAS,
    PerturbationDensity,
    kappa1,
    kappa2,
    kappa3,
    numeric_kappa,
    optimal_perturbation,
    perturbation_rate,
)
