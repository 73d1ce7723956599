"""Model selection for fixed-effects panel models whose regressors are
summary statistics of a shared high-frequency series."""

from .exceptions import (
    DegenerateFitError,
    DimensionError,
    GenerationError,
    PanelSelectError,
    RankDeficiencyError,
    RegistryError,
    ValidationError,
)
from .features import (
    ModelSpec,
    NestingRelation,
    annual_mean,
    biannual_means,
    bins,
    build_design,
    builtin_specs,
    custom_linear,
    custom_map,
    degree_days,
    detect_nesting,
    load_registry,
    monthly_means,
    no_temperature,
    parse_registry,
    quadratic_annual,
    quarterly_means,
)
from .oracle import (
    DgpTruth,
    MspeParts,
    PredictionGap,
    PseudoTrueResult,
    classify_category,
    misspec_delta,
    mspe_decompose,
    mspe_monte_carlo,
    pseudo_predictions_equal,
    pseudo_true_analysis,
    pseudo_true_nested,
    pseudo_true_params,
)
from .panel import (
    FEFit,
    PanelDataset,
    WithinView,
    delta_prediction,
    fe_estimate,
    predict_within,
    profile_loglik,
    within_transform,
)
from .selection import (
    CriterionSpec,
    SelectionReport,
    gic,
    gic_select,
    mccv_fixed_p,
    mccv_score,
    mccv_select,
    mccv_shao,
    parse_criteria,
    penalty_value,
    select,
)
from .simlab import (
    DgpSpec,
    SimulationReport,
    WeatherConfig,
    dgp_annual,
    dgp_quad_annual,
    dgp_quarterly,
    gen_outcome,
    run_phacking_experiment,
    run_pseudo_true_experiment,
    run_selection_experiment,
    standard_dgps,
    standard_models,
    synth_weather,
)

__version__ = "0.1.0"
