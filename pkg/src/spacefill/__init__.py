"""Maximin space-filling designs in arbitrary bounded domains.

Annealing generators for the maximin criterion, uniform/LHS/Sobol baselines,
and kernel-interpolation benchmarks of the resulting designs.
"""

from .annealing import (
    AnnealerConfig,
    ChainState,
    CoolingSchedule,
    TraceRecord,
    VarianceSchedule,
    default_T0,
    default_config,
    default_tau0,
    run,
    step,
)
from .baselines import (
    SobolGenerator,
    lhs,
    maximin_lhs,
    sobol_design,
    truncated_lhs,
    uniform_design,
)
from .designs import (
    Design,
    DistanceCache,
    MaximinScore,
    compare_scores,
    covering_radius_estimate,
    energy_difference,
    maximin_distance,
    maximin_score,
    translate_from_unit_cube,
    translate_to_unit_cube,
    update_distance_cache,
    validate_design,
)
from .domains import (
    BoundingBox,
    CovarianceMatrix,
    Domain,
    domain_from_spec,
    empirical_covariance,
    estimate_volume,
    gaussian_mass,
    make_builtin_domain,
    make_external_domain,
    sample_uniform,
)
from .errors import (
    ConfigurationError,
    FitError,
    MembershipError,
    SamplingError,
    SpacefillError,
    ValidationError,
)
from .kriging import (
    ErrorReport,
    Interpolator,
    KernelSpec,
    TrendSpec,
    error_metrics,
    fit,
    gram_matrix,
    interpolator_from_json,
    interpolator_to_json,
    kernel_eval,
    log_likelihood,
    mle_fit,
    power_function,
    predict,
    predict_many,
    synthetic_blackbox,
)

__version__ = "0.1.0"
