"""fleetpp: fleet event prediction with shared-latent GP-modulated Poisson processes."""

from .errors import DataError, NumericalError, ParseError
from .events import (
    EventDataset,
    ObservationWindow,
    UnitRecord,
    holdout_split,
    load_events,
    loads_events,
    save_events,
    single_unit_view,
    truncate_at_percentile,
)
from .inference import (
    FitConfig,
    FittedModel,
    VariationalState,
    data_term,
    elbo,
    elbo_gradient,
    expected_integral_term,
    fit,
    kl_term,
    posterior_moments,
)
from .kernels import (
    GramBundle,
    Hyperparameters,
    InducingPoints,
    build_gram,
    latent_kernel,
    output_cross_kernel,
    output_latent_cross_kernel,
    prior_variance,
)
from .prediction import (
    CountForecast,
    IntensityCurve,
    count_forecast,
    count_pmf,
    expected_count,
    intensity_curve,
    mae_counts,
    predict_latent,
    predictive_loglik,
    rms_intensity,
    sample_count_forecast,
)
from .simulate import (
    ParametricForm,
    SigmoidLinkSpec,
    draw_unit_params,
    generate_fleet,
    intensity_form1,
    intensity_form2,
    sample_mgcp_sigmoid,
    thinning_sample,
)

__version__ = "0.1.0"
