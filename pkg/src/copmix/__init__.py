"""Dependency-seeking clustering with Dirichlet-process copula mixtures."""

from .copula import (
    CorrelationMatrix,
    CovarianceMatrix,
    ViewLayout,
    block_diag,
    corr_of_latents,
    cov_to_corr,
    gaussian_copula_logdensity,
    meta_gaussian_logpdf,
    normal_scores,
    sample_corr_prior,
    sample_inv_wishart,
    sample_meta_gaussian,
)
from .errors import (
    ConfigError,
    CopmixError,
    DataError,
    DegenerateDataError,
    DomainError,
    MatrixError,
    NearSingularError,
    NumericalError,
    ParameterError,
)
from .margins import (
    BetaShapesPrior,
    GammaPrior,
    MarginParams,
    MarginSpec,
    NormalInverseGammaPrior,
    beta_params,
    exponential_params,
    margin_cdf,
    margin_logpdf,
    margin_quantile,
    normal_params,
    phi_cdf,
    prior_logpdf,
    prior_sample,
    probit,
)
from .mixture import (
    ClusterParams,
    ModelConfig,
    Partition,
    canonical_labels,
    cluster_loglik,
    crp_expected_k,
    crp_log_prior,
    draw_from_base,
    point_loglik,
    rows_loglik,
)
from .sampler import ChainTrace, MhTuning, Sampler, SweepRecord, init_state, run

__version__ = "0.1.0"
