"""MMSE estimation from quantized observations.

Quantizer design on the regression function, Monte Carlo estimation of
the MMSE regret, and numerical evaluation of the nonasymptotic bounds
that govern it.
"""

from .bounds import (
    BoundConfig,
    BoundReport,
    bvm_diagnostics,
    corollary_rhs,
    fisher_expectations,
    info_inequality_gap,
    score_average_Gn,
    thm1_rhs,
    thm1_rhs_gaussian,
    thm2_bound_moment,
    thm2_bound_subgaussian,
    weakened_thm2,
)
from .errors import (
    ConfigError,
    ConvergenceError,
    CoveringAuditError,
    DomainError,
    InvalidInputError,
    NumericalDegeneracyError,
    QmmseError,
    QuantileInversionError,
)
from .experiments import (
    SweepRow,
    emit_csv,
    emit_json,
    fit_loglog_slope,
    regime_classify,
    sweep_scalar,
    sweep_vector,
)
from .model import (
    LinearGaussianModel,
    MomentReport,
    ScalarChannelModel,
    VectorJointModel,
    closed_form_mmse,
    cosine_gaussian_model,
    fisher_info,
    moment_report,
    posterior_mean_scalar,
    sample_joint,
    uniform_gaussian_model,
    uniform_logistic_model,
)
from .quantizer import (
    Codebook,
    CoveringQuantizer,
    audit_covering,
    cell_error,
    centroids_from_labels,
    centroids_from_samples,
    covering_codebook,
    covering_quantize,
    delta,
    lloyd_max_1d,
    load_codebook,
    nn_labels,
    panter_dite_1d,
    quantize_nn,
    save_codebook,
)
from .regret import (
    RegretEstimate,
    decomposition_residual,
    distortion_of_Y,
    estimate_decomposition,
    estimate_mmse,
    estimate_mmse_k,
    estimate_quantization_gap,
    estimate_regret_direct,
    regret_via_eta_quantization,
)

__version__ = "0.1.0"
