"""cplearn: latent-variable model learning by CP tensor decomposition.

Overcomplete multiview mixtures, spherical Gaussian mixtures, and (sparse)
ICA are learned by decomposing their empirical moment tensors with
alternating rank-1 power updates, either on dense tensors or directly on
sample-backed moment oracles.  An evaluation harness scores recovery up to
permutation and sign, and a concentration lab measures how fast empirical
moment tensors approach their population values.
"""

__version__ = "0.1.0"

from .tensor import (
    CPModel,
    DenseTensor,
    SpectralNormEstimate,
    cp_to_dense,
    load_tensor,
    save_tensor,
    spectral_norm_estimate,
)
from .models import (
    FourthCumulantMoment,
    GaussianMixtureMoment,
    ICASpec,
    MultiviewMoment,
    MultiviewSpec,
    SampleSet,
    estimate_gmm_variance,
    gen_gmm,
    gen_ica,
    gen_multiview,
    load_samples,
    moment_gmm3,
    moment_ica4,
    moment_multiview,
    save_samples,
)
from .decomposition import (
    CPPowerDecomposition,
    DecompositionConfig,
    RunReport,
    cluster_candidates,
    decompose,
    power_trial,
    save_report,
    load_report,
    semi_supervised_init,
    svd_slice_init,
)
from .evaluation import (
    EvaluationReport,
    dist,
    match_components,
    recovery_curve,
    table_row,
)
from .concentration import (
    SweepSpec,
    error_norm_ica,
    error_tensor_multiview,
    fit_scaling,
    run_sweep,
    sweep_slope,
)

__all__ = [
    "CPModel", "DenseTensor", "SpectralNormEstimate", "cp_to_dense",
    "load_tensor", "save_tensor", "spectral_norm_estimate",
    "FourthCumulantMoment", "GaussianMixtureMoment", "ICASpec",
    "MultiviewMoment", "MultiviewSpec", "SampleSet", "estimate_gmm_variance",
    "gen_gmm", "gen_ica", "gen_multiview", "load_samples", "moment_gmm3",
    "moment_ica4", "moment_multiview", "save_samples",
    "CPPowerDecomposition", "DecompositionConfig", "RunReport",
    "cluster_candidates", "decompose", "power_trial", "save_report",
    "load_report", "semi_supervised_init", "svd_slice_init",
    "EvaluationReport", "dist", "match_components", "recovery_curve",
    "table_row",
    "SweepSpec", "error_norm_ica", "error_tensor_multiview", "fit_scaling",
    "run_sweep", "sweep_slope",
]
