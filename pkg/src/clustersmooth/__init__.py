"""Kernel smoothing for cluster-sampled data.

Observations arrive in independent clusters whose members may be
arbitrarily dependent.  The package provides kernel density estimation,
Nadaraya-Watson and local-linear regression, bandwidth selection that
stays honest under that dependence (cluster rule-of-thumb and
leave-one-cluster-out cross-validation), and pointwise confidence
intervals whose variance accounts for within-cluster covariance of the
regression errors.  A Monte Carlo module reproduces the sampling
experiments the estimators were designed around.
"""

from .bandwidth import (
    BandwidthReport,
    PolyFit4,
    WeightWindow,
    aimse_h0,
    cv_criterion,
    cv_select,
    default_grid,
    global_poly4,
    reference_h,
    rot,
    undersmooth,
)
from .dataset import (
    Cluster,
    ClusteredDataset,
    ClusterSizeSummary,
    ColumnSchema,
    drop_cluster,
    from_arrays,
    load_csv,
    size_summary,
)
from .density import (
    DensityEstimate,
    PairDensityEstimate,
    density,
    joint_density_pairs,
)
from .errors import (
    BandwidthSearchError,
    DataError,
    DegenerateInputError,
    EmptyWindowError,
    NumericError,
    ParseError,
    SchemaError,
    SingularDesignError,
    UsageError,
    ValidationError,
)
from .inference import InferenceBand, make_band, se_cr, se_iid, se_lambda, z_quantile
from .kernels import (
    EPANECHNIKOV,
    GAUSSIAN_TRUNCATED,
    KERNELS,
    QUARTIC,
    KernelSpec,
    eval_product,
    eval_univariate,
    get_kernel,
)
from .montecarlo import (
    AseRecord,
    AseTable,
    CoverageRecord,
    CoverageTable,
    CvDecomposition,
    DgpConfig,
    cv_decomposition,
    default_window,
    generate,
    noise_scale,
    run_ase_table,
    run_coverage_table,
    sigma2_bar_w,
    true_bias,
    true_m,
    true_m_prime,
    true_second_deriv,
)
from .regress import (
    RCOND_MIN,
    FitResult,
    ResidualSet,
    fit_grid,
    fit_loco,
    ll_fit,
    nw_fit,
    residuals,
)
from .variance import (
    CovTermEstimate,
    LambdaHat,
    MvnMoments,
    cond_cov_nw,
    cond_var_nw,
    conditional_normal_density,
    lambda_hat,
    pair_moments,
    parametric_cov_term,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "AseRecord",
    "AseTable",
    "BandwidthReport",
    "BandwidthSearchError",
    "Cluster",
    "ClusterSizeSummary",
    "ClusteredDataset",
    "ColumnSchema",
    "CovTermEstimate",
    "CoverageRecord",
    "CoverageTable",
    "CvDecomposition",
    "DataError",
    "DegenerateInputError",
    "DensityEstimate",
    "DgpConfig",
    "EPANECHNIKOV",
    "EmptyWindowError",
    "FitResult",
    "GAUSSIAN_TRUNCATED",
    "InferenceBand",
    "KERNELS",
    "KernelSpec",
    "LambdaHat",
    "MvnMoments",
    "NumericError",
    "PairDensityEstimate",
    "ParseError",
    "PolyFit4",
    "QUARTIC",
    "RCOND_MIN",
    "ResidualSet",
    "SchemaError",
    "SingularDesignError",
    "UsageError",
    "ValidationError",
    "WeightWindow",
    "aimse_h0",
    "cond_cov_nw",
    "cond_var_nw",
    "conditional_normal_density",
    "cv_criterion",
    "cv_decomposition",
    "cv_select",
    "default_grid",
    "default_window",
    "density",
    "drop_cluster",
    "eval_product",
    "eval_univariate",
    "fit_grid",
    "fit_loco",
    "from_arrays",
    "generate",
    "get_kernel",
    "global_poly4",
    "joint_density_pairs",
    "lambda_hat",
    "ll_fit",
    "load_csv",
    "make_band",
    "noise_scale",
    "nw_fit",
    "pair_moments",
    "parametric_cov_term",
    "reference_h",
    "residuals",
    "rot",
    "run_ase_table",
    "run_coverage_table",
    "se_cr",
    "se_iid",
    "se_lambda",
    "sigma2_bar_w",
    "size_summary",
    "true_bias",
    "true_m",
    "true_m_prime",
    "true_second_deriv",
    "undersmooth",
    "z_quantile",
]
