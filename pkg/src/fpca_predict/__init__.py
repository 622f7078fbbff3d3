"""Predictive distributions for sparsely observed functional data."""

from .artifact import load_model, save_model
from .data import Grid, SparseFunctionalDataset, SubjectRecord, load_csv, rescale_domain, restore_domain, write_csv
from .errors import (
    DomainError,
    EmptyDatasetError,
    EstimationError,
    FpcaError,
    ParseError,
    SchemaError,
    SingularCovarianceError,
)
from .flm import (
    FlmModel,
    fit_flm,
    population_discrepancy_oracle,
    response_predictive_distribution,
    sigma_y_estimate,
    uniformity_diagnostic,
    wasserstein_discrepancy,
)
from .kernels import Kernel
from .predictive import (
    FunctionalGaussian,
    ScorePredictive,
    blup_scores,
    contour_ellipse,
    functional_predictive_distribution,
    infinite_predictive_distribution,
    pointwise_band,
    score_predictive_distribution,
)
from .smoothing import (
    Bandwidths,
    CovarianceSurface,
    CrossCovariance,
    MeanFunction,
    default_bandwidths,
    estimate_covariance,
    estimate_cross_covariance,
    estimate_mean,
    select_bandwidth_cv,
)
from .spectral import EigenSystem, FittedFpcaModel, eigendecompose, evaluate_eigenfunction, fit_fpca, select_k_fve
from .wasserstein import (
    Gaussian1D,
    QuantileFunction,
    uniformity_statistic,
    w2_gaussian_1d,
    w2_gaussian_hilbert,
    w2_gaussian_to_atom,
    w2_univariate,
)

__version__ = "0.1.0"
