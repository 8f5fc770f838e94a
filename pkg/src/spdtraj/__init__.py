"""spdtraj: multivariate time series as trajectories of SPD matrices.

Sliding-window shrinkage covariance estimation, a quotient Riemannian metric
on SPD matrices with closed-form geodesics and transport, rate-invariant
trajectory alignment through transported square-root vector fields, Stiefel
dimension reduction that preserves pairwise distances, and distance-based
classification utilities.
"""

from .alignment import (
    TrajectoryPair,
    TSRVFSequence,
    WarpingFunction,
    align_dq,
    apply_warp,
    dist_dc,
    evaluate_trajectory,
    random_warp,
    resample_trajectory,
    tsrvf,
    velocity_field,
)
from .analysis import (
    CVReport,
    DistanceMatrix,
    LabeledCollection,
    alignment_reduction_histogram,
    block_contrast,
    cross_validate,
    distance_matrix,
    frobenius_gap,
    knn_classify,
)
from .estimation import (
    CovarianceTrajectory,
    MultivariateTimeSeries,
    ShrinkageDiagnostics,
    WindowConfig,
    estimate_trajectory,
    ledoit_wolf,
    logdet_curve,
    normalize_trajectory,
    pca_reduce_timeseries,
    smooth_resample,
)
from .geometry import (
    BasePointMismatchError,
    DimensionMismatchError,
    NotPositiveDefiniteError,
    Tangent,
    dist_full,
    dist_unitdet,
    exp_map,
    geodesic,
    inner,
    log_euclidean_dist,
    log_map,
    normalize_det,
    parallel_transport,
    sym_exp,
    sym_log,
    sym_sqrt,
)
from .reduction import (
    PairTensor,
    ReductionModel,
    StiefelBasis,
    build_pairs,
    euclidean_gradient,
    fit,
    lemma1_residual,
    objective,
    pair_matrix,
    project,
    pseudoinverse,
    reconstruct,
    reduce_trajectory,
)
from .simgen import Exp1Config, Exp2Config, gen_exp1, gen_exp2, gen_two_class

__version__ = "0.1.0"
