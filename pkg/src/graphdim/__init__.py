"""Intrinsic dimension estimation by regression on local PCA coordinates.

The two main estimators are :func:`qe_estimate` (quadratic OLS fits with
F-test selection) and :func:`tls_estimate` (quadratic total least squares
with a relative-drop criterion). :mod:`graphdim.manifolds` provides the
synthetic benchmark manifolds and :mod:`graphdim.harness` the replicated
benchmark runner.
"""
from graphdim.errors import (
    DataParseError,
    DegenerateNeighborhoodError,
    EstimationFailedError,
    GraphDimError,
    InvalidInputError,
    InvalidSpecError,
)
from graphdim.estimators import (
    METHODS,
    EstimatorConfig,
    GlobalEstimate,
    LocalEstimate,
    estimate,
    local_pca_estimate,
    pmax,
    qe_estimate,
    tls_estimate,
    twonn_estimate,
)
from graphdim.manifolds import ManifoldSpec, SampleConfig, benchmark_manifold, sample
from graphdim.neighborhood import LocalChart, PointCloud, knn, local_chart

__version__ = "0.1.0"

__all__ = [
    "DataParseError",
    "DegenerateNeighborhoodError",
    "EstimationFailedError",
    "GraphDimError",
    "InvalidInputError",
    "InvalidSpecError",
    "METHODS",
    "EstimatorConfig",
    "GlobalEstimate",
    "LocalEstimate",
    "LocalChart",
    "ManifoldSpec",
    "PointCloud",
    "SampleConfig",
    "benchmark_manifold",
    "estimate",
    "knn",
    "local_chart",
    "local_pca_estimate",
    "pmax",
    "qe_estimate",
    "sample",
    "tls_estimate",
    "twonn_estimate",
]
