"""Exact accelerated k-means with instrumented distance counting."""

from .core import (
    CentroidState,
    DataMatrix,
    DatasetError,
    RoundStats,
    distance,
    gaussian_mixture,
    init_centroids,
    load_dataset,
    save_dataset,
)
from .engine import RunConfig, RunResult, converged, run, update_step
from .strategies import ALGORITHMS, ns_variant
from .verify import assert_trajectory_equal, audit_bounds, lloyd_reference

__all__ = [
    "ALGORITHMS",
    "CentroidState",
    "DataMatrix",
    "DatasetError",
    "RoundStats",
    "RunConfig",
    "RunResult",
    "assert_trajectory_equal",
    "audit_bounds",
    "converged",
    "distance",
    "gaussian_mixture",
    "init_centroids",
    "lloyd_reference",
    "load_dataset",
    "ns_variant",
    "run",
    "save_dataset",
    "update_step",
]
