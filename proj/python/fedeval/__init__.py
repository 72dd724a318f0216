"""Aggregated generative-model scores over multi-client reference data."""

from ._fedeval import (
    CapabilityError,
    FedevalError,
    FormatError,
    NumericalError,
    PreconditionError,
    barycenter,
    compare_rankings,
    construct_counterexample,
    fid_all,
    fid_avg,
    fid_avg_decomposition,
    frechet_distance,
    kid_all,
    kid_avg,
    kid_gap,
    knn_radii,
    mmd2,
    moments,
    pool_moments,
    prdc,
    psd_sqrt,
    run_round,
    toy_mixture_sweep,
)

__all__ = [name for name in dir() if not name.startswith("_")]
