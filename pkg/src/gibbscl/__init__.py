"""Calibrated block composite likelihoods for lattice Gibbs random fields."""

from __future__ import annotations

__version__ = "0.1.0"

from .lattice import (  # noqa: E402
    ANISOTROPIC,
    AUTOLOGISTIC,
    ISING,
    Lattice,
    ModelSpec,
    get_model,
    sufficient_statistics,
)
from .exact import (  # noqa: E402
    LagError,
    exact_sample,
    exact_samples,
    log_partition_bruteforce,
    log_partition_recursive,
)
from .composite import (  # noqa: E402
    Block,
    BlockSet,
    CompositeLikelihood,
    enumerate_blocks,
    log_composite_likelihood,
    log_pseudolikelihood,
)
from .calibrate import (  # noqa: E402
    BFGSConfig,
    CalibrationResult,
    calibrate,
    curvature_matrix,
    matrix_magnitude_weight,
    scalar_magnitude_weight,
)
from .posterior import GridPosterior, LogPartitionSurface, grid_posterior  # noqa: E402
