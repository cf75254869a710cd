"""spanopt: matrix-free stochastic approximate-Newton optimization.

The optimizer sketches the batch Hessian through powered Gaussian test
matrices and Hessian-vector products only, applies a perturbed projected
inverse to the full gradient, and never forms a d x d matrix.  Reference
baselines (gradient descent, variance-reduced SGD, truncated-eigenvalue
subsampled Newton, Neumann-series inverse estimation) share its trace format
for head-to-head benchmarking via the `bench` CLI.
"""

from .baselines import BaselineConfig, run_gd, run_lissa, run_newsamp, run_svrg
from .errors import SpanOptError
from .hvp import ANALYTIC, CENTRAL_FD, HvpMode, extended_hvp, hvp
from .linalg import (
    EigenPairs,
    gaussian_matrix,
    qr_orthonormal,
    solve_small,
    spectral_norm_sym,
    sym_eig_small,
)
from .objectives import (
    Dataset,
    ObjectiveConfig,
    batch_gradient,
    batch_loss,
    dense_hessian,
    exact_hvp,
    full_batch,
    sample_batch,
)
from .rangefinder import RangeConfig, min_power_iterations, power_range
from .span import (
    SpanConfig,
    SpanState,
    Subspace,
    TraceRecord,
    apply_inverse,
    assemble_subspace,
    build_subspace,
    hessian_error_probe,
    recommended_batch_size,
    run_span,
    span_step,
)

__version__ = "0.1.0"

__all__ = [
    "ANALYTIC",
    "BaselineConfig",
    "CENTRAL_FD",
    "Dataset",
    "EigenPairs",
    "HvpMode",
    "ObjectiveConfig",
    "RangeConfig",
    "SpanConfig",
    "SpanOptError",
    "SpanState",
    "Subspace",
    "TraceRecord",
    "apply_inverse",
    "assemble_subspace",
    "batch_gradient",
    "batch_loss",
    "build_subspace",
    "dense_hessian",
    "exact_hvp",
    "extended_hvp",
    "full_batch",
    "gaussian_matrix",
    "hessian_error_probe",
    "hvp",
    "min_power_iterations",
    "power_range",
    "qr_orthonormal",
    "recommended_batch_size",
    "run_gd",
    "run_lissa",
    "run_newsamp",
    "run_span",
    "run_svrg",
    "sample_batch",
    "solve_small",
    "span_step",
    "spectral_norm_sym",
    "sym_eig_small",
]
