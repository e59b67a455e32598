"""Norm bounds for Gaussian random matrices with arbitrary covariance.

Models are coefficient families ``A_1..A_n`` with ``X = sum_k g_k A_k``.  The
package computes the variance parameters entering the known bounds on
``E||X||``, evaluates Gaussian trace moments exactly via pair partitions, and
checks everything against seeded Monte Carlo.
"""

from .bounds import BoundReport, assemble, samplecov_bound, sigma_params, sigma_star, v_frob, w_proxy
from .experiments import COLUMNS, emit_csv, run_example
from .model import (
    CoeffModel, GridGlue, ModelError, build_model, covariance_apply, gen_named,
    load_model_file, sample, selfadjoint_dilation,
)
from .moments import (
    buchholz_check, orthtr_check, partition_term, recursion_check, tracecross_check,
    wick_trace_moment,
)
from .montecarlo import MCEstimate, estimate_opnorm_mean, estimate_second_moment, scaling_fit
from .partitions import PairPartition, SetPartition, enum_pair_partitions, phi, verify_phi

__all__ = [
    "BoundReport", "CoeffModel", "COLUMNS", "GridGlue", "MCEstimate", "ModelError",
    "PairPartition", "SetPartition", "assemble", "buchholz_check", "build_model",
    "covariance_apply", "emit_csv", "enum_pair_partitions", "estimate_opnorm_mean",
    "estimate_second_moment", "gen_named", "load_model_file", "orthtr_check",
    "partition_term", "phi", "recursion_check", "run_example", "sample",
    "samplecov_bound", "scaling_fit", "selfadjoint_dilation", "sigma_params",
    "sigma_star", "tracecross_check", "v_frob", "verify_phi", "w_proxy",
    "wick_trace_moment",
]
