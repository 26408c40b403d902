"""Outlier eigenvalues and eigenvectors of inhomogeneous Erdos-Renyi graphs with finite-rank kernels."""

from .experiments import (
    EpsRule,
    ExperimentConfig,
    ExperimentReport,
    Verdict,
    clt_check,
    eigvec_checks,
    mean_check,
    resolvent_identity_check,
    run_experiment,
    tail_checks,
)
from .kernel import (
    KernelSpec,
    PiecewiseConstant,
    Polynomial,
    SBMParams,
    Tabulated,
    ValidationReport,
    constant_kernel,
    discretize,
    eval_f,
    kernel_from_sbm,
    kernel_rank_one,
    load_kernel,
    save_kernel,
    validate,
)
from .rng import derive_seed
from .sampler import GraphSample, apply_A, apply_W, sample_graph
from .spectra import EigenPair, operator_norm_W, overlap, resolvent_V, top_eigenpairs
from .theory import (
    PredictionSet,
    asymptotic_cov_G,
    b_matrix,
    eigvec_overlap_prediction,
    exact_bilinear_cov,
    expected_W2_form,
    predictions,
    var_profile,
)

__version__ = "0.1.0"
