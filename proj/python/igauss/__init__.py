"""Iterative Gaussianization: transport maps built from score-based PCA rotations and mean-field VI."""

from ._core import (
    CallableTarget,
    ConfigError,
    ContractViolation,
    GaussianizationRun,
    GaussianTarget,
    LogisticRegressionTarget,
    MfviError,
    NumericalError,
    OracleError,
    OracleTarget,
    Target,
    TransportChain,
    __version__,
    config_hash,
    eig_sym,
    ess,
    estimate_H,
    evaluate,
    gaussian_mf_step,
    gaussianize,
    haar_rotation,
    iterations_to_threshold,
    ksd,
    kl_gaussian_analytic,
    make_conditioned_gaussian,
    make_logistic_target,
    mmd,
    pfi_lower_bound,
    random_rotation_bound,
    run_config,
    select_rotation,
    validate_config,
)

__all__ = [name for name in dir() if not name.startswith("_")]
