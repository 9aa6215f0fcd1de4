"""Audit, bound and correct estimates of the posterior on the number of mixture components."""

from importlib import resources

from .bounds import BoundResult, bounds_table, posterior_k, posterior_upper_bound, spike_posterior
from .classes import ClassStructure, enumerate_H, gamma_h_rk, gamma_h_t, represent_fk, represent_fk_split, s_of_h
from .coefficients import Verdict, build_tables, inverse_row, log_a, log_b, properness_diagnostic
from .config import EquivalenceRequired, ExplicitWeights, ModelConfig, Uniform
from .correction import CorrectionResult, CovarianceSpec, posterior_mean, project_mode, truncated_normal_draw
from .occupancy import (
    OccupancyDistribution,
    marginal_likelihood_h,
    partitions_h_parts,
    posterior_h,
    prior_h,
    prior_h_given_k,
)
from .signedlog import SignedLogValue, sl_add, sl_mul, sl_sum
from .transforms import (
    MarginalEstimates,
    check_constraints,
    extend_f,
    f_to_fdagger,
    fdagger_to_f,
    fstar_decompose,
    fstar_reconstruct,
)


def galaxy_example_path():
    """Path of the bundled galaxy-data estimate file."""
    return resources.files(__package__) / "data" / "galaxy_estimates.json"


__version__ = "0.1.0"

__all__ = [
    "BoundResult",
    "ClassStructure",
    "CorrectionResult",
    "CovarianceSpec",
    "EquivalenceRequired",
    "ExplicitWeights",
    "MarginalEstimates",
    "ModelConfig",
    "OccupancyDistribution",
    "SignedLogValue",
    "Uniform",
    "Verdict",
    "__version__",
    "bounds_table",
    "build_tables",
    "check_constraints",
    "enumerate_H",
    "extend_f",
    "f_to_fdagger",
    "fdagger_to_f",
    "fstar_decompose",
    "fstar_reconstruct",
    "galaxy_example_path",
    "gamma_h_rk",
    "gamma_h_t",
    "inverse_row",
    "log_a",
    "log_b",
    "marginal_likelihood_h",
    "partitions_h_parts",
    "posterior_h",
    "posterior_k",
    "posterior_mean",
    "posterior_upper_bound",
    "prior_h",
    "prior_h_given_k",
    "project_mode",
    "properness_diagnostic",
    "represent_fk",
    "represent_fk_split",
    "s_of_h",
    "sl_add",
    "sl_mul",
    "sl_sum",
    "spike_posterior",
    "truncated_normal_draw",
]
