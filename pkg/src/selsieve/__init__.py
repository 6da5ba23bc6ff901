"""Semiparametric sample-selection estimation without an exclusion restriction.

Identification comes from nonlinearity of the selection probability in the
covariates: a sieve probit estimates ``p(X)`` and a partially linear sieve
regression on the selected sample treats the control function as an unknown
smooth function of ``p(X)``.
"""

from .baselines import (BaselineFit, Bounds, heckman_mle, heckman_two_step, lee_bounds,
                        oracle_estimate, tpm_ols)
from .basis import BasisSpec, KnotVector, design_matrix, eval_basis, place_knots
from .data import EstimationRequest, TabularDataset, load_csv, read_csv
from .dgp import BUILTIN_NAMES, DgpSpec, SimDataset, builtin_spec, draw_sample
from .errors import ConfigError, DataError, NumericalError, SelsieveError
from .first_stage import (FirstStageFit, LrTest, diagnose, expand, fit_sieve_binary,
                          lr_nonlinearity_test)
from .montecarlo import McConfig, McResult, McSummary, run_mc, summarize
from .numerics import inverse_mills, solve_ls, stream
from .second_stage import SlsFit, covariance_classical, covariance_robust, sls_estimate

__version__ = "0.1.0"

__all__ = [
    "BUILTIN_NAMES", "BaselineFit", "BasisSpec", "Bounds", "ConfigError", "DataError",
    "DgpSpec", "EstimationRequest", "FirstStageFit", "KnotVector", "LrTest", "McConfig",
    "McResult", "McSummary", "NumericalError", "SelsieveError", "SimDataset", "SlsFit",
    "TabularDataset", "builtin_spec", "covariance_classical", "covariance_robust",
    "design_matrix", "diagnose", "draw_sample", "eval_basis", "expand", "fit_sieve_binary",
    "heckman_mle", "heckman_two_step", "inverse_mills", "lee_bounds", "load_csv",
    "lr_nonlinearity_test", "oracle_estimate", "place_knots", "read_csv", "run_mc",
    "sls_estimate", "solve_ls", "stream", "summarize", "tpm_ols",
]
