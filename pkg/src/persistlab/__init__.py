"""Persistence exponents of Lamperti-transformed self-similar Gaussian processes.

Modules
-------
specialfn
    Log-gamma, digamma and the Gauss hypergeometric function on [0, 1].
correlation
    Stationary correlation functions, limits and diagnostics.
sampler
    Exact Gaussian path samplers.
persistence
    Monte-Carlo persistence probabilities and exponent fits.
checks
    Deterministic identity and inequality checks.
cli
    Command-line front end (``python3 -m persistlab``).
"""

from .correlation import CorrelationSpec, Kind, corr_eval, r_rl, r_rl_complement, rho_ifbm
from .persistence import estimate_exponent, fit_exponent, persistence_probability
from .sampler import GridSpec, sample_gsp
from .specialfn import hyp2f1, log_gamma

__version__ = "0.1.0"

__all__ = [
    "CorrelationSpec",
    "Kind",
    "corr_eval",
    "r_rl",
    "r_rl_complement",
    "rho_ifbm",
    "estimate_exponent",
    "fit_exponent",
    "persistence_probability",
    "GridSpec",
    "sample_gsp",
    "hyp2f1",
    "log_gamma",
]
