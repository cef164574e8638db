"""Fitting the portfolio prior N(eta, sigma2) from multi-compound study estimates."""

from .diagnostics import DiagnosticsReport, diagnose, ess, rhat
from .gibbs import fit_gibbs, fit_gibbs_nested
from .mle import fit_mle, marginal_loglik
from .portfolio import CompoundRecord, HyperPriors, Portfolio
from .result import FitResult, prior_from_fit

__all__ = [
    "CompoundRecord", "DiagnosticsReport", "FitResult", "HyperPriors", "Portfolio",
    "diagnose", "ess", "fit_gibbs", "fit_gibbs_nested", "fit_mle", "marginal_loglik",
    "prior_from_fit", "rhat",
]
