"""Marginal maximum likelihood for ``(eta, sigma2)``.

Integrating out ``theta_i``, compound ``i``'s estimates are jointly normal
with mean ``eta * 1`` and covariance ``sigma2 * J + diag(v_ij)``. That
likelihood factors through the precision-weighted compound mean ``ybar_i``
and total precision ``P_i``: ``ybar_i ~ N(eta, 1/P_i + sigma2)``, times a
within-compound term free of both parameters. For fixed ``sigma2`` the
maximizing ``eta`` is a weighted mean, leaving a one-dimensional search.
"""

from __future__ import annotations

import math
import warnings

import numpy as np
from scipy.optimize import brentq

from ..errors import ConvergenceError, NumericalError
from .portfolio import Portfolio
from .result import FitResult

_MAX_EXPANSIONS = 80


def _gls_eta(ybar, P, sigma2):
    w = 1.0 / (1.0 / P + sigma2)
    return float(np.sum(w * ybar) / np.sum(w)), w


def _profile_score(ybar, P, sigma2):
    """d/d(sigma2) of the profile log-likelihood (eta at its GLS value)."""
    eta, w = _gls_eta(ybar, P, sigma2)
    r = ybar - eta
    return 0.5 * float(np.sum(w * w * r * r - w))


def marginal_loglik(portfolio: Portfolio, eta: float, sigma2: float) -> float:
    """Full marginal log-likelihood, constants included."""
    y, v, idx = portfolio.flat()
    ybar, P = portfolio.compound_summaries()
    resid = y - ybar[idx]
    within = -0.5 * float(np.sum(np.log(2.0 * math.pi * v) + resid * resid / v))
    d = ybar - eta
    between = -0.5 * float(np.sum(np.log1p(sigma2 * P) + d * d * P / (1.0 + sigma2 * P)))
    return within + between


def _observed_information(ybar, P, eta, sigma2):
    vv = 1.0 / P + sigma2
    w = 1.0 / vv
    r = ybar - eta
    h_ee = -np.sum(w)
    h_es = -np.sum(w * w * r)
    h_ss = np.sum(0.5 * w * w - w ** 3 * r * r)
    return -np.array([[h_ee, h_es], [h_es, h_ss]])


def fit_mle(portfolio: Portfolio) -> FitResult:
    """Maximize the marginal likelihood; ``sigma2`` is clipped at 0.

    Standard errors come from the inverse observed information in
    ``(eta, sigma2)``. On the boundary (``sigma2 == 0``) the ``sigma2``
    standard error is a one-sided curvature figure and ``boundary`` is set.
    """
    ybar, P = portfolio.compound_summaries()
    notes = []
    if portfolio.n_compounds < 2:
        msg = f"only {portfolio.n_compounds} compound: sigma2 is not identifiable"
        warnings.warn(msg, stacklevel=2)
        notes.append("small_portfolio: " + msg)

    boundary = _profile_score(ybar, P, 0.0) <= 0.0
    if boundary:
        sigma2 = 0.0
    else:
        lo = 0.0
        hi = max(float(ybar.var()), float(np.max(1.0 / P)), 1e-12)
        for _ in range(_MAX_EXPANSIONS):
            if _profile_score(ybar, P, hi) < 0.0:
                break
            lo, hi = hi, hi * 2.0
        else:
            raise ConvergenceError(
                f"could not bracket the sigma2 score root: score({hi:.6g}) = "
                f"{_profile_score(ybar, P, hi):.6g} is still positive after "
                f"{_MAX_EXPANSIONS} doublings (last bracket [{lo:.6g}, {hi:.6g}])"
            )
        try:
            sigma2 = brentq(lambda s: _profile_score(ybar, P, s), lo, hi, xtol=1e-15, rtol=1e-15, maxiter=500)
        except (RuntimeError, ValueError) as exc:
            raise ConvergenceError(f"sigma2 root search failed on [{lo:.6g}, {hi:.6g}]: {exc}") from exc
        eta_root, _ = _gls_eta(ybar, P, sigma2)
        eta_zero, _ = _gls_eta(ybar, P, 0.0)
        if marginal_loglik(portfolio, eta_zero, 0.0) > marginal_loglik(portfolio, eta_root, sigma2):
            sigma2, boundary = 0.0, True

    eta, _ = _gls_eta(ybar, P, sigma2)
    info = _observed_information(ybar, P, eta, sigma2)
    try:
        cov = np.linalg.inv(info)
    except np.linalg.LinAlgError:
        cov = np.full((2, 2), np.nan)
    se_eta = math.sqrt(cov[0, 0]) if cov[0, 0] > 0 else math.sqrt(1.0 / info[0, 0])
    se_sigma2 = math.sqrt(cov[1, 1]) if cov[1, 1] > 0 else float("nan")
    if not math.isfinite(eta):
        raise NumericalError("non-finite eta at the likelihood maximum")
    if boundary:
        notes.append("boundary: sigma2 clipped at 0")

    return FitResult(
        method="mle",
        point={"eta": eta, "sigma2": float(sigma2)},
        se={"eta": se_eta, "sigma2": se_sigma2},
        param_names=("eta", "sigma2"),
        warnings=notes,
        boundary=boundary,
        log_likelihood=marginal_loglik(portfolio, eta, sigma2),
        cov=cov,
    )
