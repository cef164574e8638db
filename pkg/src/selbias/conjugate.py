"""Closed-form normal-normal machinery for Small Study -> Large Study prediction.

Model, per compound::

    theta        ~ N(eta, sigma2)            portfolio prior
    s_hat | theta ~ N(theta, sigma_s**2)     Small Study estimate
    l_hat | theta ~ N(theta, sigma_l**2)     Large Study estimate

with ``s_hat`` and ``l_hat`` independent given ``theta``. Smaller effects are
better; compounds advance when ``s_hat < delta``. Callers working with
"larger is better" endpoints negate everything first (see ``cli --flip-sign``).

Every function here is pure; zero variances are rejected rather than
treated as limits, so probe limits with small positive values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from .errors import DegenerateSelectionError, ValidationError
from .normal import mills_ratio_lower, norm_cdf

# selection probabilities below this are treated as an empty selection
MIN_SELECTION_PROB = 1e-12


def _finite(name: str, value) -> float:
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ValidationError(f"{name} must be a real number, got {value!r}") from None
    if not math.isfinite(value):
        raise ValidationError(f"{name} must be finite, got {value!r}")
    return value


def _positive(name: str, value) -> float:
    value = _finite(name, value)
    if value <= 0.0:
        raise ValidationError(f"{name} must be > 0, got {value!r}")
    return value


@dataclass(frozen=True)
class NormalPrior:
    """Portfolio distribution N(eta, sigma2) of true treatment effects."""

    eta: float
    sigma2: float

    def __post_init__(self):
        object.__setattr__(self, "eta", _finite("eta", self.eta))
        object.__setattr__(self, "sigma2", _positive("sigma2", self.sigma2))

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)


@dataclass(frozen=True)
class StudyEstimate:
    """One study's effect estimate and its standard error."""

    estimate: float
    std_error: float
    label: Optional[str] = None
    phase: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "estimate", _finite("estimate", self.estimate))
        object.__setattr__(self, "std_error", _positive("std_error", self.std_error))

    @property
    def variance(self) -> float:
        return self.std_error * self.std_error


@dataclass(frozen=True)
class BivariateNormalSummary:
    mean_s: float
    mean_l: float
    var_s: float
    var_l: float
    cov: float

    @property
    def correlation(self) -> float:
        return self.cov / math.sqrt(self.var_s * self.var_l)


@dataclass(frozen=True)
class ConditionalPrediction:
    """Distribution of the Large Study estimate given ``s_hat = s``.

    ``shrink_weight`` is the fraction of ``s - eta`` retained; ``bias`` is the
    discount ``cond_mean - s`` to apply to the Small Study estimate.
    """

    cond_mean: float
    cond_var: float
    shrink_weight: float
    bias: float

    @property
    def cond_sd(self) -> float:
        return math.sqrt(self.cond_var)


def shrink_weight(prior: NormalPrior, sigma_s: float) -> float:
    """``sigma2 / (sigma_s**2 + sigma2)``."""
    sigma_s = _positive("sigma_s", sigma_s)
    return prior.sigma2 / (sigma_s * sigma_s + prior.sigma2)


def prob_meet_threshold(prior: NormalPrior, sigma_s: float, delta: float) -> float:
    """Marginal probability that a Small Study estimate lands at or below ``delta``."""
    sigma_s = _positive("sigma_s", sigma_s)
    delta = _finite("delta", delta)
    tau = math.sqrt(sigma_s * sigma_s + prior.sigma2)
    return norm_cdf((delta - prior.eta) / tau)


def joint_marginal(prior: NormalPrior, sigma_s: float, sigma_l: float) -> BivariateNormalSummary:
    sigma_s = _positive("sigma_s", sigma_s)
    sigma_l = _positive("sigma_l", sigma_l)
    return BivariateNormalSummary(
        mean_s=prior.eta,
        mean_l=prior.eta,
        var_s=sigma_s * sigma_s + prior.sigma2,
        var_l=sigma_l * sigma_l + prior.sigma2,
        cov=prior.sigma2,
    )


def conditional_prediction(
    prior: NormalPrior, sigma_s: float, sigma_l: float, s: float
) -> ConditionalPrediction:
    sigma_s = _positive("sigma_s", sigma_s)
    sigma_l = _positive("sigma_l", sigma_l)
    s = _finite("s", s)
    vs = sigma_s * sigma_s
    w = prior.sigma2 / (vs + prior.sigma2)
    cond_mean = prior.eta + w * (s - prior.eta)
    # (sigma_l^2 + sigma2) - sigma2^2/(sigma_s^2 + sigma2), rearranged to avoid cancellation
    cond_var = sigma_l * sigma_l + prior.sigma2 * vs / (vs + prior.sigma2)
    return ConditionalPrediction(
        cond_mean=cond_mean,
        cond_var=cond_var,
        shrink_weight=w,
        bias=cond_mean - s,
    )


def bias(prior: NormalPrior, sigma_s: float, s: float) -> float:
    """Discount ``E[l_hat | s_hat = s] - s``; does not depend on the Large Study SE."""
    w = shrink_weight(prior, sigma_s)
    s = _finite("s", s)
    return (prior.eta + w * (s - prior.eta)) - s


def adjust_estimate(prior: NormalPrior, small: StudyEstimate) -> float:
    """Selection-adjusted estimate of the expected Large Study effect.

    Equals the posterior mean of the true effect given the Small Study
    estimate under ``prior``.
    """
    w = shrink_weight(prior, small.std_error)
    return prior.eta + w * (small.estimate - prior.eta)


def pos_large(
    prior: NormalPrior, sigma_s: float, sigma_l: float, s: float, delta: float
) -> float:
    """Probability the Large Study estimate falls below ``delta`` given ``s_hat = s``."""
    delta = _finite("delta", delta)
    cp = conditional_prediction(prior, sigma_s, sigma_l, s)
    return norm_cdf((delta - cp.cond_mean) / cp.cond_sd)


def truncated_selected_mean(prior: NormalPrior, sigma_s: float, delta: float) -> float:
    """Mean of ``s_hat`` over compounds that passed ``s_hat < delta``."""
    sigma_s = _positive("sigma_s", sigma_s)
    delta = _finite("delta", delta)
    tau = math.sqrt(sigma_s * sigma_s + prior.sigma2)
    z = (delta - prior.eta) / tau
    p_sel = norm_cdf(z)
    if not p_sel > MIN_SELECTION_PROB:
        raise DegenerateSelectionError(
            f"selection probability {p_sel:.3g} <= {MIN_SELECTION_PROB:g} at z={z:.4g}"
        )
    return prior.eta - tau * mills_ratio_lower(z)
