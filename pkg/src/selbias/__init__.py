"""Quantify and correct the selection bias of promising early-study results.

The core model treats a compound's true effect as a draw from a portfolio
prior ``N(eta, sigma2)`` and each study estimate as a noisy measurement of
it. Conditioning the Large Study estimate on the Small Study one gives the
adjusted (shrunken) prediction and the probability of Large Study success.
"""

__version__ = "0.1.0"

from .conjugate import (
    BivariateNormalSummary,
    ConditionalPrediction,
    NormalPrior,
    StudyEstimate,
    adjust_estimate,
    bias,
    conditional_prediction,
    joint_marginal,
    pos_large,
    prob_meet_threshold,
    shrink_weight,
    truncated_selected_mean,
)
from .errors import (
    ConvergenceError,
    DegenerateSelectionError,
    InsufficientSampleError,
    NumericalError,
    SelbiasError,
    ValidationError,
)

__all__ = [
    "BivariateNormalSummary", "ConditionalPrediction", "ConvergenceError",
    "DegenerateSelectionError", "InsufficientSampleError", "NormalPrior", "NumericalError",
    "SelbiasError", "StudyEstimate", "ValidationError", "adjust_estimate", "bias",
    "conditional_prediction", "joint_marginal", "pos_large", "prob_meet_threshold",
    "shrink_weight", "truncated_selected_mean",
]
