import math
from typing import Sequence

from ..conjugate import StudyEstimate
from ..errors import ValidationError


def pool_fixed_effect(estimates: Sequence[StudyEstimate], label=None) -> StudyEstimate:
    """Inverse-variance (fixed-effect) pooling of independent estimates.

    Sums use ``math.fsum`` so the result is independent of input order. A
    single estimate is returned unchanged.
    """
    estimates = list(estimates)
    if not estimates:
        raise ValidationError("cannot pool an empty list of estimates")
    if len(estimates) == 1:
        return estimates[0]
    weights = [1.0 / (e.std_error * e.std_error) for e in estimates]
    total = math.fsum(weights)
    pooled = math.fsum(w * e.estimate for w, e in zip(weights, estimates)) / total
    return StudyEstimate(pooled, math.sqrt(1.0 / total), label=label)
