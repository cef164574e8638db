"""Portfolio containers shared by the fitters, the CSV reader and the simulator."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..conjugate import StudyEstimate
from ..errors import ValidationError


@dataclass(frozen=True)
class CompoundRecord:
    compound_id: str
    studies: tuple[StudyEstimate, ...]

    def __post_init__(self):
        object.__setattr__(self, "studies", tuple(self.studies))
        if not self.studies:
            raise ValidationError(f"compound {self.compound_id!r} has no studies")


@dataclass(frozen=True)
class Portfolio:
    """Compounds, each with one or more study estimates.

    Compound order and within-compound study order are preserved; the
    hierarchical fitters treat all studies as exchangeable draws around their
    compound's true effect.
    """

    compounds: tuple[CompoundRecord, ...]

    def __post_init__(self):
        object.__setattr__(self, "compounds", tuple(self.compounds))
        if not self.compounds:
            raise ValidationError("portfolio must contain at least one compound")
        seen = set()
        for rec in self.compounds:
            if rec.compound_id in seen:
                raise ValidationError(f"duplicate compound_id {rec.compound_id!r}")
            seen.add(rec.compound_id)

    @classmethod
    def from_arrays(cls, compound_ids: Sequence, estimates, std_errors) -> "Portfolio":
        """Group flat arrays by compound id, keeping first-appearance order."""
        estimates = np.asarray(estimates, dtype=float)
        std_errors = np.asarray(std_errors, dtype=float)
        if not (len(compound_ids) == estimates.size == std_errors.size):
            raise ValidationError("compound_ids, estimates and std_errors differ in length")
        groups: dict[str, list[StudyEstimate]] = {}
        for cid, est, se in zip(compound_ids, estimates, std_errors):
            groups.setdefault(str(cid), []).append(StudyEstimate(est, se))
        return cls(tuple(CompoundRecord(cid, tuple(st)) for cid, st in groups.items()))

    @property
    def n_compounds(self) -> int:
        return len(self.compounds)

    @property
    def n_studies(self) -> int:
        return sum(len(c.studies) for c in self.compounds)

    @property
    def compound_ids(self) -> list[str]:
        return [c.compound_id for c in self.compounds]

    def study_counts(self) -> np.ndarray:
        return np.array([len(c.studies) for c in self.compounds], dtype=int)

    def flat(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(estimates, variances, compound_index)`` over all studies."""
        est, var, idx = [], [], []
        for i, rec in enumerate(self.compounds):
            for st in rec.studies:
                est.append(st.estimate)
                var.append(st.variance)
                idx.append(i)
        return np.array(est), np.array(var), np.array(idx, dtype=int)

    def compound_summaries(self) -> tuple[np.ndarray, np.ndarray]:
        """Precision-weighted mean and total precision per compound.

        With studies ``y_j ~ N(theta_i, v_j)`` these are sufficient for
        ``theta_i``: ``ybar_i = sum(y_j/v_j) / P_i`` and ``P_i = sum(1/v_j)``.
        """
        est, var, idx = self.flat()
        prec = 1.0 / var
        P = np.bincount(idx, weights=prec, minlength=self.n_compounds)
        ybar = np.bincount(idx, weights=prec * est, minlength=self.n_compounds) / P
        return ybar, P


@dataclass(frozen=True)
class HyperPriors:
    """``eta ~ N(eta_mean, eta_var)`` and ``sigma2 ~ InvGamma(shape, rate)``.

    Inverse gamma uses the shape/rate convention, density proportional to
    ``x**(-shape-1) * exp(-rate/x)``.
    """

    eta_mean: float = 0.0
    eta_var: float = 1000.0
    sigma2_shape: float = 0.001
    sigma2_rate: float = 0.001

    def __post_init__(self):
        for name in ("eta_mean", "eta_var", "sigma2_shape", "sigma2_rate"):
            if not math.isfinite(getattr(self, name)):
                raise ValidationError(f"{name} must be finite")
        for name in ("eta_var", "sigma2_shape", "sigma2_rate"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be > 0")

