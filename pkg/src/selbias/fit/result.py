from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Optional

import numpy as np

from ..conjugate import NormalPrior
from ..errors import ValidationError
from .diagnostics import DiagnosticsReport, diagnose


def _frozen(a):
    if a is None:
        return None
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FitResult:
    """Outcome of fitting the portfolio prior.

    Sampling methods carry ``draws`` with shape ``(chains, kept_iters, p)``
    whose columns follow ``param_names`` (``eta``, ``sigma2``, then the
    latent compound effects). ``point`` and ``se`` hold posterior means and
    SDs for sampling fits, the maximum and curvature-based standard errors
    for ``mle``.
    """

    method: str
    point: dict
    se: dict
    param_names: tuple[str, ...] = ()
    draws: Optional[np.ndarray] = None
    diagnostics: Optional[DiagnosticsReport] = None
    seed: Optional[int] = None
    chains: int = 0
    iters: int = 0
    burn_in: int = 0
    warnings: tuple[str, ...] = ()
    boundary: bool = False
    log_likelihood: Optional[float] = None
    cov: Optional[np.ndarray] = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "draws", _frozen(self.draws))
        object.__setattr__(self, "cov", _frozen(self.cov))
        object.__setattr__(self, "param_names", tuple(self.param_names))
        object.__setattr__(self, "warnings", tuple(self.warnings))

    @property
    def eta_hat(self) -> float:
        return float(self.point["eta"])

    @property
    def sigma2_hat(self) -> float:
        return float(self.point["sigma2"])

    @property
    def is_sampled(self) -> bool:
        return self.draws is not None

    def samples(self, name: str) -> np.ndarray:
        """All retained draws of one parameter, chains concatenated."""
        if self.draws is None:
            raise ValidationError(f"{self.method} result has no draws")
        k = self.param_names.index(name)
        return self.draws[:, :, k].reshape(-1)

    def interval(self, name: str, level: float = 0.9) -> tuple[float, float]:
        """Equal-tailed credible interval from the draws."""
        if not 0.0 < level < 1.0:
            raise ValidationError("level must lie in (0, 1)")
        x = self.samples(name)
        lo, hi = np.quantile(x, [(1.0 - level) / 2.0, (1.0 + level) / 2.0])
        return float(lo), float(hi)


def summarize_draws(draws: np.ndarray, names) -> tuple[dict, dict]:
    flat = draws.reshape(-1, draws.shape[2])
    means = flat.mean(axis=0)
    sds = flat.std(axis=0, ddof=1) if flat.shape[0] > 1 else np.zeros(flat.shape[1])
    return (
        {n: float(v) for n, v in zip(names, means)},
        {n: float(v) for n, v in zip(names, sds)},
    )


def sampled_result(method, draws, names, *, seed, chains, iters, burn_in, warnings=(), extra=None):
    point, se = summarize_draws(draws, names)
    return FitResult(
        method=method,
        point=point,
        se=se,
        param_names=tuple(names),
        draws=draws,
        diagnostics=diagnose(draws, names),
        seed=seed,
        chains=chains,
        iters=iters,
        burn_in=burn_in,
        warnings=tuple(warnings),
        extra=dict(extra or {}),
    )


def prior_from_fit(result: FitResult, mode: Literal["plugin", "predictive"] = "plugin") -> NormalPrior:
    """Turn a fit into the ``N(eta, sigma2)`` prior used for adjustment.

    ``plugin`` uses the point estimates. ``predictive`` adds the uncertainty
    in ``eta`` to the variance: a new compound's effect has variance
    ``E[sigma2] + Var(eta)`` when both are integrated over the fit.
    """
    if mode not in ("plugin", "predictive"):
        raise ValidationError(f"unknown mode {mode!r}; expected plugin or predictive")
    if result.is_sampled:
        eta_draws = result.samples("eta")
        eta = float(eta_draws.mean())
        sigma2 = float(result.samples("sigma2").mean())
        eta_var = float(eta_draws.var())
    else:
        eta = result.eta_hat
        sigma2 = result.sigma2_hat
        eta_var = float(result.se["eta"]) ** 2
    if mode == "predictive":
        sigma2 = sigma2 + eta_var
    if not sigma2 > 0.0:
        raise ValidationError(
            "fitted sigma2 is 0 (no detectable heterogeneity); use mode='predictive' "
            "or supply a prior explicitly"
        )
    return NormalPrior(eta, sigma2)
