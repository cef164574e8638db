"""Gibbs samplers for the hierarchical portfolio model.

Two-level model::

    y_ij | theta_i ~ N(theta_i, v_ij)
    theta_i        ~ N(eta, sigma2)
    eta            ~ N(eta_mean, eta_var)
    sigma2         ~ InvGamma(shape, rate)

The nested variant inserts a study-level effect ``theta_ij ~ N(theta_i, s2_i)``
with ``s2_i ~ InvGamma(a, b)`` per compound. Every full conditional is
conjugate, so the samplers have no tuning parameters.

Each chain draws from its own generator seeded by ``SeedSequence(seed)``
child ``k``; identical ``(seed, chains, iters, burn_in)`` give identical
draws, and chain ``k`` does not depend on how many chains run.
"""

from __future__ import annotations

import math
import warnings

import numpy as np

from ..errors import NumericalError, ValidationError
from .portfolio import HyperPriors, Portfolio
from .result import FitResult, sampled_result

DEFAULT_CHAINS = 4
DEFAULT_ITERS = 5000
DEFAULT_BURN_IN = 2500
DEFAULT_SIGMA_I2_HYPER = (2.0, 0.01)


def _check_run(chains, iters, burn_in):
    if int(chains) != chains or chains < 1:
        raise ValidationError(f"chains must be an integer >= 1, got {chains!r}")
    if int(burn_in) != burn_in or burn_in < 0:
        raise ValidationError(f"burn_in must be an integer >= 0, got {burn_in!r}")
    if int(iters) != iters or iters <= burn_in:
        raise ValidationError(f"iters must be an integer > burn_in, got {iters!r}")


def _chain_rngs(seed, chains):
    children = np.random.SeedSequence(seed).spawn(chains)
    return [np.random.default_rng(c) for c in children]


def _initial_state(rng, ybar, P):
    """Overdispersed starting values for ``(eta, sigma2)``."""
    center = float(np.average(ybar, weights=P))
    noise_var = float(np.mean(1.0 / P))
    spread = float(ybar.var()) if ybar.size > 1 else noise_var
    spread = max(spread, noise_var, 1e-12)
    eta0 = center + 2.0 * math.sqrt(spread) * rng.standard_normal()
    sigma2_0 = spread * math.exp(rng.standard_normal())
    return eta0, sigma2_0


def _nonfinite(chain, it, what):
    return NumericalError(f"non-finite {what} in chain {chain} at iteration {it}")


def _eta_sigma2_step(rng, theta, sigma2, hyper, I, sig_shape):
    prec = 1.0 / hyper.eta_var + I / sigma2
    mean = (hyper.eta_mean / hyper.eta_var + theta.sum() / sigma2) / prec
    eta = mean + rng.standard_normal() / math.sqrt(prec)
    d = theta - eta
    rate = hyper.sigma2_rate + 0.5 * float(d @ d)
    sigma2 = rate / rng.gamma(sig_shape)
    return eta, sigma2


def _run_chain(rng, ybar, P, hyper, iters, burn_in, chain):
    I = ybar.size
    sig_shape = hyper.sigma2_shape + 0.5 * I
    Py = P * ybar
    eta, sigma2 = _initial_state(rng, ybar, P)
    out = np.empty((iters - burn_in, 2 + I))
    for it in range(iters):
        prec = 1.0 / sigma2 + P
        theta = (eta / sigma2 + Py) / prec + rng.standard_normal(I) / np.sqrt(prec)
        eta, sigma2 = _eta_sigma2_step(rng, theta, sigma2, hyper, I, sig_shape)
        if not (math.isfinite(eta) and math.isfinite(sigma2) and sigma2 > 0.0
                and math.isfinite(theta.sum())):
            raise _nonfinite(chain, it, "state")
        if it >= burn_in:
            row = out[it - burn_in]
            row[0] = eta
            row[1] = sigma2
            row[2:] = theta
    return out


def fit_gibbs(
    portfolio: Portfolio,
    hyper: HyperPriors | None = None,
    chains: int = DEFAULT_CHAINS,
    iters: int = DEFAULT_ITERS,
    burn_in: int = DEFAULT_BURN_IN,
    seed: int = 42,
) -> FitResult:
    """Sample ``(eta, sigma2, theta_1..theta_I)`` from the two-level model."""
    hyper = hyper or HyperPriors()
    _check_run(chains, iters, burn_in)
    ybar, P = portfolio.compound_summaries()
    names = ["eta", "sigma2"] + [f"theta[{cid}]" for cid in portfolio.compound_ids]
    draws = np.stack([
        _run_chain(rng, ybar, P, hyper, iters, burn_in, k)
        for k, rng in enumerate(_chain_rngs(seed, chains))
    ])
    return sampled_result(
        "gibbs", draws, names, seed=seed, chains=chains, iters=iters, burn_in=burn_in
    )


def _run_nested_chain(rng, y, v, idx, m, hyper, a_i, b_i, iters, burn_in, chain):
    I = m.size
    n = y.size
    sig_shape = hyper.sigma2_shape + 0.5 * I
    s2_shape = a_i + 0.5 * m
    inv_v = 1.0 / v
    ybar = np.bincount(idx, weights=inv_v * y, minlength=I) / np.bincount(idx, weights=inv_v, minlength=I)
    P = np.bincount(idx, weights=inv_v, minlength=I)
    eta, sigma2 = _initial_state(rng, ybar, P)
    s2 = b_i / rng.gamma(np.full(I, a_i))
    out = np.empty((iters - burn_in, 2 + 2 * I + n))
    for it in range(iters):
        # (theta_i, theta_ij) drawn as one block: theta_i with theta_ij
        # integrated out, then theta_ij given theta_i. Alternating the two
        # conditionals instead stalls when sigma2_i is small.
        s2_j = s2[idx]
        w_j = 1.0 / (v + s2_j)
        Pm = np.bincount(idx, weights=w_j, minlength=I)
        prec = 1.0 / sigma2 + Pm
        sum_w = np.bincount(idx, weights=w_j * y, minlength=I)
        theta = (eta / sigma2 + sum_w) / prec + rng.standard_normal(I) / np.sqrt(prec)
        prec_j = inv_v + 1.0 / s2_j
        theta_ij = (y * inv_v + theta[idx] / s2_j) / prec_j + rng.standard_normal(n) / np.sqrt(prec_j)
        # within-compound between-study variances
        d = theta_ij - theta[idx]
        ss = np.bincount(idx, weights=d * d, minlength=I)
        s2 = (b_i + 0.5 * ss) / rng.gamma(s2_shape)
        eta, sigma2 = _eta_sigma2_step(rng, theta, sigma2, hyper, I, sig_shape)
        if not (math.isfinite(eta) and math.isfinite(sigma2) and sigma2 > 0.0
                and math.isfinite(theta_ij.sum()) and math.isfinite(s2.sum())
                and s2.min() > 0.0):
            raise _nonfinite(chain, it, "state")
        if it >= burn_in:
            row = out[it - burn_in]
            row[0] = eta
            row[1] = sigma2
            row[2:2 + I] = theta
            row[2 + I:2 + 2 * I] = s2
            row[2 + 2 * I:] = theta_ij
    return out


def fit_gibbs_nested(
    portfolio: Portfolio,
    hyper: HyperPriors | None = None,
    sigma_i2_hyper: tuple[float, float] = DEFAULT_SIGMA_I2_HYPER,
    chains: int = DEFAULT_CHAINS,
    iters: int = DEFAULT_ITERS,
    burn_in: int = DEFAULT_BURN_IN,
    seed: int = 42,
) -> FitResult:
    """Three-level variant with per-compound between-study variance.

    ``sigma_i2_hyper`` is the ``(shape, rate)`` of the inverse-gamma prior on
    each compound's between-study variance. It must be proper: with a single
    study the data say almost nothing about that variance, and the posterior
    stays close to this prior.
    """
    hyper = hyper or HyperPriors()
    _check_run(chains, iters, burn_in)
    a_i, b_i = (float(x) for x in sigma_i2_hyper)
    if not (a_i > 0 and b_i > 0 and math.isfinite(a_i) and math.isfinite(b_i)):
        raise ValidationError("sigma_i2_hyper shape and rate must be finite and > 0")

    m = portfolio.study_counts()
    notes = []
    single = [c.compound_id for c in portfolio.compounds if len(c.studies) == 1]
    if single:
        msg = (f"{len(single)} of {portfolio.n_compounds} compounds have a single study; "
               "their between-study variance is weakly identified and follows its prior")
        warnings.warn(msg, stacklevel=2)
        notes.append(msg)

    y, v, idx = portfolio.flat()
    ids = portfolio.compound_ids
    names = (["eta", "sigma2"]
             + [f"theta[{cid}]" for cid in ids]
             + [f"sigma2_i[{cid}]" for cid in ids])
    for rec in portfolio.compounds:
        for j, st in enumerate(rec.studies):
            names.append(f"theta[{rec.compound_id}/{st.label if st.label is not None else j}]")

    draws = np.stack([
        _run_nested_chain(rng, y, v, idx, m, hyper, a_i, b_i, iters, burn_in, k)
        for k, rng in enumerate(_chain_rngs(seed, chains))
    ])
    return sampled_result(
        "gibbs_nested", draws, names, seed=seed, chains=chains, iters=iters,
        burn_in=burn_in, warnings=notes, extra={"sigma_i2_hyper": (a_i, b_i)},
    )
