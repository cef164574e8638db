"""Monte Carlo generative engine for the Small/Large Study model.

Draws ``theta ~ N(eta, sigma2)``, then ``s_hat`` and ``l_hat`` independently
around ``theta``. It is deliberately written without reference to the closed
forms in :mod:`selbias.conjugate` (apart from the per-draw adjusted estimate,
which is the quantity under test) so it can serve as their oracle.

Reproducibility: draws are generated in fixed-size shards. Shard ``k`` uses a
Philox counter-based generator keyed by ``SeedSequence(seed, spawn_key=(k,))``
and numpy's ziggurat ``standard_normal``; a shard's three normal rows are
``(z_theta, z_s, z_l)``. Shard statistics are merged in shard order, so the
result does not depend on the number of workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .conjugate import NormalPrior, StudyEstimate, shrink_weight, truncated_selected_mean
from .errors import DegenerateSelectionError, InsufficientSampleError, ValidationError
from .fit.gibbs import DEFAULT_BURN_IN, DEFAULT_CHAINS, DEFAULT_ITERS, fit_gibbs
from .fit.mle import fit_mle
from .fit.portfolio import CompoundRecord, HyperPriors, Portfolio
from .normal import norm_ppf

SHARD_SIZE = 1 << 20
MAX_DRAWS = 2 ** 53
MIN_SELECTED_FRACTION = 1e-4


@dataclass(frozen=True)
class SimConfig:
    prior: NormalPrior
    sigma_s: float
    sigma_l: float
    n_draws: int
    delta: Optional[float] = None
    seed: int = 42
    shard_size: int = SHARD_SIZE

    def __post_init__(self):
        for name in ("sigma_s", "sigma_l"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValidationError(f"{name} must be finite and > 0, got {v!r}")
        if int(self.n_draws) != self.n_draws or self.n_draws < 1:
            raise ValidationError(f"n_draws must be an integer >= 1, got {self.n_draws!r}")
        if self.n_draws > MAX_DRAWS:
            raise ValidationError(f"n_draws {self.n_draws} exceeds float64 accumulator precision (2**53)")
        if self.delta is not None and not math.isfinite(self.delta):
            raise ValidationError("delta must be finite")
        if self.shard_size < 1:
            raise ValidationError("shard_size must be >= 1")

    def shards(self):
        n, k = int(self.n_draws), 0
        while n > 0:
            size = min(n, self.shard_size)
            yield k, size
            n -= size
            k += 1


def shard_generator(seed: int, k: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(k,))))


def draw_shard(config: SimConfig, k: int, size: int):
    """``(theta, s_hat, l_hat)`` arrays for shard ``k``."""
    z = shard_generator(config.seed, k).standard_normal((3, size))
    theta = config.prior.eta + config.prior.sigma * z[0]
    s_hat = theta + config.sigma_s * z[1]
    l_hat = theta + config.sigma_l * z[2]
    return theta, s_hat, l_hat


def iter_draws(config: SimConfig):
    for k, size in config.shards():
        yield draw_shard(config, k, size)


class _Moments:
    """Count, mean vector and co-moment matrix, mergeable (Chan et al.)."""

    def __init__(self, dim):
        self.n = 0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros((dim, dim))

    @classmethod
    def of(cls, X):
        out = cls(X.shape[0])
        out.n = X.shape[1]
        if out.n:
            out.mean = X.mean(axis=1)
            Xc = X - out.mean[:, None]
            out.m2 = Xc @ Xc.T
        return out

    def merge(self, other):
        if other.n == 0:
            return self
        if self.n == 0:
            self.n, self.mean, self.m2 = other.n, other.mean.copy(), other.m2.copy()
            return self
        n = self.n + other.n
        d = other.mean - self.mean
        self.mean = self.mean + d * (other.n / n)
        self.m2 = self.m2 + other.m2 + np.outer(d, d) * (self.n * other.n / n)
        self.n = n
        return self

    def cov(self):
        return self.m2 / (self.n - 1) if self.n > 1 else np.full_like(self.m2, np.nan)

    def se_mean(self, i):
        return math.sqrt(self.cov()[i, i] / self.n)

    def se_diff(self, i, j):
        c = self.cov()
        return math.sqrt(max(c[i, i] + c[j, j] - 2.0 * c[i, j], 0.0) / self.n)


@dataclass(frozen=True)
class SelectedMeans:
    """Means among draws with ``s_hat < delta``."""

    n: int
    s_hat: float
    theta: float
    l_hat: float
    adjusted: float
    se: dict
    se_diff: dict


@dataclass(frozen=True)
class SimSummary:
    n_draws: int
    mean_theta: float
    var_theta: float
    mean_s_hat: float
    var_s_hat: float
    mean_l_hat: float
    var_l_hat: float
    corr_s_l: float
    mean_adjusted: float
    var_gap: float
    mc_se: dict
    selected_fraction: Optional[float] = None
    selected: Optional[SelectedMeans] = None
    config: Optional[SimConfig] = field(default=None, repr=False)


# column order of the per-draw statistics
_THETA, _S, _L, _ADJ, _T2, _S2 = range(6)
_SEL_S, _SEL_THETA, _SEL_L, _SEL_ADJ = range(4)


def _shard_stats(config, adj_prior, k, size, raw):
    theta, s_hat, l_hat = draw_shard(config, k, size)
    if raw is not None:
        raw[k] = np.column_stack([theta, s_hat, l_hat])
    eta = config.prior.eta
    w = shrink_weight(adj_prior, config.sigma_s)
    adjusted = adj_prior.eta + w * (s_hat - adj_prior.eta)
    X = np.stack([theta, s_hat, l_hat, adjusted, (theta - eta) ** 2, (s_hat - eta) ** 2])
    full = _Moments.of(X)
    sel = None
    if config.delta is not None:
        mask = s_hat < config.delta
        sel = _Moments.of(np.stack([s_hat[mask], theta[mask], l_hat[mask], adjusted[mask]]))
    return full, sel


def simulate(
    config: SimConfig,
    adjust_prior: NormalPrior | None = None,
    raw_out=None,
    workers: int = 1,
) -> SimSummary:
    """Simulate and summarize ``(theta, s_hat, l_hat)`` with Monte Carlo SEs.

    ``adjust_prior`` is the prior used to compute each draw's adjusted
    estimate (defaults to the generating prior). ``raw_out`` receives the
    raw triples as CSV ``theta,s_hat,l_hat``.
    """
    adj_prior = adjust_prior or config.prior
    shards = list(config.shards())
    raw = {} if raw_out is not None else None

    def run(ks):
        return _shard_stats(config, adj_prior, ks[0], ks[1], raw)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, shards))
    else:
        results = [run(ks) for ks in shards]

    full = _Moments(6)
    sel = _Moments(4)
    for f, s in results:
        full.merge(f)
        if s is not None:
            sel.merge(s)

    if raw_out is not None:
        write_raw_triples(raw_out, (raw[k] for k, _ in shards))

    cov = full.cov()
    mc_se = {
        "mean_theta": full.se_mean(_THETA),
        "mean_s_hat": full.se_mean(_S),
        "mean_l_hat": full.se_mean(_L),
        "mean_adjusted": full.se_mean(_ADJ),
        "var_theta": full.se_mean(_T2),
        "var_s_hat": full.se_mean(_S2),
        "var_gap": full.se_diff(_S2, _T2),
    }
    selected_fraction = None
    selected = None
    if config.delta is not None:
        selected_fraction = sel.n / full.n
        if sel.n >= 2:
            names = ("s_hat", "theta", "l_hat", "adjusted")
            selected = SelectedMeans(
                n=sel.n,
                s_hat=float(sel.mean[_SEL_S]),
                theta=float(sel.mean[_SEL_THETA]),
                l_hat=float(sel.mean[_SEL_L]),
                adjusted=float(sel.mean[_SEL_ADJ]),
                se={nm: sel.se_mean(i) for i, nm in enumerate(names)},
                se_diff={
                    "adjusted-theta": sel.se_diff(_SEL_ADJ, _SEL_THETA),
                    "theta-l_hat": sel.se_diff(_SEL_THETA, _SEL_L),
                    "adjusted-l_hat": sel.se_diff(_SEL_ADJ, _SEL_L),
                    "s_hat-theta": sel.se_diff(_SEL_S, _SEL_THETA),
                },
            )

    return SimSummary(
        n_draws=full.n,
        mean_theta=float(full.mean[_THETA]),
        var_theta=float(cov[_THETA, _THETA]),
        mean_s_hat=float(full.mean[_S]),
        var_s_hat=float(cov[_S, _S]),
        mean_l_hat=float(full.mean[_L]),
        var_l_hat=float(cov[_L, _L]),
        corr_s_l=float(cov[_S, _L] / math.sqrt(cov[_S, _S] * cov[_L, _L])),
        mean_adjusted=float(full.mean[_ADJ]),
        var_gap=float(full.mean[_S2] - full.mean[_T2]),
        mc_se=mc_se,
        selected_fraction=selected_fraction,
        selected=selected,
        config=config,
    )


def write_raw_triples(path, blocks) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("theta,s_hat,l_hat\n")
        for block in blocks:
            np.savetxt(fh, block, fmt="%.17g", delimiter=",")


@dataclass(frozen=True)
class OracleEstimate:
    cond_mean: float
    cond_sd: float
    pos: float
    n_in_window: int
    se_mean: float
    se_sd: float
    se_pos: float


def mc_conditional_oracle(
    config: SimConfig, s: float, window: float, min_count: int = 1000
) -> OracleEstimate:
    """Brute-force moments of ``l_hat`` among draws with ``|s_hat - s| <= window``.

    ``pos`` is the empirical ``Pr(l_hat < delta)`` in the window (``nan``
    when the config has no ``delta``).
    """
    if not (math.isfinite(window) and window > 0):
        raise ValidationError(f"window must be finite and > 0, got {window!r}")
    if not math.isfinite(s):
        raise ValidationError("s must be finite")
    kept = []
    for _, s_hat, l_hat in iter_draws(config):
        kept.append(l_hat[np.abs(s_hat - s) <= window])
    l_in = np.concatenate(kept)
    n = l_in.size
    if n < min_count:
        raise InsufficientSampleError(
            f"only {n} draws within {window:g} of s={s:g} (need {min_count}); "
            "increase n_draws or widen the window"
        )
    mean = float(l_in.mean())
    var = float(l_in.var(ddof=1))
    sd = math.sqrt(var)
    m4 = float(np.mean((l_in - mean) ** 4))
    se_var = math.sqrt(max(m4 - var * var, 0.0) / n)
    if config.delta is None:
        pos, se_pos = float("nan"), float("nan")
    else:
        pos = float(np.mean(l_in < config.delta))
        se_pos = math.sqrt(max(pos * (1.0 - pos), 1.0 / n) / n)
    return OracleEstimate(
        cond_mean=mean,
        cond_sd=sd,
        pos=pos,
        n_in_window=n,
        se_mean=sd / math.sqrt(n),
        se_sd=se_var / (2.0 * sd),
        se_pos=se_pos,
    )


@dataclass(frozen=True)
class SelectionReport:
    """Selected-subset means and the checks on them (bands are 3 MC SE)."""

    selected_fraction: float
    n_selected: int
    naive_mean: float
    adjusted_mean: float
    theta_mean: float
    large_mean: float
    se: dict
    analytic_naive_mean: float
    analytic_truncation_bias: float
    adjusted_matches_theta: bool
    large_matches_theta: bool
    adjusted_matches_large: bool
    naive_check_applicable: bool
    naive_biased: bool
    unconditional_adjusted_mean: float
    unconditional_adjusted_se: float
    unconditional_adjusted_matches_eta: bool

    @property
    def identity_holds(self) -> bool:
        naive_ok = self.naive_biased or not self.naive_check_applicable
        return (self.adjusted_matches_theta and self.large_matches_theta
                and self.adjusted_matches_large and naive_ok)


def selection_experiment(
    config: SimConfig, adjust_prior: NormalPrior | None = None, n_se: float = 3.0
) -> SelectionReport:
    """Compare naive, adjusted, true and Large Study means among selected draws.

    With the true prior used for adjustment, the adjusted mean, the true
    effect mean and the Large Study mean coincide among selected compounds
    while the naive Small Study mean does not.
    """
    if config.delta is None:
        raise ValidationError("selection_experiment needs config.delta")
    summ = simulate(config, adjust_prior=adjust_prior)
    sel = summ.selected
    if sel is None or summ.selected_fraction == 0.0:
        raise DegenerateSelectionError("no draws satisfied s_hat < delta")
    if summ.selected_fraction < MIN_SELECTED_FRACTION:
        raise DegenerateSelectionError(
            f"selected fraction {summ.selected_fraction:.3g} below {MIN_SELECTED_FRACTION:g}"
        )

    prior = config.prior
    w = shrink_weight(prior, config.sigma_s)
    analytic_naive = truncated_selected_mean(prior, config.sigma_s, config.delta)
    # E[theta | selected] = eta + w (E[s_hat | selected] - eta)
    analytic_bias = (1.0 - w) * (analytic_naive - prior.eta)

    se_ac = sel.se_diff["s_hat-theta"]
    se_bc = sel.se_diff["adjusted-theta"]
    se_cd = sel.se_diff["theta-l_hat"]
    se_bd = sel.se_diff["adjusted-l_hat"]
    se = dict(sel.se)
    se.update(sel.se_diff)

    return SelectionReport(
        selected_fraction=summ.selected_fraction,
        n_selected=sel.n,
        naive_mean=sel.s_hat,
        adjusted_mean=sel.adjusted,
        theta_mean=sel.theta,
        large_mean=sel.l_hat,
        se=se,
        analytic_naive_mean=analytic_naive,
        analytic_truncation_bias=analytic_bias,
        adjusted_matches_theta=abs(sel.adjusted - sel.theta) <= n_se * se_bc,
        large_matches_theta=abs(sel.theta - sel.l_hat) <= n_se * se_cd,
        adjusted_matches_large=abs(sel.adjusted - sel.l_hat) <= n_se * se_bd,
        naive_check_applicable=abs(analytic_bias) > 5.0 * se_ac,
        naive_biased=abs(sel.s_hat - sel.theta) > n_se * se_ac,
        unconditional_adjusted_mean=summ.mean_adjusted,
        unconditional_adjusted_se=summ.mc_se["mean_adjusted"],
        unconditional_adjusted_matches_eta=(
            abs(summ.mean_adjusted - prior.eta) <= n_se * summ.mc_se["mean_adjusted"]
        ),
    )


@dataclass(frozen=True)
class PortfolioGenerator:
    """Synthetic portfolios with known ``(eta, sigma2)``; ``sigma2 = 0`` is allowed."""

    eta: float
    sigma2: float
    n_compounds: int
    studies_per_compound: int = 1
    std_error: float = 0.1

    def __post_init__(self):
        if not (math.isfinite(self.sigma2) and self.sigma2 >= 0):
            raise ValidationError("generator sigma2 must be finite and >= 0")
        if self.n_compounds < 1 or self.studies_per_compound < 1:
            raise ValidationError("generator needs >= 1 compound and >= 1 study per compound")
        if not self.std_error > 0:
            raise ValidationError("generator std_error must be > 0")

    def generate(self, rng: np.random.Generator) -> Portfolio:
        theta = self.eta + math.sqrt(self.sigma2) * rng.standard_normal(self.n_compounds)
        m = self.studies_per_compound
        est = theta[:, None] + self.std_error * rng.standard_normal((self.n_compounds, m))
        return Portfolio(tuple(
            CompoundRecord(f"c{i:04d}", tuple(
                StudyEstimate(float(est[i, j]), self.std_error, label=f"s{j}") for j in range(m)
            ))
            for i in range(self.n_compounds)
        ))


@dataclass(frozen=True)
class CalibrationReport:
    n_portfolios: int
    n_failed: int
    level: float
    eta_coverage: float
    sigma2_coverage: float
    eta_covered: tuple[bool, ...]
    sigma2_covered: tuple[bool, ...]
    errors: tuple[str, ...] = ()
    notes: tuple[str, ...] = ()


def calibration_experiment(
    n_portfolios: int,
    generator: PortfolioGenerator,
    method: str = "gibbs",
    hyper: HyperPriors | None = None,
    chains: int = DEFAULT_CHAINS,
    iters: int = DEFAULT_ITERS,
    burn_in: int = DEFAULT_BURN_IN,
    level: float = 0.9,
    seed: int = 42,
) -> CalibrationReport:
    """Interval coverage of fitted ``eta`` and ``sigma2`` over synthetic portfolios.

    Gibbs fits use equal-tailed credible intervals; MLE fits use Wald
    intervals. Failed fits are counted and excluded from coverage.
    """
    if int(n_portfolios) != n_portfolios or n_portfolios < 50:
        raise ValidationError(f"n_portfolios must be an integer >= 50, got {n_portfolios!r}")
    if method not in ("gibbs", "mle"):
        raise ValidationError(f"method must be gibbs or mle, got {method!r}")
    if not 0.0 < level < 1.0:
        raise ValidationError("level must lie in (0, 1)")

    z = float(norm_ppf(0.5 + level / 2.0))
    eta_cov, s2_cov, errors = [], [], []
    for k in range(n_portfolios):
        ss = np.random.SeedSequence(seed, spawn_key=(k,))
        data_seed, fit_seed = ss.generate_state(2)
        portfolio = generator.generate(np.random.default_rng(data_seed))
        try:
            if method == "gibbs":
                res = fit_gibbs(portfolio, hyper, chains=chains, iters=iters,
                                burn_in=burn_in, seed=int(fit_seed))
                eta_iv = res.interval("eta", level)
                s2_iv = res.interval("sigma2", level)
            else:
                res = fit_mle(portfolio)
                eta_iv = (res.eta_hat - z * res.se["eta"], res.eta_hat + z * res.se["eta"])
                half = z * res.se["sigma2"]
                s2_iv = (res.sigma2_hat - half, res.sigma2_hat + half)
        except (ArithmeticError, ValueError) as exc:
            errors.append(f"portfolio {k}: {exc}")
            continue
        eta_cov.append(eta_iv[0] <= generator.eta <= eta_iv[1])
        s2_cov.append(s2_iv[0] <= generator.sigma2 <= s2_iv[1])

    notes = []
    if generator.sigma2 == 0.0:
        notes.append(
            "sigma2 = 0 lies on the parameter boundary: posterior sigma2 intervals are "
            "strictly positive and cannot cover it, and eta intervals tend to over-cover"
        )
    n_ok = len(eta_cov)
    return CalibrationReport(
        n_portfolios=n_portfolios,
        n_failed=len(errors),
        level=level,
        eta_coverage=float(np.mean(eta_cov)) if n_ok else float("nan"),
        sigma2_coverage=float(np.mean(s2_cov)) if n_ok else float("nan"),
        eta_covered=tuple(bool(x) for x in eta_cov),
        sigma2_covered=tuple(bool(x) for x in s2_cov),
        errors=tuple(errors),
        notes=tuple(notes),
    )
