"""Convergence diagnostics for multi-chain samples: R-hat and effective sample size."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

RHAT_THRESHOLD = 1.05
MIN_ESS = 100.0


def _split(chains: np.ndarray) -> np.ndarray:
    m, n = chains.shape
    half = n // 2
    if half < 2:
        return chains
    # drop the middle draw of odd-length chains
    return np.concatenate([chains[:, :half], chains[:, n - half:]], axis=0)


def rhat(chains, split: bool = True) -> float:
    """Potential scale reduction factor for one parameter.

    ``chains`` has shape ``(n_chains, n_draws)``. The pooled variance estimate
    is ``W + B/n`` (no ``(n-1)/n`` deflation of ``W``), so the statistic is
    ``sqrt(1 + var(chain means) / W)``: never below 1, and exactly 1 when all
    chain means coincide.
    """
    x = np.asarray(chains, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("rhat needs an array of shape (n_chains >= 2, n_draws)")
    if split:
        x = _split(x)
    n = x.shape[1]
    if n < 2:
        return float("nan")
    means = x.mean(axis=1)
    W = x.var(axis=1, ddof=1).mean()
    between = means.var(ddof=1)
    if W == 0.0:
        return 1.0 if between == 0.0 else float("inf")
    return float(np.sqrt(1.0 + between / W))


def _autocov(x: np.ndarray) -> np.ndarray:
    """Biased autocovariance of each row, via zero-padded FFT."""
    n = x.shape[-1]
    xc = x - x.mean(axis=-1, keepdims=True)
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, n=nfft, axis=-1)
    acov = np.fft.irfft(f * np.conj(f), n=nfft, axis=-1)[..., :n]
    return acov / n


def ess(chains, split: bool = True) -> float:
    """Effective sample size with Geyer's initial monotone sequence estimator.

    Follows the multi-chain autocorrelation combination used by Stan
    (BDA3, section 11.5).
    """
    x = np.asarray(chains, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if split and x.shape[0] >= 1:
        x = _split(x)
    m, n = x.shape
    if n < 4:
        return float(m * n)
    acov = _autocov(x)
    chain_var = acov[:, 0] * n / (n - 1.0)
    W = chain_var.mean()
    var_plus = W * (n - 1.0) / n
    if m > 1:
        var_plus += x.mean(axis=1).var(ddof=1)
    if var_plus <= 0.0:
        return float(m * n)
    rho = 1.0 - (W - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0

    pair_sums = []
    prev = np.inf
    for t in range(0, n - 1, 2):
        p = rho[t] + rho[t + 1]
        if p < 0.0:
            break
        p = min(p, prev)
        pair_sums.append(p)
        prev = p
    tau = -1.0 + 2.0 * float(np.sum(pair_sums))
    tau = max(tau, 1.0 / np.log10(m * n))
    return float(m * n / tau)


@dataclass(frozen=True)
class DiagnosticsReport:
    names: tuple[str, ...]
    rhat: Optional[np.ndarray]
    ess: np.ndarray
    flags: tuple[str, ...] = ()
    notices: tuple[str, ...] = field(default=())

    @property
    def converged(self) -> bool:
        return not any(f.startswith("rhat") for f in self.flags)

    def rhat_of(self, name: str) -> float:
        if self.rhat is None:
            raise KeyError("R-hat unavailable for a single chain")
        return float(self.rhat[self.names.index(name)])

    def ess_of(self, name: str) -> float:
        return float(self.ess[self.names.index(name)])

    def max_rhat(self) -> float:
        return float(np.max(self.rhat)) if self.rhat is not None else float("nan")

    def min_ess(self) -> float:
        return float(np.min(self.ess))


def diagnose(
    draws,
    names: Sequence[str],
    rhat_threshold: float = RHAT_THRESHOLD,
    min_ess: float = MIN_ESS,
) -> DiagnosticsReport:
    """Split R-hat and ESS per parameter for draws of shape ``(chains, n, p)``."""
    draws = np.asarray(draws, dtype=float)
    if draws.ndim != 3 or draws.shape[2] != len(names):
        raise ValueError("draws must have shape (chains, n_draws, len(names))")
    n_chains = draws.shape[0]
    p = draws.shape[2]
    notices = []
    flags = []

    if n_chains >= 2:
        rh = np.array([rhat(draws[:, :, k]) for k in range(p)])
        for name, value in zip(names, rh):
            if not value <= rhat_threshold:
                flags.append(f"rhat:{name}={value:.4f}")
    else:
        rh = None
        notices.append("single chain: R-hat omitted")

    es = np.array([ess(draws[:, :, k]) for k in range(p)])
    for name, value in zip(names, es):
        if value < min_ess:
            flags.append(f"ess:{name}={value:.1f}")

    return DiagnosticsReport(tuple(names), rh, es, tuple(flags), tuple(notices))
