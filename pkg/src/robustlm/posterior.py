from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .classic import Z95

BAYES_RANDOM_X = "bayes-random-x"
BAYES_FIXED_X_CLOSED = "bayes-fixed-x-closed"
BAYES_FIXED_X_MC = "bayes-fixed-x-mc"


@dataclass(frozen=True)
class PosteriorSummary:
    """Posterior mean, SD and moment-based 95% interval for each coefficient.

    ``sd_mc_se`` is the jackknife Monte Carlo standard error of ``sd`` (None
    for closed forms); ``n_rejected`` counts draws discarded and redrawn.
    """

    beta_hat: np.ndarray
    sd: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    n_draws: int
    method: str
    cov: np.ndarray | None = None
    sd_mc_se: np.ndarray | None = None
    n_rejected: int = 0
    warnings: tuple[str, ...] = field(default=())

    @property
    def se(self) -> np.ndarray:
        return self.sd


def jackknife_sd_se(draws: np.ndarray, n_blocks: int = 20) -> np.ndarray:
    """Delete-one-block jackknife standard error of the column-wise SD."""
    draws = np.asarray(draws, dtype=float)
    d = draws.shape[0]
    n_blocks = min(n_blocks, d)
    if n_blocks < 2:
        return np.full(draws.shape[1], np.nan)
    edges = np.linspace(0, d, n_blocks + 1).astype(int)
    total = draws.sum(axis=0)
    total_sq = (draws * draws).sum(axis=0)
    loo = np.empty((n_blocks, draws.shape[1]))
    for b in range(n_blocks):
        blk = draws[edges[b]:edges[b + 1]]
        k = d - blk.shape[0]
        mean = (total - blk.sum(axis=0)) / k
        ss = (total_sq - (blk * blk).sum(axis=0)) - k * mean * mean
        loo[b] = np.sqrt(np.clip(ss / (k - 1), 0.0, None))
    return np.sqrt((n_blocks - 1) / n_blocks * ((loo - loo.mean(axis=0)) ** 2).sum(axis=0))


def summarize_draws(draws: np.ndarray, method: str, n_rejected: int = 0,
                    warnings=()) -> PosteriorSummary:
    draws = np.atleast_2d(np.asarray(draws, dtype=float))
    mean = draws.mean(axis=0)
    if draws.shape[0] > 1:
        cov = np.atleast_2d(np.cov(draws, rowvar=False, ddof=1))
    else:
        cov = np.zeros((draws.shape[1],) * 2)
    # exact zero spread (point-mass posteriors) must give sd == 0, not rounding noise
    constant = np.all(draws == draws[0], axis=0)
    cov[constant, :] = 0.0
    cov[:, constant] = 0.0
    sd = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return PosteriorSummary(
        beta_hat=mean,
        sd=sd,
        ci_low=mean - Z95 * sd,
        ci_high=mean + Z95 * sd,
        n_draws=draws.shape[0],
        method=method,
        cov=cov,
        sd_mc_se=jackknife_sd_se(draws),
        n_rejected=int(n_rejected),
        warnings=tuple(warnings),
    )
