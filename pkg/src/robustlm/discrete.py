"""Bayesian robust regression for covariates taking finitely many values.

Observations are grouped by exact covariate row.  The covariate distribution
gets an improper Dirichlet prior, so its posterior is Dirichlet(n_1, ..., n_K);
each group mean gets the reference prior p(mean, var) ~ 1/var, giving a
Student-t posterior with location ``ybar_k``, scale ``s_k / sqrt(n_k)`` and
``n_k - 1`` degrees of freedom.  The coefficient vector is the weighted
least-squares fit of the group means on the group covariate rows.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .classic import Z95
from .dataset import DEFAULT_COND_LIMIT, Dataset, check_rank
from .errors import InsufficientReplicationError, InvalidParameterError, SingularDesignError
from .posterior import (
    BAYES_FIXED_X_CLOSED,
    BAYES_FIXED_X_MC,
    BAYES_RANDOM_X,
    PosteriorSummary,
    summarize_draws,
)
from .stochastics import RngStream, sample_dirichlet_counts, sample_student_t

log = logging.getLogger(__name__)

MIN_GROUP_SIZE = 4
DEFAULT_DRAWS = 4000
_CHUNK = 2000


@dataclass(frozen=True)
class GroupedData:
    """Sufficient statistics of a dataset grouped by covariate row.

    Groups are numbered in order of first appearance; ``row_index[i]`` is the
    group of observation ``i``.
    """

    xi: np.ndarray
    counts: np.ndarray
    group_mean: np.ndarray
    group_ss: np.ndarray
    row_index: np.ndarray
    column_names: tuple[str, ...] = ()

    @property
    def K(self) -> int:
        return self.xi.shape[0]

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    def weights(self) -> np.ndarray:
        return self.counts / self.counts.sum()


@dataclass(frozen=True)
class TPosterior:
    loc: np.ndarray
    scale: np.ndarray
    df: np.ndarray

    @classmethod
    def from_groups(cls, grouped: GroupedData) -> TPosterior:
        n_k = grouped.counts.astype(float)
        with np.errstate(divide="ignore", invalid="ignore"):
            s2 = np.where(n_k > 1, grouped.group_ss / (n_k - 1.0), 0.0)
        return cls(grouped.group_mean.copy(), np.sqrt(s2 / n_k), n_k - 1.0)

    def variance(self) -> np.ndarray:
        """Posterior variance of each group mean, ``ss / (n_k (n_k - 3))``; inf when df <= 2."""
        with np.errstate(divide="ignore", invalid="ignore"):
            v = self.scale**2 * self.df / (self.df - 2.0)
        return np.where(self.scale == 0, 0.0, np.where(self.df > 2, v, np.inf))


def group_by_covariate(data: Dataset, cond_limit: float = DEFAULT_COND_LIMIT) -> GroupedData:
    X = np.ascontiguousarray(data.X)
    keys: dict[bytes, int] = {}
    row_index = np.empty(data.n, dtype=np.intp)
    for i, row in enumerate(X):
        row_index[i] = keys.setdefault(row.tobytes(), len(keys))
    K = len(keys)
    first = np.full(K, -1, dtype=np.intp)
    for i in range(data.n - 1, -1, -1):
        first[row_index[i]] = i
    xi = X[first]
    check_rank(xi, data.column_names, cond_limit)
    counts = np.bincount(row_index, minlength=K)
    means = np.bincount(row_index, weights=data.Y, minlength=K) / counts
    dev = data.Y - means[row_index]
    ss = np.bincount(row_index, weights=dev * dev, minlength=K)
    return GroupedData(xi, counts, means, ss, row_index, tuple(data.column_names))


def drop_sparse_groups(data: Dataset, min_count: int = MIN_GROUP_SIZE) -> tuple[Dataset, list[str]]:
    """Remove observations in groups smaller than ``min_count``.

    This changes the estimand; the returned messages should be surfaced.
    """
    grouped = group_by_covariate(data)
    small = np.flatnonzero(grouped.counts < min_count)
    if small.size == 0:
        return data, []
    keep = ~np.isin(grouped.row_index, small)
    msg = (
        f"dropped {small.size} covariate group(s) with fewer than {min_count} "
        f"observations ({int((~keep).sum())} rows); the target coefficient now "
        "refers to the remaining covariate values only"
    )
    log.warning(msg)
    if not keep.any():
        raise InsufficientReplicationError("every group is below the replication minimum",
                                           small.tolist())
    return data.subset(keep), [msg]


def _require_replication(grouped: GroupedData, minimum: int = MIN_GROUP_SIZE) -> None:
    small = np.flatnonzero(grouped.counts < minimum)
    if small.size:
        raise InsufficientReplicationError(
            f"groups {small.tolist()} have fewer than {minimum} observations "
            f"(counts {grouped.counts[small].tolist()}); use min-group drop to discard them",
            small.tolist(),
        )


def draw_posterior_lambda(rng: RngStream, grouped: GroupedData, size=None) -> np.ndarray:
    return sample_dirichlet_counts(rng, grouped.counts, size=size)


def draw_posterior_phi(rng: RngStream, tpost: TPosterior, size=None) -> np.ndarray:
    """Independent t draws of every group mean; groups with zero scale return their location."""
    if np.any(tpost.df < 1):
        raise InvalidParameterError("draw_posterior_phi: every group needs df >= 1")
    K = tpost.loc.size
    shape = (K,) if size is None else (int(size), K)
    out = np.broadcast_to(tpost.loc, shape).copy()
    live = tpost.scale > 0
    if live.any():
        sub = shape[:-1] + (int(live.sum()),)
        out[..., live] = sample_student_t(
            rng, tpost.df[live], tpost.loc[live], tpost.scale[live], size=sub
        )
    return out


def beta_functional(phi, lam, xi, cond_limit: float = DEFAULT_COND_LIMIT) -> np.ndarray:
    """Weighted least-squares coefficients of ``phi`` on the rows of ``xi`` with weights ``lam``."""
    phi = np.asarray(phi, dtype=float)
    lam = np.asarray(lam, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if np.any(lam < 0):
        raise InvalidParameterError("weights must be non-negative")
    sw = np.sqrt(lam)
    try:
        check_rank(xi * sw[:, None], cond_limit=cond_limit)
    except SingularDesignError as exc:
        raise SingularDesignError(f"weighted design is singular: {exc}") from exc
    coef, *_ = np.linalg.lstsq(xi * sw[:, None], phi * sw, rcond=None)
    return coef


def _batch_beta(phi: np.ndarray, lam: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """Row-wise weighted LS for stacks of (phi, lam) draws, shape (d, K) -> (d, m)."""
    gram = np.einsum("dk,ki,kj->dij", lam, xi, xi)
    rhs = np.einsum("dk,ki,dk->di", lam, xi, phi)
    return np.linalg.solve(gram, rhs[..., None])[..., 0]


def _draw_chunks(n_draws: int, chunk: int = _CHUNK):
    start = 0
    c = 0
    while start < n_draws:
        size = min(chunk, n_draws - start)
        yield c, size
        start += size
        c += 1


def posterior_beta_random_x(grouped: GroupedData, n_draws: int = DEFAULT_DRAWS,
                            rng: RngStream | None = None) -> PosteriorSummary:
    """Monte Carlo posterior of the coefficients under random covariate sampling.

    Draws are made in fixed-size chunks, chunk ``c`` using substream
    ``rng.child(c)``, so results depend only on the stream identity.
    """
    _require_replication(grouped)
    if n_draws < 100:
        raise InvalidParameterError("n_draws must be at least 100")
    if rng is None:
        raise InvalidParameterError("a random stream is required")
    tpost = TPosterior.from_groups(grouped)
    draws = np.empty((n_draws, grouped.xi.shape[1]))
    pos = 0
    for c, size in _draw_chunks(n_draws):
        sub = rng.child(c)
        lam = draw_posterior_lambda(sub, grouped, size=size)
        phi = draw_posterior_phi(sub, tpost, size=size)
        draws[pos:pos + size] = _batch_beta(phi, lam, grouped.xi)
        pos += size
    return summarize_draws(draws, BAYES_RANDOM_X)


def fixed_x_operator(grouped: GroupedData) -> np.ndarray:
    """``A = (Xi' W Xi)^-1 Xi' W`` with empirical weights; beta_fixed = A @ phi."""
    w = grouped.weights()
    gram = grouped.xi.T @ (grouped.xi * w[:, None])
    return np.linalg.solve(gram, grouped.xi.T * w[None, :])


def posterior_beta_fixed_x_closed(grouped: GroupedData) -> PosteriorSummary:
    """Exact posterior mean and covariance of the coefficients for a fixed design.

    The functional is linear in the group means, so the covariance is
    ``A diag(Var phi_k) A'``.
    """
    _require_replication(grouped)
    A = fixed_x_operator(grouped)
    var_phi = TPosterior.from_groups(grouped).variance()
    beta = A @ grouped.group_mean
    cov = (A * var_phi[None, :]) @ A.T
    cov = 0.5 * (cov + cov.T)
    sd = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return PosteriorSummary(
        beta_hat=beta,
        sd=sd,
        ci_low=beta - Z95 * sd,
        ci_high=beta + Z95 * sd,
        n_draws=0,
        method=BAYES_FIXED_X_CLOSED,
        cov=cov,
    )


def posterior_beta_fixed_x_mc(grouped: GroupedData, n_draws: int = DEFAULT_DRAWS,
                              rng: RngStream | None = None) -> PosteriorSummary:
    _require_replication(grouped)
    if n_draws < 100:
        raise InvalidParameterError("n_draws must be at least 100")
    if rng is None:
        raise InvalidParameterError("a random stream is required")
    tpost = TPosterior.from_groups(grouped)
    A = fixed_x_operator(grouped)
    draws = np.empty((n_draws, grouped.xi.shape[1]))
    pos = 0
    for c, size in _draw_chunks(n_draws):
        phi = draw_posterior_phi(rng.child(c), tpost, size=size)
        draws[pos:pos + size] = phi @ A.T
        pos += size
    return summarize_draws(draws, BAYES_FIXED_X_MC)

