"""Coefficient posterior for a continuous scalar covariate.

Every retained spline draw gives the regression function at the observed
covariate values.  The coefficients are the weighted least-squares line
through those values, with weights

* ``random-x``: Dirichlet(1, ..., 1) over observations (Bayesian bootstrap),
  drawn independently for each spline draw;
* ``fixed-x``: the empirical weights 1/n.
"""

from __future__ import annotations

import logging

import numpy as np

from .dataset import Dataset
from .errors import InvalidParameterError
from .mcmc import SplineChain
from .posterior import PosteriorSummary, summarize_draws
from .stochastics import RngStream, sample_dirichlet_counts

log = logging.getLogger(__name__)

RANDOM_X = "random-x"
FIXED_X = "fixed-x"

BAYES_CONT_RANDOM_X = "bayes-continuous-random-x"
BAYES_CONT_FIXED_X = "bayes-continuous-fixed-x"

_CHUNK = 500
_MAX_REDRAWS = 100


def weighted_line(phi: np.ndarray, w: np.ndarray, x: np.ndarray):
    """Intercept and slope of the weighted LS line for each row of ``phi``.

    ``w`` rows sum to one.  Returns (intercept, slope, weighted variance of x).
    """
    xbar = w @ x
    pbar = np.einsum("dn,dn->d", w, phi)
    sxx = w @ (x * x) - xbar * xbar
    sxy = np.einsum("dn,dn->d", w, phi * x[None, :]) - xbar * pbar
    with np.errstate(divide="ignore", invalid="ignore"):
        slope = sxy / sxx
    return pbar - slope * xbar, slope, sxx


def posterior_beta_continuous(data: Dataset, chain: SplineChain, mode: str = RANDOM_X,
                              rng: RngStream | None = None) -> PosteriorSummary:
    if chain.n_draws == 0:
        raise InvalidParameterError("chain has no retained draws")
    if mode not in (RANDOM_X, FIXED_X):
        raise InvalidParameterError(f"mode must be {RANDOM_X!r} or {FIXED_X!r}")
    x = data.X[:, 1]
    n = x.size
    C = chain.basis.design()
    if C.shape[0] != n:
        raise InvalidParameterError("chain basis does not match the dataset")

    draws = np.empty((chain.n_draws, 2))
    rejected = 0
    if mode == FIXED_X:
        phi = chain.theta @ C.T
        w = np.full((1, n), 1.0 / n)
        icpt, slope, _ = weighted_line(phi, np.broadcast_to(w, phi.shape), x)
        draws[:, 0], draws[:, 1] = icpt, slope
        return summarize_draws(draws, BAYES_CONT_FIXED_X)

    if rng is None:
        raise InvalidParameterError("random-x mode needs a random stream")
    ones = np.ones(n)
    tol = 1e-10 * np.var(x)
    for c, start in enumerate(range(0, chain.n_draws, _CHUNK)):
        stop = min(start + _CHUNK, chain.n_draws)
        sub = rng.child(c)
        phi = chain.theta[start:stop] @ C.T
        w = sample_dirichlet_counts(sub, ones, size=stop - start)
        icpt, slope, sxx = weighted_line(phi, w, x)
        bad = np.flatnonzero(~(sxx > tol))
        tries = 0
        while bad.size:
            # weight piled onto a single covariate value: redraw those rows
            tries += 1
            if tries > _MAX_REDRAWS:
                raise InvalidParameterError("could not draw a non-degenerate weight vector")
            rejected += bad.size
            w_new = sample_dirichlet_counts(sub, ones, size=bad.size)
            i2, s2, x2 = weighted_line(phi[bad], w_new, x)
            icpt[bad], slope[bad], sxx[bad] = i2, s2, x2
            bad = bad[~(x2 > tol)]
        draws[start:stop, 0], draws[start:stop, 1] = icpt, slope

    warnings = []
    if rejected:
        msg = f"redrew {rejected} degenerate Bayesian-bootstrap weight vector(s)"
        log.warning(msg)
        warnings.append(msg)
    return summarize_draws(draws, BAYES_CONT_RANDOM_X, n_rejected=rejected, warnings=warnings)
