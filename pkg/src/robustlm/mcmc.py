"""MCMC for the heteroscedastic penalised-spline regression model.

Model, for a scalar covariate with design rows ``c_i = [1, x_i, Z_i]``::

    y_i ~ N(c_i theta, exp(2 c_i eta))
    theta = (alpha0, alpha1, a_1..a_Q),  alpha ~ N(0, 1e6),  a_q ~ N(0, sigma_a^2)
    eta   = (gamma0, gamma1, b_1..b_Q),  gamma ~ N(0, 1e6),  b_q ~ N(0, 0.1)
    1 / sigma_a^2 ~ Gamma(0.1, rate=0.1)

Each sweep draws ``theta`` from its exact Gaussian conditional, the spline
precision from its Gamma conditional, and ``eta`` by a few random-walk
Metropolis steps with a joint multivariate proposal.  The proposal starts
from the inverse expected information of the log-SD model and is adapted
(covariance and scale) during burn-in only.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cholesky
from scipy.linalg.lapack import dpotrf, dpotrs, dtrtrs

from .dataset import Dataset
from .errors import DivergenceError, InvalidParameterError
from .splines import BasisSpec
from .stochastics import RngStream, sample_gamma

_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class MCMCConfig:
    iterations: int = 6000
    burn_in: int = 2000
    thin: int = 1
    coef_prior_var: float = 1e6
    b_prior_var: float = 0.1
    precision_shape: float = 0.1
    precision_rate: float = 0.1
    heteroscedastic: bool = True
    target_accept: float = 0.35
    log_sd_steps: int = 3
    adapt_start: int = 200
    adapt_every: int = 50
    # proposals moving any log-SD by more than this are rejected outright
    max_log_sd_step: float = 3.0

    def __post_init__(self):
        if self.iterations <= self.burn_in:
            raise InvalidParameterError("iterations must exceed burn_in")
        if self.burn_in < 0 or self.thin < 1 or self.log_sd_steps < 1:
            raise InvalidParameterError("burn_in must be >= 0; thin and log_sd_steps >= 1")
        if min(self.coef_prior_var, self.b_prior_var, self.precision_shape,
               self.precision_rate) <= 0:
            raise InvalidParameterError("prior variances and Gamma parameters must be positive")

    @property
    def n_keep(self) -> int:
        return (self.iterations - self.burn_in) // self.thin


@dataclass
class SplineChain:
    """Retained draws.  ``theta`` holds (alpha0, alpha1, a...), ``eta`` (gamma0, gamma1, b...)."""

    theta: np.ndarray
    eta: np.ndarray
    sigma_a2: np.ndarray
    log_post: np.ndarray
    basis: BasisSpec
    config: MCMCConfig
    accept_rate: float
    proposal_scale: float
    warnings: list[str] = field(default_factory=list)

    @property
    def n_draws(self) -> int:
        return self.theta.shape[0]

    def mean_curve(self, x_new) -> np.ndarray:
        """Posterior mean of the regression function at ``x_new``."""
        return self.basis.design(x_new) @ self.theta.mean(axis=0)

    def phi_at_data(self) -> np.ndarray:
        """Regression function draws at the training points, shape (draws, n)."""
        return self.theta @ self.basis.design().T

    def log_sd_curve(self, x_new) -> np.ndarray:
        C = self.basis.design(x_new)[:, : self.eta.shape[1]]
        return C @ self.eta.mean(axis=0)


def _log_lik(r2: np.ndarray, lin_eta: np.ndarray) -> float:
    return float(-lin_eta.sum() - 0.5 * (r2 * np.exp(-2.0 * lin_eta)).sum())


def mcmc_fit(data: Dataset, basis: BasisSpec, config: MCMCConfig | None = None,
             rng: RngStream | None = None) -> SplineChain:
    """Run one chain; identical (stream, config, data) give identical draws."""
    config = config or MCMCConfig()
    if rng is None:
        raise InvalidParameterError("a random stream is required")
    if data.m != 2 or not np.all(data.X[:, 0] == 1.0):
        raise InvalidParameterError("spline model needs an intercept plus one covariate")
    if not np.array_equal(data.X[:, 1], basis.x):
        raise InvalidParameterError("basis was not built from this dataset's covariate")

    y = data.Y
    n = y.size
    C = basis.design()
    p = C.shape[1]
    Q = basis.Q
    p_eta = p if config.heteroscedastic else 1
    Ce = C[:, :p_eta]

    theta_prec = np.full(p, 1.0 / config.coef_prior_var)
    eta_prec = np.full(p_eta, 1.0 / config.coef_prior_var)
    eta_prec[2:] = 1.0 / config.b_prior_var
    diag = np.arange(p)
    CtC = C.T @ C

    # start from a ridge fit and a constant log-SD
    start = CtC + np.diag(np.r_[theta_prec[:2], np.ones(Q)])
    theta = np.linalg.solve(start, C.T @ y)
    resid = y - C @ theta
    eta = np.zeros(p_eta)
    eta[0] = np.log(max(np.sqrt(resid @ resid / n), 1e-8))
    tau = 1.0

    # the expected information of the log-SD model is 2 Ce'Ce
    prop_cov0 = np.linalg.inv(2.0 * Ce.T @ Ce + np.diag(eta_prec))
    prop_chol = cholesky(prop_cov0, lower=True)
    log_scale = np.log(2.38 / np.sqrt(p_eta))
    log_scale_bounds = (log_scale - np.log(50.0), log_scale + np.log(5.0))

    keep = config.n_keep
    out_theta = np.empty((keep, p))
    out_eta = np.empty((keep, p_eta))
    out_s2 = np.empty(keep)
    out_lp = np.empty(keep)
    burn_hist = np.empty((config.burn_in, p_eta))
    accepted = 0
    window_acc = 0
    window_n = 0

    lin_eta = Ce @ eta
    shape_post = config.precision_shape + 0.5 * Q
    iters, steps = config.iterations, config.log_sd_steps
    # variates come from fixed substreams in bulk; the sweep order never changes them
    gam = sample_gamma(rng.child(0), shape_post, size=iters)
    z_theta = rng.child(1).standard_normal((iters, p))
    z_eta = rng.child(2).standard_normal((iters, steps, p_eta))
    log_u = np.log(rng.child(3).uniform((iters, steps)))
    k = 0
    for it in range(iters):
        # mean coefficients: exact Gaussian conditional
        w = np.exp(-2.0 * lin_eta)
        prec = (C.T * w) @ C
        theta_prec[2:] = tau
        prec[diag, diag] += theta_prec
        L, info = dpotrf(prec, lower=1, clean=1)
        if info != 0:
            raise DivergenceError(f"mean-block precision lost definiteness at iteration {it}", it)
        mu, _ = dpotrs(L, C.T @ (w * y), lower=1)
        dev, _ = dtrtrs(L, z_theta[it], lower=1, trans=1)
        theta = mu + dev

        # spline precision: Gamma conditional
        a = theta[2:]
        tau = gam[it] / (config.precision_rate + 0.5 * float(a @ a))

        # log-SD coefficients: random-walk Metropolis
        r2 = (y - C @ theta) ** 2
        cur = _log_lik(r2, lin_eta) - 0.5 * float(eta_prec @ (eta * eta))
        if not np.isfinite(cur):
            raise DivergenceError(f"log-likelihood became non-finite at iteration {it}", it)
        scale = np.exp(log_scale)
        for s in range(steps):
            step = scale * (prop_chol @ z_eta[it, s])
            dlin = Ce @ step
            hit = False
            if np.max(np.abs(dlin)) <= config.max_log_sd_step:
                prop = eta + step
                lin_prop = lin_eta + dlin
                new = _log_lik(r2, lin_prop) - 0.5 * float(eta_prec @ (prop * prop))
                if np.isfinite(new) and log_u[it, s] < new - cur:
                    eta, lin_eta, cur, hit = prop, lin_prop, new, True
            window_acc += hit
            window_n += 1
            if it >= config.burn_in:
                accepted += hit

        if it < config.burn_in:
            burn_hist[it] = eta
            if it >= config.adapt_start and (it + 1) % config.adapt_every == 0:
                gain = 1.0 / np.sqrt(1.0 + (it + 1) / config.adapt_every)
                log_scale += gain * (window_acc / window_n - config.target_accept) * 4.0
                log_scale = float(np.clip(log_scale, *log_scale_bounds))
                window_acc = window_n = 0
                hist = burn_hist[it // 2: it + 1]
                emp = np.cov(hist, rowvar=False).reshape(p_eta, p_eta)
                blend = emp + 0.05 * prop_cov0
                try:
                    prop_chol = cholesky(blend, lower=True)
                except np.linalg.LinAlgError:
                    pass
            continue

        if (it - config.burn_in) % config.thin == 0 and k < keep:
            lp = (_log_lik(r2, lin_eta) - 0.5 * n * _LOG_2PI
                  - 0.5 * float(theta_prec @ (theta * theta))
                  + 0.5 * (Q * np.log(tau) + 2 * np.log(theta_prec[0]) - p * _LOG_2PI)
                  - 0.5 * float(eta_prec @ (eta * eta))
                  + 0.5 * float(np.log(eta_prec).sum() - p_eta * _LOG_2PI)
                  + (config.precision_shape - 1) * np.log(tau) - config.precision_rate * tau)
            out_theta[k] = theta
            out_eta[k] = eta
            out_s2[k] = 1.0 / tau
            out_lp[k] = lp
            k += 1

    post_iters = (config.iterations - config.burn_in) * steps
    return SplineChain(
        theta=out_theta,
        eta=out_eta,
        sigma_a2=out_s2,
        log_post=out_lp,
        basis=basis,
        config=config,
        accept_rate=accepted / post_iters,
        proposal_scale=float(np.exp(log_scale)),
    )


def split_rhat(chains) -> np.ndarray:
    """Split-chain potential scale reduction for draws shaped (chains, draws[, params])."""
    x = np.asarray(chains, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim == 2:
        x = x[..., None]
    half = x.shape[1] // 2
    x = np.concatenate([x[:, :half], x[:, half: 2 * half]], axis=0)
    m, n = x.shape[:2]
    means = x.mean(axis=1)
    W = x.var(axis=1, ddof=1).mean(axis=0)
    B = n * means.var(axis=0, ddof=1)
    var_plus = (n - 1) / n * W + B / n
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(W > 0, np.sqrt(var_plus / W), 1.0)


def chain_columns(chain: SplineChain) -> list[str]:
    Q = chain.basis.Q
    cols = ["alpha0", "alpha1"] + [f"a{q + 1}" for q in range(Q)]
    cols += ["gamma0", "gamma1"][: chain.eta.shape[1]]
    cols += [f"b{q + 1}" for q in range(max(chain.eta.shape[1] - 2, 0))]
    return cols + ["sigma_a2", "log_post"]


def export_chain_csv(chain: SplineChain, path) -> None:
    """Flat CSV of retained draws, one row per draw."""
    rows = np.column_stack([chain.theta, chain.eta, chain.sigma_a2, chain.log_post])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(chain_columns(chain))
        for row in rows:
            writer.writerow([repr(float(v)) for v in row])
