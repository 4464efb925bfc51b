"""Coverage study for the slope of a single uniform covariate.

Four data-generating mechanisms cross a linear or nonlinear mean with a
constant or x-dependent noise level, with ``x ~ Uniform(-10, 10)``.  Each
replicate is generated from its own counter-based stream, fitted with every
requested method, and scored against

* the population least-squares slope (random-x), or
* the least-squares slope of the true mean at that replicate's design (fixed-x).

Replicates are independent tasks collected into indexed slots, so the report
does not depend on the number of worker processes.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate
from threadpoolctl import threadpool_limits

from . import classic
from .continuous import FIXED_X, RANDOM_X, posterior_beta_continuous
from .dataset import Dataset
from .errors import InvalidParameterError, RobustLMError, StudyError
from .mcmc import MCMCConfig, mcmc_fit
from .splines import build_basis
from .stochastics import RngStream, sample_normal

log = logging.getLogger(__name__)

X_LOW, X_HIGH = -10.0, 10.0
MEANS = ("linear", "nonlinear")
VARIANCES = ("equal", "unequal")
X_MODES = (RANDOM_X, FIXED_X)

MODEL_BASED = "model-based"
SANDWICH = "sandwich"
BAYES_ROBUST = "bayes-robust"
METHODS = (MODEL_BASED, SANDWICH, BAYES_ROBUST)
METHOD_LABELS = {MODEL_BASED: "Model based", SANDWICH: "Sandwich", BAYES_ROBUST: "Bayes robust"}

MAX_FAILURE_RATE = 0.01


def f_linear(x):
    return 2.0 + 3.5 * np.asarray(x, dtype=float)


def f_nonlinear(x):
    x = np.asarray(x, dtype=float)
    return 2.0 + 3.5 * x * (1.0 + np.abs(np.cos(x / 2.0 - 2.0)))


def sd_equal(x):
    return np.full_like(np.asarray(x, dtype=float), 5.0)


def sd_unequal(x):
    x = np.asarray(x, dtype=float)
    return 5.0 + x * x / 5.0


MEAN_FUNCTIONS = {"linear": f_linear, "nonlinear": f_nonlinear}
# These act as noise standard deviations: that is the scale at which the
# reference coverage tables' interval widths are reproduced.
NOISE_SD = {"equal": sd_equal, "unequal": sd_unequal}

# points where |cos(x/2 - 2)| has a kink inside [-10, 10]
_KINKS = [4.0 + math.pi + 2.0 * math.pi * k for k in (-3, -2, -1, 0)]
_KINKS = [k for k in _KINKS if X_LOW < k < X_HIGH]


@dataclass(frozen=True)
class ScenarioSpec:
    mean: str
    variance: str
    n: int
    x_design: str = RANDOM_X

    def __post_init__(self):
        if self.mean not in MEANS or self.variance not in VARIANCES:
            raise InvalidParameterError(f"unknown scenario {self.mean}/{self.variance}")
        if self.x_design not in X_MODES:
            raise InvalidParameterError(f"unknown x design {self.x_design!r}")
        if self.n < 50:
            raise InvalidParameterError("scenario sample size must be at least 50")

    @property
    def label(self) -> str:
        return f"{self.mean}/{self.variance}"


def gen_dataset(rng: RngStream, spec: ScenarioSpec, design=None) -> Dataset:
    """Draw one dataset; ``design`` reuses given covariate values instead of drawing them."""
    if design is None:
        x = X_LOW + (X_HIGH - X_LOW) * rng.uniform(spec.n)
    else:
        x = np.asarray(design, dtype=float)
    mu = MEAN_FUNCTIONS[spec.mean](x)
    y = sample_normal(rng, mu, NOISE_SD[spec.variance](x))
    return Dataset.from_arrays(x, y, names=["x"])


@lru_cache(maxsize=None)
def _population_coefficients(mean: str) -> tuple[float, float]:
    f = MEAN_FUNCTIONS[mean]
    width = X_HIGH - X_LOW
    opts = dict(points=_KINKS, limit=200, epsabs=1e-12, epsrel=1e-11)
    ef, _ = integrate.quad(lambda v: float(f(v)) / width, X_LOW, X_HIGH, **opts)
    exf, _ = integrate.quad(lambda v: v * float(f(v)) / width, X_LOW, X_HIGH, **opts)
    ex = (X_HIGH + X_LOW) / 2.0
    ex2 = (X_HIGH**3 - X_LOW**3) / (3.0 * width)
    slope = (exf - ex * ef) / (ex2 - ex * ex)
    return ef - slope * ex, slope


def true_coefficients(spec: ScenarioSpec, x=None) -> tuple[float, float]:
    """(intercept, slope) of the least-squares line through the true mean.

    Random-x integrates against the uniform covariate density; fixed-x uses
    the realised design ``x``.
    """
    if spec.mean == "linear":
        return 2.0, 3.5
    if spec.x_design == RANDOM_X:
        return _population_coefficients(spec.mean)
    if x is None:
        raise InvalidParameterError("fixed-x target needs the realised design")
    x = np.asarray(x, dtype=float)
    f = MEAN_FUNCTIONS[spec.mean](x)
    xc = x - x.mean()
    slope = float(xc @ (f - f.mean()) / (xc @ xc))
    return float(f.mean() - slope * x.mean()), slope


def true_beta(spec: ScenarioSpec, x=None) -> float:
    return true_coefficients(spec, x)[1]


@dataclass(frozen=True)
class StudyConfig:
    scenarios: tuple[tuple[str, str], ...] = tuple((m, v) for m in MEANS for v in VARIANCES)
    n_values: tuple[int, ...] = (400,)
    replicates: int = 500
    bayes_replicates: int = 200
    methods: tuple[str, ...] = METHODS
    x_modes: tuple[str, ...] = X_MODES
    knots: int = 20
    mcmc: MCMCConfig = field(default_factory=MCMCConfig)

    def __post_init__(self):
        bad = set(self.methods) - set(METHODS)
        if bad:
            raise InvalidParameterError(f"unknown methods {sorted(bad)}")
        if set(self.x_modes) - set(X_MODES):
            raise InvalidParameterError(f"x modes must be among {X_MODES}")
        if self.replicates < 0 or self.bayes_replicates < 0:
            raise InvalidParameterError("replicate counts must be non-negative")


PRESETS = {
    "table1-desk": dict(x_modes=(RANDOM_X,)),
    "table2-desk": dict(x_modes=(FIXED_X,)),
    "desk": dict(),
    "table1-paper": dict(x_modes=(RANDOM_X,), n_values=(400, 800), replicates=1000,
                         bayes_replicates=1000),
    "table2-paper": dict(x_modes=(FIXED_X,), n_values=(400, 800), replicates=1000,
                         bayes_replicates=1000),
    "paper": dict(n_values=(400, 800), replicates=1000, bayes_replicates=1000),
}


def _scenario_code(mean: str, variance: str) -> int:
    return MEANS.index(mean) * len(VARIANCES) + VARIANCES.index(variance)


def replicate_stream(master_seed: int, mean: str, variance: str, n: int, r: int) -> RngStream:
    return RngStream(master_seed, r, (_scenario_code(mean, variance), n))


def run_replicate(master_seed: int, mean: str, variance: str, n: int, r: int,
                  config: StudyConfig) -> dict:
    """Generate and fit one replicate; estimator failures are recorded, not raised."""
    stream = replicate_stream(master_seed, mean, variance, n, r)
    spec = ScenarioSpec(mean, variance, n)
    data = gen_dataset(stream.child(0), spec)
    x = data.X[:, 1]
    targets = {
        RANDOM_X: list(true_coefficients(spec)),
        FIXED_X: list(true_coefficients(ScenarioSpec(mean, variance, n, FIXED_X), x)),
    }
    fits: dict[str, dict] = {}

    for method in (MODEL_BASED, SANDWICH):
        if method not in config.methods or r >= config.replicates:
            continue
        try:
            fit = classic.fit_classic(data, method)
            entry = {"beta": fit.beta.tolist(), "se": fit.se.tolist()}
        except (RobustLMError, np.linalg.LinAlgError) as exc:
            entry = {"error": f"{type(exc).__name__}: {exc}"}
        fits[method] = {mode: entry for mode in config.x_modes}

    if BAYES_ROBUST in config.methods and r < config.bayes_replicates:
        try:
            basis = build_basis(x, config.knots, bounds=(X_LOW, X_HIGH))
            chain = mcmc_fit(data, basis, config.mcmc, stream.child(1))
            fits[BAYES_ROBUST] = {}
            for mode in config.x_modes:
                post = posterior_beta_continuous(data, chain, mode, stream.child(2))
                fits[BAYES_ROBUST][mode] = {"beta": post.beta_hat.tolist(),
                                            "se": post.sd.tolist(),
                                            "rejected_draws": post.n_rejected}
        except (RobustLMError, np.linalg.LinAlgError) as exc:
            err = {"error": f"{type(exc).__name__}: {exc}"}
            fits[BAYES_ROBUST] = {mode: err for mode in config.x_modes}

    return {"scenario": f"{mean}/{variance}", "n": n, "replicate": r,
            "targets": targets, "fits": fits}


def _task(args):
    with threadpool_limits(limits=1):
        return run_replicate(*args)


def _worker_init():
    threadpool_limits(limits=1)


@dataclass(frozen=True)
class ReportRow:
    x_mode: str
    mean: str
    variance: str
    n: int
    method: str
    bias: float
    width: float
    coverage: float
    coverage_mc_se: float
    replicates: int
    failures: int
    intercept_bias: float
    intercept_width: float
    intercept_coverage: float


@dataclass
class SimulationReport:
    rows: list[ReportRow]
    master_seed: int
    config: dict
    warnings: list[str] = field(default_factory=list)
    detail: list[dict] | None = None

    def row(self, x_mode, mean, variance, n, method) -> ReportRow:
        for r in self.rows:
            if (r.x_mode, r.mean, r.variance, r.n, r.method) == (x_mode, mean, variance, n, method):
                return r
        raise KeyError((x_mode, mean, variance, n, method))

    def to_dict(self, detail: bool = False) -> dict:
        out = {
            "master_seed": self.master_seed,
            "config": self.config,
            "rows": [asdict(r) for r in self.rows],
            "warnings": list(self.warnings),
        }
        if detail and self.detail is not None:
            out["replicates"] = self.detail
        return out

    def to_json(self, detail: bool = False) -> str:
        return json.dumps(self.to_dict(detail), indent=2, sort_keys=True) + "\n"

    def to_table(self) -> str:
        return render_table(self)


def _summarize(recs, mode, method) -> tuple | None:
    est, se, tgt = [], [], []
    failures = 0
    for rec in recs:
        fit = rec["fits"].get(method, {}).get(mode)
        if fit is None:
            continue
        if "error" in fit:
            failures += 1
            continue
        est.append(fit["beta"])
        se.append(fit["se"])
        tgt.append(rec["targets"][mode])
    R = len(est)
    if R == 0 and failures == 0:
        return None
    if R == 0:
        nan = float("nan")
        return (nan,) * 3 + (nan, 0, failures) + (nan,) * 3
    est, se, tgt = np.array(est), np.array(se), np.array(tgt)
    half = classic.Z95 * se
    hit = (est - half <= tgt) & (tgt <= est + half)
    bias = (est - tgt).mean(axis=0)
    width = (2.0 * half).mean(axis=0)
    cov = hit.mean(axis=0)
    mc_se = math.sqrt(cov[1] * (1.0 - cov[1]) / R)
    return (float(bias[1]), float(width[1]), float(cov[1]), mc_se, R, failures,
            float(bias[0]), float(width[0]), float(cov[0]))


def aggregate(records: list[dict], config: StudyConfig) -> tuple[list[ReportRow], list[str]]:
    rows, warnings = [], []
    for mode in config.x_modes:
        for mean, variance in config.scenarios:
            for n in config.n_values:
                recs = [r for r in records
                        if r["scenario"] == f"{mean}/{variance}" and r["n"] == n]
                for method in METHODS:
                    if method not in config.methods:
                        continue
                    s = _summarize(recs, mode, method)
                    if s is None:
                        continue
                    rows.append(ReportRow(mode, mean, variance, n, method, *s))
                    R, failures = s[4], s[5]
                    if failures:
                        warnings.append(
                            f"{mode} {mean}/{variance} n={n} {method}: excluded {failures} "
                            f"failed replicate(s) of {R + failures}"
                        )
    return rows, warnings


def run_study(config: StudyConfig, master_seed: int, workers: int = 1,
              keep_detail: bool = False, order=None) -> SimulationReport:
    """Run every (scenario, n, replicate) task and aggregate bias / width / coverage.

    ``order`` optionally permutes task execution (testing aid); the report is
    unaffected by it and by ``workers``.
    """
    R_total = max(config.replicates, config.bayes_replicates if BAYES_ROBUST in config.methods else 0)
    tasks = [(master_seed, mean, variance, n, r, config)
             for mean, variance in config.scenarios
             for n in config.n_values
             for r in range(R_total)]
    idx = list(range(len(tasks))) if order is None else list(order)
    if sorted(idx) != list(range(len(tasks))):
        raise InvalidParameterError("order must be a permutation of the task indices")
    results: list[dict | None] = [None] * len(tasks)
    if workers <= 1 or len(tasks) <= 1:
        with threadpool_limits(limits=1):
            for i in idx:
                results[i] = run_replicate(*tasks[i])
    else:
        with ProcessPoolExecutor(max_workers=workers, initializer=_worker_init) as pool:
            for i, res in zip(idx, pool.map(_task, [tasks[i] for i in idx], chunksize=1)):
                results[i] = res

    rows, warnings = aggregate(results, config)
    for row in rows:
        total = row.replicates + row.failures
        if total and row.failures / total > MAX_FAILURE_RATE:
            raise StudyError(
                f"{row.x_mode} {row.mean}/{row.variance} n={row.n} {row.method}: "
                f"{row.failures} of {total} replicates failed"
            )
    cfg = asdict(config)
    return SimulationReport(rows, master_seed, cfg, warnings,
                            results if keep_detail else None)


def _fmt(v: float, digits: int = 3) -> str:
    return "nan" if v != v else f"{v:.{digits}f}"


def render_table(report: SimulationReport) -> str:
    """Plain-text table: one block per x mode, Bias / Width / Coverage per n."""
    if not report.rows:
        return "(no replicates)\n"
    ns = sorted({r.n for r in report.rows})
    lines = []
    for mode in [m for m in X_MODES if any(r.x_mode == m for r in report.rows)]:
        title = "Random X" if mode == RANDOM_X else "Fixed X"
        lines.append(f"{title} (slope)")
        head = f"{'Mean':<10}{'Variance':<10}{'Method':<14}"
        sub = " " * 34
        for n in ns:
            head += f"  {'n=' + str(n):^32}"
            sub += f"  {'Bias':>8}{'Width':>7}{'Coverage':>9}{'(MCSE)':>8}"
        lines += [head, sub]
        for mean in MEANS:
            for variance in VARIANCES:
                for method in METHODS:
                    cells = [r for r in report.rows if (r.x_mode, r.mean, r.variance, r.method)
                             == (mode, mean, variance, method)]
                    if not cells:
                        continue
                    line = f"{mean.capitalize():<10}{variance:<10}{METHOD_LABELS[method]:<14}"
                    for n in ns:
                        c = next((r for r in cells if r.n == n), None)
                        if c is None:
                            line += " " * 34
                            continue
                        line += (f"  {_fmt(c.bias):>8}{_fmt(c.width):>7}{_fmt(c.coverage):>9}"
                                 f"{'(' + _fmt(c.coverage_mc_se) + ')':>8}")
                    line += f"  R={cells[0].replicates}"
                    lines.append(line)
        lines.append("")
    if report.warnings:
        lines.append("Warnings:")
        lines += [f"  - {w}" for w in report.warnings]
    return "\n".join(lines).rstrip() + "\n"
