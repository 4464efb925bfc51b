"""Command-line entry point: ``robustlm fit | simulate | selftest``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field, replace

import numpy as np

from . import classic, continuous, discrete, simulation
from .dataset import Dataset, round_covariates
from .errors import ConfigError, RobustLMError
from .io import load_csv
from .mcmc import MCMCConfig, export_chain_csv, mcmc_fit
from .splines import build_basis
from .stochastics import RngStream

log = logging.getLogger("robustlm")

FIT_METHODS = ("model-based", "sandwich", "bayes-random", "bayes-fixed")
FIT_LABELS = {
    "model-based": "Model-based",
    "sandwich": "Sandwich",
    "bayes-random": "Bayes robust (random X)",
    "bayes-fixed": "Bayes robust (fixed X)",
}


@dataclass
class RunConfig:
    command: str
    input: str | None = None
    outcome: str | None = None
    covariates: tuple[str, ...] = ()
    methods: tuple[str, ...] = FIT_METHODS
    x_mode: str = "both"
    kind: str = "discrete"
    seed: int = 0
    draws: int = discrete.DEFAULT_DRAWS
    mcmc: MCMCConfig = field(default_factory=MCMCConfig)
    knots: int = 20
    output_format: str = "table"
    min_group: str = "error"
    round_x: int | None = None
    chain_out: str | None = None
    # simulate
    preset: str | None = None
    replicates: int | None = None
    bayes_replicates: int | None = None
    n_values: tuple[int, ...] | None = None
    workers: int = 1
    detail: bool = False

    def __post_init__(self):
        if self.outcome is not None and self.outcome in self.covariates:
            raise ConfigError("covariate columns must not include the outcome")


@dataclass
class FitRow:
    method: str
    beta: np.ndarray
    se: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    n_draws: int = 0
    sd_mc_se: np.ndarray | None = None
    detail: str = ""


@dataclass
class FitReport:
    columns: tuple[str, ...]
    n: int
    kind: str
    rows: list[FitRow]
    warnings: list[str]
    seed: int

    def to_dict(self) -> dict:
        def vec(a):
            return None if a is None else [float(v) for v in a]

        return {
            "n": self.n,
            "kind": self.kind,
            "seed": self.seed,
            "columns": list(self.columns),
            "methods": [
                {
                    "method": r.method,
                    "detail": r.detail,
                    "beta": vec(r.beta),
                    "se": vec(r.se),
                    "ci_low": vec(r.ci_low),
                    "ci_high": vec(r.ci_high),
                    "n_draws": r.n_draws,
                    "se_mc_se": vec(r.sd_mc_se),
                }
                for r in self.rows
            ],
            "warnings": list(self.warnings),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_table(self) -> str:
        w = 26
        head = f"{'':<{w}}" + "".join(f"{c:>22}" for c in self.columns)
        sub = f"{'':<{w}}" + "".join(f"{'beta':>11}{'se':>11}" for _ in self.columns)
        lines = [f"n = {self.n}, covariate treated as {self.kind}", head, sub]
        for r in self.rows:
            cells = "".join(f"{b:>11.4g}{s:>11.4g}" for b, s in zip(r.beta, r.se))
            lines.append(f"{FIT_LABELS.get(r.method, r.method):<{w}}{cells}")
        if self.warnings:
            lines.append("Warnings:")
            lines += [f"  - {m}" for m in self.warnings]
        return "\n".join(lines) + "\n"


def _resolve_methods(methods, x_mode) -> list[str]:
    out = []
    for m in methods:
        if m == "bayes-robust":
            modes = ["random", "fixed"] if x_mode == "both" else [x_mode]
            out += [f"bayes-{mode}" for mode in modes]
        elif m in FIT_METHODS:
            out.append(m)
        else:
            raise ConfigError(f"unknown method {m!r}; choose from "
                              f"{', '.join(FIT_METHODS + ('bayes-robust',))}")
    if x_mode != "both":
        out = [m for m in out if not m.startswith("bayes") or m == f"bayes-{x_mode}"]
    return list(dict.fromkeys(out))


def fit_dataset(data: Dataset, config: RunConfig, warnings=None) -> FitReport:
    warnings = list(warnings or [])
    methods = _resolve_methods(config.methods, config.x_mode)
    if config.round_x is not None:
        data = round_covariates(data, config.round_x)
    if config.kind == "discrete" and any(m.startswith("bayes") for m in methods):
        if config.min_group == "drop":
            data, msgs = discrete.drop_sparse_groups(data)
            warnings += msgs
    rows = []
    for m in methods:
        if m in ("model-based", "sandwich"):
            f = classic.fit_classic(data, m)
            rows.append(FitRow(m, f.beta, f.se, f.ci_low, f.ci_high, detail=f.method))

    bayes = [m for m in methods if m.startswith("bayes")]
    root = RngStream(config.seed)
    if bayes and config.kind == "discrete":
        grouped = discrete.group_by_covariate(data)
        for m in bayes:
            if m == "bayes-random":
                p = discrete.posterior_beta_random_x(grouped, config.draws, root.child(1))
            else:
                p = discrete.posterior_beta_fixed_x_closed(grouped)
            rows.append(FitRow(m, p.beta_hat, p.sd, p.ci_low, p.ci_high, p.n_draws,
                               p.sd_mc_se, p.method))
    elif bayes:
        if data.m != 2:
            raise ConfigError("continuous treatment supports exactly one covariate")
        basis = build_basis(data.X[:, 1], config.knots)
        chain = mcmc_fit(data, basis, config.mcmc, root.child(2))
        if config.chain_out:
            export_chain_csv(chain, config.chain_out)
        for m in bayes:
            mode = continuous.RANDOM_X if m == "bayes-random" else continuous.FIXED_X
            p = continuous.posterior_beta_continuous(data, chain, mode, root.child(3))
            warnings += list(p.warnings)
            rows.append(FitRow(m, p.beta_hat, p.sd, p.ci_low, p.ci_high, p.n_draws,
                               p.sd_mc_se, p.method))
    elif config.kind not in ("discrete", "continuous"):
        raise ConfigError(f"unknown covariate kind {config.kind!r}")
    return FitReport(data.column_names, data.n, config.kind, rows, warnings, config.seed)


def cmd_fit(config: RunConfig) -> FitReport:
    if not config.input or not config.outcome:
        raise ConfigError("fit needs --input, --outcome and --covariates")
    data, warnings = load_csv(config.input, config.outcome, config.covariates)
    return fit_dataset(data, config, warnings)


def study_config(config: RunConfig) -> simulation.StudyConfig:
    kwargs = dict(simulation.PRESETS.get(config.preset or "desk", {}))
    if config.preset and config.preset not in simulation.PRESETS:
        raise ConfigError(f"unknown preset {config.preset!r}; choose from "
                          f"{', '.join(simulation.PRESETS)}")
    if config.replicates is not None:
        kwargs["replicates"] = config.replicates
        kwargs["bayes_replicates"] = min(config.replicates,
                                         kwargs.get("bayes_replicates", 200))
    if config.bayes_replicates is not None:
        kwargs["bayes_replicates"] = config.bayes_replicates
    if config.n_values:
        kwargs["n_values"] = tuple(config.n_values)
    if config.x_mode != "both" and config.preset is None:
        kwargs["x_modes"] = (f"{config.x_mode}-x",)
    methods = [m for m in config.methods if m in simulation.METHODS]
    if any(m.startswith("bayes") for m in config.methods):
        methods.append(simulation.BAYES_ROBUST)
    kwargs["methods"] = tuple(dict.fromkeys(methods))
    kwargs["knots"] = config.knots
    kwargs["mcmc"] = config.mcmc
    return simulation.StudyConfig(**kwargs)


def cmd_simulate(config: RunConfig) -> simulation.SimulationReport:
    return simulation.run_study(study_config(config), config.seed, workers=config.workers,
                                keep_detail=config.detail)


D0_X = [0, 0, 0, 0, 1, 1, 1, 1]
D0_Y = [1, 2, 3, 4, 3, 5, 7, 9]


def selftest() -> list[tuple[str, bool, str]]:
    """Exact-arithmetic checks on the eight-point two-group dataset."""
    data = Dataset.from_arrays(D0_X, D0_Y, names=["x"])
    grouped = discrete.group_by_covariate(data)
    beta = classic.fit_ols(data)
    hc0 = classic.cov_sandwich_hc0(data, beta)
    mb = classic.cov_model_based(data, beta)
    fixed = discrete.posterior_beta_fixed_x_closed(grouped)
    grouped_cov = classic.cov_sandwich_fixed_groups(grouped)
    rnd = discrete.posterior_beta_random_x(grouped, 20000, RngStream(0))

    def close(a, b, tol=1e-10):
        a, b = np.asarray(a, float), np.asarray(b, float)
        return bool(np.all(np.abs(a - b) <= tol * np.maximum(1.0, np.abs(b))))

    checks = [
        ("OLS coefficients = (2.5, 3.5)", close(beta, [2.5, 3.5]), f"{beta}"),
        ("model-based se(slope) = sqrt(25/12)", close(np.sqrt(mb[1, 1]), np.sqrt(25 / 12)),
         f"{np.sqrt(mb[1, 1]):.6f}"),
        ("HC0 sandwich covariance", close(hc0, [[0.3125, -0.3125], [-0.3125, 1.5625]]),
         f"{hc0.tolist()}"),
        ("group sufficient statistics",
         close(grouped.group_mean, [2.5, 6]) and close(grouped.group_ss, [5, 20]),
         f"means {grouped.group_mean}, ss {grouped.group_ss}"),
        ("fixed-X posterior sd = (sqrt(1.25), 2.5)", close(fixed.sd, [np.sqrt(1.25), 2.5]),
         f"{fixed.sd}"),
        ("fixed-X closed form = grouped sandwich", close(fixed.cov, grouped_cov),
         f"{grouped_cov.tolist()}"),
        ("random-X posterior mean slope near 3.5", abs(rnd.beta_hat[1] - 3.5) < 0.1,
         f"{rnd.beta_hat[1]:.4f}"),
    ]
    return checks


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--seed", type=int, default=0, help="master seed (64-bit unsigned)")
    p.add_argument("--format", dest="output_format", choices=["table", "json"], default="table")
    p.add_argument("--methods", default=None,
                   help="comma list: model-based, sandwich, bayes-random, bayes-fixed, bayes-robust")
    p.add_argument("--x-mode", choices=["random", "fixed", "both"], default="both")
    p.add_argument("--knots", type=int, default=20, help="spline knots Q, boundaries included")
    p.add_argument("--mcmc-iters", type=int, default=MCMCConfig.iterations)
    p.add_argument("--mcmc-burnin", type=int, default=MCMCConfig.burn_in)
    p.add_argument("--mcmc-thin", type=int, default=MCMCConfig.thin)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="robustlm", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="fit a CSV dataset with every requested method")
    fit.add_argument("--input", required=True)
    fit.add_argument("--outcome", required=True)
    fit.add_argument("--covariates", required=True, help="comma-separated column names")
    fit.add_argument("--kind", choices=["discrete", "continuous"], default="discrete")
    fit.add_argument("--draws", type=int, default=discrete.DEFAULT_DRAWS)
    fit.add_argument("--min-group", choices=["error", "drop"], default="error")
    fit.add_argument("--round-x", type=int, default=None, metavar="DECIMALS")
    fit.add_argument("--chain-out", default=None, help="write retained MCMC draws as CSV")
    _add_common(fit)

    sim = sub.add_parser("simulate", help="run the coverage simulation study")
    sim.add_argument("--preset", choices=sorted(simulation.PRESETS), default=None)
    sim.add_argument("--replicates", type=int, default=None)
    sim.add_argument("--bayes-replicates", type=int, default=None)
    sim.add_argument("--n", dest="n_values", type=int, nargs="+", default=None)
    sim.add_argument("--workers", type=int, default=1)
    sim.add_argument("--detail", action="store_true", help="include per-replicate JSON detail")
    _add_common(sim)

    sub.add_parser("selftest", help="run the exact-arithmetic smoke test")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    if args.command == "selftest":
        return RunConfig("selftest")
    mcmc = MCMCConfig(iterations=args.mcmc_iters, burn_in=args.mcmc_burnin,
                      thin=args.mcmc_thin)
    default_methods = FIT_METHODS if args.command == "fit" else simulation.METHODS
    methods = tuple(m.strip() for m in args.methods.split(",")) if args.methods else default_methods
    cfg = RunConfig(
        command=args.command,
        methods=methods,
        x_mode=args.x_mode,
        seed=args.seed,
        mcmc=mcmc,
        knots=args.knots,
        output_format=args.output_format,
    )
    if args.command == "fit":
        covs = tuple(c.strip() for c in args.covariates.split(",") if c.strip())
        return replace(cfg, input=args.input, outcome=args.outcome, covariates=covs,
                       kind=args.kind, draws=args.draws, min_group=args.min_group,
                       round_x=args.round_x, chain_out=args.chain_out)
    return replace(cfg, preset=args.preset, replicates=args.replicates,
                   bayes_replicates=args.bayes_replicates, n_values=args.n_values,
                   workers=args.workers, detail=args.detail)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = config_from_args(args)
        if config.command == "selftest":
            checks = selftest()
            for name, ok, got in checks:
                print(f"{'PASS' if ok else 'FAIL'}  {name}  [{got}]")
            return 0 if all(ok for _, ok, _ in checks) else 4
        if config.command == "fit":
            report = cmd_fit(config)
            out = report.to_json() if config.output_format == "json" else report.to_table()
        else:
            report = cmd_simulate(config)
            out = (report.to_json(detail=config.detail) if config.output_format == "json"
                   else report.to_table())
        sys.stdout.write(out)
        return 0
    except RobustLMError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
