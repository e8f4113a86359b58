"""Command-line driver.

Exit codes: 0 on success, 1 for configuration or usage errors, 2 when a
numerical step fails (factorization, degenerate update, empty ensembles).
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from ._version import __version__
from .bvn import NotPSDError
from .config import ConfigError, Experiment, ExperimentConfig, load_config, parse_config
from .designs import Design, grid, sobol, write_design_csv
from .experiments import (EXPERIMENT_DEFAULTS, build_model, csv_comment, run_experiment,
                          select_points, write_csv)
from .gp import (DegenerateUpdateError, FactorizationError, dumps_model, kriging_weights,
                 loo_residuals)
from .optpoints import write_trace_csv
from .randomsets import EmptyEnsembleError
from .simulate import FullSampler, quasi_realizations, write_ensemble

log = logging.getLogger("quasireal")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2
_NUMERIC_ERRORS = (FactorizationError, DegenerateUpdateError, NotPSDError, EmptyEnsembleError,
                   np.linalg.LinAlgError, FloatingPointError)

_EXPERIMENTS = {
    "edm-compare": Experiment.EDM_COMPARE,
    "dtv": Experiment.DTV,
    "contour-length": Experiment.CONTOUR_LENGTH,
    "volume": Experiment.VOLUME,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="quasireal", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "fit": "fit the benchmark model and write it with leave-one-out diagnostics",
        "optimize-points": "select simulation points with the first configured method",
        "simulate": "write full and quasi-realization ensembles",
        "edm-compare": "expected distance in measure for each method and m",
        "dtv": "distance transform variability, full grid vs quasi-realizations",
        "contour-length": "KS comparison of level-set lengths",
        "volume": "excursion volume distributions and bias correction",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", type=Path, help="key = value or JSON configuration file")
        p.add_argument("--seed", type=int, help="override the configured seed (u64)")
        p.add_argument("--threads", type=int, help="worker threads across repetitions")
        p.add_argument("--out", type=Path, help="output directory")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def _load(args) -> ExperimentConfig:
    exp = _EXPERIMENTS.get(args.command, Experiment.NONE)
    defaults = dict(EXPERIMENT_DEFAULTS.get(exp, {}), experiment=exp)
    cfg = load_config(args.config, defaults) if args.config else parse_config("", defaults)
    if cfg.experiment is not exp and exp is not Experiment.NONE:
        raise ConfigError(f"config is for {cfg.experiment.value!r}, not {exp.value!r}",
                          cfg.lines.get("experiment"))
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.threads is not None:
        changes["threads"] = args.threads
    if args.out is not None:
        changes["out"] = str(args.out)
    return cfg.replace(**changes) if changes else cfg


def _cmd_fit(cfg: ExperimentConfig, out: Path) -> None:
    model = build_model(cfg)
    (out / "model.txt").write_text(dumps_model(model.gp))
    write_design_csv(model.design, out / "observations.csv", csv_comment(cfg))
    k = model.gp.kernel
    rows = [("family", k.family.value), ("variance", k.variance),
            ("mean", model.gp.beta_hat), ("loglik", model.fit.loglik),
            ("converged", model.fit.converged),
            ("loo_mae", float(np.mean(np.abs(loo_residuals(model.gp)))))]
    rows += [(f"lengthscale_{i + 1}", v) for i, v in enumerate(k.lengthscales)]
    write_csv(out / "fit.csv", ("parameter", "value"), rows, cfg)


def _cmd_optimize(cfg: ExperimentConfig, out: Path) -> None:
    model = build_model(cfg)
    method = cfg.methods[0]
    pts, trace = select_points(method, model, cfg.m_list, cfg)
    m = max(cfg.m_list)
    write_design_csv(Design.explicit(pts[m]), out / f"points_{method}_m{m}.csv",
                     csv_comment(cfg))
    if trace is not None:
        write_trace_csv(trace, out / f"trace_{method}.csv", csv_comment(cfg))


def _cmd_simulate(cfg: ExperimentConfig, out: Path) -> None:
    model = build_model(cfg)
    d = model.gp.d
    G = grid(2, cfg.grid_q) if d == 2 else sobol(d, cfg.sim_nodes, skip=1)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(5,)))
    full = FullSampler.create(model.gp, G).draw(cfg.N, rng)
    write_ensemble(full, out / "full.bin")
    rows = [("full", G.r, float(model.exc.indicator(full.values).mean()))]
    for k, method in enumerate(cfg.methods):
        pts, _ = select_points(method, model, cfg.m_list, cfg)
        for m in cfg.m_list:
            rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(6, k, m)))
            quasi = quasi_realizations(model.gp, kriging_weights(model.gp, pts[m]), G, cfg.N, rng)
            write_ensemble(quasi, out / f"quasi_{method}_m{m}.bin")
            rows.append((method, m, float(model.exc.indicator(quasi.values).mean())))
    write_csv(out / "simulate.csv", ("method", "m", "mean_volume"), rows, cfg)


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = _load(args)
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "fit":
            _cmd_fit(cfg, out)
        elif args.command == "optimize-points":
            _cmd_optimize(cfg, out)
        elif args.command == "simulate":
            _cmd_simulate(cfg, out)
        else:
            run_experiment(cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MemoryError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _NUMERIC_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    log.info("wrote outputs to %s", cfg.out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
