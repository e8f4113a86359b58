"""Experiment drivers: simulation-point comparison, DTV, contour length and volume.

Every driver is a pure function of its configuration. Random streams are
derived from ``cfg.seed`` with fixed spawn keys per (purpose, method, m,
repetition), so results do not depend on the number of worker threads.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._version import __version__
from .analysis import contour_length, ks_two_sample, volume_distribution
from .config import Experiment, ExperimentConfig
from .criterion import CriterionState, ExcursionSpec, IntegrationMeasure, coverage_probability
from .designs import Design, grid, maximin_lhs, sobol, write_design_csv
from .gp import MleResult, Observations, PosteriorGp, fit_mle, kriging_weights, posterior
from .optpoints import Algorithm, OptimizerConfig, optimize_points, write_trace_csv
from .plotting import write_line_plot
from .randomsets import CoverageField, dav
from .simulate import FullSampler, excursions, quasi_realizations
from .testfunctions import Benchmark

__all__ = [
    "Model",
    "ExperimentResult",
    "EXPERIMENT_DEFAULTS",
    "build_model",
    "csv_comment",
    "integration_measures",
    "select_points",
    "run_edm_compare",
    "run_dtv",
    "run_contour_length",
    "run_volume",
    "run_experiment",
    "write_csv",
    "first_passing_m",
]

# spawn-key tags for the random streams
_TAG_LHS, _TAG_FULL, _TAG_QUASI, _TAG_OPT = 1, 2, 3, 4

EXPERIMENT_DEFAULTS = {
    Experiment.EDM_COMPARE: {"benchmark": "branin", "m_list": (10, 30, 50, 100)},
    Experiment.DTV: {"benchmark": "branin", "grid_q": 50, "m_list": (25, 50, 100, 175),
                     "methods": ("AlgA", "AlgB", "MaximinLhs")},
    Experiment.CONTOUR_LENGTH: {"benchmark": "branin", "grid_q": 80, "m_list": (50,),
                                "methods": ("AlgB",), "reps": 20},
    Experiment.VOLUME: {"benchmark": "hartmann6", "m_list": (25, 50, 75, 100, 125, 150),
                        "methods": ("AlgB", "Sobol")},
}


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def _int_seed(seed: int, *key: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=key).generate_state(1)[0])


@dataclass(frozen=True, eq=False)
class Model:
    bench: Benchmark
    design: Design
    obs: Observations
    fit: MleResult
    gp: PosteriorGp
    exc: ExcursionSpec


def build_model(cfg: ExperimentConfig) -> Model:
    """Maximin LHS of ``n_obs`` points, benchmark evaluations and an ML fit."""
    bench = cfg.bench
    n = cfg.n_obs or bench.n_obs
    family = cfg.family or bench.family
    design = maximin_lhs(bench.d, n, seed=cfg.seed, restarts=cfg.lhs_restarts)
    obs = Observations(design.points, bench.func(design.points))
    fit = fit_mle(obs, family, seed=cfg.seed)
    gp = posterior(obs, fit.kernel, fit.mean)
    return Model(bench, design, obs, fit, gp, ExcursionSpec(bench.threshold))


def integration_measures(cfg: ExperimentConfig, d: int) -> tuple[IntegrationMeasure,
                                                                  IntegrationMeasure]:
    """Optimization nodes and a disjoint, larger block of Sobol' nodes for scoring."""
    opt = IntegrationMeasure.sobol(d, cfg.nodes, skip=1)
    score = IntegrationMeasure(sobol(d, cfg.eval_nodes, skip=cfg.eval_nodes))
    return opt, score


def select_points(method: str, model: Model, m_list, cfg: ExperimentConfig,
                  mu: IntegrationMeasure | None = None, rep: int = 0):
    """Simulation points for each ``m``; returns ``({m: points}, trace or None)``.

    Greedy designs are nested, so one run up to ``max(m_list)`` serves every
    ``m``. Maximin LHS designs are drawn afresh for every ``m`` and ``rep``.
    """
    d = model.gp.d
    m_list = sorted(m_list)
    if method in ("AlgA", "AlgB"):
        if mu is None:
            mu = IntegrationMeasure.sobol(d, cfg.nodes, skip=1)
        alg = Algorithm.A if method == "AlgA" else Algorithm.B
        opt = OptimizerConfig(m_list[-1], alg, population=cfg.population,
                              generations=cfg.generations, polish_evals=cfg.polish_evals,
                              multistarts=cfg.multistarts, start_points=cfg.start_points,
                              seed=_int_seed(cfg.seed, _TAG_OPT, int(alg is Algorithm.B)))
        res = optimize_points(CriterionState.create(model.gp, model.exc, mu), opt)
        pts = res.design.points
        return {m: pts[:m] for m in m_list}, res.trace
    if method == "MaximinLhs":
        return {m: maximin_lhs(d, m, seed=_int_seed(cfg.seed, _TAG_LHS, m, rep),
                               restarts=cfg.lhs_restarts).points for m in m_list}, None
    if method == "Sobol":
        return {m: sobol(d, m, skip=1).points for m in m_list}, None
    raise ValueError(f"unknown method {method!r}")


@dataclass
class ExperimentResult:
    header: tuple[str, ...]
    rows: list
    summary_header: tuple[str, ...] = ()
    summary: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def column(self, name: str, **where) -> np.ndarray:
        i = self.header.index(name)
        keys = {self.header.index(k): v for k, v in where.items()}
        return np.array([r[i] for r in self.rows
                         if all(r[j] == v for j, v in keys.items())])


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def csv_comment(cfg: ExperimentConfig) -> str:
    return f"quasireal {__version__} config {cfg.digest()}"


def write_csv(path, header, rows, cfg: ExperimentConfig) -> None:
    """CSV with a leading comment recording the library version and config hash."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# {csv_comment(cfg)}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _map_reps(fn, reps: int, threads: int) -> list:
    if threads <= 1 or reps <= 1:
        return [fn(r) for r in range(reps)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(reps)))


def _method_index(method: str) -> int:
    return ("AlgA", "AlgB", "MaximinLhs", "Sobol").index(method)


def _fixed_points(model: Model, cfg: ExperimentConfig, out: Path | None):
    """Points for every non-random method, computed once and shared by all reps."""
    fixed = {}
    for method in cfg.methods:
        if method == "MaximinLhs":
            continue
        pts, trace = select_points(method, model, cfg.m_list, cfg)
        fixed[method] = pts
        if out is not None:
            m = max(cfg.m_list)
            write_design_csv(Design.explicit(pts[m]), out / f"points_{method}_m{m}.csv",
                             csv_comment(cfg))
            if trace is not None:
                write_trace_csv(trace, out / f"trace_{method}.csv", csv_comment(cfg))
    return fixed


def _points_for(method, m, rep, model, cfg, fixed):
    if method in fixed:
        return fixed[method][m]
    return maximin_lhs(model.gp.d, m, seed=_int_seed(cfg.seed, _TAG_LHS, m, rep),
                       restarts=cfg.lhs_restarts).points


def _out_dir(out) -> Path | None:
    if out is None:
        return None
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _median(xs) -> float:
    return float(np.median(np.asarray(xs, dtype=float)))


def run_edm_compare(cfg: ExperimentConfig, out=None, model: Model | None = None
                    ) -> ExperimentResult:
    """Expected distance in measure of each method's points for each ``m``.

    Greedy methods optimize on ``cfg.nodes`` Sobol' nodes; every design is
    scored on a disjoint block of ``cfg.eval_nodes`` nodes.
    """
    out = _out_dir(out)
    model = model or build_model(cfg)
    mu_opt, mu_eval = integration_measures(cfg, model.gp.d)
    rows = []
    for method in cfg.methods:
        pts, trace = select_points(method, model, cfg.m_list, cfg, mu=mu_opt)
        for m in cfg.m_list:
            state = CriterionState.create(model.gp, model.exc, mu_eval, Em=pts[m])
            rows.append((method, m, state.edm(), mu_eval.nodes.r, cfg.seed))
        if out is not None:
            m = max(cfg.m_list)
            write_design_csv(Design.explicit(pts[m]), out / f"points_{method}_m{m}.csv",
                             csv_comment(cfg))
            if trace is not None:
                write_trace_csv(trace, out / f"trace_{method}.csv", csv_comment(cfg))
    res = ExperimentResult(("method", "m", "edm", "nodes", "seed"), rows)
    if out is not None:
        write_csv(out / "edm_compare.csv", res.header, rows, cfg)
        series = {meth: (list(cfg.m_list), list(res.column("edm", method=meth)))
                  for meth in cfg.methods}
        write_line_plot(out / "edm_compare.svg", series, title="Expected distance in measure",
                        xlabel="m", ylabel="edm", logy=True)
    return res


def _grid_model(cfg: ExperimentConfig, model: Model | None):
    model = model or build_model(cfg)
    if model.gp.d != 2:
        raise ValueError("this experiment needs a 2-D benchmark")
    return model, grid(2, cfg.grid_q)


def run_dtv(cfg: ExperimentConfig, out=None, model: Model | None = None) -> ExperimentResult:
    """Distance transform variability on a grid: full simulation vs quasi-realizations."""
    out = _out_dir(out)
    model, G = _grid_model(cfg, model)
    fixed = _fixed_points(model, cfg, out)
    sampler = FullSampler.create(model.gp, G)
    preds = {(meth, m): kriging_weights(model.gp, fixed[meth][m])
             for meth in fixed for m in cfg.m_list}

    def one_rep(rep):
        full = sampler.draw(cfg.N, _rng(cfg.seed, _TAG_FULL, rep))
        rows = [("full", G.r, rep, dav(excursions(full, model.exc)))]
        for meth in cfg.methods:
            for m in cfg.m_list:
                pred = preds.get((meth, m))
                if pred is None:
                    pred = kriging_weights(model.gp, _points_for(meth, m, rep, model, cfg, fixed))
                rng = _rng(cfg.seed, _TAG_QUASI, _method_index(meth), m, rep)
                quasi = quasi_realizations(model.gp, pred, G, cfg.N, rng)
                rows.append((meth, m, rep, dav(excursions(quasi, model.exc))))
        return rows

    rows = [r for chunk in _map_reps(one_rep, cfg.reps, cfg.threads) for r in chunk]
    res = ExperimentResult(("method", "m", "rep", "dtv"), rows)
    full_med = _median(res.column("dtv", method="full"))
    for meth in cfg.methods:
        for m in cfg.m_list:
            vals = res.column("dtv", method=meth, m=m)
            med = _median(vals)
            res.summary.append((meth, m, med, float(np.quantile(vals, 0.25)),
                                float(np.quantile(vals, 0.75)), float(np.ptp(vals)),
                                abs(med - full_med) / full_med))
    res.summary_header = ("method", "m", "median", "q25", "q75", "range", "rel_err_median")
    res.extra["full_median"] = full_med
    if out is not None:
        write_csv(out / "dtv.csv", res.header, rows, cfg)
        write_csv(out / "dtv_summary.csv", res.summary_header, res.summary, cfg)
        series = {meth: (list(cfg.m_list), [s[2] for s in res.summary if s[0] == meth])
                  for meth in cfg.methods}
        write_line_plot(out / "dtv.svg", series, title="Median DTV", xlabel="m",
                        ylabel="DTV", hlines={"full grid": full_med})
    return res


def run_contour_length(cfg: ExperimentConfig, out=None, model: Model | None = None
                       ) -> ExperimentResult:
    """KS comparison of level-set lengths: full grid simulation vs quasi-realizations."""
    out = _out_dir(out)
    model, G = _grid_model(cfg, model)
    fixed = _fixed_points(model, cfg, out)
    sampler = FullSampler.create(model.gp, G)
    preds = {(meth, m): kriging_weights(model.gp, fixed[meth][m])
             for meth in fixed for m in cfg.m_list}

    def one_rep(rep):
        full = sampler.draw(cfg.N, _rng(cfg.seed, _TAG_FULL, rep))
        ref = contour_length(full, model.exc).lengths
        rows = []
        for meth in cfg.methods:
            for m in cfg.m_list:
                pred = preds.get((meth, m))
                if pred is None:
                    pred = kriging_weights(model.gp, _points_for(meth, m, rep, model, cfg, fixed))
                rng = _rng(cfg.seed, _TAG_QUASI, _method_index(meth), m, rep)
                quasi = quasi_realizations(model.gp, pred, G, cfg.N, rng)
                lengths = contour_length(quasi, model.exc).lengths
                ks = ks_two_sample(lengths, ref)
                rows.append((meth, m, rep, float(np.median(ref)), float(np.median(lengths)),
                             ks.statistic, ks.pvalue, ks.reject))
        return rows

    rows = [r for chunk in _map_reps(one_rep, cfg.reps, cfg.threads) for r in chunk]
    res = ExperimentResult(("method", "m", "rep", "median_full", "median_quasi", "ks_statistic",
                            "pvalue", "reject"), rows)
    res.summary_header = ("method", "m", "reps", "nonreject_fraction", "median_statistic")
    for meth in cfg.methods:
        for m in cfg.m_list:
            rej = res.column("reject", method=meth, m=m)
            stat = res.column("ks_statistic", method=meth, m=m)
            res.summary.append((meth, m, len(rej), 1.0 - float(np.mean(rej)), _median(stat)))
    if out is not None:
        write_csv(out / "contour_length.csv", res.header, rows, cfg)
        write_csv(out / "contour_length_summary.csv", res.summary_header, res.summary, cfg)
    return res


def run_volume(cfg: ExperimentConfig, out=None, model: Model | None = None
               ) -> ExperimentResult:
    """Excursion volume distributions on Sobol' nodes, with and without recentering."""
    out = _out_dir(out)
    model = model or build_model(cfg)
    G = sobol(model.gp.d, cfg.sim_nodes, skip=1)
    mean, var, _, _ = model.gp.moments(G.points)
    cov = CoverageField(G, coverage_probability(mean, var, model.exc))
    center = float(np.mean(cov.p))
    fixed = _fixed_points(model, cfg, out)
    sampler = FullSampler.create(model.gp, G)
    preds = {(meth, m): kriging_weights(model.gp, fixed[meth][m])
             for meth in fixed for m in cfg.m_list}

    def one_rep(rep):
        full = sampler.draw(cfg.N, _rng(cfg.seed, _TAG_FULL, rep))
        v_full = volume_distribution(excursions(full, model.exc)).volumes
        rows = []
        for meth in cfg.methods:
            for m in cfg.m_list:
                pred = preds.get((meth, m))
                if pred is None:
                    pred = kriging_weights(model.gp, _points_for(meth, m, rep, model, cfg, fixed))
                rng = _rng(cfg.seed, _TAG_QUASI, _method_index(meth), m, rep)
                ens = excursions(quasi_realizations(model.gp, pred, G, cfg.N, rng), model.exc)
                raw = volume_distribution(ens).volumes
                rec = volume_distribution(ens, correct_bias=True, cov=cov)
                ks = ks_two_sample(rec.volumes, v_full)
                mf, mq = float(v_full.mean()), float(raw.mean())
                rows.append((meth, m, rep, mf, mq, center, abs(mq - mf), abs(center - mf),
                             ks.statistic, ks.pvalue, ks.reject, rec.clipped))
        return rows

    rows = [r for chunk in _map_reps(one_rep, cfg.reps, cfg.threads) for r in chunk]
    res = ExperimentResult(("method", "m", "rep", "mean_full", "mean_quasi", "center",
                            "err_uncorrected", "err_corrected", "ks_statistic", "pvalue",
                            "reject", "clipped"), rows)
    res.summary_header = ("method", "m", "nonreject_fraction", "below_center_fraction",
                          "mean_err_uncorrected", "mean_err_corrected")
    for meth in cfg.methods:
        for m in cfg.m_list:
            sel = dict(method=meth, m=m)
            below = res.column("mean_quasi", **sel) < res.column("center", **sel)
            res.summary.append((meth, m, 1.0 - float(np.mean(res.column("reject", **sel))),
                                float(np.mean(below)),
                                float(np.mean(res.column("err_uncorrected", **sel))),
                                float(np.mean(res.column("err_corrected", **sel)))))
    res.extra["center"] = center
    if out is not None:
        write_csv(out / "volume.csv", res.header, rows, cfg)
        write_csv(out / "volume_summary.csv", res.summary_header, res.summary, cfg)
        series = {}
        for meth in cfg.methods:
            s = [r for r in res.summary if r[0] == meth]
            series[f"{meth} raw"] = ([r[1] for r in s], [r[4] for r in s])
            series[f"{meth} recentered"] = ([r[1] for r in s], [r[5] for r in s])
        write_line_plot(out / "volume_bias.svg", series, title="Mean volume error",
                        xlabel="m", ylabel="|mean - full mean|", logy=True)
    return res


_RUNNERS = {
    Experiment.EDM_COMPARE: run_edm_compare,
    Experiment.DTV: run_dtv,
    Experiment.CONTOUR_LENGTH: run_contour_length,
    Experiment.VOLUME: run_volume,
}


def run_experiment(cfg: ExperimentConfig, out=None) -> ExperimentResult:
    try:
        runner = _RUNNERS[cfg.experiment]
    except KeyError:
        raise ValueError(f"no runner for experiment {cfg.experiment.value!r}") from None
    return runner(cfg, out)


def first_passing_m(summary, method: str, level: float = 0.8,
                    column: int = 2) -> float:
    """Smallest ``m`` whose summary value in ``column`` reaches ``level`` (inf if none)."""
    ms = [row[1] for row in summary if row[0] == method and row[column] >= level]
    return min(ms) if ms else math.inf
