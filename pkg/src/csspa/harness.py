"""Experiment configuration, replicated runs, trace files and rate fits.

A run writes, under the output directory::

    trace_seed<N>.csv     one row per traced iteration
    summary.json          per-seed final metrics and their means
    reference/<key>.json  cached reference solutions, keyed by problem and theta
                          (shared by all variants of a comparison)

Trace columns are ``TRACE_COLUMNS``; gap and violation refer to the running
average x_sum / t, measured against the untightened problem.
"""
from __future__ import annotations

import csv
import hashlib
import importlib
import importlib.util
import json
import math
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import fair_classification as fc
from . import fair_spam as fs
from .baselines import PenaltyConfig, penalty_cscgd_run, scgd_run
from .model import ConfigError, ProblemInstance, Schedule, theta_for_horizon
from .quadratic import build_quadratic_problem
from .reference import (FullBatchEvaluator, ReferenceSolution, load_reference, save_reference,
                        solve_reference)
from .solver import DivergenceError, TraceRecord, run

TRACE_COLUMNS = ("t", "alpha", "beta", "delta", "lambda_norm", "gap_running",
                 "violation_running", "tracker_err_y", "tracker_err_w")
_COLUMN_FIELDS = {"t": "t", "alpha": "alpha_t", "beta": "beta_t", "delta": "delta_t",
                  "lambda_norm": "lambda_norm", "gap_running": "gap",
                  "violation_running": "max_violation", "tracker_err_y": "tracker_err_y",
                  "tracker_err_w": "tracker_err_w"}

PROBLEMS = ("quadratic_test", "fair_clf", "fair_spam", "custom")
SOLVERS = ("csspa", "scgd", "penalty")


class RateFitError(ValueError):
    """Too few usable points to fit a rate."""


# configuration -------------------------------------------------------------

@dataclass
class ExperimentConfig:
    """Everything needed to reproduce a set of runs.

    ``schedule`` holds :class:`~csspa.model.Schedule` fields, ``penalty`` the
    extra :class:`~csspa.baselines.PenaltyConfig` fields.  The tightening is
    theta0 * T**(-1/4).
    """

    problem: str = "quadratic_test"
    problem_params: dict = field(default_factory=dict)
    solver: str = "csspa"
    schedule: dict = field(default_factory=lambda: {"horizon": 10000})
    penalty: dict = field(default_factory=dict)
    theta0: float = 0.0
    seeds: List[int] = field(default_factory=lambda: [0])
    trace_stride: int = 100
    out_dir: str = "runs"
    reference_tol: float = 1e-6
    compare: List[dict] = field(default_factory=list)
    label: str = ""

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {unknown}")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except ValueError as exc:
            raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        """Copy with non-None overrides; ``horizon`` goes into the schedule."""
        kw = {k: v for k, v in kw.items() if v is not None}
        sched = dict(self.schedule)
        if "horizon" in kw:
            sched["horizon"] = kw.pop("horizon")
        cfg = replace(self, schedule=sched, **kw)
        cfg.validate()
        return cfg

    def build_schedule(self) -> Schedule:
        try:
            if self.solver == "penalty":
                sched = PenaltyConfig(**self.schedule, **self.penalty)
            else:
                sched = Schedule(**self.schedule)
        except TypeError as exc:
            raise ConfigError(f"bad schedule fields: {exc}") from exc
        return sched.validate()

    @property
    def theta(self) -> float:
        return theta_for_horizon(self.theta0, self.schedule.get("horizon", 0) or 1)

    def validate(self):
        if self.problem not in PROBLEMS:
            raise ConfigError(f"problem must be one of {PROBLEMS}, got {self.problem!r}")
        if self.solver not in SOLVERS:
            raise ConfigError(f"solver must be one of {SOLVERS}, got {self.solver!r}")
        if "horizon" not in self.schedule:
            raise ConfigError("schedule.horizon is required")
        if self.penalty and self.solver != "penalty":
            raise ConfigError("penalty settings given but solver is not 'penalty'")
        self.build_schedule()
        if not self.theta0 >= 0:
            raise ConfigError("theta0 must be >= 0")
        if not self.seeds or any(int(s) != s or s < 0 for s in self.seeds):
            raise ConfigError("seeds must be a nonempty list of nonnegative integers")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        if int(self.trace_stride) != self.trace_stride or self.trace_stride < 1:
            raise ConfigError("trace_stride must be a positive integer")
        if not self.reference_tol > 0:
            raise ConfigError("reference_tol must be > 0")
        for entry in self.compare:
            if not isinstance(entry, dict):
                raise ConfigError("compare entries must be objects of overrides")
        return self


# problems ------------------------------------------------------------------

def _fair_clf_dataset(params):
    src = params.get("dataset", {"synthetic": {}})
    if "csv" in src:
        return fc.load_classification_csv(src["csv"])
    if "adult_csv" in src:
        return fc.ingest_adult_csv(src["adult_csv"], src["schema"])
    return fc.generate_two_group(**src.get("synthetic", {}))


def _spam_dataset(params):
    src = params.get("dataset", {"synthetic": {}})
    if "csv" in src:
        return fs.load_spam_csv(src["csv"])
    return fs.generate_spam_synthetic(fs.SpamSyntheticSpec(**src.get("synthetic", {})))


def _custom_factory(spec: str):
    target, _, attr = spec.partition(":")
    if not attr:
        raise ConfigError("custom factory must look like 'module:function' or 'file.py:function'")
    if target.endswith(".py"):
        loader = importlib.util.spec_from_file_location("csspa_custom_problem", target)
        if loader is None:
            raise ConfigError(f"cannot load {target}")
        module = importlib.util.module_from_spec(loader)
        loader.loader.exec_module(module)
    else:
        module = importlib.import_module(target)
    return getattr(module, attr)


def build_problem(config: ExperimentConfig, seed: int = 0) -> ProblemInstance:
    """Problem for ``config`` with oracle streams seeded by ``seed``."""
    params = dict(config.problem_params)
    theta = config.theta
    try:
        if config.problem == "quadratic_test":
            return build_quadratic_problem(seed=seed, tightening=theta, **params)
        if config.problem == "fair_clf":
            data = _fair_clf_dataset(params)
            constrained = params.get("constrained", True)
            keys = {f.name for f in fields(fc.FairClfConfig)}
            opts = {k: v for k, v in params.items() if k in keys}
            if params.get("table2"):
                clf = fc.FairClfConfig.from_table2(opts.pop("tau", 0.2),
                                                   opts.pop("approximation", "A1"), **opts)
            else:
                clf = fc.FairClfConfig(**opts)
            return fc.build_fair_clf_problem(data, clf, seed=seed, tightening=theta,
                                             constrained=constrained)
        if config.problem == "fair_spam":
            data = _spam_dataset(params)
            basis = fs.SpamBasis(p=params.get("p", 4))
            return fs.build_spam_problem(data, basis, mu=params.get("mu", 0.1),
                                         tau=params.get("tau", 0.5), bound=params.get("bound", 10.0),
                                         constrained=params.get("constrained", True), seed=seed,
                                         tightening=theta)
        factory = _custom_factory(params.get("factory", ""))
        problem = factory(**params.get("kwargs", {}))
        if not isinstance(problem, ProblemInstance):
            raise ConfigError("custom factory must return a ProblemInstance")
        return problem.with_seed(seed).with_tightening(theta)
    except TypeError as exc:
        raise ConfigError(f"bad problem_params for {config.problem}: {exc}") from exc


def problem_hash(problem: ProblemInstance) -> str:
    """Content hash of the problem data (not its seed or tightening)."""
    h = hashlib.sha256()
    h.update(problem.name.encode())
    h.update(json.dumps(problem.feasible_set.to_dict(), sort_keys=True).encode())
    for comp in (problem.oracles.objective, problem.oracles.constraint):
        h.update(comp.name.encode())
        h.update(np.ascontiguousarray(comp.data).tobytes())
        h.update(np.ascontiguousarray(comp.params).tobytes())
        h.update(str((comp.decision_dim, comp.inner_dim, comp.num_outputs)).encode())
    return h.hexdigest()[:16]


def reference_for(problem: ProblemInstance, evaluator, theta=0.0, tol=1e-6,
                  cache_dir=None) -> ReferenceSolution:
    """Solve or load the reference solution of the problem tightened by theta."""
    path = None
    if cache_dir is not None:
        path = Path(cache_dir) / f"{problem_hash(problem)}_theta{theta!r}.json"
        if path.exists():
            ref = load_reference(path)
            if ref.kkt_residual <= tol:
                return ref
    ref = solve_reference(evaluator, problem.feasible_set, theta=theta, tol=tol)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        save_reference(path, ref)
    return ref


# trace files -----------------------------------------------------------------

def _fmt(v):
    return "" if v is None else repr(float(v))


def write_trace(path, trace: Sequence[TraceRecord]):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(TRACE_COLUMNS)
        for r in trace:
            out.writerow([r.t] + [_fmt(getattr(r, _COLUMN_FIELDS[c])) for c in TRACE_COLUMNS[1:]])


def read_trace(path) -> List[TraceRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != TRACE_COLUMNS:
            raise ConfigError(f"{path} is not a trace file (header {header})")
        out = []
        for row in reader:
            vals = {_COLUMN_FIELDS[c]: (float(v) if v != "" else None)
                    for c, v in zip(TRACE_COLUMNS[1:], row[1:])}
            out.append(TraceRecord(t=int(row[0]), **vals))
    return out


# rate fits ---------------------------------------------------------------------

@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    window: tuple
    n_points: int
    dropped_zeros: int = 0


def fit_rate(traces, column: str = "gap_running", window=(1e3, 1e5)) -> RateFit:
    """Least-squares slope of log|value| against log t.

    ``traces`` is a list of trace files or of TraceRecord lists (one per
    seed).  |value| is averaged across seeds at each traced t inside the
    window; points whose average is zero or missing are dropped and counted.
    """
    if column not in _COLUMN_FIELDS or column == "t":
        raise ConfigError(f"unknown trace column {column!r}")
    t_min, t_max = window
    if not t_min < t_max:
        raise ConfigError("rate window needs t_min < t_max")
    if isinstance(traces, (str, Path)) or (traces and isinstance(traces[0], TraceRecord)):
        traces = [traces]
    loaded = [read_trace(tr) if isinstance(tr, (str, Path)) else tr for tr in traces]
    if not loaded:
        raise RateFitError("no traces given")
    attr = _COLUMN_FIELDS[column]
    per_seed = [{r.t: getattr(r, attr) for r in tr if t_min <= r.t <= t_max} for tr in loaded]
    times = sorted(set.intersection(*(set(d) for d in per_seed)))
    ts, vals, dropped = [], [], 0
    for t in times:
        seed_vals = [d[t] for d in per_seed]
        if any(v is None for v in seed_vals):
            dropped += 1
            continue
        v = float(np.mean(np.abs(seed_vals)))
        if v == 0.0 or not math.isfinite(v):
            dropped += 1
            continue
        ts.append(t)
        vals.append(v)
    if len(ts) < 10:
        raise RateFitError(f"only {len(ts)} usable points in window {window} "
                           f"({dropped} dropped); need at least 10")
    lx, ly = np.log(ts), np.log(vals)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return RateFit(float(slope), float(intercept), r2, (t_min, t_max), len(ts), dropped)


# runs --------------------------------------------------------------------------

def _extra_metrics(config, problem, x_hat):
    if config.problem == "fair_clf":
        data = _fair_clf_dataset(config.problem_params)
        return {"risk_difference": fc.risk_difference(data, x_hat),
                "accuracy": fc.accuracy(data, x_hat)}
    if config.problem == "fair_spam":
        d = problem.oracles.objective.inner_dim - 1
        norms = fs.group_norms(x_hat, d, problem.n // d)
        return {"group_norms": norms.tolist()}
    return {}


def run_single(config: ExperimentConfig, seed: int, cache_dir=None):
    """One seed: returns (summary entry, trace or None)."""
    schedule = config.build_schedule()
    problem = build_problem(config, seed)
    evaluator = FullBatchEvaluator.from_problem(problem)
    ref = reference_for(problem.with_tightening(0.0), evaluator, 0.0, config.reference_tol,
                        cache_dir)
    entry = {"seed": seed, "f_star": ref.f_star, "theta": problem.tightening}
    start = time.perf_counter()
    try:
        if config.solver == "csspa":
            x_hat, state, trace = run(problem, schedule, trace_stride=config.trace_stride,
                                      evaluator=evaluator, f_star=ref.f_star)
            entry["lambda_final"] = state.lam.tolist()
        elif config.solver == "scgd":
            x_hat, trace = scgd_run(problem, schedule, trace_stride=config.trace_stride,
                                    evaluator=evaluator, f_star=ref.f_star)
        else:
            x_hat, trace = penalty_cscgd_run(problem, schedule, trace_stride=config.trace_stride,
                                             evaluator=evaluator, f_star=ref.f_star)
    except DivergenceError as exc:
        entry.update(status="diverged", error=str(exc), quantity=exc.quantity, t=exc.t,
                     wall_time=time.perf_counter() - start)
        return entry, None
    entry["wall_time"] = time.perf_counter() - start
    entry.update(status="ok", x_hat=x_hat.tolist(),
                 final_gap=evaluator.objective_value(x_hat) - ref.f_star,
                 final_violation=evaluator.max_violation(x_hat))
    entry.update(_extra_metrics(config, problem, x_hat))
    return entry, trace


def run_experiment(config: ExperimentConfig, out_dir=None, cache_dir=None) -> dict:
    """Run every seed, write traces and ``summary.json``; returns the summary.

    Reference solutions are cached under ``cache_dir`` (default
    ``<out>/reference``).
    """
    config.validate()
    out = Path(out_dir or config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cache = Path(cache_dir) if cache_dir is not None else out / "reference"
    entries = []
    for seed in config.seeds:
        entry, trace = run_single(config, seed, cache_dir=cache)
        if trace is not None:
            path = out / f"trace_seed{seed}.csv"
            write_trace(path, trace)
            entry["trace"] = path.name
        entries.append(entry)
    ok = [e for e in entries if e["status"] == "ok"]
    summary = {"config": config.to_dict(), "runs": entries,
               "diverged": len(entries) - len(ok)}
    if ok:
        summary["mean_final_gap"] = float(np.mean([e["final_gap"] for e in ok]))
        summary["mean_abs_final_gap"] = float(np.mean([abs(e["final_gap"]) for e in ok]))
        summary["mean_final_violation"] = float(np.mean([e["final_violation"] for e in ok]))
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return summary


def _variant_label(i, cfg: ExperimentConfig):
    return cfg.label or f"{i}_{cfg.solver}"


def compare_solvers(config: ExperimentConfig, out_dir=None, window=None) -> dict:
    """Run each ``config.compare`` variant on identical seeds and budgets.

    Each variant is a dict of overrides (for example ``{"solver": "penalty",
    "penalty": {"penalty_weight": 10}}``); with no variants, CSSPA is compared
    with the penalty method at its default weight.
    """
    variants = config.compare or [{"solver": "csspa"}, {"solver": "penalty"}]
    out = Path(out_dir or config.out_dir)
    T = config.schedule["horizon"]
    window = window or (max(1, T // 100), T)
    rows = []
    for i, overrides in enumerate(variants):
        base = replace(config, compare=[])
        if overrides.get("solver", base.solver) != "penalty":
            base = replace(base, penalty={})
        try:
            cfg = replace(base, **overrides)
        except TypeError as exc:
            raise ConfigError(f"bad compare entry {overrides}: {exc}") from exc
        cfg.validate()
        label = _variant_label(i, cfg)
        summary = run_experiment(cfg, out / label, cache_dir=out / "reference")
        row = {"label": label, "solver": cfg.solver, "diverged": summary["diverged"],
               "mean_abs_final_gap": summary.get("mean_abs_final_gap"),
               "mean_final_violation": summary.get("mean_final_violation")}
        traces = [out / label / e["trace"] for e in summary["runs"] if e["status"] == "ok"]
        try:
            fit = fit_rate(traces, "gap_running", window) if traces else None
            row["gap_slope"] = fit.slope if fit else None
        except RateFitError:
            row["gap_slope"] = None
        rows.append(row)
    comparison = {"horizon": T, "seeds": list(config.seeds), "window": list(window),
                  "solvers": rows}
    (out / "comparison.json").write_text(json.dumps(comparison, indent=2) + "\n")
    return comparison
