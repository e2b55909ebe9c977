"""Proxy parameter search and the budget-limited inaccuracy analysis.

Sweeps evaluate one domain parameter over a grid against a fixed target;
coordinate search cycles sweeps over several parameters.  The budget model
trades simulator speed against fidelity: a coarser rendering interval runs
faster, so more trials fit into the same wall-clock budget.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .domain import EPISODE_SECONDS, PARAM_FIELDS, ConfigError, DomainParams, Task
from .learning import PLVConfig, plv
from .metrics import DEFAULT_TRIALS, MetricTable, evaluate_agents, trial_seeds
from .predictivity import PredictivityReport, normalized_prpv, predictivity_report, prpv
from .preference import Delta

OBJECTIVES = ("prpv", "ppv", "pod", "srcc", "plv")
MAXIMIZE = frozenset({"srcc", "plv"})

SWEEP_COLUMNS = ("param", "value", "prpv", "prpv_norm", "ppv_mean", "pod",
                 "srcc_m1", "srcc_m2", "err_type1", "err_spec", "err_overconf")
PLV_SWEEP_COLUMNS = ("param", "value", "plv", "percent_reduction", "zero_shot_score",
                     "d_target", "d_proxy_to_target", "transfer_converged")


@dataclass(frozen=True)
class SweepSpec:
    param_name: str
    values: tuple
    base: DomainParams = DomainParams()
    objective: str = "prpv"

    def __post_init__(self):
        if self.param_name not in PARAM_FIELDS:
            raise ConfigError(f"unknown sweep parameter {self.param_name!r}")
        if not self.values:
            raise ConfigError("sweep values must be nonempty")
        if self.objective not in OBJECTIVES:
            raise ConfigError(f"unknown objective {self.objective!r}; expected one of {OBJECTIVES}")

    def instances(self) -> list[DomainParams]:
        return [self.base.with_value(self.param_name, v) for v in self.values]


@dataclass
class SweepRow:
    value: float
    score: Optional[float]
    metrics: dict


@dataclass
class SweepResult:
    param_name: str
    objective: str
    rows: list[SweepRow]
    argbest: float
    residual: Optional[float]
    columns: tuple = SWEEP_COLUMNS

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            cells = {"param": self.param_name, "value": _fmt(row.value), **row.metrics}
            writer.writerow([_fmt(cells.get(c)) for c in self.columns])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "param": self.param_name,
            "objective": self.objective,
            "argbest": self.argbest,
            "residual": self.residual,
            "rows": [{"value": r.value, "score": r.score, **r.metrics} for r in self.rows],
        }

    def to_json(self, indent: Optional[int] = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _loss(score: Optional[float], objective: str) -> float:
    if score is None or math.isnan(score):
        return math.inf
    return -score if objective in MAXIMIZE else score


def best_index(scores: Sequence[Optional[float]], objective: str) -> int:
    """Index of the best score; the first one wins ties."""
    losses = [_loss(s, objective) for s in scores]
    return int(np.argmin(losses))


def objective_score(report: PredictivityReport, objective: str) -> Optional[float]:
    if objective == "prpv":
        return report.prpv
    if objective == "ppv":
        return report.ppv_mean
    if objective == "pod":
        return report.pod
    if objective == "srcc":
        defined = [v for v in report.srcc if v is not None]
        return float(np.mean(defined)) if defined else None
    raise ConfigError(f"objective {objective!r} is not a predictivity score")


def report_metrics(report: PredictivityReport) -> dict:
    srcc = list(report.srcc) + [None, None]
    counts = report.taxonomy.counts
    return {
        "prpv": report.prpv,
        "prpv_norm": report.prpv_normalized,
        "ppv_mean": report.ppv_mean,
        "pod": report.pod,
        "srcc_m1": srcc[0],
        "srcc_m2": srcc[1],
        "err_type1": counts["error_type_1"],
        "err_spec": counts["specificity"],
        "err_overconf": counts["overconfidence"],
    }


def sweep(spec: SweepSpec, target: DomainParams, zoo: Sequence, task: Task, trials: int = DEFAULT_TRIALS,
          delta: Delta = None, beta: Optional[Sequence[float]] = None, seeds: Optional[Sequence[int]] = None,
          aggregator: str = "mean", target_table: Optional[MetricTable] = None, workers: int = 1) -> SweepResult:
    """Score every grid value as a proxy for ``target``; the residual is the best score found."""
    if spec.objective == "plv":
        raise ConfigError("PLV sweeps go through plv_sweep()")
    if target_table is None:
        target_table = evaluate_agents(target, zoo, task, trials, seeds, aggregator, workers=workers)
    rows = []
    for value, params in zip(spec.values, spec.instances()):
        report = predictivity_report(params, target, zoo, task, trials, delta, beta, seeds, aggregator,
                                     target_table=target_table, workers=workers)
        rows.append(SweepRow(getattr(params, spec.param_name), objective_score(report, spec.objective),
                             report_metrics(report)))
    k = best_index([r.score for r in rows], spec.objective)
    return SweepResult(spec.param_name, spec.objective, rows, rows[k].value, rows[k].score)


def plv_sweep(spec: SweepSpec, target: DomainParams, cfg: Optional[PLVConfig] = None,
              workers: int = 1) -> SweepResult:
    """Maximize the learning value over one proxy parameter."""
    rows = []
    for params in spec.instances():
        rep = plv(target, params, cfg, workers=workers)
        rows.append(SweepRow(getattr(params, spec.param_name), float(rep.plv), {
            "plv": rep.plv,
            "percent_reduction": rep.percent_reduction,
            "zero_shot_score": rep.zero_shot_score,
            "d_target": rep.d_target,
            "d_proxy_to_target": rep.d_proxy_to_target,
            "transfer_converged": rep.transfer_converged,
        }))
    k = best_index([r.score for r in rows], "plv")
    return SweepResult(spec.param_name, "plv", rows, rows[k].value, rows[k].score, PLV_SWEEP_COLUMNS)


def compare_families(results: Mapping[str, SweepResult]) -> tuple[str, Optional[float]]:
    """Pick the family whose best instance has the best residual (first name wins ties)."""
    if not results:
        raise ValueError("no families to compare")
    names = list(results)
    objectives = {r.objective for r in results.values()}
    if len(objectives) != 1:
        raise ValueError(f"families were swept with different objectives: {sorted(objectives)}")
    k = best_index([results[n].residual for n in names], objectives.pop())
    return names[k], results[names[k]].residual


@dataclass
class CoordinateSearchResult:
    params: DomainParams
    objective: str
    trace: list[float]
    sweeps: list[SweepResult] = field(default_factory=list)


def coordinate_search(base: DomainParams, param_specs: Sequence[tuple[str, Sequence]], target: DomainParams,
                      zoo: Sequence, task: Task, rounds: int = 1, objective: str = "prpv",
                      trials: int = DEFAULT_TRIALS, delta: Delta = None, beta: Optional[Sequence[float]] = None,
                      seeds: Optional[Sequence[int]] = None, aggregator: str = "mean",
                      workers: int = 1) -> CoordinateSearchResult:
    """Cyclic coordinate descent over grids, one parameter at a time.

    A coordinate moves to its sweep's argbest unless that is worse than the
    current point (possible only when the current value is off-grid), so the
    trace never gets worse.
    """
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    if objective == "plv":
        raise ConfigError("coordinate search supports predictivity objectives only")
    target_table = evaluate_agents(target, zoo, task, trials, seeds, aggregator, workers=workers)

    def score(params: DomainParams) -> Optional[float]:
        rep = predictivity_report(params, target, zoo, task, trials, delta, beta, seeds, aggregator,
                                  target_table=target_table, workers=workers)
        return objective_score(rep, objective)

    current = base
    current_score = score(current)
    trace = [current_score]
    sweeps = []
    for _ in range(rounds):
        for name, values in param_specs:
            res = sweep(SweepSpec(name, tuple(values), current, objective), target, zoo, task, trials,
                        delta, beta, seeds, aggregator, target_table=target_table, workers=workers)
            sweeps.append(res)
            if _loss(res.residual, objective) <= _loss(current_score, objective):
                current = current.with_value(name, res.argbest)
                current_score = res.residual
            trace.append(current_score)
    return CoordinateSearchResult(current, objective, trace, sweeps)


@dataclass(frozen=True)
class BudgetModel:
    """Speed ratio ``rho(d) = c1 * d / (1 + c2)`` of sim time over wall time."""

    time_budget: float
    c1: float = 50.0
    c2: float = 0.0
    episode_sim_length: float = EPISODE_SECONDS

    def __post_init__(self):
        if self.time_budget <= 0:
            raise ConfigError("time budget must be positive")
        if self.c1 <= 0 or self.c2 <= -1:
            raise ConfigError("rho(d) must be strictly increasing: need c1 > 0 and c2 > -1")
        if self.episode_sim_length <= 0:
            raise ConfigError("episode length must be positive")

    def rho(self, d: float) -> float:
        return self.c1 * d / (1.0 + self.c2)


def n_trials(budget: BudgetModel, d: int) -> int:
    """Whole episodes that fit into the wall-clock budget at rendering interval ``d``."""
    if d < 1:
        raise ValueError("d must be >= 1")
    # tolerance keeps exact multiples from flooring down
    return int(math.floor(budget.rho(d) * budget.time_budget / budget.episode_sim_length + 1e-9))


@dataclass
class BudgetRow:
    d: int
    rho: float
    n_trials: int
    trials_used: int
    ranking_accuracy: Optional[float]
    prpv: Optional[float]


@dataclass
class BudgetCurve:
    time_budget: float
    reference_d0: int
    saturation_trials: int
    rows: list[BudgetRow]
    d_star: Optional[int]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["d", "rho", "n_trials", "trials_used", "ranking_accuracy", "prpv", "optimal"])
        for r in self.rows:
            writer.writerow([r.d, _fmt(r.rho), r.n_trials, r.trials_used,
                             "undefined" if r.ranking_accuracy is None else _fmt(r.ranking_accuracy),
                             "undefined" if r.prpv is None else _fmt(r.prpv),
                             int(r.d == self.d_star)])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "time_budget": self.time_budget,
            "reference_d0": self.reference_d0,
            "saturation_trials": self.saturation_trials,
            "d_star": self.d_star,
            "rows": [vars(r) for r in self.rows],
        }


def budget_accuracy_curve(budget: BudgetModel, d_values: Sequence[int], zoo: Sequence, task: Task,
                          base: DomainParams, reference_d0: Optional[int] = None, saturation_trials: int = 10,
                          delta: Delta = None, seeds: Optional[Sequence[int]] = None,
                          aggregator: str = "mean", workers: int = 1) -> BudgetCurve:
    """Ranking accuracy of ``S(d)`` under the budget, against ``S(d0)`` at saturation.

    Each ``S(d)`` runs ``min(n_trials(d), saturation_trials)`` trials;
    accuracy is ``1 - prpv / (K (K - 1))``.  Intervals with no affordable
    trial have undefined accuracy.
    """
    d_values = [int(d) for d in d_values]
    if not d_values:
        raise ValueError("d_values must be nonempty")
    d0 = min(d_values) if reference_d0 is None else int(reference_d0)
    if d0 != min(d_values):
        raise ValueError("reference_d0 must be the smallest rendering interval")
    seeds = trial_seeds(saturation_trials, seeds)
    reference = evaluate_agents(base.with_value("render_interval", d0), zoo, task, saturation_trials,
                                seeds, aggregator, workers=workers)
    rows = []
    for d in d_values:
        n = n_trials(budget, d)
        used = min(n, saturation_trials)
        if used == 0:
            rows.append(BudgetRow(d, budget.rho(d), n, 0, None, None))
            continue
        table = evaluate_agents(base.with_value("render_interval", d), zoo, task, used, seeds[:used],
                                aggregator, workers=workers)
        value = prpv(table, reference, delta)
        rows.append(BudgetRow(d, budget.rho(d), n, used, 1.0 - normalized_prpv(value, reference.K), value))
    defined = [r for r in rows if r.ranking_accuracy is not None]
    d_star = None
    if defined:
        d_star = defined[best_index([r.ranking_accuracy for r in defined], "srcc")].d
    return BudgetCurve(budget.time_budget, d0, saturation_trials, rows, d_star)
