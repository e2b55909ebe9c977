"""How well a proxy predicts agent performance in the target.

Four scores, from naive to rank-based:

* ``pod``: mean observation distance under a shared open-loop command sequence;
* ``ppv``: per-agent weighted absolute difference of task metrics;
* ``prpv``: L1 distance between the two domains' preference matrices;
* ``srcc``: per-metric Pearson correlation of agent scores (baseline).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .domain import DomainInstance, DomainParams, Task, rollout_open_loop
from .metrics import DEFAULT_TRIALS, MetricTable, evaluate_agents
from .preference import Delta, ErrorTaxonomy, _check_same_agents, classify_errors, preference_matrix

# Per-metric weights that bring each metric to O(1).
DEFAULT_BETA = {"distance": 1.0 / 30.0, "survival": 1.0 / 60.0, "penalized_score": 1.0 / 60.0}

POD_STEPS = 400


def default_beta(metric_names: Sequence[str]) -> list[float]:
    return [DEFAULT_BETA.get(name, 1.0) for name in metric_names]


def default_pod_commands(n: int = POD_STEPS) -> list[float]:
    """Slow weave used as the shared open-loop probe."""
    return [0.5 * math.sin(2.0 * math.pi * k / 80.0) for k in range(n)]


def pod(proxy: DomainInstance, target: DomainInstance, commands: Sequence[float]) -> float:
    """Mean per-step Euclidean distance between proxy and target observations.

    Both instances replay ``commands`` from their own start state (pass equal
    ``x0`` for equivalent conditions).  The comparison stops at the shorter
    trajectory; the initial render is not counted.
    """
    a = rollout_open_loop(proxy, commands)
    b = rollout_open_loop(target, commands)
    n = min(len(a), len(b)) - 1
    if n < 1:
        raise ValueError("no overlapping steps to compare")
    dy = a.z_y[1:n + 1] - b.z_y[1:n + 1]
    dphi = a.z_phi[1:n + 1] - b.z_phi[1:n + 1]
    return float(np.mean(np.hypot(dy, dphi)))


def ppv(proxy_table: MetricTable, target_table: MetricTable, beta: Optional[Sequence[float]] = None) -> np.ndarray:
    """Weighted absolute metric discrepancy, one value per agent."""
    _check_same_agents(proxy_table, target_table)
    if beta is None:
        beta = default_beta(target_table.metric_names)
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (len(target_table.metric_names),):
        raise ValueError(f"expected {len(target_table.metric_names)} weights, got {beta.shape}")
    if np.any(beta <= 0):
        raise ValueError("weights must be positive")
    return np.abs(proxy_table.values - target_table.values) @ beta


def prpv(proxy_table: MetricTable, target_table: MetricTable, delta: Delta = None) -> float:
    """Sum over all ordered agent pairs of ``|alpha_proxy - alpha_target|``."""
    _check_same_agents(proxy_table, target_table)
    a = preference_matrix(proxy_table, delta).alpha
    b = preference_matrix(target_table, delta).alpha
    return float(np.sum(np.abs(a - b)))


def normalized_prpv(value: float, K: int) -> float:
    return value / (K * (K - 1))


def srcc(proxy_table: MetricTable, target_table: MetricTable) -> list[Optional[float]]:
    """Pearson correlation of proxy vs target scores per metric; ``None`` if a column is constant."""
    _check_same_agents(proxy_table, target_table)
    if proxy_table.K < 3:
        raise ValueError("correlation needs at least three agents")
    out: list[Optional[float]] = []
    for i in range(len(target_table.metric_names)):
        x = proxy_table.values[:, i] - proxy_table.values[:, i].mean()
        y = target_table.values[:, i] - target_table.values[:, i].mean()
        sxx, syy = float(x @ x), float(y @ y)
        if sxx == 0.0 or syy == 0.0:
            out.append(None)
            continue
        # one square root keeps self-correlation exactly 1; split it on under/overflow
        prod = sxx * syy
        norm = math.sqrt(prod) if 0.0 < prod < math.inf else math.sqrt(sxx) * math.sqrt(syy)
        out.append(max(-1.0, min(1.0, float(x @ y) / norm)))
    return out


@dataclass
class PredictivityReport:
    pod: Optional[float]
    ppv: list[float]
    prpv: float
    prpv_normalized: float
    srcc: list[Optional[float]]
    taxonomy: ErrorTaxonomy
    proxy_table: MetricTable
    target_table: MetricTable

    @property
    def ppv_mean(self) -> float:
        return float(np.mean(self.ppv))

    def to_dict(self) -> dict:
        return {
            "pod": self.pod,
            "ppv": dict(zip(self.target_table.agent_ids, self.ppv)),
            "ppv_mean": self.ppv_mean,
            "prpv": self.prpv,
            "prpv_normalized": self.prpv_normalized,
            "srcc": dict(zip(self.target_table.metric_names, self.srcc)),
            "taxonomy": self.taxonomy.to_dict(),
            "proxy_table": self.proxy_table.to_dict(),
            "target_table": self.target_table.to_dict(),
        }

    def to_json(self, indent: Optional[int] = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)


def report_from_tables(proxy_table: MetricTable, target_table: MetricTable, delta: Delta = None,
                       beta: Optional[Sequence[float]] = None, pod_value: Optional[float] = None) -> PredictivityReport:
    value = prpv(proxy_table, target_table, delta)
    return PredictivityReport(
        pod=pod_value,
        ppv=[float(v) for v in ppv(proxy_table, target_table, beta)],
        prpv=value,
        prpv_normalized=normalized_prpv(value, target_table.K),
        srcc=srcc(proxy_table, target_table) if target_table.K >= 3 else [None] * len(target_table.metric_names),
        taxonomy=classify_errors(proxy_table, target_table, delta),
        proxy_table=proxy_table,
        target_table=target_table,
    )


def pod_between(proxy_params: DomainParams, target_params: DomainParams, seed: int = 0,
                commands: Optional[Sequence[float]] = None, x0: tuple[float, float] = (0.0, 0.0)) -> float:
    commands = default_pod_commands() if commands is None else commands
    return pod(DomainInstance(proxy_params, seed, x0), DomainInstance(target_params, seed, x0), commands)


def predictivity_report(proxy_params: DomainParams, target_params: DomainParams, zoo: Sequence, task: Task,
                        trials: int = DEFAULT_TRIALS, delta: Delta = None, beta: Optional[Sequence[float]] = None,
                        seeds: Optional[Sequence[int]] = None, aggregator: str = "mean",
                        target_table: Optional[MetricTable] = None, workers: int = 1) -> PredictivityReport:
    """Evaluate the zoo in both domains and assemble every predictivity score.

    A precomputed ``target_table`` may be passed to share one target
    evaluation across many proxies.
    """
    if target_table is None:
        target_table = evaluate_agents(target_params, zoo, task, trials, seeds, aggregator, workers=workers)
    proxy_table = evaluate_agents(proxy_params, zoo, task, trials, seeds, aggregator, workers=workers)
    return report_from_tables(proxy_table, target_table, delta, beta,
                              pod_value=pod_between(proxy_params, target_params))
