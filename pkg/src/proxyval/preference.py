"""Pairwise preference relations between agents and proxy ranking errors.

Agents are compared metric by metric with a per-metric tolerance: a metric
is *greater*, *indifferent* or *less*.  Combining the metrics gives one of
four relations (better, worse, indifferent, incomparable).  A proxy's
guessed relation is then scored against the target's for every agent pair.
"""
from __future__ import annotations

import csv
import enum
import io
import json
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .metrics import MetricTable


class Relation(enum.Enum):
    BETTER = ">"
    WORSE = "<"
    INDIFFERENT = "~"
    INCOMPARABLE = "<>"

    def inverse(self) -> "Relation":
        return _INVERSE[self]


_INVERSE = {
    Relation.BETTER: Relation.WORSE,
    Relation.WORSE: Relation.BETTER,
    Relation.INDIFFERENT: Relation.INDIFFERENT,
    Relation.INCOMPARABLE: Relation.INCOMPARABLE,
}

GREATER, INDIFFERENT, LESS = 1, 0, -1

ERROR_CLASSES = ("ok", "error_type_1", "specificity", "overconfidence")

Delta = Union[float, Sequence[float], None]


def compare_metric(a: float, b: float, delta: float = 0.0) -> int:
    """``GREATER`` if ``a > b + delta``, ``LESS`` if ``b > a + delta``, else ``INDIFFERENT``."""
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    if a > b + delta:
        return GREATER
    if b > a + delta:
        return LESS
    return INDIFFERENT


def _deltas(delta: Delta, m: int) -> np.ndarray:
    if delta is None:
        return np.zeros(m)
    d = np.asarray(delta, dtype=float)
    if d.ndim == 0:
        d = np.full(m, float(d))
    if d.shape != (m,):
        raise ValueError(f"expected {m} tolerances, got {d.shape[0]}")
    if np.any(d < 0):
        raise ValueError("tolerances must be nonnegative")
    return d


def relate(a: Sequence[float], b: Sequence[float], delta: Delta = None) -> Relation:
    """Relation of agent ``a`` to agent ``b`` given their metric vectors."""
    if len(a) != len(b):
        raise ValueError(f"metric vectors differ in length: {len(a)} vs {len(b)}")
    d = _deltas(delta, len(a))
    signs = {compare_metric(float(x), float(y), float(t)) for x, y, t in zip(a, b, d)}
    if GREATER in signs and LESS in signs:
        return Relation.INCOMPARABLE
    if GREATER in signs:
        return Relation.BETTER
    if LESS in signs:
        return Relation.WORSE
    return Relation.INDIFFERENT


def dominance(a: Sequence[float], b: Sequence[float]) -> bool:
    """``a >= b`` on every metric."""
    if len(a) != len(b):
        raise ValueError(f"metric vectors differ in length: {len(a)} vs {len(b)}")
    return all(x >= y for x, y in zip(a, b))


_ALPHA = {
    Relation.BETTER: 1.0,
    Relation.WORSE: 0.0,
    Relation.INDIFFERENT: 0.5,
    Relation.INCOMPARABLE: 0.5,
}


@dataclass
class PreferenceMatrix:
    """``alpha[i, j]`` is 1 if agent i beats j, 0 if it loses, 0.5 otherwise."""

    alpha: np.ndarray
    agent_ids: list[str]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["agent_id", *self.agent_ids])
        for agent_id, row in zip(self.agent_ids, self.alpha):
            writer.writerow([agent_id, *(f"{v:g}" for v in row)])
        return buf.getvalue()


def relation_matrix(table: MetricTable, delta: Delta = None) -> list[list[Relation]]:
    K = table.K
    d = _deltas(delta, len(table.metric_names))
    rel = [[Relation.INDIFFERENT] * K for _ in range(K)]
    for i in range(K):
        for j in range(i + 1, K):
            r = relate(table.values[i], table.values[j], d)
            rel[i][j] = r
            rel[j][i] = r.inverse()
    return rel


def preference_matrix(table: MetricTable, delta: Delta = None) -> PreferenceMatrix:
    if table.K < 2:
        raise ValueError("need at least two agents")
    rel = relation_matrix(table, delta)
    alpha = np.array([[_ALPHA[r] for r in row] for row in rel])
    np.fill_diagonal(alpha, 1.0)
    return PreferenceMatrix(alpha, list(table.agent_ids))


def classify_pair(real: Relation, proxy: Relation) -> str:
    if real is proxy:
        return "ok"
    if proxy is Relation.INDIFFERENT:
        return "specificity"
    if real is Relation.INDIFFERENT:
        return "overconfidence"
    return "error_type_1"


@dataclass
class PairError:
    i: int
    j: int
    real: Relation
    proxy: Relation
    error_class: str


@dataclass
class ErrorTaxonomy:
    counts: dict[str, int] = field(default_factory=lambda: dict.fromkeys(ERROR_CLASSES, 0))
    per_pair: list[PairError] = field(default_factory=list)
    agent_ids: list[str] = field(default_factory=list)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def to_dict(self) -> dict:
        return {
            "counts": dict(self.counts),
            "per_pair": [
                {
                    "i": p.i,
                    "j": p.j,
                    "agent_i": self.agent_ids[p.i] if self.agent_ids else None,
                    "agent_j": self.agent_ids[p.j] if self.agent_ids else None,
                    "real": p.real.name.lower(),
                    "proxy": p.proxy.name.lower(),
                    "class": p.error_class,
                }
                for p in self.per_pair
            ],
        }

    def to_json(self, indent: Optional[int] = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)


def _check_same_agents(proxy: MetricTable, target: MetricTable) -> None:
    if list(proxy.agent_ids) != list(target.agent_ids):
        raise ValueError("proxy and target tables must list the same agents in the same order")
    if list(proxy.metric_names) != list(target.metric_names):
        raise ValueError("proxy and target tables must have the same metrics")


def classify_errors(proxy: MetricTable, target: MetricTable, delta: Delta = None) -> ErrorTaxonomy:
    """Classify the proxy's guess for every unordered agent pair against the target."""
    _check_same_agents(proxy, target)
    real = relation_matrix(target, delta)
    guess = relation_matrix(proxy, delta)
    out = ErrorTaxonomy(agent_ids=list(target.agent_ids))
    for i in range(target.K):
        for j in range(i + 1, target.K):
            cls = classify_pair(real[i][j], guess[i][j])
            out.counts[cls] += 1
            out.per_pair.append(PairError(i, j, real[i][j], guess[i][j], cls))
    return out
