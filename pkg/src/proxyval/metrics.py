"""Task metrics over trajectories and multi-trial aggregation into tables."""
from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence, TypeVar

import numpy as np

from .domain import (
    DT,
    EPISODE_SECONDS,
    EPISODE_STEPS,
    LANE_HALF_WIDTH,
    OFF_ROAD,
    ONE_WHEEL_OUT,
    ConfigError,
    DomainParams,
    Task,
    Trajectory,
    episode_instance,
    rollout,
)

AGGREGATORS = ("mean", "median")
DEFAULT_TRIALS = 5

T = TypeVar("T")
R = TypeVar("R")


def metric_distance(traj: Trajectory) -> float:
    """Along-track progress in meters, counted only while on the road."""
    if len(traj) < 2:
        return 0.0
    ds = np.diff(traj.s)
    on_road = np.abs(traj.y[1:]) <= OFF_ROAD
    return max(0.0, float(np.sum(ds[on_road])))


def metric_survival(traj: Trajectory) -> float:
    """Elapsed time at the end of the episode, capped at 60 s."""
    return min(float(traj.t[-1]), EPISODE_SECONDS)


def metric_penalized_score(traj: Trajectory) -> float:
    """Survival minus 1 s per second with one wheel out and 2 s per second with both out."""
    y = np.abs(traj.y[1:EPISODE_STEPS + 1])
    one_out = np.count_nonzero((y > ONE_WHEEL_OUT) & (y <= LANE_HALF_WIDTH)) * DT
    both_out = np.count_nonzero(y > LANE_HALF_WIDTH) * DT
    return metric_survival(traj) - one_out - 2.0 * both_out


METRICS: dict[str, Callable[[Trajectory], float]] = {
    "distance": metric_distance,
    "survival": metric_survival,
    "penalized_score": metric_penalized_score,
}
DEFAULT_METRICS = ("distance", "survival")


def make_task(names: Sequence[str] = DEFAULT_METRICS) -> Task:
    unknown = [n for n in names if n not in METRICS]
    if unknown:
        raise ConfigError(f"unknown metric(s): {', '.join(unknown)}; known: {', '.join(METRICS)}")
    return Task(tuple((n, METRICS[n]) for n in names))


@dataclass
class MetricTable:
    """Per-agent task scores in one domain, aggregated over trials.

    ``values[k, i]`` is metric ``i`` for agent ``k``; higher is better for every
    shipped metric.
    """

    agent_ids: list[str]
    metric_names: list[str]
    values: np.ndarray
    trials: int = 1
    aggregator: str = "mean"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.agent_ids), len(self.metric_names)):
            raise ValueError(
                f"values shape {self.values.shape} does not match "
                f"{len(self.agent_ids)} agents x {len(self.metric_names)} metrics"
            )
        if len(set(self.agent_ids)) != len(self.agent_ids):
            raise ValueError("agent ids must be unique")

    @property
    def K(self) -> int:
        return len(self.agent_ids)

    def row(self, agent_id: str) -> np.ndarray:
        return self.values[self.agent_ids.index(agent_id)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["agent_id", *self.metric_names, "trials", "aggregator"])
        for agent_id, row in zip(self.agent_ids, self.values):
            writer.writerow([agent_id, *(repr(float(v)) for v in row), self.trials, self.aggregator])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "MetricTable":
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], rows[1:]
        if header[0] != "agent_id" or header[-2:] != ["trials", "aggregator"]:
            raise ValueError("not a MetricTable CSV")
        names = header[1:-2]
        return cls(
            agent_ids=[r[0] for r in body],
            metric_names=names,
            values=np.array([[float(v) for v in r[1:-2]] for r in body]).reshape(len(body), len(names)),
            trials=int(body[0][-2]) if body else 1,
            aggregator=body[0][-1] if body else "mean",
        )

    def to_dict(self) -> dict:
        return {
            "agent_ids": list(self.agent_ids),
            "metric_names": list(self.metric_names),
            "values": self.values.tolist(),
            "trials": self.trials,
            "aggregator": self.aggregator,
        }


def aggregate(samples: np.ndarray, aggregator: str = "mean") -> np.ndarray:
    """Reduce per-trial scores (trials along axis 0) to one value per column.

    Columns are sorted first so the result is bit-identical under any
    permutation of the trials.
    """
    samples = np.sort(np.asarray(samples, dtype=float), axis=0)
    if aggregator == "mean":
        return np.mean(samples, axis=0)
    if aggregator == "median":
        return np.median(samples, axis=0)
    raise ConfigError(f"unknown aggregator {aggregator!r}; expected one of {AGGREGATORS}")


def parallel_map(fn: Callable[[T], R], items: Iterable[T], workers: int = 1) -> list[R]:
    """Ordered map; results never depend on ``workers``."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


def trial_seeds(trials: int, seeds: Optional[Sequence[int]] = None) -> list[int]:
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if seeds is None:
        return list(range(trials))
    seeds = list(seeds)
    if len(seeds) < trials:
        raise ValueError(f"need {trials} seeds, got {len(seeds)}")
    if len(set(seeds[:trials])) != trials:
        raise ValueError("trial seeds must be distinct")
    return seeds[:trials]


def _score_one(job) -> np.ndarray:
    params, agent, task, seed, max_steps = job
    return task.evaluate(rollout(episode_instance(params, seed), agent, max_steps))


def evaluate_trials(params: DomainParams, agents: Sequence, task: Task, seeds: Sequence[int],
                    max_steps: int = EPISODE_STEPS, workers: int = 1) -> np.ndarray:
    """Raw scores with shape ``(agents, trials, metrics)``."""
    jobs = [(params, agent, task, seed, max_steps) for agent in agents for seed in seeds]
    scores = parallel_map(_score_one, jobs, workers)
    return np.array(scores, dtype=float).reshape(len(agents), len(seeds), len(task.names))


def evaluate_agents(params: DomainParams, agents: Sequence, task: Task, trials: int = DEFAULT_TRIALS,
                    seeds: Optional[Sequence[int]] = None, aggregator: str = "mean",
                    max_steps: int = EPISODE_STEPS, workers: int = 1) -> MetricTable:
    """Run ``trials`` episodes per agent and aggregate each metric.

    Trial ``j`` uses episode seed ``seeds[j]`` for every agent, so agents and
    domains are compared from the same start states.
    """
    if aggregator not in AGGREGATORS:
        raise ConfigError(f"unknown aggregator {aggregator!r}; expected one of {AGGREGATORS}")
    seeds = trial_seeds(trials, seeds)
    raw = evaluate_trials(params, agents, task, seeds, max_steps, workers)
    values = np.array([aggregate(raw[k], aggregator) for k in range(len(agents))])
    return MetricTable([a.id for a in agents], task.names, values.reshape(len(agents), len(task.names)),
                       trials=trials, aggregator=aggregator)
