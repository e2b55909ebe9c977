"""Behavior cloning and the proxy learning-value protocol.

The learner is a linear policy over ``[z_y, z_phi, prev_z_y, prev_z_phi, 1]``
fitted by ridge regression to expert commands.  Fine-tuning anchors the
weights to a pretrained solution instead of to zero, which is the linear
analogue of initializing a network from proxy-trained weights.  Training
from scratch is the same solve anchored at the zero vector.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .domain import (
    EPISODE_STEPS,
    DomainFamily,
    DomainParams,
    Dataset,
    Observation,
    episode_instance,
    generate_dataset,
    rollout,
)
from .metrics import metric_penalized_score, parallel_map
from .zoo import make_expert

N_FEATURES = 5
DEFAULT_SIZE_GRID = (0, 25, 50, 100, 250, 500, 1000, 2000, 4000, 9000)


class ConvergenceError(RuntimeError):
    pass


def features(data: Dataset) -> np.ndarray:
    return np.column_stack([data.z, data.prev_z, np.ones(len(data))])


@dataclass
class LinearPolicyModel:
    weights: np.ndarray
    ridge_lambda: float

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape != (N_FEATURES,) or not np.all(np.isfinite(self.weights)):
            raise ValueError(f"expected {N_FEATURES} finite weights, got {self.weights!r}")

    def predict(self, X: np.ndarray) -> np.ndarray:
        return X @ self.weights

    def agent(self, agent_id: str = "bc") -> "LinearPolicyAgent":
        return LinearPolicyAgent(agent_id, self.weights.copy())


def zero_model(ridge_lambda: float = 0.0) -> LinearPolicyModel:
    return LinearPolicyModel(np.zeros(N_FEATURES), ridge_lambda)


@dataclass
class LinearPolicyAgent:
    id: str
    weights: np.ndarray
    privileged: bool = False
    _prev: Optional[Observation] = field(default=None, init=False, repr=False)

    def reset(self, seed: int) -> None:
        self._prev = None

    def act(self, obs: Observation) -> float:
        prev = obs if self._prev is None else self._prev
        self._prev = obs
        w = self.weights
        return float(w[0] * obs.z_y + w[1] * obs.z_phi + w[2] * prev.z_y + w[3] * prev.z_phi + w[4])


def _anchored_solve(X: np.ndarray, u: np.ndarray, lam: float, anchor: np.ndarray) -> np.ndarray:
    A = X.T @ X + lam * np.eye(X.shape[1])
    b = X.T @ u + lam * anchor
    try:
        w = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"normal matrix is singular (lambda={lam})") from exc
    if np.linalg.cond(A) > 1.0 / np.finfo(float).eps:
        raise np.linalg.LinAlgError(f"normal matrix is numerically singular (lambda={lam})")
    return w


def train_bc(data: Dataset, ridge_lambda: float = 10.0, mirror: bool = False) -> LinearPolicyModel:
    """Closed-form ridge regression from observation features to expert commands.

    ``mirror`` adds the reflected copy of every sample, which forces a zero
    intercept for symmetric lanes.
    """
    if len(data) < N_FEATURES:
        raise ValueError(f"need at least {N_FEATURES} samples, got {len(data)}")
    if ridge_lambda < 0:
        raise ValueError("ridge_lambda must be nonnegative")
    if mirror:
        data = data.mirrored()
    w = _anchored_solve(features(data), data.commands, ridge_lambda, np.zeros(N_FEATURES))
    return LinearPolicyModel(w, ridge_lambda)


def finetune_bc(pretrained: LinearPolicyModel, target_data: Optional[Dataset],
                anchor_lambda: float = 10.0, mirror: bool = False) -> LinearPolicyModel:
    """Minimize ``|Xw - u|^2 + anchor_lambda * |w - w_pre|^2``."""
    if anchor_lambda <= 0:
        raise ValueError("anchor_lambda must be positive")
    if target_data is None or len(target_data) == 0:
        return LinearPolicyModel(pretrained.weights.copy(), pretrained.ridge_lambda)
    if mirror:
        target_data = target_data.mirrored()
    w = _anchored_solve(features(target_data), target_data.commands, anchor_lambda, pretrained.weights)
    return LinearPolicyModel(w, anchor_lambda)


@dataclass
class LearningCurve:
    points: list[tuple[int, float]]
    converged_performance: float
    converged_size: Optional[int]

    @property
    def sizes(self) -> list[int]:
        return [s for s, _ in self.points]

    @property
    def performance(self) -> list[float]:
        return [p for _, p in self.points]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["size", "performance"])
        for size, perf in self.points:
            writer.writerow([size, repr(float(perf))])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "points": [[s, p] for s, p in self.points],
            "converged_performance": self.converged_performance,
            "converged_size": self.converged_size,
        }


@dataclass
class PLVWeights:
    eta_on: float = 1.0
    eta_off: float = 0.01

    def __post_init__(self):
        if self.eta_on < 0 or self.eta_off < 0:
            raise ValueError("weights must be nonnegative")
        if self.eta_on == 0 and self.eta_off == 0:
            raise ValueError("eta_on and eta_off cannot both be zero")


def weighted_plv(on_target: int, on_transfer: int, off_target: int, off_transfer: int,
                 w: PLVWeights = PLVWeights()) -> float:
    if min(on_target, on_transfer, off_target, off_transfer) < 0:
        raise ValueError("counts must be nonnegative")
    return w.eta_on * (on_target - on_transfer) + w.eta_off * (off_target - off_transfer)


def percent_reduction(d_target: int, d_transfer: int) -> float:
    return 100.0 * (d_target - d_transfer) / d_target


@dataclass
class PLVConfig:
    size_grid: tuple[int, ...] = DEFAULT_SIZE_GRID
    n_pretrain: int = 9000
    eval_trials: int = 5
    eval_seeds: Optional[tuple[int, ...]] = None
    target_data_seed: int = 1000
    proxy_data_seed: int = 2000
    ridge_lambda: float = 10.0
    anchor_lambda: float = 10.0
    tau: float = 1.0
    eps_conv: float = 0.02
    expert_kp: float = 8.0
    expert_kd: float = 4.0
    explore_noise: float = 0.3
    mirror: bool = True
    shuffle: bool = True
    weights: PLVWeights = field(default_factory=PLVWeights)
    max_steps: int = EPISODE_STEPS

    def __post_init__(self):
        grid = list(self.size_grid)
        if any(b <= a for a, b in zip(grid, grid[1:])) or not grid or grid[0] < 0:
            raise ValueError("size_grid must be nonnegative and strictly increasing")
        if len(grid) < 2:
            raise ValueError("size_grid needs at least two points to detect convergence")
        if self.eval_trials < 1:
            raise ValueError("eval_trials must be >= 1")

    def seeds_for_eval(self) -> list[int]:
        if self.eval_seeds is not None:
            return list(self.eval_seeds)[: self.eval_trials]
        return list(range(self.eval_trials))


def evaluate_policy(model: LinearPolicyModel, params: DomainParams, seeds: Sequence[int],
                    max_steps: int = EPISODE_STEPS) -> float:
    agent = model.agent()
    scores = [metric_penalized_score(rollout(episode_instance(params, s), agent, max_steps)) for s in seeds]
    return float(np.mean(np.sort(scores)))


def plateau(points: Sequence[tuple[int, float]], eps_conv: float) -> float:
    """Mean of the last two grid performances, or raise if they still differ by ``eps_conv``."""
    a, b = points[-2][1], points[-1][1]
    scale = max(abs(a), abs(b))
    if scale == 0.0 or abs(b - a) / scale >= eps_conv:
        raise ConvergenceError(f"no convergence on grid: last two performances {a:.4g}, {b:.4g}")
    return 0.5 * (a + b)


def first_size_reaching(points: Sequence[tuple[int, float]], level: float) -> Optional[int]:
    for size, perf in points:
        if perf >= level:
            return size
    return None


def _curve_point(job) -> float:
    size, pretrained, target_data, params, cfg, seeds = job
    subset = target_data.head(size) if size > 0 else None
    if pretrained is None:
        model = train_bc(subset, cfg.ridge_lambda, cfg.mirror) if size >= N_FEATURES else zero_model(cfg.ridge_lambda)
    else:
        model = finetune_bc(pretrained, subset, cfg.anchor_lambda, cfg.mirror)
    return evaluate_policy(model, params, seeds, cfg.max_steps)


def learning_curve(target_params: DomainParams, target_data: Dataset, pretrained: Optional[LinearPolicyModel],
                   cfg: PLVConfig, reference: Optional[float] = None, workers: int = 1) -> LearningCurve:
    """Performance on the target after training on the first ``size`` target samples.

    Without ``reference`` the curve must plateau and converges to its own
    plateau; with one, convergence means reaching ``reference - tau``.
    """
    if cfg.size_grid[-1] > len(target_data):
        raise ValueError(f"largest grid size {cfg.size_grid[-1]} exceeds {len(target_data)} target samples")
    seeds = cfg.seeds_for_eval()
    jobs = [(size, pretrained, target_data, target_params, cfg, seeds) for size in cfg.size_grid]
    perf = parallel_map(_curve_point, jobs, workers)
    points = list(zip(cfg.size_grid, perf))
    level = plateau(points, cfg.eps_conv) if reference is None else reference
    return LearningCurve(points, level, first_size_reaching(points, level - cfg.tau))


@dataclass
class PLVReport:
    d_target: int
    d_proxy_to_target: int
    plv: int
    percent_reduction: float
    zero_shot_score: float
    weighted_plv: float
    on_policy_target: int
    on_policy_transfer: int
    transfer_converged: bool
    curve_target: LearningCurve
    curve_transfer: LearningCurve
    pretrained_weights: list[float]

    def to_dict(self) -> dict:
        out = asdict(self)
        out["curve_target"] = self.curve_target.to_dict()
        out["curve_transfer"] = self.curve_transfer.to_dict()
        return out

    def to_json(self, indent: Optional[int] = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)


def _on_policy_trials(curve: LearningCurve, size: int, eval_trials: int) -> int:
    return eval_trials * (curve.sizes.index(size) + 1)


def plv(target_params: DomainParams, proxy: Union[DomainParams, DomainFamily],
        cfg: Optional[PLVConfig] = None, workers: int = 1) -> PLVReport:
    """Target samples saved by pretraining on proxy data before fine-tuning.

    Both curves are scored against the scratch curve's converged performance.
    If the transfer curve never gets within ``tau`` of it, the largest grid
    size is charged and ``transfer_converged`` is false.
    """
    cfg = cfg or PLVConfig()
    n_target = cfg.size_grid[-1]
    target_data = expert_dataset(target_params, n_target, cfg.target_data_seed, cfg)
    proxy_data = expert_dataset(proxy, cfg.n_pretrain, cfg.proxy_data_seed, cfg)
    pretrained = train_bc(proxy_data, cfg.ridge_lambda, cfg.mirror)

    scratch = learning_curve(target_params, target_data, None, cfg, workers=workers)
    transfer = learning_curve(target_params, target_data, pretrained, cfg,
                              reference=scratch.converged_performance, workers=workers)
    d_target = scratch.converged_size
    converged = transfer.converged_size is not None
    d_transfer = transfer.converged_size if converged else cfg.size_grid[-1]
    if d_target == 0:
        raise ConvergenceError("scratch learner is already converged with no target data; PLV is undefined")

    on_target = _on_policy_trials(scratch, d_target, cfg.eval_trials)
    on_transfer = _on_policy_trials(transfer, d_transfer, cfg.eval_trials)
    return PLVReport(
        d_target=d_target,
        d_proxy_to_target=d_transfer,
        plv=d_target - d_transfer,
        percent_reduction=percent_reduction(d_target, d_transfer),
        zero_shot_score=(transfer.points[0][1] if transfer.sizes[0] == 0
                         else evaluate_policy(pretrained, target_params, cfg.seeds_for_eval(), cfg.max_steps)),
        weighted_plv=weighted_plv(on_target, on_transfer, d_target, d_transfer, cfg.weights),
        on_policy_target=on_target,
        on_policy_transfer=on_transfer,
        transfer_converged=converged,
        curve_target=scratch,
        curve_transfer=transfer,
        pretrained_weights=[float(w) for w in pretrained.weights],
    )


def expert_dataset(source: Union[DomainParams, DomainFamily], n: int, first_seed: int, cfg: PLVConfig) -> Dataset:
    """Expert demonstrations for the protocol, drawn from episodes ``first_seed, first_seed + 1, ...``."""
    return generate_dataset(
        source, make_expert(cfg.expert_kp, cfg.expert_kd), n,
        range(first_seed, first_seed + 1000), cfg.max_steps,
        command_noise=cfg.explore_noise,
        shuffle_seed=first_seed if cfg.shuffle else None,
    )
