"""Measure how useful a proxy domain is for evaluating and training agents for a target domain."""

__version__ = "0.1.0"

from .domain import (
    ConfigError,
    DomainFamily,
    DomainInstance,
    DomainParams,
    ExpertError,
    Observation,
    Task,
    Trajectory,
    generate_dataset,
    rollout,
    rollout_open_loop,
)
from .learning import ConvergenceError, PLVConfig, PLVReport, plv, train_bc, finetune_bc
from .metrics import MetricTable, evaluate_agents, make_task
from .optimize import BudgetModel, SweepSpec, budget_accuracy_curve, coordinate_search, n_trials, sweep
from .predictivity import pod, ppv, predictivity_report, prpv, srcc
from .preference import Relation, classify_errors, preference_matrix, relate
from .zoo import TARGET_V1, make_expert, make_zoo
