"""Command-line entry point: JSON config in, CSV/JSON reports out.

Exit codes: 0 success, 1 usage error, 2 config error, 3 runtime error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

import jsonschema

from . import __version__
from .domain import PARAM_FIELDS, ConfigError, DomainFamily, DomainParams, ExpertError
from .learning import ConvergenceError, PLVConfig, PLVWeights, plv
from .metrics import DEFAULT_METRICS, DEFAULT_TRIALS, METRICS, evaluate_agents, make_task
from .optimize import OBJECTIVES, BudgetModel, SweepSpec, budget_accuracy_curve, plv_sweep, sweep
from .predictivity import predictivity_report
from .preference import classify_errors
from .zoo import TARGETS, ZOOS, target_by_name, zoo_by_name

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3

_INT_PARAMS = {"delay_steps", "blur_window", "render_interval", "noise_seed"}

PARAMS_SCHEMA = {
    "type": "object",
    "properties": {name: {"type": "integer" if name in _INT_PARAMS else "number"} for name in PARAM_FIELDS},
    "additionalProperties": False,
}
DOMAIN_SCHEMA = {"oneOf": [{"type": "string", "enum": sorted(TARGETS)}, PARAMS_SCHEMA]}
DELTA_SCHEMA = {"oneOf": [{"type": "number", "minimum": 0},
                          {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1}]}

CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "target": DOMAIN_SCHEMA,
        "proxy": DOMAIN_SCHEMA,
        "proxy_family": {
            "type": "object",
            "properties": {
                "base": DOMAIN_SCHEMA,
                "choices": {"type": "object", "additionalProperties": {"type": "array", "minItems": 1}},
            },
            "required": ["base", "choices"],
            "additionalProperties": False,
        },
        "sweep": {
            "type": "object",
            "properties": {
                "param": {"type": "string", "enum": list(PARAM_FIELDS)},
                "values": {"type": "array", "items": {"type": "number"}, "minItems": 1},
                "base": DOMAIN_SCHEMA,
            },
            "required": ["param", "values"],
            "additionalProperties": False,
        },
        "objective": {"type": "string", "enum": list(OBJECTIVES)},
        "zoo": {"type": "string", "enum": sorted(ZOOS)},
        "zoo_seed": {"type": "integer", "minimum": 0},
        "task": {"type": "array", "items": {"type": "string", "enum": list(METRICS)}, "minItems": 1},
        "trials": {"type": "integer", "minimum": 1},
        "seeds": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
        "aggregator": {"type": "string", "enum": ["mean", "median"]},
        "delta": DELTA_SCHEMA,
        "beta": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
        "expert": {
            "type": "object",
            "properties": {"kp": {"type": "number"}, "kd": {"type": "number"}},
            "additionalProperties": False,
        },
        "plv": {
            "type": "object",
            "properties": {
                "size_grid": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 2},
                "n_pretrain": {"type": "integer", "minimum": 5},
                "eval_trials": {"type": "integer", "minimum": 1},
                "eval_seeds": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
                "target_data_seed": {"type": "integer", "minimum": 0},
                "proxy_data_seed": {"type": "integer", "minimum": 0},
                "ridge_lambda": {"type": "number", "minimum": 0},
                "anchor_lambda": {"type": "number", "minimum": 0},
                "tau": {"type": "number", "minimum": 0},
                "eps_conv": {"type": "number", "exclusiveMinimum": 0},
                "explore_noise": {"type": "number", "minimum": 0},
                "mirror": {"type": "boolean"},
                "shuffle": {"type": "boolean"},
                "eta_on": {"type": "number", "minimum": 0},
                "eta_off": {"type": "number", "minimum": 0},
                "max_steps": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
        "budget": {
            "type": "object",
            "properties": {
                "time_budget": {"type": "number", "exclusiveMinimum": 0},
                "c1": {"type": "number", "exclusiveMinimum": 0},
                "c2": {"type": "number", "exclusiveMinimum": -1},
                "episode_sim_length": {"type": "number", "exclusiveMinimum": 0},
                "d_values": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
                "saturation_trials": {"type": "integer", "minimum": 1},
            },
            "required": ["time_budget"],
            "additionalProperties": False,
        },
    },
    "required": ["target"],
    "additionalProperties": False,
}

_VALIDATOR = jsonschema.Draft7Validator(CONFIG_SCHEMA)

_REQUIRED = {
    "report": ("proxy",),
    "classify": ("proxy", "delta"),
    "sweep": ("sweep",),
    "plv": ("expert",),
    "budget": ("budget",),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def load_config(path: str, command: str) -> dict:
    """Parse and validate a config file; any problem raises ``ConfigError``."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from exc
    err = jsonschema.exceptions.best_match(_VALIDATOR.iter_errors(cfg))
    if err is not None:
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigError(f"invalid config at {where}: {err.message}")
    missing = [k for k in _REQUIRED[command] if k not in cfg]
    if command == "plv" and "proxy" not in cfg and "proxy_family" not in cfg:
        missing.append("proxy")
    if missing:
        raise ConfigError(f"'{command}' needs config key(s): {', '.join(missing)}")
    return cfg


def domain_from(spec) -> DomainParams:
    return target_by_name(spec) if isinstance(spec, str) else DomainParams.from_dict(spec)


class _Experiment:
    """Resolved common settings of a validated config."""

    def __init__(self, cfg: dict):
        self.cfg = cfg
        self.target = domain_from(cfg["target"])
        self.zoo = zoo_by_name(cfg.get("zoo", "zoo10"), cfg.get("zoo_seed", 0))
        self.task = make_task(cfg.get("task", DEFAULT_METRICS))
        self.trials = cfg.get("trials", DEFAULT_TRIALS)
        self.seeds = cfg.get("seeds")
        self.aggregator = cfg.get("aggregator", "mean")
        self.delta = cfg.get("delta")
        self.beta = cfg.get("beta")
        m = len(self.task.names)
        if isinstance(self.delta, list) and len(self.delta) != m:
            raise ConfigError(f"delta has {len(self.delta)} entries but the task has {m} metrics")
        if self.beta is not None and len(self.beta) != m:
            raise ConfigError(f"beta has {len(self.beta)} entries but the task has {m} metrics")
        if self.seeds is not None:
            if len(self.seeds) < self.trials:
                raise ConfigError(f"need {self.trials} seeds, got {len(self.seeds)}")
            if len(set(self.seeds[:self.trials])) != self.trials:
                raise ConfigError("trial seeds must be distinct")


def plv_config(cfg: dict) -> PLVConfig:
    opts = dict(cfg.get("plv", {}))
    expert = cfg["expert"]
    try:
        weights = PLVWeights(opts.pop("eta_on", 1.0), opts.pop("eta_off", 0.01))
    except ValueError as exc:
        raise ConfigError(f"invalid plv weights: {exc}") from exc
    if "size_grid" in opts:
        opts["size_grid"] = tuple(opts["size_grid"])
    if "eval_seeds" in opts:
        opts["eval_seeds"] = tuple(opts["eval_seeds"])
    try:
        return PLVConfig(expert_kp=expert.get("kp", 8.0), expert_kd=expert.get("kd", 4.0), weights=weights, **opts)
    except ValueError as exc:
        raise ConfigError(f"invalid plv settings: {exc}") from exc


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _json(data) -> str:
    return json.dumps(data, indent=2) + "\n"


def cmd_report(cfg: dict, out: Path, fmt: str, workers: int) -> None:
    exp = _Experiment(cfg)
    rep = predictivity_report(domain_from(cfg["proxy"]), exp.target, exp.zoo, exp.task, exp.trials, exp.delta,
                              exp.beta, exp.seeds, exp.aggregator, workers=workers)
    if fmt == "csv":
        rows = ["agent_id,ppv"] + [f"{a},{v!r}" for a, v in zip(rep.target_table.agent_ids, rep.ppv)]
        _write(out, "\n".join(rows) + "\n")
    else:
        _write(out, _json(rep.to_dict()))
    srcc = ", ".join("undefined" if v is None else f"{v:.4f}" for v in rep.srcc)
    print(f"prpv {rep.prpv:g} (normalized {rep.prpv_normalized:.4f}), ppv mean {rep.ppv_mean:.4f}, "
          f"pod {rep.pod:.5f}, srcc [{srcc}]")


def cmd_classify(cfg: dict, out: Path, fmt: str, workers: int) -> None:
    exp = _Experiment(cfg)
    proxy = evaluate_agents(domain_from(cfg["proxy"]), exp.zoo, exp.task, exp.trials, exp.seeds, exp.aggregator,
                            workers=workers)
    target = evaluate_agents(exp.target, exp.zoo, exp.task, exp.trials, exp.seeds, exp.aggregator, workers=workers)
    tax = classify_errors(proxy, target, exp.delta)
    _write(out, _json(tax.to_dict()))
    print(", ".join(f"{k} {v}" for k, v in tax.counts.items()) + f" (pairs {tax.total})")


def cmd_sweep(cfg: dict, out: Path, fmt: str, workers: int, objective: Optional[str]) -> None:
    exp = _Experiment(cfg)
    objective = objective or cfg.get("objective", "prpv")
    spec_cfg = cfg["sweep"]
    base = domain_from(spec_cfg["base"]) if "base" in spec_cfg else exp.target
    spec = SweepSpec(spec_cfg["param"], tuple(spec_cfg["values"]), base, objective)
    if objective == "plv":
        if "expert" not in cfg:
            raise ConfigError("a plv sweep needs config key: expert")
        res = plv_sweep(spec, exp.target, plv_config(cfg), workers=workers)
    else:
        res = sweep(spec, exp.target, exp.zoo, exp.task, exp.trials, exp.delta, exp.beta, exp.seeds,
                    exp.aggregator, workers=workers)
    _write(out, res.to_csv() if fmt == "csv" else _json(res.to_dict()))
    print(f"argbest {res.param_name} = {res.argbest!r} ({objective} {res.residual!r})")


def cmd_plv(cfg: dict, out: Path, fmt: str, workers: int) -> None:
    target = domain_from(cfg["target"])
    if "proxy_family" in cfg:
        fam = cfg["proxy_family"]
        proxy = DomainFamily(domain_from(fam["base"]), {k: tuple(v) for k, v in fam["choices"].items()})
    else:
        proxy = domain_from(cfg["proxy"])
    rep = plv(target, proxy, plv_config(cfg), workers=workers)
    _write(out, _json(rep.to_dict()))
    stem = out.with_suffix("")
    _write(stem.with_name(stem.name + "_curve_target.csv"), rep.curve_target.to_csv())
    _write(stem.with_name(stem.name + "_curve_transfer.csv"), rep.curve_transfer.to_csv())
    print(f"d_target {rep.d_target}, d_proxy_to_target {rep.d_proxy_to_target}, plv {rep.plv} "
          f"({rep.percent_reduction:.1f}% reduction), zero-shot score {rep.zero_shot_score:.2f}")


def cmd_budget(cfg: dict, out: Path, fmt: str, workers: int) -> None:
    exp = _Experiment(cfg)
    b = cfg["budget"]
    model = BudgetModel(b["time_budget"], b.get("c1", 50.0), b.get("c2", 0.0), b.get("episode_sim_length", 60.0))
    sat = b.get("saturation_trials", 10)
    if exp.seeds is not None and len(exp.seeds) < sat:
        raise ConfigError(f"need {sat} seeds for saturation, got {len(exp.seeds)}")
    curve = budget_accuracy_curve(model, b.get("d_values", [1, 2, 4, 8]), exp.zoo, exp.task, exp.target,
                                  saturation_trials=sat, delta=exp.delta, seeds=exp.seeds,
                                  aggregator=exp.aggregator, workers=workers)
    _write(out, curve.to_csv() if fmt == "csv" else _json(curve.to_dict()))
    for r in curve.rows:
        acc = "undefined" if r.ranking_accuracy is None else f"{r.ranking_accuracy:.4f}"
        print(f"d={r.d}: {r.n_trials} trials affordable, {r.trials_used} used, accuracy {acc}")
    print(f"d* = {curve.d_star}")


_DEFAULT_FORMAT = {"report": "json", "classify": "json", "plv": "json", "sweep": "csv", "budget": "csv"}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="proxyval", description="Evaluate how well a proxy domain stands in for a target.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "report": "predictivity scores of one proxy",
        "sweep": "sweep one proxy parameter over a grid",
        "plv": "proxy learning value of one proxy",
        "classify": "classify proxy ranking errors",
        "budget": "ranking accuracy under a wall-clock budget",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="experiment config (JSON)")
        p.add_argument("--out", required=True, help="output file")
        p.add_argument("--threads", type=int, default=1, help="worker processes (output does not depend on it)")
        p.add_argument("--format", choices=("csv", "json"), default=None)
        if name == "sweep":
            p.add_argument("--objective", choices=OBJECTIVES, default=None)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    fmt = args.format or _DEFAULT_FORMAT[args.command]
    if args.command in ("classify", "plv") and fmt != "json":
        parser.error(f"{args.command} writes JSON only")
    out = Path(args.out)
    try:
        cfg = load_config(args.config, args.command)
        if args.command == "sweep":
            cmd_sweep(cfg, out, fmt, args.threads, args.objective)
        else:
            globals()[f"cmd_{args.command}"](cfg, out, fmt, args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConvergenceError, ExpertError, RuntimeError, ValueError, ArithmeticError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
