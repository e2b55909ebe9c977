"""The ten acceptance criteria, each reported as one PASS/FAIL line in the summary.

Artifacts that the criteria ask to be archived land in ``artifacts/acceptance``.
"""
import functools
import json
import time
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from helpers import ACCEPTANCE, table
from oracles import brute_prpv
from proxyval.cli import main
from proxyval.domain import DomainParams
from proxyval.learning import PLVConfig, percent_reduction, plv
from proxyval.metrics import evaluate_agents, make_task
from proxyval.optimize import BudgetModel, SweepSpec, budget_accuracy_curve, n_trials, sweep
from proxyval.predictivity import pod_between, ppv, prpv, srcc
from proxyval.preference import GREATER, INDIFFERENT, LESS, Relation, classify_errors, relate
from proxyval.zoo import TARGET_V1, make_zoo

ARTIFACTS = Path(__file__).resolve().parents[1] / "artifacts" / "acceptance"
TASK = make_task()
TRIM_VALUES = (-0.3, -0.2, -0.1, 0.0, 0.1, 0.2, 0.3)
CAM60 = TARGET_V1.replace(camera_angle_deg=60.0, noise_seed=0)
# steep camera plus weaker anchoring: poor policy out of the box, cheap to fix
ZERO_SHOT_PROXY = TARGET_V1.replace(camera_angle_deg=400.0, noise_seed=0)
ZERO_SHOT_CFG = PLVConfig(anchor_lambda=1.0)


def criterion(n, limit_s):
    """Record PASS/FAIL for criterion ``n``; the body returns ``(checks, detail)``."""
    def wrap(fn):
        @functools.wraps(fn)
        def run(*args, **kwargs):
            ACCEPTANCE[n] = (False, "raised before finishing")
            t0 = time.perf_counter()
            checks, detail = fn(*args, **kwargs)
            elapsed = time.perf_counter() - t0
            checks = dict(checks, **{f"runtime < {limit_s}s": elapsed < limit_s})
            failed = [k for k, ok in checks.items() if not ok]
            ACCEPTANCE[n] = (not failed, f"{detail}; {elapsed:.1f}s" + (f"; failed: {failed}" if failed else ""))
            assert not failed, failed
        return run
    return wrap


def archive(name: str, text: str) -> Path:
    ARTIFACTS.mkdir(parents=True, exist_ok=True)
    path = ARTIFACTS / name
    path.write_text(text)
    return path


@criterion(1, 10)
def test_1_metric_identities():
    X = evaluate_agents(TARGET_V1, make_zoo(), TASK, trials=3)
    quiet = DomainParams(obs_noise_y=0.0, obs_noise_phi=0.0)
    quiet_target = TARGET_V1.replace(obs_noise_y=0.0, obs_noise_phi=0.0)
    tax = classify_errors(X, X, [0.1, 1.0])
    checks = {
        "prpv(X,X)=0": prpv(X, X) == 0.0,
        "ppv(X,X)=0": bool(np.all(ppv(X, X) == 0.0)),
        "pod self=0": pod_between(quiet, quiet) == 0.0 and pod_between(quiet_target, quiet_target) == 0.0,
        "srcc(X,X)=1": srcc(X, X) == [1.0, 1.0],
        "classify all ok": tax.counts["ok"] == tax.total == 45,
    }
    return checks, "identities exact on a 10-agent table"


@criterion(2, 10)
def test_2_prpv_matches_brute_force():
    rng = np.random.default_rng(2)
    mismatches = 0
    for i in range(50):
        K, m = rng.integers(2, 6), rng.integers(1, 4)
        p = rng.integers(0, 4, size=(K, m)).astype(float)
        t = rng.integers(0, 4, size=(K, m)).astype(float)
        delta = [None, 0.0, 0.5, 1.0][i % 4]
        mismatches += prpv(table(p), table(t), delta) != brute_prpv(p, t, delta)
    return {"exact match": mismatches == 0}, f"50 tables, {mismatches} mismatches"


@criterion(3, 30)
def test_3_prpv_bounds_symmetry_invariance():
    seen = []
    tables = st.integers(2, 6).flatmap(lambda K: st.integers(1, 3).flatmap(lambda m: st.tuples(
        arrays(float, (K, m), elements=st.integers(0, 5).map(float)),
        arrays(float, (K, m), elements=st.integers(0, 5).map(float)))))

    @settings(max_examples=250, deadline=None, database=None)
    @given(tables)
    def check(pair):
        p, t = pair
        K = len(p)
        v = prpv(table(p), table(t), 0.0)
        assert 0.0 <= v <= K * (K - 1)
        assert v == prpv(table(t), table(p), 0.0)
        f = lambda x: np.exp(x / 2.0) + x ** 3  # noqa: E731
        assert v == prpv(table(f(p)), table(f(t)), 0.0)
        seen.append(1)

    check()
    return {">= 200 tables": len(seen) >= 200}, f"{len(seen)} random tables"


NINE_CASES = {
    (GREATER, GREATER): Relation.BETTER, (GREATER, INDIFFERENT): Relation.BETTER,
    (GREATER, LESS): Relation.INCOMPARABLE, (INDIFFERENT, GREATER): Relation.BETTER,
    (INDIFFERENT, INDIFFERENT): Relation.INDIFFERENT, (INDIFFERENT, LESS): Relation.WORSE,
    (LESS, GREATER): Relation.INCOMPARABLE, (LESS, INDIFFERENT): Relation.WORSE,
    (LESS, LESS): Relation.WORSE,
}


@criterion(4, 10)
def test_4_preference_relation():
    offset = {GREATER: 2.0, INDIFFERENT: 0.5, LESS: -2.0}
    table_ok = sum(relate([offset[a], offset[b]], [0.0, 0.0], 1.0) is r for (a, b), r in NINE_CASES.items())
    rng = np.random.default_rng(4)
    anti = 0
    for _ in range(1000):
        m = rng.integers(1, 4)
        a, b = rng.integers(-3, 4, m).astype(float), rng.integers(-3, 4, m).astype(float)
        d = rng.choice([0.0, 0.5, 1.0, 2.0])
        anti += relate(a, b, d) is relate(b, a, d).inverse()
    witness = (relate([2.0], [1.0], 1.0) is Relation.INDIFFERENT and relate([1.0], [0.0], 1.0) is Relation.INDIFFERENT
               and relate([2.0], [0.0], 1.0) is Relation.BETTER)
    checks = {"9 cases": table_ok == 9, "antisymmetry": anti == 1000, "intransitivity witness": witness}
    return checks, f"{table_ok}/9 cases, {anti}/1000 antisymmetric pairs"


def adjacency_violations(values, scores) -> int:
    # walk outward from zero on each side; each drop counts once
    by_value = dict(zip(values, scores))
    bad = 0
    for side in (sorted(v for v in values if v >= 0), sorted((v for v in values if v <= 0), reverse=True)):
        seq = [by_value[v] for v in side]
        bad += sum(b < a for a, b in zip(seq, seq[1:]))
    return bad


@criterion(5, 180)
def test_5_trim_sweep():
    spec = SweepSpec("trim", TRIM_VALUES, TARGET_V1.replace(noise_seed=0))
    res = sweep(spec, TARGET_V1, make_zoo(), TASK, trials=5, workers=4)
    archive("trim_sweep.csv", res.to_csv())
    scores = [r.score for r in res.rows]
    bad = adjacency_violations(TRIM_VALUES, scores)
    checks = {"argmin at 0.0": res.argbest == 0.0, "<= 1 adjacency violation": bad <= 1}
    return checks, f"prpv {[int(s) for s in scores]}, argmin {res.argbest}, {bad} violations"


@criterion(6, 5)
def test_6_srcc_ppv_decoupling():
    rng = np.random.default_rng(6)
    worst_srcc, min_max_ppv = 0.0, np.inf
    for _ in range(100):
        t = rng.uniform(0, 60, size=(10, 2))
        p = rng.uniform(0.5, 2.0, size=2) * t + rng.uniform(1.0, 20.0, size=2)
        s = srcc(table(p), table(t))
        worst_srcc = max(worst_srcc, max(abs(v - 1.0) for v in s))
        min_max_ppv = min(min_max_ppv, float(np.max(ppv(table(p), table(t), [1 / 30, 1 / 60]))))
    checks = {"srcc = 1 +- 1e-9": worst_srcc <= 1e-9, "max ppv > 0.1": min_max_ppv > 0.1}
    return checks, f"100 affine tables, max |srcc-1| {worst_srcc:.1e}, smallest max ppv {min_max_ppv:.3f}"


@pytest.fixture(scope="module")
def plv_reports():
    t0 = time.perf_counter()
    matched = plv(TARGET_V1, TARGET_V1.replace(noise_seed=0), workers=4)
    cam60 = plv(TARGET_V1, CAM60, workers=4)
    zero_shot = plv(TARGET_V1, ZERO_SHOT_PROXY, ZERO_SHOT_CFG, workers=4)
    return matched, cam60, zero_shot, time.perf_counter() - t0


@criterion(7, 300)
def test_7_plv_protocol(plv_reports):
    matched, cam60, _, setup_s = plv_reports
    p97, p92 = round(percent_reduction(9000, 250)), round(percent_reduction(9000, 750))
    checks = {
        "shared runs < 300s": setup_s < 300,
        "matched >= 90%": matched.percent_reduction >= 90.0,
        "60 deg strictly lower": cam60.percent_reduction < matched.percent_reduction,
        "(9000,250) -> 97": p97 == 97,
        "(9000,750) -> 92": p92 == 92,
    }
    return checks, (f"matched {matched.percent_reduction:.1f}%, 60 deg {cam60.percent_reduction:.1f}%, "
                    f"bookkeeping {p97}/{p92}, shared runs {setup_s:.1f}s")


@criterion(8, 300)
def test_8_zero_shot_decoupling(plv_reports):
    *reports, setup_s = plv_reports
    matched, _, rep = reports
    data = rep.to_dict()
    data["fixture"] = {"proxy": ZERO_SHOT_PROXY.to_dict(), "anchor_lambda": ZERO_SHOT_CFG.anchor_lambda}
    path = archive("zero_shot_fixture.json", json.dumps(data, indent=2) + "\n")
    plateau = rep.curve_target.converged_performance
    fields = all("zero_shot_score" in r.to_dict() and "plv" in r.to_dict() for r in reports)
    checks = {
        "shared runs < 300s": setup_s < 300,
        "fields present": fields,
        "low zero-shot": rep.zero_shot_score < 0.6 * plateau and rep.zero_shot_score < matched.zero_shot_score,
        "high reduction": rep.percent_reduction >= 75.0,
        "archived": path.exists(),
    }
    return checks, (f"zero-shot {rep.zero_shot_score:.1f} vs plateau {plateau:.1f}, "
                    f"reduction {rep.percent_reduction:.1f}%, archived {path.name}")


# (time_budget, c1, c2, episode_sim_length, d) -> trials, worked by hand
N_TRIALS_FIXTURES = [
    ((100, 1, 0, 10, 2), 20), ((2, 50, 0, 60, 1), 1), ((2, 50, 0, 60, 2), 3), ((2, 50, 0, 60, 4), 6),
    ((2, 50, 0, 60, 8), 13), ((0.6, 50, 0, 60, 1), 0), ((0.6, 50, 0, 60, 2), 1), ((0.6, 50, 0, 60, 4), 2),
    ((0.6, 50, 0, 60, 8), 4), ((1.2, 50, 0, 60, 1), 1), ((10, 50, 1, 60, 1), 4), ((10, 50, 1, 60, 3), 12),
    ((10, 50, 4, 60, 5), 8), ((60, 1, 0, 60, 1), 1), ((60, 1, 0, 60, 7), 7), ((3600, 50, 0, 60, 1), 3000),
    ((0.1, 50, 0, 60, 1), 0), ((6, 10, 0.5, 60, 3), 2), ((7, 20, 0, 60, 9), 21), ((0.3, 100, 3, 60, 16), 2),
]


@criterion(9, 120)
def test_9_budget_model():
    exact = sum(n_trials(BudgetModel(T, c1, c2, L), d) == want for (T, c1, c2, L, d), want in N_TRIALS_FIXTURES)
    self_curve = budget_accuracy_curve(BudgetModel(1e6), [1], make_zoo(), TASK, TARGET_V1, workers=4)
    lines = ["# Ranking accuracy against rendering interval", ""]
    d_stars = {}
    for T in (0.6, 2.0):
        curve = budget_accuracy_curve(BudgetModel(T), [1, 2, 4, 8], make_zoo(), TASK, TARGET_V1, workers=4)
        d_stars[T] = curve.d_star
        lines += [f"## time budget {T}", "", "```", curve.to_csv().rstrip(), "```", "", f"d*({T}) = {curve.d_star}", ""]
    archive("budget_report.md", "\n".join(lines))
    checks = {"20 fixtures exact": exact == 20, "self accuracy 1": self_curve.rows[0].ranking_accuracy == 1.0,
              "d* reported": all(d is not None for d in d_stars.values())}
    return checks, f"{exact}/20 fixtures, d* {d_stars}"


def run_cli(argv):
    assert main(argv) == 0


@criterion(10, 300)
def test_10_threads_byte_identical(tmp_path):
    configs = {
        "trim": ("sweep", {"target": "target-v1", "trials": 5,
                           "sweep": {"param": "trim", "values": list(TRIM_VALUES), "base": {"delay_steps": 2}}}),
        "plv_matched": ("plv", {"target": "target-v1", "proxy": {"delay_steps": 2}, "expert": {}}),
        "plv_cam60": ("plv", {"target": "target-v1", "proxy": {"delay_steps": 2, "camera_angle_deg": 60.0},
                              "expert": {}}),
    }
    compared = 0
    identical = True
    for name, (command, cfg) in configs.items():
        path = tmp_path / f"{name}.json"
        path.write_text(json.dumps(cfg))
        for threads in (1, 8):
            out_dir = tmp_path / f"t{threads}"
            out_dir.mkdir(exist_ok=True)
            suffix = ".csv" if command == "sweep" else ".json"
            run_cli([command, "--config", str(path), "--out", str(out_dir / (name + suffix)), "--threads", str(threads)])
    for f in sorted((tmp_path / "t1").iterdir()):
        compared += 1
        identical &= f.read_bytes() == (tmp_path / "t8" / f.name).read_bytes()
        archive(f.name, f.read_text())
    same_names = sorted(p.name for p in (tmp_path / "t1").iterdir()) == sorted(p.name for p in (tmp_path / "t8").iterdir())
    return {"byte identical": identical and same_names, "all outputs": compared == 7}, f"{compared} files compared"
