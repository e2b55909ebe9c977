import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from proxyval.domain import ConfigError, DomainParams
from proxyval.learning import PLVConfig
from proxyval.metrics import make_task
from proxyval.optimize import (
    SWEEP_COLUMNS,
    BudgetModel,
    SweepSpec,
    best_index,
    budget_accuracy_curve,
    compare_families,
    coordinate_search,
    n_trials,
    plv_sweep,
    sweep,
)
from proxyval.zoo import TARGET_V1, make_zoo

QUIET = DomainParams(obs_noise_y=0.0, obs_noise_phi=0.0)
TASK = make_task()


def test_spec_validation():
    with pytest.raises(ConfigError):
        SweepSpec("gravity", (1.0,))
    with pytest.raises(ConfigError):
        SweepSpec("trim", ())
    with pytest.raises(ConfigError):
        SweepSpec("trim", (0.0,), objective="vibes")


def test_best_index_polarity_and_ties():
    assert best_index([3.0, 1.0, 1.0, 2.0], "prpv") == 1
    assert best_index([0.2, 0.9, 0.9], "srcc") == 1
    assert best_index([None, 0.5], "srcc") == 1
    assert best_index([float("nan"), 2.0], "pod") == 1


def test_singleton_sweep():
    res = sweep(SweepSpec("trim", (0.15,), TARGET_V1), TARGET_V1, make_zoo(), TASK, trials=2)
    assert res.argbest == 0.15 and len(res.rows) == 1


def test_trim_sweep_finds_truth_and_is_reproducible():
    spec = SweepSpec("trim", (-0.2, 0.0, 0.2), TARGET_V1.replace(noise_seed=0))
    a = sweep(spec, TARGET_V1, make_zoo(), TASK, trials=3)
    b = sweep(spec, TARGET_V1, make_zoo(), TASK, trials=3)
    assert a.argbest == 0.0
    assert a.to_csv() == b.to_csv() and a.to_json() == b.to_json()
    assert a.residual == min(r.score for r in a.rows)


def test_sweep_csv_columns():
    spec = SweepSpec("delay_steps", (0, 2), TARGET_V1)
    text = sweep(spec, TARGET_V1, make_zoo(), TASK, trials=2).to_csv()
    lines = text.splitlines()
    assert lines[0].split(",") == list(SWEEP_COLUMNS)
    assert len(lines) == 3
    assert lines[2].startswith("delay_steps,2,0.0,0.0,")


def test_srcc_objective_maximizes():
    spec = SweepSpec("trim", (-0.2, 0.0, 0.2), TARGET_V1.replace(noise_seed=0), objective="srcc")
    res = sweep(spec, TARGET_V1, make_zoo(), TASK, trials=2)
    assert res.argbest == 0.0
    assert res.residual == max(r.score for r in res.rows)


def test_sweep_rejects_plv_objective():
    with pytest.raises(ConfigError):
        sweep(SweepSpec("trim", (0.0,), objective="plv"), TARGET_V1, make_zoo(), TASK)


def test_plv_sweep_prefers_matched_camera():
    cfg = PLVConfig(size_grid=(0, 250, 1000, 4000, 9000), eval_trials=3)
    spec = SweepSpec("camera_angle_deg", (19.0, 60.0), TARGET_V1.replace(noise_seed=0), objective="plv")
    res = plv_sweep(spec, TARGET_V1, cfg)
    assert res.argbest == 19.0
    assert res.to_csv().splitlines()[0].startswith("param,value,plv,percent_reduction,zero_shot_score")


def test_compare_families():
    spec = lambda p, v: SweepSpec(p, v, TARGET_V1.replace(noise_seed=0))  # noqa: E731
    results = {
        "trim": sweep(spec("trim", (0.1, 0.2)), TARGET_V1, make_zoo(), TASK, trials=2),
        "delay": sweep(spec("delay_steps", (1, 2)), TARGET_V1, make_zoo(), TASK, trials=2),
    }
    name, residual = compare_families(results)
    assert name == "delay" and residual == results["delay"].residual
    with pytest.raises(ValueError):
        compare_families({})


GRIDS = [("trim", (-0.2, -0.1, 0.0, 0.1, 0.2)), ("delay_steps", (0, 1, 2, 3)),
         ("camera_angle_deg", (10.0, 19.0, 25.0, 40.0))]
TRUTH = QUIET.replace(trim=0.1, delay_steps=1, camera_angle_deg=25.0)


@pytest.mark.parametrize("objective", ["ppv", "pod"])
def test_coordinate_search_recovers_target(objective):
    res = coordinate_search(QUIET, GRIDS, TRUTH, make_zoo(), TASK, rounds=2, objective=objective, trials=2)
    assert res.params == TRUTH
    assert res.trace[-1] == 0.0
    assert all(b <= a for a, b in zip(res.trace, res.trace[1:]))


def test_coordinate_search_prpv_reaches_zero():
    # ranks alone cannot pin the trim value, but the objective still reaches zero
    res = coordinate_search(QUIET, GRIDS, TRUTH, make_zoo(), TASK, rounds=1, trials=2)
    assert res.trace[-1] == 0.0
    assert all(b <= a for a, b in zip(res.trace, res.trace[1:]))


def test_one_round_equals_sequential_sweeps():
    grids = GRIDS[:2]
    res = coordinate_search(QUIET, grids, TRUTH, make_zoo(), TASK, rounds=1, objective="pod", trials=2)
    params = QUIET
    for name, values in grids:
        s = sweep(SweepSpec(name, values, params, "pod"), TRUTH, make_zoo(), TASK, trials=2)
        params = params.with_value(name, s.argbest)
    assert res.params == params


def test_coordinate_search_keeps_better_off_grid_start():
    start = TRUTH
    res = coordinate_search(start, [("trim", (-0.2, 0.3))], TRUTH, make_zoo(), TASK, objective="pod", trials=1)
    assert res.params == start and res.trace == [0.0, 0.0]


def test_coordinate_search_validation():
    with pytest.raises(ValueError):
        coordinate_search(QUIET, GRIDS, TRUTH, make_zoo(), TASK, rounds=0)


# --- budget ---------------------------------------------------------------

def test_n_trials_examples():
    unit = BudgetModel(time_budget=100.0, c1=1.0, episode_sim_length=10.0)
    assert n_trials(unit, 2) == 20
    default = BudgetModel(time_budget=2.0)
    assert n_trials(default, 1) <= n_trials(default, 4)
    assert n_trials(BudgetModel(time_budget=0.5), 1) == 0
    with pytest.raises(ValueError):
        n_trials(default, 0)


def test_budget_model_validation():
    with pytest.raises(ConfigError):
        BudgetModel(time_budget=0.0)
    with pytest.raises(ConfigError):
        BudgetModel(time_budget=1.0, c1=0.0)
    with pytest.raises(ConfigError):
        BudgetModel(time_budget=1.0, c2=-1.0)


@given(st.floats(0.01, 1e4), st.floats(0.1, 100), st.floats(0, 10), st.integers(1, 64))
def test_n_trials_monotone(T, c1, c2, d):
    b = BudgetModel(time_budget=T, c1=c1, c2=c2)
    assert 0 <= n_trials(b, d) <= n_trials(b, d + 1)


def test_budget_self_comparison_is_one():
    curve = budget_accuracy_curve(BudgetModel(time_budget=1e6), [1, 2], make_zoo(), TASK, TARGET_V1,
                                  saturation_trials=4)
    assert curve.rows[0].ranking_accuracy == 1.0
    assert curve.d_star == 1
    assert all(0.0 <= r.ranking_accuracy <= 1.0 for r in curve.rows)


def test_budget_zero_trials_undefined():
    curve = budget_accuracy_curve(BudgetModel(time_budget=0.6), [1, 2, 4], make_zoo(), TASK, TARGET_V1,
                                  saturation_trials=3)
    first = curve.rows[0]
    assert first.n_trials == 0 and first.ranking_accuracy is None
    assert "undefined" in curve.to_csv().splitlines()[1]
    assert curve.d_star in (2, 4)
    assert json.loads(json.dumps(curve.to_dict()))["d_star"] == curve.d_star


def test_budget_reference_must_be_smallest():
    with pytest.raises(ValueError):
        budget_accuracy_curve(BudgetModel(time_budget=10.0), [1, 2], make_zoo(), TASK, TARGET_V1, reference_d0=2)


def test_sweep_values_coerced_for_integer_fields():
    spec = SweepSpec("blur_window", (1.0, 3.0), QUIET)
    assert [p.blur_window for p in spec.instances()] == [1, 3]
    assert np.all([isinstance(p.blur_window, int) for p in spec.instances()])
