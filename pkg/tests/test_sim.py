import dataclasses
import math

import pytest

from helpers import one_run_trace, tfile
from tierplace.econ import CostModel
from tierplace.placement import PolicyKind
from tierplace.predictor import train
from tierplace.sim import (
    CSV_COLUMNS,
    DeviceFleet,
    SimulationError,
    compare_policies,
    comparison_csv,
    perfect_predictions,
    run_simulation,
)
from tierplace.trace_model import Trace, split_trace
from tierplace.workload_gen import GeneratorConfig, generate

UNBOUNDED = DeviceFleet(1, math.inf)


@pytest.fixture(scope="module")
def mixed_trace():
    return generate(GeneratorConfig(seed=3, num_pipelines=8, runs_per_pipeline=8,
                                    horizon_days=2.0))


def _same_metrics(a, b):
    da, db = a.to_dict(with_placements=True), b.to_dict(with_placements=True)
    da.pop("policy")
    db.pop("policy")
    return da == db


def test_empty_trace_is_all_zero():
    r = run_simulation(Trace(), PolicyKind.ALL_SSD, UNBOUNDED)
    assert r.n_files == 0
    for c in CSV_COLUMNS[1:]:
        assert getattr(r, c) == 0


def test_single_file_throttling():
    t = one_run_trace([tfile(0, 1.0, 300.0)])
    r = run_simulation(t, PolicyKind.ALL_HDD, DeviceFleet(1, math.inf))
    assert r.mean_stretch == 2.0
    assert r.throttled_file_count == 1
    assert r.hdd_demand_peak_iops == 300.0
    r2 = run_simulation(t, PolicyKind.ALL_HDD, DeviceFleet(2, math.inf))
    assert r2.mean_stretch == 1.0 and r2.throttled_file_count == 0


def test_overlap_only_throttles_shared_interval():
    # two 100-IOPS files overlap for half their lives on one 150-IOPS drive
    t = one_run_trace([tfile(0, 1.0, 100.0, created=0.0), tfile(1, 1.0, 100.0, created=500.0)])
    r = run_simulation(t, PolicyKind.ALL_HDD, DeviceFleet(1, math.inf))
    assert r.mean_stretch == pytest.approx((500 + 500 * 200 / 150) / 1000)
    assert r.throttled_file_count == 2


def test_all_ssd_tb_hours():
    t = one_run_trace([tfile(0, 1.0, 10.0, lifetime=7200.0), tfile(1, 3.0, 10.0, lifetime=3600.0)])
    r = run_simulation(t, PolicyKind.ALL_SSD, UNBOUNDED)
    assert r.ssd_tb_hours == 5.0
    assert r.iops_served_ssd_fraction == 1.0
    assert r.total_cost_units == 4.0


def test_eviction_moves_cost_and_bytes():
    # A (200 IOPS/TB) is on SSD from 0 to 500, then displaced by B (400 IOPS/TB)
    t = one_run_trace([tfile(0, 1.0, 200.0, created=0.0), tfile(1, 1.0, 400.0, created=500.0)])
    r = run_simulation(t, PolicyKind.CAPACITY_SCORE, DeviceFleet(10, 1.0),
                       predict_fn=perfect_predictions)
    assert r.evicted_bytes == 10**12
    cost_a = 0.5 * 1.0 + 0.5 * (200.0 / 150.0)
    assert r.total_cost_units == pytest.approx(cost_a + 1.0, rel=1e-12)
    assert r.ssd_tb_hours == pytest.approx(1500.0 / 3600.0)
    assert r.placements == {0: "SSD", 1: "SSD"}


def test_oracle_dominates(mixed_trace):
    history, test = split_trace(mixed_trace)
    store = train(history)
    rows = {r.policy: r for r in compare_policies(test, list(PolicyKind), UNBOUNDED,
                                                  store=store)}
    assert list(rows) == sorted(rows)
    oracle = rows["oracle"].total_cost_units
    for name, r in rows.items():
        assert oracle <= r.total_cost_units, name
    assert rows["oracle"].misplacement_rate == 0.0


def test_perfect_predictor_equals_oracle(mixed_trace):
    p = run_simulation(mixed_trace, PolicyKind.PREDICTED, UNBOUNDED, predict_fn=perfect_predictions)
    o = run_simulation(mixed_trace, PolicyKind.ORACLE, UNBOUNDED)
    assert p.placements == o.placements
    assert _same_metrics(p, o)


def test_zero_capacity_equals_all_hdd(mixed_trace):
    fleet = DeviceFleet(4, 0.0)
    cs = run_simulation(mixed_trace, PolicyKind.CAPACITY_SCORE, fleet,
                        predict_fn=perfect_predictions)
    hdd = run_simulation(mixed_trace, PolicyKind.ALL_HDD, fleet)
    assert _same_metrics(cs, hdd)


def test_conservation_and_ranges(mixed_trace):
    total = math.fsum(f.total_ops for f in mixed_trace.files)
    for policy in PolicyKind:
        for cap in (0.0, 20.0, math.inf):
            r = run_simulation(mixed_trace, policy, DeviceFleet(20, cap),
                               predict_fn=perfect_predictions)
            assert r.ssd_ops + r.hdd_ops == pytest.approx(total, rel=1e-12)
            assert 0 <= r.iops_served_ssd_fraction <= 1
            assert 0 <= r.misplacement_rate <= 1
            assert r.total_cost_units >= 0
            assert r.mean_stretch >= 1
            assert r.evicted_bytes == 0 or policy is PolicyKind.CAPACITY_SCORE


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_capacity_sweep_monotone_with_perfect_predictions(seed):
    t = generate(GeneratorConfig(seed=seed, num_pipelines=6, runs_per_pipeline=6,
                                 horizon_days=2.0))
    costs = [run_simulation(t, PolicyKind.CAPACITY_SCORE, DeviceFleet(10, c),
                            predict_fn=perfect_predictions).total_cost_units
             for c in (0, 1, 2, 5, 10, 20, 50, 100, 200, 500, math.inf)]
    assert all(b <= a for a, b in zip(costs, costs[1:]))


def test_report_is_deterministic(mixed_trace):
    a = run_simulation(mixed_trace, PolicyKind.ORACLE, DeviceFleet(3, 50.0), seed=4)
    b = run_simulation(mixed_trace, PolicyKind.ORACLE, DeviceFleet(3, 50.0), seed=4)
    assert a.to_json(True) == b.to_json(True)


def test_predictive_policy_needs_store(mixed_trace):
    with pytest.raises(SimulationError):
        run_simulation(mixed_trace, PolicyKind.PREDICTED, UNBOUNDED)


def test_invalid_fleet():
    with pytest.raises(SimulationError):
        DeviceFleet(0, 1.0)
    with pytest.raises(SimulationError):
        DeviceFleet(1, -1.0)


def test_cost_model_changes_crossover():
    t = one_run_trace([tfile(0, 1.0, 200.0)])
    cheap_hdd = CostModel(hdd_iops_cap=300.0)
    assert run_simulation(t, PolicyKind.ORACLE, UNBOUNDED).placements == {0: "SSD"}
    assert run_simulation(t, PolicyKind.ORACLE, UNBOUNDED, cheap_hdd).placements == {0: "HDD"}


def test_comparison_csv_columns():
    t = one_run_trace([tfile(0, 1.0, 200.0)])
    rows = compare_policies(t, ["oracle", "all-hdd"], UNBOUNDED)
    text = comparison_csv(rows, extra=[("seed", [7, 7])])
    lines = text.splitlines()
    assert lines[0] == "seed," + ",".join(CSV_COLUMNS)
    assert [line.split(",")[1] for line in lines[1:]] == ["all-hdd", "oracle"]
    assert dataclasses.asdict(rows[0])["policy"] == "all-hdd"
