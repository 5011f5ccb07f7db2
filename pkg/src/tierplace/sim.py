"""Discrete-event replay of a trace under one placement policy.

Creation and deletion events are applied in ``(time, file_id)`` order. After
the replay, HDD throttling is computed in a single pass: wherever the summed
average IOPS of HDD-resident files exceeds ``hdd_count * hdd_iops_cap``, each
of those files is slowed by ``demand / capacity`` for that interval. The
slowdown is reported but not fed back into the timeline.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .econ import CostModel, Tier, cost_on_hdd, cost_on_ssd, oracle_tier
from .placement import FileContext, PolicyKind, SsdState, decide, release
from .predictor import (
    FeatureVector,
    Granularity,
    ModelStore,
    Prediction,
    extract_features,
    predict,
)
from .trace_model import BYTES_PER_TB, TempFileRecord, Trace, avg_iops

CSV_COLUMNS = (
    "policy", "total_cost_units", "ssd_tb_hours", "iops_served_ssd_fraction",
    "throttled_file_count", "mean_stretch", "misplacement_rate", "evicted_bytes",
)

PredictFn = Callable[[FeatureVector, TempFileRecord], Prediction]


class SimulationError(ValueError):
    pass


@dataclass(frozen=True)
class DeviceFleet:
    hdd_count: int = 1
    ssd_capacity_tb: float = math.inf

    def __post_init__(self):
        if not (isinstance(self.hdd_count, int) and self.hdd_count >= 1):
            raise SimulationError(f"hdd_count must be >= 1, got {self.hdd_count!r}")
        if not self.ssd_capacity_tb >= 0:
            raise SimulationError(f"ssd_capacity_tb must be >= 0, got {self.ssd_capacity_tb!r}")

    def hdd_iops_capacity(self, model: CostModel) -> float:
        return self.hdd_count * model.hdd_iops_cap


@dataclass(frozen=True)
class MetricsReport:
    policy: str
    seed: int
    hdd_count: int
    ssd_capacity_tb: float
    n_files: int = 0
    total_cost_units: float = 0.0
    ssd_tb_hours: float = 0.0
    hdd_demand_peak_iops: float = 0.0
    throttled_file_count: int = 0
    mean_stretch: float = 0.0
    iops_served_ssd_fraction: float = 0.0
    misplacement_rate: float = 0.0
    evicted_bytes: int = 0
    ssd_ops: float = 0.0
    hdd_ops: float = 0.0
    placements: dict[int, str] = field(default_factory=dict, repr=False, compare=False)

    def to_dict(self, with_placements: bool = False) -> dict:
        d = asdict(self)
        if not math.isfinite(d["ssd_capacity_tb"]):
            d["ssd_capacity_tb"] = None
        placements = d.pop("placements")
        if with_placements:
            d["placements"] = {str(k): v for k, v in sorted(placements.items())}
        return d

    def to_json(self, with_placements: bool = False) -> str:
        return json.dumps(self.to_dict(with_placements), indent=2) + "\n"

    def csv_row(self) -> list:
        return [getattr(self, c) for c in CSV_COLUMNS]


def perfect_predictions(features: FeatureVector, record: TempFileRecord) -> Prediction:
    """Predictions equal to the file's actual values (retrospective runs only)."""
    return Prediction(avg_iops(record), float(record.size_bytes), Granularity.FINE, 1)


def _store_predictor(store: ModelStore) -> PredictFn:
    cache: dict[tuple, Prediction] = {}

    def fn(features: FeatureVector, record: TempFileRecord) -> Prediction:
        key = (features.pipeline_id, features.config_id, features.stage_id,
               features.input_bytes, features.load_factor, features.priority)
        if key not in cache:
            cache[key] = predict(store, features)
        return cache[key]

    return fn


def _hdd_stretch(intervals: list[tuple[int, float, float, float]], capacity: float,
                 n_files: int) -> tuple[np.ndarray, float]:
    """Integral of the slowdown over each file's HDD time, and the peak HDD demand."""
    extra = np.zeros(n_files)
    if not intervals:
        return extra, 0.0
    idx = np.array([i for i, _, _, _ in intervals])
    a = np.array([s for _, s, _, _ in intervals])
    b = np.array([e for _, _, e, _ in intervals])
    rate = np.array([r for _, _, _, r in intervals])
    times = np.unique(np.concatenate([a, b]))
    ia = np.searchsorted(times, a)
    ib = np.searchsorted(times, b)
    delta = np.zeros(len(times))
    np.add.at(delta, ia, rate)
    np.add.at(delta, ib, -rate)
    demand = np.cumsum(delta)[:-1]
    # cancellation leftovers once every file has left
    demand[np.abs(demand) < 1e-9 * max(float(rate.max()), 1.0)] = 0.0
    slow = np.maximum(1.0, demand / capacity)
    cum = np.concatenate([[0.0], np.cumsum(slow * np.diff(times))])
    np.add.at(extra, idx, cum[ib] - cum[ia])
    return extra, float(demand.max()) if len(demand) else 0.0


def run_simulation(trace: Trace, policy: PolicyKind | str, fleet: DeviceFleet,
                   model: CostModel | None = None, store: ModelStore | None = None,
                   seed: int = 0, predict_fn: PredictFn | None = None) -> MetricsReport:
    policy = PolicyKind.parse(policy) if isinstance(policy, str) else policy
    model = model or CostModel()
    if policy.needs_predictions and predict_fn is None:
        if store is None:
            raise SimulationError(f"policy {policy.value} needs a trained model store")
        predict_fn = _store_predictor(store)

    files = sorted(trace.files, key=lambda f: f.file_id)
    pos = {f.file_id: i for i, f in enumerate(files)}
    n = len(files)
    if n == 0:
        return MetricsReport(policy.value, seed, fleet.hdd_count, fleet.ssd_capacity_tb)

    events = sorted([(f.created_s, f.file_id, 0) for f in files]
                    + [(f.deleted_s, f.file_id, 1) for f in files])
    state = SsdState(fleet.ssd_capacity_tb) if fleet.ssd_capacity_tb > 0 else None
    initial: dict[int, Tier] = {}
    evicted_at: dict[int, float] = {}
    evicted_bytes = 0

    for t, fid, kind in events:
        f = files[pos[fid]]
        if kind == 1:
            if state is not None:
                state = release(state, fid)
            continue
        if state is None:
            initial[fid] = Tier.HDD
            continue
        prediction = None
        if policy.needs_predictions:
            run = trace.run(f.run_id)
            features = extract_features(run, trace.pipeline(run.pipeline_id), f.stage_id)
            prediction = predict_fn(features, f)
        truth = f if policy is PolicyKind.ORACLE else None
        decision, state = decide(policy, FileContext(fid, f.size_bytes), prediction, truth,
                                 state, model)
        initial[fid] = decision.tier
        for victim in decision.evictions:
            evicted_at[victim] = t
            evicted_bytes += files[pos[victim]].size_bytes

    costs, ssd_time, hdd_ops, ssd_ops, misplaced = [], [], [], [], 0
    hdd_intervals = []
    for i, f in enumerate(files):
        life = f.deleted_s - f.created_s
        if initial[f.file_id] is Tier.SSD:
            t_move = evicted_at.get(f.file_id, f.deleted_s)
            on_ssd = t_move - f.created_s
            if t_move < f.deleted_s:
                hdd_intervals.append((i, t_move, f.deleted_s, avg_iops(f)))
        else:
            on_ssd = 0.0
            hdd_intervals.append((i, f.created_s, f.deleted_s, avg_iops(f)))
        frac = on_ssd / life
        if frac == 1.0:
            costs.append(cost_on_ssd(f, model))
        elif frac == 0.0:
            costs.append(cost_on_hdd(f, model))
        else:
            costs.append(frac * cost_on_ssd(f, model) + (1.0 - frac) * cost_on_hdd(f, model))
        ssd_time.append(f.size_bytes / BYTES_PER_TB * on_ssd)
        ssd_ops.append(f.total_ops * frac)
        hdd_ops.append(f.total_ops * (1.0 - frac))
        if initial[f.file_id] is not oracle_tier(f, model):
            misplaced += 1

    extra, peak = _hdd_stretch(hdd_intervals, fleet.hdd_iops_capacity(model), n)
    hdd_span = np.zeros(n)
    for i, s, e, _ in hdd_intervals:
        hdd_span[i] += e - s
    stretches = []
    for i, f in enumerate(files):
        life = f.deleted_s - f.created_s
        if hdd_span[i] == 0.0:
            s = 1.0
        elif hdd_span[i] == life:
            s = float(extra[i]) / life
        else:
            s = (life - float(hdd_span[i]) + float(extra[i])) / life
        stretches.append(max(1.0, s))

    total_ops = math.fsum(f.total_ops for f in files)
    ssd_ops_total = math.fsum(ssd_ops)
    return MetricsReport(
        policy=policy.value,
        seed=seed,
        hdd_count=fleet.hdd_count,
        ssd_capacity_tb=fleet.ssd_capacity_tb,
        n_files=n,
        total_cost_units=math.fsum(costs),
        ssd_tb_hours=math.fsum(ssd_time) / 3600.0,
        hdd_demand_peak_iops=peak,
        throttled_file_count=sum(1 for s in stretches if s > 1.0),
        mean_stretch=math.fsum(stretches) / n,
        iops_served_ssd_fraction=ssd_ops_total / total_ops if total_ops > 0 else 0.0,
        misplacement_rate=misplaced / n,
        evicted_bytes=evicted_bytes,
        ssd_ops=ssd_ops_total,
        hdd_ops=math.fsum(hdd_ops),
        placements={f.file_id: initial[f.file_id].value for f in files},
    )


def compare_policies(trace: Trace, policies: Iterable[PolicyKind | str], fleet: DeviceFleet,
                     model: CostModel | None = None, store: ModelStore | None = None,
                     seed: int = 0, predict_fn: PredictFn | None = None) -> list[MetricsReport]:
    kinds = sorted({PolicyKind.parse(p) if isinstance(p, str) else p for p in policies},
                   key=lambda p: p.value)
    return [run_simulation(trace, p, fleet, model, store if p.needs_predictions else None,
                           seed, predict_fn if p.needs_predictions else None)
            for p in kinds]


def comparison_csv(reports: Sequence[MetricsReport], extra: Sequence[tuple[str, list]] = ()) -> str:
    """CSV text of the comparison table; ``extra`` prepends (name, values) columns."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([name for name, _ in extra] + list(CSV_COLUMNS))
    for i, r in enumerate(reports):
        w.writerow([vals[i] for _, vals in extra] + r.csv_row())
    return buf.getvalue()
