"""Creation-time forecasts of a temporary file's average IOPS and size.

Training groups the files of each stage instance (one run, one stage) into a
sample labelled with the mean per-file average IOPS and size. IOPS labels are
normalised by the run's observed stretch (its duration over the fastest run of
the same pipeline), so that a prediction can re-apply the stretch expected at
the load the new run starts under.

Per-key linear fits against ``input_bytes`` are kept at three granularities:

=========  ====================================
fine       (pipeline_id, config_id, stage_id)
mid        (pipeline_id, stage_id)
coarse     stage_kind
=========  ====================================

plus a global mean. ``predict`` walks fine -> mid -> coarse -> global and uses
the first key backed by at least ``min_samples`` samples.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .econ import CostModel, Tier, oracle_tier, threshold_tier
from .trace_model import (
    BYTES_PER_TB,
    PipelineSpec,
    RunMeta,
    StageKind,
    Trace,
    avg_iops,
    io_density,
    stage_instances,
)

STORE_FORMAT = "tierplace-model/1"
DEFAULT_MIN_SAMPLES = 3


class PredictorError(ValueError):
    pass


class UnknownStageError(PredictorError, KeyError):
    def __str__(self):
        return str(self.args[0])


class Granularity(str, Enum):
    FINE = "fine"
    MID = "mid"
    COARSE = "coarse"
    GLOBAL = "global"


@dataclass(frozen=True)
class FeatureVector:
    pipeline_id: str
    config_id: str
    stage_id: str
    stage_kind: StageKind
    fan_in: int
    fan_out: int
    depth: int
    is_shuffle: bool
    input_bytes: int
    load_factor: float
    priority: int


@dataclass(frozen=True)
class Prediction:
    predicted_avg_iops: float
    predicted_size_bytes: float
    source_granularity: Granularity
    confidence: int

    @property
    def predicted_density(self) -> float:
        return self.predicted_avg_iops / (self.predicted_size_bytes / BYTES_PER_TB)


@dataclass(frozen=True)
class LinearFit:
    """Least-squares line kept in centred form, so it returns ``y_mean`` at ``x_mean``."""

    slope: float
    x_mean: float
    y_mean: float
    residual_sd: float = 0.0

    @property
    def intercept(self) -> float:
        return self.y_mean - self.slope * self.x_mean

    def __call__(self, x: float) -> float:
        return self.y_mean + self.slope * (x - self.x_mean)

    def positive(self, x: float) -> float:
        """Evaluate, replacing a non-positive extrapolation by proportional scaling."""
        v = self(x)
        if v > 0:
            return v
        if self.x_mean > 0 and self.y_mean > 0:
            return self.y_mean * x / self.x_mean
        return 0.0

    @classmethod
    def fit(cls, xs, ys) -> "LinearFit":
        x = np.asarray(xs, dtype=float)
        y = np.asarray(ys, dtype=float)
        x_mean = float(np.mean(x))
        y_mean = float(np.mean(y))
        dx = x - x_mean
        sxx = float(np.dot(dx, dx))
        # identical inputs (or a single sample) leave only the mean
        if len(x) < 2 or sxx <= (1e-12 * max(abs(x_mean), 1.0)) ** 2 * len(x):
            slope = 0.0
        else:
            slope = float(np.dot(dx, y - y_mean)) / sxx
        resid = y - (y_mean + slope * dx)
        sd = float(np.sqrt(np.dot(resid, resid) / len(x)))
        return cls(slope, x_mean, y_mean, sd)

    @classmethod
    def constant(cls, ys) -> "LinearFit":
        y = np.asarray(ys, dtype=float)
        m = float(np.mean(y))
        return cls(0.0, 0.0, m, float(np.std(y)))

    def to_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "x_mean": self.x_mean,
                "y_mean": self.y_mean, "residual_sd": self.residual_sd}

    @classmethod
    def from_dict(cls, d: dict) -> "LinearFit":
        return cls(float(d["slope"]), float(d["x_mean"]), float(d["y_mean"]),
                   float(d["residual_sd"]))


@dataclass(frozen=True)
class KeyStats:
    count: int
    iops_fit: LinearFit
    size_fit: LinearFit
    # mean observed stretch of the runs behind this entry
    mean_stretch: float

    def to_dict(self) -> dict:
        return {"count": self.count, "iops_fit": self.iops_fit.to_dict(),
                "size_fit": self.size_fit.to_dict(), "mean_stretch": self.mean_stretch}

    @classmethod
    def from_dict(cls, d: dict) -> "KeyStats":
        return cls(int(d["count"]), LinearFit.from_dict(d["iops_fit"]),
                   LinearFit.from_dict(d["size_fit"]), float(d["mean_stretch"]))


@dataclass(frozen=True)
class EnvFit:
    """Expected run stretch as a linear function of load factor and priority."""

    mean_stretch: float = 1.0
    mean_load: float = 0.0
    mean_priority: float = 0.0
    load_coef: float = 0.0
    priority_coef: float = 0.0

    def expected_stretch(self, load_factor: float, priority: int) -> float:
        s = (self.mean_stretch + self.load_coef * (load_factor - self.mean_load)
             + self.priority_coef * (priority - self.mean_priority))
        return max(1.0, s)

    @classmethod
    def fit(cls, loads, priorities, stretches) -> "EnvFit":
        L = np.asarray(loads, dtype=float)
        P = np.asarray(priorities, dtype=float)
        S = np.asarray(stretches, dtype=float)
        A = np.column_stack([L - L.mean(), P - P.mean()])
        # centred columns: a constant regressor becomes a zero column and gets coefficient 0
        coef, *_ = np.linalg.lstsq(A, S - S.mean(), rcond=None)
        return cls(float(S.mean()), float(L.mean()), float(P.mean()),
                   float(coef[0]), float(coef[1]))

    def to_dict(self) -> dict:
        return {"mean_stretch": self.mean_stretch, "mean_load": self.mean_load,
                "mean_priority": self.mean_priority, "load_coef": self.load_coef,
                "priority_coef": self.priority_coef}


@dataclass(frozen=True)
class ModelStore:
    fine: dict[tuple[str, str, str], KeyStats]
    mid: dict[tuple[str, str], KeyStats]
    coarse: dict[str, KeyStats]
    global_stats: KeyStats
    env: EnvFit = field(default_factory=EnvFit)
    min_samples: int = DEFAULT_MIN_SAMPLES

    def without_fine(self, key: tuple[str, str, str]) -> "ModelStore":
        fine = {k: v for k, v in self.fine.items() if k != key}
        return ModelStore(fine, self.mid, self.coarse, self.global_stats, self.env,
                          self.min_samples)

    def with_min_samples(self, n: int) -> "ModelStore":
        return ModelStore(self.fine, self.mid, self.coarse, self.global_stats, self.env, n)

    def to_dict(self) -> dict:
        def entries(table, keyfn):
            return [dict(key=keyfn(k), **v.to_dict()) for k, v in sorted(table.items())]

        return {
            "format": STORE_FORMAT,
            "min_samples": self.min_samples,
            "env": self.env.to_dict(),
            "global": self.global_stats.to_dict(),
            "coarse": entries(self.coarse, lambda k: k),
            "mid": entries(self.mid, list),
            "fine": entries(self.fine, list),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelStore":
        if d.get("format") != STORE_FORMAT:
            raise PredictorError(f"unsupported model format {d.get('format')!r}")
        return cls(
            fine={tuple(e["key"]): KeyStats.from_dict(e) for e in d["fine"]},
            mid={tuple(e["key"]): KeyStats.from_dict(e) for e in d["mid"]},
            coarse={e["key"]: KeyStats.from_dict(e) for e in d["coarse"]},
            global_stats=KeyStats.from_dict(d["global"]),
            env=EnvFit(**d["env"]),
            min_samples=int(d["min_samples"]),
        )


def save_store(store: ModelStore, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(store.to_dict(), fh, indent=1)
        fh.write("\n")


def load_store(path: str | os.PathLike) -> ModelStore:
    with open(path, encoding="utf-8") as fh:
        try:
            return ModelStore.from_dict(json.load(fh))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, PredictorError):
                raise
            raise PredictorError(f"malformed model store: {exc}") from None


# --- features -------------------------------------------------------------------


def extract_features(run: RunMeta, pipeline: PipelineSpec, stage_id: str) -> FeatureVector:
    """Everything known when a stage's file is created: DAG position, run metadata."""
    try:
        stage = pipeline.stage(stage_id)
    except KeyError:
        raise UnknownStageError(
            f"stage {stage_id!r} not in pipeline {pipeline.pipeline_id!r}") from None
    return FeatureVector(
        pipeline_id=pipeline.pipeline_id,
        config_id=run.config_id,
        stage_id=stage.stage_id,
        stage_kind=stage.kind,
        fan_in=stage.fan_in,
        fan_out=stage.fan_out,
        depth=stage.depth,
        is_shuffle=stage.kind is StageKind.SHUFFLE,
        input_bytes=run.input_bytes,
        load_factor=run.load_factor,
        priority=run.priority,
    )


# --- training -------------------------------------------------------------------


def observed_stretch(trace: Trace) -> dict[int, float]:
    """Each run's duration relative to the fastest run of its pipeline."""
    fastest: dict[str, float] = {}
    for r in trace.runs:
        fastest[r.pipeline_id] = min(fastest.get(r.pipeline_id, math.inf), r.duration_s)
    return {r.run_id: r.duration_s / fastest[r.pipeline_id] for r in trace.runs}


def _key_stats(samples: list[tuple[float, float, float, float]], linear: bool = True) -> KeyStats:
    xs = [s[0] for s in samples]
    iops = [s[1] for s in samples]
    sizes = [s[2] for s in samples]
    stretch = float(np.mean([s[3] for s in samples]))
    if linear:
        return KeyStats(len(samples), LinearFit.fit(xs, iops), LinearFit.fit(xs, sizes), stretch)
    return KeyStats(len(samples), LinearFit.constant(iops), LinearFit.constant(sizes), stretch)


def train(history: Trace, min_samples: int = DEFAULT_MIN_SAMPLES) -> ModelStore:
    if not history.files:
        raise PredictorError("cannot train on an empty history")
    stretch = observed_stretch(history)
    fine: dict = {}
    mid: dict = {}
    coarse: dict = {}
    everything = []
    for (run_id, stage_id), group in sorted(stage_instances(history.files).items()):
        run = history.run(run_id)
        kind = history.pipeline(run.pipeline_id).stage(stage_id).kind
        s = stretch[run_id]
        sample = (
            float(run.input_bytes),
            float(np.mean([avg_iops(f) for f in group])) * s,
            float(np.mean([f.size_bytes for f in group])),
            s,
        )
        fine.setdefault((run.pipeline_id, run.config_id, stage_id), []).append(sample)
        mid.setdefault((run.pipeline_id, stage_id), []).append(sample)
        coarse.setdefault(kind.value, []).append(sample)
        everything.append(sample)

    runs_seen = sorted({f.run_id for f in history.files})
    env = EnvFit.fit([history.run(i).load_factor for i in runs_seen],
                     [history.run(i).priority for i in runs_seen],
                     [stretch[i] for i in runs_seen])
    return ModelStore(
        fine={k: _key_stats(v) for k, v in fine.items()},
        mid={k: _key_stats(v) for k, v in mid.items()},
        coarse={k: _key_stats(v) for k, v in coarse.items()},
        global_stats=_key_stats(everything, linear=False),
        env=env,
        min_samples=min_samples,
    )


# --- prediction -----------------------------------------------------------------


def lookup(store: ModelStore, features: FeatureVector) -> tuple[Granularity, KeyStats]:
    candidates = (
        (Granularity.FINE, store.fine.get((features.pipeline_id, features.config_id,
                                           features.stage_id))),
        (Granularity.MID, store.mid.get((features.pipeline_id, features.stage_id))),
        (Granularity.COARSE, store.coarse.get(features.stage_kind.value)),
    )
    for level, stats in candidates:
        if stats is not None and stats.count >= store.min_samples:
            return level, stats
    return Granularity.GLOBAL, store.global_stats


def predict(store: ModelStore, features: FeatureVector) -> Prediction:
    level, stats = lookup(store, features)
    x = float(features.input_bytes)
    stretch = store.env.expected_stretch(features.load_factor, features.priority)
    iops = max(0.0, stats.iops_fit.positive(x)) / stretch
    size = max(1.0, stats.size_fit.positive(x))
    return Prediction(iops, size, level, stats.count)


# --- evaluation -----------------------------------------------------------------


@dataclass(frozen=True)
class EvalReport:
    n_files: int
    mape: float
    accuracy: float
    true_ssd: int
    false_ssd: int
    true_hdd: int
    false_hdd: int
    by_granularity: dict[str, int]

    def to_dict(self) -> dict:
        return {
            "n_files": self.n_files, "mape": self.mape, "accuracy": self.accuracy,
            "confusion": {"true_ssd": self.true_ssd, "false_ssd": self.false_ssd,
                          "true_hdd": self.true_hdd, "false_hdd": self.false_hdd},
            "by_granularity": dict(self.by_granularity),
        }


def predictions_for(store: ModelStore, trace: Trace) -> dict[int, Prediction]:
    """Prediction per file_id, computed once per stage instance."""
    cache: dict[tuple[int, str], Prediction] = {}
    out = {}
    for f in trace.files:
        key = (f.run_id, f.stage_id)
        if key not in cache:
            run = trace.run(f.run_id)
            cache[key] = predict(store, extract_features(run, trace.pipeline(run.pipeline_id),
                                                         f.stage_id))
        out[f.file_id] = cache[key]
    return out


def evaluate(store: ModelStore, test: Trace, model: CostModel | None = None) -> EvalReport:
    if not test.files:
        raise PredictorError("cannot evaluate on an empty test trace")
    model = model or CostModel()
    preds = predictions_for(store, test)
    errors = []
    counts = {"true_ssd": 0, "false_ssd": 0, "true_hdd": 0, "false_hdd": 0}
    levels = {g.value: 0 for g in Granularity}
    for f in test.files:
        p = preds[f.file_id]
        levels[p.source_granularity.value] += 1
        true_d = io_density(f)
        pred_d = p.predicted_density
        if true_d > 0:
            errors.append(abs(pred_d - true_d) / true_d)
        actual = oracle_tier(f, model)
        guess = threshold_tier(pred_d, model)
        if guess is Tier.SSD:
            counts["true_ssd" if actual is Tier.SSD else "false_ssd"] += 1
        else:
            counts["true_hdd" if actual is Tier.HDD else "false_hdd"] += 1
    n = len(test.files)
    return EvalReport(
        n_files=n,
        mape=math.fsum(errors) / len(errors) if errors else 0.0,
        accuracy=(counts["true_ssd"] + counts["true_hdd"]) / n,
        by_granularity=levels,
        **counts,
    )
