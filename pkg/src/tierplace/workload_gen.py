"""Seeded synthetic trace generator.

Each pipeline is a random DAG of stages. Per run, the generator draws an input
size, a configuration, a start time and an environment stretch, then emits the
temporary files of every non-sink stage.

The model behind a file's numbers:

* run IOPS (unstretched) = ``iops_per_input_byte * input_bytes * noise``,
  split across stages and then files by weights fixed per pipeline;
* stage density = ``median * stage_mult * config_mult * run_mult`` (log-normal
  factors); file size follows as ``iops / density``;
* the environment stretch multiplies every time offset inside the run, so
  lifetimes grow, average IOPS and density shrink, and ``total_ops`` is kept.

When ``target_above_crossover_fraction`` is set, the density median is solved
for so that this fraction of shuffle stage instances lands above the crossover
once the stretch distribution is accounted for.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Sequence

import numpy as np
from scipy import optimize, stats

from .trace_model import (
    BYTES_PER_TB,
    PipelineSpec,
    RunMeta,
    StageKind,
    StageSpec,
    TempFileRecord,
    Trace,
    avg_iops,
    shuffle_aggregates,
)

SECONDS_PER_DAY = 86400.0


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class GeneratorConfig:
    seed: int = 0
    num_pipelines: int = 20
    runs_per_pipeline: int = 5
    # (config count, weight) pairs
    configs_per_pipeline_dist: tuple[tuple[int, float], ...] = (
        (1, 0.4), (2, 0.25), (5, 0.2), (20, 0.1), (60, 0.04), (250, 0.01),
    )
    stages_per_pipeline: tuple[int, int] = (6, 12)
    shuffle_fraction: float = 0.4
    files_per_stage: tuple[int, int] = (2, 6)
    base_density_median: float = 150.0
    base_density_sigma: float = 0.8
    # overrides base_density_median when set
    target_above_crossover_fraction: float | None = 0.7
    crossover_iops_per_tb: float = 150.0
    nonshuffle_density_factor: float = 0.1
    config_density_sigma: float = 0.4
    run_density_sigma: float = 0.5
    input_bytes_range: tuple[float, float] = (1e11, 1e13)
    iops_per_input_byte: float = 1e-8
    iops_noise_sigma: float = 0.1
    run_duration_range_s: tuple[float, float] = (3600.0, 6 * 3600.0)
    horizon_days: float = 1.0
    env_stretch_max: float = 5.0
    stretch_concentration: float = 1.0
    diurnal_amplitude: float = 0.4
    max_priority: int = 2
    priority_relief: float = 0.25

    def __post_init__(self):
        _validate(self)

    @classmethod
    def from_dict(cls, obj: dict) -> "GeneratorConfig":
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(obj) - names)
        if unknown:
            raise ConfigError(unknown[0], "unknown field")
        kw = dict(obj)
        converters = {
            "configs_per_pipeline_dist": lambda v: tuple(_pair(x, int, float) for x in v),
            "stages_per_pipeline": lambda v: _pair(v, int, int),
            "files_per_stage": lambda v: _pair(v, int, int),
            "input_bytes_range": lambda v: _pair(v, float, float),
            "run_duration_range_s": lambda v: _pair(v, float, float),
        }
        for name, conv in converters.items():
            if name in kw:
                try:
                    kw[name] = conv(kw[name])
                except (TypeError, ValueError):
                    raise ConfigError(name, "malformed value") from None
        return cls(**kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = [list(x) if isinstance(x, tuple) else x for x in v]
        return d


def _pair(v, cast_a, cast_b) -> tuple:
    if not isinstance(v, (list, tuple)) or len(v) != 2:
        raise ValueError("expected a two-element list")
    return cast_a(v[0]), cast_b(v[1])


def _validate(c: GeneratorConfig) -> None:
    def need(ok, name, msg):
        if not ok:
            raise ConfigError(name, msg)

    def is_int(v):
        return isinstance(v, (int, np.integer)) and not isinstance(v, bool)

    need(is_int(c.seed) and c.seed >= 0, "seed", "must be an unsigned integer")
    need(is_int(c.num_pipelines) and c.num_pipelines >= 0, "num_pipelines", "must be a count")
    need(is_int(c.runs_per_pipeline) and c.runs_per_pipeline >= 0, "runs_per_pipeline",
         "must be a count")
    dist = c.configs_per_pipeline_dist
    need(len(dist) > 0 and all(n >= 1 and w >= 0 for n, w in dist)
         and sum(w for _, w in dist) > 0,
         "configs_per_pipeline_dist", "needs counts >= 1 and non-negative weights with positive sum")
    lo, hi = c.stages_per_pipeline
    need(2 <= lo <= hi, "stages_per_pipeline", "range must satisfy 2 <= low <= high")
    lo, hi = c.files_per_stage
    need(1 <= lo <= hi, "files_per_stage", "range must satisfy 1 <= low <= high")
    for name in ("shuffle_fraction", "diurnal_amplitude", "priority_relief"):
        v = getattr(c, name)
        need(0.0 <= v <= 1.0, name, "must be a fraction in [0, 1]")
    t = c.target_above_crossover_fraction
    need(t is None or 0.0 < t < 1.0, "target_above_crossover_fraction",
         "must be in (0, 1) or null")
    for name in ("base_density_median", "crossover_iops_per_tb", "nonshuffle_density_factor",
                 "iops_per_input_byte", "stretch_concentration", "horizon_days"):
        v = getattr(c, name)
        need(math.isfinite(v) and v > 0, name, "must be positive")
    for name in ("base_density_sigma", "config_density_sigma", "run_density_sigma",
                 "iops_noise_sigma"):
        v = getattr(c, name)
        need(math.isfinite(v) and v >= 0, name, "must be >= 0")
    for name in ("input_bytes_range", "run_duration_range_s"):
        lo, hi = getattr(c, name)
        need(0 < lo <= hi and math.isfinite(hi), name, "range must satisfy 0 < low <= high")
    need(c.input_bytes_range[0] >= 1, "input_bytes_range", "low must be >= 1 byte")
    need(math.isfinite(c.env_stretch_max) and c.env_stretch_max >= 1.0, "env_stretch_max",
         "must be >= 1")
    need(is_int(c.max_priority) and c.max_priority >= 0, "max_priority", "must be a count")


def load_generator_config(path: str | os.PathLike) -> GeneratorConfig:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    if not isinstance(obj, dict):
        raise ConfigError("<root>", "generator config must be a JSON object")
    return GeneratorConfig.from_dict(obj)


# --- environment --------------------------------------------------------------


@dataclass(frozen=True)
class EnvModel:
    """Diurnal cluster load and the run stretch it induces.

    Load follows a 24-hour sinusoid around 0.5. The stretch of a run is
    ``1 + (stretch_max - 1) * u`` with ``u ~ Beta(k*mu, k*(1-mu))`` and ``mu``
    the load, relieved for higher-priority jobs.
    """

    diurnal_amplitude: float = 0.4
    stretch_max: float = 5.0
    concentration: float = 1.0
    priority_relief: float = 0.25

    def load_at(self, t_s: float) -> float:
        return 0.5 + 0.5 * self.diurnal_amplitude * math.sin(2 * math.pi * t_s / SECONDS_PER_DAY)

    def beta_mean(self, load: float, priority: int) -> float:
        mu = load * (1.0 - self.priority_relief * priority)
        return min(max(mu, 0.01), 0.99)

    def beta_params(self, load: float, priority: int) -> tuple[float, float]:
        mu = self.beta_mean(load, priority)
        return self.concentration * mu, self.concentration * (1.0 - mu)

    def stretch_from_u(self, u: float) -> float:
        return 1.0 + (self.stretch_max - 1.0) * u

    def expected_stretch(self, load: float, priority: int = 0) -> float:
        return self.stretch_from_u(self.beta_mean(load, priority))

    def draw_stretch(self, rng: np.random.Generator, load: float, priority: int) -> float:
        a, b = self.beta_params(load, priority)
        u = float(rng.beta(a, b))
        return self.stretch_from_u(u)


def env_model(config: GeneratorConfig) -> EnvModel:
    return EnvModel(
        diurnal_amplitude=config.diurnal_amplitude,
        stretch_max=config.env_stretch_max,
        concentration=config.stretch_concentration,
        priority_relief=config.priority_relief,
    )


def _log_stretch_grid(config: GeneratorConfig, n_time: int = 96, n_q: int = 64) -> np.ndarray:
    """Equal-weight samples of ln(stretch) over start time, priority and u quantile."""
    env = env_model(config)
    if config.env_stretch_max == 1.0:
        return np.zeros(1)
    horizon = config.horizon_days * SECONDS_PER_DAY
    ts = (np.arange(n_time) + 0.5) / n_time * horizon
    qs = (np.arange(n_q) + 0.5) / n_q
    out = []
    for t in ts:
        load = env.load_at(float(t))
        for prio in range(config.max_priority + 1):
            a, b = env.beta_params(load, prio)
            u = stats.beta.ppf(qs, a, b)
            out.append(np.log(1.0 + (env.stretch_max - 1.0) * u))
    return np.concatenate(out)


def calibrated_median(config: GeneratorConfig) -> float:
    """Shuffle density median meeting the configured above-crossover fraction."""
    target = config.target_above_crossover_fraction
    if target is None:
        return config.base_density_median
    sigma = math.sqrt(config.base_density_sigma**2 + config.config_density_sigma**2
                      + config.run_density_sigma**2)
    sigma = max(sigma, 1e-9)
    log_s = _log_stretch_grid(config)
    log_c = math.log(config.crossover_iops_per_tb)

    def above(log_m: float) -> float:
        return float(np.mean(stats.norm.sf((log_c - log_m + log_s) / sigma))) - target

    lo, hi = log_c - 60.0, log_c + 60.0
    return math.exp(optimize.brentq(above, lo, hi, xtol=1e-12))


# --- structure ------------------------------------------------------------------


def _random_pipeline(rng: np.random.Generator, pipeline_id: str, n_stages: int,
                     shuffle_fraction: float) -> PipelineSpec:
    ids = [f"s{i:02d}" for i in range(n_stages)]
    internal = list(range(1, n_stages - 1))
    edges: list[tuple[int, int]] = []
    for i in internal:
        n_pred = int(rng.integers(1, min(3, i) + 1))
        for p in sorted(rng.choice(i, size=n_pred, replace=False).tolist()):
            edges.append((p, i))
    sink = n_stages - 1
    has_succ = {a for a, _ in edges}
    for i in range(sink):
        if i not in has_succ:
            edges.append((i, sink))

    n_shuffle = int(round(shuffle_fraction * len(internal)))
    shuffles = set(rng.choice(internal, size=n_shuffle, replace=False).tolist()) if internal else set()

    fan_in = [0] * n_stages
    fan_out = [0] * n_stages
    depth = [0] * n_stages
    for a, b in edges:
        fan_in[b] += 1
        fan_out[a] += 1
    # ids are already in topological order
    for b in range(1, n_stages):
        depth[b] = 1 + max(depth[a] for a, bb in edges if bb == b)

    stages = []
    for i in range(n_stages):
        if i == 0:
            kind = StageKind.SOURCE
        elif i == sink:
            kind = StageKind.SINK
        elif i in shuffles:
            kind = StageKind.SHUFFLE
        elif fan_in[i] > 1:
            kind = StageKind.REDUCE
        else:
            kind = StageKind.MAP
        stages.append(StageSpec(ids[i], kind, fan_in[i], fan_out[i], depth[i]))
    return PipelineSpec(pipeline_id, tuple(stages), tuple((ids[a], ids[b]) for a, b in edges))


@dataclass
class _StagePlan:
    stage: StageSpec
    iops_weight: float
    log_density: float
    file_weights: np.ndarray
    created_frac: np.ndarray
    deleted_frac: float


@dataclass
class _PipelinePlan:
    spec: PipelineSpec
    base_duration_s: float
    priority: int
    stages: list[_StagePlan]
    config_ids: list[str]
    config_log_mult: np.ndarray  # (n_configs, n_stage_plans)
    run_ids: list[int] = field(default_factory=list)


def _loguniform(rng: np.random.Generator, lo: float, hi: float) -> float:
    if lo == hi:
        return float(lo)
    return float(math.exp(rng.uniform(math.log(lo), math.log(hi))))


def _plan_pipeline(rng: np.random.Generator, config: GeneratorConfig, index: int,
                   log_median: float) -> _PipelinePlan:
    pid = f"p{index:03d}"
    n_stages = int(rng.integers(config.stages_per_pipeline[0], config.stages_per_pipeline[1] + 1))
    spec = _random_pipeline(rng, pid, n_stages, config.shuffle_fraction)
    base_duration = _loguniform(rng, *config.run_duration_range_s)
    priority = int(rng.integers(0, config.max_priority + 1))

    max_depth = max(s.depth for s in spec.stages)
    depth_of = {s.stage_id: s.depth for s in spec.stages}
    slot = 1.0 / (max_depth + 1)
    plans = []
    for s in spec.stages:
        if s.kind is StageKind.SINK:
            continue
        is_shuffle = s.kind is StageKind.SHUFFLE
        n_files = int(rng.integers(config.files_per_stage[0], config.files_per_stage[1] + 1))
        weight = (3.0 if is_shuffle else 1.0) * float(rng.lognormal(0.0, 0.5))
        log_d = log_median + float(rng.normal(0.0, config.base_density_sigma))
        if not is_shuffle:
            log_d += math.log(config.nonshuffle_density_factor)
        file_w = rng.dirichlet(np.full(n_files, 2.0))
        # files appear during the first half of the stage's slot
        created = (s.depth + 0.5 * rng.uniform(0.0, 1.0, size=n_files)) * slot
        succ_end = max((depth_of[b] + 1) * slot for a, b in spec.edges if a == s.stage_id)
        plans.append(_StagePlan(s, weight, log_d, file_w, created, min(succ_end, 1.0)))
    total_w = sum(p.iops_weight for p in plans)
    for p in plans:
        p.iops_weight /= total_w

    counts = np.array([n for n, _ in config.configs_per_pipeline_dist])
    weights = np.array([w for _, w in config.configs_per_pipeline_dist], dtype=float)
    n_configs = int(rng.choice(counts, p=weights / weights.sum()))
    config_ids = [f"{pid}-c{k:03d}" for k in range(n_configs)]
    cfg_mult = rng.normal(0.0, config.config_density_sigma, size=(n_configs, len(plans)))
    return _PipelinePlan(spec, base_duration, priority, plans, config_ids, cfg_mult)


# --- runs and files ----------------------------------------------------------------


def stretch_run(run: RunMeta, files: Sequence[TempFileRecord],
                factor: float) -> tuple[RunMeta, list[TempFileRecord]]:
    """Scale every time offset inside a run by ``factor``; op counts and sizes stay."""
    if not factor >= 1.0:
        raise ValueError(f"stretch factor must be >= 1, got {factor}")
    start = run.start_s
    duration = run.duration_s * factor
    new_run = replace(run, end_s=start + duration)
    out = []
    for f in files:
        c = min(max((f.created_s - start) / run.duration_s, 0.0), 1.0)
        d = min(max((f.deleted_s - start) / run.duration_s, 0.0), 1.0)
        out.append(replace(f, created_s=start + c * duration, deleted_s=start + d * duration))
    return new_run, out


def _emit_run(plan: _PipelinePlan, config: GeneratorConfig, run_id: int, config_index: int,
              input_bytes: int, start_s: float, duration_s: float, load: float,
              iops_noise: float, run_log_mult: np.ndarray,
              next_file_id: int) -> tuple[RunMeta, list[TempFileRecord]]:
    run = RunMeta(
        run_id=run_id,
        pipeline_id=plan.spec.pipeline_id,
        config_id=plan.config_ids[config_index],
        input_bytes=input_bytes,
        priority=plan.priority,
        load_factor=load,
        start_s=start_s,
        end_s=start_s + duration_s,
    )
    run_iops = config.iops_per_input_byte * input_bytes * iops_noise
    files = []
    fid = next_file_id
    for j, sp in enumerate(plan.stages):
        density = math.exp(sp.log_density + plan.config_log_mult[config_index, j] + run_log_mult[j])
        for w, c in zip(sp.file_weights, sp.created_frac):
            iops = run_iops * sp.iops_weight * float(w)
            lifetime = (sp.deleted_frac - float(c)) * plan.base_duration_s
            files.append(TempFileRecord(
                file_id=fid,
                run_id=run_id,
                stage_id=sp.stage.stage_id,
                created_s=start_s + float(c) * duration_s,
                deleted_s=start_s + sp.deleted_frac * duration_s,
                size_bytes=max(1, int(round(iops / density * BYTES_PER_TB))),
                total_ops=int(round(iops * lifetime)),
                is_shuffle=sp.stage.kind is StageKind.SHUFFLE,
            ))
            fid += 1
    return run, files


def generate(config: GeneratorConfig) -> Trace:
    """Deterministic synthetic trace for ``config`` (seeded by ``config.seed``)."""
    rng = np.random.default_rng(config.seed)
    env = env_model(config)
    log_median = math.log(calibrated_median(config))
    horizon = config.horizon_days * SECONDS_PER_DAY

    plans = [_plan_pipeline(rng, config, i, log_median) for i in range(config.num_pipelines)]
    runs: list[RunMeta] = []
    files: list[TempFileRecord] = []
    run_id = 0
    for plan in plans:
        for _ in range(config.runs_per_pipeline):
            k = int(rng.integers(len(plan.config_ids)))
            input_bytes = int(round(_loguniform(rng, *config.input_bytes_range)))
            start = float(rng.uniform(0.0, horizon))
            load = env.load_at(start)
            stretch = env.draw_stretch(rng, load, plan.priority)
            noise = float(math.exp(rng.normal(0.0, config.iops_noise_sigma)))
            run_mult = rng.normal(0.0, config.run_density_sigma, size=len(plan.stages))
            run, run_files = _emit_run(plan, config, run_id, k, input_bytes, start,
                                       plan.base_duration_s * stretch, load, noise, run_mult, 0)
            runs.append(run)
            files.extend(run_files)
            run_id += 1

    # file ids follow creation order across the whole trace
    files.sort(key=lambda f: (f.created_s, f.run_id, f.stage_id, f.file_id))
    files = [replace(f, file_id=i) for i, f in enumerate(files)]
    return Trace(runs=tuple(runs), pipelines=tuple(p.spec for p in plans), files=tuple(files))


# --- summaries -------------------------------------------------------------------


def config_histogram(trace: Trace) -> dict[str, int]:
    seen: dict[str, set[str]] = {}
    for r in trace.runs:
        seen.setdefault(r.pipeline_id, set()).add(r.config_id)
    return {pid: len(cfgs) for pid, cfgs in sorted(seen.items())}


def density_scatter(trace: Trace) -> list[tuple[float, float]]:
    """(total size in TB, summed avg IOPS) for every shuffle stage instance."""
    points = []
    for group in shuffle_aggregates(trace).values():
        size = math.fsum(f.size_bytes for f in group) / BYTES_PER_TB
        points.append((size, math.fsum(avg_iops(f) for f in group)))
    return points


def fraction_above(points: Sequence[tuple[float, float]], crossover: float) -> float:
    if not points:
        return 0.0
    return sum(1 for size, iops in points if iops / size > crossover) / len(points)


def run_total_ops(trace: Trace) -> dict[int, int]:
    out = {r.run_id: 0 for r in trace.runs}
    for f in trace.files:
        out[f.run_id] += f.total_ops
    return out


def run_avg_iops(trace: Trace) -> dict[int, float]:
    """Summed lifetime-average IOPS of each run's files."""
    out = {r.run_id: 0.0 for r in trace.runs}
    for f in trace.files:
        out[f.run_id] += avg_iops(f)
    return out
