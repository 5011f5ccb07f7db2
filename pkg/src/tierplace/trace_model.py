"""Domain types for pipelines, runs and temporary files, and the JSONL trace format.

A trace file holds one JSON object per line. Every object carries a ``kind``
discriminator (``pipeline``, ``run`` or ``file``) followed by the fields of the
corresponding type in declaration order. Pipelines come first, then runs by
ascending ``run_id``, then files by ascending ``file_id``.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields
from enum import Enum
from typing import Iterable, Sequence

BYTES_PER_TB = 10**12


class TraceError(Exception):
    """Base class for trace problems."""


class TraceParseError(TraceError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class TraceValidationError(TraceError):
    def __init__(self, record: str, rule: str):
        super().__init__(f"{record}: {rule}")
        self.record = record
        self.rule = rule


class StageKind(str, Enum):
    SOURCE = "source"
    MAP = "map"
    SHUFFLE = "shuffle"
    REDUCE = "reduce"
    SINK = "sink"


@dataclass(frozen=True)
class StageSpec:
    stage_id: str
    kind: StageKind
    fan_in: int
    fan_out: int
    depth: int


@dataclass(frozen=True)
class PipelineSpec:
    pipeline_id: str
    stages: tuple[StageSpec, ...]
    edges: tuple[tuple[str, str], ...]

    def stage(self, stage_id: str) -> StageSpec:
        for s in self.stages:
            if s.stage_id == stage_id:
                return s
        raise KeyError(stage_id)

    def predecessors(self, stage_id: str) -> list[str]:
        return [a for a, b in self.edges if b == stage_id]

    def successors(self, stage_id: str) -> list[str]:
        return [b for a, b in self.edges if a == stage_id]


@dataclass(frozen=True)
class RunMeta:
    run_id: int
    pipeline_id: str
    config_id: str
    input_bytes: int
    priority: int
    load_factor: float
    start_s: float
    end_s: float

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s


@dataclass(frozen=True)
class TempFileRecord:
    file_id: int
    run_id: int
    stage_id: str
    created_s: float
    deleted_s: float
    size_bytes: int
    total_ops: int
    is_shuffle: bool

    @property
    def lifetime_s(self) -> float:
        return self.deleted_s - self.created_s

    @property
    def size_tb(self) -> float:
        return self.size_bytes / BYTES_PER_TB


@dataclass(frozen=True)
class Trace:
    runs: tuple[RunMeta, ...] = ()
    pipelines: tuple[PipelineSpec, ...] = ()
    files: tuple[TempFileRecord, ...] = ()
    # lookup tables, rebuilt on construction and excluded from equality
    _run_index: dict = field(default=None, init=False, repr=False, compare=False)
    _pipeline_index: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "runs", tuple(self.runs))
        object.__setattr__(self, "pipelines", tuple(self.pipelines))
        object.__setattr__(self, "files", tuple(self.files))
        object.__setattr__(self, "_run_index", {r.run_id: r for r in self.runs})
        object.__setattr__(
            self, "_pipeline_index", {p.pipeline_id: p for p in self.pipelines}
        )

    def run(self, run_id: int) -> RunMeta:
        return self._run_index[run_id]

    def pipeline(self, pipeline_id: str) -> PipelineSpec:
        return self._pipeline_index[pipeline_id]

    def files_by_run(self) -> dict[int, list[TempFileRecord]]:
        out: dict[int, list[TempFileRecord]] = {}
        for f in self.files:
            out.setdefault(f.run_id, []).append(f)
        return out


def avg_iops(file: TempFileRecord) -> float:
    """Lifetime-average operation rate of a file."""
    return file.total_ops / (file.deleted_s - file.created_s)


def io_density(file: TempFileRecord) -> float:
    """Average IOPS per decimal terabyte."""
    return avg_iops(file) / (file.size_bytes / BYTES_PER_TB)


# --- validation -------------------------------------------------------------


def _check(cond: bool, record: str, rule: str) -> None:
    if not cond:
        raise TraceValidationError(record, rule)


def validate_pipeline(p: PipelineSpec) -> None:
    rec = f"pipeline {p.pipeline_id}"
    ids = [s.stage_id for s in p.stages]
    _check(len(set(ids)) == len(ids), rec, "stage_ids must be unique")
    known = set(ids)
    for a, b in p.edges:
        _check(a in known and b in known, rec, f"edge ({a}, {b}) names an unknown stage")
        _check(a != b, rec, f"edge ({a}, {b}) is a self-loop")
    _check(any(s.kind is StageKind.SOURCE for s in p.stages), rec, "needs a source stage")
    _check(any(s.kind is StageKind.SINK for s in p.stages), rec, "needs a sink stage")

    preds: dict[str, list[str]] = {i: [] for i in ids}
    succs: dict[str, list[str]] = {i: [] for i in ids}
    for a, b in p.edges:
        preds[b].append(a)
        succs[a].append(b)

    # Kahn's algorithm; leftover nodes mean a cycle
    indeg = {i: len(preds[i]) for i in ids}
    ready = [i for i in ids if indeg[i] == 0]
    order = []
    while ready:
        n = ready.pop()
        order.append(n)
        for m in succs[n]:
            indeg[m] -= 1
            if indeg[m] == 0:
                ready.append(m)
    _check(len(order) == len(ids), rec, "edges must form a DAG (cycle found)")

    by_id = {s.stage_id: s for s in p.stages}
    for s in p.stages:
        srec = f"{rec} stage {s.stage_id}"
        _check(s.fan_in == len(preds[s.stage_id]), srec, "fan_in must equal predecessor count")
        _check(s.fan_out == len(succs[s.stage_id]), srec, "fan_out must equal successor count")
        if s.kind is StageKind.SOURCE:
            _check(s.fan_in == 0, srec, "source stages have fan_in = 0")
            _check(s.depth == 0, srec, "source stages have depth = 0")
        else:
            _check(s.fan_in > 0, srec, "non-source stages need a predecessor")
            deepest = max(by_id[q].depth for q in preds[s.stage_id])
            _check(s.depth <= 1 + deepest, srec, "depth must be <= 1 + max predecessor depth")
            _check(s.depth >= 1, srec, "non-source depth must be >= 1")
        if s.kind is StageKind.SINK:
            _check(s.fan_out == 0, srec, "sink stages have fan_out = 0")


def validate_run(r: RunMeta) -> None:
    rec = f"run {r.run_id}"
    _check(r.run_id >= 0, rec, "run_id must be unsigned")
    _check(r.end_s > r.start_s, rec, "end_s must exceed start_s")
    _check(r.input_bytes > 0, rec, "input_bytes must be positive")
    _check(r.load_factor >= 0, rec, "load_factor must be >= 0")
    _check(r.priority >= 0, rec, "priority must be >= 0")


def validate_file(f: TempFileRecord) -> None:
    rec = f"file {f.file_id}"
    _check(f.file_id >= 0, rec, "file_id must be unsigned")
    _check(f.deleted_s > f.created_s, rec, "deleted_s must exceed created_s")
    _check(f.size_bytes > 0, rec, "size_bytes must be positive")
    _check(f.total_ops >= 0, rec, "total_ops must be >= 0")


def validate_trace(trace: Trace) -> None:
    """Raise TraceValidationError naming the first violated rule."""
    pids = set()
    for p in trace.pipelines:
        _check(p.pipeline_id not in pids, f"pipeline {p.pipeline_id}", "pipeline_ids must be unique")
        pids.add(p.pipeline_id)
        validate_pipeline(p)
    runs: dict[int, RunMeta] = {}
    for r in trace.runs:
        _check(r.run_id not in runs, f"run {r.run_id}", "run_ids must be unique")
        validate_run(r)
        _check(r.pipeline_id in pids, f"run {r.run_id}", f"unknown pipeline_id {r.pipeline_id!r}")
        runs[r.run_id] = r
    seen = set()
    stage_sets = {p.pipeline_id: {s.stage_id for s in p.stages} for p in trace.pipelines}
    for f in trace.files:
        rec = f"file {f.file_id}"
        _check(f.file_id not in seen, rec, "file_ids must be unique")
        seen.add(f.file_id)
        validate_file(f)
        _check(f.run_id in runs, rec, f"unknown run_id {f.run_id}")
        r = runs[f.run_id]
        _check(f.stage_id in stage_sets[r.pipeline_id], rec,
               f"stage {f.stage_id!r} not in pipeline {r.pipeline_id!r}")
        _check(r.start_s <= f.created_s and f.deleted_s <= r.end_s, rec,
               "lifetime must lie within the run's [start_s, end_s]")


# --- serialization ----------------------------------------------------------


def _stage_to_obj(s: StageSpec) -> dict:
    return {"stage_id": s.stage_id, "kind": s.kind.value, "fan_in": s.fan_in,
            "fan_out": s.fan_out, "depth": s.depth}


def _record_to_obj(rec) -> dict:
    if isinstance(rec, PipelineSpec):
        return {"kind": "pipeline", "pipeline_id": rec.pipeline_id,
                "stages": [_stage_to_obj(s) for s in rec.stages],
                "edges": [list(e) for e in rec.edges]}
    obj = {"kind": "run" if isinstance(rec, RunMeta) else "file"}
    for f in fields(rec):
        obj[f.name] = getattr(rec, f.name)
    return obj


def dumps_record(rec) -> str:
    return json.dumps(_record_to_obj(rec), separators=(",", ":"))


def iter_trace_lines(trace: Trace) -> Iterable[str]:
    for p in trace.pipelines:
        yield dumps_record(p)
    for r in sorted(trace.runs, key=lambda r: r.run_id):
        yield dumps_record(r)
    for f in sorted(trace.files, key=lambda f: f.file_id):
        yield dumps_record(f)


def save_trace(trace: Trace, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in iter_trace_lines(trace):
            fh.write(line)
            fh.write("\n")


def _require(obj: dict, name: str, types, line_no: int):
    if name not in obj:
        raise TraceParseError(line_no, f"missing field {name!r}")
    v = obj[name]
    # bool is an int subclass; keep them apart
    if isinstance(v, bool) and bool not in types:
        raise TraceParseError(line_no, f"field {name!r} has type bool")
    if not isinstance(v, types):
        raise TraceParseError(line_no, f"field {name!r} has type {type(v).__name__}")
    return v


def _parse_stage(obj, line_no: int) -> StageSpec:
    if not isinstance(obj, dict):
        raise TraceParseError(line_no, "stage entries must be objects")
    kind = _require(obj, "kind", (str,), line_no)
    try:
        kind = StageKind(kind)
    except ValueError:
        raise TraceParseError(line_no, f"unknown stage kind {kind!r}") from None
    return StageSpec(
        stage_id=_require(obj, "stage_id", (str,), line_no),
        kind=kind,
        fan_in=_require(obj, "fan_in", (int,), line_no),
        fan_out=_require(obj, "fan_out", (int,), line_no),
        depth=_require(obj, "depth", (int,), line_no),
    )


def parse_line(line: str, line_no: int):
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise TraceParseError(line_no, f"invalid JSON ({exc.msg})") from None
    if not isinstance(obj, dict):
        raise TraceParseError(line_no, "record must be a JSON object")
    kind = obj.get("kind")
    num = (int, float)
    if kind == "pipeline":
        edges = _require(obj, "edges", (list,), line_no)
        parsed_edges = []
        for e in edges:
            if not (isinstance(e, list) and len(e) == 2 and all(isinstance(x, str) for x in e)):
                raise TraceParseError(line_no, "edges must be [from, to] string pairs")
            parsed_edges.append((e[0], e[1]))
        return PipelineSpec(
            pipeline_id=_require(obj, "pipeline_id", (str,), line_no),
            stages=tuple(_parse_stage(s, line_no) for s in _require(obj, "stages", (list,), line_no)),
            edges=tuple(parsed_edges),
        )
    if kind == "run":
        return RunMeta(
            run_id=_require(obj, "run_id", (int,), line_no),
            pipeline_id=_require(obj, "pipeline_id", (str,), line_no),
            config_id=_require(obj, "config_id", (str,), line_no),
            input_bytes=_require(obj, "input_bytes", (int,), line_no),
            priority=_require(obj, "priority", (int,), line_no),
            load_factor=float(_require(obj, "load_factor", num, line_no)),
            start_s=float(_require(obj, "start_s", num, line_no)),
            end_s=float(_require(obj, "end_s", num, line_no)),
        )
    if kind == "file":
        return TempFileRecord(
            file_id=_require(obj, "file_id", (int,), line_no),
            run_id=_require(obj, "run_id", (int,), line_no),
            stage_id=_require(obj, "stage_id", (str,), line_no),
            created_s=float(_require(obj, "created_s", num, line_no)),
            deleted_s=float(_require(obj, "deleted_s", num, line_no)),
            size_bytes=_require(obj, "size_bytes", (int,), line_no),
            total_ops=_require(obj, "total_ops", (int,), line_no),
            is_shuffle=_require(obj, "is_shuffle", (bool,), line_no),
        )
    raise TraceParseError(line_no, f"unknown record kind {kind!r}")


def load_trace(path: str | os.PathLike, validate: bool = True) -> Trace:
    pipelines, runs, files = [], [], []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            rec = parse_line(line, line_no)
            if isinstance(rec, PipelineSpec):
                pipelines.append(rec)
            elif isinstance(rec, RunMeta):
                runs.append(rec)
            else:
                files.append(rec)
    trace = Trace(runs=tuple(runs), pipelines=tuple(pipelines), files=tuple(files))
    if validate:
        validate_trace(trace)
    return trace


def split_trace(trace: Trace, fraction: float = 0.5) -> tuple[Trace, Trace]:
    """Split runs chronologically: the earliest ``fraction`` of runs form the history."""
    ordered = sorted(trace.runs, key=lambda r: (r.start_s, r.run_id))
    cut = int(round(len(ordered) * fraction))
    head_ids = {r.run_id for r in ordered[:cut]}

    def part(keep) -> Trace:
        runs = tuple(r for r in trace.runs if keep(r.run_id))
        return Trace(runs=runs, pipelines=trace.pipelines,
                     files=tuple(f for f in trace.files if keep(f.run_id)))

    return part(lambda i: i in head_ids), part(lambda i: i not in head_ids)


def shuffle_aggregates(trace: Trace) -> dict[tuple[int, str], list[TempFileRecord]]:
    """Group shuffle files by stage instance, keyed (run_id, stage_id)."""
    groups: dict[tuple[int, str], list[TempFileRecord]] = {}
    for f in trace.files:
        if f.is_shuffle:
            groups.setdefault((f.run_id, f.stage_id), []).append(f)
    return dict(sorted(groups.items()))


def stage_instances(files: Sequence[TempFileRecord]) -> dict[tuple[int, str], list[TempFileRecord]]:
    groups: dict[tuple[int, str], list[TempFileRecord]] = {}
    for f in files:
        groups.setdefault((f.run_id, f.stage_id), []).append(f)
    return groups
