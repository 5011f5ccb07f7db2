"""Small hand-built traces shared by the test modules."""

from __future__ import annotations

from tierplace.trace_model import (
    BYTES_PER_TB,
    PipelineSpec,
    RunMeta,
    StageKind,
    StageSpec,
    TempFileRecord,
    Trace,
)

TB = BYTES_PER_TB


def chain_pipeline(pipeline_id: str = "p0",
                   kinds: tuple[StageKind, ...] = (StageKind.SOURCE, StageKind.SHUFFLE,
                                                   StageKind.SINK)) -> PipelineSpec:
    ids = [f"s{i}" for i in range(len(kinds))]
    stages = tuple(
        StageSpec(sid, k, 0 if i == 0 else 1, 0 if i == len(kinds) - 1 else 1, i)
        for i, (sid, k) in enumerate(zip(ids, kinds))
    )
    return PipelineSpec(pipeline_id, stages, tuple(zip(ids, ids[1:])))


def fan_in_pipeline(pipeline_id: str = "fig1") -> PipelineSpec:
    """source -> three maps -> shuffle -> reduce -> sink."""
    S = StageSpec
    stages = (
        S("src", StageKind.SOURCE, 0, 3, 0),
        S("m1", StageKind.MAP, 1, 1, 1),
        S("m2", StageKind.MAP, 1, 1, 1),
        S("m3", StageKind.MAP, 1, 1, 1),
        S("shuf", StageKind.SHUFFLE, 3, 1, 2),
        S("red", StageKind.REDUCE, 1, 1, 3),
        S("out", StageKind.SINK, 1, 0, 4),
    )
    edges = (("src", "m1"), ("src", "m2"), ("src", "m3"), ("m1", "shuf"), ("m2", "shuf"),
             ("m3", "shuf"), ("shuf", "red"), ("red", "out"))
    return PipelineSpec(pipeline_id, stages, edges)


def run(run_id: int = 0, pipeline_id: str = "p0", config_id: str = "c0",
        input_bytes: int = 10**9, start: float = 0.0, end: float = 10_000.0,
        priority: int = 0, load: float = 0.5) -> RunMeta:
    return RunMeta(run_id, pipeline_id, config_id, input_bytes, priority, load, start, end)


def tfile(file_id: int, size_tb: float, iops: float, created: float = 0.0,
          lifetime: float = 1000.0, run_id: int = 0, stage_id: str = "s1",
          is_shuffle: bool = True) -> TempFileRecord:
    """A file with the given size and lifetime-average IOPS (ops rounded to an integer)."""
    return TempFileRecord(file_id, run_id, stage_id, created, created + lifetime,
                          int(round(size_tb * TB)), int(round(iops * lifetime)), is_shuffle)


def one_run_trace(files, pipeline: PipelineSpec | None = None, **run_kw) -> Trace:
    pipeline = pipeline or chain_pipeline()
    end = max([f.deleted_s for f in files], default=1.0)
    meta = run(pipeline_id=pipeline.pipeline_id, end=max(end, run_kw.pop("end", 0.0)), **run_kw)
    return Trace(runs=(meta,), pipelines=(pipeline,), files=tuple(files))
