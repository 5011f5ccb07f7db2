import dataclasses
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import TB, chain_pipeline, one_run_trace, run, tfile
from tierplace.trace_model import (
    StageKind,
    StageSpec,
    PipelineSpec,
    TempFileRecord,
    Trace,
    TraceParseError,
    TraceValidationError,
    avg_iops,
    io_density,
    iter_trace_lines,
    load_trace,
    save_trace,
    shuffle_aggregates,
    split_trace,
    validate_pipeline,
    validate_trace,
)
from tierplace.workload_gen import GeneratorConfig, generate


def _file(total_ops, lifetime, size_bytes=TB):
    return TempFileRecord(1, 0, "s1", 10.0, 10.0 + lifetime, size_bytes, total_ops, True)


@pytest.mark.parametrize("ops,life,expected", [(300_000, 1000.0, 300.0), (0, 77.0, 0.0),
                                               (150, 1.0, 150.0)])
def test_avg_iops_examples(ops, life, expected):
    assert avg_iops(_file(ops, life)) == expected


@pytest.mark.parametrize("ops,life,size,expected", [
    (300_000, 1000.0, TB, 300.0),
    (150_000, 1000.0, TB, 150.0),
    (30_000, 1000.0, 20 * TB, 1.5),
])
def test_io_density_examples(ops, life, size, expected):
    assert io_density(_file(ops, life, size)) == pytest.approx(expected, rel=1e-15)


@given(ops=st.integers(1, 10**12), size=st.integers(1, 10**15),
       life=st.floats(1e-3, 1e6, allow_nan=False))
def test_io_density_scale_consistent(ops, size, life):
    d = io_density(_file(ops, life, size))
    assert io_density(_file(ops, life, 2 * size)) == pytest.approx(d / 2, rel=1e-12)
    assert io_density(_file(2 * ops, life, size)) == pytest.approx(2 * d, rel=1e-12)


def test_round_trip_generated(tmp_path):
    trace = generate(GeneratorConfig(seed=5, num_pipelines=3, runs_per_pipeline=3))
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    save_trace(trace, a)
    loaded = load_trace(a)
    assert loaded == trace
    save_trace(loaded, b)
    assert a.read_bytes() == b.read_bytes()


def test_record_order_and_kinds(tmp_path):
    trace = generate(GeneratorConfig(seed=1, num_pipelines=2, runs_per_pipeline=2))
    kinds = [json.loads(line)["kind"] for line in iter_trace_lines(trace)]
    n_p, n_r = len(trace.pipelines), len(trace.runs)
    assert kinds == ["pipeline"] * n_p + ["run"] * n_r + ["file"] * len(trace.files)
    ids = [json.loads(line)["file_id"] for line in list(iter_trace_lines(trace))[n_p + n_r:]]
    assert ids == sorted(ids)


@st.composite
def traces(draw):
    n_files = draw(st.integers(0, 6))
    files = []
    for i in range(n_files):
        created = draw(st.floats(0.0, 5000.0, allow_nan=False, allow_subnormal=False))
        life = draw(st.floats(1e-6, 5000.0, allow_nan=False, allow_subnormal=False))
        if not created + life > created:
            life = 1.0
        files.append(TempFileRecord(i, 0, "s1", created, created + life,
                                    draw(st.integers(1, 10**15)), draw(st.integers(0, 10**12)),
                                    draw(st.booleans())))
    end = max([f.deleted_s for f in files], default=1.0)
    meta = run(load=draw(st.floats(0.0, 3.0, allow_nan=False)), end=end)
    return Trace(runs=(meta,), pipelines=(chain_pipeline(),), files=tuple(files))


@settings(max_examples=60, deadline=None)
@given(t=traces())
def test_round_trip_property(tmp_path_factory, t):
    d = tmp_path_factory.mktemp("rt")
    save_trace(t, d / "a")
    loaded = load_trace(d / "a")
    assert loaded == t
    save_trace(loaded, d / "b")
    assert (d / "a").read_bytes() == (d / "b").read_bytes()


def test_reversed_lifetime_cites_file_id(tmp_path):
    t = one_run_trace([tfile(0, 1.0, 10.0), tfile(7, 1.0, 10.0)])
    lines = list(iter_trace_lines(t))
    bad = json.loads(lines[-1])
    bad["created_s"], bad["deleted_s"] = bad["deleted_s"], bad["created_s"]
    lines[-1] = json.dumps(bad)
    (tmp_path / "t").write_text("\n".join(lines) + "\n")
    with pytest.raises(TraceValidationError) as exc:
        load_trace(tmp_path / "t")
    assert exc.value.record == "file 7"
    assert "deleted_s" in exc.value.rule


def test_unknown_run_id_is_referential_error():
    t = one_run_trace([tfile(0, 1.0, 10.0)])
    t = Trace(t.runs, t.pipelines, (dataclasses.replace(t.files[0], run_id=99),))
    with pytest.raises(TraceValidationError, match="unknown run_id 99"):
        validate_trace(t)


def test_parse_error_has_line_number(tmp_path):
    t = one_run_trace([tfile(0, 1.0, 10.0)])
    lines = list(iter_trace_lines(t))
    lines.insert(2, '{"kind": "file", "file_id": "x"}')
    (tmp_path / "t").write_text("\n".join(lines) + "\n")
    with pytest.raises(TraceParseError) as exc:
        load_trace(tmp_path / "t")
    assert exc.value.line_no == 3


def test_bool_is_not_an_int(tmp_path):
    t = one_run_trace([tfile(0, 1.0, 10.0)])
    lines = list(iter_trace_lines(t))
    obj = json.loads(lines[-1])
    obj["total_ops"] = True
    lines[-1] = json.dumps(obj)
    (tmp_path / "t").write_text("\n".join(lines) + "\n")
    with pytest.raises(TraceParseError):
        load_trace(tmp_path / "t")


def test_file_outside_run_window():
    t = one_run_trace([tfile(0, 1.0, 10.0, created=5.0)], end=100.0)
    late = dataclasses.replace(t.files[0], deleted_s=t.runs[0].end_s + 1)
    with pytest.raises(TraceValidationError, match="within"):
        validate_trace(Trace(t.runs, t.pipelines, (late,)))


def test_cycle_rejected():
    S = StageSpec
    p = PipelineSpec("cyc", (S("a", StageKind.SOURCE, 0, 1, 0), S("b", StageKind.MAP, 2, 1, 1),
                             S("c", StageKind.MAP, 1, 2, 2), S("d", StageKind.SINK, 1, 0, 3)),
                     (("a", "b"), ("b", "c"), ("c", "b"), ("c", "d")))
    with pytest.raises(TraceValidationError, match="cycle"):
        validate_pipeline(p)


def test_fan_in_must_match_edges():
    p = chain_pipeline()
    stages = list(p.stages)
    stages[1] = dataclasses.replace(stages[1], fan_in=2)
    with pytest.raises(TraceValidationError, match="fan_in"):
        validate_pipeline(PipelineSpec(p.pipeline_id, tuple(stages), p.edges))


def test_source_depth_zero():
    p = chain_pipeline()
    stages = list(p.stages)
    stages[0] = dataclasses.replace(stages[0], depth=1)
    with pytest.raises(TraceValidationError):
        validate_pipeline(PipelineSpec(p.pipeline_id, tuple(stages), p.edges))


def test_split_is_chronological():
    trace = generate(GeneratorConfig(seed=2, num_pipelines=2, runs_per_pipeline=6))
    head, tail = split_trace(trace, 0.5)
    assert len(head.runs) + len(tail.runs) == len(trace.runs)
    assert max(r.start_s for r in head.runs) <= min(r.start_s for r in tail.runs)
    validate_trace(head)
    validate_trace(tail)


def test_shuffle_aggregates_group_by_stage_instance():
    files = [tfile(0, 1.0, 100.0), tfile(1, 1.0, 200.0),
             tfile(2, 1.0, 5.0, stage_id="s2", is_shuffle=False)]
    t = one_run_trace(files, pipeline=chain_pipeline(
        kinds=(StageKind.SOURCE, StageKind.SHUFFLE, StageKind.MAP, StageKind.SINK)))
    groups = shuffle_aggregates(t)
    assert list(groups) == [(0, "s1")]
    assert [f.file_id for f in groups[(0, "s1")]] == [0, 1]
