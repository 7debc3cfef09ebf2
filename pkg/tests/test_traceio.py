import io

import pytest

from homeleak.core import Direction, IntervalKind, LabeledInterval, Protocol
from homeleak.simulate import builtin_catalog, generate_device_trace
from homeleak.traceio import (
    SplitBy,
    TraceFormatError,
    capture_from_traces,
    is_coordinator,
    parse_trace_file,
    read_capture,
    split_flows,
    to_splt,
    write_capture,
)

from conftest import make_trace


def parse(text, **kw):
    return parse_trace_file(io.StringIO(text), **kw)


def test_three_line_file():
    c = parse("0.0 I 60 a wifi\n0.5 O 70 a wifi\n1.0 I 80 a wifi\n")
    assert list(c.traces) == ["a"]
    assert len(c.traces["a"]) == 3


def test_bad_direction_names_line():
    with pytest.raises(TraceFormatError) as e:
        parse("0.0 I 60 a wifi\n0.5 2 70 a wifi\n")
    assert e.value.line_no == 2


def test_interleaved_flows():
    c = parse("0.0 I 60 A wifi\n0.1 O 60 B wifi\n0.2 I 60 A wifi\n")
    assert {f: len(t) for f, t in c.traces.items()} == {"A": 2, "B": 1}


def test_comments_and_unsorted_lines():
    c = parse("# header\n1.0 I 60 a wifi\n0.5 O 60 a wifi\n")
    assert [r.timestamp for r in c.traces["a"].records] == [0.5, 1.0]
    assert c.unsorted_lines == 1


@pytest.mark.parametrize("line", ["0.0 I 60 a", "x I 60 a wifi", "0.0 I 0 a wifi", "0.0 I 60 a lora",
                                  "0.0 I 60 a wifi junk", "-1 I 60 a wifi"])
def test_malformed_lines(line):
    with pytest.raises(TraceFormatError):
        parse(line + "\n")


def test_splt_rows():
    t = make_trace([0.0], [60])
    assert to_splt(t).rows.tolist() == [[0.0, 0.0, 60.0]]
    t = make_trace([0.0, 0.2], [100, 60], directions=[Direction.INCOMING, Direction.OUTGOING])
    assert to_splt(t).rows.tolist() == [[0.0, 1.0, 100.0], [0.2, 0.0, 60.0]]


def test_splt_of_generated_trace_preserves_count_and_bytes():
    cam = next(a for a in builtin_catalog() if a.identity.device_type == "Camera")
    t = generate_device_trace(cam, [], 900.0, seed=3)
    m = to_splt(t)
    assert len(m) == len(t) >= 1000
    assert m.lengths.sum() == sum(r.length for r in t.records)


def test_slice_time_is_half_open():
    m = to_splt(make_trace([0.0, 1.0, 2.0]))
    assert m.slice_time(1.0, 2.0).timestamps.tolist() == [1.0]


def test_split_by_flow_and_protocol():
    c = capture_from_traces([make_trace([0, 1, 2], flow="A", protocol=Protocol.ZIGBEE),
                             make_trace([0.5, 1.5], flow="B", protocol=Protocol.ZIGBEE)])
    assert [len(t) for t in split_flows(c)] == [3, 2]
    by_proto = split_flows(c, SplitBy.PROTOCOL)
    assert len(by_proto) == 1 and len(by_proto[0]) == 5


def test_coordinator_flow_is_tagged():
    c = capture_from_traces([make_trace([0, 1], flow="0x0000", protocol=Protocol.ZIGBEE),
                             make_trace([0, 1], flow="0x1234", protocol=Protocol.ZIGBEE)])
    flags = {t.flow_id: is_coordinator(t) for t in split_flows(c)}
    assert flags == {"0x0000": True, "0x1234": False}


@pytest.mark.parametrize("jsonl", [False, True])
def test_capture_round_trip(tmp_path, jsonl):
    a = LabeledInterval(0.5, 1.5, IntervalKind.DEVICE_ACTIVITY, "ON")
    t = make_trace([0.0, 1.0, 2.0], [60, 70, 80], annotations=(a,))
    c = capture_from_traces([t], [LabeledInterval(0.0, 2.0, IntervalKind.USER_ACTIVITY, "Activity-1")])
    write_capture(c, tmp_path, jsonl=jsonl)
    back = read_capture(tmp_path)
    assert back.traces["f1"].records == t.records
    assert back.traces["f1"].annotations == (a,)
    assert back.traces["f1"].meta == t.meta
    assert back.annotations == c.annotations


def test_missing_capture_dir(tmp_path):
    with pytest.raises(FileNotFoundError):
        read_capture(tmp_path / "nope")
