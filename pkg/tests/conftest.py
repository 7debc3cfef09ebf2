import numpy as np
import pytest

from homeleak.core import DeviceMeta, Direction, IntervalKind, LabeledInterval, PacketRecord, Protocol, Trace


def make_trace(times, lengths=None, flow="f1", protocol=Protocol.WIFI, meta=None, annotations=(),
               directions=None):
    lengths = lengths if lengths is not None else [100] * len(times)
    directions = directions or [Direction.OUTGOING] * len(times)
    recs = [PacketRecord(float(t), d, int(n), flow, protocol) for t, n, d in zip(times, lengths, directions)]
    return Trace.from_unsorted(recs, meta or DeviceMeta("acme", "widget", protocol), annotations)


def activity(start, end, label="ON"):
    return LabeledInterval(start, end, IntervalKind.DEVICE_ACTIVITY, label)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
