import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iohmm.errors import (EmptyTrace, InvalidKeepSet, InvalidOp, MalformedLine,
                          NonPositiveSize)
from iohmm.trace import (BinnedTrace, Op, TraceRecord, bin_trace, parse_trace,
                         read_binned_csv, thin_periodic, write_binned_csv)


def test_parse_maps_fields():
    recs = parse_trace("0,R,8\n5000,W,2")
    assert recs == [TraceRecord(0, Op.Read, 8), TraceRecord(5000, Op.Write, 2)]


def test_parse_sorts_by_timestamp():
    assert parse_trace("5000,W,2\n0,R,8") == parse_trace("0,R,8\n5000,W,2")


def test_parse_sort_is_stable():
    recs = parse_trace("10,W,1\n10,R,2\n0,R,3")
    assert [(r.timestamp, r.size) for r in recs] == [(0, 3), (10, 1), (10, 2)]


def test_parse_skips_header_and_accepts_stream():
    recs = parse_trace(io.StringIO("timestamp_us,op,size_blocks\n0,R,8\n"))
    assert recs == [TraceRecord(0, Op.Read, 8)]


@pytest.mark.parametrize("text,exc,line", [
    ("0,R,0", NonPositiveSize, 1),
    ("0,R,8\n5,X,1", InvalidOp, 2),
    ("0,R", MalformedLine, 1),
    ("0,R,8\nabc,W,1", MalformedLine, 2),
    ("0,R,8,9", MalformedLine, 1),
])
def test_parse_errors_carry_line(text, exc, line):
    with pytest.raises(exc) as ei:
        parse_trace(text)
    assert ei.value.line_no == line


def test_bin_arithmetic():
    recs = parse_trace("0,R,8\n1000,R,4\n6000,W,2")
    assert bin_trace(recs, 5000).bins.tolist() == [[12, 0], [0, 2]]


def test_bin_empty_middle():
    recs = parse_trace("0,R,1\n14999,W,1")
    assert bin_trace(recs, 5000).bins.tolist() == [[1, 0], [0, 0], [0, 1]]


def test_bin_boundary_goes_to_upper_bin():
    recs = parse_trace("0,R,1\n5000,W,1")
    assert bin_trace(recs, 5000).bins.tolist() == [[1, 0], [0, 1]]


def test_bin_width_one_is_one_bin_per_timestamp():
    recs = parse_trace("0,R,1\n3,W,2\n3,R,1\n7,R,5")
    b = bin_trace(recs, 1).bins
    assert len(b) == 8
    assert b.tolist() == [[1, 0], [0, 0], [0, 0], [1, 2], [0, 0], [0, 0], [0, 0], [5, 0]]


def test_bin_normalises_origin():
    recs = parse_trace("100000,R,3\n100001,W,1")
    assert bin_trace(recs, 10).bins.tolist() == [[3, 1]]


def test_bin_empty_raises():
    with pytest.raises(EmptyTrace):
        bin_trace([], 5000)


records = st.lists(
    st.tuples(st.integers(0, 10**6), st.sampled_from(["R", "W"]), st.integers(1, 50)),
    min_size=1, max_size=60)


@settings(max_examples=100, deadline=None)
@given(records, st.integers(1, 20000), st.randoms(use_true_random=False))
def test_bin_conservation_and_permutation_invariance(recs, width, rnd):
    text = "\n".join(f"{t},{o},{s}" for t, o, s in recs)
    shuffled = list(recs)
    rnd.shuffle(shuffled)
    text2 = "\n".join(f"{t},{o},{s}" for t, o, s in shuffled)
    b = bin_trace(parse_trace(text), width)
    assert b == bin_trace(parse_trace(text2), width)
    assert b.reads.sum() == sum(s for _, o, s in recs if o == "R")
    assert b.writes.sum() == sum(s for _, o, s in recs if o == "W")
    t0 = min(t for t, _, _ in recs)
    assert len(b) == (max(t for t, _, _ in recs) - t0) // width + 1


def _seq(n):
    return BinnedTrace(1000, np.column_stack([np.arange(n), 2 * np.arange(n)]))


def test_thin_paper_configuration_keeps_forty_percent():
    b = _seq(1000)
    t = thin_periodic(b, 10, {0, 1, 2, 4})
    assert len(t) == 400
    assert t.reads[:8].tolist() == [0, 1, 2, 4, 10, 11, 12, 14]


def test_thin_identity():
    b = _seq(37)
    assert thin_periodic(b, 1, {0}) == b


def test_thin_single_bin():
    b = _seq(10)
    t = thin_periodic(b, 10, {0})
    assert t.bins.tolist() == [[0, 0]]


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 200), st.integers(1, 12), st.data())
def test_thin_length_and_order(n, period, data):
    keep = data.draw(st.sets(st.integers(0, period - 1), min_size=1))
    b = _seq(n)
    t = thin_periodic(b, period, keep)
    expect = [i for i in range(n) if i % period in keep]
    assert t.reads.tolist() == expect
    tail = sum(1 for i in range(n - n % period, n) if i % period in keep)
    assert len(t) == len(keep) * (n // period) + tail
    assert thin_periodic(t, 1, {0}) == t


@pytest.mark.parametrize("keep", [set(), {10}, {-1}])
def test_thin_invalid_keep(keep):
    with pytest.raises(InvalidKeepSet):
        thin_periodic(_seq(20), 10, keep)


def test_binned_csv_round_trip_is_bit_exact():
    b = BinnedTrace(5000, np.array([[12, 0], [0, 2], [3, 4]]))
    text = write_binned_csv(b)
    assert text == "bin_index,reads,writes\n0,12,0\n1,0,2\n2,3,4\n"
    back = read_binned_csv(text, 5000)
    assert back == b
    assert write_binned_csv(back) == text


def test_binned_trace_is_read_only():
    b = _seq(3)
    with pytest.raises(ValueError):
        b.bins[0, 0] = 5
