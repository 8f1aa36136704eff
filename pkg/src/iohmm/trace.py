"""Raw IO trace parsing and fixed-width binning.

A raw trace is CSV text ``timestamp_us,op,size_blocks`` with ``op`` one of
``R``/``W``. Binning turns it into a series of (read blocks, write blocks)
pairs, one per bin.
"""
from __future__ import annotations

import enum
import io
from dataclasses import dataclass
from typing import Iterable, TextIO

import numpy as np

from .errors import (EmptyTrace, InvalidKeepSet, InvalidOp, MalformedLine,
                     NonPositiveSize)

BINNED_HEADER = "bin_index,reads,writes"


class Op(enum.Enum):
    Read = "R"
    Write = "W"


@dataclass(frozen=True)
class TraceRecord:
    timestamp: int
    op: Op
    size: int

    def __post_init__(self):
        if self.size < 1:
            raise ValueError("size must be >= 1")
        if self.timestamp < 0:
            raise ValueError("timestamp must be >= 0")


@dataclass(frozen=True, eq=False)
class BinnedTrace:
    """Per-bin block counts.

    ``bins`` is an ``(n, 2)`` int64 array of (reads, writes); ``bin_width``
    is in microseconds.
    """
    bin_width: float
    bins: np.ndarray

    def __post_init__(self):
        if not self.bin_width > 0:
            raise ValueError("bin_width must be positive")
        arr = np.asarray(self.bins, dtype=np.int64).reshape(-1, 2)
        if (arr < 0).any():
            raise ValueError("bin counts must be non-negative")
        arr.setflags(write=False)
        object.__setattr__(self, "bins", arr)

    def __len__(self):
        return len(self.bins)

    def __eq__(self, other):
        if not isinstance(other, BinnedTrace):
            return NotImplemented
        return (self.bin_width == other.bin_width
                and np.array_equal(self.bins, other.bins))

    @property
    def reads(self) -> np.ndarray:
        return self.bins[:, 0]

    @property
    def writes(self) -> np.ndarray:
        return self.bins[:, 1]

    @property
    def bin_width_s(self) -> float:
        return self.bin_width * 1e-6


def _read_text(source) -> str:
    if isinstance(source, str):
        return source
    return source.read()


def parse_trace(source: str | TextIO) -> list[TraceRecord]:
    """Parse trace CSV text (or a text stream) into records sorted by time.

    A first line that does not start with a digit is treated as a header.
    Blank lines are ignored.
    """
    text = _read_text(source)
    records = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line_no == 1 and not line[0].isdigit():
            continue
        fields = [f.strip() for f in line.split(",")]
        if len(fields) != 3:
            raise MalformedLine(line_no, f"expected 3 fields, got {len(fields)}")
        ts_s, op_s, size_s = fields
        try:
            ts = int(ts_s)
            size = int(size_s)
        except ValueError:
            raise MalformedLine(line_no, "non-numeric timestamp or size") from None
        if ts < 0:
            raise MalformedLine(line_no, "negative timestamp")
        try:
            op = Op(op_s.upper())
        except ValueError:
            raise InvalidOp(line_no, f"op {op_s!r} not in {{R, W}}") from None
        if size < 1:
            raise NonPositiveSize(line_no, f"size {size} < 1")
        records.append(TraceRecord(ts, op, size))
    # list.sort is stable
    records.sort(key=lambda r: r.timestamp)
    return records


def bin_trace(records: Iterable[TraceRecord], bin_width: float) -> BinnedTrace:
    """Sum read and write block counts into bins of ``bin_width`` microseconds.

    Timestamps are shifted so the earliest record falls at time zero. A record
    exactly on a boundary ``k * bin_width`` belongs to bin ``k``.
    """
    if not bin_width > 0:
        raise ValueError("bin_width must be positive")
    records = list(records)
    if not records:
        raise EmptyTrace("no records to bin")
    ts = np.array([r.timestamp for r in records], dtype=np.int64)
    sizes = np.array([r.size for r in records], dtype=np.int64)
    is_write = np.array([r.op is Op.Write for r in records])
    ts = ts - ts.min()
    idx = np.floor_divide(ts, bin_width).astype(np.int64)
    n = int(idx.max()) + 1
    bins = np.zeros((n, 2), dtype=np.int64)
    np.add.at(bins[:, 0], idx[~is_write], sizes[~is_write])
    np.add.at(bins[:, 1], idx[is_write], sizes[is_write])
    return BinnedTrace(bin_width, bins)


def thin_periodic(binned: BinnedTrace, period: int, keep) -> BinnedTrace:
    """Keep only bins whose index modulo ``period`` is in ``keep``.

    Used to drop bins that are structurally empty in every cycle, e.g.
    ``period=10, keep={0, 1, 2, 4}`` keeps four 100 ms slots out of each
    second. The bin width is unchanged.
    """
    keep = set(int(k) for k in keep)
    if period < 1:
        raise InvalidKeepSet("period must be positive")
    if not keep or min(keep) < 0 or max(keep) >= period:
        raise InvalidKeepSet(f"keep set must be a nonempty subset of [0, {period})")
    phase = np.arange(len(binned)) % period
    mask = np.isin(phase, sorted(keep))
    return BinnedTrace(binned.bin_width, binned.bins[mask])


def write_binned_csv(binned: BinnedTrace, fh: TextIO | None = None) -> str:
    buf = io.StringIO()
    buf.write(BINNED_HEADER + "\n")
    for i, (r, w) in enumerate(binned.bins.tolist()):
        buf.write(f"{i},{r},{w}\n")
    text = buf.getvalue()
    if fh is not None:
        fh.write(text)
    return text


def read_binned_csv(source: str | TextIO, bin_width: float) -> BinnedTrace:
    """Read the ``bin_index,reads,writes`` format back into a BinnedTrace."""
    text = _read_text(source)
    lines = text.splitlines()
    if not lines or lines[0].strip() != BINNED_HEADER:
        raise MalformedLine(1, f"expected header {BINNED_HEADER!r}")
    rows = []
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.split(",")
        if len(fields) != 3:
            raise MalformedLine(line_no, f"expected 3 fields, got {len(fields)}")
        try:
            i, r, w = (int(f) for f in fields)
        except ValueError:
            raise MalformedLine(line_no, "non-integer field") from None
        if i != len(rows):
            raise MalformedLine(line_no, f"bin index {i} out of sequence")
        if r < 0 or w < 0:
            raise MalformedLine(line_no, "negative count")
        rows.append((r, w))
    return BinnedTrace(bin_width, np.array(rows, dtype=np.int64).reshape(-1, 2))
