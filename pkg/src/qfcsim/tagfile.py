"""Time-tag streams and their binary file format.

File layout, little-endian throughout::

    offset 0   8 bytes   magic b"QFCTAGS1"
    offset 8   u32       resolution in ps (always 1)
    offset 12  u64       record count
    offset 20  records   u64 timestamp_ps + u8 channel, 9 bytes each

Channel 0 carries the trigger TTL, channel 1 the SPAD clicks.
"""
from __future__ import annotations

import csv
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"QFCTAGS1"
HEADER = struct.Struct("<8sIQ")
HEADER_SIZE = HEADER.size
RECORD_DTYPE = np.dtype([("timestamp_ps", "<u8"), ("channel", "u1")])
RECORD_SIZE = RECORD_DTYPE.itemsize
TRIGGER = 0
SPAD = 1


class TagFileError(ValueError):
    def __init__(self, msg, offset=None):
        if offset is not None:
            msg = f"{msg} (byte offset {offset})"
        super().__init__(msg)
        self.offset = offset


class BadMagicError(TagFileError):
    pass


class TruncatedFileError(TagFileError):
    pass


class TimestampRegressionError(TagFileError):
    pass


class UnknownChannelError(TagFileError):
    pass


@dataclass
class TagStream:
    timestamps_ps: np.ndarray
    channels: np.ndarray

    def __post_init__(self):
        self.timestamps_ps = np.asarray(self.timestamps_ps, dtype=np.uint64)
        self.channels = np.asarray(self.channels, dtype=np.uint8)
        if self.timestamps_ps.shape != self.channels.shape:
            raise ValueError("timestamps and channels differ in length")

    def __len__(self):
        return self.timestamps_ps.size

    def __eq__(self, other):
        if not isinstance(other, TagStream):
            return NotImplemented
        return (np.array_equal(self.timestamps_ps, other.timestamps_ps)
                and np.array_equal(self.channels, other.channels))

    @property
    def triggers(self) -> np.ndarray:
        return self.timestamps_ps[self.channels == TRIGGER]

    @property
    def clicks(self) -> np.ndarray:
        return self.timestamps_ps[self.channels == SPAD]

    def is_sorted(self) -> bool:
        return bool(np.all(self.timestamps_ps[1:] >= self.timestamps_ps[:-1]))

    @classmethod
    def merge(cls, triggers, clicks) -> "TagStream":
        """Time-ordered union; a trigger precedes a click with the same timestamp."""
        ts = np.concatenate([np.asarray(triggers, np.uint64), np.asarray(clicks, np.uint64)])
        ch = np.concatenate([np.zeros(len(triggers), np.uint8), np.ones(len(clicks), np.uint8)])
        order = np.lexsort((ch, ts))
        return cls(ts[order], ch[order])


def _atomic_target(path):
    path = Path(path)
    return path, path.with_name(path.name + ".partial")


def write_tagfile(path, stream: TagStream):
    path, tmp = _atomic_target(path)
    rec = np.empty(len(stream), dtype=RECORD_DTYPE)
    rec["timestamp_ps"] = stream.timestamps_ps
    rec["channel"] = stream.channels
    with open(tmp, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, 1, len(stream)))
        fh.write(rec.tobytes())
    os.replace(tmp, path)


def read_tagfile(path) -> TagStream:
    raw = Path(path).read_bytes()
    if len(raw) < HEADER_SIZE:
        raise TruncatedFileError("file shorter than header", offset=len(raw))
    magic, resolution, count = HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}", offset=0)
    if resolution != 1:
        raise TagFileError(f"unsupported resolution {resolution} ps", offset=8)
    body = len(raw) - HEADER_SIZE
    have = body // RECORD_SIZE
    if have < count:
        raise TruncatedFileError(f"header announces {count} records, file holds {have}",
                                 offset=HEADER_SIZE + have * RECORD_SIZE)
    if body != count * RECORD_SIZE:
        raise TagFileError(f"{body - count * RECORD_SIZE} trailing bytes after records",
                           offset=HEADER_SIZE + count * RECORD_SIZE)
    rec = np.frombuffer(raw, dtype=RECORD_DTYPE, count=count, offset=HEADER_SIZE)
    ts = rec["timestamp_ps"].astype(np.uint64)
    ch = rec["channel"].astype(np.uint8)
    bad = np.flatnonzero(ch > SPAD)
    if bad.size:
        i = int(bad[0])
        raise UnknownChannelError(f"unknown channel {ch[i]} in record {i}",
                                  offset=HEADER_SIZE + i * RECORD_SIZE + 8)
    back = np.flatnonzero(ts[1:] < ts[:-1])
    if back.size:
        i = int(back[0]) + 1
        raise TimestampRegressionError(f"timestamp goes backwards at record {i}",
                                       offset=HEADER_SIZE + i * RECORD_SIZE)
    return TagStream(ts, ch)


def tagfile_to_csv(src, dst):
    s = read_tagfile(src)
    path, tmp = _atomic_target(dst)
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp_ps", "channel"])
        w.writerows(zip(s.timestamps_ps.tolist(), s.channels.tolist()))
    os.replace(tmp, path)


def csv_to_tagfile(src, dst):
    data = np.loadtxt(src, delimiter=",", skiprows=1, dtype=np.uint64, ndmin=2)
    if data.size == 0:
        stream = TagStream(np.empty(0, np.uint64), np.empty(0, np.uint8))
    else:
        stream = TagStream(data[:, 0], data[:, 1].astype(np.uint8))
    if np.any(stream.channels > SPAD):
        raise UnknownChannelError("unknown channel in CSV")
    if not stream.is_sorted():
        raise TimestampRegressionError("CSV timestamps are not sorted")
    write_tagfile(dst, stream)
