"""Time-tag streams and their on-disk formats.

Binary layout (little-endian): a 16-byte header ``b"QTAG"``, u32 version,
u64 record count, then packed 9-byte records of (u8 detector, u64 time_ps).
Detectors are numbered 1..4 for D1..D4.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path

import numpy as np

from ..errors import InvalidInputError

MAGIC = b"QTAG"
VERSION = 1
_HEADER = struct.Struct("<4sIQ")
RECORD_DTYPE = np.dtype([("detector", "u1"), ("time", "<u8")])  # packed, itemsize 9


class Detector(IntEnum):
    D1 = 1  # Alice, H
    D2 = 2  # Alice, V
    D3 = 3  # Bob, target polarization
    D4 = 4  # Bob, orthogonal polarization


@dataclass(frozen=True)
class TagStream:
    """Time-sorted detection events. ``duration`` (ps) is the acquisition length."""

    times: np.ndarray
    detectors: np.ndarray
    duration: int

    def __post_init__(self):
        t = np.ascontiguousarray(self.times, dtype=np.int64)
        d = np.ascontiguousarray(self.detectors, dtype=np.uint8)
        if t.shape != d.shape or t.ndim != 1:
            raise InvalidInputError("times and detectors must be 1-D arrays of equal length")
        if len(t) and (t[0] < 0 or np.any(np.diff(t) < 0)):
            raise InvalidInputError("tag stream must be sorted by non-negative time")
        if len(d) and (d.min() < 1 or d.max() > 4):
            raise InvalidInputError("detector ids must be 1..4")
        t.setflags(write=False)
        d.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "detectors", d)
        object.__setattr__(self, "duration", int(self.duration))

    def __len__(self) -> int:
        return len(self.times)

    def count(self, det: int) -> int:
        return int(np.count_nonzero(self.detectors == int(det)))

    def select(self, det: int) -> np.ndarray:
        return self.times[self.detectors == int(det)]

    def split(self, boundary: int) -> tuple["TagStream", "TagStream"]:
        """Cut at a time boundary; the second shard keeps absolute times."""
        k = int(np.searchsorted(self.times, boundary, side="left"))
        return (TagStream(self.times[:k], self.detectors[:k], boundary),
                TagStream(self.times[k:], self.detectors[k:], self.duration))

    def chunks(self, size: int):
        for i in range(0, len(self), size):
            yield self.times[i:i + size], self.detectors[i:i + size]


def write_binary(stream: TagStream, path: str | Path) -> None:
    rec = np.empty(len(stream), dtype=RECORD_DTYPE)
    rec["detector"] = stream.detectors
    rec["time"] = stream.times.astype("<u8")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, len(stream)))
        fh.write(rec.tobytes())


def read_binary(path: str | Path, duration: int | None = None) -> TagStream:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise InvalidInputError("file too short for a QTAG header")
    magic, version, count = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise InvalidInputError(f"bad magic {magic!r}")
    if version != VERSION:
        raise InvalidInputError(f"unsupported QTAG version {version}")
    body = data[_HEADER.size:]
    if len(body) != count * RECORD_DTYPE.itemsize:
        raise InvalidInputError("record count does not match file size")
    rec = np.frombuffer(body, dtype=RECORD_DTYPE, count=count)
    times = rec["time"].astype(np.int64)
    if duration is None:
        duration = int(times[-1]) + 1 if count else 0
    return TagStream(times, rec["detector"].copy(), duration)


def write_csv(stream: TagStream, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["detector", "time_ps"])
        for d, t in zip(stream.detectors.tolist(), stream.times.tolist()):
            w.writerow([f"D{d}", t])


def read_csv(path: str | Path, duration: int | None = None) -> TagStream:
    dets, times = [], []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            dets.append(int(row["detector"].lstrip("Dd")))
            times.append(int(row["time_ps"]))
    if duration is None:
        duration = times[-1] + 1 if times else 0
    return TagStream(np.array(times, dtype=np.int64), np.array(dets, dtype=np.uint8), duration)
