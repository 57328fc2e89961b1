"""
KPDS dataset files (little-endian):

    b"KPDS" | u32 version | u32 l | f32 resolution | u64 count
    count x ( 4 f32 current | 4 f32 goal | (2l)^2 u8 costs | 4 f32 target [| u32 trajectory id, v2] )
    u32 CRC32 of every preceding byte

See docs/formats.md.
"""
from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from kinoplan.errors import (
    DatasetChecksumError,
    DatasetFormatError,
    DatasetTruncatedError,
    DatasetVersionError,
)
from planning.dataset.core import Dataset

MAGIC = b"KPDS"
SUPPORTED_VERSIONS = (1, 2)
_HEAD = struct.Struct("<4sIIfQ")


def record_dtype(l: int, version: int) -> np.dtype:
    fields = [
        ("current", "<f4", (4,)),
        ("goal", "<f4", (4,)),
        ("patch", "u1", (2 * l, 2 * l)),
        ("target", "<f4", (4,)),
    ]
    if version >= 2:
        fields.append(("trajectory_id", "<u4"))
    return np.dtype(fields)


def dump_dataset(dataset: Dataset, version: int = 1) -> bytes:
    if version not in SUPPORTED_VERSIONS:
        raise DatasetVersionError(f"cannot write dataset version {version}")
    n, l = len(dataset), dataset.l
    body = np.zeros(n, dtype=record_dtype(l, version))
    if n:
        body["current"] = dataset.current
        body["goal"] = dataset.goal
        body["patch"] = dataset.patches
        body["target"] = dataset.target
        if version >= 2:
            body["trajectory_id"] = np.maximum(dataset.trajectory_ids, 0).astype(np.uint32)
    payload = _HEAD.pack(MAGIC, version, l, dataset.resolution, n) + body.tobytes()
    return payload + struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF)


def parse_dataset(data: bytes) -> Dataset:
    if len(data) < 8:
        raise DatasetTruncatedError(f"file holds {len(data)} bytes, shorter than the header")
    if data[:4] != MAGIC:
        raise DatasetFormatError(f"bad magic {data[:4]!r}")
    (version,) = struct.unpack_from("<I", data, 4)
    if version not in SUPPORTED_VERSIONS:
        raise DatasetVersionError(f"unsupported dataset version {version}")
    if len(data) < _HEAD.size:
        raise DatasetTruncatedError("file ends inside the header")
    _, _, l, resolution, count = _HEAD.unpack_from(data, 0)
    if l < 1:
        raise DatasetFormatError(f"bad window size l={l}")
    dtype = record_dtype(l, version)
    expected = _HEAD.size + count * dtype.itemsize + 4
    if len(data) < expected:
        raise DatasetTruncatedError(f"expected {expected} bytes, found {len(data)}")
    if len(data) > expected:
        raise DatasetFormatError(f"{len(data) - expected} trailing bytes after the checksum")
    (stored,) = struct.unpack_from("<I", data, expected - 4)
    if zlib.crc32(data[:expected - 4]) & 0xFFFFFFFF != stored:
        raise DatasetChecksumError("CRC32 mismatch")

    if count == 0:
        return Dataset.empty(l, float(resolution))
    body = np.frombuffer(data, dtype=dtype, count=count, offset=_HEAD.size)
    ids = body["trajectory_id"].astype(np.int64) if version >= 2 else np.full(count, -1, dtype=np.int64)
    return Dataset(
        l=l,
        resolution=float(resolution),
        current=np.array(body["current"]),
        goal=np.array(body["goal"]),
        patches=np.array(body["patch"]),
        target=np.array(body["target"]),
        trajectory_ids=ids,
    )


def save_dataset(path: str | Path, dataset: Dataset, version: int = 1) -> None:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_bytes(dump_dataset(dataset, version))


def load_dataset(path: str | Path) -> Dataset:
    return parse_dataset(Path(path).read_bytes())
