"""
KPNN weights files (little-endian):

    b"KPNN" | u32 version | u32 l
    u32 n_hidden | n_hidden x u32 width | f32 dropout_rate | u8 inference_dropout
    u32 n_tensors | n_tensors x ( u8 name_len | name | u8 ndim | ndim x u32 dim )
    raw f32 tensors in descriptor order
    u32 CRC32 of every preceding byte
"""
from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from kinoplan.errors import ShapeMismatchError, WeightsFormatError
from planning.neuralnet.core import NetworkParams, architecture

MAGIC = b"KPNN"
VERSION = 1


def dump_weights(params: NetworkParams) -> bytes:
    out = bytearray(MAGIC)
    out += struct.pack("<II", VERSION, params.l)
    out += struct.pack("<I", len(params.hidden_widths))
    out += struct.pack(f"<{len(params.hidden_widths)}I", *params.hidden_widths)
    out += struct.pack("<fB", params.dropout_rate, int(params.inference_dropout))
    names = params.names()
    out += struct.pack("<I", len(names))
    for name in names:
        shape = params.tensors[name].shape
        raw = name.encode("ascii")
        out += struct.pack("<B", len(raw)) + raw
        out += struct.pack(f"<B{len(shape)}I", len(shape), *shape)
    for name in names:
        out += np.ascontiguousarray(params.tensors[name], dtype="<f4").tobytes()
    out += struct.pack("<I", zlib.crc32(bytes(out)) & 0xFFFFFFFF)
    return bytes(out)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.data):
            raise WeightsFormatError("weights file is truncated")
        vals = struct.unpack_from(fmt, self.data, self.pos)
        self.pos += size
        return vals

    def raw(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise WeightsFormatError("weights file is truncated")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk


def parse_weights(data: bytes) -> NetworkParams:
    if len(data) < 8 or data[:4] != MAGIC:
        raise WeightsFormatError("not a KPNN weights file")
    (stored,) = struct.unpack_from("<I", data, len(data) - 4)
    if zlib.crc32(data[:-4]) & 0xFFFFFFFF != stored:
        raise WeightsFormatError("CRC32 mismatch")
    r = _Reader(data[:-4])
    r.pos = 4
    version, l = r.take("<II")
    if version != VERSION:
        raise WeightsFormatError(f"unsupported weights version {version}")
    (n_hidden,) = r.take("<I")
    hidden = list(r.take(f"<{n_hidden}I"))
    dropout_rate, inference_dropout = r.take("<fB")
    (n_tensors,) = r.take("<I")
    descriptor = []
    for _ in range(n_tensors):
        (name_len,) = r.take("<B")
        name = r.raw(name_len).decode("ascii")
        (ndim,) = r.take("<B")
        descriptor.append((name, tuple(r.take(f"<{ndim}I"))))

    expected = architecture(l, hidden)
    if descriptor != expected:
        raise ShapeMismatchError("weights descriptor does not chain into the network architecture")
    tensors = {}
    for name, shape in descriptor:
        count = int(np.prod(shape))
        tensors[name] = np.frombuffer(r.raw(4 * count), dtype="<f4").reshape(shape).astype(np.float32)
    if r.pos != len(r.data):
        raise WeightsFormatError("trailing bytes after the last tensor")
    return NetworkParams(
        l=l, hidden_widths=hidden, dropout_rate=float(dropout_rate),
        inference_dropout=bool(inference_dropout), tensors=tensors,
    )


def save_weights(params: NetworkParams, path: str | Path) -> None:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_bytes(dump_weights(params))


def load_weights(path: str | Path) -> NetworkParams:
    return parse_weights(Path(path).read_bytes())
