"""Binary checkpoint files.

Layout, all integers little-endian unsigned 32-bit unless noted:

    magic           8 bytes  b"MCSTEER\\0"
    format version  u32
    header length   u32
    header          UTF-8 text, "key=value" lines separated by "\\n"
    param count     u32
    per parameter:
        name length u32
        name        UTF-8
        rank        u32
        extents     rank * u32
        payload     product(extents) float64, little-endian, row-major

The header carries small string-valued metadata (network geometry, dropout
kind, label scaler) so a checkpoint is self-describing.  Keys are written
sorted, making files byte-identical for identical content.
"""

from __future__ import annotations

import struct
from typing import Mapping, Sequence

import numpy as np

from .errors import DataFormatError

MAGIC = b"MCSTEER\x00"
FORMAT_VERSION = 1


def _encode_header(header: Mapping[str, str]) -> bytes:
    lines = []
    for key in sorted(header):
        value = header[key]
        if "=" in key or "\n" in key or not key:
            raise DataFormatError(f"invalid header key {key!r}")
        if "\n" in value:
            raise DataFormatError(f"header value for {key!r} contains a newline")
        lines.append(f"{key}={value}")
    return "\n".join(lines).encode("utf-8")


def _decode_header(raw: bytes) -> dict[str, str]:
    header: dict[str, str] = {}
    if not raw:
        return header
    for line in raw.decode("utf-8").split("\n"):
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise DataFormatError(f"malformed header line {line!r}")
        header[key] = value
    return header


def save_checkpoint(path: str, params: Sequence[tuple[str, np.ndarray]],
                    header: Mapping[str, str]) -> None:
    """Write named arrays plus a text header to ``path``."""
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<I", FORMAT_VERSION)
    htext = _encode_header(header)
    blob += struct.pack("<I", len(htext))
    blob += htext
    blob += struct.pack("<I", len(params))
    for name, arr in params:
        arr = np.asarray(arr, dtype=np.float64)
        nb = name.encode("utf-8")
        blob += struct.pack("<I", len(nb))
        blob += nb
        blob += struct.pack("<I", arr.ndim)
        for n in arr.shape:
            blob += struct.pack("<I", n)
        blob += np.ascontiguousarray(arr).astype("<f8").tobytes()
    with open(path, "wb") as f:
        f.write(bytes(blob))


class _Reader:
    def __init__(self, raw: bytes):
        self.raw = raw
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.raw):
            raise DataFormatError("checkpoint truncated", offset=self.pos)
        out = self.raw[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def load_checkpoint(path: str) -> tuple[dict[str, str], list[tuple[str, np.ndarray]]]:
    """Read a checkpoint; returns ``(header, [(name, array), ...])``.

    Array order matches write order.  Raises :class:`DataFormatError` with a
    byte offset on truncation, a bad magic, or an unknown format version.
    """
    with open(path, "rb") as f:
        raw = f.read()
    r = _Reader(raw)
    magic = r.take(len(MAGIC))
    if magic != MAGIC:
        raise DataFormatError(f"{path}: not a checkpoint file (bad magic)", offset=0)
    version = r.u32()
    if version != FORMAT_VERSION:
        raise DataFormatError(f"{path}: unsupported checkpoint version {version}", offset=8)
    hlen = r.u32()
    header = _decode_header(r.take(hlen))
    count = r.u32()
    params: list[tuple[str, np.ndarray]] = []
    for _ in range(count):
        nlen = r.u32()
        try:
            name = r.take(nlen).decode("utf-8")
        except UnicodeDecodeError as e:
            raise DataFormatError(f"{path}: undecodable parameter name", offset=r.pos) from e
        rank = r.u32()
        shape = tuple(r.u32() for _ in range(rank))
        if any(n == 0 for n in shape):
            raise DataFormatError(f"{path}: parameter {name!r} has a zero extent", offset=r.pos)
        size = int(np.prod(shape, dtype=np.int64)) if shape else 1
        payload = r.take(8 * size)
        arr = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(shape)
        params.append((name, arr))
    if r.pos != len(raw):
        raise DataFormatError(f"{path}: {len(raw) - r.pos} trailing bytes", offset=r.pos)
    return header, params
