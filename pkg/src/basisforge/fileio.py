"""Binary containers and CSV writers shared by every artifact type.

Container layout (all integers little-endian)::

    magic    8 bytes
    version  uint32
    meta     uint32 length + UTF-8 JSON
    count    uint32 number of arrays
    per array:
        name   uint16 length + UTF-8
        ndim   uint8
        shape  ndim x uint64
        data   row-major float64, little-endian

Model and basis files use the same framing with their own magic bytes.
"""

from __future__ import annotations

import io
import json
import struct
from pathlib import Path

import numpy as np

__all__ = [
    "FormatError",
    "write_container",
    "read_container",
    "write_csv",
    "read_csv",
]

ARRAY_MAGIC = b"FORGEARR"
ARRAY_VERSION = 1


class FormatError(ValueError):
    """A file does not match the expected binary layout."""


def _pack_meta(meta) -> bytes:
    blob = json.dumps(meta or {}, sort_keys=True, separators=(",", ":")).encode()
    return struct.pack("<I", len(blob)) + blob


def write_container(path, arrays: dict, meta=None, *, magic=ARRAY_MAGIC, version=ARRAY_VERSION):
    buf = io.BytesIO()
    buf.write(magic)
    buf.write(struct.pack("<I", version))
    buf.write(_pack_meta(meta))
    buf.write(struct.pack("<I", len(arrays)))
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        key = name.encode()
        buf.write(struct.pack("<H", len(key)) + key)
        buf.write(struct.pack("<B", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        buf.write(arr.tobytes())
    Path(path).write_bytes(buf.getvalue())


class _Reader:
    def __init__(self, data: bytes, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(f"{self.path}: truncated file")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def array(self, shape) -> np.ndarray:
        count = int(np.prod(shape, dtype=np.int64))
        raw = self.take(8 * count)
        return np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64)


def read_container(path, *, magic=ARRAY_MAGIC, version=ARRAY_VERSION):
    """Return ``(arrays, meta)``; raises FormatError on any mismatch."""
    data = Path(path).read_bytes()
    r = _Reader(data, path)
    found = r.take(len(magic))
    if found != magic:
        raise FormatError(f"{path}: bad magic {found!r}, expected {magic!r}")
    (found_version,) = r.unpack("<I")
    if found_version != version:
        raise FormatError(f"{path}: format version {found_version}, expected {version}")
    (meta_len,) = r.unpack("<I")
    try:
        meta = json.loads(r.take(meta_len).decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: corrupt metadata block") from exc
    (count,) = r.unpack("<I")
    arrays = {}
    for _ in range(count):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode()
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}Q")
        arrays[name] = r.array(shape)
    if r.pos != len(data):
        raise FormatError(f"{path}: {len(data) - r.pos} trailing bytes")
    return arrays, meta


def write_csv(path, header, rows, comments=None):
    """CSV with optional ``# key=value`` comment lines before the header.

    Floats are written with 17 significant digits so they round-trip exactly.
    """
    lines = [f"# {k}={v}" for k, v in (comments or {}).items()]
    lines.append(",".join(header))
    for row in rows:
        cells = []
        for v in row:
            if isinstance(v, (float, np.floating)):
                cells.append(f"{float(v):.17g}")
            else:
                cells.append(str(v))
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n")


def read_csv(path):
    """Return ``(header, rows, comments)``; numeric cells are parsed as floats."""
    comments = {}
    header = None
    rows = []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            comments[key] = value
            continue
        cells = line.split(",")
        if header is None:
            header = cells
            continue
        parsed = []
        for c in cells:
            try:
                parsed.append(float(c))
            except ValueError:
                parsed.append(c)
        rows.append(parsed)
    return header, rows, comments
