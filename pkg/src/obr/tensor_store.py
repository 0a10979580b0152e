"""Dense matrices and the OBRT binary container.

Layout of an OBRT file (all integers little-endian)::

    b"OBRT" | version:u16 | count:u32 |
    count x ( name_len:u16 | name:utf-8 | dtype:u8 | ndim:u8 | dims:u64*ndim | payload )

Payloads are raw little-endian arrays in row-major order.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, ShapeError

MAGIC = b"OBRT"
VERSION = 1

DTYPE_CODES = {"f64": 0, "f32": 1, "i8": 2}
_CODE_TO_DTYPE = {v: k for k, v in DTYPE_CODES.items()}
_NUMPY_DTYPES = {
    "f64": np.dtype("<f8"),
    "f32": np.dtype("<f4"),
    "i8": np.dtype("i1"),
}

_HEADER = struct.Struct("<4sHI")


def as_matrix(a, name="matrix"):
    """Return ``a`` as a finite, C-contiguous float64 2-D array."""
    m = np.array(a, dtype=np.float64, copy=True, order="C")
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite values")
    return m


@dataclass(frozen=True)
class Entry:
    name: str
    dtype: str
    shape: tuple[int, ...]
    payload: bytes

    def __post_init__(self):
        if self.dtype not in DTYPE_CODES:
            raise FormatError(f"unsupported dtype {self.dtype!r}")
        expected = int(np.prod(self.shape, dtype=np.int64)) * _NUMPY_DTYPES[self.dtype].itemsize
        if len(self.payload) != expected:
            raise FormatError(
                f"entry {self.name!r}: payload is {len(self.payload)} bytes, "
                f"shape {self.shape} with dtype {self.dtype} needs {expected}"
            )

    @classmethod
    def from_array(cls, name, array, dtype="f64"):
        if dtype not in _NUMPY_DTYPES:
            raise FormatError(f"unsupported dtype {dtype!r}")
        a = np.asarray(array)
        if dtype == "i8":
            if not np.issubdtype(a.dtype, np.integer):
                if not np.all(np.isfinite(a)) or np.any(a != np.round(a)):
                    raise ValueError(f"entry {name!r}: i8 storage needs integer values")
            if a.size and (a.min() < -128 or a.max() > 127):
                raise ValueError(f"entry {name!r}: values out of int8 range")
        a = np.ascontiguousarray(a.astype(_NUMPY_DTYPES[dtype]))
        return cls(name, dtype, tuple(int(d) for d in a.shape), a.tobytes())

    def to_array(self):
        """Decode the payload; float storage is widened to float64."""
        a = np.frombuffer(self.payload, dtype=_NUMPY_DTYPES[self.dtype]).reshape(self.shape)
        if self.dtype == "i8":
            return a.astype(np.int64)
        return a.astype(np.float64)


@dataclass
class TensorContainer:
    entries: list[Entry] = field(default_factory=list)

    def __post_init__(self):
        names = [e.name for e in self.entries]
        if len(set(names)) != len(names):
            raise FormatError("duplicate entry names")

    def add(self, name, array, dtype="f64"):
        if name in self:
            raise FormatError(f"duplicate entry name {name!r}")
        self.entries.append(Entry.from_array(name, array, dtype))
        return self

    def names(self):
        return [e.name for e in self.entries]

    def __contains__(self, name):
        return any(e.name == name for e in self.entries)

    def __getitem__(self, name):
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def array(self, name):
        return self[name].to_array()

    def __len__(self):
        return len(self.entries)


def _check_finite(entry):
    if entry.dtype == "i8":
        return
    values = np.frombuffer(entry.payload, dtype=_NUMPY_DTYPES[entry.dtype])
    if not np.all(np.isfinite(values)):
        raise ValueError(f"entry {entry.name!r} contains non-finite values")


def encode_container(container):
    """Serialize to bytes; see the module docstring for the layout."""
    parts = [_HEADER.pack(MAGIC, VERSION, len(container.entries))]
    seen = set()
    for e in container.entries:
        if e.name in seen:
            raise FormatError(f"duplicate entry name {e.name!r}")
        seen.add(e.name)
        _check_finite(e)
        name = e.name.encode("utf-8")
        if len(name) > 0xFFFF:
            raise FormatError(f"entry name too long: {e.name[:32]!r}...")
        if len(e.shape) > 0xFF:
            raise FormatError(f"entry {e.name!r} has too many dimensions")
        parts.append(struct.pack("<H", len(name)))
        parts.append(name)
        parts.append(struct.pack("<BB", DTYPE_CODES[e.dtype], len(e.shape)))
        parts.append(struct.pack(f"<{len(e.shape)}Q", *e.shape))
        parts.append(e.payload)
    return b"".join(parts)


def decode_container(buf):
    buf = memoryview(bytes(buf))
    if len(buf) < _HEADER.size:
        raise FormatError("file too short for OBRT header")
    magic, version, count = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {bytes(magic)!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"unsupported OBRT version {version}")
    pos = _HEADER.size
    entries = []
    seen = set()

    def take(n, what):
        nonlocal pos
        if pos + n > len(buf):
            raise FormatError(f"truncated file while reading {what}")
        chunk = bytes(buf[pos:pos + n])
        pos += n
        return chunk

    for index in range(count):
        (name_len,) = struct.unpack("<H", take(2, f"name length of entry {index}"))
        try:
            name = take(name_len, f"name of entry {index}").decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"entry {index}: name is not valid UTF-8") from exc
        code, ndim = struct.unpack("<BB", take(2, f"header of entry {name!r}"))
        if code not in _CODE_TO_DTYPE:
            raise FormatError(f"entry {name!r}: unknown dtype code {code}")
        dtype = _CODE_TO_DTYPE[code]
        shape = struct.unpack(f"<{ndim}Q", take(8 * ndim, f"shape of entry {name!r}"))
        nbytes = int(np.prod(shape, dtype=np.int64)) * _NUMPY_DTYPES[dtype].itemsize
        payload = take(nbytes, f"payload of entry {name!r}")
        if name in seen:
            raise FormatError(f"duplicate entry name {name!r}")
        seen.add(name)
        entries.append(Entry(name, dtype, tuple(int(d) for d in shape), payload))
    if pos != len(buf):
        raise FormatError(f"{len(buf) - pos} trailing bytes after last entry")
    return TensorContainer(entries)


def write_container(container, path):
    Path(path).write_bytes(encode_container(container))


def read_container(path):
    return decode_container(Path(path).read_bytes())
