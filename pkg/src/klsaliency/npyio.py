"""NPY v1.0 container reader/writer for float tensors.

Wire layout: magic ``\\x93NUMPY``, version bytes 01 00, little-endian uint16
header length, an ASCII Python-dict literal with keys descr / fortran_order /
shape, space padding plus a trailing newline so the payload starts on a
64-byte boundary, then the raw little-endian C-order values.

Only ``<f4`` and ``<f8`` payloads are accepted on read (``<f4`` is widened
to float64); writes always emit ``<f8``. Version 2/3 headers are rejected:
the artifact needs exactly one bit-exact surface.
"""

import ast
import struct
from pathlib import Path

import numpy as np

from .errors import MalformedContainer, UnsupportedDType
from .tensor import Tensor

_MAGIC = b"\x93NUMPY"
_VERSION = b"\x01\x00"
_ALIGN = 64
_ACCEPTED_DESCR = {"<f4": np.dtype("<f4"), "<f8": np.dtype("<f8")}


def npy_write(t: Tensor) -> bytes:
    """Serialize a tensor as an NPY v1.0 byte string (descr '<f8', C order)."""
    header = "{'descr': '<f8', 'fortran_order': False, 'shape': %s, }" % (
        repr(tuple(t.shape)),
    )
    encoded = header.encode("ascii")
    hlen = len(encoded) + 1  # +1 for the trailing newline
    padlen = _ALIGN - ((len(_MAGIC) + len(_VERSION) + 2 + hlen) % _ALIGN)
    if hlen + padlen > 0xFFFF:
        raise MalformedContainer("header too large for NPY v1.0")

    out = bytearray()
    out += _MAGIC
    out += _VERSION
    out += struct.pack("<H", hlen + padlen)
    out += encoded
    out += b" " * padlen
    out += b"\n"
    out += t.array.astype("<f8", copy=False).tobytes("C")
    return bytes(out)


def npy_read(data: bytes) -> Tensor:
    """Parse NPY v1.0 bytes into a Tensor, widening float32 to float64."""
    if len(data) < 10 or data[:6] != _MAGIC:
        raise MalformedContainer("bad NPY magic")
    if data[6:8] != _VERSION:
        raise MalformedContainer(
            f"unsupported NPY version {data[6]}.{data[7]} (only 1.0 accepted)"
        )
    (hlen,) = struct.unpack("<H", data[8:10])
    if len(data) < 10 + hlen:
        raise MalformedContainer("truncated header")

    try:
        header = data[10 : 10 + hlen].decode("ascii")
        meta = ast.literal_eval(header)
    except (UnicodeDecodeError, ValueError, SyntaxError) as exc:
        raise MalformedContainer(f"unparseable header: {exc}") from None
    if not isinstance(meta, dict) or set(meta) != {"descr", "fortran_order", "shape"}:
        raise MalformedContainer("header must carry exactly descr/fortran_order/shape")

    descr = meta["descr"]
    if not isinstance(descr, str) or descr not in _ACCEPTED_DESCR:
        raise UnsupportedDType(
            f"descr {descr!r} not supported (need little-endian '<f4' or '<f8')"
        )
    if meta["fortran_order"] is not False:
        raise UnsupportedDType("Fortran-order payloads not supported")
    shape = meta["shape"]
    if not (
        isinstance(shape, tuple)
        and all(isinstance(n, int) and n > 0 for n in shape)
    ):
        raise MalformedContainer(f"bad shape {shape!r}")

    dtype = _ACCEPTED_DESCR[descr]
    count = 1
    for n in shape:
        count *= n
    payload = data[10 + hlen :]
    expected = count * dtype.itemsize
    if len(payload) != expected:
        raise MalformedContainer(
            f"payload is {len(payload)} bytes, expected {expected}"
        )

    arr = np.frombuffer(payload, dtype=dtype).astype(np.float64).reshape(shape)
    if not np.isfinite(arr).all():
        raise MalformedContainer("payload contains non-finite values")
    return Tensor(arr)


def load_npy(path) -> Tensor:
    return npy_read(Path(path).read_bytes())


def save_npy(path, t: Tensor) -> None:
    Path(path).write_bytes(npy_write(t))
