"""AVTK raw tensor container.

Layout (all little-endian):

    bytes 0..3   magic b"AVTK"
    u32          version (1)
    u8           dtype code: 0 = float32 LE, 1 = float64 LE
    u8           rank
    rank x u64   dims
    payload      row-major (C order) values

Code 0 is the interchange dtype used for exported video tensors; code 1 is
used for checkpoints so float64 parameters round-trip exactly.
"""

import struct

import numpy as np

from .errors import FormatError

MAGIC = b"AVTK"
VERSION = 1

_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODES = {np.dtype("float32"): 0, np.dtype("float64"): 1}


def write_avtk(path, array):
    """Write a single tensor. dtype must be float32 or float64."""
    arr = np.ascontiguousarray(array)
    if arr.dtype not in _CODES:
        arr = arr.astype(np.float64)
    code = _CODES[arr.dtype]
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        f.write(struct.pack("<BB", code, arr.ndim))
        for d in arr.shape:
            f.write(struct.pack("<Q", d))
        f.write(arr.astype(_DTYPES[code]).tobytes(order="C"))


def read_avtk(path):
    """Read a tensor written by write_avtk. Raises FormatError on bad files."""
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 10 or data[:4] != MAGIC:
        raise FormatError(f"{path}: not an AVTK file (bad magic)")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported AVTK version {version}")
    code, rank = struct.unpack_from("<BB", data, 8)
    if code not in _DTYPES:
        raise FormatError(f"{path}: unknown dtype code {code}")
    off = 10
    if len(data) < off + 8 * rank:
        raise FormatError(f"{path}: truncated header")
    dims = struct.unpack_from(f"<{rank}Q" if rank else "<", data, off) if rank else ()
    off += 8 * rank
    dtype = _DTYPES[code]
    count = 1
    for d in dims:
        count *= d
    need = count * dtype.itemsize
    if len(data) - off != need:
        raise FormatError(
            f"{path}: payload size {len(data) - off} != expected {need}"
        )
    arr = np.frombuffer(data, dtype=dtype, count=count, offset=off)
    return arr.reshape(dims).copy()
