"""Trajectory export: CSV channel tables and a compact binary snapshot.

Binary layout (all fields native byte order):

    magic      4 bytes  b"SHTR"
    version    uint16   format version (1)
    endian     uint16   0x0102 as written; a reader seeing 0x0201 must swap
    m          uint32   truncation level
    steps      uint64   solver steps behind the trajectory
    n_records  uint64   number of recorded times
    times      float64[n_records]
    states     complex128[n_records * m]
"""

import csv
import io
import os
import struct
import tempfile

import numpy as np

from .errors import DomainError

MAGIC = b"SHTR"
VERSION = 1
ENDIAN_MARK = 0x0102
_HEADER = struct.Struct("=4sHHIQQ")


def atomic_write_bytes(path, payload: bytes):
    """Write via a temporary file in the same directory, then rename."""
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str):
    atomic_write_bytes(path, text.encode("utf-8"))


def write_snapshot(path, times, states, steps):
    times = np.ascontiguousarray(times, dtype=np.float64)
    states = np.ascontiguousarray(states, dtype=np.complex128)
    if states.ndim != 2 or states.shape[0] != times.shape[0]:
        raise DomainError("states must be (n_records, m) matching times")
    n_records, m = states.shape
    header = _HEADER.pack(MAGIC, VERSION, ENDIAN_MARK, m, steps, n_records)
    atomic_write_bytes(path, header + times.tobytes() + states.tobytes())


def read_snapshot(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    magic, version, endian, m, steps, n_records = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise DomainError(f"not a trajectory snapshot: bad magic {magic!r}")
    if version != VERSION:
        raise DomainError(f"unsupported snapshot version {version}")
    swap = endian != ENDIAN_MARK
    off = _HEADER.size
    times = np.frombuffer(raw, dtype=np.float64, count=n_records, offset=off)
    off += times.nbytes
    states = np.frombuffer(raw, dtype=np.complex128, count=n_records * m, offset=off)
    if swap:
        times = times.byteswap()
        states = states.byteswap()
    return times.copy(), states.reshape(n_records, m).copy(), steps


def write_csv(path, columns: dict, meta: dict | None = None):
    """Column-oriented CSV with optional ``# key=value`` metadata lines.

    Floats are rendered with repr so identical inputs produce identical bytes.
    """
    names = list(columns)
    rows = len(next(iter(columns.values()))) if names else 0
    lines = []
    for key, value in (meta or {}).items():
        lines.append(f"# {key}={value}")
    out = [("\n".join(lines) + "\n") if lines else ""]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(names)
    for i in range(rows):
        writer.writerow([_fmt(columns[name][i]) for name in names])
    out.append(buf.getvalue())
    atomic_write_text(path, "".join(out))


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (complex, np.complexfloating)):
        return repr(complex(x))
    return x
