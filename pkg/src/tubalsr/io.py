"""File formats: TNS3 binary tensors, CSV frontal slices, JSON sidecars.

TNS3 layout: ASCII magic ``TNS3``, three little-endian uint32 dims, then
``n1*n2*n3`` little-endian float64 values in row-major order (k fastest).
"""
from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

from .tensor import as_tensor3

MAGIC = b"TNS3"
_HEADER = struct.Struct("<4s3I")


def tns3_bytes(t):
    t = as_tensor3(t)
    return _HEADER.pack(MAGIC, *t.shape) + np.ascontiguousarray(t, dtype="<f8").tobytes()


def tns3_from_bytes(buf):
    if len(buf) < _HEADER.size:
        raise ValueError("truncated TNS3 header")
    magic, n1, n2, n3 = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise ValueError(f"bad TNS3 magic {magic!r}")
    count = n1 * n2 * n3
    body = buf[_HEADER.size:]
    if len(body) != 8 * count:
        raise ValueError(f"TNS3 body has {len(body)} bytes, expected {8 * count}")
    values = np.frombuffer(body, dtype="<f8", count=count)
    return as_tensor3(values.reshape(n1, n2, n3).astype(float))


def write_tns3(path, t):
    Path(path).write_bytes(tns3_bytes(t))


def read_tns3(path):
    return tns3_from_bytes(Path(path).read_bytes())


def write_slice_csv(path, t, k):
    """Write frontal slice ``t[:, :, k]`` as plain comma-separated decimals."""
    t = as_tensor3(t)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in t[:, :, k]:
            writer.writerow(repr(float(v)) for v in row)


def read_slice_csv(path):
    """Read one frontal slice back as an ``n1 x n2 x 1`` tensor."""
    with open(path, newline="") as fh:
        rows = [[float(v) for v in row] for row in csv.reader(fh) if row]
    if not rows or len({len(r) for r in rows}) != 1:
        raise ValueError(f"{path}: ragged or empty slice CSV")
    return as_tensor3(np.array(rows)[:, :, None])


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path):
    return json.loads(Path(path).read_text())


def write_rows_csv(path, header, rows):
    """Header-first CSV used for traces, reports and CDFs."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def read_rows_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, [row for row in reader]
