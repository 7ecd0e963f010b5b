"""Checkpoint format: text index plus raw little-endian float32 blob.

Layout (all header text UTF-8, LF line endings):

    lfsal-checkpoint-v1
    iteration=<int>
    [config]
    <RunConfig key=value lines>
    [tensors]
    <name> <dtype> <d0>x<d1>x... <byte offset>
    [blob]
    <raw float32 data, row-major, concatenated in index order>

Saving the result of a load reproduces the original file byte for byte,
which is what makes resume-equals-uninterrupted checks meaningful.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .config import RunConfig
from .errors import DataError

MAGIC = "lfsal-checkpoint-v1"
_BLOB_MARKER = b"[blob]\n"


def save_checkpoint(path, config: RunConfig, iteration: int,
                    tensors: dict[str, np.ndarray]) -> None:
    """Write named tensors (cast to little-endian float32) plus config and counter."""
    lines = [MAGIC, f"iteration={iteration}", "[config]"]
    lines += config.to_text().rstrip("\n").splitlines()
    lines.append("[tensors]")
    blobs = []
    offset = 0
    for name, arr in tensors.items():
        data = np.ascontiguousarray(arr, dtype="<f4")
        shape = "x".join(str(d) for d in arr.shape) if arr.ndim else "scalar"
        lines.append(f"{name} float32 {shape} {offset}")
        blobs.append(data.tobytes())
        offset += data.nbytes
    header = ("\n".join(lines) + "\n").encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(_BLOB_MARKER)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path):
    """Returns (config, iteration, {name: float32 ndarray})."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing checkpoint file {path}")
    raw = path.read_bytes()
    split = raw.find(_BLOB_MARKER)
    if split < 0:
        raise DataError(f"{path} is not a checkpoint (no blob marker)")
    header = raw[:split].decode("utf-8").splitlines()
    blob = raw[split + len(_BLOB_MARKER):]

    if not header or header[0] != MAGIC:
        raise DataError(f"{path} is not a {MAGIC} file")
    if not header[1].startswith("iteration="):
        raise DataError(f"{path}: missing iteration counter")
    iteration = int(header[1].split("=", 1)[1])

    try:
        cfg_start = header.index("[config]") + 1
        idx_start = header.index("[tensors]") + 1
    except ValueError as exc:
        raise DataError(f"{path}: malformed checkpoint header") from exc
    config = RunConfig.from_text("\n".join(header[cfg_start:idx_start - 1]))

    tensors: dict[str, np.ndarray] = {}
    expected = 0
    for line in header[idx_start:]:
        name, dtype, shape_s, offset_s = line.rsplit(" ", 3)
        if dtype != "float32":
            raise DataError(f"{path}: unsupported tensor dtype {dtype}")
        shape = () if shape_s == "scalar" else tuple(int(d) for d in shape_s.split("x"))
        count = int(np.prod(shape)) if shape else 1
        offset = int(offset_s)
        if offset != expected:
            raise DataError(f"{path}: tensor {name} at offset {offset}, expected {expected}")
        end = offset + 4 * count
        if end > len(blob):
            raise DataError(f"{path}: blob truncated at tensor {name}")
        tensors[name] = np.frombuffer(blob[offset:end], dtype="<f4").reshape(shape).copy()
        expected = end
    if expected != len(blob):
        raise DataError(f"{path}: {len(blob) - expected} trailing bytes after the last tensor")
    return config, iteration, tensors
