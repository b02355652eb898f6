"""Dataset file format.

One file per dataset:

    8 bytes   magic b"SNODATA\\x00"
    u32 LE    JSON header byte length
    bytes     JSON header (format_version, task spec, array shapes in payload
              order, normalization stats, split indices)
    payload   the declared arrays, row-major float64 little-endian, in order
              inputs, outputs, grid, [aux_grid]

Readers reject unknown major versions (FormatError) and truncated payloads
(ChecksumError).
"""
from __future__ import annotations

import json
import struct

import numpy as np

from .datagen import TaskDataset, TaskSpec
from .errors import ChecksumError, FormatError
from .polycore import Grid

MAGIC = b"SNODATA\x00"
FORMAT_VERSION = 1


def save_dataset(path, ds: TaskDataset):
    arrays = [("inputs", ds.inputs), ("outputs", ds.outputs), ("grid", ds.grid.points)]
    if ds.aux_grid is not None:
        arrays.append(("aux_grid", ds.aux_grid.points))
    header = {
        "format_version": FORMAT_VERSION,
        "kind": "dataset",
        "task_spec": ds.spec.to_dict(),
        "arrays": [{"name": n, "shape": list(a.shape)} for n, a in arrays],
        "stats": {"in_mean": ds.in_mean.tolist(), "in_std": ds.in_std.tolist()},
        "train_idx": ds.train_idx.tolist(),
        "test_idx": ds.test_idx.tolist(),
        "normalized": ds.normalized,
    }
    hb = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(hb)))
        fh.write(hb)
        for _, a in arrays:
            fh.write(np.asarray(a, dtype=np.float64).astype("<f8", copy=False).tobytes())


def load_dataset(path) -> TaskDataset:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(MAGIC) + 4 or blob[: len(MAGIC)] != MAGIC:
        raise FormatError("not a dataset file")
    (hlen,) = struct.unpack_from("<I", blob, len(MAGIC))
    off = len(MAGIC) + 4
    try:
        header = json.loads(blob[off : off + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"unreadable dataset header: {exc}") from exc
    if header.get("format_version") != FORMAT_VERSION:
        raise FormatError(f"unsupported dataset version {header.get('format_version')}")
    off += hlen
    arrays = {}
    for entry in header["arrays"]:
        shape = tuple(int(s) for s in entry["shape"])
        size = int(np.prod(shape))
        end = off + 8 * size
        if end > len(blob):
            raise ChecksumError(f"dataset payload truncated at array {entry['name']!r}")
        arrays[entry["name"]] = np.frombuffer(blob, dtype="<f8", count=size,
                                              offset=off).astype(np.float64).reshape(shape)
        off = end
    if off != len(blob):
        raise ChecksumError("trailing bytes after declared payload")
    spec = TaskSpec.from_dict(header["task_spec"])
    return TaskDataset(
        spec=spec,
        inputs=arrays["inputs"],
        outputs=arrays["outputs"],
        grid=Grid(arrays["grid"]),
        aux_grid=Grid(arrays["aux_grid"]) if "aux_grid" in arrays else None,
        in_mean=np.asarray(header["stats"]["in_mean"], dtype=np.float64),
        in_std=np.asarray(header["stats"]["in_std"], dtype=np.float64),
        train_idx=np.asarray(header["train_idx"], dtype=np.int64),
        test_idx=np.asarray(header["test_idx"], dtype=np.int64),
        normalized=bool(header.get("normalized", False)),
    )
