"""Named-tensor archive.

Layout (all integers little-endian):

    8 bytes   magic b"SNOTENS\\x00"
    u32       format version (currently 1)
    u32       tensor count
    per tensor:
        u32       name byte length
        bytes     name (utf-8)
        u32       rank
        u64*rank  shape
        f64*size  payload, row-major, little-endian
    u32       crc32 of every preceding byte

Unknown major versions are rejected with FormatError; truncation or payload
corruption surfaces as ChecksumError and never yields a partial result.
"""
from __future__ import annotations

import struct
import zlib

import numpy as np

from .errors import ChecksumError, FormatError

MAGIC = b"SNOTENS\x00"
VERSION = 1


def save_tensors(path, tensors: dict[str, np.ndarray]):
    chunks = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name, arr in tensors.items():
        a = np.asarray(arr, dtype=np.float64)
        nb = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(nb)))
        chunks.append(nb)
        chunks.append(struct.pack("<I", a.ndim))
        chunks.append(struct.pack(f"<{a.ndim}Q", *a.shape))
        chunks.append(a.astype("<f8", copy=False).tobytes())
    blob = b"".join(chunks)
    blob += struct.pack("<I", zlib.crc32(blob))
    with open(path, "wb") as fh:
        fh.write(blob)


def load_tensors(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(MAGIC) + 12:
        raise ChecksumError("file too short to be an archive")
    if blob[: len(MAGIC)] != MAGIC:
        raise FormatError("bad magic; not a tensor archive")
    body, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) != crc:
        raise ChecksumError("crc mismatch; truncated or corrupt archive")
    version, count = struct.unpack_from("<II", body, len(MAGIC))
    if version != VERSION:
        raise FormatError(f"unsupported archive version {version}")
    off = len(MAGIC) + 8
    out: dict[str, np.ndarray] = {}
    try:
        for _ in range(count):
            (nlen,) = struct.unpack_from("<I", body, off)
            off += 4
            name = body[off : off + nlen].decode("utf-8")
            off += nlen
            (rank,) = struct.unpack_from("<I", body, off)
            off += 4
            shape = struct.unpack_from(f"<{rank}Q", body, off)
            off += 8 * rank
            size = int(np.prod(shape, dtype=np.int64)) if rank else 1
            arr = np.frombuffer(body, dtype="<f8", count=size, offset=off)
            off += 8 * size
            out[name] = arr.astype(np.float64).reshape(shape)
    except (struct.error, ValueError) as exc:
        raise ChecksumError(f"archive body inconsistent: {exc}") from exc
    if off != len(body):
        raise ChecksumError("trailing bytes after declared tensors")
    return out
