"""Binary dataset container: `LWDS` magic, fixed little-endian layout.

Header: magic 4s, format version u16, record count u64, feature dim u32.
Per record: record_id u64, label u8, features as f32 * dim.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import ParseError
from .pipeline import FeatureSet

MAGIC = b"LWDS"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHQI")
_RECORD_PREFIX = struct.Struct("<QB")

HEADER_BYTES = _HEADER.size            # 18
RECORD_OVERHEAD_BYTES = _RECORD_PREFIX.size  # 9


def record_bytes(dim: int) -> int:
    """On-disk bytes for one record at the given feature dimension."""
    return RECORD_OVERHEAD_BYTES + 4 * dim


def container_bytes(n_records: int, dim: int) -> int:
    """Predicted on-disk size of a container file."""
    return HEADER_BYTES + n_records * record_bytes(dim)


def write_container(path, dataset: FeatureSet) -> None:
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, len(dataset), dataset.dimension))
        feats = np.ascontiguousarray(dataset.features, dtype="<f4")
        for i in range(len(dataset)):
            fh.write(_RECORD_PREFIX.pack(int(dataset.ids[i]), int(dataset.labels[i])))
            fh.write(feats[i].tobytes())


def read_container(path) -> FeatureSet:
    with open(path, "rb") as fh:
        head = fh.read(HEADER_BYTES)
        if len(head) < HEADER_BYTES:
            raise ParseError(f"{path}: truncated container header")
        magic, version, count, dim = _HEADER.unpack(head)
        if magic != MAGIC:
            raise ParseError(f"{path}: bad magic {magic!r}")
        if version != FORMAT_VERSION:
            raise ParseError(f"{path}: unsupported container version {version}")
        body = fh.read()
    expected = count * record_bytes(dim)
    if len(body) != expected:
        raise ParseError(f"{path}: expected {expected} record bytes, found {len(body)}")
    ids = np.empty(count, dtype=np.uint64)
    labels = np.empty(count, dtype=np.uint8)
    features = np.empty((count, dim), dtype=np.float32)
    stride = record_bytes(dim)
    for i in range(count):
        off = i * stride
        rid, label = _RECORD_PREFIX.unpack_from(body, off)
        ids[i] = rid
        labels[i] = label
        features[i] = np.frombuffer(body, dtype="<f4", count=dim, offset=off + RECORD_OVERHEAD_BYTES)
    return FeatureSet(ids, labels, features)
