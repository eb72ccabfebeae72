"""ZSLF embedding files: id-keyed float32 vectors in a flat binary layout.

Layout (little-endian throughout)::

    magic   4 bytes   b"ZSLF"
    version u32       1
    count   u32       number of records
    dim     u32       vector length shared by every record
    record  (count times)
        id_len  u16
        id      id_len bytes, UTF-8
        vector  dim * float32

The same container carries visual features, textual features and class
vectors (labels as ids).  Write followed by load is a bitwise identity.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import CorruptionError, FormatError, ValidationError

MAGIC = b"ZSLF"
VERSION = 1

_HEADER = struct.Struct("<4sIII")
_ID_LEN = struct.Struct("<H")


@dataclass
class FeatureTable:
    """Ordered id -> float32[dim] records, e.g. one row per image or document."""

    dim: int
    ids: list[str] = field(default_factory=list)
    vectors: np.ndarray = None  # shape (len(ids), dim), float32

    def __post_init__(self):
        if self.dim <= 0:
            raise ValidationError(f"dim must be positive, got {self.dim}")
        if self.vectors is None:
            self.vectors = np.zeros((0, self.dim), dtype=np.float32)
        self.vectors = np.ascontiguousarray(self.vectors, dtype=np.float32)
        if self.vectors.ndim != 2 or self.vectors.shape != (len(self.ids), self.dim):
            raise ValidationError(
                f"vectors shape {self.vectors.shape} does not match "
                f"{len(self.ids)} ids of dim {self.dim}"
            )
        if len(set(self.ids)) != len(self.ids):
            dupes = {i for i in self.ids if self.ids.count(i) > 1}
            raise ValidationError(f"duplicate ids: {sorted(dupes)}")
        self._index = {rid: i for i, rid in enumerate(self.ids)}

    def __len__(self):
        return len(self.ids)

    def __contains__(self, rid):
        return rid in self._index

    def vector(self, rid: str) -> np.ndarray:
        return self.vectors[self._index[rid]]

    def __eq__(self, other):
        return (
            isinstance(other, FeatureTable)
            and self.dim == other.dim
            and self.ids == other.ids
            and self.vectors.tobytes() == other.vectors.tobytes()
        )


class ClassVectorSet:
    """Label-keyed semantic vectors (the class prototypes, typically 300-dim)."""

    def __init__(self, dim: int, entries: dict[str, np.ndarray]):
        if dim <= 0:
            raise ValidationError(f"dim must be positive, got {dim}")
        self.dim = dim
        self.entries = {}
        for label, vec in entries.items():
            vec = np.ascontiguousarray(vec, dtype=np.float32)
            if vec.shape != (dim,):
                raise ValidationError(
                    f"class vector for {label!r} has shape {vec.shape}, expected ({dim},)"
                )
            self.entries[label] = vec

    @property
    def labels(self) -> list[str]:
        return list(self.entries)

    def __len__(self):
        return len(self.entries)

    def __contains__(self, label):
        return label in self.entries

    def __getitem__(self, label) -> np.ndarray:
        return self.entries[label]

    def matrix(self, label_order: list[str]) -> np.ndarray:
        """Stack the vectors for `label_order` into a (len, dim) float32 matrix."""
        missing = [l for l in label_order if l not in self.entries]
        if missing:
            raise ValidationError(f"labels without class vectors: {missing}")
        return np.stack([self.entries[l] for l in label_order]).astype(np.float32)

    def to_table(self) -> FeatureTable:
        vecs = (
            np.stack(list(self.entries.values()))
            if self.entries
            else np.zeros((0, self.dim), np.float32)
        )
        return FeatureTable(dim=self.dim, ids=self.labels, vectors=vecs)

    @classmethod
    def from_table(cls, table: FeatureTable) -> "ClassVectorSet":
        return cls(table.dim, {rid: table.vectors[i] for i, rid in enumerate(table.ids)})


def to_bytes(table: FeatureTable) -> bytes:
    """Serialize `table` to the ZSLF byte layout."""
    # FeatureTable construction already rejects duplicate ids / bad shapes.
    blob = bytearray(_HEADER.pack(MAGIC, VERSION, len(table), table.dim))
    for rid, vec in zip(table.ids, table.vectors):
        id_bytes = rid.encode("utf-8")
        if len(id_bytes) > 0xFFFF:
            raise ValidationError(f"id too long for u16 length field: {rid[:40]}...")
        blob += _ID_LEN.pack(len(id_bytes))
        blob += id_bytes
        blob += vec.tobytes()  # contiguous little-endian float32
    return bytes(blob)


def write_feature_file(table: FeatureTable, path) -> None:
    """Serialize `table` to `path`; load_feature_file inverts it bit-exactly."""
    with open(path, "wb") as fh:
        fh.write(to_bytes(table))


def from_bytes(data: bytes, path="<bytes>") -> FeatureTable:
    """Parse ZSLF bytes into a FeatureTable, validating structure as it goes."""
    if len(data) < _HEADER.size:
        raise CorruptionError(f"{path}: file shorter than the 16-byte header")
    magic, version, count, dim = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if dim == 0:
        raise FormatError(f"{path}: header dim must be positive")

    vec_bytes = 4 * dim
    ids = []
    vectors = np.empty((count, dim), dtype=np.float32)
    offset = _HEADER.size
    for i in range(count):
        if offset + _ID_LEN.size > len(data):
            raise CorruptionError(f"{path}: truncated at record {i} (id length)")
        (id_len,) = _ID_LEN.unpack_from(data, offset)
        offset += _ID_LEN.size
        if offset + id_len + vec_bytes > len(data):
            raise CorruptionError(f"{path}: truncated at record {i} (payload)")
        ids.append(data[offset : offset + id_len].decode("utf-8"))
        offset += id_len
        vectors[i] = np.frombuffer(data, dtype="<f4", count=dim, offset=offset)
        offset += vec_bytes
    if offset != len(data):
        raise CorruptionError(f"{path}: {len(data) - offset} trailing bytes after last record")

    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise ValidationError(f"{path}: duplicate ids: {dupes}")
    return FeatureTable(dim=dim, ids=ids, vectors=vectors)


def load_feature_file(path) -> FeatureTable:
    """Parse a ZSLF file into a FeatureTable."""
    with open(path, "rb") as fh:
        return from_bytes(fh.read(), path=path)
