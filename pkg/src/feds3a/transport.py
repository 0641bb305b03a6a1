"""Difference-based model exchange.

Frames (all little-endian)::

    sparse:  b"FS3A" | u32 base | u32 length | u32 nnz | u32 idx[nnz] | f64 val[nnz] | u64 fnv
    dense:   b"FS3D" | u32 length | f64 val[length] | u64 fnv

``fnv`` is 64-bit FNV-1a over every byte before it.  A sparse frame costs
``24 + 12 * nnz`` bytes and a dense one ``16 + 8 * length``; senders ship
whichever is smaller.
"""

from __future__ import annotations

import struct
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .errors import CorruptionError, StaleBaseError, VersionError
from .nn import ParamVector

SPARSE_MAGIC = b"FS3A"
DENSE_MAGIC = b"FS3D"
SPARSE_HEADER = 24
DENSE_HEADER = 16
DEFAULT_ZERO_THRESHOLD = 1e-8

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK = (1 << 64) - 1


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a."""
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & _MASK
    return h


def vector_checksum(values: np.ndarray) -> int:
    return fnv1a64(np.ascontiguousarray(values, dtype="<f8").tobytes())


@dataclass(frozen=True, eq=False)
class SparseDelta:
    base_version: int
    length: int
    indices: np.ndarray
    values: np.ndarray
    checksum: int  # FNV-1a of the reconstructed float64 vector

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        if idx.size and (np.any(np.diff(idx) <= 0) or idx[0] < 0 or idx[-1] >= self.length):
            raise VersionError("sparse indices must be strictly increasing and in range")
        if idx.shape != np.shape(self.values):
            raise VersionError("indices and values differ in length")

    @property
    def nnz(self) -> int:
        return int(np.size(self.indices))


def encode(
    new: ParamVector, base: ParamVector, base_version: int, zero_threshold: float = DEFAULT_ZERO_THRESHOLD
) -> SparseDelta:
    """Entries of ``new - base`` with magnitude above ``zero_threshold``.

    Stored values are ``new[i] - base[i]`` exactly; the receiver rebuilds
    ``base[i] + value``.  The checksum covers that reconstruction so the
    receiver can verify it bit for bit.
    """
    if len(new) != len(base):
        raise VersionError(f"length mismatch: new {len(new)} vs base {len(base)}")
    delta = new.values - base.values
    idx = np.flatnonzero(np.abs(delta) > zero_threshold)
    vals = delta[idx]
    rebuilt = base.values.copy()
    rebuilt[idx] += vals
    return SparseDelta(int(base_version), len(new), idx, vals, vector_checksum(rebuilt))


def apply_delta(delta: SparseDelta, base: ParamVector) -> ParamVector:
    if len(base) != delta.length:
        raise VersionError(f"delta length {delta.length} does not match base {len(base)}")
    out = base.values.copy()
    out[delta.indices] += delta.values
    if vector_checksum(out) != delta.checksum:
        raise CorruptionError("reconstructed model fails its checksum")
    return base.with_values(out)


def decode(delta: SparseDelta, base: ParamVector | "ModelCache") -> ParamVector:
    """Rebuild ``base + delta``; ``base`` may be a :class:`ModelCache`."""
    if isinstance(base, ModelCache):
        base = base.get(delta.base_version)
    return apply_delta(delta, base)


def sparse_cost(nnz: int) -> int:
    return SPARSE_HEADER + 12 * int(nnz)


def dense_cost(length: int) -> int:
    return DENSE_HEADER + 8 * int(length)


def byte_cost(item: SparseDelta | ParamVector | np.ndarray) -> int:
    """Bytes on the wire: sparse frame for a delta, dense frame for a vector."""
    if isinstance(item, SparseDelta):
        return sparse_cost(item.nnz)
    return dense_cost(len(item))


def transmitted_cost(delta: SparseDelta) -> int:
    """What a sender actually ships: the cheaper of the two framings."""
    return min(sparse_cost(delta.nnz), dense_cost(delta.length))


def pack_sparse(delta: SparseDelta) -> bytes:
    body = (
        SPARSE_MAGIC
        + struct.pack("<III", delta.base_version, delta.length, delta.nnz)
        + np.asarray(delta.indices, dtype="<u4").tobytes()
        + np.asarray(delta.values, dtype="<f8").tobytes()
    )
    return body + struct.pack("<Q", fnv1a64(body))


def pack_dense(params: ParamVector) -> bytes:
    body = DENSE_MAGIC + struct.pack("<I", len(params)) + params.values.astype("<f8").tobytes()
    return body + struct.pack("<Q", fnv1a64(body))


def _split_frame(frame: bytes) -> bytes:
    if len(frame) < 12:
        raise CorruptionError("frame too short")
    body, tail = frame[:-8], frame[-8:]
    if struct.unpack("<Q", tail)[0] != fnv1a64(body):
        raise CorruptionError("frame checksum mismatch")
    return body


def unpack_sparse(frame: bytes, base: ParamVector) -> SparseDelta:
    """Parse a sparse frame; ``base`` supplies the reconstruction checksum."""
    body = _split_frame(frame)
    if body[:4] != SPARSE_MAGIC:
        raise CorruptionError("not a sparse frame")
    base_version, length, nnz = struct.unpack("<III", body[4:16])
    if len(body) != 16 + 12 * nnz:
        raise CorruptionError("sparse frame length does not match nnz")
    idx = np.frombuffer(body[16:16 + 4 * nnz], dtype="<u4").astype(np.int64)
    vals = np.frombuffer(body[16 + 4 * nnz:], dtype="<f8").astype(np.float64)
    if len(base) != length:
        raise VersionError(f"frame length {length} does not match base {len(base)}")
    rebuilt = base.values.copy()
    rebuilt[idx] += vals
    return SparseDelta(base_version, length, idx, vals, vector_checksum(rebuilt))


def unpack_dense(frame: bytes, like: ParamVector) -> ParamVector:
    body = _split_frame(frame)
    if body[:4] != DENSE_MAGIC:
        raise CorruptionError("not a dense frame")
    (length,) = struct.unpack("<I", body[4:8])
    if len(body) != 8 + 8 * length:
        raise CorruptionError("dense frame length mismatch")
    return like.with_values(np.frombuffer(body[8:], dtype="<f8").astype(np.float64))


class ModelCache:
    """Recent global models keyed by version, oldest evicted first."""

    def __init__(self, depth: int):
        if depth < 1:
            raise VersionError("cache depth must be positive")
        self.depth = depth
        self._models: OrderedDict[int, ParamVector] = OrderedDict()

    def put(self, version: int, params: ParamVector) -> None:
        if self._models and version <= next(reversed(self._models)):
            raise VersionError(f"version {version} is not newer than the cached ones")
        self._models[version] = params
        while len(self._models) > self.depth:
            self._models.popitem(last=False)

    def get(self, version: int) -> ParamVector:
        try:
            return self._models[version]
        except KeyError:
            raise StaleBaseError(
                f"base version {version} not cached (have {list(self._models)})"
            ) from None

    def __contains__(self, version: int) -> bool:
        return version in self._models

    def versions(self) -> list[int]:
        return list(self._models)


@dataclass(frozen=True)
class Transfer:
    """Result of shipping one model: what arrived and what it cost."""

    params: ParamVector
    sent_bytes: int
    dense_bytes: int
    nnz: int
    sparse: bool


def send(
    new: ParamVector,
    base: ParamVector | None,
    base_version: int,
    zero_threshold: float = DEFAULT_ZERO_THRESHOLD,
    mode: str = "sparse",
) -> Transfer:
    """Ship ``new`` to a receiver holding ``base``; returns what the receiver rebuilds.

    With ``mode="dense"`` or no usable base the full vector is sent.
    """
    dense = dense_cost(len(new))
    if mode == "dense" or base is None:
        return Transfer(new, dense, dense, len(new), False)
    delta = encode(new, base, base_version, zero_threshold)
    cost = sparse_cost(delta.nnz)
    if cost >= dense:
        return Transfer(new, dense, dense, delta.nnz, False)
    return Transfer(apply_delta(delta, base), cost, dense, delta.nnz, True)
