"""Protocol messages and their binary frame encoding.

Frame = u32 length (of everything after it), then the header
``version:u8 kind:u8 request_id:16B party:u16`` and a kind-specific payload.
All integers are little-endian. Matrices are ``rows:u32 cols:u32`` followed by
rows*cols float64 values in row-major order. ``party`` is the behavior
platform index for local messages and 0 otherwise.

Payloads:
  EmbeddingRequest     mode:u8 (0 infer, 1 train)  n:u32  user_ids:n*u64  timestamps:n*i64
  LocalEmbedding       matrix  cold_start:rows*u8
  AggregatedEmbedding  matrix
  UserGradient         matrix
  LocalGradient        matrix
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

WIRE_VERSION = 1
HEADER = struct.Struct("<BB16sH")
NO_TIMESTAMP = np.iinfo(np.int64).max


class WireError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class EmbeddingRequest:
    user_ids: np.ndarray
    timestamps: np.ndarray
    request_id: bytes
    training: bool = False
    kind = 1


@dataclass(frozen=True, eq=False)
class LocalEmbedding:
    platform: int
    embeddings: np.ndarray
    cold_start: np.ndarray
    request_id: bytes
    kind = 2


@dataclass(frozen=True, eq=False)
class AggregatedEmbedding:
    embeddings: np.ndarray
    request_id: bytes
    kind = 3


@dataclass(frozen=True, eq=False)
class UserGradient:
    gradient: np.ndarray
    request_id: bytes
    kind = 4


@dataclass(frozen=True, eq=False)
class LocalGradient:
    platform: int
    gradient: np.ndarray
    request_id: bytes
    kind = 5


MESSAGE_TYPES = {cls.kind: cls for cls in (EmbeddingRequest, LocalEmbedding, AggregatedEmbedding, UserGradient, LocalGradient)}
FedMessage = EmbeddingRequest | LocalEmbedding | AggregatedEmbedding | UserGradient | LocalGradient


def _matrix(m: np.ndarray) -> bytes:
    m = np.ascontiguousarray(m, dtype="<f8")
    if m.ndim != 2:
        raise WireError(f"expected a matrix, got shape {m.shape}")
    return struct.pack("<II", *m.shape) + m.tobytes()


def _read_matrix(buf: memoryview, off: int) -> tuple[np.ndarray, int]:
    rows, cols = struct.unpack_from("<II", buf, off)
    off += 8
    n = rows * cols * 8
    if off + n > len(buf):
        raise WireError("truncated matrix payload")
    m = np.frombuffer(buf[off : off + n], dtype="<f8").reshape(rows, cols).astype(np.float64)
    return m, off + n


def encode(msg: FedMessage) -> bytes:
    rid = msg.request_id
    if len(rid) != 16:
        raise WireError("request id must be 16 bytes")
    party = getattr(msg, "platform", 0)
    if isinstance(msg, EmbeddingRequest):
        ids = np.ascontiguousarray(msg.user_ids, dtype="<u8")
        ts = np.ascontiguousarray(msg.timestamps, dtype="<i8")
        if ids.shape != ts.shape or ids.ndim != 1:
            raise WireError("user ids and timestamps must be equal-length vectors")
        payload = struct.pack("<BI", int(msg.training), len(ids)) + ids.tobytes() + ts.tobytes()
    elif isinstance(msg, LocalEmbedding):
        cold = np.ascontiguousarray(msg.cold_start, dtype=np.uint8)
        if len(cold) != msg.embeddings.shape[0]:
            raise WireError("one cold-start flag per embedding row")
        payload = _matrix(msg.embeddings) + cold.tobytes()
    elif isinstance(msg, AggregatedEmbedding):
        payload = _matrix(msg.embeddings)
    elif isinstance(msg, (UserGradient, LocalGradient)):
        payload = _matrix(msg.gradient)
    else:
        raise WireError(f"not a protocol message: {type(msg).__name__}")
    body = HEADER.pack(WIRE_VERSION, msg.kind, rid, party) + payload
    return struct.pack("<I", len(body)) + body


def decode(frame: bytes) -> FedMessage:
    buf = memoryview(frame)
    if len(buf) < 4 + HEADER.size:
        raise WireError("frame too short")
    (length,) = struct.unpack_from("<I", buf, 0)
    if length != len(buf) - 4:
        raise WireError(f"length prefix {length} does not match frame size {len(buf) - 4}")
    version, kind, rid, party = HEADER.unpack_from(buf, 4)
    if version != WIRE_VERSION:
        raise WireError(f"unsupported wire version {version}")
    off = 4 + HEADER.size
    if kind == EmbeddingRequest.kind:
        mode, n = struct.unpack_from("<BI", buf, off)
        off += 5
        ids = np.frombuffer(buf[off : off + 8 * n], dtype="<u8").astype(np.int64)
        ts = np.frombuffer(buf[off + 8 * n : off + 16 * n], dtype="<i8").astype(np.int64)
        off += 16 * n
        msg = EmbeddingRequest(ids, ts, rid, bool(mode))
    elif kind == LocalEmbedding.kind:
        m, off = _read_matrix(buf, off)
        cold = np.frombuffer(buf[off : off + m.shape[0]], dtype=np.uint8).astype(bool)
        off += m.shape[0]
        msg = LocalEmbedding(party, m, cold, rid)
    elif kind in (AggregatedEmbedding.kind, UserGradient.kind):
        m, off = _read_matrix(buf, off)
        msg = MESSAGE_TYPES[kind](m, rid)
    elif kind == LocalGradient.kind:
        m, off = _read_matrix(buf, off)
        msg = LocalGradient(party, m, rid)
    else:
        raise WireError(f"unknown message kind {kind}")
    if off != len(buf):
        raise WireError("trailing bytes after payload")
    return msg


def payload_shapes(msg: FedMessage) -> tuple:
    if isinstance(msg, EmbeddingRequest):
        return (len(msg.user_ids),)
    arr = msg.gradient if isinstance(msg, (UserGradient, LocalGradient)) else msg.embeddings
    return arr.shape
