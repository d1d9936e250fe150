"""Framed wire protocol and offline capture format for compressed records.

Every frame is `LWIR` + version u8 + msg_type u8 + payload_len u32, all
integers little-endian, followed by the payload.  The offline file format
(`LWOF`) reuses the HELLO and RECORD_BATCH payload encodings verbatim so a
capture replays byte-for-byte into the same server path.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path

import numpy as np

from .errors import ProtocolError

FRAME_MAGIC = b"LWIR"
PROTOCOL_VERSION = 1
OFFLINE_MAGIC = b"LWOF"
OFFLINE_VERSION = 1

_FRAME_HEADER = struct.Struct("<4sBBI")
_HELLO = struct.Struct("<QH32sB")
_BATCH_PREFIX = struct.Struct("<IH")
_RECORD_PREFIX = struct.Struct("<QQB")
_ACK = struct.Struct("<IH")
_REJECT = struct.Struct("<B")
_OFFLINE_HEADER = struct.Struct("<4sH")

UNLABELED = 0xFF


class MsgType(IntEnum):
    HELLO = 0x01
    RECORD_BATCH = 0x02
    ACK = 0x03
    REJECT = 0x04


class RejectReason(IntEnum):
    FINGERPRINT_MISMATCH = 1
    VERSION = 2
    MALFORMED = 3


def record_wire_bytes(latent_size: int) -> int:
    """Payload bytes for one record: id u64 + timestamp u64 + label u8 + f32 latents."""
    return 8 + 8 + 1 + 4 * latent_size


@dataclass
class CompressedRecord:
    record_id: int
    timestamp_micros: int
    latent: np.ndarray  # f32, shape (latent_size,)
    truth_label: int | None = None  # 0, 1, or None outside evaluation mode


@dataclass(frozen=True)
class Hello:
    stream_id: int
    latent_size: int
    fingerprint: bytes  # 32-byte preprocessing-model hash
    evaluation_mode: bool

    def __post_init__(self):
        if len(self.fingerprint) != 32:
            raise ValueError(f"fingerprint must be 32 bytes, got {len(self.fingerprint)}")


def encode_hello(hello: Hello) -> bytes:
    return _HELLO.pack(hello.stream_id, hello.latent_size, hello.fingerprint,
                       1 if hello.evaluation_mode else 0)


def decode_hello(payload: bytes) -> Hello:
    if len(payload) != _HELLO.size:
        raise ProtocolError(f"HELLO payload must be {_HELLO.size} bytes, got {len(payload)}")
    stream_id, latent_size, fingerprint, eval_flag = _HELLO.unpack(payload)
    return Hello(stream_id=stream_id, latent_size=latent_size, fingerprint=fingerprint,
                 evaluation_mode=bool(eval_flag))


def encode_record_batch(frame_seq: int, records: list[CompressedRecord]) -> bytes:
    parts = [_BATCH_PREFIX.pack(frame_seq, len(records))]
    for record in records:
        label = UNLABELED if record.truth_label is None else int(record.truth_label)
        parts.append(_RECORD_PREFIX.pack(record.record_id, record.timestamp_micros, label))
        parts.append(np.asarray(record.latent, dtype="<f4").tobytes())
    return b"".join(parts)


def decode_record_batch(payload: bytes, latent_size: int) -> tuple[int, list[CompressedRecord]]:
    if len(payload) < _BATCH_PREFIX.size:
        raise ProtocolError("RECORD_BATCH payload shorter than its prefix")
    frame_seq, count = _BATCH_PREFIX.unpack_from(payload, 0)
    stride = record_wire_bytes(latent_size)
    expected = _BATCH_PREFIX.size + count * stride
    if len(payload) != expected:
        raise ProtocolError(
            f"RECORD_BATCH of {count} records should be {expected} bytes, got {len(payload)}")
    records = []
    offset = _BATCH_PREFIX.size
    for _ in range(count):
        record_id, timestamp, label = _RECORD_PREFIX.unpack_from(payload, offset)
        if label not in (0, 1, UNLABELED):
            raise ProtocolError(f"record label byte {label:#x} is not 0, 1, or 0xFF")
        offset += _RECORD_PREFIX.size
        latent = np.frombuffer(payload, dtype="<f4", count=latent_size, offset=offset).copy()
        offset += 4 * latent_size
        records.append(CompressedRecord(record_id=record_id, timestamp_micros=timestamp,
                                        latent=latent,
                                        truth_label=None if label == UNLABELED else label))
    return frame_seq, records


def encode_ack(frame_seq: int, accepted: int) -> bytes:
    return _ACK.pack(frame_seq, accepted)


def decode_ack(payload: bytes) -> tuple[int, int]:
    if len(payload) != _ACK.size:
        raise ProtocolError(f"ACK payload must be {_ACK.size} bytes, got {len(payload)}")
    return _ACK.unpack(payload)


def encode_reject(reason: int) -> bytes:
    return _REJECT.pack(reason)


def decode_reject(payload: bytes) -> int:
    if len(payload) != _REJECT.size:
        raise ProtocolError(f"REJECT payload must be {_REJECT.size} bytes, got {len(payload)}")
    return _REJECT.unpack(payload)[0]


def pack_frame(msg_type: int, payload: bytes, version: int = PROTOCOL_VERSION) -> bytes:
    return _FRAME_HEADER.pack(FRAME_MAGIC, version, msg_type, len(payload)) + payload


def parse_frame(buffer: bytes) -> tuple[int, int, bytes, int]:
    """Parse one frame from the head of `buffer`.

    Returns (version, msg_type, payload, total_frame_length).  Version
    checking is left to the caller, which may want to answer with a REJECT
    rather than tear down parsing.
    """
    if len(buffer) < _FRAME_HEADER.size:
        raise ProtocolError("frame shorter than its header")
    magic, version, msg_type, payload_len = _FRAME_HEADER.unpack_from(buffer, 0)
    if magic != FRAME_MAGIC:
        raise ProtocolError(f"bad frame magic {magic!r}")
    total = _FRAME_HEADER.size + payload_len
    if len(buffer) < total:
        raise ProtocolError(f"frame truncated: need {total} bytes, have {len(buffer)}")
    return version, msg_type, bytes(buffer[_FRAME_HEADER.size:total]), total


def recv_exactly(sock, n: int) -> bytes | None:
    """Read exactly n bytes; None on clean EOF at offset 0, error mid-read."""
    chunks = []
    remaining = n
    while remaining:
        chunk = sock.recv(min(remaining, 65536))
        if not chunk:
            if remaining == n:
                return None
            raise ProtocolError(f"connection closed {remaining} bytes into a {n}-byte read")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def recv_frame(sock) -> tuple[int, int, bytes] | None:
    """Read one frame from a socket; None on clean EOF between frames."""
    header = recv_exactly(sock, _FRAME_HEADER.size)
    if header is None:
        return None
    magic, version, msg_type, payload_len = _FRAME_HEADER.unpack(header)
    if magic != FRAME_MAGIC:
        raise ProtocolError(f"bad frame magic {magic!r}")
    payload = recv_exactly(sock, payload_len) if payload_len else b""
    if payload is None:
        raise ProtocolError("connection closed before frame payload")
    return version, msg_type, payload


def send_frame(sock, msg_type: int, payload: bytes) -> int:
    frame = pack_frame(msg_type, payload)
    sock.sendall(frame)
    return len(frame)


# --- offline capture ------------------------------------------------------

class OfflineWriter:
    """Streams HELLO + RECORD_BATCH payloads into an `LWOF` capture file."""

    def __init__(self, path, hello: Hello):
        self._fh = open(path, "wb")
        self._fh.write(_OFFLINE_HEADER.pack(OFFLINE_MAGIC, OFFLINE_VERSION))
        self._fh.write(encode_hello(hello))
        self.batches_written = 0

    def write_batch(self, frame_seq: int, records: list[CompressedRecord]) -> int:
        payload = encode_record_batch(frame_seq, records)
        self._fh.write(payload)
        self.batches_written += 1
        return len(payload)

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_offline(path) -> tuple[Hello, list[tuple[int, list[CompressedRecord]]]]:
    data = Path(path).read_bytes()
    if len(data) < _OFFLINE_HEADER.size + _HELLO.size:
        raise ProtocolError("offline file shorter than header + HELLO")
    magic, version = _OFFLINE_HEADER.unpack_from(data, 0)
    if magic != OFFLINE_MAGIC:
        raise ProtocolError(f"bad offline magic {magic!r}")
    if version != OFFLINE_VERSION:
        raise ProtocolError(f"unsupported offline version {version}")
    offset = _OFFLINE_HEADER.size
    hello = decode_hello(data[offset:offset + _HELLO.size])
    offset += _HELLO.size
    stride = record_wire_bytes(hello.latent_size)
    batches = []
    while offset < len(data):
        if len(data) - offset < _BATCH_PREFIX.size:
            raise ProtocolError("offline file truncated inside a batch prefix")
        _, count = _BATCH_PREFIX.unpack_from(data, offset)
        end = offset + _BATCH_PREFIX.size + count * stride
        if end > len(data):
            raise ProtocolError("offline file truncated inside a record batch")
        batches.append(decode_record_batch(data[offset:end], hello.latent_size))
        offset = end
    return hello, batches
