"""Edge probe: compress records through a loaded map and ship them out.

The probe is built for constrained hosts — per record it performs exactly
one latent_size x input_dim matrix application (plus bias and activation)
and hands the result to the framing layer.  Transport is at-least-once:
every RECORD_BATCH frame is retried with exponential backoff until the
server ACKs it, and the server deduplicates on (stream_id, frame_seq).
The read - compress - frame - send pipeline runs single-threaded, so a slow
link backpressures the reader naturally.
"""

from __future__ import annotations

import socket
import time
from dataclasses import dataclass

import numpy as np

from .encoder import CompressionMap, OpCounter, compress
from .errors import StreamRejected, TransferError
from .wire import (
    MsgType,
    CompressedRecord,
    Hello,
    OfflineWriter,
    decode_ack,
    decode_reject,
    encode_hello,
    encode_record_batch,
    pack_frame,
    recv_frame,
)

BACKOFF_BASE_SECONDS = 0.1
BACKOFF_FACTOR = 2.0
BACKOFF_CAP_SECONDS = 5.0
MAX_RETRIES = 5


@dataclass(frozen=True)
class ProbeConfig:
    map_path: str
    server_address: str | None = None  # "host:port"
    output_path: str | None = None  # offline capture instead of a socket
    batch_size: int = 128
    evaluation_mode: bool = False
    stream_id: int | None = None  # default: derived from the wall clock
    ack_timeout: float = 2.0

    def __post_init__(self):
        if (self.server_address is None) == (self.output_path is None):
            raise ValueError("exactly one of server_address / output_path must be set")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")


@dataclass
class ProbeStats:
    records_compressed: int = 0
    records_skipped: int = 0  # dimension mismatches, stream continued


@dataclass
class TransferStats:
    records_sent: int = 0
    frames_sent: int = 0
    bytes_on_wire: int = 0
    retries: int = 0
    reconnects: int = 0


def load_map(path) -> CompressionMap:
    return CompressionMap.load(path)


def compress_stream(records, cmap: CompressionMap, config: ProbeConfig,
                    stats: ProbeStats | None = None, counter: OpCounter | None = None,
                    clock=time.time):
    """Yield one CompressedRecord per well-shaped input FeatureVector.

    Mis-dimensioned records are skipped and counted in `stats`, not fatal.
    Timestamps are monotone non-decreasing even if the clock steps back.
    """
    if stats is None:
        stats = ProbeStats()
    last_micros = 0
    for record in records:
        features = np.asarray(record.features, dtype=np.float32)
        if features.shape != (cmap.input_dim,):
            stats.records_skipped += 1
            continue
        latent = compress(cmap, features, counter=counter)
        micros = max(int(clock() * 1_000_000), last_micros)
        last_micros = micros
        stats.records_compressed += 1
        truth = int(record.label) if config.evaluation_mode else None
        yield CompressedRecord(record_id=record.record_id, timestamp_micros=micros,
                              latent=latent, truth_label=truth)


def _batched(iterator, size: int):
    batch = []
    for item in iterator:
        batch.append(item)
        if len(batch) == size:
            yield batch
            batch = []
    if batch:
        yield batch


def _parse_address(address: str) -> tuple[str, int]:
    host, _, port = address.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"server address must be host:port, got {address!r}")
    return host, int(port)


def _hello_for(cmap: CompressionMap, config: ProbeConfig) -> Hello:
    stream_id = config.stream_id
    if stream_id is None:
        stream_id = time.time_ns() % (1 << 64)
    return Hello(stream_id=stream_id, latent_size=cmap.latent_size,
                 fingerprint=bytes.fromhex(cmap.preprocess_fingerprint),
                 evaluation_mode=config.evaluation_mode)


class _Backoff:
    """Exponential backoff schedule; raises after MAX_RETRIES waits."""

    def __init__(self, stats: TransferStats, what: str, sleep=time.sleep):
        self.attempts = 0
        self.stats = stats
        self.what = what
        self.sleep = sleep

    def wait(self):
        if self.attempts >= MAX_RETRIES:
            raise TransferError(f"{self.what}: gave up after {MAX_RETRIES} retries")
        delay = min(BACKOFF_BASE_SECONDS * (BACKOFF_FACTOR ** self.attempts), BACKOFF_CAP_SECONDS)
        self.attempts += 1
        self.stats.retries += 1
        self.sleep(delay)


def _connect_and_hello(config: ProbeConfig, hello_frame: bytes, stats: TransferStats,
                       sleep=time.sleep) -> socket.socket:
    host, port = _parse_address(config.server_address)
    backoff = _Backoff(stats, f"connect to {config.server_address}", sleep=sleep)
    while True:
        try:
            sock = socket.create_connection((host, port), timeout=config.ack_timeout)
            sock.settimeout(config.ack_timeout)
            sock.sendall(hello_frame)
            stats.bytes_on_wire += len(hello_frame)
            reply = recv_frame(sock)
            if reply is None:
                raise ConnectionError("server closed during handshake")
            _, msg_type, payload = reply
            if msg_type == MsgType.REJECT:
                raise StreamRejected(decode_reject(payload))
            if msg_type != MsgType.ACK:
                raise TransferError(f"unexpected handshake reply type {msg_type:#x}")
            return sock
        except StreamRejected:
            raise  # policy rejection: retrying cannot help
        except (OSError, ConnectionError):
            backoff.wait()


def send_batches(records, cmap: CompressionMap, config: ProbeConfig,
                 sleep=time.sleep) -> TransferStats:
    """Stream compressed records to the server with per-frame ACKs.

    Frames are retransmitted on ACK timeout and the connection is rebuilt
    on resets, so records may arrive more than once — never zero times.
    A REJECT at any point is a hard failure (StreamRejected).
    """
    stats = TransferStats()
    hello_frame = pack_frame(MsgType.HELLO, encode_hello(_hello_for(cmap, config)))
    sock = _connect_and_hello(config, hello_frame, stats, sleep=sleep)
    try:
        frame_seq = 0
        for batch in _batched(records, config.batch_size):
            frame_seq += 1
            frame = pack_frame(MsgType.RECORD_BATCH, encode_record_batch(frame_seq, batch))
            backoff = _Backoff(stats, f"frame {frame_seq}", sleep=sleep)
            while True:
                try:
                    sock.sendall(frame)
                    stats.bytes_on_wire += len(frame)
                    reply = _await_ack(sock, frame_seq)
                except (socket.timeout, TimeoutError):
                    backoff.wait()
                    continue
                except (OSError, ConnectionError):
                    backoff.wait()
                    sock.close()
                    sock = _connect_and_hello(config, hello_frame, stats, sleep=sleep)
                    stats.reconnects += 1
                    continue
                if reply is not None:
                    break
            stats.frames_sent += 1
            stats.records_sent += len(batch)
    finally:
        sock.close()
    return stats


def _await_ack(sock, frame_seq: int):
    """Wait for the ACK matching frame_seq; stale ACKs are skipped."""
    while True:
        reply = recv_frame(sock)
        if reply is None:
            raise ConnectionError("server closed while awaiting ACK")
        _, msg_type, payload = reply
        if msg_type == MsgType.REJECT:
            raise StreamRejected(decode_reject(payload))
        if msg_type == MsgType.ACK:
            seq, accepted = decode_ack(payload)
            if seq == frame_seq:
                return accepted
            # stale ACK from an earlier retransmission; keep waiting


def write_offline(records, cmap: CompressionMap, config: ProbeConfig) -> TransferStats:
    """Capture the stream to an LWOF file with the same batching as live send."""
    stats = TransferStats()
    with OfflineWriter(config.output_path, _hello_for(cmap, config)) as writer:
        frame_seq = 0
        for batch in _batched(records, config.batch_size):
            frame_seq += 1
            stats.bytes_on_wire += writer.write_batch(frame_seq, batch)
            stats.frames_sent += 1
            stats.records_sent += len(batch)
    return stats


@dataclass
class ProbeReport:
    transfer: TransferStats
    compression: ProbeStats
    multiplies: int


def run_probe(feature_vectors, config: ProbeConfig, sleep=time.sleep) -> ProbeReport:
    """Full pipeline: load map, compress, then stream or capture offline."""
    cmap = load_map(config.map_path)
    stats = ProbeStats()
    counter = OpCounter()
    stream = compress_stream(feature_vectors, cmap, config, stats=stats, counter=counter)
    if config.server_address is not None:
        transfer = send_batches(stream, cmap, config, sleep=sleep)
    else:
        transfer = write_offline(stream, cmap, config)
    return ProbeReport(transfer=transfer, compression=stats, multiplies=counter.multiplies)
