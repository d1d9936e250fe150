"""Central IDS service: validate probe streams, classify, log verdicts.

One handler thread per connection; the forest is immutable shared state
and all verdict/alert lines funnel through a single locked writer so lines
never interleave.  Frame handling lives in StreamProcessor, which the
offline replay path drives directly — live streaming and replaying a
capture of the same records produce byte-identical verdict logs.

Duplicate delivery is expected (the probe is at-least-once): each stream
keeps a bounded ring of ACKed frame numbers and answers replays with the
original ACK instead of classifying again.  Duplicates older than the ring
are re-classified; that bounded-memory tradeoff is deliberate.
"""

from __future__ import annotations

import json
import socketserver
import threading
from dataclasses import dataclass
from collections import OrderedDict
from pathlib import Path

import numpy as np

from .errors import ProtocolError, StreamRejected
from .forest import ConfusionCounts, MetricsReport, TrainedForest
from .wire import (
    PROTOCOL_VERSION,
    CompressedRecord,
    Hello,
    MsgType,
    RejectReason,
    decode_hello,
    decode_record_batch,
    encode_ack,
    encode_reject,
    pack_frame,
    read_offline,
    recv_frame,
)


@dataclass(frozen=True)
class ServerConfig:
    forest_path: str
    expected_fingerprint: bytes  # 32-byte preprocessing-model hash
    verdict_log_path: str
    alert_log_path: str | None = None
    metrics_output_path: str | None = None  # may contain "{stream_id}"
    listen_host: str = "127.0.0.1"
    listen_port: int = 0  # 0: pick a free port
    dedup_window: int = 1024

    def __post_init__(self):
        if len(self.expected_fingerprint) != 32:
            raise ValueError("expected_fingerprint must be 32 bytes")
        if self.dedup_window < 1:
            raise ValueError("dedup_window must be at least 1")


@dataclass(frozen=True)
class Verdict:
    record_id: int
    predicted: int
    vote_fraction: float


def classify_batch(forest: TrainedForest, records: list[CompressedRecord]) -> list[Verdict]:
    """Forest verdicts in input order; attack iff vote_fraction >= 0.5."""
    if not records:
        return []
    latents = np.stack([record.latent for record in records]).astype(np.float32)
    fractions = forest.vote_fraction(latents)
    return [Verdict(record_id=record.record_id,
                    predicted=int(fraction >= 0.5),
                    vote_fraction=float(fraction))
            for record, fraction in zip(records, fractions)]


class VerdictWriter:
    """Append-only verdict/alert sink; one lock so lines never interleave."""

    def __init__(self, verdict_path, alert_path=None):
        self._lock = threading.Lock()
        self._verdicts = open(verdict_path, "a")
        self._alerts = open(alert_path, "a") if alert_path else None

    def write(self, stream_id: int, verdicts: list[Verdict]) -> None:
        with self._lock:
            for verdict in verdicts:
                line = json.dumps({"stream_id": stream_id,
                                   "record_id": verdict.record_id,
                                   "predicted": verdict.predicted,
                                   "vote_fraction": verdict.vote_fraction}) + "\n"
                self._verdicts.write(line)
                if self._alerts is not None and verdict.predicted == 1:
                    self._alerts.write(line)
            self._verdicts.flush()
            if self._alerts is not None:
                self._alerts.flush()

    def close(self):
        with self._lock:
            self._verdicts.close()
            if self._alerts is not None:
                self._alerts.close()


class StreamState:
    """Per-stream dedup ring, conservation counters, and metric tallies."""

    def __init__(self, hello: Hello, dedup_window: int):
        self.hello = hello
        self.dedup_window = dedup_window
        self.acked_frames: OrderedDict[int, int] = OrderedDict()  # frame_seq -> accepted
        self.records_received = 0
        self.verdicts_emitted = 0
        self.duplicate_frames = 0
        self.unlabeled_records = 0
        self.true_positive = 0
        self.false_positive = 0
        self.true_negative = 0
        self.false_negative = 0

    def previous_ack(self, frame_seq: int) -> int | None:
        return self.acked_frames.get(frame_seq)

    def remember_ack(self, frame_seq: int, accepted: int) -> None:
        self.acked_frames[frame_seq] = accepted
        while len(self.acked_frames) > self.dedup_window:
            self.acked_frames.popitem(last=False)

    def tally(self, truth: int | None, predicted: int) -> None:
        if truth is None:
            self.unlabeled_records += 1
        elif truth == 1:
            if predicted == 1:
                self.true_positive += 1
            else:
                self.false_negative += 1
        else:
            if predicted == 1:
                self.false_positive += 1
            else:
                self.true_negative += 1

    @property
    def labeled_records(self) -> int:
        return (self.true_positive + self.false_positive
                + self.true_negative + self.false_negative)


def finalize_metrics(state: StreamState) -> dict:
    """Evaluation summary for one stream; explicit reason when unlabeled."""
    if state.labeled_records == 0:
        return {"stream_id": state.hello.stream_id,
                "reason": "no labeled records",
                "unlabeled_records": state.unlabeled_records}
    report = MetricsReport.from_counts(ConfusionCounts(
        true_positive=state.true_positive,
        false_positive=state.false_positive,
        true_negative=state.true_negative,
        false_negative=state.false_negative,
    ))
    return {"stream_id": state.hello.stream_id,
            "labeled_records": state.labeled_records,
            "unlabeled_records": state.unlabeled_records,
            "report": report.to_dict()}


class StreamProcessor:
    """Decoded-frame state machine, transport-agnostic."""

    def __init__(self, forest: TrainedForest, expected_fingerprint: bytes,
                 writer: VerdictWriter, metrics_output_path, dedup_window: int):
        self.forest = forest
        self.expected_fingerprint = expected_fingerprint
        self.writer = writer
        self.metrics_output_path = metrics_output_path
        self.dedup_window = dedup_window
        self.streams: dict[int, StreamState] = {}
        self._lock = threading.Lock()

    def on_hello(self, hello: Hello) -> tuple[StreamState | None, bytes]:
        """Returns (stream state, response frame); state None means rejected."""
        if hello.fingerprint != self.expected_fingerprint:
            return None, pack_frame(MsgType.REJECT, encode_reject(RejectReason.FINGERPRINT_MISMATCH))
        if hello.latent_size != self.forest.dimension:
            return None, pack_frame(MsgType.REJECT, encode_reject(RejectReason.MALFORMED))
        with self._lock:
            state = self.streams.get(hello.stream_id)
            if state is None:
                state = StreamState(hello, self.dedup_window)
                self.streams[hello.stream_id] = state
        return state, pack_frame(MsgType.ACK, encode_ack(0, 0))

    def on_batch(self, state: StreamState, frame_seq: int,
                 records: list[CompressedRecord]) -> bytes:
        previous = state.previous_ack(frame_seq)
        if previous is not None:
            state.duplicate_frames += 1
            return pack_frame(MsgType.ACK, encode_ack(frame_seq, previous))
        state.records_received += len(records)
        verdicts = classify_batch(self.forest, records)
        self.writer.write(state.hello.stream_id, verdicts)
        state.verdicts_emitted += len(verdicts)
        if state.hello.evaluation_mode:
            for record, verdict in zip(records, verdicts):
                state.tally(record.truth_label, verdict.predicted)
        state.remember_ack(frame_seq, len(records))
        return pack_frame(MsgType.ACK, encode_ack(frame_seq, len(records)))

    def finalize(self, state: StreamState) -> str | None:
        """Write the stream's metrics file (evaluation mode only)."""
        if not state.hello.evaluation_mode or self.metrics_output_path is None:
            return None
        path = str(self.metrics_output_path).replace("{stream_id}", str(state.hello.stream_id))
        Path(path).write_text(json.dumps(finalize_metrics(state), indent=2) + "\n")
        return path


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        processor: StreamProcessor = self.server.processor  # type: ignore[attr-defined]
        sock = self.request
        state = None
        try:
            while True:
                got = recv_frame(sock)
                if got is None:
                    return
                version, msg_type, payload = got
                if version != PROTOCOL_VERSION:
                    self._reject(RejectReason.VERSION)
                    return
                if state is None:
                    if msg_type != MsgType.HELLO:
                        self._reject(RejectReason.MALFORMED)
                        return
                    state, response = processor.on_hello(decode_hello(payload))
                    sock.sendall(response)
                    if state is None:
                        return
                elif msg_type == MsgType.RECORD_BATCH:
                    frame_seq, records = decode_record_batch(payload, state.hello.latent_size)
                    sock.sendall(processor.on_batch(state, frame_seq, records))
                else:
                    self._reject(RejectReason.MALFORMED)
                    return
        except ProtocolError:
            self._reject(RejectReason.MALFORMED)
        except OSError:
            pass  # peer vanished; finalize whatever it delivered
        finally:
            if state is not None:
                processor.finalize(state)

    def _reject(self, reason: RejectReason):
        try:
            self.request.sendall(pack_frame(MsgType.REJECT, encode_reject(reason)))
        except OSError:
            pass


class _ThreadingServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True


class Server:
    """Life-cycle wrapper: bind, serve on a background thread, shut down."""

    def __init__(self, config: ServerConfig, forest: TrainedForest | None = None):
        self.config = config
        self.forest = forest if forest is not None else TrainedForest.load(config.forest_path)
        self.writer = VerdictWriter(config.verdict_log_path, config.alert_log_path)
        self.processor = StreamProcessor(self.forest, config.expected_fingerprint,
                                         self.writer, config.metrics_output_path,
                                         config.dedup_window)
        self._tcp = _ThreadingServer((config.listen_host, config.listen_port), _Handler)
        self._tcp.processor = self.processor  # type: ignore[attr-defined]
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self._tcp.server_address[:2]

    def start(self) -> "Server":
        self._thread = threading.Thread(target=self._tcp.serve_forever,
                                        name="latentwire-server", daemon=True)
        self._thread.start()
        return self

    def serve_forever(self):
        self._tcp.serve_forever()

    def shutdown(self):
        self._tcp.shutdown()
        self._tcp.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)
        self.writer.close()

    def __enter__(self) -> "Server":
        return self.start()

    def __exit__(self, *exc):
        self.shutdown()


def replay_offline(capture_path, config: ServerConfig,
                   forest: TrainedForest | None = None) -> dict:
    """Run a captured LWOF stream through the live classification path.

    Returns a summary dict; raises StreamRejected exactly where the live
    server would have sent a REJECT frame.
    """
    forest = forest if forest is not None else TrainedForest.load(config.forest_path)
    writer = VerdictWriter(config.verdict_log_path, config.alert_log_path)
    try:
        processor = StreamProcessor(forest, config.expected_fingerprint, writer,
                                    config.metrics_output_path, config.dedup_window)
        hello, batches = read_offline(capture_path)
        state, _response = processor.on_hello(hello)
        if state is None:
            if hello.fingerprint != config.expected_fingerprint:
                raise StreamRejected(RejectReason.FINGERPRINT_MISMATCH)
            raise StreamRejected(RejectReason.MALFORMED)
        for frame_seq, records in batches:
            processor.on_batch(state, frame_seq, records)
        metrics_path = processor.finalize(state)
        return {"stream_id": hello.stream_id,
                "frames": len(batches),
                "records_received": state.records_received,
                "verdicts_emitted": state.verdicts_emitted,
                "duplicate_frames": state.duplicate_frames,
                "metrics_path": metrics_path}
    finally:
        writer.close()
