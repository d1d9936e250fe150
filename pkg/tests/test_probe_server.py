"""Probe/server tests: retry behavior, dedup, rejects, live-vs-replay identity."""

import json
import socket
import threading

import numpy as np
import pytest

from latentwire.encoder import CompressionMap, compress
from latentwire.errors import StreamRejected, TransferError
from latentwire.forest import ForestConfig, train_forest
from latentwire.pipeline import FeatureVector
from latentwire.probe import (
    ProbeConfig,
    ProbeStats,
    compress_stream,
    run_probe,
    send_batches,
    write_offline,
)
from latentwire.server import (
    Server,
    ServerConfig,
    StreamProcessor,
    StreamState,
    VerdictWriter,
    classify_batch,
    finalize_metrics,
    replay_offline,
)
from latentwire.wire import (
    Hello,
    MsgType,
    decode_record_batch,
    encode_ack,
    encode_hello,
    encode_record_batch,
    pack_frame,
    recv_frame,
)

LATENT_SIZE = 3
INPUT_DIM = 6
FP_HEX = "ab" * 32
FP_BYTES = bytes.fromhex(FP_HEX)


def noop_sleep(_seconds):
    pass


@pytest.fixture(scope="module")
def cmap():
    rng = np.random.default_rng(90)
    return CompressionMap(
        weights=rng.normal(0, 1, (LATENT_SIZE, INPUT_DIM)).astype(np.float32),
        bias=rng.normal(0, 0.1, LATENT_SIZE).astype(np.float32),
        activation="sigmoid",
        source_dataset="unit",
        preprocess_fingerprint=FP_HEX,
    )


@pytest.fixture(scope="module")
def forest():
    rng = np.random.default_rng(91)
    latents = rng.random((200, LATENT_SIZE), dtype=np.float32)
    labels = (latents[:, 0] + latents[:, 2] > 1.0).astype(np.uint8)
    return train_forest(latents, labels, ForestConfig(n_trees=9, seed=4))


@pytest.fixture(scope="module")
def vectors():
    rng = np.random.default_rng(92)
    return [
        FeatureVector(features=rng.random(INPUT_DIM).astype(np.float32),
                      label=int(rng.integers(0, 2)), record_id=1000 + i)
        for i in range(37)
    ]


@pytest.fixture
def map_path(tmp_path, cmap):
    path = tmp_path / "map.json"
    cmap.save(path)
    return path


def server_config(tmp_path, forest_path=None, **overrides):
    defaults = dict(
        forest_path=str(forest_path) if forest_path else str(tmp_path / "forest.json"),
        expected_fingerprint=FP_BYTES,
        verdict_log_path=str(tmp_path / "verdicts.jsonl"),
        alert_log_path=str(tmp_path / "alerts.jsonl"),
        metrics_output_path=str(tmp_path / "metrics-{stream_id}.json"),
    )
    defaults.update(overrides)
    return ServerConfig(**defaults)


def live_server(tmp_path, forest, **overrides):
    forest_path = tmp_path / "forest.json"
    forest.save(forest_path)
    return Server(server_config(tmp_path, forest_path, **overrides), forest=forest)


def expected_latents(cmap, vectors):
    return np.stack([compress(cmap, np.asarray(v.features, dtype=np.float32))
                     for v in vectors])


# ---------------------------------------------------------------------------
# compress_stream


def eval_config(map_path, evaluation_mode=True, **overrides):
    return ProbeConfig(map_path=str(map_path), output_path="unused.lwof",
                       evaluation_mode=evaluation_mode, **overrides)


def test_compress_stream_matches_map_arithmetic(cmap, vectors, map_path):
    out = list(compress_stream(vectors, cmap, eval_config(map_path)))
    assert [r.record_id for r in out] == [v.record_id for v in vectors]
    assert np.array_equal(np.stack([r.latent for r in out]),
                          expected_latents(cmap, vectors))


def test_compress_stream_label_passthrough_only_in_eval(cmap, vectors, map_path):
    labeled = list(compress_stream(vectors, cmap, eval_config(map_path)))
    assert [r.truth_label for r in labeled] == [v.label for v in vectors]
    bare = list(compress_stream(vectors, cmap,
                                eval_config(map_path, evaluation_mode=False)))
    assert all(r.truth_label is None for r in bare)


def test_compress_stream_skips_misshaped_records(cmap, vectors, map_path):
    bad = FeatureVector(features=np.zeros(INPUT_DIM + 2, dtype=np.float32),
                        label=0, record_id=1)
    stats = ProbeStats()
    out = list(compress_stream([vectors[0], bad, vectors[1]], cmap,
                               eval_config(map_path), stats=stats))
    assert [r.record_id for r in out] == [vectors[0].record_id, vectors[1].record_id]
    assert stats.records_compressed == 2
    assert stats.records_skipped == 1


def test_compress_stream_timestamps_never_regress(cmap, vectors, map_path):
    ticks = iter([100.0, 99.0, 101.5])
    out = list(compress_stream(vectors[:3], cmap, eval_config(map_path),
                               clock=lambda: next(ticks)))
    micros = [r.timestamp_micros for r in out]
    assert micros == [100_000_000, 100_000_000, 101_500_000]


def test_probe_config_requires_exactly_one_destination():
    with pytest.raises(ValueError):
        ProbeConfig(map_path="m.json")
    with pytest.raises(ValueError):
        ProbeConfig(map_path="m.json", server_address="h:1", output_path="o.lwof")
    with pytest.raises(ValueError):
        ProbeConfig(map_path="m.json", output_path="o.lwof", batch_size=0)


# ---------------------------------------------------------------------------
# scripted servers for transport faults


def scripted_listener(handler):
    """One-connection TCP stub driven by `handler(conn, results)`."""
    listener = socket.socket()
    listener.bind(("127.0.0.1", 0))
    listener.listen(1)
    port = listener.getsockname()[1]
    results = {}

    def run():
        conn, _ = listener.accept()
        conn.settimeout(10)
        try:
            handler(conn, results)
        except OSError:
            pass
        finally:
            conn.close()
            listener.close()

    thread = threading.Thread(target=run, daemon=True)
    thread.start()
    return port, thread, results


def probe_to(port, map_path, **overrides):
    options = dict(map_path=str(map_path),
                   server_address=f"127.0.0.1:{port}",
                   batch_size=8, ack_timeout=0.3, stream_id=5)
    options.update(overrides)
    return ProbeConfig(**options)


def test_dropped_ack_causes_exactly_one_retransmission(cmap, vectors, map_path):
    def handler(conn, results):
        recv_frame(conn)  # HELLO
        conn.sendall(pack_frame(MsgType.ACK, encode_ack(0, 0)))
        results["first"] = recv_frame(conn)     # batch arrives, ACK withheld
        results["second"] = recv_frame(conn)    # probe times out and resends
        _, _, payload = results["second"]
        seq, records = decode_record_batch(payload, LATENT_SIZE)
        conn.sendall(pack_frame(MsgType.ACK, encode_ack(seq, len(records))))
        recv_frame(conn)  # probe closes cleanly

    port, thread, results = scripted_listener(handler)
    config = probe_to(port, map_path, batch_size=64)
    stream = compress_stream(vectors, cmap, config)
    stats = send_batches(stream, cmap, config, sleep=noop_sleep)
    thread.join(timeout=10)
    assert stats.retries == 1
    assert stats.frames_sent == 1
    assert stats.records_sent == len(vectors)
    # the retransmission must be byte-identical to the original frame
    assert results["first"] == results["second"]


def test_stale_ack_is_skipped_without_retry(cmap, vectors, map_path):
    def handler(conn, results):
        recv_frame(conn)
        conn.sendall(pack_frame(MsgType.ACK, encode_ack(0, 0)))
        _, _, payload = recv_frame(conn)
        seq, records = decode_record_batch(payload, LATENT_SIZE)
        conn.sendall(pack_frame(MsgType.ACK, encode_ack(0, 0)))  # stale
        conn.sendall(pack_frame(MsgType.ACK, encode_ack(seq, len(records))))
        recv_frame(conn)

    port, thread, _ = scripted_listener(handler)
    config = probe_to(port, map_path, batch_size=64)
    stats = send_batches(compress_stream(vectors, cmap, config), cmap, config,
                         sleep=noop_sleep)
    thread.join(timeout=10)
    assert stats.retries == 0
    assert stats.frames_sent == 1


def test_silent_server_exhausts_retry_budget(cmap, vectors, map_path):
    def handler(conn, _results):
        recv_frame(conn)
        conn.sendall(pack_frame(MsgType.ACK, encode_ack(0, 0)))
        while recv_frame(conn) is not None:
            pass  # swallow every retransmission, never ACK

    port, thread, _ = scripted_listener(handler)
    config = probe_to(port, map_path, ack_timeout=0.05)
    waits = []
    with pytest.raises(TransferError):
        send_batches(compress_stream(vectors, cmap, config), cmap, config,
                     sleep=waits.append)
    thread.join(timeout=10)
    # five increasingly spaced retries, then give up
    assert waits == [0.1, 0.2, 0.4, 0.8, 1.6]


def test_handshake_reject_raises_without_retry(cmap, vectors, map_path):
    from latentwire.wire import RejectReason, encode_reject

    def handler(conn, _results):
        recv_frame(conn)
        conn.sendall(pack_frame(MsgType.REJECT,
                                encode_reject(RejectReason.VERSION)))

    port, thread, _ = scripted_listener(handler)
    config = probe_to(port, map_path)
    with pytest.raises(StreamRejected) as excinfo:
        send_batches(compress_stream(vectors, cmap, config), cmap, config,
                     sleep=noop_sleep)
    thread.join(timeout=10)
    assert excinfo.value.reason_code == 2


# ---------------------------------------------------------------------------
# real server, end to end


def test_probe_to_server_end_to_end(tmp_path, cmap, forest, vectors, map_path):
    with live_server(tmp_path, forest) as server:
        host, port = server.address
        report = run_probe(
            vectors,
            ProbeConfig(map_path=str(map_path), server_address=f"{host}:{port}",
                        batch_size=10, evaluation_mode=True, stream_id=7),
            sleep=noop_sleep,
        )
    assert report.compression.records_compressed == 37
    assert report.transfer.records_sent == 37
    assert report.transfer.frames_sent == 4  # ceil(37 / 10)
    assert report.multiplies == 37 * LATENT_SIZE * INPUT_DIM

    latents = expected_latents(cmap, vectors)
    want_pred = forest.predict(latents)
    want_frac = forest.vote_fraction(latents)
    lines = [json.loads(line)
             for line in (tmp_path / "verdicts.jsonl").read_text().splitlines()]
    assert [e["record_id"] for e in lines] == [v.record_id for v in vectors]
    assert [e["predicted"] for e in lines] == want_pred.tolist()
    assert [e["vote_fraction"] for e in lines] == want_frac.tolist()
    assert all(e["stream_id"] == 7 for e in lines)

    alerts = [json.loads(line)
              for line in (tmp_path / "alerts.jsonl").read_text().splitlines()]
    assert alerts == [e for e in lines if e["predicted"] == 1]
    assert 0 < len(alerts) < len(lines)

    metrics = json.loads((tmp_path / "metrics-7.json").read_text())
    truth = np.array([v.label for v in vectors])
    counts = metrics["report"]["counts"]
    assert counts["true_positive"] == int(np.sum((truth == 1) & (want_pred == 1)))
    assert counts["false_positive"] == int(np.sum((truth == 0) & (want_pred == 1)))
    assert counts["true_negative"] == int(np.sum((truth == 0) & (want_pred == 0)))
    assert counts["false_negative"] == int(np.sum((truth == 1) & (want_pred == 0)))
    assert metrics["labeled_records"] == 37


def test_duplicate_frames_reacked_without_new_verdicts(tmp_path, cmap, forest, vectors):
    records = compress_vectors(cmap, vectors[:4])
    server = live_server(tmp_path, forest)
    with server:
        sock = socket.create_connection(server.address, timeout=5)
        sock.settimeout(5)
        hello = Hello(stream_id=9, latent_size=LATENT_SIZE,
                      fingerprint=FP_BYTES, evaluation_mode=False)
        sock.sendall(pack_frame(MsgType.HELLO, encode_hello(hello)))
        assert recv_frame(sock)[1] == MsgType.ACK

        frame = pack_frame(MsgType.RECORD_BATCH, encode_record_batch(1, records))
        sock.sendall(frame)
        first_ack = recv_frame(sock)
        sock.sendall(frame)  # duplicate delivery of the same frame_seq
        second_ack = recv_frame(sock)
        assert first_ack == second_ack
        sock.close()

    lines = (tmp_path / "verdicts.jsonl").read_text().splitlines()
    assert len(lines) == 4  # classified once, not twice
    state = server.processor.streams[9]
    assert state.duplicate_frames == 1
    assert state.verdicts_emitted == 4


def test_wrong_fingerprint_is_rejected(tmp_path, cmap, forest, vectors, map_path):
    with live_server(tmp_path, forest,
                     expected_fingerprint=b"\x00" * 32) as server:
        host, port = server.address
        with pytest.raises(StreamRejected) as excinfo:
            run_probe(vectors,
                      ProbeConfig(map_path=str(map_path),
                                  server_address=f"{host}:{port}", stream_id=1),
                      sleep=noop_sleep)
    assert excinfo.value.reason_code == 1
    assert (tmp_path / "verdicts.jsonl").read_text() == ""


def raw_exchange(server, frames):
    sock = socket.create_connection(server.address, timeout=5)
    sock.settimeout(5)
    try:
        for frame in frames:
            sock.sendall(frame)
        return recv_frame(sock)
    finally:
        sock.close()


def test_foreign_protocol_version_rejected(tmp_path, forest):
    hello = Hello(stream_id=2, latent_size=LATENT_SIZE, fingerprint=FP_BYTES,
                  evaluation_mode=False)
    with live_server(tmp_path, forest) as server:
        reply = raw_exchange(server, [
            pack_frame(MsgType.HELLO, encode_hello(hello), version=2)])
    assert reply[1] == MsgType.REJECT
    assert reply[2] == b"\x02"


def test_first_frame_must_be_hello(tmp_path, forest):
    with live_server(tmp_path, forest) as server:
        reply = raw_exchange(server, [pack_frame(MsgType.ACK, encode_ack(0, 0))])
    assert reply[1] == MsgType.REJECT
    assert reply[2] == b"\x03"


def test_latent_size_mismatch_rejected(tmp_path, forest):
    hello = Hello(stream_id=3, latent_size=LATENT_SIZE + 2, fingerprint=FP_BYTES,
                  evaluation_mode=False)
    with live_server(tmp_path, forest) as server:
        reply = raw_exchange(server, [pack_frame(MsgType.HELLO, encode_hello(hello))])
    assert reply[1] == MsgType.REJECT
    assert reply[2] == b"\x03"


def test_garbage_after_hello_rejected_as_malformed(tmp_path, forest):
    hello = Hello(stream_id=4, latent_size=LATENT_SIZE, fingerprint=FP_BYTES,
                  evaluation_mode=False)
    with live_server(tmp_path, forest) as server:
        sock = socket.create_connection(server.address, timeout=5)
        sock.settimeout(5)
        try:
            sock.sendall(pack_frame(MsgType.HELLO, encode_hello(hello)))
            assert recv_frame(sock)[1] == MsgType.ACK
            sock.sendall(b"NOTAFRAMEATALL")
            reply = recv_frame(sock)
        finally:
            sock.close()
    assert reply[1] == MsgType.REJECT
    assert reply[2] == b"\x03"


# ---------------------------------------------------------------------------
# offline replay


def test_live_and_replay_verdict_logs_are_identical(tmp_path, cmap, forest,
                                                    vectors, map_path):
    base = ProbeConfig(map_path=str(map_path), output_path="unused",
                       evaluation_mode=True)
    ticks = iter(range(10_000))
    records = list(compress_stream(vectors, cmap, base,
                                   clock=lambda: next(ticks)))

    live_dir = tmp_path / "live"
    live_dir.mkdir()
    with live_server(live_dir, forest) as server:
        host, port = server.address
        config = ProbeConfig(map_path=str(map_path),
                             server_address=f"{host}:{port}",
                             batch_size=10, evaluation_mode=True, stream_id=11)
        send_batches(iter(records), cmap, config, sleep=noop_sleep)

    capture = tmp_path / "capture.lwof"
    offline_config = ProbeConfig(map_path=str(map_path), output_path=str(capture),
                                 batch_size=10, evaluation_mode=True, stream_id=11)
    write_offline(iter(records), cmap, offline_config)

    replay_dir = tmp_path / "replay"
    replay_dir.mkdir()
    forest_path = replay_dir / "forest.json"
    forest.save(forest_path)
    summary = replay_offline(capture, server_config(replay_dir, forest_path))

    live_log = (live_dir / "verdicts.jsonl").read_bytes()
    replay_log = (replay_dir / "verdicts.jsonl").read_bytes()
    assert live_log == replay_log
    assert (live_dir / "alerts.jsonl").read_bytes() == \
        (replay_dir / "alerts.jsonl").read_bytes()
    assert summary["records_received"] == len(vectors)
    assert summary["verdicts_emitted"] == len(vectors)
    assert summary["frames"] == 4
    assert summary["duplicate_frames"] == 0
    assert json.loads((live_dir / "metrics-11.json").read_text()) == \
        json.loads((replay_dir / "metrics-11.json").read_text())


def test_replay_rejects_wrong_fingerprint(tmp_path, cmap, vectors, forest, map_path):
    capture = tmp_path / "capture.lwof"
    config = ProbeConfig(map_path=str(map_path), output_path=str(capture),
                         stream_id=1)
    write_offline(compress_stream(vectors, cmap, config), cmap, config)
    forest_path = tmp_path / "forest.json"
    forest.save(forest_path)
    with pytest.raises(StreamRejected) as excinfo:
        replay_offline(capture, server_config(tmp_path, forest_path,
                                              expected_fingerprint=b"\xff" * 32))
    assert excinfo.value.reason_code == 1


# ---------------------------------------------------------------------------
# stream state and metrics units


def compress_vectors(cmap, feature_vectors):
    config = ProbeConfig(map_path="unused", output_path="unused")
    return list(compress_stream(feature_vectors, cmap, config, clock=lambda: 0.0))


def one_record(cmap, i):
    vector = FeatureVector(features=np.full(INPUT_DIM, 0.5, dtype=np.float32),
                           label=0, record_id=i)
    return compress_vectors(cmap, [vector])


def test_dedup_ring_is_bounded_and_evicts_oldest(tmp_path, cmap, forest):
    writer = VerdictWriter(tmp_path / "v.jsonl")
    processor = StreamProcessor(forest, FP_BYTES, writer, None, dedup_window=16)
    hello = Hello(stream_id=1, latent_size=LATENT_SIZE, fingerprint=FP_BYTES,
                  evaluation_mode=False)
    state, _ = processor.on_hello(hello)
    for seq in range(1, 101):
        processor.on_batch(state, seq, one_record(cmap, seq))
        assert len(state.acked_frames) <= 16
    assert sorted(state.acked_frames) == list(range(85, 101))
    assert state.verdicts_emitted == 100

    # a replay inside the window is deduplicated...
    processor.on_batch(state, 100, one_record(cmap, 100))
    assert state.duplicate_frames == 1
    assert state.verdicts_emitted == 100
    # ...but one older than the ring is classified again (bounded memory)
    processor.on_batch(state, 1, one_record(cmap, 1))
    assert state.duplicate_frames == 1
    assert state.verdicts_emitted == 101
    writer.close()


def test_reconnect_hello_reuses_stream_state(tmp_path, cmap, forest):
    writer = VerdictWriter(tmp_path / "v.jsonl")
    processor = StreamProcessor(forest, FP_BYTES, writer, None, dedup_window=8)
    hello = Hello(stream_id=6, latent_size=LATENT_SIZE, fingerprint=FP_BYTES,
                  evaluation_mode=False)
    first, _ = processor.on_hello(hello)
    processor.on_batch(first, 1, one_record(cmap, 1))
    again, _ = processor.on_hello(hello)
    assert again is first  # dedup survives a probe reconnect
    processor.on_batch(again, 1, one_record(cmap, 1))
    assert again.duplicate_frames == 1
    writer.close()


def test_classify_batch_order_and_threshold(cmap, forest):
    rng = np.random.default_rng(31)
    records = compress_vectors(cmap, [
        FeatureVector(features=rng.random(INPUT_DIM).astype(np.float32),
                      label=0, record_id=i) for i in range(20)
    ])
    verdicts = classify_batch(forest, records)
    latents = np.stack([r.latent for r in records])
    fractions = forest.vote_fraction(latents)
    assert [v.record_id for v in verdicts] == list(range(20))
    for verdict, fraction in zip(verdicts, fractions):
        assert verdict.vote_fraction == fraction
        assert verdict.predicted == int(fraction >= 0.5)
    assert classify_batch(forest, []) == []


def test_finalize_metrics_with_and_without_labels():
    hello = Hello(stream_id=77, latent_size=3, fingerprint=FP_BYTES,
                  evaluation_mode=True)
    state = StreamState(hello, dedup_window=4)
    for truth, predicted in [(1, 1), (1, 1), (1, 0), (0, 0), (0, 1), (None, 1)]:
        state.tally(truth, predicted)
    doc = finalize_metrics(state)
    assert doc["stream_id"] == 77
    assert doc["labeled_records"] == 5
    assert doc["unlabeled_records"] == 1
    counts = doc["report"]["counts"]
    assert counts == {"true_positive": 2, "false_positive": 1,
                      "true_negative": 1, "false_negative": 1}

    empty = StreamState(hello, dedup_window=4)
    empty.tally(None, 1)
    assert finalize_metrics(empty) == {"stream_id": 77,
                                       "reason": "no labeled records",
                                       "unlabeled_records": 1}


def test_server_config_validation(tmp_path):
    with pytest.raises(ValueError):
        ServerConfig(forest_path="f", expected_fingerprint=b"\x00" * 31,
                     verdict_log_path="v")
    with pytest.raises(ValueError):
        ServerConfig(forest_path="f", expected_fingerprint=b"\x00" * 32,
                     verdict_log_path="v", dedup_window=0)
