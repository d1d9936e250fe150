"""Command-line front end wiring the pipeline end to end.

One experiment = one JSON config file naming the dataset, split, model and
forest settings, plus an output directory that collects every artifact and
a manifest of their hashes. Verbs either transform data (ingest), train a
model stage, or evaluate (compare, report-compression); probe and server
expose the streaming side. Every failure path exits nonzero with a
machine-parsable `error code=<name>` line on stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
from pathlib import Path

from . import container
from .decoder import DecoderSpec, save_trained_decoder, train_decoder
from .encoder import (
    CompressionMap,
    EncoderSpec,
    build_encoder,
    compress_batch,
    export_compression_map,
    save_trained_encoder,
    train_encoder,
)
from .errors import (
    ConfigError,
    DivergedError,
    LabelError,
    LatentWireError,
    MapLoadError,
    ParseError,
    ProtocolError,
    SchemaError,
    SearchError,
    ShapeError,
    StreamRejected,
    TransferError,
)
from .forest import ForestConfig, evaluate_forest, train_forest
from .nn.network import TrainingConfig
from .pipeline import FeatureSet, PreprocessModel, SplitSpec, fit_preprocessor, load_csv, split_raw, transform
from .probe import ProbeConfig, run_probe
from .schema import load_schema, schema_to_dict
from .search import SearchSpace, objective_from_encoder, run_search, spec_from_point
from .server import Server, ServerConfig, replay_offline
from .synth import generate_csv, traffic_schema

# Stage seeds default to the master seed plus a fixed offset, so one --seed
# reseeds the whole pipeline while stages stay decorrelated.
_SEED_OFFSETS = {"search": 1, "decoder": 3, "split": 5, "forest": 7, "encoder": 11}

_TOP_KEYS = {"schema", "data", "out", "seed", "split", "encoder", "search",
             "latent_sizes", "decoder", "forest"}
_SPLIT_KEYS = {"train_fraction", "validation_fraction", "seed", "stratified"}
_ENCODER_KEYS = {"latent_size", "lstm_units", "mlp_layers", "activation",
                 "learning_rate", "epochs", "batch_size", "decay", "seed"}
_SEARCH_KEYS = {"budget", "seed", "epochs_cap", "rows_cap", "batch_size"}
_DECODER_KEYS = {"learning_rate", "epochs", "batch_size", "seed", "hidden_layers", "activation"}
_FOREST_KEYS = {"n_trees", "max_features", "max_depth", "min_samples_split", "bootstrap", "seed"}

# Everything a run may leave in the output directory, in manifest order.
# compare.txt is a rendering of compare.json and is not tracked separately.
_ARTIFACT_NAMES = (
    "preprocess.json", "train.lwds", "validation.lwds", "test.lwds",
    "encoder.json", "map.json", "decoder.json", "decoder-report.json",
    "forest.json", "forest-original.json", "search.jsonl", "search-best.json",
    "compare.json", "compressed.lwds", "compression.json",
)

# Wall-clock fields are stripped before hashing so identical re-runs produce
# identical manifests even though training times jitter.
_TIMING_KEYS = {"train_seconds", "duration_seconds"}


def _check_keys(section: dict, allowed: set, where: str) -> None:
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ConfigError(f"unknown field(s) in {where}: {', '.join(unknown)}",
                          field=f"{where}.{unknown[0]}" if where != "config" else unknown[0])


def resolve_config(doc: dict, *, seed_override: int | None = None,
                   out_override: str | None = None) -> dict:
    """Validate a raw config document and fill in every default."""
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object", field="config")
    _check_keys(doc, _TOP_KEYS, "config")
    cfg = dict(doc)
    if seed_override is not None:
        cfg["seed"] = seed_override
    if out_override is not None:
        cfg["out"] = out_override
    for name in ("schema", "data", "out"):
        if not cfg.get(name):
            raise ConfigError(f"missing required field {name!r}", field=name)
    for name in ("schema", "data"):
        if not Path(cfg[name]).exists():
            raise ConfigError(f"{name} path does not exist: {cfg[name]}", field=name)
    seed = int(cfg.get("seed", 0))
    cfg["seed"] = seed

    split = dict(cfg.get("split") or {})
    _check_keys(split, _SPLIT_KEYS, "split")
    split.setdefault("train_fraction", 0.7)
    split.setdefault("validation_fraction", 0.1)
    split.setdefault("seed", seed + _SEED_OFFSETS["split"])
    split.setdefault("stratified", True)
    cfg["split"] = split

    if not cfg.get("encoder") and not cfg.get("search"):
        raise ConfigError("config needs an encoder section, a search section, or both",
                          field="encoder")
    if cfg.get("encoder"):
        enc = dict(cfg["encoder"])
        _check_keys(enc, _ENCODER_KEYS, "encoder")
        enc.setdefault("latent_size", 3)
        enc.setdefault("lstm_units", [32, 16])
        enc.setdefault("mlp_layers", [40, 20, 10])
        enc.setdefault("activation", "relu")
        enc.setdefault("learning_rate", 0.003)
        enc.setdefault("epochs", 30)
        enc.setdefault("batch_size", 256)
        enc.setdefault("seed", seed + _SEED_OFFSETS["encoder"])
        cfg["encoder"] = enc
    if cfg.get("search"):
        sr = dict(cfg["search"])
        _check_keys(sr, _SEARCH_KEYS, "search")
        sr.setdefault("budget", 25)
        sr.setdefault("seed", seed + _SEED_OFFSETS["search"])
        sr.setdefault("epochs_cap", 10)
        sr.setdefault("rows_cap", 4000)
        if int(sr["budget"]) < 1:
            raise ConfigError("search.budget must be at least 1", field="search.budget")
        cfg["search"] = sr

    sizes = cfg.get("latent_sizes", [3, 4])
    if not isinstance(sizes, (list, tuple)) or not sizes or any(int(k) < 1 for k in sizes):
        raise ConfigError("latent_sizes must be a non-empty list of positive sizes",
                          field="latent_sizes")
    cfg["latent_sizes"] = [int(k) for k in sizes]

    dec = dict(cfg.get("decoder") or {})
    _check_keys(dec, _DECODER_KEYS, "decoder")
    dec.setdefault("learning_rate", 0.001)
    dec.setdefault("epochs", 40)
    dec.setdefault("batch_size", 256)
    dec.setdefault("seed", seed + _SEED_OFFSETS["decoder"])
    cfg["decoder"] = dec

    forest = dict(cfg.get("forest") or {})
    _check_keys(forest, _FOREST_KEYS, "forest")
    forest.setdefault("n_trees", 100)
    forest.setdefault("seed", seed + _SEED_OFFSETS["forest"])
    cfg["forest"] = forest
    return cfg


def load_experiment_config(path, *, seed_override: int | None = None,
                           out_override: str | None = None) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}", field="config") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}", field="config") from exc
    return resolve_config(doc, seed_override=seed_override, out_override=out_override)


def _out_dir(cfg: dict) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _split_spec(cfg: dict) -> SplitSpec:
    s = cfg["split"]
    try:
        return SplitSpec(train_fraction=float(s["train_fraction"]),
                         validation_fraction=float(s["validation_fraction"]),
                         seed=int(s["seed"]), stratified=bool(s["stratified"]))
    except ValueError as exc:
        raise ConfigError(f"invalid split: {exc}", field="split") from exc


def _encoder_spec(cfg: dict, input_dim: int, latent_size: int | None = None) -> EncoderSpec:
    enc = cfg["encoder"]
    try:
        training = TrainingConfig(learning_rate=float(enc["learning_rate"]),
                                  epochs=int(enc["epochs"]),
                                  batch_size=int(enc["batch_size"]),
                                  decay=float(enc.get("decay", 0.0)),
                                  seed=int(enc["seed"]))
        return EncoderSpec(
            input_dim=input_dim,
            latent_size=int(latent_size if latent_size is not None else enc["latent_size"]),
            lstm_units=tuple(int(u) for u in enc["lstm_units"]),
            mlp_layers=tuple(int(w) for w in enc["mlp_layers"]),
            activation=enc["activation"],
            training=training,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid encoder: {exc}", field="encoder") from exc


def _resolve_encoder_spec(cfg: dict, input_dim: int, *, from_search: bool = False,
                          latent_size: int | None = None) -> EncoderSpec:
    """Encoder settings come from the config section or a finished search."""
    if not from_search and cfg.get("encoder"):
        return _encoder_spec(cfg, input_dim, latent_size=latent_size)
    best_path = Path(cfg["out"]) / "search-best.json"
    if not best_path.exists():
        raise ConfigError("no search-best.json in the output directory; "
                          "run `search` first or provide an encoder section", field="search")
    with open(best_path, encoding="utf-8") as fh:
        point = json.load(fh)["point"]
    enc = cfg.get("encoder") or {}
    spec = spec_from_point(point, input_dim,
                           batch_size=int(enc.get("batch_size", 256)),
                           seed=int(enc.get("seed", cfg["seed"] + _SEED_OFFSETS["encoder"])))
    if latent_size is not None and latent_size != spec.latent_size:
        spec = dataclasses.replace(spec, latent_size=latent_size)
    return spec


def _decoder_spec(cfg: dict, latent_size: int, output_dim: int) -> DecoderSpec:
    dec = cfg["decoder"]
    try:
        training = TrainingConfig(learning_rate=float(dec["learning_rate"]),
                                  epochs=int(dec["epochs"]),
                                  batch_size=int(dec["batch_size"]),
                                  seed=int(dec["seed"]))
        kwargs = {}
        if "hidden_layers" in dec:
            kwargs["hidden_layers"] = tuple(int(w) for w in dec["hidden_layers"])
        if "activation" in dec:
            kwargs["activation"] = dec["activation"]
        return DecoderSpec(latent_size=latent_size, output_dim=output_dim,
                           training=training, **kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid decoder: {exc}", field="decoder") from exc


def _forest_config(cfg: dict) -> ForestConfig:
    try:
        return ForestConfig(**cfg["forest"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid forest: {exc}", field="forest") from exc


def _strip_timing(obj):
    if isinstance(obj, dict):
        return {k: _strip_timing(v) for k, v in obj.items() if k not in _TIMING_KEYS}
    if isinstance(obj, list):
        return [_strip_timing(v) for v in obj]
    return obj


def artifact_digest(path) -> str:
    """sha256 of the artifact with wall-clock timing fields removed."""
    path = Path(path)
    data = path.read_bytes()
    if path.suffix == ".json":
        try:
            doc = _strip_timing(json.loads(data))
            data = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
        except (UnicodeDecodeError, json.JSONDecodeError):
            pass
    elif path.suffix == ".jsonl":
        try:
            lines = [json.dumps(_strip_timing(json.loads(line)), sort_keys=True,
                                separators=(",", ":"))
                     for line in data.decode().splitlines() if line.strip()]
            data = "\n".join(lines).encode()
        except (UnicodeDecodeError, json.JSONDecodeError):
            pass
    return hashlib.sha256(data).hexdigest()


def config_hash(cfg: dict) -> str:
    """Hash of the resolved experiment settings; the output path is not one."""
    doc = {k: v for k, v in cfg.items() if k != "out"}
    return hashlib.sha256(json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def write_manifest(cfg: dict) -> Path:
    out = _out_dir(cfg)
    artifacts = {name: artifact_digest(out / name)
                 for name in _ARTIFACT_NAMES if (out / name).exists()}
    manifest = {"config_hash": config_hash(cfg), "seed": cfg["seed"], "artifacts": artifacts}
    path = out / "manifest.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _write_json(path, doc) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_ingest(cfg: dict) -> dict:
    """CSV -> leak-free splits: fit normalization on train rows only."""
    out = _out_dir(cfg)
    schema = load_schema(cfg["schema"])
    records = load_csv(cfg["data"], schema)
    train_raw, val_raw, test_raw = split_raw(records, schema, _split_spec(cfg))
    model = fit_preprocessor(train_raw, schema)
    model.save(out / "preprocess.json")
    counts = {"train": len(train_raw), "validation": len(val_raw)}
    container.write_container(out / "train.lwds", transform(train_raw, model, schema))
    container.write_container(out / "validation.lwds", transform(val_raw, model, schema))
    if test_raw is not None:
        container.write_container(out / "test.lwds", transform(test_raw, model, schema))
        counts["test"] = len(test_raw)
    write_manifest(cfg)
    return {"records": len(records), "dimension": model.output_dimension,
            "fingerprint": model.fingerprint(), **counts}


def _ensure_ingested(cfg: dict) -> None:
    out = Path(cfg["out"])
    if not all((out / name).exists() for name in ("preprocess.json", "train.lwds", "validation.lwds")):
        cmd_ingest(cfg)


def cmd_train_encoder(cfg: dict, from_search: bool = False) -> dict:
    _ensure_ingested(cfg)
    out = Path(cfg["out"])
    train = container.read_container(out / "train.lwds")
    validation = container.read_container(out / "validation.lwds")
    spec = _resolve_encoder_spec(cfg, train.dimension, from_search=from_search)
    trained = train_encoder(build_encoder(spec), train, validation, spec.training)
    save_trained_encoder(trained, out / "encoder.json")
    cmap = export_compression_map(trained, PreprocessModel.load(out / "preprocess.json"))
    cmap.save(out / "map.json")
    write_manifest(cfg)
    last = trained.history[-1]
    return {"latent_size": spec.latent_size, "epochs": spec.training.epochs,
            "train_accuracy": last.train_accuracy, "val_accuracy": last.val_accuracy}


def cmd_search(cfg: dict) -> dict:
    if not cfg.get("search"):
        raise ConfigError("config has no search section", field="search")
    _ensure_ingested(cfg)
    out = Path(cfg["out"])
    train = container.read_container(out / "train.lwds")
    validation = container.read_container(out / "validation.lwds")
    sr = cfg["search"]
    objective = objective_from_encoder(train, validation,
                                       epochs_cap=int(sr["epochs_cap"]),
                                       rows_cap=int(sr["rows_cap"]),
                                       batch_size=int(sr.get("batch_size", 256)),
                                       seed=int(sr["seed"]))
    log_path = out / "search.jsonl"
    log_path.unlink(missing_ok=True)
    result = run_search(SearchSpace.default(), int(sr["budget"]), objective,
                        seed=int(sr["seed"]), trial_log=log_path)
    _write_json(out / "search-best.json", result.best.to_dict())
    write_manifest(cfg)
    return {"trials": len(result.trials), "ok_trials": len(result.ok_trials),
            "best_objective": result.best.objective, "best_point": result.best.to_dict()["point"]}


def cmd_train_decoder(cfg: dict) -> dict:
    _ensure_ingested(cfg)
    out = Path(cfg["out"])
    map_path = out / "map.json"
    if not map_path.exists():
        raise ConfigError("no map.json in the output directory; run `train-encoder` first",
                          field="encoder")
    cmap = CompressionMap.load(map_path)
    train = container.read_container(out / "train.lwds")
    spec = _decoder_spec(cfg, cmap.latent_size, train.dimension)
    decoder, report = train_decoder(spec, cmap, train)
    save_trained_decoder(decoder, out / "decoder.json")
    _write_json(out / "decoder-report.json",
                {"mse": report.mse, "sample_count": report.sample_count,
                 "per_feature_mae": [float(v) for v in report.per_feature_mae]})
    write_manifest(cfg)
    return {"latent_size": cmap.latent_size, "reconstruction_mse": report.mse,
            "validation_samples": report.sample_count}


def cmd_train_forest(cfg: dict, variant: str = "compressed") -> dict:
    _ensure_ingested(cfg)
    out = Path(cfg["out"])
    train = container.read_container(out / "train.lwds")
    validation = container.read_container(out / "validation.lwds")
    if variant == "original":
        x_train, x_val = train.features, validation.features
        path = out / "forest-original.json"
    elif variant == "compressed":
        map_path = out / "map.json"
        if not map_path.exists():
            raise ConfigError("no map.json in the output directory; run `train-encoder` first",
                              field="encoder")
        cmap = CompressionMap.load(map_path)
        x_train = compress_batch(cmap, train.features)
        x_val = compress_batch(cmap, validation.features)
        path = out / "forest.json"
    else:
        raise ConfigError(f"unknown forest variant {variant!r}", field="variant")
    forest = train_forest(x_train, train.labels, _forest_config(cfg))
    forest.save(path)
    report = evaluate_forest(forest, x_val, validation.labels)
    write_manifest(cfg)
    return {"variant": variant, "dimension": forest.dimension,
            "val_accuracy": report.accuracy, "train_seconds": forest.train_seconds,
            "path": str(path)}


def _metrics_row(variant: str, fconfig: ForestConfig,
                 x_train, y_train, x_val, y_val, x_test, y_test) -> dict:
    forest = train_forest(x_train, y_train, fconfig)
    val = evaluate_forest(forest, x_val, y_val)
    tst = evaluate_forest(forest, x_test, y_test)
    return {
        "variant": variant,
        "val_accuracy": val.accuracy,
        "test_accuracy": tst.accuracy,
        "detection_rate": tst.recall,
        "precision": tst.precision,
        "false_positive_rate": tst.false_positive_rate,
        "train_seconds": forest.train_seconds,
    }


_REPORT_COLUMNS = (
    ("val_accuracy", "Val Acc. (%)"), ("test_accuracy", "Test Acc. (%)"),
    ("detection_rate", "DR (%)"), ("precision", "PR (%)"),
    ("false_positive_rate", "FPR (%)"), ("train_seconds", "Time (s)"),
)


def render_comparison(rows: list[dict]) -> str:
    """Aligned text table, percentages to 3 decimals."""
    header = ["Variant"] + [label for _, label in _REPORT_COLUMNS]
    body = []
    for row in rows:
        if "error" in row:
            body.append([row["variant"], f"error: {row['error']}"] + [""] * (len(header) - 2))
            continue
        cells = [row["variant"]]
        for key, _ in _REPORT_COLUMNS:
            value = row.get(key)
            if value is None:
                cells.append("-")
            elif key == "train_seconds":
                cells.append(f"{value:.3f}")
            else:
                cells.append(f"{100.0 * value:.3f}")
        body.append(cells)
    widths = [max(len(header[i]), max((len(r[i]) for r in body), default=0))
              for i in range(len(header))]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip(),
             "  ".join("-" * w for w in widths)]
    for r in body:
        lines.append("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip())
    return "\n".join(lines) + "\n"


def cmd_compare(cfg: dict) -> dict:
    """Forest metrics on original, compressed, and reconstructed inputs."""
    _ensure_ingested(cfg)
    out = Path(cfg["out"])
    train = container.read_container(out / "train.lwds")
    validation = container.read_container(out / "validation.lwds")
    test_path = out / "test.lwds"
    if not test_path.exists():
        raise ConfigError("compare needs a test split; lower the split fractions so one is carved",
                          field="split")
    test = container.read_container(test_path)
    fconfig = _forest_config(cfg)
    preprocess = PreprocessModel.load(out / "preprocess.json")

    rows: list[dict] = []
    try:
        rows.append(_metrics_row("no_compression", fconfig,
                                 train.features, train.labels,
                                 validation.features, validation.labels,
                                 test.features, test.labels))
    except LatentWireError as exc:
        rows.append({"variant": "no_compression", "error": str(exc)})

    for k in cfg["latent_sizes"]:
        cmap = None
        latents = None
        try:
            spec = _resolve_encoder_spec(cfg, train.dimension, latent_size=k)
            trained = train_encoder(build_encoder(spec), train, validation, spec.training)
            cmap = export_compression_map(trained, preprocess)
            latents = (compress_batch(cmap, train.features),
                       compress_batch(cmap, validation.features),
                       compress_batch(cmap, test.features))
            rows.append(_metrics_row(f"ls_{k}", fconfig,
                                     latents[0], train.labels,
                                     latents[1], validation.labels,
                                     latents[2], test.labels))
        except LatentWireError as exc:
            rows.append({"variant": f"ls_{k}", "error": str(exc)})
        try:
            if cmap is None:
                raise ConfigError(f"encoder for latent size {k} unavailable", field="encoder")
            decoder, report = train_decoder(_decoder_spec(cfg, k, train.dimension), cmap, train)
            row = _metrics_row(f"recon_ls_{k}", fconfig,
                               decoder.reconstruct_batch(latents[0]), train.labels,
                               decoder.reconstruct_batch(latents[1]), validation.labels,
                               decoder.reconstruct_batch(latents[2]), test.labels)
            row["reconstruction_mse"] = report.mse
            rows.append(row)
        except LatentWireError as exc:
            rows.append({"variant": f"recon_ls_{k}", "error": str(exc)})

    doc = {"latent_sizes": cfg["latent_sizes"], "rows": rows}
    _write_json(out / "compare.json", doc)
    table = render_comparison(rows)
    with open(out / "compare.txt", "w", encoding="utf-8") as fh:
        fh.write(table)
    print(table, end="")
    write_manifest(cfg)
    return doc


def cmd_report_compression(cfg: dict) -> dict:
    """Measured on-disk ratio vs the byte-layout prediction."""
    _ensure_ingested(cfg)
    out = Path(cfg["out"])
    map_path = out / "map.json"
    if not map_path.exists():
        raise ConfigError("no map.json in the output directory; run `train-encoder` first",
                          field="encoder")
    cmap = CompressionMap.load(map_path)
    source = out / "test.lwds"
    if not source.exists():
        source = out / "train.lwds"
    data = container.read_container(source)
    compressed = FeatureSet(data.ids, data.labels, compress_batch(cmap, data.features))
    compressed_path = out / "compressed.lwds"
    container.write_container(compressed_path, compressed)

    original_bytes = os.path.getsize(source)
    compressed_bytes = os.path.getsize(compressed_path)
    n = len(data)
    doc = {
        "source": str(source),
        "records": n,
        "input_dim": data.dimension,
        "latent_size": cmap.latent_size,
        "original_bytes": original_bytes,
        "compressed_bytes": compressed_bytes,
        "ratio": 1.0 - compressed_bytes / original_bytes,
        # What the container layout itself predicts for these counts.
        "layout_predicted_ratio": 1.0 - (container.container_bytes(n, cmap.latent_size)
                                         / container.container_bytes(n, data.dimension)),
        # Feature payload alone, ignoring per-record ids/labels and the header.
        "payload_only_ratio": 1.0 - cmap.latent_size / data.dimension,
        # Published headline figure (872 MB of raw text down to 29 MB of
        # latents) compares text CSV to binary floats, not this container
        # layout to itself, so it is shown for reference only.
        "published_reference": {"ratio": 0.967, "comparable": False,
                                "note": "text-CSV-to-binary figure; not a like-for-like "
                                        "container comparison"},
    }
    _write_json(out / "compression.json", doc)
    write_manifest(cfg)
    return doc


def _parse_listen(address: str) -> tuple[str, int]:
    host, _, port = address.rpartition(":")
    if not host or not port.isdigit():
        raise ConfigError(f"listen address must be host:port, got {address!r}", field="listen")
    return host, int(port)


def cmd_probe(args) -> dict:
    data = container.read_container(args.input)
    try:
        config = ProbeConfig(map_path=args.map, server_address=args.server,
                             output_path=args.out, batch_size=args.batch,
                             evaluation_mode=args.eval, stream_id=args.stream_id)
    except ValueError as exc:
        raise ConfigError(str(exc), field="probe") from exc
    report = run_probe(data, config)
    return {
        "records_compressed": report.compression.records_compressed,
        "records_skipped": report.compression.records_skipped,
        "records_sent": report.transfer.records_sent,
        "frames_sent": report.transfer.frames_sent,
        "bytes_on_wire": report.transfer.bytes_on_wire,
        "retries": report.transfer.retries,
        "reconnects": report.transfer.reconnects,
        "multiplies": report.multiplies,
    }


def cmd_sample_data(args) -> dict:
    """Synthetic 41-feature traffic CSV plus its schema, ready for `ingest`."""
    if args.rows < 1:
        raise ConfigError("rows must be at least 1", field="rows")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    schema_path = out / "schema.json"
    with open(schema_path, "w", encoding="utf-8") as fh:
        json.dump(schema_to_dict(traffic_schema()), fh, indent=2)
        fh.write("\n")
    try:
        data_path = generate_csv(out / "data.csv", args.rows, seed=args.seed,
                                 attack_fraction=args.attack_fraction)
    except ValueError as exc:
        raise ConfigError(str(exc), field="attack_fraction") from exc
    return {"data": str(data_path), "schema": str(schema_path), "rows": args.rows,
            "seed": args.seed}


def cmd_server(args) -> dict:
    try:
        fingerprint = bytes.fromhex(args.fingerprint)
    except ValueError as exc:
        raise ConfigError("fingerprint must be hex", field="fingerprint") from exc
    host, port = _parse_listen(args.listen)
    try:
        config = ServerConfig(forest_path=args.forest, expected_fingerprint=fingerprint,
                              verdict_log_path=args.verdicts, alert_log_path=args.alerts,
                              metrics_output_path=args.metrics,
                              listen_host=host, listen_port=port)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), field="fingerprint") from exc
    if args.replay:
        return replay_offline(args.replay, config)
    server = Server(config)
    bound = server.address
    print(f"listening on {bound[0]}:{bound[1]}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()
    return {"listened": f"{bound[0]}:{bound[1]}"}


_ERROR_CODES = (
    (ConfigError, "config", 2),
    (SchemaError, "schema", 3),
    (ParseError, "parse", 4),
    (LabelError, "label", 5),
    (MapLoadError, "map_load", 6),
    (DivergedError, "diverged", 7),
    (SearchError, "search", 8),
    (StreamRejected, "stream_rejected", 9),
    (TransferError, "transfer", 10),
    (ProtocolError, "protocol", 11),
    (ShapeError, "shape", 12),
)


def _error_code(exc: Exception) -> tuple[str, int]:
    for klass, name, code in _ERROR_CODES:
        if isinstance(exc, klass):
            return name, code
    if isinstance(exc, OSError):
        return "io", 13
    return "error", 1


def _add_experiment_args(parser) -> None:
    parser.add_argument("config", help="experiment config JSON")
    parser.add_argument("--seed", type=int, default=None, help="override the master seed")
    parser.add_argument("--out", default=None, help="override the output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="latentwire",
        description="Latent-space compression pipeline for streaming intrusion detection.")
    sub = parser.add_subparsers(dest="command", required=True)

    for verb, help_text in (
            ("ingest", "parse, normalize and split the dataset"),
            ("train-encoder", "train the classifier-encoder and export its compression map"),
            ("train-decoder", "train the feature-space decoder against the frozen map"),
            ("search", "hyperparameter search over encoder settings"),
            ("train-forest", "train the random forest on original or compressed features"),
            ("compare", "forest metrics across original/compressed/reconstructed inputs"),
            ("report-compression", "measured vs predicted on-disk compression ratio")):
        p = sub.add_parser(verb, help=help_text)
        _add_experiment_args(p)
        if verb == "train-encoder":
            p.add_argument("--from-search", action="store_true",
                           help="build the encoder from search-best.json")
        if verb == "train-forest":
            p.add_argument("--variant", choices=("original", "compressed"),
                           default="compressed")

    p = sub.add_parser("probe", help="compress a container and stream or capture it")
    p.add_argument("--map", required=True, help="compression map JSON")
    p.add_argument("--input", required=True, help="feature container to compress")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--server", help="host:port of a listening server")
    group.add_argument("--out", help="offline capture file instead of a socket")
    p.add_argument("--batch", type=int, default=128)
    p.add_argument("--eval", action="store_true",
                   help="include ground-truth labels so the server can score itself")
    p.add_argument("--stream-id", type=int, default=None)

    p = sub.add_parser("sample-data", help="write a synthetic traffic CSV and schema")
    p.add_argument("--out", required=True, help="directory for data.csv and schema.json")
    p.add_argument("--rows", type=int, default=5000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--attack-fraction", type=float, default=0.45)

    p = sub.add_parser("server", help="classify incoming latent streams")
    p.add_argument("--listen", default="127.0.0.1:7070")
    p.add_argument("--forest", required=True, help="trained forest JSON")
    p.add_argument("--fingerprint", required=True,
                   help="expected preprocessing fingerprint (64 hex chars)")
    p.add_argument("--verdicts", required=True, help="verdict log (JSONL, append)")
    p.add_argument("--alerts", default=None, help="attack-only log (JSONL, append)")
    p.add_argument("--metrics", default=None,
                   help="metrics file; may contain {stream_id}")
    p.add_argument("--replay", default=None,
                   help="process an offline capture instead of listening")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "probe":
            summary = cmd_probe(args)
        elif args.command == "server":
            summary = cmd_server(args)
        elif args.command == "sample-data":
            summary = cmd_sample_data(args)
        else:
            cfg = load_experiment_config(args.config, seed_override=args.seed,
                                         out_override=args.out)
            if args.command == "ingest":
                summary = cmd_ingest(cfg)
            elif args.command == "train-encoder":
                summary = cmd_train_encoder(cfg, from_search=args.from_search)
            elif args.command == "train-decoder":
                summary = cmd_train_decoder(cfg)
            elif args.command == "search":
                summary = cmd_search(cfg)
            elif args.command == "train-forest":
                summary = cmd_train_forest(cfg, variant=args.variant)
            elif args.command == "compare":
                summary = {"rows": len(cmd_compare(cfg)["rows"])}
            else:
                summary = cmd_report_compression(cfg)
    except (LatentWireError, OSError) as exc:
        name, code = _error_code(exc)
        print(f"error code={name}: {exc}", file=sys.stderr)
        return code
    print(json.dumps(summary, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
