"""Seeded synthetic network-traffic generator.

Emits CSV rows in the classic 41-column connection-record layout (numeric
counters and rates plus protocol/service/flag categoricals, label last) so
the full pipeline can be exercised hermetically.  Three hidden attack
families (flood, scan, credential) drive class-conditional distributions:
floods show S0 flags, high connection counts and high SYN-error rates;
scans spread across services and hosts; credential attacks look almost
normal apart from failed logins.  num_outbound_cmds is constant zero, as
in the real corpus, which exercises the constant-column normalization rule.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .schema import Column, DatasetSchema

PROTOCOLS = ("icmp", "tcp", "udp")
SERVICES = ("domain_u", "eco_i", "ecr_i", "finger", "ftp_data",
            "http", "other", "private", "smtp", "telnet")
FLAGS = ("REJ", "RSTR", "S0", "SF", "SH")

NORMAL_LABEL = "normal"
FLOOD_LABELS = ("neptune", "smurf", "back", "teardrop")
SCAN_LABELS = ("satan", "ipsweep", "portsweep", "nmap")
CREDENTIAL_LABELS = ("guess_passwd", "warezclient")
ATTACK_LABELS = FLOOD_LABELS + SCAN_LABELS + CREDENTIAL_LABELS

_FEATURES = (
    ("duration", "numeric"),
    ("protocol_type", "categorical"),
    ("service", "categorical"),
    ("flag", "categorical"),
    ("src_bytes", "numeric"),
    ("dst_bytes", "numeric"),
    ("land", "numeric"),
    ("wrong_fragment", "numeric"),
    ("urgent", "numeric"),
    ("hot", "numeric"),
    ("num_failed_logins", "numeric"),
    ("logged_in", "numeric"),
    ("num_compromised", "numeric"),
    ("root_shell", "numeric"),
    ("su_attempted", "numeric"),
    ("num_root", "numeric"),
    ("num_file_creations", "numeric"),
    ("num_shells", "numeric"),
    ("num_access_files", "numeric"),
    ("num_outbound_cmds", "numeric"),
    ("is_host_login", "numeric"),
    ("is_guest_login", "numeric"),
    ("count", "numeric"),
    ("srv_count", "numeric"),
    ("serror_rate", "numeric"),
    ("srv_serror_rate", "numeric"),
    ("rerror_rate", "numeric"),
    ("srv_rerror_rate", "numeric"),
    ("same_srv_rate", "numeric"),
    ("diff_srv_rate", "numeric"),
    ("srv_diff_host_rate", "numeric"),
    ("dst_host_count", "numeric"),
    ("dst_host_srv_count", "numeric"),
    ("dst_host_same_srv_rate", "numeric"),
    ("dst_host_diff_srv_rate", "numeric"),
    ("dst_host_same_src_port_rate", "numeric"),
    ("dst_host_srv_diff_host_rate", "numeric"),
    ("dst_host_serror_rate", "numeric"),
    ("dst_host_srv_serror_rate", "numeric"),
    ("dst_host_rerror_rate", "numeric"),
    ("dst_host_srv_rerror_rate", "numeric"),
)


def traffic_schema() -> DatasetSchema:
    columns = tuple(Column(name=name, kind=kind) for name, kind in _FEATURES)
    columns = columns + (Column(name="label", kind="label"),)
    return DatasetSchema(
        name="synthetic-traffic",
        columns=columns,
        attack_labels=frozenset(ATTACK_LABELS),
        normal_labels=frozenset({NORMAL_LABEL}),
        has_header=False,
    )


# Per-family samplers.  Each takes (rng, k) and returns k values.
def _lognormal_int(mean, sigma, cap):
    return lambda rng, k: np.minimum(rng.lognormal(mean, sigma, size=k), cap).astype(np.int64)


def _poisson(lam):
    return lambda rng, k: rng.poisson(lam, size=k)


def _rate(a, b):
    return lambda rng, k: np.round(rng.beta(a, b, size=k), 2)


def _bernoulli(p):
    return lambda rng, k: (rng.random(k) < p).astype(np.int64)


def _zeros(rng, k):
    return np.zeros(k, dtype=np.int64)


def _choice(options, weights):
    probs = np.asarray(weights, dtype=np.float64)
    probs = probs / probs.sum()
    return lambda rng, k: rng.choice(options, size=k, p=probs)


_FAMILY_SAMPLERS = {
    "duration": {
        "normal": _lognormal_int(2.0, 2.0, 40000),
        "flood": _zeros,
        "scan": _zeros,
        "credential": _lognormal_int(1.0, 1.5, 5000),
    },
    "protocol_type": {
        "normal": _choice(PROTOCOLS, (0.08, 0.72, 0.20)),
        "flood": _choice(PROTOCOLS, (0.35, 0.62, 0.03)),
        "scan": _choice(PROTOCOLS, (0.40, 0.50, 0.10)),
        "credential": _choice(PROTOCOLS, (0.0, 0.98, 0.02)),
    },
    "service": {
        "normal": _choice(SERVICES, (0.12, 0.01, 0.01, 0.02, 0.12, 0.45, 0.05, 0.04, 0.15, 0.03)),
        "flood": _choice(SERVICES, (0.01, 0.05, 0.25, 0.01, 0.02, 0.15, 0.05, 0.45, 0.005, 0.005)),
        "scan": _choice(SERVICES, (0.05, 0.20, 0.10, 0.05, 0.05, 0.05, 0.20, 0.25, 0.03, 0.02)),
        "credential": _choice(SERVICES, (0.0, 0.0, 0.0, 0.05, 0.25, 0.05, 0.05, 0.05, 0.05, 0.50)),
    },
    "flag": {
        "normal": _choice(FLAGS, (0.04, 0.02, 0.01, 0.92, 0.01)),
        "flood": _choice(FLAGS, (0.12, 0.05, 0.68, 0.13, 0.02)),
        "scan": _choice(FLAGS, (0.25, 0.15, 0.20, 0.15, 0.25)),
        "credential": _choice(FLAGS, (0.10, 0.05, 0.02, 0.80, 0.03)),
    },
    "src_bytes": {
        "normal": _lognormal_int(6.0, 2.2, 2_000_000),
        "flood": _lognormal_int(3.0, 1.5, 2000),
        "scan": _lognormal_int(1.0, 1.2, 300),
        "credential": _lognormal_int(4.5, 1.2, 40000),
    },
    "dst_bytes": {
        "normal": _lognormal_int(7.0, 2.5, 5_000_000),
        "flood": _zeros,
        "scan": _lognormal_int(0.5, 1.0, 100),
        "credential": _lognormal_int(5.0, 1.5, 60000),
    },
    "land": {
        "normal": _zeros,
        "flood": _bernoulli(0.01),
        "scan": _zeros,
        "credential": _zeros,
    },
    "wrong_fragment": {
        "normal": _zeros,
        "flood": lambda rng, k: rng.choice([0, 1, 3], size=k, p=[0.9, 0.05, 0.05]),
        "scan": _zeros,
        "credential": _zeros,
    },
    "urgent": {
        "normal": _bernoulli(0.001),
        "flood": _zeros,
        "scan": _zeros,
        "credential": _bernoulli(0.01),
    },
    "hot": {
        "normal": _poisson(0.05),
        "flood": _zeros,
        "scan": _zeros,
        "credential": _poisson(2.0),
    },
    "num_failed_logins": {
        "normal": _bernoulli(0.002),
        "flood": _zeros,
        "scan": _zeros,
        "credential": lambda rng, k: 1 + rng.poisson(2.0, size=k),
    },
    "logged_in": {
        "normal": _bernoulli(0.75),
        "flood": _bernoulli(0.02),
        "scan": _bernoulli(0.01),
        "credential": _bernoulli(0.35),
    },
    "num_compromised": {
        "normal": _poisson(0.01),
        "flood": _zeros,
        "scan": _zeros,
        "credential": _poisson(0.6),
    },
    "root_shell": {
        "normal": _bernoulli(0.001),
        "flood": _zeros,
        "scan": _zeros,
        "credential": _bernoulli(0.08),
    },
    "su_attempted": {
        "normal": _bernoulli(0.001),
        "flood": _zeros,
        "scan": _zeros,
        "credential": _bernoulli(0.05),
    },
    "num_root": {
        "normal": _poisson(0.02),
        "flood": _zeros,
        "scan": _zeros,
        "credential": _poisson(0.5),
    },
    "num_file_creations": {
        "normal": _poisson(0.03),
        "flood": _zeros,
        "scan": _zeros,
        "credential": _poisson(0.8),
    },
    "num_shells": {
        "normal": _bernoulli(0.002),
        "flood": _zeros,
        "scan": _zeros,
        "credential": _bernoulli(0.05),
    },
    "num_access_files": {
        "normal": _poisson(0.02),
        "flood": _zeros,
        "scan": _zeros,
        "credential": _poisson(0.3),
    },
    "num_outbound_cmds": {
        "normal": _zeros, "flood": _zeros, "scan": _zeros, "credential": _zeros,
    },
    "is_host_login": {
        "normal": _zeros, "flood": _zeros, "scan": _zeros,
        "credential": _bernoulli(0.01),
    },
    "is_guest_login": {
        "normal": _bernoulli(0.02),
        "flood": _zeros,
        "scan": _zeros,
        "credential": _bernoulli(0.45),
    },
    "count": {
        "normal": _poisson(9.0),
        "flood": lambda rng, k: 150 + rng.poisson(180.0, size=k),
        "scan": _poisson(25.0),
        "credential": _poisson(3.0),
    },
    "srv_count": {
        "normal": _poisson(7.0),
        "flood": lambda rng, k: 120 + rng.poisson(160.0, size=k),
        "scan": _poisson(4.0),
        "credential": _poisson(3.0),
    },
    "serror_rate": {
        "normal": _rate(1, 40),
        "flood": _rate(14, 2),
        "scan": _rate(4, 4),
        "credential": _rate(1, 30),
    },
    "rerror_rate": {
        "normal": _rate(1, 50),
        "flood": _rate(1, 20),
        "scan": _rate(6, 4),
        "credential": _rate(2, 20),
    },
    "same_srv_rate": {
        "normal": _rate(22, 2),
        "flood": _rate(14, 3),
        "scan": _rate(2, 8),
        "credential": _rate(18, 2),
    },
    "diff_srv_rate": {
        "normal": _rate(1, 25),
        "flood": _rate(1, 15),
        "scan": _rate(8, 2),
        "credential": _rate(1, 20),
    },
    "srv_diff_host_rate": {
        "normal": _rate(2, 15),
        "flood": _rate(1, 30),
        "scan": _rate(10, 3),
        "credential": _rate(2, 12),
    },
    "dst_host_count": {
        "normal": lambda rng, k: rng.integers(1, 256, size=k),
        "flood": lambda rng, k: np.minimum(200 + rng.poisson(50.0, size=k), 255),
        "scan": lambda rng, k: np.minimum(150 + rng.poisson(80.0, size=k), 255),
        "credential": lambda rng, k: rng.integers(1, 60, size=k),
    },
    "dst_host_srv_count": {
        "normal": lambda rng, k: rng.integers(1, 256, size=k),
        "flood": lambda rng, k: np.minimum(180 + rng.poisson(60.0, size=k), 255),
        "scan": _poisson(12.0),
        "credential": lambda rng, k: rng.integers(1, 40, size=k),
    },
    "dst_host_same_srv_rate": {
        "normal": _rate(18, 3),
        "flood": _rate(12, 3),
        "scan": _rate(2, 10),
        "credential": _rate(14, 3),
    },
    "dst_host_diff_srv_rate": {
        "normal": _rate(1, 20),
        "flood": _rate(1, 12),
        "scan": _rate(9, 2),
        "credential": _rate(1, 16),
    },
    "dst_host_same_src_port_rate": {
        "normal": _rate(2, 10),
        "flood": _rate(16, 2),
        "scan": _rate(12, 3),
        "credential": _rate(2, 10),
    },
    "dst_host_srv_diff_host_rate": {
        "normal": _rate(1, 18),
        "flood": _rate(1, 25),
        "scan": _rate(8, 3),
        "credential": _rate(1, 14),
    },
    "dst_host_serror_rate": {
        "normal": _rate(1, 40),
        "flood": _rate(15, 2),
        "scan": _rate(4, 5),
        "credential": _rate(1, 30),
    },
    "dst_host_rerror_rate": {
        "normal": _rate(1, 45),
        "flood": _rate(1, 18),
        "scan": _rate(6, 3),
        "credential": _rate(2, 18),
    },
}

# Columns echoing another column with jitter, matching how srv_* rates track
# their non-srv counterparts in real traces.
_ECHO_COLUMNS = {
    "srv_serror_rate": "serror_rate",
    "srv_rerror_rate": "rerror_rate",
    "dst_host_srv_serror_rate": "dst_host_serror_rate",
    "dst_host_srv_rerror_rate": "dst_host_rerror_rate",
}

_FAMILY_LABELS = {
    "normal": ((NORMAL_LABEL,), (1.0,)),
    "flood": (FLOOD_LABELS, (0.55, 0.30, 0.10, 0.05)),
    "scan": (SCAN_LABELS, (0.35, 0.30, 0.25, 0.10)),
    "credential": (CREDENTIAL_LABELS, (0.7, 0.3)),
}


def generate_rows(n: int, seed: int, attack_fraction: float = 0.45,
                  confusion: float = 0.03) -> list[list[str]]:
    """n CSV rows (lists of strings) in schema column order, label last.

    `confusion` is the fraction of rows whose features are drawn from the
    opposite class's profile (stealthy attacks, bursty-but-benign hosts);
    it bounds the accuracy any classifier can reach on this data.
    """
    if not 0.0 <= attack_fraction <= 1.0:
        raise ValueError("attack_fraction must lie in [0, 1]")
    if not 0.0 <= confusion < 0.5:
        raise ValueError("confusion must lie in [0, 0.5)")
    rng = np.random.default_rng(seed)
    family = np.full(n, "normal", dtype=object)
    draw = rng.random(n)
    attack = draw < attack_fraction
    kind = rng.random(n)
    family[attack & (kind < 0.60)] = "flood"
    family[attack & (kind >= 0.60) & (kind < 0.90)] = "scan"
    family[attack & (kind >= 0.90)] = "credential"

    feature_family = family.copy()
    confused = rng.random(n) < confusion
    stealthy = np.flatnonzero(confused & attack)
    bursty = np.flatnonzero(confused & ~attack)
    feature_family[stealthy] = "normal"
    if bursty.size:
        feature_family[bursty] = rng.choice(["flood", "scan", "credential"],
                                            size=bursty.size, p=[0.6, 0.3, 0.1])

    groups = {name: np.flatnonzero(feature_family == name)
              for name in ("normal", "flood", "scan", "credential")}

    columns: dict[str, np.ndarray] = {}
    for name, _kind in _FEATURES:
        if name in _ECHO_COLUMNS:
            base = columns[_ECHO_COLUMNS[name]].astype(np.float64)
            jitter = rng.normal(0.0, 0.03, size=n)
            columns[name] = np.clip(np.round(base + jitter, 2), 0.0, 1.0)
            continue
        out = np.empty(n, dtype=object)
        for family_name, idx in groups.items():
            if idx.size:
                out[idx] = _FAMILY_SAMPLERS[name][family_name](rng, idx.size)
        columns[name] = out

    labels = np.empty(n, dtype=object)
    for family_name in ("normal", "flood", "scan", "credential"):
        idx = np.flatnonzero(family == family_name)
        if idx.size:
            options, weights = _FAMILY_LABELS[family_name]
            probs = np.asarray(weights) / np.sum(weights)
            labels[idx] = rng.choice(options, size=idx.size, p=probs)

    rows = []
    for i in range(n):
        row = []
        for name, kind in _FEATURES:
            value = columns[name][i]
            if kind == "categorical":
                row.append(str(value))
            elif isinstance(value, (float, np.floating)):
                row.append(f"{value:.2f}")
            else:
                row.append(str(int(value)))
        row.append(str(labels[i]))
        rows.append(row)
    return rows


def write_csv(path, rows: list[list[str]], header: bool = False) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        if header:
            writer.writerow([name for name, _ in _FEATURES] + ["label"])
        writer.writerows(rows)
    return path


def generate_csv(path, n: int, seed: int, attack_fraction: float = 0.45,
                 header: bool = False) -> Path:
    return write_csv(path, generate_rows(n, seed, attack_fraction), header=header)
