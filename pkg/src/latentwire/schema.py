"""Dataset schemas: column layout, label vocabulary, JSON config loading.

A schema describes one CSV layout (NSL-KDD, UNSW-NB15, ...): the ordered
columns with their kinds, and which label strings count as attack vs
normal traffic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import SchemaError

COLUMN_KINDS = ("numeric", "categorical", "label", "drop")


@dataclass(frozen=True)
class Column:
    name: str
    kind: str


@dataclass(frozen=True)
class DatasetSchema:
    """Column layout plus the label-string partition for one dataset."""

    name: str
    columns: tuple[Column, ...]
    attack_labels: frozenset[str]
    normal_labels: frozenset[str]
    has_header: bool = False

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise SchemaError(f"schema {self.name!r}: duplicate column names")
        for c in self.columns:
            if c.kind not in COLUMN_KINDS:
                raise SchemaError(f"schema {self.name!r}: column {c.name!r} has unknown kind {c.kind!r}")
        labels = [c for c in self.columns if c.kind == "label"]
        if len(labels) != 1:
            raise SchemaError(f"schema {self.name!r}: expected exactly one label column, found {len(labels)}")
        if self.attack_labels & self.normal_labels:
            overlap = sorted(self.attack_labels & self.normal_labels)
            raise SchemaError(f"schema {self.name!r}: labels {overlap} are both attack and normal")
        if not self.attack_labels or not self.normal_labels:
            raise SchemaError(f"schema {self.name!r}: attack and normal label sets must be non-empty")

    @property
    def column_count(self) -> int:
        return len(self.columns)

    @property
    def label_index(self) -> int:
        return next(i for i, c in enumerate(self.columns) if c.kind == "label")

    @property
    def numeric_indices(self) -> list[int]:
        return [i for i, c in enumerate(self.columns) if c.kind == "numeric"]

    @property
    def categorical_indices(self) -> list[int]:
        return [i for i, c in enumerate(self.columns) if c.kind == "categorical"]

    def label_class(self, value: str) -> int | None:
        """Map a raw label string to 0 (normal) / 1 (attack), None if unknown."""
        if value in self.attack_labels:
            return 1
        if value in self.normal_labels:
            return 0
        return None


def schema_from_dict(doc: dict) -> DatasetSchema:
    try:
        columns = tuple(Column(c["name"], c["kind"]) for c in doc["columns"])
        return DatasetSchema(
            name=doc["name"],
            columns=columns,
            attack_labels=frozenset(doc["attack_labels"]),
            normal_labels=frozenset(doc["normal_labels"]),
            has_header=bool(doc.get("has_header", False)),
        )
    except KeyError as exc:
        raise SchemaError(f"schema config missing field {exc}") from exc


def load_schema(path: str | Path) -> DatasetSchema:
    """Load a schema from its JSON config file."""
    with open(path, "r", encoding="utf-8") as fh:
        return schema_from_dict(json.load(fh))


def schema_to_dict(schema: DatasetSchema) -> dict:
    return {
        "name": schema.name,
        "columns": [{"name": c.name, "kind": c.kind} for c in schema.columns],
        "attack_labels": sorted(schema.attack_labels),
        "normal_labels": sorted(schema.normal_labels),
        "has_header": schema.has_header,
    }
