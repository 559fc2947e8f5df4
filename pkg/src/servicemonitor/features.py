"""Flattening transition models into fixed-length feature vectors.

A model over s states flattens row-major into s*s values, so entry
(k, m) lands at index k*s + m (zero-based). Vectors are stamped with
the catalog digest they were produced under; training and prediction
refuse to mix digests because index semantics depend entirely on
catalog order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .catalog import ServiceCatalog
from .errors import BindingError, LabelError, ShapeError
from .labels import LABELS
from .markov import TransitionModel, build_model, normalize_rows, transition_weights
from .trace import FunctionTrace

FEATURE_FILE_VERSION = 1


@dataclass
class FeatureVector:
    """One application's flattened transition probabilities."""

    app_id: str
    values: np.ndarray
    label: str | None = None
    catalog_digest: bytes | None = None


@dataclass
class DatasetMatrix:
    """Labeled feature vectors bound to one catalog digest."""

    rows: list[FeatureVector] = field(default_factory=list)
    catalog_digest: bytes = b""

    def __len__(self) -> int:
        return len(self.rows)

    def matrix(self) -> np.ndarray:
        return np.stack([r.values for r in self.rows])

    def labels(self) -> list[str]:
        return [r.label for r in self.rows]

    def app_ids(self) -> list[str]:
        return [r.app_id for r in self.rows]


def flatten(model: TransitionModel) -> np.ndarray:
    """Row-major flattening of the probability matrix, diagonal included."""
    return np.asarray(model.probabilities, dtype=np.float64).reshape(-1).copy()


def unflatten(values, state_count: int) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.size != state_count * state_count:
        raise ShapeError(
            f"{arr.size} values cannot form a {state_count}x{state_count} matrix"
        )
    return arr.reshape(state_count, state_count).copy()


def featurize_trace(trace: FunctionTrace, catalog: ServiceCatalog) -> FeatureVector:
    """Full per-application pipeline: model the trace, flatten, stamp digest."""
    model = build_model(trace, catalog)
    return FeatureVector(
        app_id=trace.app_id,
        values=flatten(model),
        label=trace.label,
        catalog_digest=catalog.content_digest,
    )


def assemble(vectors, catalog: ServiceCatalog) -> DatasetMatrix:
    """Validate vectors into a labeled matrix bound to the catalog digest."""
    rows = list(vectors)
    expected = len(catalog) ** 2
    for vec in rows:
        if vec.values.shape != (expected,):
            raise ShapeError(
                f"{vec.app_id}: vector length {vec.values.size} does not match "
                f"catalog feature length {expected}"
            )
        if vec.label not in LABELS:
            raise LabelError(f"{vec.app_id}: missing or unknown label {vec.label!r}")
        if vec.catalog_digest is not None and vec.catalog_digest != catalog.content_digest:
            raise BindingError(
                f"{vec.app_id}: vector bound to catalog {vec.catalog_digest.hex()[:12]}..., "
                f"expected {catalog.digest_hex[:12]}..."
            )
    return DatasetMatrix(rows=rows, catalog_digest=catalog.content_digest)


def dataset_from_rows(rows: list[FeatureVector], catalog_digest: bytes) -> DatasetMatrix:
    """Assemble loaded rows without a live catalog (digest known from file)."""
    if not rows:
        return DatasetMatrix(rows=[], catalog_digest=catalog_digest)
    width = rows[0].values.size
    for vec in rows:
        if vec.values.size != width:
            raise ShapeError(
                f"{vec.app_id}: vector length {vec.values.size}, expected {width}"
            )
        if vec.label is not None and vec.label not in LABELS:
            raise LabelError(f"{vec.app_id}: unknown label {vec.label!r}")
    return DatasetMatrix(rows=rows, catalog_digest=catalog_digest)


def write_features_jsonl(vectors, catalog_digest: bytes) -> bytes:
    """Feature file: a header object line, then one vector object per line."""
    lines = [
        json.dumps(
            {"format_version": FEATURE_FILE_VERSION, "catalog_digest": catalog_digest.hex()},
            sort_keys=True,
        )
    ]
    for vec in vectors:
        lines.append(
            json.dumps(
                {"app_id": vec.app_id, "label": vec.label, "values": vec.values.tolist()},
                sort_keys=True,
            )
        )
    return ("\n".join(lines) + "\n").encode("utf-8")


def read_features_jsonl(data: bytes) -> tuple[list[FeatureVector], bytes]:
    """Inverse of write_features_jsonl; returns (vectors, catalog_digest)."""
    lines = [ln for ln in data.decode("utf-8").splitlines() if ln.strip()]
    if not lines:
        raise ShapeError("feature file is empty")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ShapeError(f"feature file header is not valid JSON: {exc}") from exc
    if header.get("format_version") != FEATURE_FILE_VERSION:
        raise ShapeError(f"unsupported feature file version {header.get('format_version')!r}")
    digest = bytes.fromhex(header["catalog_digest"])
    vectors = []
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            obj = json.loads(line)
            vectors.append(
                FeatureVector(
                    app_id=str(obj["app_id"]),
                    values=np.asarray(obj["values"], dtype=np.float64),
                    label=obj.get("label"),
                    catalog_digest=digest,
                )
            )
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ShapeError(f"feature file line {lineno} is invalid: {exc}") from exc
    return vectors, digest


class MarkovTransitionFeaturizer(BaseEstimator, TransformerMixin):
    """Stateless transformer from event-id sequences to feature matrices.

    fit is a no-op; transform maps each sequence through the transition
    model and row-major flattening, yielding an (n, state_count**2)
    array that composes with downstream sklearn-style estimators.
    """

    def __init__(self, state_count: int = 2):
        self.state_count = state_count

    def fit(self, X, y=None):
        return self

    def transform(self, X) -> np.ndarray:
        rows = []
        for events in X:
            weights = transition_weights(events, self.state_count)
            rows.append(normalize_rows(weights).reshape(-1))
        return np.stack(rows) if rows else np.zeros((0, self.state_count**2))
