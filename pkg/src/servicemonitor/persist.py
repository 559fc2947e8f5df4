"""Single-file serialization of the full detection model.

Layout: magic "SMDL", u16 format version, the 32-byte catalog digest,
three length-prefixed sections (pca, forest, metadata), and a trailing
SHA-256 checksum over everything before it. All floats are raw IEEE-754
little-endian bits, so round trips are exact to the bit and identical
bundles always serialize to identical bytes. The checksum is verified
before any parsing, which turns every single-byte corruption into a
clean rejection instead of a silently wrong model.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .catalog import ServiceCatalog
from .errors import BindingError, ConsistencyError, ModelFormatError, VersionError
from .forest import ForestModel, TreeNode
from .pca import PcaModel

MODEL_MAGIC = b"SMDL"
MODEL_VERSION = 1
_DIGEST_LEN = 32


@dataclass
class TrainingMetadata:
    seed: int = 0
    params: dict = field(default_factory=dict)
    timestamp_us: int = 0


@dataclass
class ModelBundle:
    format_version: int
    catalog_digest: bytes
    pca: PcaModel
    forest: ForestModel
    threshold: float
    metadata: TrainingMetadata


def _validate_bundle(bundle: ModelBundle) -> None:
    if bundle.format_version != MODEL_VERSION:
        raise ConsistencyError(f"unsupported bundle format version {bundle.format_version}")
    if len(bundle.catalog_digest) != _DIGEST_LEN:
        raise ConsistencyError("catalog digest must be 32 bytes")
    if bundle.forest.dimensionality != bundle.pca.k:
        raise ConsistencyError(
            f"forest dimensionality {bundle.forest.dimensionality} "
            f"does not match PCA component count {bundle.pca.k}"
        )
    if bundle.forest.catalog_digest and bundle.forest.catalog_digest != bundle.catalog_digest:
        raise ConsistencyError("forest is bound to a different catalog digest than the bundle")
    if not (0.0 <= bundle.threshold <= 1.0):
        raise ConsistencyError(f"threshold {bundle.threshold} outside [0, 1]")
    pca = bundle.pca
    if pca.mean.shape != (pca.d,) or pca.components.shape != (pca.k, pca.d):
        raise ConsistencyError("PCA array shapes disagree with declared k and d")
    if pca.explained_variance.shape != (pca.k,):
        raise ConsistencyError("explained_variance length disagrees with k")
    if len(bundle.forest.trees) != bundle.forest.tree_count:
        raise ConsistencyError("tree list length disagrees with tree_count")


def _f64_bytes(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(arr, dtype="<f8").tobytes()


def _encode_pca(pca: PcaModel) -> bytes:
    head = struct.pack("<II", pca.k, pca.d)
    return head + _f64_bytes(pca.mean) + _f64_bytes(pca.components) + _f64_bytes(pca.explained_variance)


def encode_forest(forest: ForestModel) -> bytes:
    """Forest section bytes: flat node arrays with child indices."""
    parts = [
        struct.pack(
            "<IIQIB",
            forest.tree_count,
            forest.mtry,
            forest.seed,
            forest.dimensionality,
            len(forest.catalog_digest),
        ),
        forest.catalog_digest,
    ]
    for tree in forest.trees:
        parts.append(struct.pack("<I", len(tree)))
        for node in tree:
            if node.is_leaf:
                parts.append(struct.pack("<BQQ", 0, node.count_benign, node.count_malicious))
            else:
                parts.append(
                    struct.pack("<BIdII", 1, node.feature_index, node.threshold, node.left, node.right)
                )
    return b"".join(parts)


def _encode_metadata(meta: TrainingMetadata, threshold: float) -> bytes:
    params_json = json.dumps(meta.params, sort_keys=True).encode("utf-8")
    return struct.pack("<QQdI", meta.seed, meta.timestamp_us, threshold, len(params_json)) + params_json


def save_model(bundle: ModelBundle) -> bytes:
    """Canonical deterministic encoding of a validated bundle."""
    _validate_bundle(bundle)
    body = [MODEL_MAGIC, struct.pack("<H", MODEL_VERSION), bundle.catalog_digest]
    for section in (_encode_pca(bundle.pca), encode_forest(bundle.forest),
                    _encode_metadata(bundle.metadata, bundle.threshold)):
        body.append(struct.pack("<Q", len(section)))
        body.append(section)
    payload = b"".join(body)
    return payload + hashlib.sha256(payload).digest()


class _Reader:
    def __init__(self, data: bytes, label: str):
        self.data = data
        self.pos = 0
        self.label = label

    def take(self, count: int) -> bytes:
        if self.pos + count > len(self.data):
            raise ModelFormatError(
                f"{self.label} truncated at byte {self.pos} (needed {count} more bytes)"
            )
        out = self.data[self.pos : self.pos + count]
        self.pos += count
        return out

    def unpack(self, fmt: str):
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size))

    def f64_array(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(count * 8), dtype="<f8").astype(np.float64)

    def done(self) -> None:
        if self.pos != len(self.data):
            raise ModelFormatError(f"{self.label} has {len(self.data) - self.pos} trailing bytes")


def _decode_pca(data: bytes) -> PcaModel:
    r = _Reader(data, "pca section")
    k, d = r.unpack("<II")
    mean = r.f64_array(d)
    components = r.f64_array(k * d).reshape(k, d)
    explained = r.f64_array(k)
    r.done()
    return PcaModel(mean=mean, components=components, explained_variance=explained, k=k, d=d)


def decode_forest(data: bytes) -> ForestModel:
    r = _Reader(data, "forest section")
    tree_count, mtry, seed, dimensionality, digest_len = r.unpack("<IIQIB")
    digest = r.take(digest_len)
    trees: list[list[TreeNode]] = []
    for _ in range(tree_count):
        (node_count,) = r.unpack("<I")
        nodes: list[TreeNode] = []
        for _ in range(node_count):
            (kind,) = r.unpack("<B")
            if kind == 0:
                ben, mal = r.unpack("<QQ")
                nodes.append(TreeNode(-1, 0.0, -1, -1, ben, mal))
            elif kind == 1:
                feature, threshold, left, right = r.unpack("<IdII")
                # children always come after their parent in the flat
                # layout; enforcing that keeps decoded trees acyclic
                if not (len(nodes) < left < node_count and len(nodes) < right < node_count):
                    raise ModelFormatError("tree child index out of range")
                nodes.append(TreeNode(feature, threshold, left, right, 0, 0))
            else:
                raise ModelFormatError(f"unknown tree node kind {kind}")
        trees.append(nodes)
    r.done()
    return ForestModel(
        trees=trees,
        tree_count=tree_count,
        mtry=mtry,
        seed=seed,
        dimensionality=dimensionality,
        catalog_digest=digest,
    )


def _decode_metadata(data: bytes) -> tuple[TrainingMetadata, float]:
    r = _Reader(data, "metadata section")
    seed, timestamp_us, threshold, params_len = r.unpack("<QQdI")
    params_raw = r.take(params_len)
    r.done()
    try:
        params = json.loads(params_raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"metadata params are not valid JSON: {exc}") from exc
    return TrainingMetadata(seed=seed, params=params, timestamp_us=timestamp_us), threshold


def load_model(data: bytes, catalog: ServiceCatalog | None = None) -> ModelBundle:
    """Verify the checksum, parse, validate, and optionally bind to a catalog."""
    min_len = len(MODEL_MAGIC) + 2 + _DIGEST_LEN + _DIGEST_LEN
    if len(data) < min_len:
        raise ModelFormatError(f"model stream of {len(data)} bytes is shorter than the minimum")
    payload, checksum = data[:-_DIGEST_LEN], data[-_DIGEST_LEN:]
    if hashlib.sha256(payload).digest() != checksum:
        raise ModelFormatError("model checksum mismatch; the stream is corrupt or truncated")

    r = _Reader(payload, "model stream")
    magic = r.take(4)
    if magic != MODEL_MAGIC:
        raise ModelFormatError(f"bad magic {magic!r}, expected {MODEL_MAGIC!r}")
    (version,) = r.unpack("<H")
    if version != MODEL_VERSION:
        raise VersionError(f"unsupported model format version {version}")
    digest = r.take(_DIGEST_LEN)
    sections = []
    for _ in range(3):
        (length,) = r.unpack("<Q")
        sections.append(r.take(length))
    r.done()

    pca = _decode_pca(sections[0])
    forest = decode_forest(sections[1])
    metadata, threshold = _decode_metadata(sections[2])
    bundle = ModelBundle(
        format_version=version,
        catalog_digest=digest,
        pca=pca,
        forest=forest,
        threshold=threshold,
        metadata=metadata,
    )
    _validate_bundle(bundle)
    if catalog is not None:
        if catalog.content_digest != bundle.catalog_digest:
            raise BindingError(
                f"model is bound to catalog {bundle.catalog_digest.hex()[:12]}..., "
                f"supplied catalog has digest {catalog.digest_hex[:12]}..."
            )
        if pca.d != len(catalog) ** 2:
            raise BindingError(
                f"model expects {pca.d} features, catalog implies {len(catalog) ** 2}"
            )
    return bundle
