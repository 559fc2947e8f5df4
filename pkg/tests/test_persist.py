import struct

import numpy as np
import pytest

from servicemonitor.catalog import default_catalog, load_catalog
from servicemonitor.errors import (
    BindingError,
    ConsistencyError,
    ModelFormatError,
    VersionError,
)
from servicemonitor.forest import ForestParams, train_forest
from servicemonitor.pca import fit_pca, transform
from servicemonitor.persist import (
    MODEL_MAGIC,
    MODEL_VERSION,
    ModelBundle,
    TrainingMetadata,
    load_model,
    save_model,
)

CATALOG = load_catalog(
    (
        "a.IAlpha\t1\talpha\tOsRelated\n"
        "a.IBeta\t1\tbeta\tOsRelated\n"
    ).encode()
)


def tiny_bundle(threshold=0.5, digest=None, trees=3):
    rng = np.random.default_rng(1)
    X = rng.random((12, 4))  # d = |catalog|**2 = 4
    y = ["malicious" if v > 0.5 else "benign" for v in rng.random(12)]
    digest = CATALOG.content_digest if digest is None else digest
    pca = fit_pca(X, 3)
    forest = train_forest(transform(pca, X), y, ForestParams(tree_count=trees, seed=5), digest)
    return ModelBundle(
        format_version=MODEL_VERSION,
        catalog_digest=digest,
        pca=pca,
        forest=forest,
        threshold=threshold,
        metadata=TrainingMetadata(seed=5, params={"trees": trees, "pca_dims": 3}, timestamp_us=123),
    )


def assert_bundles_equal(a: ModelBundle, b: ModelBundle):
    assert a.format_version == b.format_version
    assert a.catalog_digest == b.catalog_digest
    assert a.threshold == b.threshold
    assert a.metadata.seed == b.metadata.seed
    assert a.metadata.params == b.metadata.params
    assert a.metadata.timestamp_us == b.metadata.timestamp_us
    assert a.pca.k == b.pca.k and a.pca.d == b.pca.d
    assert a.pca.mean.tobytes() == b.pca.mean.tobytes()
    assert a.pca.components.tobytes() == b.pca.components.tobytes()
    assert a.pca.explained_variance.tobytes() == b.pca.explained_variance.tobytes()
    f, g = a.forest, b.forest
    assert (f.tree_count, f.mtry, f.seed, f.dimensionality, f.catalog_digest) == (
        g.tree_count, g.mtry, g.seed, g.dimensionality, g.catalog_digest
    )
    assert f.trees == g.trees


def test_round_trip_field_exact():
    bundle = tiny_bundle(threshold=0.31)
    data = save_model(bundle)
    loaded = load_model(data)
    assert_bundles_equal(bundle, loaded)


def test_round_trip_preserves_float_bits():
    bundle = tiny_bundle()
    # poison one component coordinate with a value whose repr is lossy
    bundle.pca.components[0, 0] = np.nextafter(0.1, 1.0)
    loaded = load_model(save_model(bundle))
    assert loaded.pca.components[0, 0].tobytes() == bundle.pca.components[0, 0].tobytes()


def test_save_is_deterministic():
    bundle = tiny_bundle()
    assert save_model(bundle) == save_model(bundle)


def test_inconsistent_dimensionality_rejected():
    bundle = tiny_bundle()
    bundle.forest.dimensionality = 7
    with pytest.raises(ConsistencyError, match="dimensionality"):
        save_model(bundle)


def test_mismatched_forest_digest_rejected():
    bundle = tiny_bundle()
    bundle.forest.catalog_digest = b"\x07" * 32
    with pytest.raises(ConsistencyError, match="digest"):
        save_model(bundle)


def test_version_error():
    data = bytearray(save_model(tiny_bundle()))
    struct.pack_into("<H", data, 4, 999)
    payload = bytes(data[:-32])
    import hashlib

    patched = payload + hashlib.sha256(payload).digest()
    with pytest.raises(VersionError):
        load_model(patched)


def test_truncation_rejected():
    data = save_model(tiny_bundle())
    for cut in (0, 5, 40, len(data) // 2, len(data) - 1):
        with pytest.raises(ModelFormatError):
            load_model(data[:cut])


def test_every_single_byte_corruption_detected():
    data = save_model(tiny_bundle(trees=2))
    for pos in range(len(data)):
        for flip in (0x01, 0x80):
            corrupted = bytearray(data)
            corrupted[pos] ^= flip
            with pytest.raises(ModelFormatError):
                load_model(bytes(corrupted))


def test_catalog_binding():
    bundle = tiny_bundle()
    data = save_model(bundle)
    loaded = load_model(data, catalog=CATALOG)
    assert loaded.catalog_digest == CATALOG.content_digest
    with pytest.raises(BindingError):
        load_model(data, catalog=default_catalog())


def test_threshold_out_of_range_rejected():
    bundle = tiny_bundle()
    bundle.threshold = 1.5
    with pytest.raises(ConsistencyError, match="threshold"):
        save_model(bundle)


def test_magic_checked_after_checksum():
    data = bytearray(save_model(tiny_bundle()))
    data[:4] = b"NOPE"
    import hashlib

    payload = bytes(data[:-32])
    patched = payload + hashlib.sha256(payload).digest()
    with pytest.raises(ModelFormatError, match="magic"):
        load_model(patched)
    assert MODEL_MAGIC == b"SMDL"
