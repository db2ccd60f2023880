import struct

import numpy as np
import pytest

from sparserec.core import build_dictionary, dataset_from_arrays
from sparserec.errors import BadMagic, InvalidParameters, TrailingData, TruncatedFile, VersionMismatch
from sparserec.evaluation import ScoreRecord, ScoreSet, generate_synthetic
from sparserec.fileio import (
    load_flat_dataset,
    load_tensor_set,
    read_dictionary,
    read_feature_file,
    read_features_csv,
    read_pairs_csv,
    read_pca_model,
    read_scores_csv,
    write_dictionary,
    write_features_csv,
    write_flat_features,
    write_pca_model,
    write_scores_csv,
    write_tensor_features,
)
from sparserec.pca import pca_fit


def _dataset(rng, m=5, d=4):
    return dataset_from_arrays(
        rng.standard_normal((m, d)), [i % 2 for i in range(m)], [f"s{i}" for i in range(m)]
    )


def test_flat_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    ds = _dataset(rng)
    path = tmp_path / "flat.feat"
    write_flat_features(path, ds)
    loaded = load_flat_dataset(path)
    assert loaded.features.tobytes() == ds.features.tobytes()
    assert np.array_equal(loaded.labels, ds.labels)
    assert loaded.ids == ds.ids


def test_unicode_ids_round_trip(tmp_path):
    ds = dataset_from_arrays(np.eye(2), [0, 1], ["prøbe-ø", "样本-1"])
    path = tmp_path / "u.feat"
    write_flat_features(path, ds)
    assert load_flat_dataset(path).ids == ("prøbe-ø", "样本-1")


def test_tensor_round_trip(tmp_path):
    from sparserec.features import ActivationTensor, flatten_activations

    rng = np.random.default_rng(1)
    tensors = rng.standard_normal((3, 2, 4, 5))
    path = tmp_path / "t.feat"
    write_tensor_features(path, tensors, [0, 1, 0], ["a", "b", "c"])
    loaded = load_tensor_set(path)
    assert loaded.tensors.tobytes() == tensors.tobytes()
    assert np.array_equal(loaded.labels, [0, 1, 0])
    flat = loaded.flatten()
    assert flat.dim == 2 * 4 * 5
    for i in range(3):  # file flattening agrees with the per-tensor operation
        assert np.array_equal(flat.features[i], flatten_activations(ActivationTensor(tensors[i])))


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.feat"
    path.write_bytes(b"NOPE" + b"\x00" * 20)
    with pytest.raises(BadMagic):
        read_feature_file(path)


def test_version_mismatch(tmp_path):
    path = tmp_path / "v9.feat"
    path.write_bytes(b"CSRC" + struct.pack("<I", 9) + b"\x00" * 20)
    with pytest.raises(VersionMismatch):
        read_feature_file(path)


def test_truncated_payload_reports_offset(tmp_path):
    rng = np.random.default_rng(2)
    ds = _dataset(rng)
    path = tmp_path / "cut.feat"
    write_flat_features(path, ds)
    data = path.read_bytes()
    path.write_bytes(data[: len(data) // 2])
    with pytest.raises(TruncatedFile, match="byte offset"):
        read_feature_file(path)


def test_trailing_bytes_rejected(tmp_path):
    rng = np.random.default_rng(3)
    ds = _dataset(rng)
    path = tmp_path / "extra.feat"
    write_flat_features(path, ds)
    path.write_bytes(path.read_bytes() + b"junk")
    with pytest.raises(TrailingData):
        read_feature_file(path)


def test_flat_loader_rejects_tensor_file(tmp_path):
    path = tmp_path / "t.feat"
    write_tensor_features(path, np.zeros((1, 1, 2, 2)), [0], ["a"])
    with pytest.raises(InvalidParameters, match="flatten"):
        load_flat_dataset(path)
    flat = tmp_path / "f.feat"
    write_flat_features(flat, dataset_from_arrays(np.eye(2), [0, 1], ["a", "b"]))
    with pytest.raises(InvalidParameters):
        load_tensor_set(flat)


def test_csv_round_trip(tmp_path):
    rng = np.random.default_rng(4)
    ds = _dataset(rng, m=3, d=2)
    path = tmp_path / "f.csv"
    write_features_csv(path, ds)
    loaded = read_features_csv(path)
    assert np.max(np.abs(loaded.features - ds.features)) == 0.0  # 17g is lossless
    assert loaded.ids == ds.ids
    assert load_flat_dataset(path).ids == ds.ids  # .csv dispatch


def test_pca_model_round_trip(tmp_path):
    enrolment, _ = generate_synthetic(3, 4, 12, 2, 0.2, seed=5)
    model = pca_fit(enrolment, num_components=4)
    path = tmp_path / "pca.bin"
    write_pca_model(path, model)
    loaded = read_pca_model(path)
    assert loaded.mean.tobytes() == model.mean.tobytes()
    assert loaded.eigenvalues.tobytes() == model.eigenvalues.tobytes()
    assert loaded.projection.tobytes() == model.projection.tobytes()


def test_dictionary_round_trip(tmp_path):
    enrolment, _ = generate_synthetic(3, 4, 10, 2, 0.2, seed=6)
    d = build_dictionary(enrolment)
    path = tmp_path / "dict.bin"
    write_dictionary(path, d)
    loaded = read_dictionary(path)
    assert loaded.atoms.tobytes() == d.atoms.tobytes()
    assert np.array_equal(loaded.column_labels, d.column_labels)
    assert np.array_equal(loaded.label_matrix, d.label_matrix)


def test_scores_csv_round_trip(tmp_path):
    rng = np.random.default_rng(7)
    records = tuple(
        ScoreRecord(f"p{i}", i % 3, float(rng.standard_normal()), bool(i % 2))
        for i in range(20)
    )
    path = tmp_path / "scores.csv"
    write_scores_csv(path, ScoreSet(records))
    loaded = read_scores_csv(path)
    assert loaded.records == records  # float scores survive exactly


def test_pairs_csv(tmp_path):
    path = tmp_path / "pairs.csv"
    path.write_text("probe_id,claimed_class\np0,1\np3,0\n")
    assert read_pairs_csv(path) == [("p0", 1), ("p3", 0)]
    bad = tmp_path / "bad.csv"
    bad.write_text("x,y\n1,2\n")
    with pytest.raises(InvalidParameters):
        read_pairs_csv(bad)
