"""File formats: the binary feature container, model serialization, CSV
interchange and report rendering.

Binary layout (all integers and floats little-endian):

  feature file   magic 'CSRC' | u32 version=1 | u8 flag (0 flat, 1 tensor)
                 flat:   u32 D | u32 M
                 tensor: u32 n1 | u32 n2 | u32 n | u32 M
                 M records of float64 (D values, or n*n1*n2 values stored
                 map-major then row-major) | M u32 class labels |
                 M ids, each u32 byte length + UTF-8 bytes
  pca model      magic 'CPCM' | u32 version=1 | u32 D | u32 K |
                 mean (D f64) | eigenvalues (K f64) | projection (D*K f64,
                 row-major)
  dictionary     magic 'CDIC' | u32 version=1 | u32 K | u32 N | u32 c |
                 atoms (K*N f64, row-major) | column labels (N u32)

Declared sizes must match the payload exactly; short files raise
TruncatedFile with the failing byte offset, extra bytes raise TrailingData.
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import Dataset, Dictionary, _frozen, dataset_from_arrays
from .errors import (
    BadMagic,
    InvalidParameters,
    TrailingData,
    TruncatedFile,
    VersionMismatch,
)
from .evaluation import EvalReport, ScoreRecord, ScoreSet
from .pca import PcaModel

FEATURE_MAGIC = b"CSRC"
PCA_MAGIC = b"CPCM"
DICT_MAGIC = b"CDIC"
FORMAT_VERSION = 1
FLAG_FLAT = 0
FLAG_TENSOR = 1


class _ByteReader:
    def __init__(self, data: bytes, path: str):
        self._data = data
        self._path = path
        self.offset = 0

    def take(self, count: int, what: str) -> bytes:
        end = self.offset + count
        if end > len(self._data):
            raise TruncatedFile(
                f"{self._path}: truncated while reading {what} at byte offset {self.offset}"
                f" (need {count} bytes, {len(self._data) - self.offset} left)"
            )
        chunk = self._data[self.offset : end]
        self.offset = end
        return chunk

    def u8(self, what: str) -> int:
        return self.take(1, what)[0]

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def f64_array(self, count: int, what: str) -> np.ndarray:
        return np.frombuffer(self.take(8 * count, what), dtype="<f8").astype(np.float64)

    def u32_array(self, count: int, what: str) -> np.ndarray:
        return np.frombuffer(self.take(4 * count, what), dtype="<u4").astype(np.int64)

    def utf8(self, what: str) -> str:
        length = self.u32(f"{what} length")
        return self.take(length, what).decode("utf-8")

    def finish(self) -> None:
        if self.offset != len(self._data):
            raise TrailingData(
                f"{self._path}: {len(self._data) - self.offset} unexpected bytes"
                f" after declared payload (offset {self.offset})"
            )


def _check_header(reader: _ByteReader, magic: bytes, path: str) -> None:
    got = reader.take(4, "magic")
    if got != magic:
        raise BadMagic(f"{path}: bad magic {got!r}, expected {magic!r}")
    version = reader.u32("format version")
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"{path}: unsupported format version {version}, expected {FORMAT_VERSION}")


def _f64_bytes(a: np.ndarray) -> bytes:
    return np.ascontiguousarray(a, dtype="<f8").tobytes()


def _u32_bytes(a: np.ndarray) -> bytes:
    return np.ascontiguousarray(a, dtype="<u4").tobytes()


def _id_block(ids: Sequence[str]) -> bytes:
    parts = []
    for s in ids:
        encoded = s.encode("utf-8")
        parts.append(struct.pack("<I", len(encoded)))
        parts.append(encoded)
    return b"".join(parts)


# ---------------------------------------------------------------------------
# feature files


def write_flat_features(path: str | Path, dataset: Dataset) -> None:
    header = FEATURE_MAGIC + struct.pack(
        "<IBII", FORMAT_VERSION, FLAG_FLAT, dataset.dim, dataset.num_samples
    )
    body = _f64_bytes(dataset.features) + _u32_bytes(dataset.labels) + _id_block(dataset.ids)
    Path(path).write_bytes(header + body)


def write_tensor_features(
    path: str | Path,
    tensors: np.ndarray,
    labels: Sequence[int] | np.ndarray,
    ids: Sequence[str],
) -> None:
    tensors = np.asarray(tensors, dtype=np.float64)
    if tensors.ndim != 4:
        raise InvalidParameters(f"expected (M, n, n1, n2) tensor stack, got shape {tensors.shape}")
    m, n, n1, n2 = tensors.shape
    labels = np.asarray(labels, dtype=np.int64)
    header = FEATURE_MAGIC + struct.pack("<IBIIII", FORMAT_VERSION, FLAG_TENSOR, n1, n2, n, m)
    body = _f64_bytes(tensors) + _u32_bytes(labels) + _id_block(list(ids))
    Path(path).write_bytes(header + body)


class TensorFeatureSet:
    """Activation tensors for M samples: stack of shape (M, n, n1, n2)."""

    def __init__(self, tensors: np.ndarray, labels: np.ndarray, ids: tuple[str, ...]):
        self.tensors = _frozen(tensors)
        self.labels = _frozen(labels)
        self.ids = ids

    def flatten(self) -> Dataset:
        m = self.tensors.shape[0]
        return dataset_from_arrays(self.tensors.reshape(m, -1), self.labels, self.ids)


def read_feature_file(path: str | Path) -> Dataset | TensorFeatureSet:
    """Read a binary feature file; the flag byte decides flat vs tensor."""
    path = str(path)
    reader = _ByteReader(Path(path).read_bytes(), path)
    _check_header(reader, FEATURE_MAGIC, path)
    flag = reader.u8("layout flag")
    if flag == FLAG_FLAT:
        d = reader.u32("feature dimension")
        m = reader.u32("sample count")
        values = reader.f64_array(d * m, "feature payload").reshape(m, d)
        labels = reader.u32_array(m, "class labels")
        ids = tuple(reader.utf8(f"id {i}") for i in range(m))
        reader.finish()
        return dataset_from_arrays(values, labels, ids)
    if flag == FLAG_TENSOR:
        n1 = reader.u32("map rows")
        n2 = reader.u32("map cols")
        n = reader.u32("map count")
        m = reader.u32("sample count")
        values = reader.f64_array(m * n * n1 * n2, "tensor payload").reshape(m, n, n1, n2)
        labels = reader.u32_array(m, "class labels")
        ids = tuple(reader.utf8(f"id {i}") for i in range(m))
        reader.finish()
        return TensorFeatureSet(values, labels, ids)
    raise InvalidParameters(f"{path}: unknown layout flag {flag}")


def load_flat_dataset(path: str | Path) -> Dataset:
    """Load a flat feature file (or CSV, by extension) as a Dataset."""
    if str(path).endswith(".csv"):
        return read_features_csv(path)
    loaded = read_feature_file(path)
    if isinstance(loaded, TensorFeatureSet):
        raise InvalidParameters(
            f"{path} holds activation tensors; run the flatten command first"
        )
    return loaded


def load_tensor_set(path: str | Path) -> TensorFeatureSet:
    loaded = read_feature_file(path)
    if not isinstance(loaded, TensorFeatureSet):
        raise InvalidParameters(f"{path} holds flat vectors, not activation tensors")
    return loaded


# ---------------------------------------------------------------------------
# CSV interchange (small hand-written fixtures)


def write_features_csv(path: str | Path, dataset: Dataset) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "class_label"] + [f"v{i}" for i in range(dataset.dim)])
        for i in range(dataset.num_samples):
            row = [dataset.ids[i], int(dataset.labels[i])]
            row += [f"{v:.17g}" for v in dataset.features[i]]
            writer.writerow(row)


def read_features_csv(path: str | Path) -> Dataset:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or len(rows[0]) < 3 or rows[0][:2] != ["id", "class_label"]:
        raise InvalidParameters(f"{path}: expected header id,class_label,v0,...")
    dim = len(rows[0]) - 2
    ids, labels, values = [], [], []
    for row in rows[1:]:
        if len(row) != dim + 2:
            raise InvalidParameters(f"{path}: row for id {row[0]!r} has {len(row) - 2} values, expected {dim}")
        ids.append(row[0])
        labels.append(int(row[1]))
        values.append([float(v) for v in row[2:]])
    return dataset_from_arrays(np.asarray(values, dtype=np.float64), labels, ids)


# ---------------------------------------------------------------------------
# model files


def write_pca_model(path: str | Path, model: PcaModel) -> None:
    header = PCA_MAGIC + struct.pack("<III", FORMAT_VERSION, model.dim_in, model.num_components)
    body = _f64_bytes(model.mean) + _f64_bytes(model.eigenvalues) + _f64_bytes(model.projection)
    Path(path).write_bytes(header + body)


def read_pca_model(path: str | Path) -> PcaModel:
    """Read a serialized projection.

    Cumulative variance fractions are a fit-time diagnostic; on load they are
    recomputed relative to the stored (possibly truncated) spectrum.
    """
    path = str(path)
    reader = _ByteReader(Path(path).read_bytes(), path)
    _check_header(reader, PCA_MAGIC, path)
    d = reader.u32("input dimension")
    k = reader.u32("component count")
    mean = reader.f64_array(d, "mean vector")
    eigenvalues = reader.f64_array(k, "eigenvalues")
    projection = reader.f64_array(d * k, "projection matrix").reshape(d, k)
    reader.finish()
    fractions = np.cumsum(eigenvalues) / eigenvalues.sum()
    return PcaModel(_frozen(mean), _frozen(projection), _frozen(eigenvalues), _frozen(fractions))


def write_dictionary(path: str | Path, dictionary: Dictionary) -> None:
    header = DICT_MAGIC + struct.pack(
        "<IIII", FORMAT_VERSION, dictionary.dim, dictionary.num_atoms, dictionary.num_classes
    )
    body = _f64_bytes(dictionary.atoms) + _u32_bytes(dictionary.column_labels)
    Path(path).write_bytes(header + body)


def read_dictionary(path: str | Path) -> Dictionary:
    path = str(path)
    reader = _ByteReader(Path(path).read_bytes(), path)
    _check_header(reader, DICT_MAGIC, path)
    k = reader.u32("atom dimension")
    n = reader.u32("atom count")
    c = reader.u32("class count")
    atoms = reader.f64_array(k * n, "atoms").reshape(k, n)
    column_labels = reader.u32_array(n, "column labels")
    reader.finish()
    label_matrix = np.zeros((c, n), dtype=np.float64)
    label_matrix[column_labels, np.arange(n)] = 1.0
    return Dictionary(_frozen(atoms), _frozen(column_labels), _frozen(label_matrix))


# ---------------------------------------------------------------------------
# score sets, ROC tables, pair lists


def write_scores_csv(path: str | Path, scoreset: ScoreSet) -> None:
    # 17 significant digits keep the float64 scores lossless across the round trip.
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["probe_id", "claimed_class", "score", "is_genuine"])
        for r in scoreset.records:
            writer.writerow([r.probe_id, r.claimed_class, f"{r.score:.17g}", int(r.is_genuine)])


def read_scores_csv(path: str | Path) -> ScoreSet:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["probe_id", "claimed_class", "score", "is_genuine"]:
        raise InvalidParameters(f"{path}: expected header probe_id,claimed_class,score,is_genuine")
    records = tuple(
        ScoreRecord(pid, int(claim), float(score), bool(int(genuine)))
        for pid, claim, score, genuine in rows[1:]
    )
    return ScoreSet(records)


def write_roc_csv(path: str | Path, report: EvalReport) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["threshold", "far", "gmr"])
        for p in report.roc_points:
            writer.writerow([f"{p.threshold:.17g}", f"{p.far:.17g}", f"{p.gmr:.17g}"])


def read_pairs_csv(path: str | Path) -> list[tuple[str, int]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["probe_id", "claimed_class"]:
        raise InvalidParameters(f"{path}: expected header probe_id,claimed_class")
    return [(row[0], int(row[1])) for row in rows[1:]]


# ---------------------------------------------------------------------------
# reports


def _percent(x: float) -> str:
    return f"{100.0 * x:.2f}%"


def format_report_text(report: EvalReport) -> str:
    """Human-readable verification panel; rates rendered as percentages."""
    lines = ["verification report", "===================", ""]
    lines.append(f"EER: {_percent(report.eer)}")
    for g in report.gmr_at_far:
        note = "  (insufficient impostors)" if g.insufficient_impostors else ""
        lines.append(f"GMR at FAR={g.far_target:g}: {_percent(g.gmr)}{note}")
    if report.rank1_accuracy is not None:
        lines.append(f"rank-1 accuracy: {_percent(report.rank1_accuracy)}")
    lines += ["", "config", "------"]
    for key, value in report.config_echo:
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def format_report_kv(report: EvalReport) -> str:
    """Machine-readable key-value report; rates kept as full-precision fractions."""
    lines = [f"eer = {report.eer:.17g}"]
    for g in report.gmr_at_far:
        lines.append(f"gmr_at_far_{g.far_target:g} = {g.gmr:.17g}")
        lines.append(f"gmr_at_far_{g.far_target:g}_insufficient_impostors = {int(g.insufficient_impostors)}")
    if report.rank1_accuracy is not None:
        lines.append(f"rank1_accuracy = {report.rank1_accuracy:.17g}")
    for key, value in report.config_echo:
        lines.append(f"config.{key} = {value}")
    return "\n".join(lines) + "\n"
