"""Shared domain types: labeled feature vectors, validated datasets and the
class-labeled, column-normalized dictionary every classifier solves against.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyDataset,
    InvalidParameters,
    MissingClass,
    NonFiniteValue,
    ZeroNormSample,
)


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FeatureVector:
    """One sample: opaque id, non-negative class index, real-valued descriptor."""

    id: str
    class_label: int
    values: np.ndarray


@dataclass(frozen=True)
class Dataset:
    """A validated sample collection with one shared feature dimension.

    `features` holds the samples as rows (M x D, float64) in input order;
    `labels` and `ids` are row-aligned.  The class index space is the
    contiguous range [0, num_classes); probe sets may leave some indices
    unused, enrolment sets may not (build_dictionary enforces that).
    """

    features: np.ndarray
    labels: np.ndarray
    ids: tuple[str, ...]

    @property
    def num_samples(self) -> int:
        return int(self.features.shape[0])

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1

    @property
    def samples(self) -> tuple[FeatureVector, ...]:
        return tuple(
            FeatureVector(self.ids[i], int(self.labels[i]), self.features[i])
            for i in range(self.num_samples)
        )


@dataclass(frozen=True)
class Dictionary:
    """Column-stacked l2-normalized gallery features plus class labels.

    `atoms` is K x N with unit-norm columns ordered class-major (then input
    order within a class), `column_labels` maps each column to its class and
    `label_matrix` is the c x N binary matrix with exactly one 1 per column.
    """

    atoms: np.ndarray
    column_labels: np.ndarray
    label_matrix: np.ndarray

    @property
    def dim(self) -> int:
        return int(self.atoms.shape[0])

    @property
    def num_atoms(self) -> int:
        return int(self.atoms.shape[1])

    @property
    def num_classes(self) -> int:
        return int(self.label_matrix.shape[0])


@dataclass(frozen=True)
class RepresentationResult:
    """Everything a sparsity-augmented classification produces.

    `alpha_collab` is the dense ridge solution, `alpha_sparse` the greedy
    l0-constrained one, `alpha_aug` their normalized sum (unit l2 norm),
    `class_scores` the per-class evidence from the label matrix and
    `predicted_class` its argmax with ties broken toward the lowest index.
    `used_collab_fallback` flags the degenerate case where the two solutions
    cancelled and the normalized collaborative solution was used alone.
    """

    alpha_collab: np.ndarray
    alpha_sparse: np.ndarray
    alpha_aug: np.ndarray
    class_scores: np.ndarray
    predicted_class: int
    used_collab_fallback: bool = False


def dataset_from_arrays(
    features: np.ndarray, labels: Sequence[int] | np.ndarray, ids: Sequence[str]
) -> Dataset:
    """Build a validated Dataset from row-stacked features.

    Checks the same invariants as validate_dataset: non-empty, one shared
    dimension, finite values, non-negative integer labels.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2:
        raise DimensionMismatch(f"expected a 2-D sample matrix, got shape {features.shape}")
    m, d = features.shape
    if m == 0:
        raise EmptyDataset("dataset has no samples")
    if d == 0:
        raise DimensionMismatch("samples must have at least one feature")
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (m,):
        raise DimensionMismatch(f"expected {m} labels, got shape {labels.shape}")
    ids = tuple(str(s) for s in ids)
    if len(ids) != m:
        raise DimensionMismatch(f"expected {m} ids, got {len(ids)}")
    if not np.all(np.isfinite(features)):
        bad = int(np.nonzero(~np.isfinite(features).all(axis=1))[0][0])
        raise NonFiniteValue(f"sample {ids[bad]!r} contains a NaN or infinity")
    if labels.min() < 0:
        bad = int(np.nonzero(labels < 0)[0][0])
        raise InvalidParameters(f"sample {ids[bad]!r} has negative class label {int(labels[bad])}")
    return Dataset(_frozen(features), _frozen(labels), ids)


def validate_dataset(samples: Iterable[FeatureVector]) -> Dataset:
    """Validate a list of feature vectors into a Dataset.

    Rejects empty input, inconsistent dimensions and non-finite values; the
    resulting class index space is [0, max label + 1).
    """
    samples = list(samples)
    if not samples:
        raise EmptyDataset("dataset has no samples")
    dim = len(np.atleast_1d(np.asarray(samples[0].values)))
    rows = np.empty((len(samples), dim), dtype=np.float64)
    for i, s in enumerate(samples):
        v = np.atleast_1d(np.asarray(s.values, dtype=np.float64))
        if v.ndim != 1 or v.shape[0] != dim:
            raise DimensionMismatch(
                f"sample {s.id!r} has dimension {v.shape[0] if v.ndim == 1 else v.shape}, expected {dim}"
            )
        rows[i] = v
    labels = [int(s.class_label) for s in samples]
    ids = [s.id for s in samples]
    return dataset_from_arrays(rows, labels, ids)


def build_dictionary(enrolment: Dataset) -> Dictionary:
    """Stack l2-normalized enrolment features as dictionary columns.

    Columns are ordered class-major, then input order within each class, so
    the label matrix is block structured.  Every class index in
    [0, num_classes) must have at least one sample and no sample may have
    zero norm.
    """
    labels = enrolment.labels
    c = enrolment.num_classes
    present = np.bincount(labels, minlength=c)
    if np.any(present == 0):
        missing = int(np.nonzero(present == 0)[0][0])
        raise MissingClass(f"class {missing} has no enrolment samples")

    order = np.argsort(labels, kind="stable")  # class-major, input order preserved
    ordered = enrolment.features[order]
    norms = np.linalg.norm(ordered, axis=1)
    if np.any(norms == 0.0):
        bad = int(np.nonzero(norms == 0.0)[0][0])
        raise ZeroNormSample(f"sample {enrolment.ids[int(order[bad])]!r} has zero norm")

    atoms = np.ascontiguousarray((ordered / norms[:, None]).T)
    column_labels = labels[order].copy()
    label_matrix = np.zeros((c, atoms.shape[1]), dtype=np.float64)
    label_matrix[column_labels, np.arange(atoms.shape[1])] = 1.0
    return Dictionary(_frozen(atoms), _frozen(column_labels), _frozen(label_matrix))
