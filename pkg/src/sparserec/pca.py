"""PCA for high-dimensional, few-sample data via the Gram-matrix trick.

Fitting eigendecomposes the M x M inner-product matrix of the centered
samples instead of the D x D covariance, then maps each Gram eigenvector v
with eigenvalue mu to the principal direction X_c v / sqrt(mu).  Peak memory
scales with M^2 + D*K; the D x D covariance is never materialized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Dataset, _frozen, dataset_from_arrays
from .errors import (
    DegenerateData,
    DimensionMismatch,
    InsufficientSamples,
    InvalidParameters,
    KTooLarge,
)

# Eigenvalues below this fraction of the largest are numerical noise and are
# never turned into directions (division by sqrt(mu) would blow up).
EIGENVALUE_FLOOR_RATIO = 1e-10

# Component count used when no selection is given and the data permits it.
DEFAULT_NUM_COMPONENTS = 1300


@dataclass(frozen=True)
class PcaModel:
    """Mean vector plus an orthonormal D x K projection.

    `eigenvalues` are the retained Gram eigenvalues (sums of squared
    centered values along each direction), sorted non-increasing.
    `variance_fractions` is the cumulative share of the total retained-able
    variance explained by the leading columns; it reaches 1.0 at K = rank.
    """

    mean: np.ndarray
    projection: np.ndarray
    eigenvalues: np.ndarray
    variance_fractions: np.ndarray

    @property
    def dim_in(self) -> int:
        return int(self.projection.shape[0])

    @property
    def num_components(self) -> int:
        return int(self.projection.shape[1])


def _fit_all_directions(enrolment: Dataset) -> PcaModel:
    """Fit every direction above the eigenvalue floor (K = numerical rank)."""
    m = enrolment.num_samples
    if m < 2:
        raise InsufficientSamples(f"PCA needs at least 2 samples, got {m}")
    x = enrolment.features
    mean = x.mean(axis=0)
    centered = x - mean
    gram = centered @ centered.T  # (M, M); never the D x D covariance
    evals, evecs = np.linalg.eigh(gram)
    evals = evals[::-1]
    evecs = evecs[:, ::-1]
    if evals[0] <= 0.0:
        raise DegenerateData("all samples are identical; nothing to decompose")
    floor = EIGENVALUE_FLOOR_RATIO * evals[0]
    rank = int(np.count_nonzero(evals > floor))
    evals = np.ascontiguousarray(evals[:rank])
    directions = centered.T @ (evecs[:, :rank] / np.sqrt(evals))  # (D, rank)
    # Sign convention: largest-magnitude entry of each direction is positive.
    peak = np.argmax(np.abs(directions), axis=0)
    flip = directions[peak, np.arange(rank)] < 0.0
    directions[:, flip] *= -1.0
    fractions = np.cumsum(evals) / evals.sum()
    return PcaModel(_frozen(mean), _frozen(directions), _frozen(evals), _frozen(fractions))


def _truncate(full: PcaModel, k: int) -> PcaModel:
    if k == full.num_components:
        return full
    return PcaModel(
        full.mean,
        _frozen(np.ascontiguousarray(full.projection[:, :k])),
        _frozen(full.eigenvalues[:k].copy()),
        _frozen(full.variance_fractions[:k].copy()),
    )


def _check_fixed_k(k: int, dim: int, num_samples: int) -> None:
    if k < 1:
        raise InvalidParameters(f"component count must be >= 1, got {k}")
    bound = min(dim, num_samples - 1)
    if k > bound:
        raise KTooLarge(
            f"requested {k} components but at most min(dim={dim}, samples-1={num_samples - 1})"
            f" = {bound} are available"
        )


def pca_fit(
    enrolment: Dataset,
    *,
    num_components: int | None = None,
    retain: float | None = None,
) -> PcaModel:
    """Fit a PCA model on enrolment data.

    Exactly one of `num_components` (fixed K) or `retain` (smallest K whose
    cumulative eigenvalue fraction reaches the target) may be given; with
    neither, the default of 1300 components applies when the data permits.
    The returned model may hold fewer columns than requested when the data
    rank is smaller.
    """
    if num_components is not None and retain is not None:
        raise InvalidParameters("give either num_components or retain, not both")
    if num_components is None and retain is None:
        num_components = DEFAULT_NUM_COMPONENTS
    if retain is not None and not 0.0 < retain <= 1.0:
        raise InvalidParameters(f"retain fraction must be in (0, 1], got {retain}")
    if enrolment.num_samples < 2:
        raise InsufficientSamples(f"PCA needs at least 2 samples, got {enrolment.num_samples}")
    if num_components is not None:
        _check_fixed_k(num_components, enrolment.dim, enrolment.num_samples)
    full = _fit_all_directions(enrolment)
    if num_components is not None:
        k = min(num_components, full.num_components)
    else:
        k = int(np.searchsorted(full.variance_fractions, retain, side="left")) + 1
        k = min(k, full.num_components)
    return _truncate(full, k)


def pca_transform(x: np.ndarray, model: PcaModel) -> np.ndarray:
    """Project one vector: projection^T (x - mean)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.dim_in,):
        raise DimensionMismatch(f"vector has shape {x.shape}, model expects ({model.dim_in},)")
    return model.projection.T @ (x - model.mean)


def transform_dataset(ds: Dataset, model: PcaModel) -> Dataset:
    """Project every sample of a dataset, keeping labels and ids."""
    if ds.dim != model.dim_in:
        raise DimensionMismatch(f"dataset dim {ds.dim} does not match model dim {model.dim_in}")
    projected = (ds.features - model.mean) @ model.projection
    return dataset_from_arrays(projected, ds.labels, ds.ids)


def pca_sweep(enrolment: Dataset, k_values: list[int]) -> list[PcaModel]:
    """Fit once, truncate to each requested component count.

    All returned models share the mean and their leading columns exactly;
    the model at K equals pca_fit(num_components=K) bit for bit.
    """
    if not k_values:
        raise InvalidParameters("k_values must not be empty")
    if enrolment.num_samples < 2:
        raise InsufficientSamples(f"PCA needs at least 2 samples, got {enrolment.num_samples}")
    for k in k_values:
        _check_fixed_k(int(k), enrolment.dim, enrolment.num_samples)
    full = _fit_all_directions(enrolment)
    return [_truncate(full, min(int(k), full.num_components)) for k in k_values]
