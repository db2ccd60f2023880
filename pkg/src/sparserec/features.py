"""Feature pipeline: activation-map flattening, l2 normalization,
per-feature standardization and local+global fusion."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Dataset, _frozen
from .errors import DimensionMismatch, InsufficientSamples, NonFiniteValue, ZeroNormSample

# Features whose population stddev falls below this are treated as constant
# and standardized to 0 instead of dividing by ~0.
CONSTANT_STDDEV_FLOOR = 1e-12


@dataclass(frozen=True)
class ActivationTensor:
    """A stack of n feature maps of shape n1 x n2, stored as (n, n1, n2)."""

    maps: np.ndarray

    def __post_init__(self):
        maps = np.ascontiguousarray(np.asarray(self.maps, dtype=np.float64))
        if maps.ndim != 3 or min(maps.shape) < 1:
            raise DimensionMismatch(
                f"activation tensor must be (n, n1, n2) with positive dims, got {maps.shape}"
            )
        if not np.all(np.isfinite(maps)):
            raise NonFiniteValue("activation tensor contains a NaN or infinity")
        object.__setattr__(self, "maps", _frozen(maps))

    @property
    def num_maps(self) -> int:
        return int(self.maps.shape[0])

    @property
    def map_shape(self) -> tuple[int, int]:
        return int(self.maps.shape[1]), int(self.maps.shape[2])


def flatten_activations(tensor: ActivationTensor) -> np.ndarray:
    """Vectorize each map row-major and concatenate maps in channel order.

    The result has length n1*n2*n and the index arithmetic is a bijection:
    entry (i, r, c) lands at i*n1*n2 + r*n2 + c.
    """
    return tensor.maps.reshape(-1).copy()


def l2_normalize(x: np.ndarray) -> np.ndarray:
    """Scale x to unit l2 norm; a zero vector is an error."""
    x = np.asarray(x, dtype=np.float64)
    norm = float(np.linalg.norm(x))
    if norm == 0.0:
        raise ZeroNormSample("cannot l2-normalize a zero vector")
    return x / norm


@dataclass(frozen=True)
class StandardizationModel:
    """Per-feature means and population stddevs fitted on enrolment data.

    `constant` marks features whose stddev fell below the floor; those are
    mapped to 0 by standardize instead of being divided by ~0.
    """

    means: np.ndarray
    stddevs: np.ndarray
    constant: np.ndarray

    @property
    def dim(self) -> int:
        return int(self.means.shape[0])


def fit_standardizer(enrolment: Dataset) -> StandardizationModel:
    """Fit per-feature mean and population (1/M) standard deviation."""
    if enrolment.num_samples < 2:
        raise InsufficientSamples(
            f"standardization needs at least 2 samples, got {enrolment.num_samples}"
        )
    means = enrolment.features.mean(axis=0)
    stddevs = enrolment.features.std(axis=0)  # ddof=0: population variance
    constant = stddevs < CONSTANT_STDDEV_FLOOR
    return StandardizationModel(_frozen(means), _frozen(stddevs), _frozen(constant))


def standardize(x: np.ndarray, model: StandardizationModel) -> np.ndarray:
    """Map each feature to (x - mean)/stddev; constant features map to 0."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.dim,):
        raise DimensionMismatch(f"vector has shape {x.shape}, model expects ({model.dim},)")
    safe = np.where(model.constant, 1.0, model.stddevs)
    out = (x - model.means) / safe
    out[model.constant] = 0.0
    return out


def fuse(
    local_vec: np.ndarray,
    global_vec: np.ndarray,
    local_model: StandardizationModel,
    global_model: StandardizationModel,
) -> np.ndarray:
    """Concatenate the standardized local and global feature vectors."""
    return np.concatenate(
        [standardize(local_vec, local_model), standardize(global_vec, global_model)]
    )
