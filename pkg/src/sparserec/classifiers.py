"""Decision machinery: the dense ridge (collaborative) solve, the greedy
l0-constrained sparse solve, their normalized augmentation with label-matrix
classification, and the residual / nearest-neighbor baselines.

The collaborative solve uses the squared-l2 ridge penalty, giving the closed
form (Phi^T Phi + lambda I)^-1 Phi^T y; the factorization is computed once
per dictionary and reused across probes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .core import Dataset, Dictionary, RepresentationResult
from .errors import (
    DegenerateAugmentation,
    DimensionMismatch,
    EmptyDataset,
    InvalidParameters,
    SingularSystem,
    UnknownClass,
)
from .features import l2_normalize

DEFAULT_RIDGE_LAMBDA = 0.01
DEFAULT_SPARSITY_CAP = 50
DEFAULT_RESIDUAL_TOL = 1e-6

# Below this, the sum of the two coefficient vectors is treated as cancelled
# and the normalized collaborative solution is used alone.
AUGMENTATION_EPS = 1e-12


@dataclass(frozen=True)
class SacrcConfig:
    """Hyperparameters for the augmented classifier.

    `sparsity_k` of None resolves to min(50, N) against the dictionary at
    solve time.
    """

    ridge_lambda: float = DEFAULT_RIDGE_LAMBDA
    sparsity_k: int | None = None
    residual_tol: float = DEFAULT_RESIDUAL_TOL

    def __post_init__(self):
        if self.ridge_lambda < 0.0:
            raise InvalidParameters(f"lambda must be >= 0, got {self.ridge_lambda}")
        if self.sparsity_k is not None and self.sparsity_k < 1:
            raise InvalidParameters(f"sparsity_k must be >= 1, got {self.sparsity_k}")
        if self.residual_tol < 0.0:
            raise InvalidParameters(f"residual_tol must be >= 0, got {self.residual_tol}")

    def resolve_k(self, num_atoms: int) -> int:
        k = min(DEFAULT_SPARSITY_CAP, num_atoms) if self.sparsity_k is None else self.sparsity_k
        if k > num_atoms:
            raise InvalidParameters(f"sparsity_k={k} exceeds dictionary size {num_atoms}")
        return k


class CrcOperator:
    """Cached SPD factorization of (Phi^T Phi + lambda I) for one dictionary.

    Immutable after construction; applying it to distinct probes is pure and
    safe under unbounded read-parallelism.
    """

    def __init__(self, dictionary: Dictionary, ridge_lambda: float = DEFAULT_RIDGE_LAMBDA):
        if ridge_lambda < 0.0:
            raise InvalidParameters(f"lambda must be >= 0, got {ridge_lambda}")
        n = dictionary.num_atoms
        if ridge_lambda == 0.0 and n > dictionary.dim:
            raise SingularSystem(
                f"lambda=0 with {n} atoms in dimension {dictionary.dim}: Phi^T Phi is rank-deficient"
            )
        gram = dictionary.atoms.T @ dictionary.atoms
        gram[np.diag_indices(n)] += ridge_lambda
        try:
            self._factor = scipy.linalg.cho_factor(gram, lower=True)
        except scipy.linalg.LinAlgError as exc:
            raise SingularSystem(f"Phi^T Phi + lambda I is not positive definite: {exc}") from exc
        self.dictionary = dictionary
        self.ridge_lambda = float(ridge_lambda)

    def apply(self, y: np.ndarray) -> np.ndarray:
        return scipy.linalg.cho_solve(self._factor, self.dictionary.atoms.T @ y)


def crc_solve(y: np.ndarray, op: CrcOperator) -> np.ndarray:
    """Dense collaborative solution (Phi^T Phi + lambda I)^-1 Phi^T y."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (op.dictionary.dim,):
        raise DimensionMismatch(f"probe has shape {y.shape}, dictionary dim is {op.dictionary.dim}")
    return op.apply(y)


def omp_solve(y: np.ndarray, dictionary: Dictionary, k: int, tol: float = 0.0) -> np.ndarray:
    """Greedy orthogonal matching pursuit with at most k nonzeros.

    Each round selects the atom best correlated with the residual, then
    re-fits least squares on the whole active set.  Stops at support size k,
    residual norm <= tol, or a residual orthogonal to every atom.
    """
    y = np.asarray(y, dtype=np.float64)
    atoms = dictionary.atoms
    if y.shape != (atoms.shape[0],):
        raise DimensionMismatch(f"probe has shape {y.shape}, dictionary dim is {atoms.shape[0]}")
    n = dictionary.num_atoms
    if not 1 <= k <= n:
        raise InvalidParameters(f"sparsity k must be in [1, {n}], got {k}")
    if tol < 0.0:
        raise InvalidParameters(f"residual tolerance must be >= 0, got {tol}")

    alpha = np.zeros(n)
    support: list[int] = []
    coeffs = np.empty(0)
    residual = y.copy()
    while len(support) < k:
        if np.linalg.norm(residual) <= tol:
            break
        correlations = atoms.T @ residual
        j = int(np.argmax(np.abs(correlations)))
        if correlations[j] == 0.0 or j in support:
            break  # residual is (numerically) orthogonal to every atom
        support.append(j)
        coeffs, *_ = np.linalg.lstsq(atoms[:, support], y, rcond=None)
        residual = y - atoms[:, support] @ coeffs
    if support:
        alpha[support] = coeffs
    return alpha


def _augment(alpha_collab: np.ndarray, alpha_sparse: np.ndarray) -> tuple[np.ndarray, bool]:
    """Normalized sum of the two solutions; falls back to the collaborative
    one (flagged) when they cancel, errors when that is zero too."""
    combined = alpha_collab + alpha_sparse
    norm = float(np.linalg.norm(combined))
    if norm >= AUGMENTATION_EPS:
        return combined / norm, False
    collab_norm = float(np.linalg.norm(alpha_collab))
    if collab_norm < AUGMENTATION_EPS:
        raise DegenerateAugmentation("both coefficient vectors are zero")
    return alpha_collab / collab_norm, True


def sacrc_classify(
    y: np.ndarray, dictionary: Dictionary, op: CrcOperator, cfg: SacrcConfig
) -> RepresentationResult:
    """Classify a probe by the augmented representation.

    The probe is l2-normalized internally, so the decision is invariant to
    positive rescaling of y.
    """
    y_hat = l2_normalize(y)
    alpha_collab = crc_solve(y_hat, op)
    k = cfg.resolve_k(dictionary.num_atoms)
    alpha_sparse = omp_solve(y_hat, dictionary, k, cfg.residual_tol)
    alpha_aug, fell_back = _augment(alpha_collab, alpha_sparse)
    class_scores = dictionary.label_matrix @ alpha_aug
    predicted = int(np.argmax(class_scores))  # argmax takes the lowest index on ties
    return RepresentationResult(
        alpha_collab=alpha_collab,
        alpha_sparse=alpha_sparse,
        alpha_aug=alpha_aug,
        class_scores=class_scores,
        predicted_class=predicted,
        used_collab_fallback=fell_back,
    )


def crc_class_scores(y: np.ndarray, op: CrcOperator) -> np.ndarray:
    """Per-class evidence from the collaborative solution alone.

    The coefficient vector is l2-normalized (when nonzero) so scores are
    comparable across probes, mirroring the augmented rule.
    """
    alpha = crc_solve(l2_normalize(y), op)
    norm = float(np.linalg.norm(alpha))
    if norm > 0.0:
        alpha = alpha / norm
    return op.dictionary.label_matrix @ alpha


def src_residual_classify(
    y: np.ndarray, dictionary: Dictionary, alpha: np.ndarray
) -> tuple[int, np.ndarray]:
    """Classical residual rule: keep only class i's coefficients, reconstruct,
    and pick the class with the smallest reconstruction error."""
    y = np.asarray(y, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.shape != (dictionary.num_atoms,):
        raise DimensionMismatch(
            f"alpha has shape {alpha.shape}, dictionary holds {dictionary.num_atoms} atoms"
        )
    c = dictionary.num_classes
    residuals = np.empty(c)
    for i in range(c):
        mask = dictionary.column_labels == i
        reconstruction = dictionary.atoms[:, mask] @ alpha[mask]
        residuals[i] = np.linalg.norm(y - reconstruction)
    return int(np.argmin(residuals)), residuals


def knn1_classify(y: np.ndarray, enrolment: Dataset) -> int:
    """Class of the Euclidean nearest enrolment sample (first on ties)."""
    y = np.asarray(y, dtype=np.float64)
    if enrolment.num_samples == 0:
        raise EmptyDataset("nearest-neighbor needs a non-empty enrolment set")
    if y.shape != (enrolment.dim,):
        raise DimensionMismatch(f"probe has shape {y.shape}, enrolment dim is {enrolment.dim}")
    distances = np.linalg.norm(enrolment.features - y, axis=1)
    return int(enrolment.labels[int(np.argmin(distances))])


def knn1_class_scores(y: np.ndarray, enrolment: Dataset, num_classes: int) -> np.ndarray:
    """Per-class nearest-neighbor match scores: minus the smallest Euclidean
    distance from y to any sample of the class (-inf for absent classes)."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (enrolment.dim,):
        raise DimensionMismatch(f"probe has shape {y.shape}, enrolment dim is {enrolment.dim}")
    distances = np.linalg.norm(enrolment.features - y, axis=1)
    best = np.full(num_classes, np.inf)
    np.minimum.at(best, enrolment.labels, distances)
    return np.where(np.isfinite(best), -best, -np.inf)


def match_score(
    y: np.ndarray,
    dictionary: Dictionary,
    op: CrcOperator,
    cfg: SacrcConfig,
    claimed_class: int,
) -> float:
    """Verification score for a claimed identity: the claimed class's entry
    of the augmented per-class evidence vector (higher means more genuine)."""
    if not 0 <= claimed_class < dictionary.num_classes:
        raise UnknownClass(
            f"claimed class {claimed_class} outside enrolled range [0, {dictionary.num_classes})"
        )
    result = sacrc_classify(y, dictionary, op, cfg)
    return float(result.class_scores[claimed_class])
