"""Verification and identification evaluation: score-set construction,
ROC/EER/GMR-at-FAR metrics, rank-1 accuracy, and the union-of-subspaces
synthetic generator used for desk-scale experiments.

Thresholding convention, used everywhere: a comparison is accepted at
threshold t when its score is >= t.  FAR (false accept rate) is the accepted
fraction of impostor comparisons, GMR (genuine match rate) the accepted
fraction of genuine ones; FNMR = 1 - GMR.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .classifiers import (
    CrcOperator,
    SacrcConfig,
    crc_class_scores,
    knn1_class_scores,
    knn1_classify,
    omp_solve,
    sacrc_classify,
    src_residual_classify,
)
from .core import Dataset, Dictionary, dataset_from_arrays
from .errors import (
    ConfigError,
    DegenerateScoreSet,
    DimensionMismatch,
    InvalidParameters,
    NonFiniteValue,
    UnknownClass,
)
from .features import l2_normalize

CLASSIFIER_ALIASES = {
    "sacrc": "sacrc",
    "crc": "crc",
    "crc-only": "crc",
    "src": "src",
    "src-residual": "src",
    "knn1": "knn1",
}


@dataclass(frozen=True)
class ScoreRecord:
    probe_id: str
    claimed_class: int
    score: float
    is_genuine: bool


@dataclass(frozen=True)
class ScoreSet:
    """Genuine/impostor match scores from a verification run."""

    records: tuple[ScoreRecord, ...]

    def genuine_scores(self) -> np.ndarray:
        return np.array([r.score for r in self.records if r.is_genuine], dtype=np.float64)

    def impostor_scores(self) -> np.ndarray:
        return np.array([r.score for r in self.records if not r.is_genuine], dtype=np.float64)


@dataclass(frozen=True)
class RocPoint:
    threshold: float
    far: float
    gmr: float


@dataclass(frozen=True)
class GmrAtFar:
    far_target: float
    gmr: float
    threshold: float
    insufficient_impostors: bool


@dataclass(frozen=True)
class EvalReport:
    """Verification metric panel plus the resolved configuration it came from."""

    eer: float
    gmr_at_far: tuple[GmrAtFar, ...]
    roc_points: tuple[RocPoint, ...]
    rank1_accuracy: float | None
    config_echo: tuple[tuple[str, str], ...]


def default_workers() -> int:
    """Worker count for probe scoring; SPARSEREC_THREADS caps it."""
    n = os.cpu_count() or 1
    limit = os.environ.get("SPARSEREC_THREADS")
    if limit is not None:
        try:
            cap = int(limit)
        except ValueError:
            raise ConfigError(f"SPARSEREC_THREADS must be an integer, got {limit!r}") from None
        n = min(n, max(1, cap))
    return max(1, n)


def _parallel_map(fn: Callable, items: Sequence, workers: int) -> list:
    # Per-item work is pure against immutable state, and map preserves input
    # order, so results are independent of worker count and scheduling.
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _canonical_classifier(name: str) -> str:
    try:
        return CLASSIFIER_ALIASES[name]
    except KeyError:
        raise InvalidParameters(
            f"unknown classifier {name!r}; choose from sacrc, crc, src, knn1"
        ) from None


def _class_score_fn(
    classifier: str,
    dictionary: Dictionary,
    op: CrcOperator | None,
    cfg: SacrcConfig | None,
    enrolment: Dataset | None,
) -> Callable[[np.ndarray], np.ndarray]:
    """Per-probe function returning the length-c match-score vector."""
    kind = _canonical_classifier(classifier)
    if kind == "sacrc":
        if op is None or cfg is None:
            raise InvalidParameters("sacrc scoring needs a CrcOperator and a SacrcConfig")
        return lambda y: sacrc_classify(y, dictionary, op, cfg).class_scores
    if kind == "crc":
        if op is None:
            raise InvalidParameters("crc scoring needs a CrcOperator")
        return lambda y: crc_class_scores(y, op)
    if kind == "src":
        if cfg is None:
            raise InvalidParameters("src scoring needs a SacrcConfig")
        k = cfg.resolve_k(dictionary.num_atoms)

        def src_scores(y: np.ndarray) -> np.ndarray:
            y_hat = l2_normalize(y)
            alpha = omp_solve(y_hat, dictionary, k, cfg.residual_tol)
            _, residuals = src_residual_classify(y_hat, dictionary, alpha)
            return -residuals

        return src_scores
    if enrolment is None:
        raise InvalidParameters("knn1 scoring needs the enrolment dataset")
    return lambda y: knn1_class_scores(y, enrolment, dictionary.num_classes)


def build_scoreset(
    probes: Dataset,
    dictionary: Dictionary,
    op: CrcOperator | None = None,
    cfg: SacrcConfig | None = None,
    *,
    protocol: str = "all-vs-all",
    pairs: Sequence[tuple[str, int]] | None = None,
    classifier: str = "sacrc",
    enrolment: Dataset | None = None,
    workers: int = 1,
) -> ScoreSet:
    """Score probe/claim comparisons against an enrolled dictionary.

    Under the all-vs-all protocol every probe is compared against every
    enrolled class: one genuine record where the claim equals the probe's
    true class (when enrolled) and impostor records elsewhere.  Under the
    pairs protocol only the supplied (probe_id, claimed_class) comparisons
    are scored.
    """
    if probes.dim != dictionary.dim:
        raise DimensionMismatch(
            f"probes have dim {probes.dim}, dictionary has dim {dictionary.dim}"
        )
    score_fn = _class_score_fn(classifier, dictionary, op, cfg, enrolment)
    c = dictionary.num_classes

    if protocol == "all-vs-all":
        wanted = list(range(probes.num_samples))
    elif protocol == "pairs":
        if pairs is None:
            raise InvalidParameters("pairs protocol needs a pair list")
        index_of: dict[str, int] = {}
        for i, pid in enumerate(probes.ids):
            if pid in index_of:
                raise InvalidParameters(f"duplicate probe id {pid!r}; pairs would be ambiguous")
            index_of[pid] = i
        for pid, claim in pairs:
            if pid not in index_of:
                raise InvalidParameters(f"pair references unknown probe id {pid!r}")
            if not 0 <= int(claim) < c:
                raise UnknownClass(f"pair claims class {claim}, enrolled range is [0, {c})")
        wanted = sorted({index_of[pid] for pid, _ in pairs})
    else:
        raise InvalidParameters(f"unknown protocol {protocol!r}; use all-vs-all or pairs")

    score_rows = _parallel_map(lambda i: score_fn(probes.features[i]), wanted, workers)
    scores_by_index = dict(zip(wanted, score_rows))

    records: list[ScoreRecord] = []
    if protocol == "all-vs-all":
        for i in wanted:
            row = scores_by_index[i]
            true_class = int(probes.labels[i])
            for claim in range(c):
                records.append(
                    ScoreRecord(probes.ids[i], claim, float(row[claim]), claim == true_class)
                )
    else:
        for pid, claim in pairs:
            i = index_of[pid]
            claim = int(claim)
            records.append(
                ScoreRecord(pid, claim, float(scores_by_index[i][claim]), claim == int(probes.labels[i]))
            )
    return ScoreSet(tuple(records))


def _split_sorted(scoreset: ScoreSet) -> tuple[np.ndarray, np.ndarray]:
    genuine = np.sort(scoreset.genuine_scores())
    impostor = np.sort(scoreset.impostor_scores())
    if genuine.size == 0 or impostor.size == 0:
        raise DegenerateScoreSet(
            f"need at least one genuine and one impostor score, got {genuine.size}/{impostor.size}"
        )
    if not (np.all(np.isfinite(genuine)) and np.all(np.isfinite(impostor))):
        raise NonFiniteValue("score set contains a non-finite score")
    return genuine, impostor


def _accept_rates(thresholds: np.ndarray, sorted_scores: np.ndarray) -> np.ndarray:
    """Fraction of scores >= each threshold (scores pre-sorted ascending)."""
    below = np.searchsorted(sorted_scores, thresholds, side="left")
    return (sorted_scores.size - below) / sorted_scores.size


def compute_roc(scoreset: ScoreSet) -> tuple[RocPoint, ...]:
    """Sweep thresholds over the sorted unique scores plus -inf/+inf sentinels.

    Emitted in increasing-threshold order, so FAR and GMR are non-increasing
    along the result.
    """
    genuine, impostor = _split_sorted(scoreset)
    thresholds = np.concatenate(
        [[-np.inf], np.unique(np.concatenate([genuine, impostor])), [np.inf]]
    )
    far = _accept_rates(thresholds, impostor)
    gmr = _accept_rates(thresholds, genuine)
    return tuple(
        RocPoint(float(t), float(f), float(g)) for t, f, g in zip(thresholds, far, gmr)
    )


def compute_eer(scoreset: ScoreSet) -> float:
    """Equal error rate from the FMR/FNMR crossing over the threshold sweep.

    At a sweep point where FMR equals FNMR the EER is that common value;
    otherwise the crossing falls between two adjacent sweep points and the
    rates are interpolated linearly between them.
    """
    genuine, impostor = _split_sorted(scoreset)
    thresholds = np.concatenate(
        [[-np.inf], np.unique(np.concatenate([genuine, impostor])), [np.inf]]
    )
    fmr = _accept_rates(thresholds, impostor)
    fnmr = 1.0 - _accept_rates(thresholds, genuine)
    diff = fmr - fnmr  # non-increasing: 1 at -inf, -1 at +inf
    idx = int(np.nonzero(diff >= 0.0)[0][-1])
    if diff[idx] == 0.0:
        return float(fmr[idx])
    theta = diff[idx] / (diff[idx] - diff[idx + 1])
    return float(fnmr[idx] + theta * (fnmr[idx + 1] - fnmr[idx]))


def compute_gmr_at_far(scoreset: ScoreSet, far_target: float) -> GmrAtFar:
    """GMR at the most permissive observed threshold whose FAR is within the
    target.

    When no observed threshold meets the target (the top score is an
    impostor's and impostors are too few), the strictest threshold is used
    and the result is flagged when the impostor count is below 1/target.
    """
    if not 0.0 < far_target < 1.0:
        raise InvalidParameters(f"FAR target must be in (0, 1), got {far_target}")
    genuine, impostor = _split_sorted(scoreset)
    thresholds = np.unique(np.concatenate([genuine, impostor]))
    far = _accept_rates(thresholds, impostor)
    gmr = _accept_rates(thresholds, genuine)
    ok = far <= far_target  # far is non-increasing, so ok is a suffix
    if np.any(ok):
        i = int(np.argmax(ok))
        return GmrAtFar(far_target, float(gmr[i]), float(thresholds[i]), False)
    flag = impostor.size < 1.0 / far_target
    return GmrAtFar(far_target, float(gmr[-1]), float(thresholds[-1]), flag)


def rank1_identification(
    probes: Dataset,
    classifier: str,
    *,
    dictionary: Dictionary,
    op: CrcOperator | None = None,
    cfg: SacrcConfig | None = None,
    enrolment: Dataset | None = None,
    workers: int = 1,
) -> float:
    """Fraction of probes whose top-ranked class is their true class.

    Callers filter probes to enrolled classes beforehand; a probe with a
    label outside the dictionary's class space is an error.
    """
    c = dictionary.num_classes
    if int(probes.labels.max()) >= c:
        bad = int(np.nonzero(probes.labels >= c)[0][0])
        raise UnknownClass(
            f"probe {probes.ids[bad]!r} has class {int(probes.labels[bad])},"
            f" enrolled range is [0, {c})"
        )
    kind = _canonical_classifier(classifier)
    if kind == "knn1":
        if enrolment is None:
            raise InvalidParameters("knn1 identification needs the enrolment dataset")
        predict = lambda y: knn1_classify(y, enrolment)
    else:
        score_fn = _class_score_fn(kind, dictionary, op, cfg, enrolment)
        predict = lambda y: int(np.argmax(score_fn(y)))
    predictions = _parallel_map(
        lambda i: predict(probes.features[i]), list(range(probes.num_samples)), workers
    )
    return float(np.mean(np.asarray(predictions) == probes.labels))


def generate_synthetic(
    num_classes: int,
    samples_per_class: int,
    dim: int,
    subspace_dim: int,
    noise_sigma: float,
    seed: int,
    probes_per_class: int | None = None,
) -> tuple[Dataset, Dataset]:
    """Union-of-subspaces generator: per class, a random orthonormal basis of
    the given subspace dimension, samples drawn as basis @ coefficients plus
    isotropic gaussian noise.

    Coefficients are half-normal (|N(0,1)|), so each class occupies a cone
    inside its subspace the way real gallery features do; with signed
    coefficients the per-class coefficient sums of a collaborative
    representation cancel and carry no class evidence.

    Fully reproducible from the seed; returns (enrolment, probes).
    """
    if probes_per_class is None:
        probes_per_class = samples_per_class
    if num_classes < 1 or samples_per_class < 1 or probes_per_class < 1:
        raise InvalidParameters("num_classes, samples_per_class and probes_per_class must be >= 1")
    if dim < 1 or not 1 <= subspace_dim < dim:
        raise InvalidParameters(
            f"need 1 <= subspace_dim < dim, got subspace_dim={subspace_dim}, dim={dim}"
        )
    if noise_sigma < 0.0:
        raise InvalidParameters(f"noise_sigma must be >= 0, got {noise_sigma}")

    rng = np.random.default_rng(seed)
    enrol_rows, enrol_labels, enrol_ids = [], [], []
    probe_rows, probe_labels, probe_ids = [], [], []
    for cls in range(num_classes):
        basis, _ = np.linalg.qr(rng.standard_normal((dim, subspace_dim)))
        enrol = basis @ np.abs(rng.standard_normal((subspace_dim, samples_per_class)))
        probe = basis @ np.abs(rng.standard_normal((subspace_dim, probes_per_class)))
        enrol = enrol + noise_sigma * rng.standard_normal(enrol.shape)
        probe = probe + noise_sigma * rng.standard_normal(probe.shape)
        for j in range(samples_per_class):
            enrol_rows.append(enrol[:, j])
            enrol_labels.append(cls)
            enrol_ids.append(f"enrol-{cls}-{j}")
        for j in range(probes_per_class):
            probe_rows.append(probe[:, j])
            probe_labels.append(cls)
            probe_ids.append(f"probe-{cls}-{j}")
    enrolment = dataset_from_arrays(np.vstack(enrol_rows), enrol_labels, enrol_ids)
    probes = dataset_from_arrays(np.vstack(probe_rows), probe_labels, probe_ids)
    return enrolment, probes


def evaluate_verification(
    scoreset: ScoreSet,
    far_targets: Sequence[float] = (0.1, 0.01, 0.001),
    config_echo: Sequence[tuple[str, str]] = (),
    rank1_accuracy: float | None = None,
) -> EvalReport:
    """Assemble the standard verification panel: EER, GMR at each FAR target
    and the full ROC sweep."""
    return EvalReport(
        eer=compute_eer(scoreset),
        gmr_at_far=tuple(compute_gmr_at_far(scoreset, t) for t in far_targets),
        roc_points=compute_roc(scoreset),
        rank1_accuracy=rank1_accuracy,
        config_echo=tuple(config_echo),
    )
