"""Per-class dictionaries and subspace-distance classification.

A dictionary for a class is the row-permuted lower factor of a randomized
LU of that class's training matrix (signals as columns). The distance from a
signal x to a dictionary D is the norm of the part of x that orthogonal
projection onto D's column span cannot explain:

    dist(x, D) = || D pinv(D) x - x ||

Classification assigns a signal to the class whose dictionary explains it
best (smallest distance). Fragment classification averages per-fragment
distances per class before taking the minimum, and embedded-content
detection counts how many fragments of one buffer individually land on a
designated payload class.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import RankCollapseError, ValidationError
from .linalg import as_matrix, as_vector, inverse_permutation, pseudo_inverse
from .rlu import DEFAULT_OVERSAMPLING, randomized_lu
from ._util import check_seed, derive_seed

# Dictionaries in spaces of at most this dimension materialize the m x m
# projector D pinv(D) once; larger spaces keep the factored form.
PROJECTOR_DENSE_MAX_DIM = 1024


@dataclass(frozen=True)
class Dictionary:
    """A class dictionary: basis (m, k), its pseudo-inverse, and metadata.

    basis has full column rank by construction. projector caches
    basis @ pinv when the ambient dimension is small enough to afford it;
    both paths compute the same projection. scheme records which feature
    scheme produced the training signals (None when trained on raw
    matrices). Rebuilding pinv and projector from the same basis bytes is
    deterministic, so a saved and reloaded dictionary reproduces distances
    bit for bit.
    """

    label: str
    basis: np.ndarray
    pinv: np.ndarray = field(repr=False)
    projector: Optional[np.ndarray] = field(repr=False, default=None)
    train_seed: int = 0
    scheme: Optional[str] = None

    @property
    def dim(self):
        """Ambient dimension m of the signals this dictionary lives in."""
        return self.basis.shape[0]

    @property
    def rank(self):
        """Number of dictionary atoms k."""
        return self.basis.shape[1]

    @classmethod
    def from_basis(cls, label, basis, train_seed=0, scheme=None):
        """Build a dictionary from a basis, deriving pinv and projector.

        Raises RankDeficientError if the basis columns are numerically
        dependent.
        """
        if not isinstance(label, str) or not label:
            raise ValidationError("dictionary label must be a nonempty string")
        basis = as_matrix(basis, "basis")
        pinv = pseudo_inverse(basis)
        projector = None
        if basis.shape[0] <= PROJECTOR_DENSE_MAX_DIM:
            projector = basis @ pinv
        return cls(
            label=label,
            basis=basis,
            pinv=pinv,
            projector=projector,
            train_seed=check_seed(train_seed, "train_seed"),
            scheme=scheme,
        )


def train(classes, sizes, seed=0, scheme=None, oversampling=DEFAULT_OVERSAMPLING):
    """Train one dictionary per class from per-class training matrices.

    Parameters
    ----------
    classes : mapping from label to (m, n_t) matrix whose columns are the
        class's training signals. All classes must share the same m.
    sizes : mapping from label to dictionary size k_t (number of atoms),
        with 1 <= k_t <= min(m, n_t).
    seed : root seed; each class trains on its own derived child seed, so
        results do not depend on mapping iteration order.
    scheme : optional feature scheme tag stamped on the dictionaries.
    oversampling : sketch surplus; the sketch width is k_t + oversampling,
        clamped down to min(m, n_t) when the class is too small to oversample.

    Returns
    -------
    dict mapping label to Dictionary, keyed in sorted label order.

    Raises
    ------
    RankCollapseError (tagged with the class label) when a class's training
    matrix cannot support the requested size.
    """
    if not classes:
        raise ValidationError("need at least one class to train")
    if not isinstance(oversampling, (int, np.integer)) or oversampling < 0:
        raise ValidationError(f"oversampling must be a non-negative integer, got {oversampling}")
    seed = check_seed(seed)
    labels = sorted(classes)
    missing = [label for label in labels if label not in sizes]
    if missing:
        raise ValidationError(f"no size given for classes: {', '.join(missing)}")
    matrices = {label: as_matrix(classes[label], f"class {label!r}") for label in labels}
    dims = {matrix.shape[0] for matrix in matrices.values()}
    if len(dims) != 1:
        raise ValidationError(f"classes disagree on signal dimension: {sorted(dims)}")

    result = {}
    for label in labels:
        matrix = matrices[label]
        m, n_t = matrix.shape
        k = sizes[label]
        if not isinstance(k, (int, np.integer)) or isinstance(k, bool):
            raise ValidationError(f"size for class {label!r} must be an integer")
        if not 1 <= k <= min(m, n_t):
            raise ValidationError(
                f"size for class {label!r} must satisfy 1 <= k <= {min(m, n_t)}, got {k}"
            )
        sketch_width = min(int(k) + int(oversampling), m, n_t)
        class_seed = derive_seed(seed, "train", label)
        try:
            factors = randomized_lu(matrix, int(k), sketch_width, class_seed)
        except RankCollapseError as exc:
            raise RankCollapseError(
                f"class {label!r}: {exc}",
                requested_rank=exc.requested_rank,
                pivot_step=exc.pivot_step,
            ) from exc
        # Undo the row permutation so the basis lives in the original
        # coordinates: rows go back where they came from.
        basis = factors.lower[inverse_permutation(factors.row_perm)]
        result[label] = Dictionary.from_basis(label, basis, class_seed, scheme)
    return result


def dist(x, dictionary):
    """Distance from one signal to a dictionary's column span.

    The norm of the projection residual D pinv(D) x - x. Zero exactly when
    x lies in the span; never exceeds ||x|| by more than roundoff.
    """
    x = as_vector(x, "x")
    if x.size != dictionary.dim:
        raise ValidationError(
            f"signal has dimension {x.size}, dictionary {dictionary.label!r} "
            f"expects {dictionary.dim}"
        )
    if dictionary.projector is not None:
        residual = dictionary.projector @ x - x
    else:
        residual = dictionary.basis @ (dictionary.pinv @ x) - x
    return float(np.linalg.norm(residual))


def residual_norms(signals, dictionary):
    """dist for many signals at once; rows of signals are signals.

    Uses one matrix product per call instead of a product per signal, which
    is the same arithmetic up to floating point reassociation; agreement
    with dist is to roundoff, not bit for bit.
    """
    signals = as_matrix(signals, "signals")
    if signals.shape[1] != dictionary.dim:
        raise ValidationError(
            f"signals have dimension {signals.shape[1]}, dictionary "
            f"{dictionary.label!r} expects {dictionary.dim}"
        )
    if dictionary.projector is not None:
        residual = signals @ dictionary.projector.T - signals
    else:
        residual = (dictionary.basis @ (dictionary.pinv @ signals.T)).T - signals
    return np.linalg.norm(residual, axis=1)


def _check_dictionaries(dictionaries, minimum=2):
    if len(dictionaries) < minimum:
        raise ValidationError(f"need at least {minimum} dictionaries, got {len(dictionaries)}")
    dims = {d.dim for d in dictionaries.values()}
    if len(dims) != 1:
        raise ValidationError(f"dictionaries disagree on signal dimension: {sorted(dims)}")
    for label, d in dictionaries.items():
        if label != d.label:
            raise ValidationError(f"dictionary keyed {label!r} carries label {d.label!r}")


@dataclass(frozen=True)
class ClassificationReport:
    """Outcome of classifying one signal or one bag of fragments.

    distances maps each label to its (mean) distance; margin is the gap
    between the runner-up and the winner, zero on an exact tie.
    """

    predicted: str
    distances: dict
    margin: float


def _report_from_distances(distances):
    ordered = sorted(distances.items(), key=lambda item: (item[1], item[0]))
    best_label, best_value = ordered[0]
    margin = ordered[1][1] - best_value
    return ClassificationReport(predicted=best_label, distances=dict(distances), margin=float(margin))


def classify_signal(x, dictionaries):
    """Assign a signal to the class with the smallest dictionary distance.

    Ties break to the lexicographically smallest label. Equivalent to
    classify_fragments with a single fragment.
    """
    x = as_vector(x, "x")
    return classify_fragments([x], dictionaries)


def classify_fragments(fragments, dictionaries):
    """Classify a bag of fragment signals by mean distance per class.

    Every fragment contributes its distance to each dictionary; the class
    with the smallest mean wins, ties breaking to the smaller label. With
    one fragment this reduces exactly to classify_signal.
    """
    _check_dictionaries(dictionaries)
    if len(fragments) == 0:
        raise ValidationError("need at least one fragment to classify")
    stacked = np.vstack([as_vector(f, "fragment") for f in fragments])
    means = {
        label: float(np.mean(residual_norms(stacked, d)))
        for label, d in sorted(dictionaries.items())
    }
    return _report_from_distances(means)


@dataclass(frozen=True)
class EmbeddedScan:
    """Result of scanning one buffer's fragments for embedded payload.

    payload_fragments counts fragments individually classified as the
    payload class; flagged is True when that count strictly exceeds the
    threshold.
    """

    payload_label: str
    payload_fragments: int
    total_fragments: int
    threshold: int
    flagged: bool


def detect_embedded(fragments, dictionaries, payload_label, threshold=10):
    """Flag a buffer whose fragments hit the payload class too often.

    Each fragment is classified on its own (no averaging); the buffer is
    flagged when strictly more than threshold fragments land on
    payload_label.
    """
    _check_dictionaries(dictionaries)
    if payload_label not in dictionaries:
        raise ValidationError(f"payload label {payload_label!r} has no dictionary")
    if not isinstance(threshold, (int, np.integer)) or threshold < 0:
        raise ValidationError(f"threshold must be a non-negative integer, got {threshold}")
    if len(fragments) == 0:
        raise ValidationError("need at least one fragment to scan")
    stacked = np.vstack([as_vector(f, "fragment") for f in fragments])
    labels = sorted(dictionaries)
    table = np.column_stack([residual_norms(stacked, dictionaries[label]) for label in labels])
    # argmin takes the first index on ties, and columns are in sorted label
    # order, so ties already break lexicographically.
    winners = np.argmin(table, axis=1)
    count = int(np.sum(winners == labels.index(payload_label)))
    return EmbeddedScan(
        payload_label=payload_label,
        payload_fragments=count,
        total_fragments=len(fragments),
        threshold=int(threshold),
        flagged=count > threshold,
    )
