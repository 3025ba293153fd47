"""End-to-end drivers tying corpora, features, dictionaries and sizing.

These functions implement the operational flows behind the command line
tool: extract features over a manifest, train per-class dictionaries
(optionally auto-sizing them), classify files whole or by sampled
fragments, scan buffers for embedded payload content, and benchmark the
core stages. They are plain library code so tests drive the exact same
paths as the CLI.

Modes: "file" extracts one vector from the whole file (byte and difference
frequencies only; pair-based schemes on multi-megabyte files would be
dominated by their fragment statistics anyway and are reserved for
fragment mode), while "fragments" samples seeded fragments per file.
"""

from dataclasses import dataclass
import time
from pathlib import Path
from typing import Optional

import numpy as np

from .corpus import TEST_SPLIT, TRAIN_SPLIT, CorpusManifest
from .dictionary import (
    Dictionary,
    classify_fragments,
    classify_signal,
    detect_embedded,
    dist,
    train,
)
from .errors import ValidationError
from .features import (
    SCHEME_BFD_CDD,
    FragmentSpec,
    check_scheme,
    contiguous_windows,
    extract,
    sample_fragments,
)
from .rlu import DEFAULT_OVERSAMPLING, randomized_lu
from .sizing import (
    SizeAssignment,
    all_pairwise_error_matrices,
    default_k_range,
    evaluate_assignment,
    find_optimal_agreement,
)
from ._util import check_seed, derive_seed, map_ordered

MODE_FILE = "file"
MODE_FRAGMENTS = "fragments"

# Training in fragment mode reads this much from each file by default.
TRAIN_FRAGMENT_BYTES = 10000

# Classification fragment length per scheme: pair-based schemes need more
# bytes before their statistics stabilize.
DEFAULT_FRAGMENT_BYTES = {"bfd-cdd": 1500, "dbfd": 2000, "mw": 2000}

# Scan defaults: window length and the strict count threshold above which
# a file is flagged as carrying embedded payload content.
SCAN_WINDOW_BYTES = 5000
SCAN_THRESHOLD = 10

DEFAULT_FRAGMENT_COUNT = 10


def check_mode(mode):
    if mode not in (MODE_FILE, MODE_FRAGMENTS):
        raise ValidationError(f"unknown mode {mode!r}, expected {MODE_FILE} or {MODE_FRAGMENTS}")
    return mode


def fragment_length_default(scheme, mode):
    """Per-scheme default fragment length for classification."""
    check_scheme(scheme)
    if mode == MODE_FILE:
        return None
    return DEFAULT_FRAGMENT_BYTES[scheme]


def _check_file_mode_scheme(scheme):
    if scheme != SCHEME_BFD_CDD:
        raise ValidationError(
            f"mode {MODE_FILE!r} supports only the {SCHEME_BFD_CDD!r} scheme, got {scheme!r}"
        )


def _read_bytes(path):
    return Path(path).read_bytes()


def file_fragment_seed(seed, relative_path):
    """Seed for one file's fragment sampling, independent of scan order."""
    return derive_seed(seed, "fragments", str(relative_path))


def training_matrices(
    manifest,
    scheme,
    mode,
    seed=0,
    train_fragment_bytes=TRAIN_FRAGMENT_BYTES,
    fragments_per_file=1,
    workers=1,
):
    """Per-class training matrices (signals as columns) from the train split.

    File mode extracts one whole-file vector per training file; fragment
    mode samples fragments_per_file seeded fragments of
    train_fragment_bytes from each and uses each fragment as a signal.
    """
    check_scheme(scheme)
    check_mode(mode)
    seed = check_seed(seed)
    if mode == MODE_FILE:
        _check_file_mode_scheme(scheme)
    entries = manifest.select(split=TRAIN_SPLIT)
    if not entries:
        raise ValidationError("manifest has no training entries")

    def vectors_for(entry):
        data = _read_bytes(manifest.absolute(entry))
        if mode == MODE_FILE:
            return [extract(scheme, data)]
        spec = FragmentSpec(
            count=fragments_per_file,
            length=train_fragment_bytes,
            seed=file_fragment_seed(seed, entry.path),
        )
        return [extract(scheme, frag) for frag in sample_fragments(data, spec)]

    per_entry = map_ordered(vectors_for, entries, workers)
    collected = {}
    for entry, vectors in zip(entries, per_entry):
        collected.setdefault(entry.label, []).extend(vectors)
    return {label: np.column_stack(vecs) for label, vecs in sorted(collected.items())}


@dataclass(frozen=True)
class TrainOutcome:
    """Trained dictionaries plus whatever the size search produced."""

    dictionaries: dict
    sizes: dict
    assignment: Optional[SizeAssignment] = None
    error_matrices: Optional[dict] = None
    holdout_error: Optional[int] = None


def resolve_sizes(classes, k, seed=0, k_grid=None, oversampling=DEFAULT_OVERSAMPLING):
    """Turn a size policy into concrete per-class sizes.

    k may be a positive int (same size everywhere), a mapping from label to
    size, or "auto" (pairwise error search over k_grid, defaulting to a
    grid spanning the classes' numerical ranks). Returns
    (sizes, assignment, error_matrices); the latter two are None unless
    k == "auto".
    """
    labels = sorted(classes)
    if isinstance(k, str):
        if k != "auto":
            raise ValidationError(f"size policy must be an int, a mapping, or 'auto', got {k!r}")
        grid = tuple(k_grid) if k_grid is not None else default_k_range(classes)
        matrices = all_pairwise_error_matrices(classes, grid, seed, oversampling)
        assignment = find_optimal_agreement(matrices.values())
        return dict(assignment.sizes), assignment, matrices
    if isinstance(k, dict):
        missing = [label for label in labels if label not in k]
        if missing:
            raise ValidationError(f"no size given for classes: {', '.join(missing)}")
        return {label: int(k[label]) for label in labels}, None, None
    if isinstance(k, (int, np.integer)) and not isinstance(k, bool):
        if k < 1:
            raise ValidationError(f"dictionary size must be positive, got {k}")
        return {label: int(k) for label in labels}, None, None
    raise ValidationError(f"size policy must be an int, a mapping, or 'auto', got {k!r}")


def train_from_manifest(
    manifest,
    scheme,
    mode,
    k="auto",
    seed=0,
    k_grid=None,
    oversampling=DEFAULT_OVERSAMPLING,
    train_fragment_bytes=TRAIN_FRAGMENT_BYTES,
    fragments_per_file=1,
    workers=1,
):
    """Train dictionaries from a corpus manifest's train split."""
    classes = training_matrices(
        manifest, scheme, mode, seed, train_fragment_bytes, fragments_per_file, workers
    )
    if len(classes) < 2:
        raise ValidationError("need at least two classes to train a classifier")
    sizes, assignment, matrices = resolve_sizes(classes, k, seed, k_grid, oversampling)
    holdout = None
    if assignment is not None:
        holdout = evaluate_assignment(classes, sizes, seed, oversampling)
    dictionaries = train(classes, sizes, seed, scheme=scheme, oversampling=oversampling)
    return TrainOutcome(
        dictionaries=dictionaries,
        sizes=sizes,
        assignment=assignment,
        error_matrices=matrices,
        holdout_error=holdout,
    )


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts of (predicted, actual) label pairs.

    labels lists every label seen on either side, sorted; counts[i, j] is
    how many items with actual labels[j] were predicted labels[i], so each
    column belongs to one actual class and its sum is that class's item
    count.
    """

    labels: tuple
    counts: np.ndarray

    @classmethod
    def from_pairs(cls, pairs):
        """Build from (actual, predicted) label pairs."""
        pairs = list(pairs)
        if not pairs:
            raise ValidationError("cannot build a confusion matrix from no results")
        labels = tuple(sorted({a for a, _ in pairs} | {p for _, p in pairs}))
        index = {label: i for i, label in enumerate(labels)}
        counts = np.zeros((len(labels), len(labels)), dtype=np.int64)
        for actual, predicted in pairs:
            counts[index[predicted], index[actual]] += 1
        return cls(labels=labels, counts=counts)

    @property
    def total(self):
        return int(self.counts.sum())

    @property
    def accuracy(self):
        return float(np.trace(self.counts)) / self.total

    @property
    def column_totals(self):
        """Items per actual class, keyed by label."""
        sums = self.counts.sum(axis=0)
        return {label: int(sums[i]) for i, label in enumerate(self.labels)}

    def class_accuracy(self, label):
        """Fraction of items with this actual label predicted correctly."""
        j = self.labels.index(label)
        column = self.counts[:, j]
        total = int(column.sum())
        if total == 0:
            raise ValidationError(f"no items with actual label {label!r}")
        return float(column[j]) / total

    def to_csv(self):
        header = ",".join(["predicted\\actual"] + list(self.labels))
        lines = [header]
        for i, label in enumerate(self.labels):
            lines.append(",".join([label] + [str(int(v)) for v in self.counts[i]]))
        return "\n".join(lines) + "\n"

    def to_json_dict(self):
        return {
            "labels": list(self.labels),
            "counts": [[int(v) for v in row] for row in self.counts],
            "accuracy": self.accuracy,
            "per_class_accuracy": {
                label: self.class_accuracy(label)
                for label in self.labels
                if self.counts[:, self.labels.index(label)].sum() > 0
            },
        }


@dataclass(frozen=True)
class FileOutcome:
    """One classified file: its manifest entry data and the prediction."""

    path: str
    actual: str
    predicted: str
    margin: float
    distances: dict


def classify_from_manifest(
    manifest,
    dictionaries,
    mode,
    seed=0,
    fragment_count=DEFAULT_FRAGMENT_COUNT,
    fragment_bytes=None,
    split=TEST_SPLIT,
    workers=1,
):
    """Classify a manifest split and tabulate a confusion matrix.

    File mode classifies each file's whole-file vector; fragment mode
    samples fragment_count seeded fragments of fragment_bytes (per-scheme
    default when None) and classifies their mean distances.
    """
    check_mode(mode)
    seed = check_seed(seed)
    scheme = _dictionaries_scheme(dictionaries)
    if mode == MODE_FILE:
        _check_file_mode_scheme(scheme)
    if fragment_bytes is None and mode == MODE_FRAGMENTS:
        fragment_bytes = DEFAULT_FRAGMENT_BYTES[scheme]
    entries = manifest.select(split=split)
    if not entries:
        raise ValidationError(f"manifest has no entries in split {split!r}")

    def classify_entry(entry):
        data = _read_bytes(manifest.absolute(entry))
        if mode == MODE_FILE:
            return classify_signal(extract(scheme, data), dictionaries)
        spec = FragmentSpec(
            count=fragment_count,
            length=fragment_bytes,
            seed=file_fragment_seed(seed, entry.path),
        )
        vectors = [extract(scheme, frag) for frag in sample_fragments(data, spec)]
        return classify_fragments(vectors, dictionaries)

    reports = map_ordered(classify_entry, entries, workers)
    outcomes = [
        FileOutcome(
            path=entry.path,
            actual=entry.label,
            predicted=report.predicted,
            margin=report.margin,
            distances=report.distances,
        )
        for entry, report in zip(entries, reports)
    ]
    confusion = ConfusionMatrix.from_pairs((o.actual, o.predicted) for o in outcomes)
    return confusion, outcomes


def _dictionaries_scheme(dictionaries):
    if not dictionaries:
        raise ValidationError("no dictionaries given")
    schemes = {d.scheme for d in dictionaries.values()}
    if len(schemes) != 1 or None in schemes:
        raise ValidationError(
            "dictionaries must all carry one feature scheme to classify files; "
            f"found {sorted(str(s) for s in schemes)}"
        )
    return check_scheme(schemes.pop())


@dataclass(frozen=True)
class ScanOutcome:
    """Embedded-payload scan result for one file."""

    path: str
    flagged: bool
    payload_fragments: int
    total_fragments: int


def scan_paths(
    paths,
    dictionaries,
    payload_label,
    threshold=SCAN_THRESHOLD,
    fragment_bytes=SCAN_WINDOW_BYTES,
    fragment_count=0,
    seed=0,
    workers=1,
    root=None,
):
    """Scan files for embedded payload-class content.

    With fragment_count == 0 (the default) every file is cut into all of
    its consecutive fragment_bytes windows, so coverage is exhaustive and
    deterministic without a seed; a positive fragment_count samples that
    many seeded fragments instead. Each window is classified on its own,
    and a file is flagged when strictly more than threshold windows land on
    payload_label.
    """
    seed = check_seed(seed)
    scheme = _dictionaries_scheme(dictionaries)
    paths = [Path(p) for p in paths]
    if not paths:
        raise ValidationError("no files to scan")
    if fragment_count < 0:
        raise ValidationError(f"fragment count must be >= 0, got {fragment_count}")

    def scan_one(path):
        data = _read_bytes(path)
        relative = str(path.relative_to(root)) if root is not None else str(path)
        if fragment_count == 0:
            fragments = contiguous_windows(data, fragment_bytes)
        else:
            spec = FragmentSpec(
                count=fragment_count,
                length=fragment_bytes,
                seed=file_fragment_seed(seed, relative),
            )
            fragments = sample_fragments(data, spec)
        vectors = [extract(scheme, frag) for frag in fragments]
        scan = detect_embedded(vectors, dictionaries, payload_label, threshold)
        return ScanOutcome(
            path=relative,
            flagged=scan.flagged,
            payload_fragments=scan.payload_fragments,
            total_fragments=scan.total_fragments,
        )

    return map_ordered(scan_one, paths, workers)


def run_benchmarks(shapes, ranks, seed=0, repeats=1):
    """Time dictionary training and classification on synthetic matrices.

    shapes are (rows, columns) pairs for the per-class training matrix;
    each is crossed with every rank. Training time is normalized per
    megabyte of training matrix; classification is reported per signal.
    Returns a list of row dicts ready for tabulation.
    """
    seed = check_seed(seed)
    if repeats < 1:
        raise ValidationError("repeats must be >= 1")
    rows = []
    for m, n in shapes:
        data = np.random.default_rng(derive_seed(seed, "bench", m, n)).standard_normal((m, n))
        megabytes = m * n * 8 / 1e6
        for k in ranks:
            if not 1 <= k <= min(m, n):
                raise ValidationError(f"rank {k} infeasible for shape {m}x{n}")
            start = time.perf_counter()
            for _ in range(repeats):
                result = randomized_lu(data, k, min(k + DEFAULT_OVERSAMPLING, m, n), seed)
            train_seconds = (time.perf_counter() - start) / repeats
            d = Dictionary.from_basis("bench", result.lower, seed)
            signals = np.random.default_rng(derive_seed(seed, "probe", m, n, k)).standard_normal(
                (32, m)
            )
            start = time.perf_counter()
            for row in signals:
                dist(row, d)
            classify_seconds = (time.perf_counter() - start) / len(signals)
            rows.append(
                {
                    "rows": m,
                    "cols": n,
                    "rank": k,
                    "train_seconds": train_seconds,
                    "train_seconds_per_mb": train_seconds / megabytes,
                    "classify_seconds_per_signal": classify_seconds,
                }
            )
    return rows
