"""Synthetic byte corpora with controllable class structure.

Each synthetic class is a first-order Markov byte source: every byte value
has a small seeded set of allowed successors with seeded transition
weights, so files from one class share low-order statistics that the
feature schemes can pick up, while distinct class seeds give visibly
different structure. Generation is fully determined by the seeds, so a
corpus can be rebuilt bit for bit.

A corpus on disk is a directory of per-class subdirectories plus a
manifest.json recording every file's label and train/test split
assignment. plant_payload splices segments of one buffer into another at
seeded positions, which is how test fixtures with embedded foreign content
are built.
"""

from dataclasses import dataclass, field
import json
from pathlib import Path

import numpy as np

from .errors import ManifestError, ValidationError
from ._util import check_seed, derive_seed

MANIFEST_NAME = "manifest.json"
MANIFEST_VERSION = 1

TRAIN_SPLIT = "train"
TEST_SPLIT = "test"

# Successors allowed per byte state in a synthetic source.
_SUCCESSORS = 16


@dataclass(frozen=True)
class SyntheticSourceSpec:
    """Recipe for a synthetic corpus: per-class seeds and file geometry.

    class_seeds must be pairwise distinct (identical seeds would clone a
    class). labels defaults to class00, class01, ... when omitted.
    """

    class_seeds: tuple
    files_per_class: int = 200
    bytes_per_file: int = 65536
    labels: tuple = field(default=None)
    train_fraction: float = 0.8

    def __post_init__(self):
        seeds = tuple(check_seed(s, "class seed") for s in self.class_seeds)
        object.__setattr__(self, "class_seeds", seeds)
        if len(seeds) < 2:
            raise ValidationError("need at least two classes")
        if len(set(seeds)) != len(seeds):
            raise ValidationError("class seeds must be pairwise distinct")
        if self.files_per_class < 2:
            raise ValidationError("need at least two files per class")
        if self.bytes_per_file < 16:
            raise ValidationError("files must be at least 16 bytes")
        if self.labels is None:
            object.__setattr__(
                self, "labels", tuple(f"class{i:02d}" for i in range(len(seeds)))
            )
        else:
            labels = tuple(str(v) for v in self.labels)
            if len(labels) != len(seeds):
                raise ValidationError("labels and class_seeds must have equal length")
            if len(set(labels)) != len(labels):
                raise ValidationError("labels must be distinct")
            for label in labels:
                if not label or "/" in label or "\\" in label:
                    raise ValidationError(f"label {label!r} is empty or not directory-safe")
            object.__setattr__(self, "labels", labels)
        if not 0.0 < self.train_fraction < 1.0:
            raise ValidationError("train_fraction must lie strictly between 0 and 1")


@dataclass(frozen=True)
class ByteSource:
    """Seeded first-order Markov source over byte values.

    successors[s] lists the byte values reachable from state s and
    cumulative[s] their cumulative transition probabilities (last entry
    exactly 1.0).
    """

    seed: int
    successors: np.ndarray
    cumulative: np.ndarray

    @classmethod
    def from_seed(cls, seed):
        seed = check_seed(seed)
        rng = np.random.default_rng(derive_seed(seed, "structure"))
        successors = np.empty((256, _SUCCESSORS), dtype=np.uint8)
        cumulative = np.empty((256, _SUCCESSORS), dtype=np.float64)
        for state in range(256):
            successors[state] = rng.choice(256, size=_SUCCESSORS, replace=False)
            weights = rng.dirichlet(np.full(_SUCCESSORS, 0.6))
            cum = np.cumsum(weights)
            cum[-1] = 1.0
            cumulative[state] = cum
        return cls(seed=seed, successors=successors, cumulative=cumulative)

    def generate(self, count, length, stream_seed):
        """Generate count byte rows of the given length; seeded and batched.

        All rows advance in lockstep, one transition per step, which keeps
        the Python-level loop proportional to length rather than
        count * length.
        """
        if count < 1 or length < 1:
            raise ValidationError("count and length must be positive")
        rng = np.random.default_rng(stream_seed)
        out = np.empty((count, length), dtype=np.uint8)
        state = rng.integers(0, 256, size=count)
        out[:, 0] = state
        for position in range(1, length):
            draws = rng.random(count)
            # index of the first cumulative weight exceeding the draw
            pick = (self.cumulative[state] < draws[:, None]).sum(axis=1)
            state = self.successors[state, pick].astype(np.int64)
            out[:, position] = state
        return out


@dataclass(frozen=True)
class ManifestEntry:
    """One corpus file: path relative to the corpus root, label, split."""

    path: str
    label: str
    split: str


@dataclass(frozen=True)
class CorpusManifest:
    """Index of a corpus directory: where files live and how they split."""

    root: Path
    entries: tuple

    def __post_init__(self):
        if not self.entries:
            raise ManifestError("manifest has no entries")
        seen = set()
        for entry in self.entries:
            if entry.split not in (TRAIN_SPLIT, TEST_SPLIT):
                raise ManifestError(f"entry {entry.path!r} has unknown split {entry.split!r}")
            if not entry.label:
                raise ManifestError(f"entry {entry.path!r} has an empty label")
            if entry.path in seen:
                raise ManifestError(f"duplicate path {entry.path!r} in manifest")
            seen.add(entry.path)

    @property
    def labels(self):
        """Sorted distinct labels."""
        return sorted({entry.label for entry in self.entries})

    def select(self, split=None, label=None):
        """Entries filtered by split and/or label, in manifest order."""
        return [
            entry
            for entry in self.entries
            if (split is None or entry.split == split)
            and (label is None or entry.label == label)
        ]

    def absolute(self, entry):
        """Absolute path of an entry's file."""
        return Path(self.root) / entry.path

    def save(self, path=None):
        """Write the manifest JSON inside the corpus root (or to path)."""
        target = Path(path) if path is not None else Path(self.root) / MANIFEST_NAME
        document = {
            "format_version": MANIFEST_VERSION,
            "entries": [
                {"path": e.path, "label": e.label, "split": e.split} for e in self.entries
            ],
        }
        target.write_text(json.dumps(document, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return target

    @classmethod
    def load(cls, path):
        """Read a manifest and verify every referenced file exists."""
        path = Path(path)
        if path.is_dir():
            path = path / MANIFEST_NAME
        try:
            document = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ManifestError(f"manifest not found at {path}") from None
        except json.JSONDecodeError as exc:
            raise ManifestError(f"manifest at {path} is not valid JSON: {exc}") from exc
        if not isinstance(document, dict) or "entries" not in document:
            raise ManifestError(f"manifest at {path} lacks an entries list")
        version = document.get("format_version")
        if version != MANIFEST_VERSION:
            raise ManifestError(f"unsupported manifest version {version!r}")
        entries = []
        for raw in document["entries"]:
            try:
                entries.append(
                    ManifestEntry(path=raw["path"], label=raw["label"], split=raw["split"])
                )
            except (KeyError, TypeError) as exc:
                raise ManifestError(f"malformed manifest entry {raw!r}") from exc
        manifest = cls(root=path.parent, entries=tuple(entries))
        for entry in manifest.entries:
            target = manifest.absolute(entry)
            if not target.is_file():
                raise ManifestError(f"manifest references missing file {target}")
        return manifest


def synthesize_corpus(spec, out_dir, seed=0):
    """Generate the corpus a CorpusSpec describes and return its manifest.

    File contents depend on (spec seeds, seed) only; rebuilding with the
    same arguments reproduces every byte. The first train_fraction of each
    class's files become the train split, the rest the test split.
    """
    seed = check_seed(seed)
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    entries = []
    digits = max(4, len(str(spec.files_per_class - 1)))
    n_train = int(round(spec.train_fraction * spec.files_per_class))
    n_train = min(max(n_train, 1), spec.files_per_class - 1)
    for label, class_seed in zip(spec.labels, spec.class_seeds):
        source = ByteSource.from_seed(class_seed)
        rows = source.generate(
            spec.files_per_class,
            spec.bytes_per_file,
            stream_seed=derive_seed(seed, "content", label, class_seed),
        )
        class_dir = root / label
        class_dir.mkdir(parents=True, exist_ok=True)
        for i in range(spec.files_per_class):
            name = f"{label}/f{i:0{digits}d}.bin"
            (root / name).write_bytes(rows[i].tobytes())
            split = TRAIN_SPLIT if i < n_train else TEST_SPLIT
            entries.append(ManifestEntry(path=name, label=label, split=split))
    manifest = CorpusManifest(root=root, entries=tuple(entries))
    manifest.save()
    return manifest


def plant_payload(container, payload, segments, segment_bytes, seed=0):
    """Splice seeded segments of payload into container at seeded offsets.

    Cuts `segments` chunks of segment_bytes from seeded positions of the
    payload buffer and inserts them at seeded insertion points of the
    container (the container grows; nothing is overwritten). Returns
    (planted bytes, insertion offsets in the output buffer).
    """
    container = np.frombuffer(bytes(container), dtype=np.uint8) if isinstance(
        container, (bytes, bytearray, memoryview)
    ) else np.asarray(container, dtype=np.uint8)
    payload = np.frombuffer(bytes(payload), dtype=np.uint8) if isinstance(
        payload, (bytes, bytearray, memoryview)
    ) else np.asarray(payload, dtype=np.uint8)
    if segments < 1:
        raise ValidationError("need at least one segment")
    if segment_bytes < 1:
        raise ValidationError("segments must be at least one byte")
    if payload.size < segment_bytes:
        raise ValidationError(
            f"payload of {payload.size} bytes cannot supply {segment_bytes}-byte segments"
        )
    rng = np.random.default_rng(check_seed(seed))
    cut_starts = rng.integers(0, payload.size - segment_bytes + 1, size=segments)
    insert_points = np.sort(rng.integers(0, container.size + 1, size=segments))
    pieces = []
    out_offsets = []
    cursor = 0
    grown = 0
    for cut, insert in zip(cut_starts, insert_points):
        pieces.append(container[cursor:insert])
        out_offsets.append(int(insert + grown))
        pieces.append(payload[cut : cut + segment_bytes])
        grown += segment_bytes
        cursor = insert
    pieces.append(container[cursor:])
    return np.concatenate(pieces), out_offsets
