"""Byte-level feature maps and fragment sampling.

Three feature schemes turn a byte buffer into a fixed-length float64 vector:

- ``bfd-cdd`` (512 dims): byte value frequencies concatenated with
  frequencies of absolute differences between consecutive bytes.
- ``dbfd`` (65536 dims): frequencies of consecutive byte pairs.
- ``mw`` (65536 dims): a flattened 256x256 first-order transition matrix,
  each observed row normalized to sum to one.

All counts are normalized by how many positions were counted, so vectors
from inputs of different sizes are directly comparable. Extraction is pure:
the same bytes always give the same vector, and permuting the byte alphabet
permutes dbfd/mw coordinates without changing any value.

The module also reads and writes feature dump files, a simple container for
extracted vectors tagged with their scheme, source path, and fragment
offset, in either a binary or a sparse text form.
"""

from dataclasses import dataclass
import io
import struct
import warnings

import numpy as np

from .errors import (
    BundleFormatError,
    InputTooShortError,
    ShortInputWarning,
    ValidationError,
)
from ._util import check_seed

SCHEME_BFD_CDD = "bfd-cdd"
SCHEME_DBFD = "dbfd"
SCHEME_MW = "mw"

SCHEME_DIMENSIONS = {
    SCHEME_BFD_CDD: 512,
    SCHEME_DBFD: 65536,
    SCHEME_MW: 65536,
}

# Wire codes for scheme tags in binary formats; 255 means "not recorded".
SCHEME_CODES = {SCHEME_BFD_CDD: 0, SCHEME_DBFD: 1, SCHEME_MW: 2}
SCHEME_FROM_CODE = {code: name for name, code in SCHEME_CODES.items()}
SCHEME_CODE_NONE = 255

FEATURE_MAGIC = b"RLUF"
FEATURE_FORMAT_VERSION = 1


def check_scheme(scheme):
    """Validate a scheme tag and return it unchanged."""
    if scheme not in SCHEME_DIMENSIONS:
        known = ", ".join(sorted(SCHEME_DIMENSIONS))
        raise ValidationError(f"unknown feature scheme {scheme!r}, expected one of: {known}")
    return scheme


def as_byte_array(data, name="data"):
    """View bytes-like input (or a uint8 array) as a 1-D uint8 array."""
    if isinstance(data, np.ndarray):
        if data.dtype != np.uint8 or data.ndim != 1:
            raise ValidationError(f"{name} array must be 1-D uint8, got {data.dtype} ndim={data.ndim}")
        return data
    if isinstance(data, (bytes, bytearray, memoryview)):
        return np.frombuffer(data, dtype=np.uint8)
    raise ValidationError(f"{name} must be bytes-like or a uint8 array, got {type(data).__name__}")


def _require_length(arr, minimum, name):
    if arr.size < minimum:
        raise InputTooShortError(f"{name} needs at least {minimum} bytes, got {arr.size}")


def bfd_cdd(data):
    """Byte frequencies stacked with consecutive-difference frequencies.

    Entries 0..255 hold the fraction of bytes equal to each value; entries
    256..511 hold the fraction of adjacent pairs whose absolute difference
    equals each value. Each half sums to one. Needs at least 2 bytes.
    """
    arr = as_byte_array(data)
    _require_length(arr, 2, "bfd-cdd input")
    out = np.empty(512, dtype=np.float64)
    out[:256] = np.bincount(arr, minlength=256) / arr.size
    diffs = np.abs(arr[1:].astype(np.int16) - arr[:-1].astype(np.int16))
    out[256:] = np.bincount(diffs, minlength=256) / (arr.size - 1)
    return out


def dbfd(data):
    """Frequencies of consecutive byte pairs, flattened to 65536 entries.

    Entry 256*a + b is the fraction of adjacent positions holding the pair
    (a, b); the vector sums to one. Needs at least 2 bytes.
    """
    arr = as_byte_array(data)
    _require_length(arr, 2, "dbfd input")
    pairs = arr[:-1].astype(np.int32) * 256 + arr[1:]
    return np.bincount(pairs, minlength=65536) / (arr.size - 1)


def markov_walk(data):
    """Row-normalized first-order byte transition matrix, flattened.

    Entry 256*a + b is the empirical probability of the next byte being b
    given the current byte is a. Rows of byte values that never occur as a
    predecessor stay all zero; every other row sums to one. Needs at least
    2 bytes.
    """
    arr = as_byte_array(data)
    _require_length(arr, 2, "mw input")
    pairs = arr[:-1].astype(np.int32) * 256 + arr[1:]
    counts = np.bincount(pairs, minlength=65536).astype(np.float64).reshape(256, 256)
    row_sums = counts.sum(axis=1)
    observed = row_sums > 0
    counts[observed] /= row_sums[observed, None]
    return counts.ravel()


_EXTRACTORS = {
    SCHEME_BFD_CDD: bfd_cdd,
    SCHEME_DBFD: dbfd,
    SCHEME_MW: markov_walk,
}


def extract(scheme, data):
    """Extract a feature vector from bytes under the named scheme."""
    check_scheme(scheme)
    return _EXTRACTORS[scheme](data)


@dataclass(frozen=True)
class FragmentSpec:
    """How to sample fragments from a buffer: how many, how long, what seed."""

    count: int = 10
    length: int = 1500
    seed: int = 0

    def __post_init__(self):
        if not isinstance(self.count, (int, np.integer)) or self.count < 1:
            raise ValidationError(f"fragment count must be a positive integer, got {self.count}")
        if not isinstance(self.length, (int, np.integer)) or self.length < 2:
            raise ValidationError(f"fragment length must be an integer >= 2, got {self.length}")
        check_seed(self.seed, "fragment seed")


def sample_offsets(size, spec):
    """Seeded fragment start offsets for a buffer of the given size.

    Drawn uniformly with replacement, so fragments may overlap. A buffer
    shorter than one fragment yields the single offset 0.
    """
    if size < spec.length:
        return np.zeros(1, dtype=np.int64)
    rng = np.random.default_rng(spec.seed)
    return rng.integers(0, size - spec.length + 1, size=spec.count)


def sample_fragments(data, spec):
    """Sample spec.count fragments of spec.length bytes at seeded offsets.

    Offsets come from sample_offsets, so fragments may overlap. If the
    input is shorter than one fragment, a ShortInputWarning is issued and
    the whole input comes back as a single fragment. Returned arrays are
    views into the input buffer.
    """
    arr = as_byte_array(data)
    if arr.size < spec.length:
        warnings.warn(
            f"input of {arr.size} bytes is shorter than fragment length "
            f"{spec.length}; using the whole input as one fragment",
            ShortInputWarning,
            stacklevel=2,
        )
        return [arr]
    offsets = sample_offsets(arr.size, spec)
    return [arr[offset : offset + spec.length] for offset in offsets]


def contiguous_windows(data, length):
    """Split a buffer into consecutive non-overlapping windows of length bytes.

    The tail shorter than one window is dropped; a buffer shorter than one
    window comes back whole as a single window.
    """
    arr = as_byte_array(data)
    if not isinstance(length, (int, np.integer)) or length < 2:
        raise ValidationError(f"window length must be an integer >= 2, got {length}")
    if arr.size < length:
        return [arr]
    full = arr.size // length
    return [arr[i * length : (i + 1) * length] for i in range(full)]


@dataclass(frozen=True)
class FeatureRecord:
    """One extracted vector with its provenance: scheme, source, offset."""

    scheme: str
    source: str
    offset: int
    values: np.ndarray


def _check_record(record):
    check_scheme(record.scheme)
    values = np.asarray(record.values, dtype=np.float64)
    expected = SCHEME_DIMENSIONS[record.scheme]
    if values.ndim != 1 or values.size != expected:
        raise ValidationError(
            f"record for scheme {record.scheme} must hold {expected} values, "
            f"got shape {values.shape}"
        )
    if record.offset < 0:
        raise ValidationError(f"record offset must be >= 0, got {record.offset}")
    return values


def write_feature_records(path, records, form="binary"):
    """Write feature records to path in 'binary' or 'text' form."""
    records = list(records)
    if form == "binary":
        payload = _records_to_binary(records)
        with open(path, "wb") as handle:
            handle.write(payload)
    elif form == "text":
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(_records_to_text(records))
    else:
        raise ValidationError(f"unknown feature dump form {form!r}, expected binary or text")


def read_feature_records(path):
    """Read feature records written by write_feature_records (either form)."""
    with open(path, "rb") as handle:
        blob = handle.read()
    if blob[:4] == FEATURE_MAGIC:
        return _records_from_binary(blob)
    return _records_from_text(blob.decode("utf-8"))


def _records_to_binary(records):
    out = io.BytesIO()
    out.write(FEATURE_MAGIC)
    out.write(struct.pack("<HI", FEATURE_FORMAT_VERSION, len(records)))
    for record in records:
        values = _check_record(record)
        source = record.source.encode("utf-8")
        out.write(struct.pack("<BHQ", SCHEME_CODES[record.scheme], len(source), record.offset))
        out.write(source)
        out.write(values.astype("<f8").tobytes())
    return out.getvalue()


def _records_from_binary(blob):
    if len(blob) < 10 or blob[:4] != FEATURE_MAGIC:
        raise BundleFormatError("not a feature dump: bad magic")
    version, count = struct.unpack_from("<HI", blob, 4)
    if version != FEATURE_FORMAT_VERSION:
        raise BundleFormatError(f"unsupported feature dump version {version}")
    records = []
    pos = 10
    for _ in range(count):
        try:
            code, source_len, offset = struct.unpack_from("<BHQ", blob, pos)
        except struct.error as exc:
            raise BundleFormatError("truncated feature dump record header") from exc
        pos += 11
        if code not in SCHEME_FROM_CODE:
            raise BundleFormatError(f"unknown scheme code {code} in feature dump")
        scheme = SCHEME_FROM_CODE[code]
        source = blob[pos : pos + source_len].decode("utf-8")
        pos += source_len
        dim = SCHEME_DIMENSIONS[scheme]
        end = pos + dim * 8
        if end > len(blob):
            raise BundleFormatError("truncated feature dump values")
        values = np.frombuffer(blob[pos:end], dtype="<f8").astype(np.float64)
        pos = end
        records.append(FeatureRecord(scheme, source, int(offset), values))
    if pos != len(blob):
        raise BundleFormatError("trailing bytes after final feature dump record")
    return records


def _records_to_text(records):
    lines = []
    for record in records:
        values = _check_record(record)
        nonzero = np.nonzero(values)[0]
        pairs = " ".join(f"{int(i)}:{float(values[i])!r}" for i in nonzero)
        lines.append(f"{record.scheme}\t{record.source}\t{record.offset}\t{pairs}")
    return "\n".join(lines) + ("\n" if lines else "")


def _records_from_text(text):
    records = []
    for number, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise BundleFormatError(f"feature dump line {number}: expected 4 tab-separated fields")
        scheme, source, offset_text, pairs_text = parts
        check_scheme(scheme)
        dim = SCHEME_DIMENSIONS[scheme]
        values = np.zeros(dim, dtype=np.float64)
        if pairs_text:
            for token in pairs_text.split(" "):
                index_text, _, value_text = token.partition(":")
                try:
                    index = int(index_text)
                    value = float(value_text)
                except ValueError as exc:
                    raise BundleFormatError(f"feature dump line {number}: bad pair {token!r}") from exc
                if not 0 <= index < dim:
                    raise BundleFormatError(f"feature dump line {number}: index {index} out of range")
                values[index] = value
        try:
            offset = int(offset_text)
        except ValueError as exc:
            raise BundleFormatError(f"feature dump line {number}: bad offset {offset_text!r}") from exc
        records.append(FeatureRecord(scheme, source, offset, values))
    return records
