"""On-disk format for trained dictionaries.

A single dictionary is stored as an archive::

    magic "RLUD" | payload | checksum (u64 LE)

with payload::

    version (u16 LE) | scheme code (u8) | label length (u16 LE) |
    label (UTF-8) | rows m (u64 LE) | atoms k (u64 LE) |
    train seed (u64 LE) | basis entries (m*k float64 LE, row major)

The checksum is the first 8 bytes of BLAKE2b over the payload. A bundle
prefixes one or more archives with::

    magic "RLUB" | version (u16 LE) | archive count (u32 LE)

Only the basis travels; the pseudo-inverse and projector are rebuilt on
load, which reproduces distances bit for bit because they are deterministic
functions of the basis bytes. All integers are little endian regardless of
platform.
"""

import hashlib
import struct

import numpy as np

from .dictionary import Dictionary
from .errors import BundleFormatError, ValidationError
from .features import SCHEME_CODES, SCHEME_CODE_NONE, SCHEME_FROM_CODE

ARCHIVE_MAGIC = b"RLUD"
BUNDLE_MAGIC = b"RLUB"
FORMAT_VERSION = 1


def _checksum(payload):
    return hashlib.blake2b(payload, digest_size=8).digest()


def dump_archive(dictionary):
    """Serialize one dictionary to archive bytes."""
    label = dictionary.label.encode("utf-8")
    if len(label) > 0xFFFF:
        raise ValidationError("dictionary label too long to serialize")
    scheme_code = SCHEME_CODE_NONE
    if dictionary.scheme is not None:
        if dictionary.scheme not in SCHEME_CODES:
            raise ValidationError(f"cannot serialize unknown scheme {dictionary.scheme!r}")
        scheme_code = SCHEME_CODES[dictionary.scheme]
    m, k = dictionary.basis.shape
    payload = struct.pack("<HBH", FORMAT_VERSION, scheme_code, len(label))
    payload += label
    payload += struct.pack("<QQQ", m, k, dictionary.train_seed)
    payload += np.ascontiguousarray(dictionary.basis, dtype="<f8").tobytes()
    return ARCHIVE_MAGIC + payload + _checksum(payload)


def parse_archive(blob, offset=0):
    """Parse one archive starting at offset; return (Dictionary, next offset)."""
    if blob[offset : offset + 4] != ARCHIVE_MAGIC:
        raise BundleFormatError(f"bad archive magic at offset {offset}")
    pos = offset + 4
    try:
        version, scheme_code, label_len = struct.unpack_from("<HBH", blob, pos)
    except struct.error as exc:
        raise BundleFormatError("truncated archive header") from exc
    if version != FORMAT_VERSION:
        raise BundleFormatError(f"unsupported archive version {version}")
    pos += 5
    label = blob[pos : pos + label_len].decode("utf-8")
    pos += label_len
    try:
        m, k, train_seed = struct.unpack_from("<QQQ", blob, pos)
    except struct.error as exc:
        raise BundleFormatError("truncated archive dimensions") from exc
    pos += 24
    end = pos + m * k * 8
    if end + 8 > len(blob):
        raise BundleFormatError("truncated archive matrix or checksum")
    payload = blob[offset + 4 : end]
    stored = blob[end : end + 8]
    if _checksum(payload) != stored:
        raise BundleFormatError(f"archive checksum mismatch for label {label!r}")
    if scheme_code == SCHEME_CODE_NONE:
        scheme = None
    elif scheme_code in SCHEME_FROM_CODE:
        scheme = SCHEME_FROM_CODE[scheme_code]
    else:
        raise BundleFormatError(f"unknown scheme code {scheme_code}")
    if m < 1 or k < 1 or k > m:
        raise BundleFormatError(f"archive dimensions {m}x{k} are invalid")
    basis = np.frombuffer(blob[pos:end], dtype="<f8").astype(np.float64).reshape(m, k)
    dictionary = Dictionary.from_basis(label, basis, train_seed, scheme)
    return dictionary, end + 8


def dump_bundle(dictionaries):
    """Serialize a label-keyed mapping of dictionaries to bundle bytes."""
    if not dictionaries:
        raise ValidationError("cannot serialize an empty bundle")
    parts = [BUNDLE_MAGIC, struct.pack("<HI", FORMAT_VERSION, len(dictionaries))]
    for label in sorted(dictionaries):
        parts.append(dump_archive(dictionaries[label]))
    return b"".join(parts)


def parse_bundle(blob):
    """Parse bundle bytes back into a label-keyed dictionary mapping."""
    if blob[:4] != BUNDLE_MAGIC:
        raise BundleFormatError("not a dictionary bundle: bad magic")
    try:
        version, count = struct.unpack_from("<HI", blob, 4)
    except struct.error as exc:
        raise BundleFormatError("truncated bundle header") from exc
    if version != FORMAT_VERSION:
        raise BundleFormatError(f"unsupported bundle version {version}")
    if count < 1:
        raise BundleFormatError("bundle holds no archives")
    result = {}
    pos = 10
    for _ in range(count):
        dictionary, pos = parse_archive(blob, pos)
        if dictionary.label in result:
            raise BundleFormatError(f"duplicate label {dictionary.label!r} in bundle")
        result[dictionary.label] = dictionary
    if pos != len(blob):
        raise BundleFormatError("trailing bytes after final archive")
    return result


def save_bundle(path, dictionaries):
    """Write a dictionary bundle to path."""
    blob = dump_bundle(dictionaries)
    with open(path, "wb") as handle:
        handle.write(blob)


def load_bundle(path):
    """Read a dictionary bundle from path."""
    with open(path, "rb") as handle:
        blob = handle.read()
    return parse_bundle(blob)
