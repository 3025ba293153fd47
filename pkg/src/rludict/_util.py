"""Small shared helpers: seed derivation and ordered parallel mapping."""

from concurrent.futures import ThreadPoolExecutor
import hashlib

from .errors import ValidationError

_U64 = 1 << 64


def check_seed(seed, name="seed"):
    """Validate that seed is an integer in [0, 2**64)."""
    if isinstance(seed, bool) or not isinstance(seed, (int,)):
        raise ValidationError(f"{name} must be an integer, got {type(seed).__name__}")
    if not 0 <= seed < _U64:
        raise ValidationError(f"{name} must be in [0, 2**64), got {seed}")
    return int(seed)


def derive_seed(root, *parts):
    """Derive a child seed from a root seed and a label path.

    Hash based so the result is stable across platforms and runs; distinct
    part tuples give independent child seeds, which keeps per-class and
    per-file random streams decoupled from iteration order.
    """
    root = check_seed(root, "root seed")
    h = hashlib.blake2b(digest_size=8)
    h.update(root.to_bytes(8, "little"))
    for part in parts:
        h.update(str(part).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "little")


def map_ordered(fn, items, workers=1):
    """Apply fn to items, preserving input order in the result list.

    With workers > 1 the calls run on a thread pool; results still come back
    in input order, so downstream reductions stay deterministic.
    """
    items = list(items)
    if workers is None or workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
