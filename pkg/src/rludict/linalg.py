"""Dense linear algebra kernels used across the package.

Matrices are two dimensional numpy arrays of float64 in row major order.
Every function treats its inputs as read only and returns fresh arrays, so
the kernels are safe to call from worker threads. Row and column
permutations are carried as index vectors: ``perm`` represents the
permutation with ``(P @ A)[i] == A[perm[i]]`` for rows and
``(A @ Q)[:, j] == A[:, perm[j]]`` for columns, i.e. ``A[perm]`` and
``A[:, perm]`` apply them directly.
"""

from dataclasses import dataclass
import warnings

import numpy as np

from .errors import (
    DimensionMismatchError,
    NoConvergenceWarning,
    RankDeficientError,
    ValidationError,
)
from ._util import check_seed

# Relative threshold on the triangular-factor diagonal below which a matrix
# is treated as rank deficient when inverting.
RANK_TOLERANCE = 1e-12


def as_matrix(a, name="matrix"):
    """Coerce to a finite 2-D float64 array with at least one row and column."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ValidationError(f"{name} must be 2-D, got ndim={arr.ndim}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValidationError(f"{name} must be nonempty, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} must contain only finite values")
    return arr


def as_vector(x, name="vector"):
    """Coerce to a finite 1-D float64 array with at least one entry."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ValidationError(f"{name} must be 1-D, got ndim={arr.ndim}")
    if arr.size < 1:
        raise ValidationError(f"{name} must be nonempty")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} must contain only finite values")
    return arr


def check_permutation(perm, size=None, name="permutation"):
    """Validate an index-vector permutation and return it as int64."""
    arr = np.asarray(perm)
    if arr.ndim != 1:
        raise ValidationError(f"{name} must be 1-D")
    if arr.size == 0:
        raise ValidationError(f"{name} must be nonempty")
    if not np.issubdtype(arr.dtype, np.integer):
        raise ValidationError(f"{name} must hold integers, got dtype {arr.dtype}")
    arr = arr.astype(np.int64)
    n = arr.size
    if size is not None and n != size:
        raise DimensionMismatchError(f"{name} has length {n}, expected {size}")
    seen = np.zeros(n, dtype=bool)
    if arr.min() < 0 or arr.max() >= n:
        raise ValidationError(f"{name} entries must lie in [0, {n})")
    seen[arr] = True
    if not seen.all():
        raise ValidationError(f"{name} is not a permutation (repeated entries)")
    return arr


def inverse_permutation(perm):
    """Inverse of an index-vector permutation: A[perm][inv] == A."""
    perm = check_permutation(perm)
    return np.argsort(perm, kind="stable")


def gaussian_matrix(rows, cols, seed):
    """Seeded matrix with i.i.d. standard normal entries.

    The same (rows, cols, seed) triple always yields the same matrix; the
    stream is drawn from numpy's seeded default generator.
    """
    if not isinstance(rows, (int, np.integer)) or not isinstance(cols, (int, np.integer)):
        raise ValidationError("rows and cols must be integers")
    if rows < 1 or cols < 1:
        raise ValidationError(f"rows and cols must be positive, got {rows}x{cols}")
    check_seed(seed)
    rng = np.random.default_rng(seed)
    return rng.standard_normal((int(rows), int(cols)))


@dataclass(frozen=True)
class LuFactors:
    """Result of a pivoted LU factorization.

    ``lower`` is unit lower trapezoidal, ``upper`` upper trapezoidal, and
    ``A[row_perm][:, col_perm] == lower @ upper`` up to roundoff. One of the
    two permutations is the identity depending on which side was pivoted.
    ``zero_pivots`` lists elimination steps whose pivot was exactly zero;
    when it is nonempty the factorization of a row-pivoted matrix is still
    exact, while a column-pivoted one may not reproduce the rank-deficient
    rows (callers decide whether that matters).
    """

    lower: np.ndarray
    upper: np.ndarray
    row_perm: np.ndarray
    col_perm: np.ndarray
    zero_pivots: tuple = ()

    def reconstruct(self):
        """Return lower @ upper, the permuted input the factors represent."""
        return self.lower @ self.upper


def lu_partial_pivot(a):
    """LU factorization with partial (row) pivoting for a tall matrix.

    Parameters
    ----------
    a : (m, n) array with m >= n.

    Returns
    -------
    LuFactors with lower (m, n) unit lower trapezoidal, upper (n, n) upper
    triangular, row_perm of length m, and identity col_perm, satisfying
    a[row_perm] == lower @ upper up to roundoff. A zero pivot at step j is
    recorded in zero_pivots; the remaining column below it is zero by
    construction, so the identity still holds exactly.
    """
    a = as_matrix(a, "a")
    m, n = a.shape
    if m < n:
        raise ValidationError(f"need rows >= cols for row pivoting, got {m}x{n}")
    work = a.copy()
    perm = np.arange(m, dtype=np.int64)
    zero_pivots = []
    for j in range(n):
        pivot = j + int(np.argmax(np.abs(work[j:, j])))
        if work[pivot, j] == 0.0:
            zero_pivots.append(j)
            continue
        if pivot != j:
            work[[j, pivot]] = work[[pivot, j]]
            perm[[j, pivot]] = perm[[pivot, j]]
        if j + 1 < m:
            work[j + 1 :, j] /= work[j, j]
            if j + 1 < n:
                work[j + 1 :, j + 1 :] -= work[j + 1 :, j : j + 1] * work[j : j + 1, j + 1 :]
    lower = np.tril(work[:, :n], -1)
    lower[np.arange(n), np.arange(n)] = 1.0
    upper = np.triu(work[:n, :])
    return LuFactors(lower, upper, perm, np.arange(n, dtype=np.int64), tuple(zero_pivots))


def lu_column_pivot(b):
    """LU factorization with column pivoting for a wide matrix.

    Parameters
    ----------
    b : (k, n) array with k <= n.

    Returns
    -------
    LuFactors with lower (k, k) unit lower triangular, upper (k, n) upper
    trapezoidal, identity row_perm, and col_perm of length n, satisfying
    b[:, col_perm] == lower @ upper up to roundoff. The pivot at step j is
    the largest-magnitude entry of row j among the remaining columns; if
    that entire row segment is zero the step is recorded in zero_pivots and
    skipped, and entries below the zero pivot are not eliminated (the
    reconstruction identity then degrades in that column).
    """
    b = as_matrix(b, "b")
    k, n = b.shape
    if k > n:
        raise ValidationError(f"need rows <= cols for column pivoting, got {k}x{n}")
    work = b.copy()
    perm = np.arange(n, dtype=np.int64)
    zero_pivots = []
    for j in range(k):
        pivot = j + int(np.argmax(np.abs(work[j, j:])))
        if work[j, pivot] == 0.0:
            zero_pivots.append(j)
            work[j + 1 :, j] = 0.0
            continue
        if pivot != j:
            work[:, [j, pivot]] = work[:, [pivot, j]]
            perm[[j, pivot]] = perm[[pivot, j]]
        if j + 1 < k:
            work[j + 1 :, j] /= work[j, j]
            work[j + 1 :, j + 1 :] -= work[j + 1 :, j : j + 1] * work[j : j + 1, j + 1 :]
    lower = np.tril(work[:, :k], -1)
    lower[np.arange(k), np.arange(k)] = 1.0
    upper = np.triu(work)
    return LuFactors(lower, upper, np.arange(k, dtype=np.int64), perm, tuple(zero_pivots))


def pseudo_inverse(a):
    """Moore-Penrose pseudo-inverse of a full-column-rank tall matrix.

    Computed from the thin QR factorization (pinv = R^-1 Q^T), which is
    exact for full column rank and cheaper than an SVD. Raises
    RankDeficientError when the triangular factor's diagonal indicates the
    columns are numerically dependent.
    """
    a = as_matrix(a, "a")
    m, k = a.shape
    if m < k:
        raise ValidationError(f"need rows >= cols, got {m}x{k}")
    q, r = np.linalg.qr(a, mode="reduced")
    diag = np.abs(np.diag(r))
    largest = diag.max()
    if largest == 0.0 or diag.min() < RANK_TOLERANCE * largest:
        raise RankDeficientError(
            f"matrix of shape {m}x{k} is numerically rank deficient "
            f"(diagonal ratio {diag.min():.3e} / {largest:.3e})"
        )
    return np.linalg.solve(r, q.T)


def spectral_norm(a, tol=1e-6, max_iter=1000):
    """Largest singular value, estimated by power iteration on a^T a.

    Starts from the normalized all-ones vector and restarts from a seeded
    random vector if an iterate lands in the null space. Stops when two
    successive estimates agree to relative tol; if the iteration budget runs
    out first, a NoConvergenceWarning is issued and the latest (lower bound)
    estimate is returned. A zero matrix returns 0.0 directly.
    """
    a = as_matrix(a, "a")
    if tol <= 0.0:
        raise ValidationError(f"tol must be positive, got {tol}")
    if max_iter < 1:
        raise ValidationError(f"max_iter must be >= 1, got {max_iter}")
    if not np.any(a):
        return 0.0
    n = a.shape[1]
    v = np.full(n, 1.0 / np.sqrt(n))
    estimate = 0.0
    restarts = 0
    for _ in range(max_iter):
        w = a @ v
        norm_w = float(np.linalg.norm(w))
        if norm_w == 0.0:
            # v sits in the null space; restart from seeded noise
            restarts += 1
            if restarts > 8:
                return 0.0
            rng = np.random.default_rng(restarts)
            v = rng.standard_normal(n)
            v /= np.linalg.norm(v)
            continue
        v = a.T @ w
        norm_v = float(np.linalg.norm(v))
        if norm_v == 0.0:
            return norm_w
        v /= norm_v
        if abs(norm_w - estimate) <= tol * norm_w:
            return norm_w
        estimate = norm_w
    warnings.warn(
        f"power iteration did not reach tol={tol} within {max_iter} iterations",
        NoConvergenceWarning,
        stacklevel=2,
    )
    return estimate


def singular_value_tail(a, k):
    """The (k+1)-th largest singular value sigma_{k+1} of a.

    This is the optimal rank-k approximation error in the spectral norm.
    Requires 0 <= k < min(a.shape).
    """
    a = as_matrix(a, "a")
    limit = min(a.shape)
    if not isinstance(k, (int, np.integer)):
        raise ValidationError("k must be an integer")
    if not 0 <= k < limit:
        raise ValidationError(f"k must satisfy 0 <= k < {limit}, got {k}")
    values = np.linalg.svd(a, compute_uv=False)
    return float(values[k])
