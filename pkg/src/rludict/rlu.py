"""Randomized LU decomposition and its accuracy/failure guarantees.

The factorization sketches the input with a seeded Gaussian matrix, takes a
row-pivoted LU of the sketch to pick rows, projects the input onto the
retained lower-trapezoidal basis, and finishes with a column-pivoted LU of
the projection. The result is a rank-k factorization
``A[row_perm][:, col_perm] ~= lower @ upper`` whose spectral error stays
within a known multiple of the optimal rank-k error, with failure
probability that decays exponentially in the amount of oversampling.
"""

from dataclasses import dataclass
import math

import numpy as np

from .errors import RankCollapseError, ValidationError
from .linalg import (
    as_matrix,
    check_permutation,
    gaussian_matrix,
    lu_column_pivot,
    lu_partial_pivot,
    pseudo_inverse,
    spectral_norm,
)
from ._util import check_seed

# Default oversampling: sketch width l = k + DEFAULT_OVERSAMPLING.
DEFAULT_OVERSAMPLING = 5


@dataclass(frozen=True)
class BoundParameters:
    """Free parameters (beta > 0, gamma > 1) of the error and failure bounds.

    Larger values loosen the error bound but drive the failure probability
    toward zero; the defaults keep both printable at desk scale.
    """

    beta: float = 5.0
    gamma: float = 5.0

    def __post_init__(self):
        if not (self.beta > 0.0 and math.isfinite(self.beta)):
            raise ValidationError(f"beta must be positive and finite, got {self.beta}")
        if not (self.gamma > 1.0 and math.isfinite(self.gamma)):
            raise ValidationError(f"gamma must be > 1 and finite, got {self.gamma}")


@dataclass(frozen=True)
class RandomizedLuResult:
    """Rank-k factorization A[row_perm][:, col_perm] ~= lower @ upper.

    lower is (m, k) unit lower trapezoidal, upper is (k, n) upper
    trapezoidal. rank, sketch_width and seed record how the factorization
    was produced so it can be reproduced bit for bit.
    """

    lower: np.ndarray
    upper: np.ndarray
    row_perm: np.ndarray
    col_perm: np.ndarray
    rank: int
    sketch_width: int
    seed: int


def randomized_lu(a, k, l=None, seed=0):
    """Seeded randomized LU factorization of rank k with sketch width l.

    Parameters
    ----------
    a : (m, n) matrix.
    k : target rank, 1 <= k <= min(m, n).
    l : sketch width, k <= l <= min(m, n); defaults to k + 5.
    seed : seed for the Gaussian sketch.

    Returns
    -------
    RandomizedLuResult. Same inputs and seed give bitwise identical factors.

    Raises
    ------
    RankCollapseError if the sketch runs out of rank before step k, i.e. a
    zero pivot appears among the first k elimination steps. Oversampling
    (larger l) makes this vanishingly unlikely unless the input itself has
    rank below k.
    """
    a = as_matrix(a, "a")
    m, n = a.shape
    limit = min(m, n)
    if not isinstance(k, (int, np.integer)) or isinstance(k, bool):
        raise ValidationError("k must be an integer")
    if not 1 <= k <= limit:
        raise ValidationError(f"k must satisfy 1 <= k <= {limit}, got {k}")
    k = int(k)
    if l is None:
        l = k + DEFAULT_OVERSAMPLING
    if not isinstance(l, (int, np.integer)) or isinstance(l, bool):
        raise ValidationError("l must be an integer")
    if not k <= l <= limit:
        raise ValidationError(f"l must satisfy {k} <= l <= {limit}, got {l}")
    l = int(l)
    seed = check_seed(seed)

    sketch = gaussian_matrix(n, l, seed)
    y = a @ sketch
    row_factors = lu_partial_pivot(y)
    collapsed = [j for j in row_factors.zero_pivots if j < k]
    if collapsed:
        step = min(collapsed)
        raise RankCollapseError(
            f"sketch rank collapsed at elimination step {step} "
            f"(requested rank {k}, sketch width {l})",
            requested_rank=k,
            pivot_step=step,
        )
    row_basis = row_factors.lower[:, :k]
    projected = pseudo_inverse(row_basis) @ a[row_factors.row_perm]
    col_factors = lu_column_pivot(projected)
    lower = row_basis @ col_factors.lower
    return RandomizedLuResult(
        lower=lower,
        upper=col_factors.upper,
        row_perm=row_factors.row_perm,
        col_perm=col_factors.col_perm,
        rank=k,
        sketch_width=l,
        seed=seed,
    )


def reconstruction_error(a, result, tol=1e-10, max_iter=20000):
    """Spectral norm of A[row_perm][:, col_perm] - lower @ upper.

    Uses the package's power iteration rather than a dense SVD so the error
    measurement stays independent of the SVD-based tail routines it is
    compared against in tests.
    """
    a = as_matrix(a, "a")
    row_perm = check_permutation(result.row_perm, a.shape[0], "row_perm")
    col_perm = check_permutation(result.col_perm, a.shape[1], "col_perm")
    residual = a[row_perm][:, col_perm] - result.lower @ result.upper
    return spectral_norm(residual, tol=tol, max_iter=max_iter)


def _check_bound_shape(n, l, k):
    for name, value in (("n", n), ("l", l), ("k", k)):
        if not isinstance(value, (int, np.integer)) or isinstance(value, bool):
            raise ValidationError(f"{name} must be an integer")
    if not 1 <= k <= l <= n:
        raise ValidationError(f"need 1 <= k <= l <= n, got k={k}, l={l}, n={n}")


def error_bound(n, l, k, sigma_tail, params=BoundParameters()):
    """High-probability spectral error bound for the rank-k factorization.

    sigma_tail is the (k+1)-th singular value of the input. The bound is

        (2*sqrt(2*n*l*beta^2*gamma^2 + 1)
         + 2*sqrt(2*n*l)*beta*gamma*(k*(n-k) + 1)) * sigma_tail

    and holds except with probability failure_probability(n, l, k, params).
    """
    _check_bound_shape(n, l, k)
    if not (sigma_tail >= 0.0 and math.isfinite(sigma_tail)):
        raise ValidationError(f"sigma_tail must be finite and >= 0, got {sigma_tail}")
    beta, gamma = params.beta, params.gamma
    factor = 2.0 * math.sqrt(2.0 * n * l * beta * beta * gamma * gamma + 1.0)
    factor += 2.0 * math.sqrt(2.0 * n * l) * beta * gamma * (k * (n - k) + 1.0)
    return factor * sigma_tail


def _exp_clamped(x):
    # math.exp raises OverflowError past ~709.8; saturate instead.
    if x > 709.0:
        return math.inf
    if x < -745.0:
        return 0.0
    return math.exp(x)


def failure_probability(n, l, k, params=BoundParameters()):
    """Lower bound on the probability that error_bound holds.

    Returns

        1 - a/sqrt(2*pi*(l-k+1)) - b/(4*(gamma^2-1)*sqrt(pi*n*gamma^2))

    with a = (e/((l-k+1)*beta))^(l-k+1) and b = (2*gamma^2/e^(gamma^2-1))^n.
    The value can be far below zero for small beta or small oversampling;
    there the guarantee is vacuous, and the caller should grow l or beta.
    Increasing in l for fixed k, beta, gamma.
    """
    _check_bound_shape(n, l, k)
    beta, gamma = params.beta, params.gamma
    width = l - k + 1
    term_sketch = _exp_clamped(width * (1.0 - math.log(width * beta))) / math.sqrt(
        2.0 * math.pi * width
    )
    gamma_sq = gamma * gamma
    log_ratio = math.log(2.0 * gamma_sq) - (gamma_sq - 1.0)
    term_norm = _exp_clamped(n * log_ratio) / (
        4.0 * (gamma_sq - 1.0) * math.sqrt(math.pi * n * gamma_sq)
    )
    return 1.0 - term_sketch - term_norm


def rrlu_tail_bound(n, k, sigma_tail):
    """Deterministic spectral bound for rank-revealing LU truncation.

    Dropping everything past the k-th pivot of a rank-revealing LU of an
    n-column matrix leaves a residual of at most (k*(n-k) + 1) * sigma_tail.
    Grows linearly in n for fixed k.
    """
    for name, value in (("n", n), ("k", k)):
        if not isinstance(value, (int, np.integer)) or isinstance(value, bool):
            raise ValidationError(f"{name} must be an integer")
    if not 1 <= k < n:
        raise ValidationError(f"need 1 <= k < n, got k={k}, n={n}")
    if not (sigma_tail >= 0.0 and math.isfinite(sigma_tail)):
        raise ValidationError(f"sigma_tail must be finite and >= 0, got {sigma_tail}")
    return (k * (n - k) + 1.0) * sigma_tail
