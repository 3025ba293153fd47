"""Shared fixture builders for the test suite.

These construct inputs with known structure (exact spectra, exact ranks,
orthogonal class subspaces). They may use numpy.linalg freely; the
independence requirements apply to the oracles in oracles.py, not to
fixture construction.
"""

import numpy as np


def seeded_rng(seed):
    return np.random.default_rng(seed)


def random_orthonormal(rows, cols, rng):
    """Matrix with orthonormal columns, rows >= cols."""
    q, r = np.linalg.qr(rng.standard_normal((rows, cols)))
    # fix signs so the construction is unambiguous
    return q * np.sign(np.diag(r))


def matrix_with_spectrum(rows, cols, spectrum, seed):
    """Matrix whose singular values are exactly the given spectrum."""
    spectrum = np.asarray(spectrum, dtype=np.float64)
    r = spectrum.size
    if r > min(rows, cols):
        raise ValueError("spectrum longer than min(rows, cols)")
    rng = seeded_rng(seed)
    left = random_orthonormal(rows, r, rng)
    right = random_orthonormal(cols, r, rng)
    return (left * spectrum) @ right.T


def rank_k_matrix(rows, cols, k, seed, scale=1.0):
    """Random matrix of exact rank k (with probability one)."""
    if not 1 <= k <= min(rows, cols):
        raise ValueError("need 1 <= k <= min(rows, cols)")
    rng = seeded_rng(seed)
    return scale * rng.standard_normal((rows, k)) @ rng.standard_normal((k, cols))


def geometric_spectrum(count, ratio=0.5):
    """count values 1, ratio, ratio^2, ..."""
    return ratio ** np.arange(count, dtype=np.float64)


def subspace_signals(dim, rank, count, seed, noise=0.0):
    """count signals spanning a random rank-dimensional subspace of R^dim.

    Columns are random combinations of an orthonormal basis, optionally
    plus white noise. Returns (signals matrix of shape (dim, count), basis).
    """
    rng = seeded_rng(seed)
    basis = random_orthonormal(dim, rank, rng)
    coeffs = rng.standard_normal((rank, count))
    signals = basis @ coeffs
    if noise > 0.0:
        signals = signals + noise * rng.standard_normal((dim, count))
    return signals, basis
