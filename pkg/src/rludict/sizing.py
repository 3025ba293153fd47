"""Choosing dictionary sizes by pairwise misclassification counts.

Growing one class's dictionary makes it explain its own signals better but
also lets it poach signals from other classes, so sizes cannot be tuned per
class in isolation. For each pair of classes this module counts held-out
misclassifications in both directions over a grid of candidate sizes, then
searches for the size assignment minimizing the sum of those pairwise
counts across all pairs.

All randomness (train/validation splits, per-dictionary training seeds) is
derived from one root seed keyed by class label and size, so the same seed
always reproduces the same matrices and the same chosen sizes, regardless
of pair order or of whether pairs are computed one at a time or in a batch.
"""

from dataclasses import dataclass
import json

import numpy as np

from .dictionary import residual_norms, train
from .errors import InfeasibleError, RankCollapseError, ValidationError
from .linalg import as_matrix
from .rlu import DEFAULT_OVERSAMPLING
from ._util import check_seed, derive_seed

INFEASIBLE = -1

# Fraction of each class's signals used to train grid dictionaries; the
# rest are the held-out signals the error counts are measured on.
TRAIN_FRACTION = 0.8

# Exhaustive search is used while grid**classes stays at or below this;
# beyond it the search falls back to coordinate descent with restarts.
EXHAUSTIVE_CELL_LIMIT = 3_000_000

_COORDINATE_RESTARTS = 10
_COORDINATE_MAX_SWEEPS = 100


def numerical_rank(a, energy=0.95):
    """Smallest rank capturing the given fraction of squared spectral energy.

    Counts how many leading singular values are needed before their squared
    sum reaches energy * ||a||_F^2. Returns 0 for an all-zero matrix.
    """
    a = as_matrix(a, "a")
    if not 0.0 < energy <= 1.0:
        raise ValidationError(f"energy must lie in (0, 1], got {energy}")
    values = np.linalg.svd(a, compute_uv=False)
    squared = values * values
    total = float(squared.sum())
    if total == 0.0:
        return 0
    cumulative = np.cumsum(squared)
    return int(np.searchsorted(cumulative, energy * total - 1e-12 * total) + 1)


def default_k_range(class_matrices, count=8, floor=10):
    """Candidate size grid spanning the classes' numerical ranks.

    Geometric progression from min(floor, cap) up to the largest per-class
    numerical rank, capped by the smallest class (sizes beyond a class's
    signal count or dimension can never train). Returns a strictly
    increasing tuple of ints, possibly shorter than count after rounding.
    """
    if not class_matrices:
        raise ValidationError("need at least one class matrix")
    if count < 1:
        raise ValidationError(f"count must be >= 1, got {count}")
    matrices = [as_matrix(m, "class matrix") for m in dict(class_matrices).values()]
    cap = min(min(m.shape) for m in matrices)
    ranks = [max(1, numerical_rank(m)) for m in matrices]
    hi = min(max(ranks), cap)
    lo = min(floor, hi)
    grid = np.geomspace(lo, hi, num=count)
    values = sorted({int(round(v)) for v in grid})
    return tuple(v for v in values if 1 <= v <= cap)


def _split_indices(n, root_seed, label):
    """Deterministic train/validation split of n column indices for a class."""
    if n < 2:
        raise ValidationError(f"class {label!r} needs at least 2 signals to split, got {n}")
    rng = np.random.default_rng(derive_seed(root_seed, "split", label))
    order = rng.permutation(n)
    n_train = int(round(TRAIN_FRACTION * n))
    n_train = min(max(n_train, 1), n - 1)
    return np.sort(order[:n_train]), np.sort(order[n_train:])


def _grid_dictionary(label, train_matrix, k, root_seed, oversampling):
    """Train the (label, k) grid dictionary, or None when infeasible."""
    if k > min(train_matrix.shape):
        return None
    try:
        trained = train(
            {label: train_matrix},
            {label: int(k)},
            seed=derive_seed(root_seed, "dict", label, k),
            oversampling=oversampling,
        )
    except RankCollapseError:
        return None
    return trained[label]


def _check_grid(k_range):
    grid = [int(k) for k in k_range]
    if not grid:
        raise ValidationError("size grid must be nonempty")
    if any(k < 1 for k in grid):
        raise ValidationError("size grid entries must be >= 1")
    if sorted(set(grid)) != grid:
        raise ValidationError("size grid must be strictly increasing")
    return tuple(grid)


@dataclass(frozen=True)
class ErrorMatrix:
    """Pairwise misclassification counts for one class pair over a size grid.

    counts[s, t] is the number of held-out signals of either class that
    cross over when label_a uses grid[s] atoms and label_b uses grid[t];
    INFEASIBLE (-1) marks combinations where a dictionary could not train.
    """

    label_a: str
    label_b: str
    grid: tuple
    counts: np.ndarray

    def cell(self, size_a, size_b):
        """Count at explicit sizes; both must be grid members."""
        try:
            return int(self.counts[self.grid.index(size_a), self.grid.index(size_b)])
        except ValueError as exc:
            raise ValidationError(f"sizes ({size_a}, {size_b}) not on grid {self.grid}") from exc


def _cross_errors(own, other, own_wins_ties):
    """How many signals land on the rival dictionary.

    own_wins_ties reflects the lexicographic tie rule: when the true label
    sorts before the rival, an exact tie stays home and is not an error.
    """
    if own_wins_ties:
        return int(np.sum(other < own))
    return int(np.sum(other <= own))


def _assemble_counts(label_a, label_b, grid, own_a, other_a, own_b, other_b):
    """Build the counts grid from per-size holdout distance vectors.

    own_a[s]: distances of a's holdout to a's size-s dictionary (or None
    when that dictionary is infeasible); other_a[t]: same holdout against
    b's size-t dictionary; own_b / other_b mirror for b's holdout.
    """
    g = len(grid)
    counts = np.full((g, g), INFEASIBLE, dtype=np.int64)
    a_first = label_a < label_b
    for s in range(g):
        if own_a[s] is None:
            continue
        for t in range(g):
            if own_b[t] is None:
                continue
            counts[s, t] = _cross_errors(own_a[s], other_a[t], a_first) + _cross_errors(
                own_b[t], other_b[s], not a_first
            )
    return counts


def _validate_class_pairing(labels, matrices, grid):
    dims = {m.shape[0] for m in matrices.values()}
    if len(dims) != 1:
        raise ValidationError(f"classes disagree on signal dimension: {sorted(dims)}")
    for label in labels:
        if grid[-1] > min(matrices[label].shape):
            raise ValidationError(
                f"largest grid size {grid[-1]} exceeds class {label!r} limit "
                f"{min(matrices[label].shape)}"
            )


def pairwise_error_matrix(
    label_a,
    signals_a,
    label_b,
    signals_b,
    k_range,
    seed=0,
    oversampling=DEFAULT_OVERSAMPLING,
):
    """Cross-misclassification counts for one pair of classes.

    Parameters
    ----------
    label_a, label_b : distinct class labels.
    signals_a, signals_b : (m, n) matrices, one signal per column.
    k_range : strictly increasing candidate sizes; the largest must not
        exceed either class's signal count or the dimension m.
    seed : root seed for splits and per-size training.

    Returns
    -------
    ErrorMatrix whose counts[s, t] sum misclassified held-out signals of
    both classes when a uses k_range[s] and b uses k_range[t] atoms. The
    same seed with swapped arguments yields the transposed counts.
    """
    if label_a == label_b:
        raise ValidationError("pairwise error matrix needs two distinct labels")
    result = all_pairwise_error_matrices(
        {label_a: signals_a, label_b: signals_b}, k_range, seed, oversampling
    )
    matrix = result[(min(label_a, label_b), max(label_a, label_b))]
    if matrix.label_a == label_a:
        return matrix
    return ErrorMatrix(label_a, label_b, matrix.grid, matrix.counts.T.copy())


def all_pairwise_error_matrices(classes, k_range, seed=0, oversampling=DEFAULT_OVERSAMPLING):
    """Error matrices for every unordered pair of classes, sharing training.

    Each (label, size) dictionary is trained exactly once and scored
    against every class's holdout, so an r-class batch costs r, not
    r*(r-1), sets of trainings. Cell values are identical to single-pair
    calls at the same seed. Returns a dict keyed by (label_a, label_b) with
    labels in sorted order; each matrix's axis 0 follows its label_a.
    """
    grid = _check_grid(k_range)
    seed = check_seed(seed)
    labels = sorted(classes)
    if len(labels) < 2:
        raise ValidationError("need at least two classes")
    matrices = {label: as_matrix(classes[label], f"class {label!r}") for label in labels}
    _validate_class_pairing(labels, matrices, grid)

    holdouts = {}
    train_views = {}
    for label in labels:
        train_idx, val_idx = _split_indices(matrices[label].shape[1], seed, label)
        train_views[label] = matrices[label][:, train_idx]
        holdouts[label] = matrices[label][:, val_idx].T

    # distance[target][source][s]: distances of target's holdout signals to
    # source's size-grid[s] dictionary, or None when that dictionary is
    # infeasible. Dictionaries for one source class are freed before the
    # next class trains, keeping peak memory to one class's grid.
    distance = {target: {source: [None] * len(grid) for source in labels} for target in labels}
    for source in labels:
        for s, k in enumerate(grid):
            trained = _grid_dictionary(source, train_views[source], k, seed, oversampling)
            if trained is None:
                continue
            for target in labels:
                distance[target][source][s] = residual_norms(holdouts[target], trained)

    result = {}
    for i, left in enumerate(labels):
        for right in labels[i + 1 :]:
            counts = _assemble_counts(
                left,
                right,
                grid,
                own_a=distance[left][left],
                other_a=distance[left][right],
                own_b=distance[right][right],
                other_b=distance[right][left],
            )
            result[(left, right)] = ErrorMatrix(left, right, grid, counts)
    return result


@dataclass(frozen=True)
class SizeAssignment:
    """Chosen size per class and the pairwise error total it achieves."""

    sizes: dict
    total_error: int


def find_optimal_agreement(matrices, k_range=None):
    """Pick one size per class minimizing the summed pairwise error counts.

    Parameters
    ----------
    matrices : ErrorMatrix instances covering every unordered pair of the
        classes involved, all sharing one size grid.
    k_range : optional expected size grid; when given it must match the
        grid the matrices were built on.

    Returns
    -------
    SizeAssignment. Ties break toward the smaller total of sizes, then
    lexicographically by per-class size in sorted label order.

    Uses exhaustive enumeration while grid**classes is small enough,
    otherwise coordinate descent from several deterministic starts; the
    fallback is a heuristic and may return a local minimum.

    Raises
    ------
    InfeasibleError when every full assignment hits an infeasible cell.
    """
    matrices = list(matrices)
    if not matrices:
        raise ValidationError("need at least one error matrix")
    labels = sorted({m.label_a for m in matrices} | {m.label_b for m in matrices})
    grid = matrices[0].grid
    for m in matrices:
        if m.grid != grid:
            raise ValidationError("error matrices disagree on the size grid")
    if k_range is not None:
        wanted = tuple(int(k) for k in k_range)
        if wanted != grid:
            raise ValidationError(
                f"requested size grid {wanted} does not match the matrices' grid {grid}"
            )
    by_pair = {}
    for m in matrices:
        key = (min(m.label_a, m.label_b), max(m.label_a, m.label_b))
        if key in by_pair:
            raise ValidationError(f"duplicate error matrix for pair {key}")
        by_pair[key] = m
    index = {label: i for i, label in enumerate(labels)}
    pair_tables = []  # (i, j, table) with i < j, table axis 0 -> labels[i]
    for i, left in enumerate(labels):
        for j in range(i + 1, len(labels)):
            right = labels[j]
            m = by_pair.get((left, right))
            if m is None:
                raise ValidationError(f"missing error matrix for pair ({left}, {right})")
            table = m.counts if m.label_a == left else m.counts.T
            table = np.where(table == INFEASIBLE, np.inf, table.astype(np.float64))
            pair_tables.append((i, j, table))

    g, r = len(grid), len(labels)
    if g**r <= EXHAUSTIVE_CELL_LIMIT:
        choice, total = _search_exhaustive(pair_tables, g, r, grid)
    else:
        choice, total = _search_coordinate(pair_tables, g, r, grid)
    if not np.isfinite(total):
        raise InfeasibleError("every complete size assignment hits an infeasible cell")
    sizes = {label: int(grid[choice[index[label]]]) for label in labels}
    return SizeAssignment(sizes=sizes, total_error=int(total))


def _search_exhaustive(pair_tables, g, r, grid):
    total = np.zeros((g,) * r, dtype=np.float64)
    for i, j, table in pair_tables:
        shape = [1] * r
        shape[i] = g
        shape[j] = g
        total += table.reshape(shape)
    best = float(total.min())
    if not np.isfinite(best):
        return (0,) * r, best
    candidates = np.argwhere(total == best)
    if len(candidates) == 1:
        return tuple(int(v) for v in candidates[0]), best
    grid_arr = np.asarray(grid, dtype=np.int64)
    sums = grid_arr[candidates].sum(axis=1)
    candidates = candidates[sums == sums.min()]
    ordered = sorted(tuple(int(v) for v in row) for row in candidates)
    return ordered[0], best


def _assignment_total(pair_tables, choice):
    return float(sum(table[choice[i], choice[j]] for i, j, table in pair_tables))


def _search_coordinate(pair_tables, g, r, grid):
    marginals = np.zeros((r, g), dtype=np.float64)
    for i, j, table in pair_tables:
        marginals[i] += table.sum(axis=1)
        marginals[j] += table.sum(axis=0)
    starts = [tuple(int(np.argmin(marginals[i])) for i in range(r))]
    rng = np.random.default_rng(0x51ED)
    for _ in range(_COORDINATE_RESTARTS - 1):
        starts.append(tuple(int(v) for v in rng.integers(0, g, size=r)))

    best_choice, best_total = None, np.inf
    for start in starts:
        choice = list(start)
        for _ in range(_COORDINATE_MAX_SWEEPS):
            changed = False
            for i in range(r):
                scores = np.zeros(g, dtype=np.float64)
                for a, b, table in pair_tables:
                    if a == i:
                        scores += table[:, choice[b]]
                    elif b == i:
                        scores += table[choice[a], :]
                pick = int(np.argmin(scores))  # argmin takes the smallest index on ties
                if pick != choice[i] and scores[pick] < scores[choice[i]]:
                    choice[i] = pick
                    changed = True
            if not changed:
                break
        total = _assignment_total(pair_tables, choice)
        key = (total, sum(grid[c] for c in choice), tuple(choice))
        best_key = (
            (best_total, sum(grid[c] for c in best_choice), tuple(best_choice))
            if best_choice is not None
            else (np.inf, np.inf, ())
        )
        if best_choice is None or key < best_key:
            best_choice, best_total = tuple(choice), total
    return best_choice, best_total


def evaluate_assignment(classes, sizes, seed=0, oversampling=DEFAULT_OVERSAMPLING):
    """Held-out misclassification count with all classes active at once.

    Uses the same splits and per-size training seeds as
    pairwise_error_matrix, but classifies each held-out signal against the
    full dictionary set instead of one rival at a time. Reported alongside
    the pairwise total so the gap between the pairwise objective and the
    full multi-class error stays visible.
    """
    seed = check_seed(seed)
    labels = sorted(classes)
    if len(labels) < 2:
        raise ValidationError("need at least two classes")
    matrices = {label: as_matrix(classes[label], f"class {label!r}") for label in labels}
    dictionaries = {}
    holdouts = {}
    for label in labels:
        signals = matrices[label]
        train_idx, val_idx = _split_indices(signals.shape[1], seed, label)
        trained = _grid_dictionary(
            label, signals[:, train_idx], int(sizes[label]), seed, oversampling
        )
        if trained is None:
            raise InfeasibleError(f"class {label!r} cannot train at size {sizes[label]}")
        dictionaries[label] = trained
        holdouts[label] = signals[:, val_idx].T
    errors = 0
    for label in labels:
        table = np.column_stack(
            [residual_norms(holdouts[label], dictionaries[other]) for other in labels]
        )
        winners = np.argmin(table, axis=1)  # first index wins ties: lexicographic
        errors += int(np.sum(winners != labels.index(label)))
    return errors


def error_matrix_to_csv(matrix):
    """Render an ErrorMatrix as CSV text; rows are label_a sizes."""
    header = ",".join([f"{matrix.label_a}\\{matrix.label_b}"] + [str(k) for k in matrix.grid])
    lines = [header]
    for s, k in enumerate(matrix.grid):
        row = [str(k)] + [str(int(v)) for v in matrix.counts[s]]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def error_matrix_to_json(matrix, colormap="viridis"):
    """Render an ErrorMatrix as a JSON document ready for heat-map plotting.

    Counts are kept verbatim and also normalized to [0, 1] over the
    feasible cells (null where infeasible) so a plotter can feed them
    straight into the named colormap.
    """
    counts = matrix.counts
    feasible = counts != INFEASIBLE
    peak = int(counts[feasible].max()) if feasible.any() else 0
    normalized = [
        [
            (float(counts[s, t]) / peak if peak > 0 else 0.0) if feasible[s, t] else None
            for t in range(len(matrix.grid))
        ]
        for s in range(len(matrix.grid))
    ]
    document = {
        "label_a": matrix.label_a,
        "label_b": matrix.label_b,
        "grid": list(matrix.grid),
        "counts": [[int(v) for v in row] for row in counts],
        "infeasible": INFEASIBLE,
        "normalized": normalized,
        "colormap": colormap,
    }
    return json.dumps(document, indent=2, sort_keys=True) + "\n"
