"""Estimator-style wrappers around feature extraction and classification.

ByteFeatureExtractor is a stateless transformer from byte buffers to
feature-vector rows; SubspaceDictionaryClassifier fits one dictionary per
class on feature rows and predicts by smallest subspace distance. Both
follow the usual conventions: constructor arguments are stored verbatim,
fitted state lives in trailing-underscore attributes, and get_params /
set_params / clone work as expected.
"""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin

from .dictionary import residual_norms, train
from .errors import ValidationError
from .features import SCHEME_DIMENSIONS, check_scheme, extract
from .pipeline import resolve_sizes
from .rlu import DEFAULT_OVERSAMPLING


class ByteFeatureExtractor(TransformerMixin, BaseEstimator):
    """Transform byte buffers into feature-vector rows.

    Parameters
    ----------
    scheme : one of "bfd-cdd", "dbfd", "mw".

    The transformer holds no fitted state beyond validation; transform
    accepts any iterable of bytes-like buffers (or 1-D uint8 arrays) and
    returns one row per buffer.
    """

    def __init__(self, scheme="bfd-cdd"):
        self.scheme = scheme

    def fit(self, X, y=None):
        check_scheme(self.scheme)
        self.n_features_out_ = SCHEME_DIMENSIONS[self.scheme]
        return self

    def transform(self, X):
        check_scheme(self.scheme)
        rows = [extract(self.scheme, buffer) for buffer in X]
        if not rows:
            raise ValidationError("cannot transform an empty batch")
        return np.vstack(rows)


class SubspaceDictionaryClassifier(ClassifierMixin, BaseEstimator):
    """Classify feature rows by distance to per-class learned subspaces.

    Parameters
    ----------
    k : dictionary size policy: a positive int used for every class, a
        mapping from label to size, or "auto" to search sizes by pairwise
        held-out misclassification counts.
    k_grid : optional explicit candidate grid for the "auto" search.
    oversampling : sketch surplus passed through to dictionary training.
    seed : root seed; fitting is deterministic given (X, y, params).

    Attributes (after fit)
    ----------------------
    classes_ : sorted label array.
    dictionaries_ : label -> Dictionary mapping.
    sizes_ : label -> chosen size mapping.
    assignment_ : SizeAssignment from the auto search, or None.
    """

    def __init__(self, k="auto", k_grid=None, oversampling=DEFAULT_OVERSAMPLING, seed=0):
        self.k = k
        self.k_grid = k_grid
        self.oversampling = oversampling
        self.seed = seed

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y)
        if X.ndim != 2:
            raise ValidationError(f"X must be 2-D (rows are signals), got ndim={X.ndim}")
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise ValidationError("y must be 1-D with one label per row of X")
        labels = np.unique(y)
        if labels.size < 2:
            raise ValidationError("need at least two classes to fit")
        classes = {str(label): X[y == label].T for label in labels}
        sizes, assignment, _ = resolve_sizes(
            classes, self.k, self.seed, self.k_grid, self.oversampling
        )
        self.classes_ = labels
        self.dictionaries_ = train(
            classes, sizes, self.seed, oversampling=self.oversampling
        )
        self.sizes_ = sizes
        self.assignment_ = assignment
        self.n_features_in_ = X.shape[1]
        return self

    def _check_fitted(self):
        if not hasattr(self, "dictionaries_"):
            raise ValidationError("this classifier has not been fitted yet")

    def distances(self, X):
        """Distance of every row to every class subspace, (n, n_classes)."""
        self._check_fitted()
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features_in_:
            raise ValidationError(
                f"X must be 2-D with {self.n_features_in_} columns, got shape {X.shape}"
            )
        columns = [
            residual_norms(X, self.dictionaries_[str(label)]) for label in self.classes_
        ]
        return np.column_stack(columns)

    def decision_function(self, X):
        """Higher means more confident; the negated subspace distances."""
        return -self.distances(X)

    def predict(self, X):
        # classes_ is sorted and argmin takes the first index on ties, so
        # ties break to the lexicographically smallest label.
        table = self.distances(X)
        return self.classes_[np.argmin(table, axis=1)]
