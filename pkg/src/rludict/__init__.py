"""Randomized LU dictionaries for content-based file type identification.

The package builds low-rank per-class dictionaries with a seeded randomized
LU decomposition and classifies byte content (whole files, sampled
fragments, or scan windows) by the distance of its feature vector to each
class's dictionary span.
"""

from .bundle import load_bundle, save_bundle
from .dictionary import (
    ClassificationReport,
    Dictionary,
    classify_fragments,
    classify_signal,
    detect_embedded,
    dist,
    residual_norms,
    train,
)
from .errors import (
    BundleFormatError,
    DimensionMismatchError,
    InfeasibleError,
    InputTooShortError,
    ManifestError,
    NoConvergenceWarning,
    RankCollapseError,
    RankDeficientError,
    RludictError,
    ShortInputWarning,
    ValidationError,
)
from .features import (
    FragmentSpec,
    bfd_cdd,
    dbfd,
    extract,
    markov_walk,
    sample_fragments,
)
from .linalg import (
    gaussian_matrix,
    lu_column_pivot,
    lu_partial_pivot,
    pseudo_inverse,
    singular_value_tail,
    spectral_norm,
)
from .rlu import (
    BoundParameters,
    RandomizedLuResult,
    error_bound,
    failure_probability,
    randomized_lu,
    reconstruction_error,
    rrlu_tail_bound,
)
from .sizing import (
    ErrorMatrix,
    SizeAssignment,
    all_pairwise_error_matrices,
    default_k_range,
    evaluate_assignment,
    find_optimal_agreement,
    numerical_rank,
    pairwise_error_matrix,
)

__version__ = "0.1.0"
