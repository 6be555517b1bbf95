"""Regularized SVD: alternating and closed-form solvers, matrix completion and Top-N evaluation."""

from .completion import (
    CompletionConfig,
    CompletionResult,
    ObservedMatrix,
    dx_residual,
    em_complete,
    initialize_fill,
    masked_objective,
    predict_scores,
)
from .core import (
    RsvdConfig,
    RsvdSolution,
    ShrinkageSpectrum,
    dv_residual,
    objective_j1,
    rsvd_als,
    rsvd_closed_form,
    shrink_singular_values,
    subspace_residuals,
    update_u,
    update_v,
)
from .datasets import (
    DatasetStats,
    MaskedDataset,
    MaskPlan,
    RatingTriples,
    binarize,
    filter_users_by_rating_count,
    load_csv_triples,
    load_movielens_100k,
    mask_out,
)
from .errors import DecompositionError, InputError, ParseError, RsvdError, SolveError
from .evaluation import (
    EvalReport,
    PRPoint,
    TopNResult,
    average_runs,
    evaluate,
    evaluate_scores,
    f1_measure,
    precision_recall,
    top_n,
)
from .linalg import QrFactors, SvdFactors, frobenius_sq, masked_sq_norm, thin_qr, thin_svd

__version__ = "0.1.0"
