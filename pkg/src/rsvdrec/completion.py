"""Matrix completion by alternating imputation and RSVD refits.

Each EM step clamps the observed entries to the data, fills the missing
entries from the current low-rank model, and refits the factors on the
completed matrix. The masked objective being decreased is

    ||X - U V^T||_Omega^2 + lam ||U||_F^2 + lam ||V||_F^2

which is the plain rank-k SVD problem when ``lam = 0``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .core import RsvdConfig, objective_j1, rsvd_als, rsvd_closed_form
from .errors import InputError

logger = logging.getLogger(__name__)

SOLVERS = ("closed_form", "als")
FILL_MODES = ("column_mean", "row_mean", "global_mean")


@dataclass(frozen=True, eq=False)
class ObservedMatrix:
    """Partially observed ``n_users x m_items`` matrix.

    Entries are stored as parallel index/value arrays; ``mask`` is the
    boolean indicator of the observed set.
    """

    n_users: int
    m_items: int
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.int64)
        cols = np.asarray(self.cols, dtype=np.int64)
        values = np.asarray(self.values, dtype=np.float64)
        if not (rows.shape == cols.shape == values.shape) or rows.ndim != 1:
            raise InputError("rows, cols and values must be 1-D arrays of equal length")
        if self.n_users < 1 or self.m_items < 1:
            raise InputError("matrix must have at least one row and one column")
        if len(rows) == 0:
            raise InputError("no observed entries")
        if rows.min() < 0 or rows.max() >= self.n_users or cols.min() < 0 or cols.max() >= self.m_items:
            raise InputError("observed index out of range")
        if not np.all(np.isfinite(values)):
            raise InputError("observed values must be finite")
        flat = rows * self.m_items + cols
        if len(np.unique(flat)) != len(flat):
            raise InputError("duplicate (row, col) entries")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_dense(cls, X, mask=None) -> "ObservedMatrix":
        X = np.asarray(X, dtype=np.float64)
        mask = np.ones(X.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
        rows, cols = np.nonzero(mask)
        return cls(X.shape[0], X.shape[1], rows, cols, X[rows, cols])

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_users, self.m_items)

    @property
    def n_observed(self) -> int:
        return len(self.values)

    @property
    def mask(self) -> np.ndarray:
        m = np.zeros(self.shape, dtype=bool)
        m[self.rows, self.cols] = True
        return m

    @property
    def omega(self) -> set[tuple[int, int]]:
        return set(zip(self.rows.tolist(), self.cols.tolist()))

    @property
    def entries(self) -> list[tuple[int, int, float]]:
        return list(zip(self.rows.tolist(), self.cols.tolist(), self.values.tolist()))

    def dense(self, fill: float = 0.0) -> np.ndarray:
        out = np.full(self.shape, fill, dtype=np.float64)
        out[self.rows, self.cols] = self.values
        return out

    def row_items(self, i: int) -> np.ndarray:
        return np.sort(self.cols[self.rows == i])

    def row_counts(self) -> np.ndarray:
        return np.bincount(self.rows, minlength=self.n_users)


@dataclass(frozen=True)
class CompletionConfig:
    inner: RsvdConfig
    solver: str = "closed_form"
    em_max_iter: int = 200
    em_tol: float = 1e-4
    init_fill: str = "column_mean"

    def __post_init__(self):
        if self.solver not in SOLVERS:
            raise InputError(f"solver must be one of {SOLVERS}, got {self.solver!r}")
        if self.init_fill not in FILL_MODES:
            raise InputError(f"init_fill must be one of {FILL_MODES}, got {self.init_fill!r}")
        if int(self.em_max_iter) != self.em_max_iter or self.em_max_iter < 1:
            raise InputError("em_max_iter must be >= 1")
        if not self.em_tol > 0:
            raise InputError("em_tol must be positive")


@dataclass(frozen=True)
class CompletionResult:
    U: np.ndarray
    V: np.ndarray
    X_hat: np.ndarray
    dx_history: list[float]
    em_iterations: int
    converged: bool
    model_dx_history: list[float] = field(default_factory=list)
    objective_history: list[float] = field(default_factory=list)
    inner_iterations: list[int] = field(default_factory=list)


def masked_objective(observed: ObservedMatrix, U, V, lam: float) -> float:
    """Squared error on the observed entries plus the ridge penalty on both factors."""
    U = np.asarray(U, dtype=np.float64)
    V = np.asarray(V, dtype=np.float64)
    if U.ndim != 2 or V.ndim != 2 or U.shape[0] != observed.n_users or V.shape[0] != observed.m_items or U.shape[1] != V.shape[1]:
        raise InputError(f"dimension mismatch: {observed.shape} vs U {U.shape}, V {V.shape}")
    pred = np.einsum("ij,ij->i", U[observed.rows], V[observed.cols])
    r = observed.values - pred
    return float(r @ r) + lam * float(np.sum(U * U) + np.sum(V * V))


def initialize_fill(observed: ObservedMatrix, mode: str = "column_mean") -> np.ndarray:
    """Dense matrix with missing entries set to a row, column or global average.

    Rows/columns without any observation fall back to the global mean.
    """
    if mode not in FILL_MODES:
        raise InputError(f"unknown fill mode {mode!r}")
    if observed.n_observed == 0:
        raise InputError("no observed entries")
    gmean = float(observed.values.mean())
    if mode == "global_mean":
        fill = np.full(observed.shape, gmean)
    else:
        axis_idx, size = (
            (observed.cols, observed.m_items) if mode == "column_mean" else (observed.rows, observed.n_users)
        )
        sums = np.bincount(axis_idx, weights=observed.values, minlength=size)
        counts = np.bincount(axis_idx, minlength=size)
        means = np.where(counts > 0, sums / np.maximum(counts, 1), gmean)
        fill = np.broadcast_to(means[None, :] if mode == "column_mean" else means[:, None], observed.shape)
    X = np.array(fill, dtype=np.float64)
    X[observed.rows, observed.cols] = observed.values
    return X


def dx_residual(X_now, X_prev, measure_set, n_set: int | None = None) -> float:
    """Root-mean-square change between two iterates over ``measure_set``.

    ``measure_set`` is a boolean mask or a collection of ``(i, j)`` pairs.
    """
    X_now = np.asarray(X_now, dtype=np.float64)
    X_prev = np.asarray(X_prev, dtype=np.float64)
    if X_now.shape != X_prev.shape:
        raise InputError(f"shape mismatch {X_now.shape} vs {X_prev.shape}")
    if isinstance(measure_set, np.ndarray) and measure_set.dtype == bool:
        diff = (X_now - X_prev)[measure_set]
    else:
        idx = np.asarray(list(measure_set), dtype=np.int64).reshape(-1, 2)
        diff = X_now[idx[:, 0], idx[:, 1]] - X_prev[idx[:, 0], idx[:, 1]]
    size = len(diff) if n_set is None else n_set
    if size < 1 or len(diff) == 0:
        raise InputError("measure set is empty")
    return float(np.sqrt(diff @ diff) / np.sqrt(size))


def em_complete(observed: ObservedMatrix, config: CompletionConfig) -> CompletionResult:
    """Impute-and-refit until the imputed entries stop moving.

    ``dx_history`` tracks the RMS change of the imputed (missing) entries;
    ``model_dx_history`` the RMS change of the model on the observed set.
    """
    inner = config.inner
    n, m = observed.shape
    if inner.k > min(n, m):
        raise InputError(f"k={inner.k} exceeds min(n, m)={min(n, m)}")
    mask = observed.mask
    missing = ~mask
    n_missing = int(missing.sum())
    X_t = initialize_fill(observed, config.init_fill)
    model_prev = X_t
    lam = inner.lam

    dx_history: list[float] = []
    model_dx: list[float] = []
    objectives: list[float] = []
    inner_iters: list[int] = []
    V_prev = None
    G_prev = None
    converged = False
    for t in range(1, config.em_max_iter + 1):
        if config.solver == "closed_form":
            sol = rsvd_closed_form(X_t, inner.k, lam, init=G_prev)
            norms = np.linalg.norm(sol.V, axis=0)
            G_prev = sol.V / np.where(norms > 0, norms, 1.0)
        else:
            cfg = replace(inner, canonicalize=False)
            sol = rsvd_als(X_t, cfg, init_V=V_prev)
            V_prev = sol.V
        inner_iters.append(sol.iterations)
        objectives.append(objective_j1(X_t, sol.U, sol.V, lam))
        Z = sol.U @ sol.V.T
        X_next = np.where(mask, X_t, Z)
        dx = dx_residual(X_next, X_t, missing, n_missing) if n_missing else 0.0
        dx_history.append(dx)
        model_dx.append(dx_residual(Z, model_prev, mask, observed.n_observed))
        model_prev = Z
        X_t = X_next
        logger.debug("EM iteration %d: dX=%.3e J1=%.6e", t, dx, objectives[-1])
        if dx <= config.em_tol:
            converged = True
            break
    return CompletionResult(
        sol.U, sol.V, X_t, dx_history, t, converged, model_dx, objectives, inner_iters
    )


def predict_scores(result: CompletionResult, user: int) -> np.ndarray:
    """Row ``user`` of ``U V^T``."""
    n = result.U.shape[0]
    if not 0 <= user < n:
        raise InputError(f"user {user} out of range [0, {n})")
    return result.V @ result.U[user]
