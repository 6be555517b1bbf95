"""Regularized SVD solvers.

The objective is

    J1(U, V) = ||X - U V^T||_F^2 + lam ||U||_F^2 + lam ||V||_F^2

with ``U`` of shape ``n x k`` and ``V`` of shape ``m x k``. Two solvers are
provided: alternating ridge updates (:func:`rsvd_als`) and the exact global
minimizer obtained by shrinking the top-k singular values
(:func:`rsvd_closed_form`).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.linalg import LinAlgError

from .errors import InputError, SolveError
from .linalg import SvdFactors, as_matrix, frobenius_sq, thin_svd

logger = logging.getLogger(__name__)

JITTER = 1e-12


@dataclass(frozen=True)
class RsvdConfig:
    """Settings for :func:`rsvd_als`.

    ``canonicalize`` rotates the converged pair so that ``V^T V`` is
    diagonal; the objective and ``U V^T`` are unchanged by the rotation.
    """

    k: int
    lam: float = 0.0
    max_iter: int = 500
    tol: float = 1e-8
    seed: int = 0
    canonicalize: bool = True

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise InputError(f"k must be a positive integer, got {self.k}")
        if not np.isfinite(self.lam) or self.lam < 0:
            raise InputError(f"lambda must be nonnegative, got {self.lam}")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise InputError(f"max_iter must be >= 1, got {self.max_iter}")
        if not self.tol > 0:
            raise InputError(f"tol must be positive, got {self.tol}")


@dataclass(frozen=True)
class RsvdSolution:
    U: np.ndarray
    V: np.ndarray
    objective: float
    objective_history: list[float] = field(default_factory=list)
    dv_history: list[float] = field(default_factory=list)
    iterations: int = 0
    method: str = "als"
    status: str = "converged"
    subspace_history: list[tuple[float, float]] = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.status != "max_iter"

    def product(self) -> np.ndarray:
        return self.U @ self.V.T


@dataclass(frozen=True)
class ShrinkageSpectrum:
    omega: np.ndarray
    effective_rank: int


def _check_factors(X: np.ndarray, U: np.ndarray, V: np.ndarray) -> None:
    n, m = X.shape
    if U.ndim != 2 or V.ndim != 2:
        raise InputError("U and V must be 2-D")
    if U.shape[0] != n or V.shape[0] != m or U.shape[1] != V.shape[1]:
        raise InputError(
            f"dimension mismatch: X {X.shape}, U {U.shape}, V {V.shape}"
        )


def objective_j1(X, U, V, lam: float) -> float:
    """Regularized reconstruction objective J1."""
    X = as_matrix(X)
    U = np.asarray(U, dtype=np.float64)
    V = np.asarray(V, dtype=np.float64)
    _check_factors(X, U, V)
    return frobenius_sq(X - U @ V.T) + lam * (frobenius_sq(U) + frobenius_sq(V))


def _ridge_solve(gram: np.ndarray, rhs: np.ndarray, lam: float) -> np.ndarray:
    """Solve ``Y (gram + lam I) = rhs`` for ``Y`` with a Cholesky factorization."""
    k = gram.shape[0]
    A = gram + lam * np.eye(k)
    try:
        c = cho_factor(A, lower=True, check_finite=False)
    except LinAlgError:
        if lam > 0 or np.linalg.matrix_rank(gram) < k:
            raise SolveError("ridge system is singular (lambda = 0, rank-deficient factor)")
        # numerically semidefinite at lambda = 0
        A = A + JITTER * max(np.trace(A) / k, 1.0) * np.eye(k)
        try:
            c = cho_factor(A, lower=True, check_finite=False)
        except LinAlgError:
            raise SolveError("ridge system is singular") from None
    return cho_solve(c, rhs.T, check_finite=False).T


def update_u(X, V, lam: float) -> np.ndarray:
    """``U = X V (V^T V + lam I)^{-1}``, the minimizer of J1 over U."""
    X = as_matrix(X)
    V = np.asarray(V, dtype=np.float64)
    if V.ndim != 2 or V.shape[0] != X.shape[1]:
        raise InputError(f"V has shape {V.shape}, expected ({X.shape[1]}, k)")
    return _ridge_solve(V.T @ V, X @ V, lam)


def update_v(X, U, lam: float) -> np.ndarray:
    """``V = X^T U (U^T U + lam I)^{-1}``, the minimizer of J1 over V."""
    X = as_matrix(X)
    U = np.asarray(U, dtype=np.float64)
    if U.ndim != 2 or U.shape[0] != X.shape[0]:
        raise InputError(f"U has shape {U.shape}, expected ({X.shape[0]}, k)")
    return _ridge_solve(U.T @ U, X.T @ U, lam)


def dv_residual(V_now, V_prev) -> float:
    """Frobenius distance between consecutive V iterates."""
    V_now = np.asarray(V_now, dtype=np.float64)
    V_prev = np.asarray(V_prev, dtype=np.float64)
    if V_now.shape != V_prev.shape:
        raise InputError(f"shape mismatch {V_now.shape} vs {V_prev.shape}")
    return float(np.linalg.norm(V_now - V_prev))


def subspace_residuals(U_t, V_t, svd: SvdFactors) -> tuple[float, float]:
    """Squared distances of ``U_t`` from span(F) and ``V_t`` from span(G).

    With orthonormal ``F`` and ``G`` the least-squares coefficients reduce to
    ``F^T U_t`` and ``G^T V_t``.
    """
    U_t = np.asarray(U_t, dtype=np.float64)
    V_t = np.asarray(V_t, dtype=np.float64)
    F, G = svd.F, svd.G
    if U_t.ndim != 2 or V_t.ndim != 2 or U_t.shape[0] != F.shape[0] or V_t.shape[0] != G.shape[0]:
        raise InputError(
            f"dimension mismatch: U {U_t.shape} vs F {F.shape}, V {V_t.shape} vs G {G.shape}"
        )
    if svd.rank < U_t.shape[1]:
        raise InputError(f"svd has {svd.rank} columns, need at least {U_t.shape[1]}")
    r1 = frobenius_sq(U_t - F @ (F.T @ U_t))
    r2 = frobenius_sq(V_t - G @ (G.T @ V_t))
    return r1, r2


def shrink_singular_values(sigma, lam: float, k: int) -> ShrinkageSpectrum:
    """``omega_i = sqrt(max(sigma_i - lam, 0))`` for the leading ``k`` values."""
    sigma = np.asarray(sigma, dtype=np.float64)[:k]
    omega = np.sqrt(np.maximum(sigma - lam, 0.0))
    return ShrinkageSpectrum(omega, int(np.count_nonzero(omega > 0)))


def rsvd_closed_form(X, k: int, lam: float, svd: SvdFactors | None = None, init=None) -> RsvdSolution:
    """Global minimizer of J1: ``U = F_k Omega``, ``V = G_k Omega``.

    A precomputed ``svd`` (at least ``k`` triplets) may be passed; ``init``
    warm-starts the truncated SVD.
    """
    X = as_matrix(X)
    if lam < 0:
        raise InputError(f"lambda must be nonnegative, got {lam}")
    if svd is None:
        svd = thin_svd(X, k, init=init)
    elif svd.rank < k:
        raise InputError(f"svd has {svd.rank} triplets, need {k}")
    spec = shrink_singular_values(svd.sigma, lam, k)
    U = svd.F[:, :k] * spec.omega
    V = svd.G[:, :k] * spec.omega
    J = objective_j1(X, U, V, lam)
    status = "degenerate" if spec.effective_rank == 0 else "converged"
    if status == "degenerate":
        logger.warning("lambda=%g >= sigma_1: all factor columns are zero", lam)
    return RsvdSolution(U, V, J, [J], [], 1, "closed_form", status)


def canonicalize_factors(U: np.ndarray, V: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Balanced form ``U = P sqrt(S)``, ``V = Q sqrt(S)`` of the product ``U V^T = P S Q^T``.

    ``U V^T`` is unchanged and ``|U|^2 + |V|^2`` can only drop (it becomes
    twice the nuclear norm of the product), so J1 never increases. At an ALS
    fixed point with ``lam > 0`` the factors are already balanced and this is
    a rotation ``(U C, V C)``. Afterwards ``U^T U = V^T V = S`` is diagonal.
    """
    su, sv = thin_svd(U), thin_svd(V)
    core = (su.sigma[:, None] * (su.G.T @ sv.G)) * sv.sigma[None, :]
    sc = thin_svd(core)
    root = np.sqrt(sc.sigma)
    return (su.F @ sc.F) * root, (sv.F @ sc.G) * root


def rsvd_als(
    X,
    config: RsvdConfig,
    init_V=None,
    reference: SvdFactors | None = None,
) -> RsvdSolution:
    """Alternating ridge least squares from a random (or given) V.

    Stops when the relative change of J1 or the V step ``dV`` falls below
    ``config.tol``. Hitting ``max_iter`` is reported through ``status``,
    not raised. When ``reference`` is given, the subspace residuals of every
    iterate against it are recorded.
    """
    X = as_matrix(X)
    n, m = X.shape
    k, lam = config.k, config.lam
    if k > min(n, m):
        raise InputError(f"k={k} exceeds min(rows, cols)={min(n, m)}")
    if init_V is None:
        rng = np.random.default_rng(config.seed)
        V = rng.uniform(-1.0, 1.0, size=(m, k))
    else:
        V = np.array(init_V, dtype=np.float64)
        if V.shape != (m, k):
            raise InputError(f"init_V has shape {V.shape}, expected {(m, k)}")

    objective_history: list[float] = []
    dv_history: list[float] = []
    subspace_history: list[tuple[float, float]] = []
    status = "max_iter"
    for it in range(1, config.max_iter + 1):
        U = update_u(X, V, lam)
        V_new = update_v(X, U, lam)
        J = objective_j1(X, U, V_new, lam)
        dv = dv_residual(V_new, V)
        V = V_new
        if objective_history and J > objective_history[-1] + 1e-12:
            logger.debug("J1 rose by %g at iteration %d", J - objective_history[-1], it)
        objective_history.append(J)
        dv_history.append(dv)
        if reference is not None:
            subspace_history.append(subspace_residuals(U, V, reference))
        if dv <= config.tol:
            status = "converged"
            break
        if it > 1 and abs(objective_history[-2] - J) <= config.tol * max(1.0, objective_history[-2]):
            status = "converged"
            break
    else:
        logger.warning("ALS stopped at max_iter=%d without converging", config.max_iter)

    if config.canonicalize:
        U, V = canonicalize_factors(U, V)
    J = objective_j1(X, U, V, lam)
    if status == "converged" and frobenius_sq(U) == 0 and frobenius_sq(V) == 0:
        status = "degenerate"
    return RsvdSolution(
        U, V, J, objective_history, dv_history, it, "als", status, subspace_history
    )
