"""Dense matrix helpers and the decompositions the solvers are built on.

Matrices are plain 2-D ``float64`` numpy arrays. :func:`as_matrix` is the
single entry point that validates them (shape, finiteness).

Two SVD routes live here:

* a one-sided (Hestenes) Jacobi SVD, used for exact thin decompositions;
* a block subspace iteration with a Rayleigh-Ritz step, used for the top-k
  triplets of large matrices. Its small projected problem is solved by the
  Jacobi routine, so no LAPACK SVD is involved in either path.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import DecompositionError, InputError, ParseError

_EPS = np.finfo(np.float64).eps

# Above this smaller dimension (and with k well below it) thin_svd switches to
# subspace iteration.
JACOBI_MAX_DIM = 128


def as_matrix(X, name: str = "X") -> np.ndarray:
    """Validate ``X`` as a finite 2-D float matrix with at least one row and column."""
    A = np.asarray(X, dtype=np.float64)
    if A.ndim != 2:
        raise InputError(f"{name} must be 2-D, got shape {A.shape}")
    if A.shape[0] < 1 or A.shape[1] < 1:
        raise InputError(f"{name} must have at least one row and one column")
    if not np.all(np.isfinite(A)):
        raise InputError(f"{name} contains non-finite entries")
    return A


@dataclass(frozen=True)
class SvdFactors:
    """Thin SVD ``X = F diag(sigma) G^T``.

    Columns of ``F`` and ``G`` are orthonormal, ``sigma`` is nonincreasing and
    nonnegative.
    """

    F: np.ndarray
    sigma: np.ndarray
    G: np.ndarray

    def __post_init__(self):
        r = len(self.sigma)
        if self.F.ndim != 2 or self.G.ndim != 2 or self.F.shape[1] != r or self.G.shape[1] != r:
            raise InputError(f"inconsistent SVD shapes: F {self.F.shape}, sigma ({r},), G {self.G.shape}")

    @property
    def rank(self) -> int:
        return len(self.sigma)

    def truncate(self, k: int) -> "SvdFactors":
        return SvdFactors(self.F[:, :k], self.sigma[:k], self.G[:, :k])

    def reconstruct(self) -> np.ndarray:
        return (self.F * self.sigma) @ self.G.T


@dataclass(frozen=True)
class QrFactors:
    """Thin QR ``V = Q R`` with ``R`` upper triangular and a nonnegative diagonal."""

    Q: np.ndarray
    R: np.ndarray


# --------------------------------------------------------------------------
# norms


def frobenius_sq(A) -> float:
    """Sum of squared entries."""
    A = np.asarray(A, dtype=np.float64)
    return float(np.sum(A * A))


def _omega_mask(shape: tuple[int, int], omega) -> np.ndarray:
    if isinstance(omega, np.ndarray) and omega.dtype == bool:
        if omega.shape != shape:
            raise InputError(f"mask shape {omega.shape} does not match {shape}")
        return omega
    mask = np.zeros(shape, dtype=bool)
    pairs = list(omega)
    if not pairs:
        return mask
    idx = np.asarray(pairs, dtype=np.int64)
    if idx.ndim != 2 or idx.shape[1] != 2:
        raise InputError("omega must be a collection of (row, col) pairs")
    i, j = idx[:, 0], idx[:, 1]
    if i.min() < 0 or j.min() < 0 or i.max() >= shape[0] or j.max() >= shape[1]:
        raise InputError(f"omega contains an index outside shape {shape}")
    mask[i, j] = True
    return mask


def masked_sq_norm(A, omega: Iterable[tuple[int, int]] | np.ndarray) -> float:
    """Sum of ``A[i, j]**2`` over the index set ``omega``.

    ``omega`` is either a collection of ``(i, j)`` pairs or a boolean mask of
    the same shape as ``A``.
    """
    A = np.asarray(A, dtype=np.float64)
    mask = _omega_mask(A.shape, omega)
    vals = A[mask]
    return float(np.sum(vals * vals))


# --------------------------------------------------------------------------
# QR


def thin_qr(V, rank_tol: float = 1e-12) -> QrFactors:
    """Thin QR by Gram-Schmidt with one full reorthogonalization pass.

    Raises :class:`DecompositionError` naming the first column that is
    (numerically) dependent on its predecessors.
    """
    V = as_matrix(V, "V")
    m, k = V.shape
    if k > m:
        raise InputError(f"thin_qr needs cols <= rows, got {V.shape}")
    scale = np.linalg.norm(V)
    Q = np.zeros((m, k))
    R = np.zeros((k, k))
    for j in range(k):
        w = V[:, j].copy()
        for _ in range(2):
            c = Q[:, :j].T @ w
            w -= Q[:, :j] @ c
            R[:j, j] += c
        nrm = np.linalg.norm(w)
        if nrm <= rank_tol * max(scale, np.finfo(float).tiny):
            raise DecompositionError(f"matrix is rank deficient at column {j}")
        R[j, j] = nrm
        Q[:, j] = w / nrm
    return QrFactors(Q, R)


# --------------------------------------------------------------------------
# SVD


@lru_cache(maxsize=64)
def _round_robin(p: int) -> tuple[tuple[np.ndarray, np.ndarray], ...]:
    """Tournament schedule: every column pair meets once, disjoint pairs per round."""
    players = list(range(p)) + ([-1] if p % 2 else [])
    q = len(players)
    rounds = []
    for _ in range(q - 1):
        pairs = [(players[i], players[q - 1 - i]) for i in range(q // 2)]
        pairs = [(a, b) if a < b else (b, a) for a, b in pairs if a >= 0 and b >= 0]
        if pairs:
            arr = np.array(pairs, dtype=np.intp)
            rounds.append((arr[:, 0], arr[:, 1]))
        players = [players[0], players[-1]] + players[1:-1]
    return tuple(rounds)


def _hestenes(A: np.ndarray, max_sweeps: int = 80) -> tuple[np.ndarray, np.ndarray]:
    """Orthogonalize the columns of ``A`` (n >= p) by plane rotations.

    Returns ``(B, W)`` with ``B = A W``, ``W`` orthogonal and the columns of
    ``B`` mutually orthogonal.
    """
    B = A.copy()
    p = B.shape[1]
    W = np.eye(p)
    tol = _EPS * np.sqrt(B.shape[0])
    schedule = _round_robin(p)
    for _ in range(max_sweeps):
        rotated = False
        norms_sq = float(np.max(np.einsum("ij,ij->j", B, B)))
        for I, J in schedule:
            bi, bj = B[:, I], B[:, J]
            alpha = np.einsum("ij,ij->j", bi, bi)
            beta = np.einsum("ij,ij->j", bj, bj)
            gamma = np.einsum("ij,ij->j", bi, bj)
            # columns at rounding level are left alone; they get completed later
            floor = (_EPS * np.sqrt(max(alpha.max(), beta.max(), norms_sq))) ** 2
            active = (np.abs(gamma) > tol * np.sqrt(alpha * beta)) & (np.minimum(alpha, beta) > floor)
            if not active.any():
                continue
            rotated = True
            I, J = I[active], J[active]
            alpha, beta, gamma = alpha[active], beta[active], gamma[active]
            zeta = (beta - alpha) / (2.0 * gamma)
            t = np.where(zeta >= 0, 1.0, -1.0) / (np.abs(zeta) + np.hypot(1.0, zeta))
            c = 1.0 / np.hypot(1.0, t)
            s = c * t
            bi, bj = B[:, I], B[:, J]
            B[:, I] = c * bi - s * bj
            B[:, J] = s * bi + c * bj
            wi, wj = W[:, I], W[:, J]
            W[:, I] = c * wi - s * wj
            W[:, J] = s * wi + c * wj
        if not rotated:
            return B, W
    raise DecompositionError(f"Jacobi SVD did not converge in {max_sweeps} sweeps")


def _complete_columns(F: np.ndarray, good: np.ndarray) -> np.ndarray:
    """Replace the columns of ``F`` not flagged ``good`` by an orthonormal completion."""
    n, p = F.shape
    out = F.copy()
    basis = [out[:, j] for j in range(p) if good[j]]
    candidates = iter(np.eye(n))
    for j in range(p):
        if good[j]:
            continue
        while True:
            w = next(candidates).copy()
            for _ in range(2):
                for b in basis:
                    w -= (b @ w) * b
            nrm = np.linalg.norm(w)
            if nrm > 1e-8:
                break
        out[:, j] = w / nrm
        basis.append(out[:, j])
    return out


def _fix_signs(F: np.ndarray, G: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # largest-magnitude entry of each left vector is made positive
    idx = np.argmax(np.abs(F), axis=0)
    signs = np.where(F[idx, np.arange(F.shape[1])] < 0, -1.0, 1.0)
    return F * signs, G * signs


def jacobi_svd(X) -> SvdFactors:
    """Thin SVD of ``X`` with all ``min(n, m)`` triplets, by one-sided Jacobi."""
    X = as_matrix(X)
    n, m = X.shape
    A = X if n >= m else X.T
    B, W = _hestenes(A)
    s = np.linalg.norm(B, axis=0)
    order = np.argsort(-s, kind="stable")
    s, B, W = s[order], B[:, order], W[:, order]
    good = s > max(s[0], np.finfo(float).tiny) * _EPS * 10
    safe = np.where(good, s, 1.0)
    U = _complete_columns(B / safe, good)
    F, G = (U, W) if n >= m else (W, U)
    F, G = _fix_signs(F, G)
    return SvdFactors(F, s, G)


def _orthonormalize(Y: np.ndarray) -> np.ndarray:
    Q, _ = np.linalg.qr(Y)
    return Q


def subspace_svd(
    X,
    k: int,
    init=None,
    oversample: int | None = None,
    tol: float = 1e-11,
    max_iter: int = 1000,
) -> SvdFactors:
    """Top-``k`` singular triplets by block subspace iteration.

    ``init`` is an optional ``m x j`` block of starting right vectors (warm
    start); it is padded with deterministic pseudo-random columns. Iterates
    until every retained triplet has residual ``||X g - s f||`` below
    ``tol * sigma_1``.
    """
    X = as_matrix(X)
    n, m = X.shape
    r = min(n, m)
    if oversample is None:
        oversample = max(10, k)
    block = min(k + oversample, r)
    rng = np.random.default_rng(0)
    Q = rng.standard_normal((m, block))
    if init is not None:
        init = np.asarray(init, dtype=np.float64)[:, :block]
        Q[:, : init.shape[1]] = init
    Q = _orthonormalize(Q)
    for _ in range(max_iter):
        P = _orthonormalize(X @ Q)
        Z = X.T @ P
        small = jacobi_svd(Z)  # Z = H S W^T, so P^T X = W S H^T
        F = P @ small.G
        G = small.F
        s = small.sigma
        resid = np.linalg.norm(X @ G[:, :k] - F[:, :k] * s[:k], axis=0)
        Q = G
        if s[0] == 0 or np.all(resid <= tol * s[0]):
            break
    else:
        raise DecompositionError(f"subspace iteration did not converge in {max_iter} steps")
    F, G = _fix_signs(F[:, :k], G[:, :k])
    return SvdFactors(F, s[:k].copy(), G)


def thin_svd(X, k: int | None = None, method: str = "auto", init=None) -> SvdFactors:
    """Thin SVD of ``X``, truncated to the top ``k`` triplets when ``k`` is given.

    ``method`` is ``"jacobi"``, ``"subspace"`` or ``"auto"`` (subspace
    iteration only for large matrices with ``k`` well below the smaller
    dimension). ``init`` warm-starts the subspace route.
    """
    X = as_matrix(X)
    r = min(X.shape)
    if k is not None:
        k = int(k)
        if not 1 <= k <= r:
            raise InputError(f"k={k} must satisfy 1 <= k <= min(rows, cols)={r}")
    if method == "auto":
        big = r > JACOBI_MAX_DIM and k is not None and 4 * k <= r
        method = "subspace" if big else "jacobi"
    if method == "subspace":
        if k is None:
            raise InputError("subspace SVD needs an explicit k")
        return subspace_svd(X, k, init=init)
    if method != "jacobi":
        raise InputError(f"unknown SVD method {method!r}")
    svd = jacobi_svd(X)
    return svd if k is None else svd.truncate(k)


# --------------------------------------------------------------------------
# CSV


def read_matrix_csv(path) -> np.ndarray:
    """Read a header-free CSV of reals (one row per line)."""
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            rows.append([float(cell) for cell in line.split(",")])
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise ParseError(f"{path}: no matrix rows")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise ParseError(f"{path}: ragged rows (widths {sorted(widths)})")
    return as_matrix(rows)


def format_real(x: float) -> str:
    return repr(float(x))


def write_matrix_csv(path, A, header: str | None = None) -> None:
    """Write ``A`` as CSV with shortest round-trip float formatting."""
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    lines = [] if header is None else [f"# {h}" for h in header.splitlines()]
    lines += [",".join(format_real(x) for x in row) for row in A]
    Path(path).write_text("\n".join(lines) + "\n")
