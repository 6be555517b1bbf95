"""Top-N evaluation against masked-out ratings.

For each training user the hidden items form the set M, the N best-scored
candidates form T, and the hits are H = M & T. Precision is |H| / N, recall
is |H| / |M|, and F1 is reported at N = |M|.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .completion import CompletionResult, predict_scores
from .datasets import MaskedDataset
from .errors import InputError, ParseError


@dataclass(frozen=True)
class TopNResult:
    user: int
    top_items: list[int]
    hit_count: int


@dataclass(frozen=True)
class PRPoint:
    n: int
    precision: float
    recall: float


@dataclass(frozen=True)
class EvalReport:
    curve: list[PRPoint]
    f1_at_nmask: float
    runs_averaged: int = 1
    n_mask: int = 0
    per_user: list[TopNResult] = field(default_factory=list, repr=False, compare=False)

    def point(self, n: int) -> PRPoint:
        return self.curve[n - 1]


def top_n(scores, excluded, n: int) -> list[int]:
    """The ``n`` best-scored items outside ``excluded``; ties go to the lower index."""
    scores = np.asarray(scores, dtype=np.float64)
    if n < 1:
        raise InputError("n must be at least 1")
    allowed = np.ones(len(scores), dtype=bool)
    ex = np.fromiter(excluded, dtype=np.int64) if not isinstance(excluded, np.ndarray) else excluded
    allowed[ex] = False
    candidates = np.flatnonzero(allowed)
    if n > len(candidates):
        raise InputError(f"n={n} exceeds the {len(candidates)} candidate items")
    order = np.argsort(-scores[candidates], kind="stable")
    return candidates[order[:n]].tolist()


def precision_recall(hits: int, n: int, n_mask: int) -> tuple[float, float]:
    if n < 1 or n_mask < 1:
        raise InputError("n and n_mask must be positive")
    if hits > min(n, n_mask):
        raise InputError(f"hits={hits} exceeds min(n, n_mask)")
    return hits / n, hits / n_mask


def f1_measure(precision: float, recall: float) -> float:
    """Harmonic mean of precision and recall (0 when both are 0)."""
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def evaluate_scores(
    score_fn: Callable[[int], np.ndarray] | np.ndarray,
    masked: MaskedDataset,
    exclude_train: bool = True,
    averaging: str = "macro",
    max_n: int | None = None,
) -> EvalReport:
    """Precision/recall curve for N = 1 .. ``max_n`` (default ``2 * n_mask``).

    ``score_fn`` maps a user index to its score row, or is a full score
    matrix. ``averaging`` is ``"macro"`` (mean of per-user ratios) or
    ``"micro"`` (ratio of summed counts).
    """
    if averaging not in ("macro", "micro"):
        raise InputError(f"averaging must be 'macro' or 'micro', got {averaging!r}")
    if isinstance(score_fn, np.ndarray):
        matrix = score_fn
        if matrix.shape != masked.train.shape:
            raise InputError(f"score matrix shape {matrix.shape} != {masked.train.shape}")
        score_fn = matrix.__getitem__
    n_mask = masked.n_mask
    max_n = 2 * n_mask if max_n is None else max_n
    m = masked.train.m_items
    train_mask = masked.train.mask
    users = sorted(masked.ground_truth)
    hits = np.zeros((len(users), max_n))
    sizes = np.zeros((len(users), max_n))
    per_user = []
    for row, u in enumerate(users):
        scores = np.asarray(score_fn(u), dtype=np.float64)
        if scores.shape != (m,):
            raise InputError(f"score row for user {u} has shape {scores.shape}, expected ({m},)")
        excluded = np.flatnonzero(train_mask[u]) if exclude_train else np.empty(0, dtype=np.int64)
        pool = m - len(excluded)
        if pool < 1:
            raise InputError(f"user {u} has no candidate items")
        top = top_n(scores, excluded, min(max_n, pool))
        truth = masked.ground_truth[u]
        flags = np.fromiter((i in truth for i in top), dtype=bool, count=len(top))
        cum = np.cumsum(flags)
        hits[row, : len(cum)] = cum
        hits[row, len(cum):] = cum[-1]
        sizes[row] = np.minimum(np.arange(1, max_n + 1), pool)
        per_user.append(TopNResult(u, top[: min(n_mask, len(top))], int(cum[min(n_mask, len(cum)) - 1])))
    if averaging == "macro":
        precision = (hits / sizes).mean(axis=0)
        recall = (hits / n_mask).mean(axis=0)
    else:
        precision = hits.sum(axis=0) / sizes.sum(axis=0)
        recall = hits.sum(axis=0) / (n_mask * len(users))
    curve = [PRPoint(n + 1, float(precision[n]), float(recall[n])) for n in range(max_n)]
    p, r = curve[n_mask - 1].precision, curve[n_mask - 1].recall
    return EvalReport(curve, f1_measure(p, r), 1, n_mask, per_user)


def evaluate(result: CompletionResult, masked: MaskedDataset, **kwargs) -> EvalReport:
    """Evaluate a completion model on a mask-out split."""
    if result.U.shape[0] != masked.train.n_users or result.V.shape[0] != masked.train.m_items:
        raise InputError("model dimensions do not match the dataset")
    return evaluate_scores(lambda u: predict_scores(result, u), masked, **kwargs)


def average_runs(reports: Sequence[EvalReport]) -> EvalReport:
    """Pointwise mean of several runs' curves and F1 values."""
    if not reports:
        raise InputError("no reports to average")
    n_mask = reports[0].n_mask
    length = len(reports[0].curve)
    for rep in reports:
        if rep.n_mask != n_mask or len(rep.curve) != length:
            raise InputError("reports differ in n_mask or curve length")
    total = sum(rep.runs_averaged for rep in reports)
    weights = np.array([rep.runs_averaged for rep in reports], dtype=np.float64) / total
    P = np.array([[pt.precision for pt in rep.curve] for rep in reports])
    R = np.array([[pt.recall for pt in rep.curve] for rep in reports])
    F = np.array([rep.f1_at_nmask for rep in reports])
    p = _ordered_mean(P, weights)
    r = _ordered_mean(R, weights)
    f = float(_ordered_mean(F[:, None], weights)[0])
    curve = [PRPoint(i + 1, float(p[i]), float(r[i])) for i in range(length)]
    return EvalReport(curve, f, total, n_mask)


def _ordered_mean(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    # sorted accumulation keeps the result independent of report order
    out = np.empty(values.shape[1])
    for j in range(values.shape[1]):
        out[j] = np.sum(np.sort(values[:, j] * weights))
    return out


# --------------------------------------------------------------------------
# serialization


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def write_pr_curve(path, report: EvalReport, comment: str | None = None) -> None:
    lines = [f"# {c}" for c in comment.splitlines()] if comment else []
    lines.append("N,precision,recall")
    lines += [f"{pt.n},{_fmt(pt.precision)},{_fmt(pt.recall)}" for pt in report.curve]
    Path(path).write_text("\n".join(lines) + "\n")


def read_pr_curve(path) -> list[PRPoint]:
    points = []
    header_seen = False
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line or line.startswith("#"):
            continue
        if not header_seen:
            if line.strip() != "N,precision,recall":
                raise ParseError(f"{path}:{lineno}: unexpected header {line!r}")
            header_seen = True
            continue
        try:
            n, p, r = line.split(",")
            points.append(PRPoint(int(n), float(p), float(r)))
        except ValueError:
            raise ParseError(f"{path}:{lineno}: malformed row {line!r}") from None
    return points


def f1_summary(report: EvalReport, extra: dict | None = None) -> str:
    pt = report.point(report.n_mask)
    items = {
        "n_mask": report.n_mask,
        "runs": report.runs_averaged,
        "precision_at_nmask": _fmt(pt.precision),
        "recall_at_nmask": _fmt(pt.recall),
        "f1_at_nmask": _fmt(report.f1_at_nmask),
    }
    if extra:
        items.update(extra)
    return "".join(f"{k}={v}\n" for k, v in items.items())


def read_key_values(path) -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError(f"{path}:{lineno}: expected key=value")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out
