"""Rating-file parsers, binarization and the mask-out train/test construction."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .completion import ObservedMatrix
from .errors import InputError, ParseError

logger = logging.getLogger(__name__)

JESTER_MISSING = 99.0


@dataclass(frozen=True)
class DatasetStats:
    n_users: int
    m_items: int
    n_ratings: int
    mean_ratings_per_user: float


@dataclass(frozen=True, eq=False)
class RatingTriples:
    """Explicit ratings with 0-based user/item indices.

    ``provenance`` records the source format and, after filtering, the
    original user index of every retained user (``user_map``).
    """

    n_users: int
    m_items: int
    users: np.ndarray
    items: np.ndarray
    ratings: np.ndarray
    provenance: dict = field(default_factory=dict)
    duplicates: int = 0

    def __post_init__(self):
        users = np.asarray(self.users, dtype=np.int64)
        items = np.asarray(self.items, dtype=np.int64)
        ratings = np.asarray(self.ratings, dtype=np.float64)
        if not (users.shape == items.shape == ratings.shape):
            raise InputError("users, items and ratings must have equal length")
        if len(users) and (users.min() < 0 or users.max() >= self.n_users or items.min() < 0 or items.max() >= self.m_items):
            raise InputError("rating index out of range")
        flat = users * self.m_items + items
        if len(np.unique(flat)) != len(flat):
            raise InputError("duplicate (user, item) pairs")
        object.__setattr__(self, "users", users)
        object.__setattr__(self, "items", items)
        object.__setattr__(self, "ratings", ratings)

    @property
    def triples(self) -> list[tuple[int, int, float]]:
        return list(zip(self.users.tolist(), self.items.tolist(), self.ratings.tolist()))

    def counts_per_user(self) -> np.ndarray:
        return np.bincount(self.users, minlength=self.n_users)

    def stats(self) -> DatasetStats:
        return dataset_stats(self)


def dataset_stats(triples: RatingTriples) -> DatasetStats:
    n = len(triples.ratings)
    return DatasetStats(triples.n_users, triples.m_items, n, n / triples.n_users)


def _dedupe(users, items, ratings, m_items):
    """Keep the last occurrence of each (user, item); return the number dropped."""
    users = np.asarray(users, dtype=np.int64)
    items = np.asarray(items, dtype=np.int64)
    ratings = np.asarray(ratings, dtype=np.float64)
    flat = users * m_items + items
    # index of the last occurrence of every key, in first-seen order of survivors
    _, rev_idx = np.unique(flat[::-1], return_index=True)
    keep = np.sort(len(flat) - 1 - rev_idx)
    dropped = len(flat) - len(keep)
    if dropped:
        logger.warning("%d duplicate (user, item) ratings; kept the last occurrence", dropped)
    return users[keep], items[keep], ratings[keep], dropped


def load_movielens_100k(path) -> RatingTriples:
    """Parse a MovieLens ``u.data`` file (``user<TAB>item<TAB>rating<TAB>timestamp``).

    IDs are 1-based in the file and shifted to 0-based here; the timestamp is
    dropped.
    """
    users, items, ratings = [], [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 4:
                raise ParseError(f"{path}:{lineno}: expected 4 fields, got {len(parts)}")
            try:
                u, i = int(parts[0]), int(parts[1])
                r = float(parts[2])
                int(parts[3])
            except ValueError:
                raise ParseError(f"{path}:{lineno}: malformed record {line.strip()!r}") from None
            if u < 1 or i < 1:
                raise ParseError(f"{path}:{lineno}: IDs must be 1-based positive integers")
            users.append(u - 1)
            items.append(i - 1)
            ratings.append(r)
    if not users:
        raise ParseError(f"{path}: no ratings")
    n, m = max(users) + 1, max(items) + 1
    users, items, ratings, dropped = _dedupe(users, items, ratings, m)
    return RatingTriples(n, m, users, items, ratings, {"format": "movielens", "source": str(path)}, dropped)


def load_csv_triples(
    path,
    mode: str = "triples",
    missing_sentinel: float | None = JESTER_MISSING,
    one_based: bool = False,
) -> RatingTriples:
    """Parse a header-free CSV of ``user,item,rating`` rows or a dense grid.

    In ``grid`` mode each row is one user and cells equal to
    ``missing_sentinel`` are unrated. ``one_based`` applies to triple IDs.
    """
    if mode not in ("triples", "grid"):
        raise InputError(f"mode must be 'triples' or 'grid', got {mode!r}")
    users, items, ratings = [], [], []
    width = None
    n_rows = 0
    with open(path, newline="") as fh:
        for rowno, row in enumerate(csv.reader(fh), start=1):
            if not row or (len(row) == 1 and not row[0].strip()) or row[0].lstrip().startswith("#"):
                continue
            try:
                vals = [float(c) for c in row]
            except ValueError:
                col = next(j for j, c in enumerate(row, start=1) if not _is_number(c))
                raise ParseError(f"{path}: row {rowno}, column {col}: non-numeric cell {row[col - 1]!r}") from None
            if mode == "triples":
                if len(vals) != 3:
                    raise ParseError(f"{path}: row {rowno}: expected 3 columns, got {len(vals)}")
                u, i = vals[0], vals[1]
                if u != int(u) or i != int(i):
                    raise ParseError(f"{path}: row {rowno}: IDs must be integers")
                off = 1 if one_based else 0
                if int(u) - off < 0 or int(i) - off < 0:
                    raise ParseError(f"{path}: row {rowno}: negative index")
                users.append(int(u) - off)
                items.append(int(i) - off)
                ratings.append(vals[2])
            else:
                if width is None:
                    width = len(vals)
                elif len(vals) != width:
                    raise ParseError(f"{path}: row {rowno}: expected {width} columns, got {len(vals)}")
                for j, v in enumerate(vals):
                    if missing_sentinel is not None and v == missing_sentinel:
                        continue
                    users.append(n_rows)
                    items.append(j)
                    ratings.append(v)
                n_rows += 1
    if mode == "grid":
        if n_rows == 0:
            raise ParseError(f"{path}: no ratings")
        n, m = n_rows, width
    else:
        if not users:
            raise ParseError(f"{path}: no ratings")
        n, m = max(users) + 1, max(items) + 1
    users, items, ratings, dropped = _dedupe(users, items, ratings, m)
    return RatingTriples(n, m, users, items, ratings, {"format": mode, "source": str(path)}, dropped)


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def filter_users_by_rating_count(
    triples: RatingTriples, min_count: int | None = None, max_count: int | None = None
) -> RatingTriples:
    """Keep users whose rating count lies in ``[min_count, max_count]`` and compact their indices."""
    counts = triples.counts_per_user()
    keep = np.ones(triples.n_users, dtype=bool)
    if min_count is not None:
        keep &= counts >= min_count
    if max_count is not None:
        keep &= counts <= max_count
    if not keep.any():
        raise InputError("no users survive the rating-count filter")
    if keep.all():
        return triples
    new_index = np.full(triples.n_users, -1, dtype=np.int64)
    survivors = np.flatnonzero(keep)
    new_index[survivors] = np.arange(len(survivors))
    sel = keep[triples.users]
    prov = dict(triples.provenance)
    prov["user_map"] = np.asarray(triples.provenance.get("user_map", np.arange(triples.n_users)))[survivors]
    prov["filter"] = {"min": min_count, "max": max_count}
    return RatingTriples(
        len(survivors),
        triples.m_items,
        new_index[triples.users[sel]],
        triples.items[sel],
        triples.ratings[sel],
        prov,
        triples.duplicates,
    )


def binarize(triples: RatingTriples) -> ObservedMatrix:
    """Observed matrix with every rated entry set to 1."""
    return ObservedMatrix(
        triples.n_users, triples.m_items, triples.users, triples.items, np.ones(len(triples.users))
    )


@dataclass(frozen=True)
class MaskPlan:
    threshold_t: int
    n_mask: int
    seed: int
    selected_users: list[int]
    masked: dict[int, frozenset[int]]


@dataclass(frozen=True)
class MaskedDataset:
    """Training matrix with hidden ratings, plus the hidden sets per user.

    ``source`` is the full (unmasked) observed matrix.
    """

    train: ObservedMatrix
    ground_truth: dict[int, frozenset[int]]
    stats: DatasetStats
    plan: MaskPlan
    source: ObservedMatrix | None = None

    @property
    def n_mask(self) -> int:
        return self.plan.n_mask


def make_mask_plan(matrix: ObservedMatrix, threshold_t: int, n_mask: int, seed: int) -> MaskPlan:
    """Choose training users (strictly more than ``threshold_t`` ratings) and their hidden items."""
    if n_mask < 1:
        raise InputError("n_mask must be at least 1")
    counts = matrix.row_counts()
    selected = np.flatnonzero(counts > threshold_t)
    if len(selected) == 0:
        raise InputError(f"no training users: nobody has more than {threshold_t} ratings")
    rng = np.random.default_rng(seed)
    masked = {}
    for u in selected:
        items = matrix.row_items(int(u))
        if len(items) < n_mask:
            raise InputError(f"user {int(u)} has {len(items)} ratings, fewer than n_mask={n_mask}")
        pick = rng.choice(len(items), size=n_mask, replace=False)
        masked[int(u)] = frozenset(int(x) for x in items[pick])
    return MaskPlan(threshold_t, n_mask, seed, [int(u) for u in selected], masked)


def mask_out(matrix: ObservedMatrix, threshold_t: int, n_mask: int, seed: int) -> MaskedDataset:
    """Hide ``n_mask`` random ratings of every user with more than ``threshold_t`` ratings."""
    plan = make_mask_plan(matrix, threshold_t, n_mask, seed)
    hidden = np.zeros(matrix.shape, dtype=bool)
    for u, items in plan.masked.items():
        hidden[u, list(items)] = True
    keep = ~hidden[matrix.rows, matrix.cols]
    train = ObservedMatrix(
        matrix.n_users, matrix.m_items, matrix.rows[keep], matrix.cols[keep], matrix.values[keep]
    )
    n_ratings = train.n_observed
    stats = DatasetStats(matrix.n_users, matrix.m_items, n_ratings, n_ratings / matrix.n_users)
    return MaskedDataset(train, dict(plan.masked), stats, plan, matrix)


def synthetic_implicit(
    n_users: int = 943,
    m_items: int = 1682,
    rank: int = 5,
    mean_per_user: float = 106.0,
    seed: int = 0,
) -> ObservedMatrix:
    """Binary user-item matrix with skewed activity/popularity and low-rank taste.

    Entries are Bernoulli draws from a logistic model
    ``log(activity) + log(popularity) + taste - offset`` whose offset is tuned
    by bisection so the expected count per user is ``mean_per_user``. Every
    row receives at least one rating.
    """
    rng = np.random.default_rng(seed)
    act = rng.lognormal(0.0, 0.8, n_users)
    pop = rng.lognormal(0.0, 1.2, m_items)
    zu = rng.standard_normal((n_users, rank))
    zi = rng.standard_normal((m_items, rank))
    logit = np.log(act)[:, None] + np.log(pop)[None, :] + 1.5 * (zu @ zi.T) / np.sqrt(rank)
    target = mean_per_user * n_users
    lo, hi = -50.0, 50.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if (1.0 / (1.0 + np.exp(-(logit - mid)))).sum() > target:
            lo = mid
        else:
            hi = mid
    prob = 1.0 / (1.0 + np.exp(-(logit - 0.5 * (lo + hi))))
    B = rng.random((n_users, m_items)) < prob
    empty = np.flatnonzero(~B.any(axis=1))
    B[empty, np.argmax(prob[empty], axis=1)] = True
    return ObservedMatrix.from_dense(B.astype(np.float64), B)
