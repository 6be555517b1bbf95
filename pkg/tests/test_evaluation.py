from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rsvdrec.completion import CompletionResult, ObservedMatrix
from rsvdrec.datasets import mask_out, synthetic_implicit
from rsvdrec.errors import InputError, ParseError
from rsvdrec.evaluation import (
    EvalReport,
    PRPoint,
    average_runs,
    evaluate,
    evaluate_scores,
    f1_measure,
    f1_summary,
    precision_recall,
    read_key_values,
    read_pr_curve,
    top_n,
    write_pr_curve,
)


def oracle_scores(masked):
    S = np.zeros(masked.train.shape)
    for u, items in masked.ground_truth.items():
        S[u, list(items)] = 1.0
    return S


@pytest.fixture(scope="module")
def small_split():
    return mask_out(synthetic_implicit(80, 120, mean_per_user=25, seed=1), 20, 6, seed=2)


# --------------------------------------------------------------------------
# primitives


def test_top_n_examples():
    assert top_n([0.9, 0.1, 0.5], set(), 2) == [0, 2]
    assert top_n([0.3, 0.3, 0.3, 0.3], set(), 3) == [0, 1, 2]
    assert top_n([0.9, 0.1, 0.5], {0}, 1) == [2]


def test_top_n_too_large():
    with pytest.raises(InputError):
        top_n([1.0, 2.0, 3.0], {1}, 3)
    with pytest.raises(InputError):
        top_n([1.0], set(), 0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(-3, 3), min_size=1, max_size=30), st.data())
def test_top_n_properties(raw, data):
    scores = np.array(raw, dtype=float)
    n = data.draw(st.integers(1, len(scores)))
    top = top_n(scores, set(), n)
    assert len(set(top)) == n
    rest = [i for i in range(len(scores)) if i not in top]
    if rest:
        assert min(scores[top]) >= max(scores[rest])
    # nonincreasing scores, ascending index within ties
    pairs = [(-scores[i], i) for i in top]
    assert pairs == sorted(pairs)


def test_precision_recall_examples():
    assert precision_recall(2, 10, 5) == (0.2, 0.4)
    assert precision_recall(0, 3, 4) == (0.0, 0.0)
    p, r = precision_recall(3, 5, 5)
    assert p == r
    with pytest.raises(InputError):
        precision_recall(0, 0, 5)
    with pytest.raises(InputError):
        precision_recall(0, 5, 0)
    with pytest.raises(InputError):
        precision_recall(6, 10, 5)


def test_f1_examples():
    assert f1_measure(0.4, 0.4) == pytest.approx(0.4)
    assert f1_measure(0.2, 0.4) == pytest.approx(0.26666666666666666)
    assert f1_measure(0.0, 0.0) == 0.0


# --------------------------------------------------------------------------
# curves


def test_oracle_model_is_perfect(small_split):
    rep = evaluate_scores(oracle_scores(small_split), small_split)
    pt = rep.point(small_split.n_mask)
    assert pt.precision == pt.recall == rep.f1_at_nmask == 1.0


def test_curve_invariants(small_split, rng):
    S = rng.random(small_split.train.shape)
    rep = evaluate_scores(S, small_split)
    n_mask = small_split.n_mask
    assert len(rep.curve) == 2 * n_mask
    assert [pt.n for pt in rep.curve] == list(range(1, 2 * n_mask + 1))
    pt = rep.point(n_mask)
    assert pt.precision == pt.recall
    assert rep.f1_at_nmask == pytest.approx(pt.precision)
    recall = [pt.recall for pt in rep.curve]
    assert np.all(np.diff(recall) >= -1e-12)
    for tr in rep.per_user:
        assert tr.hit_count <= n_mask and len(set(tr.top_items)) == len(tr.top_items)
    assert all(0 <= pt.precision <= 1 and 0 <= pt.recall <= 1 for pt in rep.curve)


def test_curve_matches_brute_force_count(small_split, rng):
    S = rng.random(small_split.train.shape)
    rep = evaluate_scores(S, small_split)
    train = small_split.train.mask
    for n in (1, small_split.n_mask, 2 * small_split.n_mask):
        precisions, recalls = [], []
        for u, truth in small_split.ground_truth.items():
            ranked = sorted((i for i in range(S.shape[1]) if not train[u, i]), key=lambda i: (-S[u, i], i))
            hits = len(set(ranked[:n]) & truth)
            precisions.append(hits / n)
            recalls.append(hits / len(truth))
        assert rep.point(n).precision == pytest.approx(np.mean(precisions), abs=1e-15)
        assert rep.point(n).recall == pytest.approx(np.mean(recalls), abs=1e-15)


def test_training_items_are_excluded_by_default(small_split):
    # scores that favor training items: excluded by default, they would win otherwise
    S = small_split.train.dense() * 10.0 + oracle_scores(small_split)
    assert evaluate_scores(S, small_split).f1_at_nmask == 1.0
    assert evaluate_scores(S, small_split, exclude_train=False).f1_at_nmask < 1.0


def test_micro_equals_macro_when_sizes_agree(small_split, rng):
    S = rng.random(small_split.train.shape)
    a = evaluate_scores(S, small_split, averaging="macro")
    b = evaluate_scores(S, small_split, averaging="micro")
    # every user has the same |M| and a full pool, so both averages coincide
    assert b.f1_at_nmask == pytest.approx(a.f1_at_nmask, abs=1e-12)
    with pytest.raises(InputError):
        evaluate_scores(S, small_split, averaging="median")


def test_random_scores_recall_is_small(small_split):
    rng = np.random.default_rng(0)
    m = small_split.train.m_items
    recalls = [evaluate_scores(rng.random(small_split.train.shape), small_split).point(small_split.n_mask).recall for _ in range(50)]
    pools = [m - small_split.train.row_counts()[u] for u in small_split.ground_truth]
    expected = np.mean([small_split.n_mask / p for p in pools])
    assert np.mean(recalls) == pytest.approx(expected, rel=0.1)


def test_evaluate_uses_model_scores(small_split):
    S = oracle_scores(small_split)
    n, m = S.shape
    # rank-deficient exact factorization U V^T = S
    U, V = S, np.eye(m)
    rep = evaluate(CompletionResult(U, V, S, [], 0, True), small_split)
    assert rep.f1_at_nmask == 1.0
    with pytest.raises(InputError):
        evaluate(CompletionResult(U[:-1], V, S, [], 0, True), small_split)


def test_shape_checks(small_split):
    with pytest.raises(InputError):
        evaluate_scores(np.zeros((3, 3)), small_split)
    with pytest.raises(InputError):
        evaluate_scores(lambda u: np.zeros(3), small_split)


def test_empty_candidate_pool_raises():
    masked = mask_out(ObservedMatrix.from_dense(np.ones((1, 3))), 1, 1, seed=0)
    # a training matrix that covers every item leaves nothing to recommend
    blocked = replace(masked, train=ObservedMatrix.from_dense(np.ones((1, 3))))
    with pytest.raises(InputError, match="no candidate"):
        evaluate_scores(np.ones((1, 3)), blocked)


def test_pool_smaller_than_n_keeps_whole_pool():
    masked = mask_out(ObservedMatrix.from_dense(np.ones((1, 4))), 1, 2, seed=0)
    rep = evaluate_scores(np.arange(4.0)[None, :], masked)
    # only two candidates exist; N = 3, 4 reuse them
    assert rep.point(4).recall == 1.0
    assert rep.point(4).precision == 1.0


# --------------------------------------------------------------------------
# averaging


def _report(values, f1, n_mask=1):
    return EvalReport([PRPoint(i + 1, p, r) for i, (p, r) in enumerate(values)], f1, 1, n_mask)


def test_average_runs_examples():
    a = _report([(0.2, 0.2), (0.1, 0.2)], 0.2)
    b = _report([(0.4, 0.4), (0.3, 0.6)], 0.4)
    avg = average_runs([a, b])
    assert avg.f1_at_nmask == pytest.approx(0.3)
    assert avg.runs_averaged == 2
    assert avg.curve[1].recall == pytest.approx(0.4)
    same = average_runs([a, a, a])
    assert same.curve == a.curve and same.f1_at_nmask == a.f1_at_nmask


def test_average_runs_permutation_invariant(rng):
    reports = [_report([tuple(rng.random(2)) for _ in range(4)], float(rng.random()), 2) for _ in range(7)]
    a = average_runs(reports)
    b = average_runs(reports[::-1])
    c = average_runs([reports[i] for i in rng.permutation(7)])
    assert a == b == c


def test_average_runs_weights_by_run_count():
    a = average_runs([_report([(0.0, 0.0)], 0.0), _report([(0.0, 0.0)], 0.0)])
    b = _report([(0.9, 0.9)], 0.9)
    assert average_runs([a, b]).f1_at_nmask == pytest.approx(0.3)


def test_average_runs_mismatch():
    with pytest.raises(InputError):
        average_runs([])
    with pytest.raises(InputError):
        average_runs([_report([(0.1, 0.1)], 0.1, 1), _report([(0.1, 0.1)], 0.1, 2)])
    with pytest.raises(InputError):
        average_runs([_report([(0.1, 0.1)], 0.1), _report([(0.1, 0.1), (0.1, 0.1)], 0.1)])


# --------------------------------------------------------------------------
# serialization


def test_pr_curve_round_trip(tmp_path, small_split, rng):
    rep = evaluate_scores(rng.random(small_split.train.shape), small_split)
    p = tmp_path / "pr.csv"
    write_pr_curve(p, rep, comment="seed=2")
    lines = p.read_text().splitlines()
    assert lines[0] == "# seed=2" and lines[1] == "N,precision,recall"
    back = read_pr_curve(p)
    assert [pt.n for pt in back] == [pt.n for pt in rep.curve]
    for a, b in zip(back, rep.curve):
        assert a.precision == float(f"{b.precision:.6g}")
        assert a.recall == pytest.approx(b.recall, rel=5e-6)


def test_pr_curve_format_is_six_significant_digits(tmp_path):
    p = tmp_path / "pr.csv"
    write_pr_curve(p, _report([(1 / 3, 2 / 3)], 0.5))
    assert p.read_text().splitlines()[1] == "1,0.333333,0.666667"


def test_pr_curve_parse_errors(tmp_path):
    p = tmp_path / "pr.csv"
    p.write_text("n,p,r\n")
    with pytest.raises(ParseError):
        read_pr_curve(p)
    p.write_text("N,precision,recall\n1,0.5\n")
    with pytest.raises(ParseError, match=":2:"):
        read_pr_curve(p)


def test_f1_summary_round_trip(tmp_path):
    rep = _report([(0.25, 0.25), (0.2, 0.4)], 0.25)
    p = tmp_path / "f1.txt"
    p.write_text(f1_summary(rep, {"k": 3}))
    kv = read_key_values(p)
    assert kv["f1_at_nmask"] == "0.25" and kv["n_mask"] == "1" and kv["k"] == "3"
    p.write_text("oops\n")
    with pytest.raises(ParseError):
        read_key_values(p)


# --------------------------------------------------------------------------
# end to end


@pytest.mark.slow
def test_regularization_beats_plain_svd_on_sparse_short_profiles():
    from rsvdrec.completion import CompletionConfig, em_complete
    from rsvdrec.core import RsvdConfig
    from rsvdrec.evaluation import evaluate

    # joke-style data: 100 items, at most 40 ratings per user
    src = synthetic_implicit(1200, 100, mean_per_user=37, seed=0)
    keep = np.flatnonzero(src.row_counts() <= 40)[:600]
    D = src.dense()[keep]
    masked = mask_out(ObservedMatrix.from_dense(D, D > 0), 37, 35, seed=0)
    f1 = {}
    for lam in (0.0, 5.0):
        res = em_complete(masked.train, CompletionConfig(RsvdConfig(14, lam), em_max_iter=200))
        f1[lam] = evaluate(res, masked).f1_at_nmask
    assert f1[5.0] > f1[0.0]
