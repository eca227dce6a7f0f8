import csv
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ssimm import eval_harness as ev
from ssimm.image_blocks import InvalidParameterError


def test_classify_single_and_coincident():
    assert ev.classify_block_1nn([0.0, 0.0], [[5.0, 5.0]], [3]) == 3
    refs = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]])
    assert ev.classify_block_1nn([1.0, 1.0], refs, [0, 4, 2]) == 4
    with pytest.raises(InvalidParameterError):
        ev.classify_block_1nn([0.0], [[1.0]], [1], exclude=0)


def test_classify_planted_instance():
    refs = np.array([[0, 0], [3, 0], [0, 3], [3, 3], [1.4, 1.4]], float)
    labels = [0, 1, 2, 3, 4]
    q = np.array([1.0, 0.9])
    order = np.argsort(np.sum((refs - q) ** 2, axis=1), kind="stable")
    assert ev.classify_block_1nn(q, refs, labels) == labels[order[0]]
    # leave-one-out on the planted point: its own row is skipped, corner (0, 0) is nearest
    d = np.sum((refs - refs[4]) ** 2, axis=1)
    d[4] = np.inf
    assert ev.classify_block_1nn(refs[4], refs, labels, exclude=4) == labels[int(np.argmin(d))] == 0


def test_ties_to_smaller_index():
    refs = np.array([[1.0], [-1.0]])
    assert ev.classify_block_1nn([0.0], refs, [5, 6]) == 5


def test_vote_examples():
    assert ev.vote_image([2, 2, 2]) == [(2, 1.0)]
    v = ev.vote_image([1, 1, 4])
    assert v[0] == (1, pytest.approx(2 / 3)) and v[1] == (4, pytest.approx(1 / 3))
    assert ev.vote_image([5, 3])[0][0] == 3  # tie -> smaller label


@given(st.lists(st.integers(0, 6), min_size=1, max_size=40))
def test_vote_fractions_sum_to_one(labels):
    v = ev.vote_image(labels)
    assert sum(f for _, f in v) == pytest.approx(1.0)
    fr = [f for _, f in v]
    assert fr == sorted(fr, reverse=True)


def test_confusion_examples():
    cm = ev.confusion([0, 1, 2], [0, 1, 2])
    assert np.array_equal(cm.counts, np.diag([1, 1, 1, 0, 0, 0, 0]))
    cm2 = ev.confusion([0, 1, 2], [0, 2, 2])
    assert cm2.counts[1, 2] == 1 and np.trace(cm2.counts) == 2
    with pytest.raises(InvalidParameterError):
        ev.confusion([7], [0])


def test_confusion_tally_oracle(rng):
    t = rng.integers(0, 7, 20)
    p = rng.integers(0, 7, 20)
    cm = ev.confusion(t, p)
    ref = np.zeros((7, 7), int)
    for a, b in zip(t, p):
        ref[a, b] += 1
    np.testing.assert_array_equal(cm.counts, ref)
    np.testing.assert_array_equal(cm.counts.sum(axis=1), np.bincount(t, minlength=7))
    rates = cm.rates
    rows = np.bincount(t, minlength=7) > 0
    np.testing.assert_allclose(rates[rows].sum(axis=1), 1.0)


def test_leave_one_out_never_matches_self(rng):
    refs = rng.standard_normal((3, 9, 2))
    nn = ev.nearest_indices(refs, refs, leave_one_out=True)
    assert not np.any(nn == np.arange(9)[:, None])
    nn0 = ev.nearest_indices(refs, refs)
    assert np.all(nn0 == np.arange(9)[:, None])


def test_evaluate_and_report(tmp_path, rng):
    emb = rng.standard_normal((4, 14, 2))  # (b, n, p)
    labels = np.arange(14) % 7
    res, nn = ev.evaluate(np.swapaxes(emb, 0, 1), emb, labels, labels, leave_one_out=True)
    assert res.block_pred.shape == (14, 4)
    assert res.block_confusion.counts.sum() == 56
    assert res.image_confusion.counts.sum() == 14
    ev.write_report(res, tmp_path)
    doc = json.loads((tmp_path / "report.json").read_text())
    assert len(doc["image_confusion"]) == 7
    rows = list(csv.reader(open(tmp_path / "confusion_image.csv")))
    assert len(rows) == 8
    assert len(list(csv.reader(open(tmp_path / "votes.csv")))) == 15


def test_evaluate_without_labels(tmp_path, rng):
    emb = rng.standard_normal((2, 7, 2))
    res, _ = ev.evaluate(rng.standard_normal((3, 2, 2)), emb, np.arange(7), None)
    assert res.image_confusion is None and len(res.votes) == 3
    ev.write_report(res, tmp_path)
    assert not (tmp_path / "confusion_image.csv").exists()


def test_permutation_test_detects_signal():
    labels = np.repeat(np.arange(7), 4)
    # each image's blocks point to another image of the same class
    nn = np.array([[(j // 4) * 4 + ((j + 1) % 4)] * 5 for j in range(28)])
    res = ev.permutation_test(nn, labels, draws=200, seed=1)
    assert res.observed == 1.0 and res.p_value == pytest.approx(1 / 201)


def test_permutation_p_value_bounds(rng):
    labels = rng.integers(0, 7, 30)
    nn = rng.integers(0, 30, (30, 5))
    res = ev.permutation_test(nn, labels, draws=99)
    assert 0.01 <= res.p_value <= 1.0
    assert res.null.shape == (99,)
