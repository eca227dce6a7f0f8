"""Distortion-type recognition in an embedded space.

Every block is labelled by its nearest neighbour among the reference blocks
of the same block index, then each image takes the majority vote of its
blocks. Training-set evaluation is leave-one-out.
"""

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .distortion_lab import DistortionKind
from .image_blocks import InvalidParameterError

N_LABELS = 7
LABEL_NAMES = [k.name.lower() for k in DistortionKind]


def classify_block_1nn(query, refs, labels, exclude=None):
    """Label of the nearest reference row (Euclidean); ties go to the smaller index."""
    refs = np.asarray(refs, dtype=np.float64).reshape(-1, np.size(query))
    labels = np.asarray(labels)
    if refs.shape[0] - (exclude is not None) < 1:
        raise InvalidParameterError("need at least one reference block after exclusion")
    d2 = np.sum((refs - np.asarray(query, dtype=np.float64)) ** 2, axis=1)
    if exclude is not None:
        d2[exclude] = np.inf
    return int(labels[int(np.argmin(d2))])


def nearest_indices(queries, refs, leave_one_out=False):
    """Index of the nearest ``refs`` row for every ``queries`` row.

    ``queries``/``refs`` are (b, m, p) and (b, n, p); the result is (m, b).
    """
    queries = np.asarray(queries, dtype=np.float64)
    refs = np.asarray(refs, dtype=np.float64)
    b, m, _ = queries.shape
    n = refs.shape[1]
    if n - int(leave_one_out) < 1:
        raise InvalidParameterError("need at least one reference block after exclusion")
    out = np.empty((m, b), dtype=np.int64)
    for i in range(b):
        diff = queries[i][:, None, :] - refs[i][None, :, :]
        d2 = np.einsum("mnp,mnp->mn", diff, diff)
        if leave_one_out:
            np.fill_diagonal(d2, np.inf)
        out[:, i] = np.argmin(d2, axis=1)
    return out


def vote_counts(block_labels):
    """(m, 7) vote counts from an (m, b) label matrix."""
    block_labels = np.asarray(block_labels)
    m = block_labels.shape[0]
    counts = np.zeros((m, N_LABELS), dtype=np.int64)
    np.add.at(counts, (np.repeat(np.arange(m), block_labels.shape[1]), block_labels.ravel()), 1)
    return counts


def vote_image(block_labels):
    """Labels ranked by vote fraction (descending), ties by label id."""
    lab = np.asarray(block_labels, dtype=np.int64).ravel()
    if lab.size == 0:
        raise InvalidParameterError("need at least one block label")
    counts = np.bincount(lab, minlength=N_LABELS)
    order = sorted((-cnt, l) for l, cnt in enumerate(counts) if cnt)
    return [(int(l), -cnt / lab.size) for cnt, l in order]


def _check_labels(a):
    a = np.asarray(a, dtype=np.int64)
    if a.size and (a.min() < 0 or a.max() >= N_LABELS):
        raise InvalidParameterError("labels must lie in 0..6")
    return a


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray  # (7, 7), row = true, column = predicted

    @property
    def rates(self):
        rows = self.counts.sum(axis=1, keepdims=True)
        return np.divide(self.counts, rows, out=np.zeros(self.counts.shape), where=rows > 0)

    @property
    def accuracy(self):
        total = self.counts.sum()
        return float(np.trace(self.counts) / total) if total else float("nan")


def confusion(true, pred):
    true = _check_labels(true).ravel()
    pred = _check_labels(pred).ravel()
    if true.shape != pred.shape:
        raise InvalidParameterError("true and predicted label lists differ in length")
    counts = np.zeros((N_LABELS, N_LABELS), dtype=np.int64)
    np.add.at(counts, (true, pred), 1)
    return ConfusionMatrix(counts)


@dataclass
class Evaluation:
    names: list
    true: np.ndarray  # (m,)
    block_pred: np.ndarray  # (m, b)
    votes: list  # per image, ranked (label, fraction)
    block_confusion: ConfusionMatrix
    image_confusion: ConfusionMatrix

    @property
    def image_pred(self):
        return np.array([v[0][0] for v in self.votes], dtype=np.int64)

    @property
    def image_accuracy(self):
        return self.image_confusion.accuracy if self.image_confusion else float("nan")

    @property
    def block_accuracy(self):
        return self.block_confusion.accuracy if self.block_confusion else float("nan")


def evaluate(query_emb, ref_emb, ref_labels, true_labels, names=None, leave_one_out=False):
    """Classify every block of every query image and tabulate the results.

    ``query_emb`` is (m, b, p) and ``ref_emb`` is (b, n, p), matching the
    layouts of :class:`ssimm.model.OosResult` and the trained model. Without
    ``true_labels`` only predictions and votes are filled in.

    Returns
    -------
    (Evaluation, ndarray)
        The tabulation and the (m, b) nearest-reference indices.
    """
    ref_labels = _check_labels(ref_labels)
    true = None if true_labels is None else _check_labels(true_labels)
    nn = nearest_indices(np.swapaxes(query_emb, 0, 1), ref_emb, leave_one_out)
    block_pred = ref_labels[nn]
    votes = [vote_image(row) for row in block_pred]
    image_pred = np.array([v[0][0] for v in votes], dtype=np.int64)
    m = block_pred.shape[0]
    return Evaluation(
        names=list(names) if names is not None else [f"img{i:03d}" for i in range(m)],
        true=true,
        block_pred=block_pred,
        votes=votes,
        block_confusion=None if true is None else confusion(
            np.repeat(true, block_pred.shape[1]), block_pred.ravel()),
        image_confusion=None if true is None else confusion(true, image_pred),
    ), nn


def evaluate_training(model):
    """Leave-one-out evaluation of the training embedding."""
    return evaluate(
        np.swapaxes(model.embeddings, 0, 1), model.embeddings, model.labels, model.labels,
        model.names, leave_one_out=True,
    )


def image_accuracy_from_nn(nn, labels):
    """Image-level vote accuracy when block ``(j, i)`` copies ``labels[nn[j, i]]``."""
    labels = np.asarray(labels)
    pred = np.argmax(vote_counts(labels[nn]), axis=1)  # argmax: ties to the smaller label
    return float(np.mean(pred == labels))


@dataclass(frozen=True)
class PermutationTest:
    observed: float
    null: np.ndarray
    p_value: float


def permutation_test(nn, labels, draws=1000, seed=0):
    """Label-permutation test of the leave-one-out image accuracy.

    Neighbour indices stay fixed; each draw shuffles the labels and recomputes
    the vote accuracy. ``p = (1 + #{null >= observed}) / (1 + draws)``.
    """
    labels = np.asarray(labels)
    obs = image_accuracy_from_nn(nn, labels)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x7065]))
    null = np.array([image_accuracy_from_nn(nn, rng.permutation(labels)) for _ in range(draws)])
    p = (1.0 + np.sum(null >= obs)) / (1.0 + draws)
    return PermutationTest(observed=obs, null=null, p_value=float(p))


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


def _write_matrix_csv(path, cm):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["true\\pred"] + LABEL_NAMES)
        for name, row in zip(LABEL_NAMES, cm.counts):
            w.writerow([name] + [int(v) for v in row])


def write_report(ev, out_dir, extra=None):
    """Confusion matrices (CSV + JSON) and the top-two vote table."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if ev.block_confusion is not None:
        _write_matrix_csv(out / "confusion_block.csv", ev.block_confusion)
        _write_matrix_csv(out / "confusion_image.csv", ev.image_confusion)
    with open(out / "votes.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["image", "true", "top1", "top1_frac", "top2", "top2_frac"])
        true = ev.true if ev.true is not None else [None] * len(ev.names)
        for name, t, v in zip(ev.names, true, ev.votes):
            second = v[1] if len(v) > 1 else ("", "")
            w.writerow([name, "" if t is None else int(t), v[0][0], f"{v[0][1]:.4f}", second[0],
                        "" if second[1] == "" else f"{second[1]:.4f}"])
    doc = {
        "labels": LABEL_NAMES,
        "votes": {
            name: [[int(l), round(f, 6)] for l, f in v[:2]] for name, v in zip(ev.names, ev.votes)
        },
    }
    for level, cm in (("block", ev.block_confusion), ("image", ev.image_confusion)):
        if cm is not None:
            doc[f"{level}_confusion"] = cm.counts.tolist()
            doc[f"{level}_rates"] = np.round(cm.rates, 6).tolist()
            doc[f"{level}_accuracy"] = cm.accuracy
    if extra:
        doc.update(extra)
    (out / "report.json").write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    return out / "report.json"
