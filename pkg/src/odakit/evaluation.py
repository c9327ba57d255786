"""Open-set evaluation: accuracies, H-score, AUROC, confusion, histograms.

Ground-truth target labels are read here and nowhere else in the pipeline.
Known-class accuracy is a micro average by default (fraction of known-class
records predicted exactly right); the macro flag averages per-class
accuracies instead. All unknown classes collapse into one unified class,
the last row/column of the confusion matrix.
"""

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import zero_shot
from .data import Domain, stack_vectors
from .errors import (
    DimensionMismatch,
    EmptyClass,
    InvariantError,
    IoError,
    MissingLabels,
    OutOfRange,
)
from .zero_shot import UNKNOWN

HIST_BINS = 50


@dataclass(frozen=True)
class EvalReport:
    """All evaluation artifacts for one model/dataset pair."""

    acc_kwn: float
    acc_unk: float
    h_score: float
    auroc: float
    confusion: np.ndarray
    entropy_hist_known: np.ndarray
    entropy_hist_unknown: np.ndarray
    entropy_bin_edges: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, EvalReport):
            return NotImplemented
        return (
            self.acc_kwn == other.acc_kwn
            and self.acc_unk == other.acc_unk
            and self.h_score == other.h_score
            and self.auroc == other.auroc
            and np.array_equal(self.confusion, other.confusion)
            and np.array_equal(self.entropy_hist_known, other.entropy_hist_known)
            and np.array_equal(self.entropy_hist_unknown, other.entropy_hist_unknown)
            and np.array_equal(self.entropy_bin_edges, other.entropy_bin_edges)
        )


def h_score(acc_kwn, acc_unk):
    """Harmonic mean of the two accuracies; 0 when both are 0."""
    for name, v in (("acc_kwn", acc_kwn), ("acc_unk", acc_unk)):
        if not 0.0 <= v <= 1.0:
            raise OutOfRange(f"{name} must be in [0, 1], got {v}")
    if acc_kwn + acc_unk == 0.0:
        return 0.0
    return 2.0 * acc_kwn * acc_unk / (acc_kwn + acc_unk)


def _midranks(values):
    """1-based ranks with ties averaged (Mann-Whitney convention)."""
    _, inverse, counts = np.unique(values, return_inverse=True, return_counts=True)
    cumulative = np.cumsum(counts).astype(np.float64)
    midrank_per_value = cumulative - (counts - 1) / 2.0
    return midrank_per_value[inverse]


def auroc(scores_known, scores_unknown):
    """Probability a random unknown-ness score from the unknown group
    exceeds one from the known group, ties counted half."""
    known = np.asarray(scores_known, dtype=np.float64)
    unknown = np.asarray(scores_unknown, dtype=np.float64)
    if known.size == 0 or unknown.size == 0:
        raise EmptyClass("auroc needs at least one known and one unknown score")
    ranks = _midranks(np.concatenate([known, unknown]))
    rank_sum_unknown = ranks[known.size :].sum()
    n_u = unknown.size
    u_stat = rank_sum_unknown - n_u * (n_u + 1) / 2.0
    return float(u_stat / (known.size * n_u))


def _report_from_predictions(pred_labels, entropies, gt_labels, num_known, macro):
    gt = np.asarray(gt_labels, dtype=np.int64)
    if (gt < 0).any():
        raise MissingLabels("a target record has no ground-truth label")
    pred = np.asarray(pred_labels, dtype=np.int64)
    ent = np.asarray(entropies, dtype=np.float64)

    gt_row = np.where(gt >= num_known, num_known, gt)
    pred_col = np.where(pred == UNKNOWN, num_known, pred)
    confusion = np.zeros((num_known + 1, num_known + 1), dtype=np.int64)
    np.add.at(confusion, (gt_row, pred_col), 1)

    known_mask = gt < num_known
    unknown_mask = ~known_mask
    correct_known = pred[known_mask] == gt[known_mask]
    if macro:
        per_class = []
        for k in range(num_known):
            cls = gt == k
            if cls.any():
                per_class.append(float(np.mean(pred[cls] == k)))
        acc_kwn = float(np.mean(per_class)) if per_class else 0.0
    else:
        acc_kwn = float(correct_known.mean()) if known_mask.any() else 0.0
    acc_unk = (
        float((pred[unknown_mask] == UNKNOWN).mean()) if unknown_mask.any() else 0.0
    )

    score = auroc(ent[known_mask], ent[unknown_mask])

    max_h = float(np.log(num_known))
    edges = np.linspace(0.0, max_h, HIST_BINS + 1)
    clipped = np.clip(ent, 0.0, max_h)
    hist_known, _ = np.histogram(clipped[known_mask], bins=edges)
    hist_unknown, _ = np.histogram(clipped[unknown_mask], bins=edges)

    return EvalReport(
        acc_kwn=acc_kwn,
        acc_unk=acc_unk,
        h_score=h_score(acc_kwn, acc_unk),
        auroc=score,
        confusion=confusion,
        entropy_hist_known=hist_known,
        entropy_hist_unknown=hist_unknown,
        entropy_bin_edges=edges,
    )


def _target_records(dataset):
    idx = dataset.indices(Domain.TARGET)
    if len(idx) == 0:
        raise InvariantError("evaluation needs at least one target record")
    return [dataset.records[i] for i in idx]


def evaluate(model, target, delta, macro=False):
    """Score the trainable classifier on a dataset's target records."""
    if model.dim != target.dim:
        raise DimensionMismatch(
            f"model dim {model.dim} != dataset dim {target.dim}"
        )
    if model.num_classes != target.num_known_classes:
        raise DimensionMismatch(
            f"model has {model.num_classes} classes, dataset declares "
            f"{target.num_known_classes} known classes"
        )
    records = _target_records(target)
    labels, _, ent = model.predict_rows(stack_vectors(records), delta)
    gt = [r.label for r in records]
    return _report_from_predictions(labels, ent, gt, target.num_known_classes, macro)


def evaluate_zero_shot(bank, target, tau=zero_shot.DEFAULT_TAU, delta=None, macro=False):
    """Score the frozen zero-shot classifier on the same protocol."""
    if bank.dim != target.dim:
        raise DimensionMismatch(f"bank dim {bank.dim} != dataset dim {target.dim}")
    if bank.num_classes != target.num_known_classes:
        raise DimensionMismatch(
            f"bank has {bank.num_classes} classes, dataset declares "
            f"{target.num_known_classes} known classes"
        )
    if delta is None:
        delta = zero_shot.default_delta(bank.num_classes)
    records = _target_records(target)
    labels, _, ent = zero_shot.predict_rows(stack_vectors(records), bank, tau, delta)
    gt = [r.label for r in records]
    return _report_from_predictions(labels, ent, gt, target.num_known_classes, macro)


def _open_writer(path):
    try:
        return open(path, "w", newline="")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def write_report(report, out_dir):
    """Write report.txt plus report.csv, confusion.csv, entropy_hist.csv.

    Floats are written via repr so identical reports produce identical
    bytes.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    with _open_writer(out / "report.csv") as fh:
        w = csv.writer(fh)
        w.writerow(["metric", "value"])
        w.writerow(["acc_kwn", repr(report.acc_kwn)])
        w.writerow(["acc_unk", repr(report.acc_unk)])
        w.writerow(["h_score", repr(report.h_score)])
        w.writerow(["auroc", repr(report.auroc)])

    with _open_writer(out / "confusion.csv") as fh:
        w = csv.writer(fh)
        k = report.confusion.shape[0] - 1
        header = ["gt\\pred"] + [str(i) for i in range(k)] + ["unknown"]
        w.writerow(header)
        for i, row in enumerate(report.confusion):
            name = str(i) if i < k else "unknown"
            w.writerow([name] + [str(v) for v in row])

    with _open_writer(out / "entropy_hist.csv") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_low", "bin_high", "count_known", "count_unknown"])
        edges = report.entropy_bin_edges
        for i in range(len(edges) - 1):
            w.writerow(
                [
                    repr(float(edges[i])),
                    repr(float(edges[i + 1])),
                    str(int(report.entropy_hist_known[i])),
                    str(int(report.entropy_hist_unknown[i])),
                ]
            )

    lines = [
        "open-set evaluation",
        "===================",
        f"known-class accuracy   {report.acc_kwn:.4f}",
        f"unknown accuracy       {report.acc_unk:.4f}",
        f"h-score                {report.h_score:.4f}",
        f"auroc (unknown detect) {report.auroc:.4f}",
        f"evaluated records      {int(report.confusion.sum())}",
        "",
    ]
    with _open_writer(out / "report.txt") as fh:
        fh.write("\n".join(lines))

    return out / "report.csv"


def read_report_csv(path):
    """Read the scalar metrics CSV back into a dict."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    return {name: float(value) for name, value in rows[1:]}
