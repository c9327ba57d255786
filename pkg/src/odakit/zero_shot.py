"""Zero-shot open-set classification against a frozen prototype bank.

A sample's cosine similarities to the class prototypes go through a
temperature softmax; the entropy of that distribution decides acceptance.
Entropy strictly above the threshold rejects the sample as unknown; a sample
exactly at the threshold is kept as a known prediction. The prototype bank
never updates, so every function here is a pure one and the target partition
it induces can be computed once and cached.
"""

from dataclasses import dataclass

import numpy as np

from . import numerics
from .data import Domain, stack_vectors
from .errors import DimensionMismatch, InvariantError

UNKNOWN = -1

DEFAULT_TAU = 0.01


def default_delta(num_known_classes):
    """Entropy acceptance threshold: half the maximum possible entropy."""
    return float(np.log(num_known_classes) / 2.0)


@dataclass(frozen=True)
class ZeroShotPrediction:
    """Open-set decision for one record: class index or UNKNOWN (-1)."""

    record_id: int
    probs: np.ndarray
    entropy: float
    predicted_class: int
    is_unknown: bool


@dataclass(frozen=True)
class TargetPartition:
    """Split of a dataset's target records by the zero-shot entropy rule.

    known_ids and unknown_ids are disjoint and together cover every target
    record id; pseudo_probs maps exactly the known ids to their zero-shot
    probability vectors, fixed before training and never recomputed.
    """

    known_ids: frozenset
    unknown_ids: frozenset
    pseudo_probs: dict


def _scores_rows(matrix, bank, tau):
    cos = numerics.cosine_matrix(matrix, bank.prototypes.astype(np.float64))
    probs = numerics.softmax_rows(cos, tau)
    ent = numerics.entropy_rows(probs)
    return probs, ent


def predict_rows(matrix, bank, tau=DEFAULT_TAU, delta=None):
    """Vectorized zero-shot labels, probs, entropies for an (n, dim) matrix."""
    mat = np.asarray(matrix, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[1] != bank.dim:
        raise DimensionMismatch(
            f"matrix shape {mat.shape} incompatible with prototype dim {bank.dim}"
        )
    if delta is None:
        delta = default_delta(bank.num_classes)
    probs, ent = _scores_rows(mat, bank, tau)
    labels = np.argmax(probs, axis=1).astype(np.int64)
    labels[ent > delta] = UNKNOWN
    return labels, probs, ent


def zero_shot_predict(record, bank, tau=DEFAULT_TAU, delta=None):
    """Classify one embedding record against the bank, rejecting by entropy."""
    if record.vector.shape[0] != bank.dim:
        raise DimensionMismatch(
            f"record {record.id}: vector dim {record.vector.shape[0]} != "
            f"prototype dim {bank.dim}"
        )
    if delta is None:
        delta = default_delta(bank.num_classes)
    labels, probs, ent = predict_rows(
        record.vector.astype(np.float64)[None, :], bank, tau, delta
    )
    return ZeroShotPrediction(
        record_id=record.id,
        probs=probs[0],
        entropy=float(ent[0]),
        predicted_class=int(labels[0]),
        is_unknown=labels[0] == UNKNOWN,
    )


def partition_target(dataset, bank, tau=DEFAULT_TAU, delta=None):
    """Partition the target domain into pseudo-known and pseudo-unknown pools.

    Every target record lands in exactly one pool; the pseudo probability
    vectors cached for the known pool are the distillation targets for
    adaptation. Pure function of its inputs.
    """
    if delta is None:
        delta = default_delta(bank.num_classes)
    target_idx = dataset.indices(Domain.TARGET)
    if len(target_idx) == 0:
        raise InvariantError("partition_target needs at least one target record")
    records = [dataset.records[i] for i in target_idx]
    labels, probs, _ = predict_rows(stack_vectors(records), bank, tau, delta)
    known = []
    unknown = []
    pseudo = {}
    for rec, label, p in zip(records, labels, probs):
        if label == UNKNOWN:
            unknown.append(rec.id)
        else:
            known.append(rec.id)
            pseudo[rec.id] = p
    return TargetPartition(
        known_ids=frozenset(known),
        unknown_ids=frozenset(unknown),
        pseudo_probs=pseudo,
    )
