"""Training losses for the open-set classifier and their analytic gradients.

Four terms combine with unit weights:

  source CE        mean over the source batch of -ln p(y|x)
  entropy sep      per target sample -|H - delta| when |H - delta| > margin,
                   else 0, averaged over the full target batch size
  distill known    soft-target CE against cached zero-shot probabilities,
                   averaged over the batch's pseudo-known subset
  raise unknown    -H(p) of the trainable model on the pseudo-unknown
                   subset, averaged over that subset

The *_from_logits helpers return (value, d value / d logits) and exist so
gradients can be checked in logit space; the public loss_* operations wrap
them with the model forward pass and chain the gradients onto the
parameters. A term whose contributing set is empty is exactly 0 with zero
gradient. Reductions run in fixed index order for bit-reproducibility.
"""

import enum
from dataclasses import dataclass

import numpy as np

from . import numerics
from .data import stack_vectors
from .errors import (
    InvalidConfig,
    InvariantError,
    LabelOutOfRange,
    MissingPseudoLabel,
    ModeBatchMismatch,
)
from .model import ParamGrads


class Mode(enum.Enum):
    """Training regime: joint, source-only pretraining, or source-free."""

    ODA = "oda"
    SF_PRETRAIN = "sf_pretrain"
    SF_ADAPT = "sf_adapt"


@dataclass(frozen=True)
class LossToggles:
    """On/off switches for the four loss terms (ablation harness)."""

    use_source: bool = True
    use_ent: bool = True
    use_kwn: bool = True
    use_unk: bool = True


@dataclass(frozen=True)
class LossBreakdown:
    """Per-step loss values and the batch sizes each term divided by."""

    l_source: float
    l_ent: float
    l_kwn: float
    l_unk: float
    total: float
    count_source: int
    count_known: int
    count_unknown: int


def _zero_grads(model):
    return ParamGrads(
        weights=np.zeros_like(model.weights), biases=np.zeros_like(model.biases)
    )


def _chain(dlogits, x):
    """Push logit gradients onto the linear parameters."""
    return ParamGrads(weights=dlogits.T @ x, biases=dlogits.sum(axis=0))


def source_ce_from_logits(logits, labels):
    """Mean cross-entropy and its logit gradient (probs - onehot)/n."""
    n, k = logits.shape
    if n == 0:
        return 0.0, np.zeros_like(logits)
    logp = numerics.log_softmax_rows(logits, 1.0)
    rows = np.arange(n)
    value = float(-logp[rows, labels].sum() / n)
    dlogits = np.exp(logp)
    dlogits[rows, labels] -= 1.0
    dlogits /= n
    return value, dlogits


def entropy_separation_from_logits(logits, delta, margin):
    """Margin-gated entropy repulsion, averaged over the full batch.

    A sample contributes -|H - delta| only when |H - delta| > margin;
    inside the band both value and gradient are exactly zero.
    """
    n = logits.shape[0]
    if n == 0:
        return 0.0, np.zeros_like(logits)
    probs = numerics.softmax_rows(logits, 1.0)
    ent = numerics.entropy_rows(probs)
    dev = ent - delta
    active = np.abs(dev) > margin
    value = float(-np.abs(dev[active]).sum() / n)
    dlogits = np.zeros_like(logits)
    if active.any():
        dH = numerics.entropy_grad_rows(probs)
        dlogits[active] = -np.sign(dev[active])[:, None] * dH[active] / n
    return value, dlogits


def soft_ce_from_logits(logits, targets):
    """Soft-target cross-entropy; logit gradient (probs - targets)/n."""
    n = logits.shape[0]
    if n == 0:
        return 0.0, np.zeros_like(logits)
    if targets.shape != logits.shape:
        raise InvariantError(
            f"target shape {targets.shape} != logits shape {logits.shape}"
        )
    logp = numerics.log_softmax_rows(logits, 1.0)
    value = float(numerics.soft_ce_rows(targets, logp).sum() / n)
    probs = numerics.softmax_rows(logits, 1.0)
    dlogits = (probs - targets) / n
    return value, dlogits


def neg_entropy_from_logits(logits):
    """Mean negative entropy; minimizing it raises output entropy."""
    n = logits.shape[0]
    if n == 0:
        return 0.0, np.zeros_like(logits)
    probs = numerics.softmax_rows(logits, 1.0)
    value = float(-numerics.entropy_rows(probs).sum() / n)
    dlogits = -numerics.entropy_grad_rows(probs) / n
    return value, dlogits


def loss_source_ce(model, batch):
    """Supervised cross-entropy on a labeled source batch."""
    if not batch:
        return 0.0, _zero_grads(model)
    labels = np.array([r.label for r in batch], dtype=np.int64)
    if labels.min() < 0 or labels.max() >= model.num_classes:
        bad = labels[(labels < 0) | (labels >= model.num_classes)][0]
        raise LabelOutOfRange(
            f"label {bad} outside [0, {model.num_classes})"
        )
    x = stack_vectors(batch)
    logits, _ = model.forward_batch(x)
    value, dlogits = source_ce_from_logits(logits, labels)
    return value, _chain(dlogits, x)


def loss_entropy_separation(model, batch, delta, margin):
    """Push target-sample prediction entropy away from delta."""
    if delta is None or delta <= 0:
        raise InvalidConfig(f"delta must be > 0, got {delta}")
    if margin < 0:
        raise InvalidConfig(f"margin must be >= 0, got {margin}")
    if not batch:
        return 0.0, _zero_grads(model)
    x = stack_vectors(batch)
    logits, _ = model.forward_batch(x)
    value, dlogits = entropy_separation_from_logits(logits, delta, margin)
    return value, _chain(dlogits, x)


def loss_clip_known(model, batch, pseudo_probs):
    """Distill cached zero-shot probabilities into the model.

    batch must already be intersected with the pseudo-known pool;
    pseudo_probs maps record id to its cached probability vector.
    """
    if not batch:
        return 0.0, _zero_grads(model)
    try:
        targets = np.stack([np.asarray(pseudo_probs[r.id], dtype=np.float64) for r in batch])
    except KeyError as exc:
        raise MissingPseudoLabel(
            f"record {exc.args[0]} has no cached zero-shot probabilities"
        ) from exc
    x = stack_vectors(batch)
    logits, _ = model.forward_batch(x)
    value, dlogits = soft_ce_from_logits(logits, targets)
    return value, _chain(dlogits, x)


def loss_clip_unknown(model, batch):
    """Raise the model's output entropy on pseudo-unknown records."""
    if not batch:
        return 0.0, _zero_grads(model)
    x = stack_vectors(batch)
    logits, _ = model.forward_batch(x)
    value, dlogits = neg_entropy_from_logits(logits)
    return value, _chain(dlogits, x)


def _mode_check(mode, source_batch, target_batch):
    if mode == Mode.ODA:
        if source_batch is None or target_batch is None:
            raise ModeBatchMismatch("ODA mode requires a source and a target batch")
    elif mode == Mode.SF_PRETRAIN:
        if source_batch is None:
            raise ModeBatchMismatch("pretraining requires a source batch")
        if target_batch is not None:
            raise ModeBatchMismatch("pretraining admits no target batch")
    elif mode == Mode.SF_ADAPT:
        if source_batch is not None:
            raise ModeBatchMismatch("adaptation is source-free: no source batch")
        if target_batch is None:
            raise ModeBatchMismatch("adaptation requires a target batch")
    else:
        raise ModeBatchMismatch(f"unknown mode {mode!r}")


def loss_total(model, source_batch, target_batch, partition, hp, mode):
    """Combine the enabled loss terms for one step with unit weights.

    The mode masks terms structurally (pretraining is source CE only;
    source-free adaptation excludes it); hp.loss_toggles masks further for
    ablations. Disabled or mode-excluded terms report value 0 and count 0.
    """
    mode = Mode(mode)
    _mode_check(mode, source_batch, target_batch)
    toggles = hp.loss_toggles

    use_source = toggles.use_source and mode in (Mode.ODA, Mode.SF_PRETRAIN)
    use_ent = toggles.use_ent and mode in (Mode.ODA, Mode.SF_ADAPT)
    use_kwn = toggles.use_kwn and mode in (Mode.ODA, Mode.SF_ADAPT)
    use_unk = toggles.use_unk and mode in (Mode.ODA, Mode.SF_ADAPT)

    grads = _zero_grads(model)
    l_source = l_ent = l_kwn = l_unk = 0.0
    count_source = count_known = count_unknown = 0

    if use_source and source_batch:
        l_source, g = loss_source_ce(model, source_batch)
        grads = ParamGrads(grads.weights + g.weights, grads.biases + g.biases)
        count_source = len(source_batch)

    known_sub = []
    unknown_sub = []
    if target_batch is not None:
        if partition is None:
            raise ModeBatchMismatch("target losses need a target partition")
        for rec in target_batch:
            if rec.id in partition.known_ids:
                known_sub.append(rec)
            elif rec.id in partition.unknown_ids:
                unknown_sub.append(rec)
            else:
                raise InvariantError(
                    f"target record {rec.id} is absent from the partition"
                )

    if use_ent and target_batch:
        l_ent, g = loss_entropy_separation(model, target_batch, hp.delta, hp.margin)
        grads = ParamGrads(grads.weights + g.weights, grads.biases + g.biases)
    if use_kwn and known_sub:
        l_kwn, g = loss_clip_known(model, known_sub, partition.pseudo_probs)
        grads = ParamGrads(grads.weights + g.weights, grads.biases + g.biases)
        count_known = len(known_sub)
    if use_unk and unknown_sub:
        l_unk, g = loss_clip_unknown(model, unknown_sub)
        grads = ParamGrads(grads.weights + g.weights, grads.biases + g.biases)
        count_unknown = len(unknown_sub)

    total = l_source + l_ent + l_kwn + l_unk
    breakdown = LossBreakdown(
        l_source=l_source,
        l_ent=l_ent,
        l_kwn=l_kwn,
        l_unk=l_unk,
        total=total,
        count_source=count_source,
        count_known=count_known,
        count_unknown=count_unknown,
    )
    return breakdown, grads
