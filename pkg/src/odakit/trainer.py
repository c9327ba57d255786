"""Training orchestration for the three regimes.

Joint training uses all four losses over paired source/target batches;
pretraining is supervised source CE alone; source-free adaptation runs the
three target losses starting from a pretrained checkpoint and its signature
admits no source data at all. Identical inputs (datasets, hyperparameters,
mode) produce bit-identical loss histories and final parameters.
"""

import csv
import dataclasses
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from .data import BatchSampler, Domain
from .errors import (
    DimensionMismatch,
    InvalidConfig,
    IoError,
    ModeBatchMismatch,
    NonFiniteLoss,
)
from .evaluation import evaluate
from .losses import LossBreakdown, LossToggles, Mode, loss_total
from .model import OdaClassifier, SgdMomentum
from .zero_shot import default_delta, partition_target

CHECKPOINT_NAME = "checkpoint.bin"
TRAINING_LOG_NAME = "training_log.csv"


@dataclass(frozen=True)
class HyperParams:
    """Everything that parameterizes a training run.

    delta defaults to None, meaning "resolve to ln(num_known)/2 from the
    prototype bank at train time"; clip_delta optionally overrides the
    threshold used for the zero-shot partition only.
    """

    tau: float = 0.01
    delta: Optional[float] = None
    margin: float = 0.5
    batch_size: int = 4
    epochs: int = 30
    lr: float = 0.01
    momentum: float = 0.9
    seed: int = 7
    loss_toggles: LossToggles = field(default_factory=LossToggles)
    clip_delta: Optional[float] = None

    def __post_init__(self):
        if self.tau <= 0:
            raise InvalidConfig(f"tau must be > 0, got {self.tau}")
        if self.delta is not None and self.delta <= 0:
            raise InvalidConfig(f"delta must be > 0, got {self.delta}")
        if self.clip_delta is not None and self.clip_delta <= 0:
            raise InvalidConfig(f"clip_delta must be > 0, got {self.clip_delta}")
        if self.margin < 0:
            raise InvalidConfig(f"margin must be >= 0, got {self.margin}")
        if self.batch_size < 1:
            raise InvalidConfig(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise InvalidConfig(f"epochs must be >= 0, got {self.epochs}")
        if self.lr <= 0:
            raise InvalidConfig(f"lr must be > 0, got {self.lr}")
        if not 0 <= self.momentum < 1:
            raise InvalidConfig(f"momentum must be in [0, 1), got {self.momentum}")

    def resolve(self, num_known_classes):
        """Concrete copy with delta filled in from the class count."""
        if self.delta is not None:
            return self
        return dataclasses.replace(self, delta=default_delta(num_known_classes))


@dataclass(frozen=True)
class TrainRun:
    """Outcome of one training run."""

    mode: Mode
    model: OdaClassifier
    history: Tuple[LossBreakdown, ...]
    final_checkpoint: Optional[str]


def _check_dataset(ds, bank, name):
    if ds.dim != bank.dim:
        raise DimensionMismatch(
            f"{name} dataset dim {ds.dim} != prototype dim {bank.dim}"
        )
    if ds.num_known_classes != bank.num_classes:
        raise DimensionMismatch(
            f"{name} dataset declares {ds.num_known_classes} known classes, "
            f"bank holds {bank.num_classes}"
        )


def write_training_log(history, path):
    """Append-free CSV dump of the loss history; repr floats, stable bytes."""
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(
                [
                    "step",
                    "l_source",
                    "l_ent",
                    "l_kwn",
                    "l_unk",
                    "total",
                    "count_source",
                    "count_kwn",
                    "count_unk",
                ]
            )
            for i, b in enumerate(history):
                w.writerow(
                    [
                        str(i),
                        repr(b.l_source),
                        repr(b.l_ent),
                        repr(b.l_kwn),
                        repr(b.l_unk),
                        repr(b.total),
                        str(b.count_source),
                        str(b.count_known),
                        str(b.count_unknown),
                    ]
                )
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def train(source, target, bank, hp, mode, init_model=None, out_dir=None):
    """Run one training regime end to end.

    Joint mode needs both datasets; pretraining needs source only;
    source-free adaptation needs target only plus init_model from the
    pretraining stage, and rejects any source dataset. When out_dir is
    given, the final checkpoint and the per-step loss log are written
    there. Aborts with NonFiniteLoss (carrying the step index and the last
    finite parameters) if the objective leaves the reals.
    """
    mode = Mode(mode)
    if mode == Mode.ODA:
        if source is None or target is None:
            raise ModeBatchMismatch("joint training requires source and target data")
    elif mode == Mode.SF_PRETRAIN:
        if source is None:
            raise ModeBatchMismatch("pretraining requires source data")
        if target is not None:
            raise ModeBatchMismatch("pretraining admits no target data")
    elif mode == Mode.SF_ADAPT:
        if source is not None:
            raise ModeBatchMismatch("adaptation is source-free: no source data")
        if target is None:
            raise ModeBatchMismatch("adaptation requires target data")
        if init_model is None:
            raise ModeBatchMismatch("adaptation requires a pretrained model")

    if source is not None:
        _check_dataset(source, bank, "source")
    if target is not None:
        _check_dataset(target, bank, "target")

    hp = hp.resolve(bank.num_classes)
    model = (
        init_model.copy()
        if init_model is not None
        else OdaClassifier.init_seeded(bank.dim, bank.num_classes, hp.seed)
    )
    if model.dim != bank.dim or model.num_classes != bank.num_classes:
        raise DimensionMismatch("initial model shape does not match the bank")

    partition = None
    if mode != Mode.SF_PRETRAIN:
        partition = partition_target(
            target, bank, hp.tau, hp.clip_delta if hp.clip_delta is not None else hp.delta
        )

    src_sampler = (
        BatchSampler(hp.batch_size, hp.seed, Domain.SOURCE)
        if mode in (Mode.ODA, Mode.SF_PRETRAIN)
        else None
    )
    tgt_sampler = (
        BatchSampler(hp.batch_size, hp.seed, Domain.TARGET)
        if mode in (Mode.ODA, Mode.SF_ADAPT)
        else None
    )
    steps_per_epoch = max(
        src_sampler.batches_per_epoch(source) if src_sampler else 0,
        tgt_sampler.batches_per_epoch(target) if tgt_sampler else 0,
    )

    opt = SgdMomentum(hp.lr, hp.momentum)
    history = []
    step = 0
    for epoch in range(hp.epochs):
        started = time.perf_counter()
        epoch_total = 0.0
        for _ in range(steps_per_epoch):
            src_batch = src_sampler.next_batch(source) if src_sampler else None
            tgt_batch = tgt_sampler.next_batch(target) if tgt_sampler else None
            breakdown, grads = loss_total(
                model, src_batch, tgt_batch, partition, hp, mode
            )
            if not np.isfinite(breakdown.total):
                raise NonFiniteLoss(
                    f"loss became non-finite at step {step}",
                    step=step,
                    model=model.copy(),
                )
            opt.step(model, grads)
            history.append(breakdown)
            epoch_total += breakdown.total
            step += 1
        elapsed = time.perf_counter() - started
        mean_total = epoch_total / steps_per_epoch if steps_per_epoch else 0.0
        print(
            f"epoch {epoch:3d}  mean total loss {mean_total:+.6f}  {elapsed:.2f}s",
            file=sys.stdout,
        )

    final_checkpoint = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        ckpt = out / CHECKPOINT_NAME
        model.save(ckpt)
        write_training_log(history, out / TRAINING_LOG_NAME)
        final_checkpoint = str(ckpt)

    return TrainRun(
        mode=mode, model=model, history=tuple(history), final_checkpoint=final_checkpoint
    )


DEFAULT_ABLATION_VARIANTS = (
    ("full", LossToggles(True, True, True, True)),
    ("wo_source", LossToggles(False, True, True, True)),
    ("wo_ent", LossToggles(True, False, True, True)),
    ("wo_kwn", LossToggles(True, True, False, True)),
    ("wo_unk", LossToggles(True, True, True, False)),
)


@dataclass(frozen=True)
class AblationRow:
    """One trained variant's headline metrics."""

    name: str
    toggles: LossToggles
    acc_kwn: float
    acc_unk: float
    h_score: float
    auroc: float


def _validate_variants(variants):
    configs = {v for _, v in variants}
    required = {t for _, t in DEFAULT_ABLATION_VARIANTS}
    missing = required - configs
    if missing:
        raise InvalidConfig(
            "ablation variants must include the full method and every "
            f"single-loss removal; missing {sorted(str(m) for m in missing)}"
        )


def run_ablation(source, target, bank, hp, variants=None, out_dir=None):
    """Train every toggle variant with identical seeds and tabulate metrics.

    Returns one row per variant, in input order; optionally writes
    ablation.csv under out_dir.
    """
    if variants is None:
        variants = DEFAULT_ABLATION_VARIANTS
    _validate_variants(variants)
    hp = hp.resolve(bank.num_classes)
    rows = []
    for name, toggles in variants:
        variant_hp = dataclasses.replace(hp, loss_toggles=toggles)
        run = train(source, target, bank, variant_hp, Mode.ODA)
        report = evaluate(run.model, target, hp.delta)
        rows.append(
            AblationRow(
                name=name,
                toggles=toggles,
                acc_kwn=report.acc_kwn,
                acc_unk=report.acc_unk,
                h_score=report.h_score,
                auroc=report.auroc,
            )
        )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        try:
            with open(out / "ablation.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(
                    [
                        "variant",
                        "use_source",
                        "use_ent",
                        "use_kwn",
                        "use_unk",
                        "acc_kwn",
                        "acc_unk",
                        "h_score",
                        "auroc",
                    ]
                )
                for r in rows:
                    w.writerow(
                        [
                            r.name,
                            str(int(r.toggles.use_source)),
                            str(int(r.toggles.use_ent)),
                            str(int(r.toggles.use_kwn)),
                            str(int(r.toggles.use_unk)),
                            repr(r.acc_kwn),
                            repr(r.acc_unk),
                            repr(r.h_score),
                            repr(r.auroc),
                        ]
                    )
        except OSError as exc:
            raise IoError(f"cannot write ablation.csv: {exc}") from exc
    return rows
