"""Training loop contracts: determinism, logs, mode gating, failure paths."""

import csv
import dataclasses

import numpy as np
import pytest

from odakit.data import Domain, SynthConfig, generate_synthetic
from odakit.errors import (
    DimensionMismatch,
    InvalidConfig,
    ModeBatchMismatch,
    NonFiniteLoss,
)
from odakit.losses import LossToggles, Mode
from odakit.model import OdaClassifier
from odakit.trainer import (
    CHECKPOINT_NAME,
    DEFAULT_ABLATION_VARIANTS,
    TRAINING_LOG_NAME,
    HyperParams,
    run_ablation,
    train,
)
from odakit.zero_shot import default_delta

LOG_HEADER = [
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


@pytest.fixture(scope="module")
def small():
    config = SynthConfig(
        dim=8,
        num_known=3,
        num_total=5,
        samples_per_class_source=6,
        samples_per_class_target=6,
        seed=11,
    )
    dataset, bank = generate_synthetic(config)
    return dataset.subset(Domain.SOURCE), dataset.subset(Domain.TARGET), bank


def _hp(**overrides):
    base = dict(epochs=2, seed=11)
    base.update(overrides)
    return HyperParams(**base)


def test_hyperparams_validation():
    for bad in (
        dict(tau=0.0),
        dict(tau=-1.0),
        dict(delta=0.0),
        dict(clip_delta=-0.5),
        dict(margin=-0.1),
        dict(batch_size=0),
        dict(epochs=-1),
        dict(lr=0.0),
        dict(momentum=1.0),
        dict(momentum=-0.1),
    ):
        with pytest.raises(InvalidConfig):
            HyperParams(**bad)


def test_hyperparams_resolve_fills_delta():
    assert HyperParams().resolve(10).delta == pytest.approx(default_delta(10))
    explicit = HyperParams(delta=0.9)
    assert explicit.resolve(10).delta == 0.9


def test_train_is_byte_deterministic(tmp_path, small):
    source, target, bank = small
    runs = []
    for sub in ("a", "b"):
        runs.append(train(source, target, bank, _hp(), Mode.ODA, out_dir=tmp_path / sub))
    assert runs[0].model == runs[1].model
    assert runs[0].history == runs[1].history
    for name in (CHECKPOINT_NAME, TRAINING_LOG_NAME):
        a = (tmp_path / "a" / name).read_bytes()
        b = (tmp_path / "b" / name).read_bytes()
        assert a == b


def test_training_log_columns_and_roundtrip(tmp_path, small):
    source, target, bank = small
    run = train(source, target, bank, _hp(), Mode.ODA, out_dir=tmp_path)
    with open(tmp_path / TRAINING_LOG_NAME, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == LOG_HEADER
    assert len(rows) - 1 == len(run.history)
    for i, (row, breakdown) in enumerate(zip(rows[1:], run.history)):
        assert int(row[0]) == i
        assert float(row[1]) == breakdown.l_source
        assert float(row[5]) == breakdown.total
        assert int(row[6]) == breakdown.count_source
        assert int(row[7]) == breakdown.count_known
        assert int(row[8]) == breakdown.count_unknown


def test_checkpoint_reloads_to_final_model(tmp_path, small):
    source, target, bank = small
    run = train(source, target, bank, _hp(epochs=1), Mode.ODA, out_dir=tmp_path)
    assert run.final_checkpoint == str(tmp_path / CHECKPOINT_NAME)
    # The checkpoint stores float32, so reload equals the model at that precision.
    loaded = OdaClassifier.load(run.final_checkpoint)
    assert np.array_equal(loaded.weights, run.model.weights.astype(np.float32))
    assert np.array_equal(loaded.biases, run.model.biases.astype(np.float32))


def test_zero_epochs_returns_seeded_init(small):
    source, target, bank = small
    run = train(source, target, bank, _hp(epochs=0), Mode.ODA)
    assert run.history == ()
    assert run.model == OdaClassifier.init_seeded(bank.dim, bank.num_classes, 11)
    assert run.final_checkpoint is None


def test_mode_dataset_gating(small):
    source, target, bank = small
    hp = _hp(epochs=1)
    pre = train(source, None, bank, hp, Mode.SF_PRETRAIN)
    cases = [
        (None, target, None, Mode.ODA),
        (source, None, None, Mode.ODA),
        (None, None, None, Mode.SF_PRETRAIN),
        (source, target, None, Mode.SF_PRETRAIN),
        (source, target, pre.model, Mode.SF_ADAPT),
        (None, None, pre.model, Mode.SF_ADAPT),
        (None, target, None, Mode.SF_ADAPT),
    ]
    for src, tgt, init, mode in cases:
        with pytest.raises(ModeBatchMismatch):
            train(src, tgt, bank, hp, mode, init_model=init)


def test_pretrain_then_adapt_touch_only_their_losses(small):
    source, target, bank = small
    pre = train(source, None, bank, _hp(), Mode.SF_PRETRAIN)
    assert len(pre.history) > 0
    for b in pre.history:
        assert b.l_ent == 0.0 and b.l_kwn == 0.0 and b.l_unk == 0.0
        assert b.count_known == 0 and b.count_unknown == 0
        assert b.count_source > 0
        assert b.total == b.l_source

    adapted = train(None, target, bank, _hp(), Mode.SF_ADAPT, init_model=pre.model)
    assert len(adapted.history) > 0
    for b in adapted.history:
        assert b.l_source == 0.0
        assert b.count_source == 0
        assert b.total == b.l_ent + b.l_kwn + b.l_unk
    # Adaptation started from the pretrained weights, not a fresh init.
    assert adapted.model != OdaClassifier.init_seeded(bank.dim, bank.num_classes, 11)


def test_clip_delta_overrides_partition_threshold(small):
    source, target, bank = small
    # Thresholds beyond the entropy range force one-sided partitions.
    everything_known = train(
        source, target, bank, _hp(epochs=1, clip_delta=10.0), Mode.ODA
    )
    n_targets = len(target.indices(Domain.TARGET))
    assert sum(b.count_unknown for b in everything_known.history) == 0
    assert sum(b.count_known for b in everything_known.history) >= n_targets

    everything_unknown = train(
        source, target, bank, _hp(epochs=1, clip_delta=1e-9), Mode.ODA
    )
    assert sum(b.count_known for b in everything_unknown.history) == 0
    assert sum(b.count_unknown for b in everything_unknown.history) >= n_targets


@pytest.mark.filterwarnings("ignore:overflow:RuntimeWarning")
@pytest.mark.filterwarnings("ignore:invalid value:RuntimeWarning")
def test_exploding_lr_aborts_with_context(small):
    source, _, bank = small
    hp = _hp(epochs=50, lr=1e308, momentum=0.9)
    with pytest.raises(NonFiniteLoss) as exc:
        train(source, None, bank, hp, Mode.SF_PRETRAIN)
    assert exc.value.step >= 1
    assert isinstance(exc.value.model, OdaClassifier)


def test_train_rejects_mismatched_shapes(small):
    source, target, bank = small
    hp = _hp(epochs=1)
    other, other_bank = generate_synthetic(
        SynthConfig(
            dim=6,
            num_known=3,
            num_total=5,
            samples_per_class_source=2,
            samples_per_class_target=2,
            seed=3,
        )
    )
    with pytest.raises(DimensionMismatch):
        train(other.subset(Domain.SOURCE), target, bank, hp, Mode.ODA)
    with pytest.raises(DimensionMismatch):
        train(source, target, other_bank, hp, Mode.ODA)
    wrong_init = OdaClassifier.init_seeded(bank.dim + 1, bank.num_classes, 0)
    with pytest.raises(DimensionMismatch):
        train(None, target, bank, hp, Mode.SF_ADAPT, init_model=wrong_init)


def test_ablation_rows_and_csv(tmp_path, small):
    source, target, bank = small
    rows = run_ablation(source, target, bank, _hp(epochs=1), out_dir=tmp_path)
    assert [r.name for r in rows] == ["full", "wo_source", "wo_ent", "wo_kwn", "wo_unk"]
    for r in rows:
        for v in (r.acc_kwn, r.acc_unk, r.h_score, r.auroc):
            assert 0.0 <= v <= 1.0

    with open(tmp_path / "ablation.csv", newline="") as fh:
        lines = list(csv.reader(fh))
    assert len(lines) == 6
    assert lines[0][0] == "variant"
    toggle_cols = {tuple(line[1:5]) for line in lines[1:]}
    assert ("1", "1", "1", "1") in toggle_cols
    assert len(toggle_cols) == 5
    for line, row in zip(lines[1:], rows):
        assert float(line[8]) == row.auroc


def test_ablation_requires_full_variant_set(small):
    source, target, bank = small
    partial = DEFAULT_ABLATION_VARIANTS[:3]
    with pytest.raises(InvalidConfig):
        run_ablation(source, target, bank, _hp(epochs=1), variants=partial)


def test_ablation_accepts_renamed_but_complete_variants(small):
    source, target, bank = small
    renamed = tuple(
        (f"v{i}", toggles) for i, (_, toggles) in enumerate(DEFAULT_ABLATION_VARIANTS)
    )
    extra = renamed + (("all_off", LossToggles(False, False, False, False)),)
    rows = run_ablation(source, target, bank, _hp(epochs=1), variants=extra)
    assert [r.name for r in rows] == ["v0", "v1", "v2", "v3", "v4", "all_off"]


def test_toggled_variants_differ_from_full(small):
    source, target, bank = small
    hp = _hp(epochs=1)
    full = train(source, target, bank, hp, Mode.ODA)
    wo_source = train(
        source,
        target,
        bank,
        dataclasses.replace(hp, loss_toggles=LossToggles(False, True, True, True)),
        Mode.ODA,
    )
    assert full.model != wo_source.model
    assert any(b.l_source != 0.0 for b in full.history)
    assert all(b.l_source == 0.0 for b in wo_source.history)
