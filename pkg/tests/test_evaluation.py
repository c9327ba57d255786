"""Evaluation metrics against closed-form values and brute-force oracles."""

import numpy as np
import pytest

from odakit.data import Domain, EmbeddingDataset, EmbeddingRecord
from odakit.errors import (
    DimensionMismatch,
    EmptyClass,
    InvariantError,
    MissingLabels,
    OutOfRange,
)
from odakit.evaluation import (
    HIST_BINS,
    auroc,
    evaluate,
    evaluate_zero_shot,
    h_score,
    read_report_csv,
    write_report,
)
from odakit.model import OdaClassifier


def test_h_score_reference_values():
    assert h_score(0.9, 0.7) == 0.7875
    assert h_score(1.0, 1.0) == 1.0
    assert h_score(0.5, 0.5) == 0.5


def test_h_score_zero_collapse():
    assert h_score(0.0, 0.0) == 0.0
    assert h_score(0.0, 0.9) == 0.0
    assert h_score(0.9, 0.0) == 0.0


def test_h_score_rejects_out_of_range():
    for bad in (-0.1, 1.1, 2.0):
        with pytest.raises(OutOfRange):
            h_score(bad, 0.5)
        with pytest.raises(OutOfRange):
            h_score(0.5, bad)


def test_h_score_below_arithmetic_mean():
    rng = np.random.default_rng(80)
    for _ in range(100):
        a, b = rng.uniform(0.01, 1.0, size=2)
        h = h_score(a, b)
        assert min(a, b) <= h <= (a + b) / 2 + 1e-15


def test_auroc_reference_value():
    # Pairs (k, u): 0.1<0.15, 0.1<0.3, 0.2>0.15, 0.2<0.3 -> 3 of 4.
    assert auroc([0.1, 0.2], [0.15, 0.3]) == 0.75


def test_auroc_perfect_and_inverted_separation():
    assert auroc([0.1, 0.2, 0.3], [1.0, 2.0]) == 1.0
    assert auroc([1.0, 2.0], [0.1, 0.2, 0.3]) == 0.0


def test_auroc_ties_count_half():
    assert auroc([0.5], [0.5]) == 0.5
    assert auroc([1.0, 1.0, 1.0], [1.0, 1.0]) == 0.5
    # One tie out of two pairs: 0.5*(1 + 0.5).
    assert auroc([0.5, 0.0], [0.5]) == 0.75


def test_auroc_rejects_empty_side():
    with pytest.raises(EmptyClass):
        auroc([], [1.0])
    with pytest.raises(EmptyClass):
        auroc([1.0], [])


def test_auroc_antisymmetry():
    rng = np.random.default_rng(81)
    for _ in range(50):
        a = rng.integers(0, 8, size=rng.integers(1, 20)).astype(float)
        b = rng.integers(0, 8, size=rng.integers(1, 20)).astype(float)
        assert auroc(a, b) + auroc(b, a) == pytest.approx(1.0, abs=1e-12)


def test_auroc_invariant_under_monotone_transform():
    rng = np.random.default_rng(82)
    for _ in range(50):
        a = rng.normal(size=rng.integers(1, 25))
        b = rng.normal(size=rng.integers(1, 25))
        direct = auroc(a, b)
        assert auroc(np.exp(a), np.exp(b)) == pytest.approx(direct, abs=1e-12)
        assert auroc(a**3 + 2 * a, b**3 + 2 * b) == pytest.approx(direct, abs=1e-12)


def _auroc_pairwise(known, unknown):
    total = 0.0
    for u in unknown:
        for k in known:
            if u > k:
                total += 1.0
            elif u == k:
                total += 0.5
    return total / (len(known) * len(unknown))


def test_auroc_matches_pairwise_oracle():
    rng = np.random.default_rng(83)
    for trial in range(100):
        n_k = int(rng.integers(1, 30))
        n_u = int(rng.integers(1, 30))
        if trial % 2 == 0:
            # Integer scores force heavy ties.
            known = rng.integers(0, 6, size=n_k).astype(np.float64)
            unknown = rng.integers(0, 6, size=n_u).astype(np.float64)
        else:
            known = rng.normal(size=n_k)
            unknown = rng.normal(0.4, 1.0, size=n_u)
        fast = auroc(known, unknown)
        assert abs(fast - _auroc_pairwise(known, unknown)) < 1e-9


def _rec(rec_id, vec, label, domain):
    return EmbeddingRecord(rec_id, np.asarray(vec, dtype=np.float32), label, domain)


def _crafted_dataset():
    """dim 3, 3 known classes; the model below predicts argmax of the vector.

    Known-class hits: class 0 gets 1 of 4, class 1 gets 1 of 1, class 2
    gets 0 of 1. The zero-vector unknown yields uniform probabilities, so
    its entropy ln 3 exceeds any delta below that and it is rejected.
    """
    e = np.eye(3) * 10.0
    records = [
        _rec(0, e[0], 0, Domain.SOURCE),
        _rec(1, e[0], 0, Domain.TARGET),
        _rec(2, e[1], 0, Domain.TARGET),
        _rec(3, e[1], 0, Domain.TARGET),
        _rec(4, e[1], 0, Domain.TARGET),
        _rec(5, e[1], 1, Domain.TARGET),
        _rec(6, e[1], 2, Domain.TARGET),
        _rec(7, np.zeros(3), 3, Domain.TARGET),
    ]
    return EmbeddingDataset(3, 3, 4, records)


def _argmax_model():
    return OdaClassifier(np.eye(3), np.zeros(3))


def test_evaluate_micro_accuracy_and_confusion():
    report = evaluate(_argmax_model(), _crafted_dataset(), delta=0.6)
    assert report.acc_kwn == pytest.approx(2 / 6)
    assert report.acc_unk == 1.0
    assert report.h_score == pytest.approx(h_score(2 / 6, 1.0))
    assert report.auroc == 1.0
    expect = np.array(
        [
            [1, 3, 0, 0],
            [0, 1, 0, 0],
            [0, 1, 0, 0],
            [0, 0, 0, 1],
        ]
    )
    assert np.array_equal(report.confusion, expect)
    assert report.confusion.sum() == 7


def test_evaluate_macro_averages_per_class():
    micro = evaluate(_argmax_model(), _crafted_dataset(), delta=0.6)
    macro = evaluate(_argmax_model(), _crafted_dataset(), delta=0.6, macro=True)
    assert micro.acc_kwn == pytest.approx(2 / 6)
    assert macro.acc_kwn == pytest.approx((1 / 4 + 1.0 + 0.0) / 3)
    assert macro.acc_unk == micro.acc_unk


def test_evaluate_histograms_cover_all_records():
    report = evaluate(_argmax_model(), _crafted_dataset(), delta=0.6)
    assert report.entropy_bin_edges.shape == (HIST_BINS + 1,)
    assert report.entropy_bin_edges[0] == 0.0
    assert report.entropy_bin_edges[-1] == pytest.approx(np.log(3))
    assert report.entropy_hist_known.sum() == 6
    assert report.entropy_hist_unknown.sum() == 1
    # The uniform unknown sits in the top bin.
    assert report.entropy_hist_unknown[-1] == 1


def test_evaluate_rejects_mismatched_model():
    data = _crafted_dataset()
    with pytest.raises(DimensionMismatch):
        evaluate(OdaClassifier(np.eye(4), np.zeros(4)), data, delta=0.6)
    with pytest.raises(DimensionMismatch):
        evaluate(OdaClassifier(np.zeros((2, 3)), np.zeros(2)), data, delta=0.6)


def test_evaluate_rejects_unlabeled_targets():
    records = [
        _rec(0, [1.0, 0.0, 0.0], 0, Domain.SOURCE),
        _rec(1, [1.0, 0.0, 0.0], -1, Domain.TARGET),
    ]
    data = EmbeddingDataset(3, 3, 4, records)
    with pytest.raises(MissingLabels):
        evaluate(_argmax_model(), data, delta=0.6)


def test_evaluate_requires_target_records():
    records = [_rec(0, [1.0, 0.0, 0.0], 0, Domain.SOURCE)]
    data = EmbeddingDataset(3, 3, 4, records)
    with pytest.raises(InvariantError):
        evaluate(_argmax_model(), data, delta=0.6)


def test_evaluate_requires_both_ground_truth_groups():
    # All-known targets leave the unknown score set empty.
    records = [
        _rec(0, [10.0, 0.0, 0.0], 0, Domain.SOURCE),
        _rec(1, [10.0, 0.0, 0.0], 0, Domain.TARGET),
    ]
    data = EmbeddingDataset(3, 3, 4, records)
    with pytest.raises(EmptyClass):
        evaluate(_argmax_model(), data, delta=0.6)


def test_evaluate_zero_shot_consistency(seed7):
    _, dataset, bank = seed7
    report = evaluate_zero_shot(bank, dataset)
    n_targets = len(dataset.indices(Domain.TARGET))
    assert report.confusion.sum() == n_targets
    assert report.entropy_hist_known.sum() + report.entropy_hist_unknown.sum() == n_targets
    assert report.h_score == h_score(report.acc_kwn, report.acc_unk)
    assert 0.0 <= report.auroc <= 1.0
    with pytest.raises(DimensionMismatch):
        evaluate_zero_shot(bank, _crafted_dataset())


def test_report_roundtrip_and_byte_determinism(tmp_path, seed7):
    _, dataset, bank = seed7
    report = evaluate_zero_shot(bank, dataset)
    path_a = write_report(report, tmp_path / "a")
    write_report(report, tmp_path / "b")

    metrics = read_report_csv(path_a)
    assert metrics["acc_kwn"] == report.acc_kwn
    assert metrics["acc_unk"] == report.acc_unk
    assert metrics["h_score"] == report.h_score
    assert metrics["auroc"] == report.auroc

    for name in ("report.csv", "report.txt", "confusion.csv", "entropy_hist.csv"):
        a = (tmp_path / "a" / name).read_bytes()
        b = (tmp_path / "b" / name).read_bytes()
        assert a == b

    hist_lines = (tmp_path / "a" / "entropy_hist.csv").read_text().strip().splitlines()
    assert len(hist_lines) == HIST_BINS + 1
    confusion_lines = (tmp_path / "a" / "confusion.csv").read_text().strip().splitlines()
    assert len(confusion_lines) == dataset.num_known_classes + 2
