"""Hand-checked values for the pairwise scores and information criteria."""

import math

import numpy as np
import pytest

from netlinkage.data import DataError, Dataset, PairSet, ProfileTable, RecordRef
from netlinkage.evaluation import (ConfusionCounts, PointwiseAccumulator,
                                   confusion, dic, precision_recall_f1, waic)


def _bare_dataset(sizes):
    tables = [ProfileTable(j + 1, np.zeros((s, 0), np.int32),
                           [str(i + 1) for i in range(s)])
              for j, s in enumerate(sizes)]
    return Dataset([], tables)


def test_waic_hand_value():
    m = np.array([[-1.0, -1.0], [-3.0, -3.0]])
    res = waic(m)
    lppd = 2 * math.log((math.exp(-1) + math.exp(-3)) / 2)
    np.testing.assert_allclose(res.lppd, lppd, rtol=1e-12)
    # per-column population variance of [-1, -3] is 1
    np.testing.assert_allclose(res.p_waic, 2.0, rtol=1e-12)
    np.testing.assert_allclose(res.waic, -2 * (lppd - 2.0), rtol=1e-12)


def test_dic_hand_value():
    m = np.array([[-1.0, -1.0], [-3.0, -3.0]])
    res = dic(m)
    lppd = 2 * math.log((math.exp(-1) + math.exp(-3)) / 2)
    np.testing.assert_allclose(res.d_bar, 8.0, rtol=1e-12)
    np.testing.assert_allclose(res.d_hat, -2 * lppd, rtol=1e-12)
    np.testing.assert_allclose(res.p_d, 8.0 + 2 * lppd, rtol=1e-12)
    np.testing.assert_allclose(res.dic, res.d_bar + res.p_d, rtol=1e-12)
    assert res.p_d >= 0


def test_duplicating_samples_changes_nothing():
    rng = np.random.default_rng(7)
    m = rng.normal(-2.0, 1.0, size=(9, 14))
    doubled = np.vstack([m, m])
    w1, w2 = waic(m), waic(doubled)
    np.testing.assert_allclose(w1.lppd, w2.lppd, rtol=1e-12)
    np.testing.assert_allclose(w1.p_waic, w2.p_waic, rtol=1e-12)
    np.testing.assert_allclose(w1.waic, w2.waic, rtol=1e-12)
    d1, d2 = dic(m), dic(doubled)
    np.testing.assert_allclose(d1.d_bar, d2.d_bar, rtol=1e-12)
    np.testing.assert_allclose(d1.dic, d2.dic, rtol=1e-12)


def test_accumulator_matches_matrix_and_slices():
    rng = np.random.default_rng(11)
    m = rng.normal(-3.0, 2.0, size=(37, 23))
    acc = PointwiseAccumulator(23)
    for row in m:
        acc.add_row(row)
    for start, stop in [(0, None), (0, 10), (10, 23), (5, 6)]:
        w, d = acc.results(start, stop)
        sub = m[:, start:(23 if stop is None else stop)]
        wr, dr = waic(sub), dic(sub)
        np.testing.assert_allclose(w.waic, wr.waic, rtol=1e-9)
        np.testing.assert_allclose(w.lppd, wr.lppd, rtol=1e-9)
        np.testing.assert_allclose(w.p_waic, wr.p_waic, rtol=1e-9)
        np.testing.assert_allclose(d.dic, dr.dic, rtol=1e-9)
        np.testing.assert_allclose(d.p_d, dr.p_d, rtol=1e-9)


def test_accumulator_handles_extreme_magnitudes():
    # streaming logsumexp must survive columns living at -1e4
    m = np.array([[-10000.0, -1.0], [-10002.0, -2.0], [-9999.0, -1.5]])
    acc = PointwiseAccumulator(2)
    for row in m:
        acc.add_row(row)
    w, d = acc.results()
    wr = waic(m)
    np.testing.assert_allclose(w.waic, wr.waic, rtol=1e-9)
    assert np.isfinite(w.waic) and np.isfinite(d.dic)


def test_criteria_input_validation():
    with pytest.raises(DataError):
        waic(np.array([[-1.0, -2.0]]))          # single sample
    with pytest.raises(DataError):
        dic(np.array([-1.0, -2.0]))             # not a matrix
    acc = PointwiseAccumulator(3)
    with pytest.raises(DataError):
        acc.add_row(np.zeros(2))
    acc.add_row(np.zeros(3))
    with pytest.raises(DataError):
        acc.results()


def test_confusion_hand_counts():
    ds = _bare_dataset([3, 2])
    truth = PairSet([(RecordRef(1, 1), RecordRef(2, 1)),
                     (RecordRef(1, 2), RecordRef(2, 2))])
    pred = PairSet([(RecordRef(1, 1), RecordRef(2, 1)),
                    (RecordRef(1, 3), RecordRef(2, 2))])
    c = confusion(pred, truth, ds)
    assert (c.tp, c.fp, c.fn, c.tn) == (1, 1, 1, 3)
    assert c.total == 6
    s = precision_recall_f1(c)
    assert s.recall == pytest.approx(0.5)
    assert s.precision == pytest.approx(0.5)
    assert s.f1 == pytest.approx(0.5)


def test_confusion_three_files():
    ds = _bare_dataset([2, 2, 2])
    truth = PairSet([(RecordRef(1, 1), RecordRef(2, 1)),
                     (RecordRef(2, 2), RecordRef(3, 1))])
    pred = PairSet([])
    c = confusion(pred, truth, ds)
    # negatives span all three cross-file blocks: 4 + 4 + 4 pairs
    assert (c.tp, c.fp, c.fn, c.tn) == (0, 0, 2, 10)
    c2 = confusion(truth, truth, ds)
    assert (c2.tp, c2.fp, c2.fn, c2.tn) == (2, 0, 0, 10)


def test_confusion_rejects_out_of_range():
    ds = _bare_dataset([3, 2])
    bad = PairSet([(RecordRef(1, 4), RecordRef(2, 1))])
    with pytest.raises(DataError):
        confusion(bad, PairSet([]), ds)


def test_scores_degenerate_cases():
    s = precision_recall_f1(ConfusionCounts(0, 0, 0, 10))
    assert s.recall is None and s.precision is None and s.f1 is None
    s = precision_recall_f1(ConfusionCounts(0, 2, 0, 8))
    assert s.recall is None and s.precision == 0.0 and s.f1 is None
    s = precision_recall_f1(ConfusionCounts(0, 2, 3, 5))
    assert s.recall == 0.0 and s.precision == 0.0 and s.f1 is None
    s = precision_recall_f1(ConfusionCounts(4, 0, 0, 5))
    assert s.recall == 1.0 and s.precision == 1.0 and s.f1 == 1.0
