"""Point estimators against hand cases and brute-force loss minimization."""

import numpy as np
import pytest

from netlinkage.data import DataError, PairSet, RecordRef
from netlinkage.estimators import (MatchProbabilityTable,
                                   binder_point_estimate, match_probabilities,
                                   mpmms_point_estimate,
                                   population_size_posterior)
from netlinkage.partitions import enumerate_partitions


class _FakeSamples:
    """Minimal stand-in carrying labelled draws in record order."""

    def __init__(self, labels, sizes):
        self.linkage_labels = np.asarray(labels, dtype=np.int32)
        self.sizes = list(sizes)
        self._offsets = np.cumsum([0] + self.sizes)

    def ref_of_global(self, g):
        j = int(np.searchsorted(self._offsets, g, side="right") - 1)
        return j, int(g - self._offsets[j])

    def population_sizes(self):
        return np.array([len(set(row.tolist()))
                         for row in self.linkage_labels])


def _rr(j, i):
    return RecordRef(j, i)


def _pair(ja, ia, jb, ib):
    a, b = _rr(ja, ia), _rr(jb, ib)
    return (a, b) if a < b else (b, a)


def _hand_samples():
    # sizes (2, 2); rows: both pairs, both pairs, 11-22 only, singletons
    labels = [[1, 2, 1, 2],
              [1, 2, 1, 2],
              [1, 2, 3, 1],
              [1, 2, 3, 4]]
    return _FakeSamples(labels, [2, 2])


def test_match_probabilities_hand_values():
    table = match_probabilities(_hand_samples())
    assert table.n_samples == 4
    assert table[(_rr(1, 1), _rr(2, 1))] == pytest.approx(0.5)
    assert table[(_rr(2, 1), _rr(1, 1))] == pytest.approx(0.5)
    assert table[(_rr(1, 2), _rr(2, 2))] == pytest.approx(0.5)
    assert table[(_rr(1, 1), _rr(2, 2))] == pytest.approx(0.25)
    assert table[(_rr(1, 2), _rr(2, 1))] == 0.0
    assert len(table.items()) == 3


def test_population_posterior_hand_values():
    post = population_size_posterior(_hand_samples())
    assert post.mean == pytest.approx(2.75)
    assert post.sd == pytest.approx(np.std([2, 2, 3, 4], ddof=1))
    assert post.histogram == {2: 2, 3: 1, 4: 1}
    assert post.support == (2, 4)


def test_binder_threshold_is_strict():
    table = match_probabilities(_hand_samples())
    est = binder_point_estimate(table, loss_ratio=1.0)
    # every probability is <= 0.5, so nothing clears the 0.5 threshold
    assert len(est.pairs) == 0
    assert est.method == "pairwise-loss"
    assert est.threshold == pytest.approx(0.5)
    assert est.exact

    est2 = binder_point_estimate(table, loss_ratio=0.5)
    assert est2.threshold == pytest.approx(1.0 / 3.0)
    assert est2.pairs.as_set() == PairSet(
        [_pair(1, 1, 2, 1), _pair(1, 2, 2, 2)]).as_set()


def test_binder_rejects_bad_loss_ratio():
    table = MatchProbabilityTable({}, 1)
    with pytest.raises(DataError):
        binder_point_estimate(table, loss_ratio=0.0)
    with pytest.raises(DataError):
        binder_point_estimate(table, loss_ratio=-2.0)


def _expected_loss(linked, probs, loss_ratio):
    loss = 0.0
    for pair, p in probs.items():
        if pair in linked:
            loss += loss_ratio * (1.0 - p)
        else:
            loss += p
    return loss


def _all_matchings(sizes):
    for pairs in enumerate_partitions(sizes):
        yield {_pair(ja + 1, ia + 1, jb + 1, ib + 1)
               for (ja, ia), (jb, ib) in pairs}


def test_binder_matches_brute_force_minimum():
    rng = np.random.default_rng(23)
    sizes = [3, 3]
    all_pairs = [_pair(1, a + 1, 2, b + 1) for a in range(3) for b in range(3)]
    for trial in range(12):
        probs = {pr: float(rng.random()) for pr in all_pairs}
        table = MatchProbabilityTable(dict(probs), 100)
        for loss_ratio in (0.5, 1.0, 2.0):
            est = binder_point_estimate(table, loss_ratio)
            got = _expected_loss(est.pairs.as_set(), probs, loss_ratio)
            best = min(_expected_loss(z, probs, loss_ratio)
                       for z in _all_matchings(sizes))
            np.testing.assert_allclose(got, best, rtol=1e-12, atol=1e-12)


def test_binder_greedy_fallback_agrees_here():
    probs = {_pair(1, 1, 2, 1): 0.9, _pair(1, 1, 2, 2): 0.8,
             _pair(1, 2, 2, 2): 0.7}
    table = MatchProbabilityTable(probs, 10)
    exact = binder_point_estimate(table, 1.0)
    greedy = binder_point_estimate(table, 1.0, exact_limit=0)
    assert greedy.method == "pairwise-loss-greedy"
    assert not greedy.exact
    assert greedy.pairs.as_set() == exact.pairs.as_set() == PairSet(
        [_pair(1, 1, 2, 1), _pair(1, 2, 2, 2)]).as_set()


def test_mpmms_keeps_mutually_modal_pairs():
    est = mpmms_point_estimate(_hand_samples())
    assert est.method == "modal-membership"
    assert est.pairs.as_set() == PairSet(
        [_pair(1, 1, 2, 1), _pair(1, 2, 2, 2)]).as_set()


def test_mpmms_drops_singleton_dominated_pairs():
    labels = [[1, 2, 1, 3],
              [1, 2, 3, 4],
              [1, 2, 3, 4],
              [1, 2, 3, 4]]
    est = mpmms_point_estimate(_FakeSamples(labels, [2, 2]))
    assert len(est.pairs) == 0


def test_mpmms_resolves_conflicts_by_frequency_then_order():
    labels = [[1, 2, 1, 3],    # 11-21
              [1, 2, 1, 3],
              [1, 2, 3, 1],    # 11-22
              [1, 2, 3, 1]]
    est = mpmms_point_estimate(_FakeSamples(labels, [2, 2]))
    assert est.pairs.as_set() == PairSet([_pair(1, 1, 2, 1)]).as_set()


def test_probability_table_csv_roundtrip(tmp_path):
    table = match_probabilities(_hand_samples())
    path = tmp_path / "probs.csv"
    table.to_csv(path)
    back = MatchProbabilityTable.from_csv(path, n_samples=4)
    assert back.n_samples == 4
    assert dict(back.items()) == pytest.approx(dict(table.items()))
    bad = tmp_path / "bad.csv"
    bad.write_text("x,y\n1,2\n")
    with pytest.raises(DataError):
        MatchProbabilityTable.from_csv(bad)
