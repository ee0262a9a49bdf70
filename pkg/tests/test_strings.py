"""Edit distance and string distortion measure."""

import math
from functools import lru_cache

import numpy as np
import pytest

from netlinkage.strings import StringDistortion, distance_matrix, levenshtein


def _lev_oracle(a, b):
    # independent reference: plain memoized recursion
    @lru_cache(maxsize=None)
    def rec(i, j):
        if i == 0:
            return j
        if j == 0:
            return i
        return min(rec(i - 1, j) + 1,
                   rec(i, j - 1) + 1,
                   rec(i - 1, j - 1) + (a[i - 1] != b[j - 1]))
    return rec(len(a), len(b))


def test_levenshtein_known_values():
    assert levenshtein("kitten", "sitting") == 3
    assert levenshtein("flaw", "lawn") == 2
    assert levenshtein("", "abc") == 3
    assert levenshtein("abc", "") == 3
    assert levenshtein("abc", "abc") == 0
    assert levenshtein("ca", "abc") == 3
    assert levenshtein("a", "b") == 1


def test_levenshtein_case_and_unicode():
    assert levenshtein("Anna", "anna") == 1
    assert levenshtein("café", "cafe") == 1
    assert levenshtein("über", "über") == 0


def test_levenshtein_matches_recursive_oracle():
    rng = np.random.default_rng(42)
    letters = "abcde"
    for _ in range(200):
        na, nb = rng.integers(0, 8, size=2)
        a = "".join(rng.choice(list(letters), size=na))
        b = "".join(rng.choice(list(letters), size=nb))
        assert levenshtein(a, b) == _lev_oracle(a, b)


def test_levenshtein_metric_properties():
    rng = np.random.default_rng(7)
    words = ["".join(rng.choice(list("abc"), size=rng.integers(0, 6)))
             for _ in range(12)]
    for a in words:
        assert levenshtein(a, a) == 0
        for b in words:
            d = levenshtein(a, b)
            assert d == levenshtein(b, a)
            assert (d == 0) == (a == b)
            for c in words:
                assert d <= levenshtein(a, c) + levenshtein(c, b)


def test_distance_matrix():
    levels = ("ab", "abc", "b")
    mat = distance_matrix(levels, levenshtein)
    expected = np.array([[0, 1, 1], [1, 0, 2], [1, 2, 0]], dtype=float)
    np.testing.assert_allclose(mat, expected)


def test_distortion_h_and_pmf():
    levels = ("ab", "abc", "b")
    gamma = np.array([0.5, 0.3, 0.2])
    lam = 0.7
    sd = StringDistortion(levels, gamma, lam)
    d = distance_matrix(levels, levenshtein)
    for t in range(3):
        # h is one over the exponential-decay mass around the truth
        h = 1.0 / np.exp(-lam * d[:, t]).sum()
        np.testing.assert_allclose(sd.h(t), h, rtol=1e-12)
        np.testing.assert_allclose(math.exp(sd.log_h[t]), h, rtol=1e-12)
        # the h-based working measure: gamma(s) h(t) exp(-lam d(s,t))
        np.testing.assert_allclose(
            np.exp(sd.logw(t)), gamma * h * np.exp(-lam * d[:, t]), rtol=1e-12)
        # the normalized pmf over the support
        pmf = sd.pmf(t)
        assert pmf.shape == (3,)
        np.testing.assert_allclose(pmf.sum(), 1.0, rtol=1e-12)
        raw = gamma * np.exp(-lam * d[:, t])
        np.testing.assert_allclose(pmf, raw / raw.sum(), rtol=1e-12)


def test_distortion_lambda_zero_ignores_distance():
    levels = ("aa", "bb", "cccc")
    gamma = np.array([0.2, 0.5, 0.3])
    sd = StringDistortion(levels, gamma, 0.0)
    for t in range(3):
        np.testing.assert_allclose(sd.pmf(t), gamma, rtol=1e-12)
        np.testing.assert_allclose(sd.h(t), 1.0 / 3.0, rtol=1e-12)


def test_distortion_rejects_bad_gamma():
    with pytest.raises(ValueError):
        StringDistortion(("a", "b"), np.array([0.5, -0.1]), 1.0)
