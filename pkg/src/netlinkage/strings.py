"""Edit-distance machinery for string-valued profile fields.

String fields distort toward values that are close in edit distance to the
latent truth, weighted by how common each value is overall.  All pairwise
distances over a field's observed support are precomputed so lookups during
sampling are O(1).
"""

from __future__ import annotations

import numpy as np


def levenshtein(a: str, b: str) -> int:
    """Levenshtein distance between two strings.

    Unit costs for insertion, deletion and substitution; case-sensitive;
    operates on Unicode code points.
    """
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i] + [0] * len(b)
        for j, cb in enumerate(b, start=1):
            cost = 0 if ca == cb else 1
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost)
        prev = cur
    return prev[-1]


def distance_matrix(levels, distance=levenshtein) -> np.ndarray:
    """Symmetric matrix of pairwise distances over a value support."""
    m = len(levels)
    out = np.zeros((m, m))
    for i in range(m):
        for j in range(i + 1, m):
            d = float(distance(levels[i], levels[j]))
            out[i, j] = d
            out[j, i] = d
    return out


class StringDistortion:
    """Distance-decay distortion distributions on a fixed string support.

    Given support values with empirical frequencies ``gamma`` and decay rate
    ``lam``, the distortion weight of observing value s when the truth is s0
    is gamma(s) * exp(-lam * d(s, s0)).  Two normalizations are in play:

    * ``pmf``: the weights above normalized to sum to one (a proper pmf);
    * the sampler's working measure, which instead multiplies by
      h(s0) = 1 / sum_s exp(-lam * d(s, s0)) — the frequency term is left
      out of that normalizer.  ``log_h`` and ``logw`` expose the pieces.
    """

    def __init__(self, levels, gamma, lam: float, distance=levenshtein):
        gamma = np.asarray(gamma, dtype=float)
        if len(levels) != gamma.shape[0]:
            raise ValueError("levels and gamma lengths differ")
        if lam < 0:
            raise ValueError("lam must be nonnegative")
        if np.any(gamma <= 0) or not np.isclose(gamma.sum(), 1.0):
            raise ValueError("gamma must be a strictly positive pmf")
        self.levels = tuple(levels)
        self.gamma = gamma
        self.log_gamma = np.log(gamma)
        self.lam = float(lam)
        self.dist = distance_matrix(levels, distance)
        # h(s0)^-1 = sum_s exp(-lam d(s, s0)); the s = s0 term contributes 1
        kernel = np.exp(-self.lam * self.dist)
        self.log_h = -np.log(kernel.sum(axis=0))

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    def h(self, truth: int) -> float:
        return float(np.exp(self.log_h[truth]))

    def logw(self, truth: int) -> np.ndarray:
        """Log working measure log gamma(s) + log h(truth) - lam*d(s, truth)."""
        return self.log_gamma + self.log_h[truth] - self.lam * self.dist[:, truth]

    def pmf(self, truth: int) -> np.ndarray:
        """Properly normalized distortion pmf given the true value."""
        logp = self.log_gamma - self.lam * self.dist[:, truth]
        logp -= logp.max()
        p = np.exp(logp)
        return p / p.sum()
