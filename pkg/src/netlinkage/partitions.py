"""Combinatorics of linkage partitions.

A valid linkage partition of records from J files puts every record in
either a singleton cluster or a pair spanning two distinct files.  Records
are identified by 0-based ``(file, index)`` tuples throughout this module.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def _pair_slots(n_files: int):
    return [(j, k) for j in range(n_files) for k in range(j + 1, n_files)]


def max_pairs(sizes) -> int:
    """Largest number of cross-file pairs a valid partition can contain."""
    sizes = list(sizes)
    if not sizes or any(s < 0 for s in sizes):
        raise ValueError("sizes must be nonnegative")
    total = sum(sizes)
    return min(total - max(sizes), total // 2)


def _compositions(total, caps):
    # all ways to write `total` as ordered nonnegative terms bounded by caps
    if not caps:
        if total == 0:
            yield ()
        return
    head = caps[0]
    for v in range(min(total, head) + 1):
        for rest in _compositions(total - v, caps[1:]):
            yield (v,) + rest


def _composition_weight(sizes, slots, comp) -> int:
    # number of partitions realizing pair counts `comp` over `slots`
    used = [0] * len(sizes)
    for (j, k), m in zip(slots, comp):
        used[j] += m
        used[k] += m
    w = 1
    for j, s in enumerate(sizes):
        if used[j] > s:
            return 0
        # multinomial: which records of file j go to each slot group
        w *= math.factorial(s) // math.factorial(s - used[j])
    for m in comp:
        # dividing group orderings back out, then counting bijections
        w //= math.factorial(m)
    return w


def count_partitions_with_pairs(sizes, n_pairs: int) -> int:
    """Number of valid partitions containing exactly ``n_pairs`` pairs."""
    sizes = list(sizes)
    if n_pairs < 0 or n_pairs > max_pairs(sizes):
        return 0
    slots = _pair_slots(len(sizes))
    caps = [min(sizes[j], sizes[k]) for j, k in slots]
    total = 0
    for comp in _compositions(n_pairs, caps):
        total += _composition_weight(sizes, slots, comp)
    return total


def count_partitions(sizes) -> list:
    """Partition counts indexed by number of pairs, 0..max_pairs."""
    return [count_partitions_with_pairs(sizes, m) for m in range(max_pairs(sizes) + 1)]


def enumerate_partitions(sizes):
    """Yield every valid partition as a sorted tuple of record pairs.

    Each pair is ``((j, i), (k, i'))`` with j < k.  Singletons are implicit.
    Only practical for a handful of records; used by exactness oracles.
    """
    records = [(j, i) for j, s in enumerate(sizes) for i in range(s)]

    def rec(pos, used, pairs):
        while pos < len(records) and records[pos] in used:
            pos += 1
        if pos == len(records):
            yield tuple(sorted(pairs))
            return
        r = records[pos]
        # r stays a singleton
        yield from rec(pos + 1, used, pairs)
        # or pairs with a later record from a different file
        for q in records[pos + 1:]:
            if q in used or q[0] == r[0]:
                continue
            yield from rec(pos + 1, used | {r, q}, pairs + [(r, q)])

    yield from rec(0, frozenset(), [])


def sample_partition(sizes, rng: np.random.Generator, n_pairs=None):
    """Draw a uniform valid partition, optionally with a fixed pair count.

    Returns the partition as a sorted list of record pairs.
    """
    sizes = list(sizes)
    if n_pairs is None:
        counts = count_partitions(sizes)
        total = sum(counts)
        probs = np.array(counts, dtype=float) / total
        n_pairs = int(rng.choice(len(counts), p=probs))
    if count_partitions_with_pairs(sizes, n_pairs) == 0:
        raise ValueError(f"no valid partition with {n_pairs} pairs for sizes {sizes}")
    slots = _pair_slots(len(sizes))
    caps = [min(sizes[j], sizes[k]) for j, k in slots]
    comps = []
    weights = []
    for comp in _compositions(n_pairs, caps):
        w = _composition_weight(sizes, slots, comp)
        if w > 0:
            comps.append(comp)
            weights.append(w)
    weights = np.array(weights, dtype=float)
    comp = comps[int(rng.choice(len(comps), p=weights / weights.sum()))]

    # uniform given the composition: random record groups per file, random bijections
    perms = [rng.permutation(s) for s in sizes]
    offsets = [0] * len(sizes)
    pairs = []
    for (j, k), m in zip(slots, comp):
        left = perms[j][offsets[j]:offsets[j] + m]
        right = perms[k][offsets[k]:offsets[k] + m]
        offsets[j] += m
        offsets[k] += m
        for a, b in zip(left, right):
            pairs.append(((j, int(a)), (k, int(b))))
    return sorted(pairs)


def pairs_to_labels(sizes, pairs) -> list:
    """Convert a pair list to per-file 0-based cluster label arrays.

    Cluster ids are assigned in first-appearance order scanning records in
    (file, index) order, so labels are contiguous 0..N-1.
    """
    sizes = list(sizes)
    partner = {}
    for (a, b) in pairs:
        if a in partner or b in partner:
            raise ValueError("record appears in more than one pair")
        if a[0] == b[0]:
            raise ValueError("pair within a single file")
        partner[a] = b
        partner[b] = a
    labels = [np.full(s, -1, dtype=np.int64) for s in sizes]
    nxt = 0
    for j, s in enumerate(sizes):
        for i in range(s):
            if labels[j][i] >= 0:
                continue
            labels[j][i] = nxt
            p = partner.get((j, i))
            if p is not None:
                pj, pi = p
                if pj < j or (pj == j and pi <= i):
                    raise ValueError("pair list not canonical")
                labels[pj][pi] = nxt
            nxt += 1
    return labels
