"""Point estimates and posterior summaries of the linkage structure.

Everything here consumes a PosteriorSampleSet.  Match probabilities are
co-assignment frequencies across retained samples; the pairwise-loss
estimate solves a maximum-weight matching over pairs whose probability
clears the loss-ratio threshold; the most-probable-clusters estimate keeps
pairs that are the modal cluster of both their members.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import networkx as nx
import numpy as np

from .data import DataError, PairSet, RecordRef


@dataclass
class MatchProbabilityTable:
    """Posterior co-assignment probability of every sampled record pair."""

    probs: dict          # (RecordRef, RecordRef) -> float
    n_samples: int

    def __getitem__(self, pair):
        a, b = pair
        key = (a, b) if a < b else (b, a)
        return self.probs.get(key, 0.0)

    def items(self):
        return sorted(self.probs.items())

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["file_a", "index_a", "file_b", "index_b", "probability"])
            for (a, b), p in self.items():
                w.writerow([a.file, a.index, b.file, b.index, f"{p:.10g}"])

    @classmethod
    def from_csv(cls, path, n_samples: int = 0) -> "MatchProbabilityTable":
        probs = {}
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0][:4] != ["file_a", "index_a", "file_b", "index_b"]:
            raise DataError(f"{path}: not a match probability table")
        for row in rows[1:]:
            a = RecordRef(int(row[0]), int(row[1]))
            b = RecordRef(int(row[2]), int(row[3]))
            probs[(a, b) if a < b else (b, a)] = float(row[4])
        return cls(probs, n_samples)


@dataclass
class PopulationSizePosterior:
    """Posterior over the number of distinct latent entities."""

    mean: float
    sd: float
    histogram: dict      # size -> sample count

    @property
    def support(self):
        return (min(self.histogram), max(self.histogram))


@dataclass
class PosteriorLinkage:
    """A point estimate of the linkage structure."""

    pairs: PairSet
    method: str
    threshold: float = None
    exact: bool = True


def _refpair(samples, a, b):
    (ja, ia), (jb, ib) = samples.ref_of_global(int(a)), samples.ref_of_global(int(b))
    ra = RecordRef(ja + 1, ia + 1)
    rb = RecordRef(jb + 1, ib + 1)
    return (ra, rb) if ra < rb else (rb, ra)


def match_probabilities(samples) -> MatchProbabilityTable:
    """Fraction of retained samples in which each record pair is linked."""
    counts = {}
    labels = samples.linkage_labels
    for s in range(labels.shape[0]):
        row = labels[s]
        order = np.argsort(row, kind="stable")
        for a, b in zip(order[:-1], order[1:]):
            if row[a] == row[b]:
                key = _refpair(samples, a, b)
                counts[key] = counts.get(key, 0) + 1
    n = labels.shape[0]
    return MatchProbabilityTable({k: v / n for k, v in counts.items()}, n)


def population_size_posterior(samples) -> PopulationSizePosterior:
    """Summary of the per-sample latent population sizes."""
    ns = samples.population_sizes()
    hist = {int(v): int(c) for v, c in zip(*np.unique(ns, return_counts=True))}
    sd = float(ns.std(ddof=1)) if len(ns) > 1 else 0.0
    return PopulationSizePosterior(float(ns.mean()), sd, hist)


def binder_point_estimate(table: MatchProbabilityTable, loss_ratio: float = 1.0,
                          exact_limit: int = 20000) -> PosteriorLinkage:
    """Minimum pairwise-loss linkage given the match probabilities.

    With false-link cost ``loss_ratio`` relative to missed-link cost 1, the
    expected loss is minimized by a matching that maximizes the sum of
    (probability - threshold) over linked pairs, threshold
    loss_ratio / (1 + loss_ratio).  Solved exactly by blossom matching; a
    greedy pass (flagged via ``exact=False``) handles candidate sets larger
    than ``exact_limit``.
    """
    if loss_ratio <= 0:
        raise DataError("loss_ratio must be positive")
    tau = loss_ratio / (1.0 + loss_ratio)
    edges = [(a, b, p - tau) for (a, b), p in table.items() if p > tau]
    if len(edges) <= exact_limit:
        g = nx.Graph()
        g.add_weighted_edges_from(edges)
        mate = nx.max_weight_matching(g, maxcardinality=False)
        pairs = PairSet(mate)
        return PosteriorLinkage(pairs, "pairwise-loss", tau, True)
    edges.sort(key=lambda e: (-e[2], e[0], e[1]))
    used = set()
    keep = []
    for a, b, _ in edges:
        if a in used or b in used:
            continue
        used.add(a)
        used.add(b)
        keep.append((a, b))
    return PosteriorLinkage(PairSet(keep), "pairwise-loss-greedy", tau, False)


def mpmms_point_estimate(samples) -> PosteriorLinkage:
    """Most-probable cluster membership estimate.

    A pair is retained when it is a modal cluster (ties allowed) for both
    its records; conflicts are resolved by keeping higher-frequency pairs
    first (record order breaks exact ties), dropping the rest.
    """
    labels = samples.linkage_labels
    n = labels.shape[0]
    pair_counts = {}
    for s in range(n):
        row = labels[s]
        order = np.argsort(row, kind="stable")
        for a, b in zip(order[:-1], order[1:]):
            if row[a] == row[b]:
                key = _refpair(samples, a, b)
                pair_counts[key] = pair_counts.get(key, 0) + 1

    # per record: total paired count and the best pair frequency
    best = {}
    paired_total = {}
    for (a, b), c in pair_counts.items():
        for r in (a, b):
            paired_total[r] = paired_total.get(r, 0) + c
            if c > best.get(r, 0):
                best[r] = c
    candidates = []
    for (a, b), c in pair_counts.items():
        single_a = n - paired_total.get(a, 0)
        single_b = n - paired_total.get(b, 0)
        if c >= max(best.get(a, 0), single_a) and c >= max(best.get(b, 0), single_b):
            candidates.append((a, b, c))
    candidates.sort(key=lambda e: (-e[2], e[0], e[1]))
    used = set()
    keep = []
    for a, b, _ in candidates:
        if a in used or b in used:
            continue
        used.add(a)
        used.add(b)
        keep.append((a, b))
    return PosteriorLinkage(PairSet(keep), "modal-membership")
