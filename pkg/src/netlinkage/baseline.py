"""Network-only matching baseline.

Scores candidate node pairs across two networks by the weighted overlap of
their projections' neighborhoods and grows a mapping greedily from a seed
set of known matches.  Node indices are 0-based here; the returned
estimate uses the networks' 1-based file ids and record indices.
"""

from __future__ import annotations

import math

import numpy as np

from .data import Adjacency, DataError, PairSet, RecordRef
from .estimators import PosteriorLinkage

INF = float("inf")


def _degree_weights(net: Adjacency) -> np.ndarray:
    # 1/log(degree); degree-1 nodes would divide by zero, so they use
    # 1/log(2), which joins the curve continuously at degree 2
    deg = np.maximum(net.degrees(), 2)
    return 1.0 / np.log(deg)


def omega(net_a: Adjacency, net_b: Adjacency, mapping: dict,
          v_pair, u_pair) -> float:
    """Neighborhood dissimilarity of two projected nodes in ``net_b``.

    ``v_pair``/``u_pair`` are (node, projection) tuples; a missing
    projection is looked up in ``mapping``.  Colliding projections score
    infinity; disjoint neighborhoods score 1; the score falls toward 0 as
    the weighted overlap grows.
    """
    v, yv = v_pair
    u, yu = u_pair
    if yv is None:
        yv = mapping[v]
    if yu is None:
        yu = mapping[u]
    if yv == yu:
        return INF
    wts = _degree_weights(net_b)
    row_v = net_b.matrix[yv]
    row_u = net_b.matrix[yu]
    wv = float(wts[row_v].sum())
    wu = float(wts[row_u].sum())
    if wv + wu == 0:
        return 1.0
    inter = float(wts[row_v & row_u].sum())
    return 1.0 - 2.0 * inter / (wv + wu)


def greedy_match(net_a: Adjacency, net_b: Adjacency, anchors: PairSet,
                 cutoff: float = 0.95) -> PosteriorLinkage:
    """Grow a node mapping from anchor pairs by best-first commitment.

    Each round scores every unmapped node of ``net_a`` adjacent to the
    current mapping against candidate nodes of ``net_b`` within two hops of
    its mapped neighbours' projections; the score is the mean ``omega``
    over those neighbours.  The globally lowest score is committed while it
    stays below ``cutoff``.  With no anchors the result is empty.
    """
    fa, fb = net_a.file_id, net_b.file_id
    mapping = {}
    for ra, rb in anchors:
        ends = {ra.file: ra.index - 1, rb.file: rb.index - 1}
        if set(ends) != {fa, fb}:
            raise DataError("anchor pair does not span the two networks")
        if ends[fa] >= net_a.n_actors or ends[fb] >= net_b.n_actors:
            raise DataError("anchor refers outside a network")
        mapping[ends[fa]] = ends[fb]
    used_b = set(mapping.values())
    if len(used_b) != len(mapping):
        raise DataError("anchors map two nodes to one projection")

    a_adj = net_a.matrix
    b_int = net_b.matrix.astype(np.int32)
    two_hop = (net_b.matrix | ((b_int @ b_int) > 0))
    wts = _degree_weights(net_b)
    b_nbr_w = net_b.matrix @ wts          # per-node neighborhood weight

    while True:
        best = None
        for v in range(net_a.n_actors):
            if v in mapping:
                continue
            mapped_nbrs = [u for u in np.nonzero(a_adj[v])[0] if int(u) in mapping]
            if not mapped_nbrs:
                continue
            projections = [mapping[int(u)] for u in mapped_nbrs]
            pool = set()
            for y in projections:
                pool.update(np.nonzero(two_hop[y])[0].tolist())
            pool -= used_b
            for b in sorted(pool):
                total = 0.0
                for y in projections:
                    row_b = net_b.matrix[b]
                    denom = float(b_nbr_w[b] + b_nbr_w[y])
                    if denom == 0:
                        total += 1.0
                        continue
                    inter = float(wts[row_b & net_b.matrix[y]].sum())
                    total += 1.0 - 2.0 * inter / denom
                score = total / len(projections)
                cand = (score, v, b)
                if best is None or cand < best:
                    best = cand
        if best is None or best[0] >= cutoff:
            break
        _, v, b = best
        mapping[v] = b
        used_b.add(b)

    pairs = PairSet((RecordRef(fa, v + 1), RecordRef(fb, b + 1))
                    for v, b in mapping.items())
    return PosteriorLinkage(pairs, "neighborhood-greedy", cutoff)
