"""Linkage quality metrics and information criteria.

Pairwise evaluation treats every cross-file record pair as a binary
classification case.  Information criteria work on a pointwise
log-likelihood matrix with one row per posterior sample and one column per
data unit (dyads and profile cells); a streaming accumulator computes the
same quantities without materializing the matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import DataError, Dataset, PairSet


# ---------------------------------------------------------------------------
# pairwise confusion and scores

@dataclass
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def _cross_pair_total(sizes) -> int:
    total = 0
    for j in range(len(sizes)):
        for k in range(j + 1, len(sizes)):
            total += sizes[j] * sizes[k]
    return total


def confusion(predicted: PairSet, truth: PairSet, dataset: Dataset) -> ConfusionCounts:
    """Pairwise confusion counts against ground truth.

    The negative class is every cross-file record pair not linked; pairs
    referring outside the dataset raise.
    """
    predicted.validate_against(dataset)
    truth.validate_against(dataset)
    pred = predicted.as_set()
    true = truth.as_set()
    tp = len(pred & true)
    fp = len(pred - true)
    fn = len(true - pred)
    tn = _cross_pair_total(dataset.sizes) - tp - fp - fn
    return ConfusionCounts(tp, fp, fn, tn)


@dataclass
class PairwiseScores:
    recall: float      # None on 0/0
    precision: float   # None on 0/0
    f1: float          # None when precision+recall degenerate

    def as_dict(self):
        return {"recall": self.recall, "precision": self.precision, "f1": self.f1}


def precision_recall_f1(counts: ConfusionCounts) -> PairwiseScores:
    """Scores with explicit missing values: any 0/0 ratio is None."""
    rec = counts.tp / (counts.tp + counts.fn) if counts.tp + counts.fn else None
    pre = counts.tp / (counts.tp + counts.fp) if counts.tp + counts.fp else None
    f1 = None
    if rec is not None and pre is not None and (rec + pre) > 0:
        f1 = 2 * pre * rec / (pre + rec)
    return PairwiseScores(rec, pre, f1)


# ---------------------------------------------------------------------------
# information criteria

@dataclass
class WaicResult:
    waic: float
    lppd: float
    p_waic: float


@dataclass
class DicResult:
    dic: float
    d_bar: float
    d_hat: float
    p_d: float


def _check_matrix(pointwise) -> np.ndarray:
    m = np.asarray(pointwise, dtype=float)
    if m.ndim != 2:
        raise DataError("pointwise log-likelihood must be a 2-d matrix")
    if m.shape[0] < 2:
        raise DataError("information criteria need at least two samples")
    return m


def waic(pointwise) -> WaicResult:
    """Widely applicable information criterion from pointwise log-liks.

    lppd sums log mean likelihood per unit; the effective parameter count
    is the summed posterior variance of the log-likelihoods (population
    variance, so duplicating the sample set leaves the result unchanged).
    """
    m = _check_matrix(pointwise)
    s = m.shape[0]
    colmax = m.max(axis=0)
    lppd = float(np.sum(colmax + np.log(np.exp(m - colmax).mean(axis=0))))
    p_w = float(m.var(axis=0, ddof=0).sum())
    return WaicResult(-2.0 * (lppd - p_w), lppd, p_w)


def dic(pointwise) -> DicResult:
    """Deviance information criterion on the predictive scale.

    D_bar is the posterior mean deviance; D_hat plugs in the posterior
    predictive likelihood per unit, which keeps p_D nonnegative.
    """
    m = _check_matrix(pointwise)
    d_bar = float(-2.0 * m.sum(axis=1).mean())
    colmax = m.max(axis=0)
    lppd = float(np.sum(colmax + np.log(np.exp(m - colmax).mean(axis=0))))
    d_hat = -2.0 * lppd
    p_d = d_bar - d_hat
    return DicResult(d_bar + p_d, d_bar, d_hat, p_d)


class PointwiseAccumulator:
    """Streaming per-column statistics for WAIC/DIC.

    Accepts one row of pointwise log-likelihoods per posterior sample and
    reproduces ``waic``/``dic`` exactly (up to float error) without holding
    the full matrix.
    """

    def __init__(self, n_units: int):
        self.n_units = int(n_units)
        self.count = 0
        self._max = np.full(n_units, -np.inf)
        self._sumexp = np.zeros(n_units)   # sum of exp(x - max)
        self._mean = np.zeros(n_units)
        self._m2 = np.zeros(n_units)
        self._rowsum_total = np.zeros(n_units)  # per-column sums, for row sums by slice

    def add_row(self, row: np.ndarray):
        row = np.asarray(row, dtype=float)
        if row.shape != (self.n_units,):
            raise DataError("pointwise row has wrong length")
        self.count += 1
        # streaming logsumexp
        newmax = np.maximum(self._max, row)
        with np.errstate(invalid="ignore"):
            scale = np.exp(self._max - newmax)
        scale[~np.isfinite(scale)] = 0.0
        self._sumexp = self._sumexp * scale + np.exp(row - newmax)
        self._max = newmax
        # Welford
        delta = row - self._mean
        self._mean += delta / self.count
        self._m2 += delta * (row - self._mean)
        self._rowsum_total += row

    def results(self, start: int = 0, stop: int = None):
        """(WaicResult, DicResult) over the column slice [start, stop)."""
        if self.count < 2:
            raise DataError("information criteria need at least two samples")
        sl = slice(start, self.n_units if stop is None else stop)
        lppd = float(np.sum(self._max[sl] + np.log(self._sumexp[sl] / self.count)))
        p_w = float(np.sum(self._m2[sl] / self.count))
        d_bar = float(-2.0 * self._rowsum_total[sl].sum() / self.count)
        d_hat = -2.0 * lppd
        w = WaicResult(-2.0 * (lppd - p_w), lppd, p_w)
        d = DicResult(d_bar + (d_bar - d_hat), d_bar, d_hat, d_bar - d_hat)
        return w, d


@dataclass
class CriterionReport:
    """Model-choice numbers for one fitted configuration."""

    mode: str
    dim: int
    waic: float
    p_waic: float
    dic: float
    p_d: float
    lppd: float

    def as_dict(self):
        return {"mode": self.mode, "K": self.dim, "waic": self.waic,
                "p_waic": self.p_waic, "dic": self.dic, "p_d": self.p_d,
                "lppd": self.lppd}


def criterion_report(samples, scope: str = "all") -> CriterionReport:
    """Build a CriterionReport from a posterior sample set.

    ``scope`` selects the data units: "all", "network" or "profile".  Uses
    the stored pointwise matrix when present, else the accumulated
    criteria computed during sampling.
    """
    n_net = samples.n_network_units
    n_prof = samples.n_profile_units
    ranges = {"all": (0, n_net + n_prof), "network": (0, n_net),
              "profile": (n_net, n_net + n_prof)}
    if scope not in ranges:
        raise DataError(f"unknown scope {scope!r}")
    start, stop = ranges[scope]
    if stop - start == 0:
        raise DataError(f"no data units in scope {scope!r}")
    if samples.pointwise is not None:
        sub = samples.pointwise[:, start:stop]
        w = waic(sub)
        d = dic(sub)
    elif samples.criteria and scope in samples.criteria:
        c = samples.criteria[scope]
        w = WaicResult(c["waic"], c["lppd"], c["p_waic"])
        d = DicResult(c["dic"], c["d_bar"], c["d_hat"], c["p_d"])
    else:
        raise DataError("sample set carries no pointwise log-likelihoods")
    return CriterionReport(samples.mode, samples.dim, w.waic, w.p_waic,
                           d.dic, d.p_d, w.lppd)
