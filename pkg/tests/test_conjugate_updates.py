"""Distributional checks of the closed-form conditional updates.

Each update block, applied repeatedly to a frozen conditioning state,
produces independent draws from its full conditional, so the empirical
distribution can be tested directly against the closed form.
"""

import numpy as np
import pytest
from scipy import stats

from netlinkage.data import Dataset, FieldSpec, PairSet, ProfileTable, RecordRef
from netlinkage.model import GlobalParams, HyperParams
from netlinkage.sampler import SamplerConfig, SamplerContext
from netlinkage.strings import levenshtein

ALPHA = 0.005
N_DRAWS = 20000


def _dataset():
    f = FieldSpec("f", "categorical", ("a", "b", "c"), (0.5, 0.3, 0.2))
    t1 = ProfileTable(1, np.array([[0], [1], [0]]), ["1", "2", "3"])
    t2 = ProfileTable(2, np.array([[0], [1], [2]]), ["4", "5", "6"])
    return Dataset([f], [t1, t2])


def _hyper(ds, a_psi=2.0, b_psi=8.0, alpha=(1.5, 1.0, 2.0)):
    return HyperParams(dim=2, omega=[10.0, 10.0], a_sigma=3.0, b_sigma=4.0,
                       alpha=[np.array(alpha)], a_psi=[a_psi], b_psi=[b_psi])


def _context(ds, hyper, anchors=None, mode="pm"):
    config = SamplerConfig(mode=mode, seed=0)
    return SamplerContext(ds, hyper, config, anchors)


def test_psi_update_matches_beta_conditional():
    ds = _dataset()
    hyper = _hyper(ds)
    ctx = _context(ds, hyper)
    rng = np.random.default_rng(1)
    state = ctx.initial_state(rng)
    # freeze a known distortion pattern: two distorted cells of six
    state.w[0][:, 0] = [0, 1, 0]
    state.w[1][:, 0] = [1, 0, 0]
    draws = np.empty(N_DRAWS)
    for s in range(N_DRAWS):
        ctx.update_psi(state, rng)
        draws[s] = state.params.psi[0]
    a = 2.0 + 2
    b = 8.0 + 6 - 2
    p = stats.kstest(draws, stats.beta(a, b).cdf).pvalue
    assert p > ALPHA


def test_psi_update_counts_observed_cells_only():
    ds = _dataset()
    ds.profiles[0].values[2, 0] = -1          # five observed cells now
    hyper = _hyper(ds)
    ctx = _context(ds, hyper)
    rng = np.random.default_rng(2)
    state = ctx.initial_state(rng)
    state.w[0][:, 0] = [1, 0, 0]
    state.w[1][:, 0] = [0, 0, 0]
    draws = np.empty(N_DRAWS)
    for s in range(N_DRAWS):
        ctx.update_psi(state, rng)
        draws[s] = state.params.psi[0]
    p = stats.kstest(draws, stats.beta(2.0 + 1, 8.0 + 5 - 1).cdf).pvalue
    assert p > ALPHA


def test_sigma2_update_matches_inverse_gamma():
    ds = _dataset()
    hyper = _hyper(ds)
    ctx = _context(ds, hyper)
    rng = np.random.default_rng(3)
    state = ctx.initial_state(rng)
    n, K = state.n_latent, 2
    ssq = float((state.u[:n] ** 2).sum())
    draws = np.empty(N_DRAWS)
    for s in range(N_DRAWS):
        ctx.update_sigma2(state, rng)
        draws[s] = state.params.sigma2
    dist = stats.invgamma(3.0 + n * K / 2, scale=4.0 + ssq / 2)
    p = stats.kstest(draws, dist.cdf).pvalue
    assert p > ALPHA


def test_theta_update_matches_dirichlet_conditional():
    ds = _dataset()
    hyper = _hyper(ds)
    anchors = PairSet([(RecordRef(1, 1), RecordRef(2, 1))])
    ctx = _context(ds, hyper, anchors)
    rng = np.random.default_rng(4)
    state = ctx.initial_state(rng)
    assert state.n_latent == 5
    # freeze w: one distorted cell with observed level 2
    for j in (0, 1):
        state.w[j][:, 0] = 0
    state.w[1][2, 0] = 1
    state.pi[state.linkage.labels[1][2], 0] = 0   # truth for that record
    # cluster truths: anchored pair + singletons carry codes 0,1,0,1,0
    pi_counts = np.bincount(state.pi[:5, 0], minlength=3).astype(float)
    data_counts = np.array([0.0, 0.0, 1.0])       # the one distorted cell
    alpha = np.array([1.5, 1.0, 2.0]) + pi_counts + data_counts
    draws = np.empty(N_DRAWS)
    for s in range(N_DRAWS):
        ctx.update_theta(state, rng)
        draws[s] = state.params.theta[0][0]
    # Dirichlet marginal of component 0 is Beta(alpha_0, sum(alpha_rest))
    dist = stats.beta(alpha[0], alpha[1:].sum())
    p = stats.kstest(draws, dist.cdf).pvalue
    assert p > ALPHA


def test_distortion_flag_update():
    ds = _dataset()
    hyper = _hyper(ds)
    ctx = _context(ds, hyper)
    rng = np.random.default_rng(5)
    psi, theta = 0.2, np.array([0.5, 0.3, 0.2])
    init = GlobalParams(np.zeros(2), 1.0, [theta], np.array([psi]))
    state = ctx.initial_state(rng, init)
    # record (1,1) observes level 0 and its singleton truth is 0: matching
    # cell, so w ~ Bernoulli(psi theta_0 / (psi theta_0 + 1 - psi))
    target = psi * theta[0] / (psi * theta[0] + 1 - psi)
    # force one mismatching configuration: cluster of record (2,3) keeps
    # truth 2 while we reset its observed value to level 0
    c = state.linkage.labels[1][2]
    state.pi[c, 0] = 2
    ds.profiles[1].values[2, 0] = 0
    hits = np.zeros(2)
    for s in range(N_DRAWS):
        ctx.update_distortions(state, rng)
        hits[0] += state.w[0][0, 0]
        hits[1] += state.w[1][2, 0]
    freq = hits[0] / N_DRAWS
    se = np.sqrt(target * (1 - target) / N_DRAWS)
    assert freq == pytest.approx(target, abs=4 * se)
    assert hits[1] == N_DRAWS                    # mismatch forces w = 1
    ds.profiles[1].values[2, 0] = 2              # restore


def test_latent_profile_update_categorical():
    ds = _dataset()
    hyper = _hyper(ds)
    anchors = PairSet([(RecordRef(1, 1), RecordRef(2, 1))])
    ctx = _context(ds, hyper, anchors)
    rng = np.random.default_rng(6)
    theta = np.array([0.5, 0.3, 0.2])
    init = GlobalParams(np.zeros(2), 1.0, [theta], np.array([0.2]))
    state = ctx.initial_state(rng, init)
    cluster = state.linkage.labels[0][0]         # the anchored pair
    state.w[0][0, 0] = 1
    state.w[1][0, 0] = 1                         # both members distorted
    single = state.linkage.labels[0][1]          # singleton, w = 0
    counts = np.zeros(3)
    for s in range(N_DRAWS):
        ctx.update_latent_profiles(state, rng)
        counts[state.pi[cluster, 0]] += 1
        assert state.pi[single, 0] == ds.profiles[0].values[1, 0]
    # all-distorted cluster draws its truth straight from theta
    chi2 = ((counts - N_DRAWS * theta) ** 2 / (N_DRAWS * theta)).sum()
    assert chi2 < stats.chi2(2).ppf(1 - ALPHA)


def test_latent_profile_update_string():
    levels = ("ab", "abc", "b")
    freqs = (0.5, 0.3, 0.2)
    f = FieldSpec("f", "string", levels, freqs)
    t1 = ProfileTable(1, np.array([[0], [2]]), ["1", "2"])
    t2 = ProfileTable(2, np.array([[2], [1]]), ["3", "4"])
    ds = Dataset([f], [t1, t2])
    hyper = HyperParams(dim=2, omega=[10.0, 10.0], a_sigma=3.0, b_sigma=4.0,
                        alpha=[np.ones(3)], a_psi=[2.0], b_psi=[8.0], lam=0.9)
    anchors = PairSet([(RecordRef(1, 1), RecordRef(2, 1))])
    ctx = _context(ds, hyper, anchors)
    rng = np.random.default_rng(7)
    init = GlobalParams(np.zeros(2), 1.0, [None], np.array([0.2]))
    state = ctx.initial_state(rng, init)
    cluster = state.linkage.labels[0][0]
    state.w[0][0, 0] = 1
    state.w[1][0, 0] = 1                         # members observe "ab", "b"
    lam = 0.9
    d = np.array([[levenshtein(a, b) for b in levels] for a in levels], float)
    h = 1.0 / np.exp(-lam * d).sum(axis=0)
    gamma = np.array(freqs)
    raw = gamma * (h ** 2) * np.exp(-lam * (d[0] + d[2]))
    target = raw / raw.sum()
    counts = np.zeros(3)
    for s in range(N_DRAWS):
        ctx.update_latent_profiles(state, rng)
        counts[state.pi[cluster, 0]] += 1
    chi2 = ((counts - N_DRAWS * target) ** 2 / (N_DRAWS * target)).sum()
    assert chi2 < stats.chi2(2).ppf(1 - ALPHA)
