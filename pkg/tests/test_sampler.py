"""Chain mechanics: storage, modes, diagnostics and streaming criteria."""

import numpy as np
import pytest

from netlinkage.data import DataError, Dataset
from netlinkage.evaluation import dic, waic
from netlinkage.model import HyperParams, default_hyperparams
from netlinkage.partitions import count_partitions
from netlinkage.sampler import (PosteriorSampleSet, SamplerConfig,
                                SamplerContext, batch_means_se,
                                effective_sample_size, run_chain)
from netlinkage.synthetic import SyntheticSpec, generate_synthetic


def _small():
    spec = SyntheticSpec(file_sizes=(7, 6), n_latent=10, n_fields=2,
                         n_levels=(6, 5),
                         field_kinds=("categorical", "string"), psi=0.08,
                         seed=14)
    return generate_synthetic(spec)


def test_save_load_roundtrip(tmp_path):
    ds, _ = _small()
    hyper = default_hyperparams(ds, dim=2)
    config = SamplerConfig(iterations=80, burn_in=30, thin=2, seed=3,
                           store_pointwise=True)
    samples, _ = run_chain(ds, hyper, config)
    samples.save(tmp_path / "out")
    back = PosteriorSampleSet.load(tmp_path / "out")
    np.testing.assert_array_equal(back.linkage_labels, samples.linkage_labels)
    np.testing.assert_allclose(back.beta, samples.beta)
    np.testing.assert_allclose(back.sigma2, samples.sigma2)
    np.testing.assert_allclose(back.psi, samples.psi)
    np.testing.assert_allclose(back.pointwise, samples.pointwise)
    assert back.sizes == samples.sizes
    assert back.mode == samples.mode
    assert back.criteria.keys() == samples.criteria.keys()
    np.testing.assert_allclose(back.criteria["all"]["waic"],
                               samples.criteria["all"]["waic"])
    assert back.acceptance == samples.acceptance


def test_prior_mode_recovers_prior_moments():
    ds, _ = _small()
    hyper = default_hyperparams(ds, dim=1)
    hyper.omega = np.full(2, 1.5)
    hyper.a_sigma, hyper.b_sigma = 3.0, 3.0
    hyper.a_psi = np.full(2, 2.0)
    hyper.b_psi = np.full(2, 8.0)
    config = SamplerConfig(mode="prior", iterations=6000, burn_in=1000,
                           thin=1, seed=9, step_u=1.0, step_beta=1.0)
    samples, diags = run_chain(ds, hyper, config)

    m = samples.psi[:, 0].mean()
    se = batch_means_se(samples.psi[:, 0])
    assert m == pytest.approx(2.0 / 10.0, abs=5 * se)

    m = samples.sigma2.mean()
    se = batch_means_se(samples.sigma2)
    assert m == pytest.approx(3.0 / 2.0, abs=5 * se)

    for j in range(2):
        m = samples.beta[:, j].mean()
        se = batch_means_se(samples.beta[:, j])
        assert m == pytest.approx(0.0, abs=5 * se)
        sd = samples.beta[:, j].std()
        assert sd == pytest.approx(1.5, rel=0.15)

    # linkage prior is uniform over valid partitions: compare E[N]
    counts = np.array(count_partitions([7, 6]), dtype=float)
    total = 13
    expected_n = float(((total - np.arange(len(counts))) * counts).sum()
                       / counts.sum())
    ns = samples.population_sizes().astype(float)
    se = batch_means_se(ns)
    assert ns.mean() == pytest.approx(expected_n, abs=6 * se)


def test_pm_mode_is_invariant_to_network_presence():
    ds, _ = _small()
    stripped = Dataset(ds.fields, ds.profiles, None)
    hyper = default_hyperparams(ds, dim=2)
    config = SamplerConfig(mode="pm", iterations=120, burn_in=40, thin=2,
                           seed=21)
    s1, _ = run_chain(ds, hyper, config)
    s2, _ = run_chain(stripped, hyper, config)
    np.testing.assert_array_equal(s1.linkage_labels, s2.linkage_labels)
    np.testing.assert_array_equal(s1.psi, s2.psi)
    np.testing.assert_array_equal(s1.sigma2, s2.sigma2)


def test_streaming_criteria_match_pointwise_matrix():
    ds, _ = _small()
    hyper = default_hyperparams(ds, dim=2)
    config = SamplerConfig(iterations=100, burn_in=40, thin=1, seed=5,
                           store_pointwise=True)
    samples, _ = run_chain(ds, hyper, config)
    pw = samples.pointwise
    assert pw.shape[0] == samples.n_samples
    for scope, (a, b) in {
            "all": (0, pw.shape[1]),
            "network": (0, samples.n_network_units),
            "profile": (samples.n_network_units, pw.shape[1])}.items():
        w = waic(pw[:, a:b])
        d = dic(pw[:, a:b])
        np.testing.assert_allclose(samples.criteria[scope]["waic"], w.waic,
                                   rtol=1e-9)
        np.testing.assert_allclose(samples.criteria[scope]["p_waic"],
                                   w.p_waic, rtol=1e-9)
        np.testing.assert_allclose(samples.criteria[scope]["dic"], d.dic,
                                   rtol=1e-9)
        np.testing.assert_allclose(samples.criteria[scope]["p_d"], d.p_d,
                                   rtol=1e-9)
        assert samples.criteria[scope]["p_d"] >= -1e-9


def test_effective_sample_size_calibration():
    rng = np.random.default_rng(0)
    n = 4000
    x = rng.standard_normal(n)
    ess = effective_sample_size(x)
    assert 0.7 * n < ess < 1.3 * n
    # AR(1) with known autocorrelation time (1+phi)/(1-phi)
    phi = 0.9
    y = np.empty(n)
    y[0] = rng.standard_normal()
    for t in range(1, n):
        y[t] = phi * y[t - 1] + rng.standard_normal() * np.sqrt(1 - phi ** 2)
    ess_y = effective_sample_size(y)
    target = n * (1 - phi) / (1 + phi)
    assert 0.4 * target < ess_y < 2.5 * target
    # zero-variance series carries no autocorrelation information
    assert effective_sample_size(np.ones(50)) == 50.0


def test_batch_means_se_calibration():
    rng = np.random.default_rng(1)
    n = 20000
    x = rng.standard_normal(n)
    se = batch_means_se(x)
    assert se == pytest.approx(1 / np.sqrt(n), rel=0.5)


def test_adaptation_reaches_sane_acceptance():
    ds, _ = _small()
    hyper = default_hyperparams(ds, dim=2)
    config = SamplerConfig(iterations=1500, burn_in=1000, thin=1, seed=2,
                           step_u=40.0, step_beta=40.0, adapt=True,
                           adapt_window=50)
    samples, diags = run_chain(ds, hyper, config)
    assert 0.1 < diags.acceptance["u"] < 0.7
    assert 0.1 < diags.acceptance["beta"] < 0.8


def test_sample_set_accessors():
    ds, truth = _small()
    hyper = default_hyperparams(ds, dim=2)
    config = SamplerConfig(iterations=80, burn_in=30, thin=1, seed=4)
    samples, _ = run_chain(ds, hyper, config)
    ns = samples.population_sizes()
    assert ns.min() >= max(ds.sizes)
    assert ns.max() <= sum(ds.sizes)
    pairs = samples.sample_pairs(0)
    row = samples.linkage_labels[0]
    # pair count from labels: records minus distinct labels
    assert len(pairs) == samples.n_records - len(set(row.tolist()))
    for (ja, ia), (jb, ib) in pairs:
        assert ja != jb


def test_mode_requirements_enforced():
    ds, _ = _small()
    stripped = Dataset(ds.fields, ds.profiles, None)
    hyper = default_hyperparams(ds, dim=2)
    with pytest.raises(DataError):
        SamplerContext(stripped, hyper, SamplerConfig(mode="pnm"))
    with pytest.raises(DataError):
        SamplerContext(stripped, hyper, SamplerConfig(mode="network"))
    netonly = Dataset([], [type(t)(t.file_id, np.zeros((t.n_records, 0),
                                                       np.int32),
                                   t.record_ids) for t in ds.profiles],
                      ds.networks)
    hyper_n = default_hyperparams(netonly, dim=2)
    with pytest.raises(DataError):
        SamplerContext(netonly, hyper_n, SamplerConfig(mode="pm"))
    with pytest.raises(DataError):
        run_chain(ds, hyper, SamplerConfig(iterations=51, burn_in=50, thin=5))


def test_network_only_dataset_runs():
    ds, _ = _small()
    netonly = Dataset([], [type(t)(t.file_id, np.zeros((t.n_records, 0),
                                                       np.int32),
                                   t.record_ids) for t in ds.profiles],
                      ds.networks)
    hyper = default_hyperparams(netonly, dim=2)
    config = SamplerConfig(mode="network", iterations=80, burn_in=30,
                           thin=1, seed=6, validate_every=20)
    samples, _ = run_chain(netonly, hyper, config)
    assert samples.criteria is not None
    assert set(samples.criteria) == {"all", "network"}
    assert samples.psi.shape == (50, 0)
