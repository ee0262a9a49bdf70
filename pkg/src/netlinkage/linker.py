"""Scikit-learn style estimator wrapping the full linkage pipeline."""

from __future__ import annotations

from sklearn.base import BaseEstimator

from .data import Dataset, PairSet
from .estimators import (binder_point_estimate, match_probabilities,
                         mpmms_point_estimate, population_size_posterior)
from .evaluation import confusion, criterion_report, precision_recall_f1
from .model import default_hyperparams
from .sampler import SamplerConfig, run_chain


class LinkageModel(BaseEstimator):
    """Bayesian cross-network record linkage with a sklearn interface.

    ``fit`` runs the MCMC sampler on a :class:`Dataset`; ``predict``
    returns the point-estimate pair set, ``predict_proba`` the posterior
    match-probability table, and ``score`` the pairwise F1 against a truth
    pair set.  All constructor arguments are stored verbatim so
    ``get_params``/``set_params``/``clone`` behave as sklearn expects.
    """

    def __init__(self, dim=2, mode="pnm", iterations=2000, burn_in=500,
                 thin=1, linkage_repeats=1, step_u=0.5, step_beta=0.5,
                 adapt=True, adapt_window=50, exact_linkage_ratio=True,
                 estimator="binder", loss_ratio=1.0, cv_sigma=0.5,
                 lam=1.0, omega=100.0, a_psi=1.0, b_psi=99.0,
                 store_pointwise=False, seed=0):
        self.dim = dim
        self.mode = mode
        self.iterations = iterations
        self.burn_in = burn_in
        self.thin = thin
        self.linkage_repeats = linkage_repeats
        self.step_u = step_u
        self.step_beta = step_beta
        self.adapt = adapt
        self.adapt_window = adapt_window
        self.exact_linkage_ratio = exact_linkage_ratio
        self.estimator = estimator
        self.loss_ratio = loss_ratio
        self.cv_sigma = cv_sigma
        self.lam = lam
        self.omega = omega
        self.a_psi = a_psi
        self.b_psi = b_psi
        self.store_pointwise = store_pointwise
        self.seed = seed

    def _sampler_config(self):
        return SamplerConfig(
            iterations=self.iterations, burn_in=self.burn_in,
            thin=self.thin, linkage_repeats=self.linkage_repeats,
            mode=self.mode, step_u=self.step_u, step_beta=self.step_beta,
            adapt=self.adapt, adapt_window=self.adapt_window,
            exact_linkage_ratio=self.exact_linkage_ratio,
            store_pointwise=self.store_pointwise, seed=self.seed)

    def fit(self, dataset, anchors=None):
        """Run the sampler and derive point estimates.

        ``anchors`` is an optional :class:`PairSet` of known matches held
        fixed throughout.  Returns ``self``.
        """
        if not isinstance(dataset, Dataset):
            raise TypeError("fit expects a Dataset")
        if anchors is not None and not isinstance(anchors, PairSet):
            raise TypeError("anchors must be a PairSet or None")
        if self.estimator not in ("binder", "mpmms"):
            raise ValueError("estimator must be 'binder' or 'mpmms'")
        hyper = default_hyperparams(
            dataset, dim=self.dim, cv_sigma=self.cv_sigma, lam=self.lam,
            omega=self.omega, a_psi=self.a_psi, b_psi=self.b_psi)
        samples, diagnostics = run_chain(
            dataset, hyper, self._sampler_config(), anchors=anchors)
        self.dataset_ = dataset
        self.hyper_ = hyper
        self.samples_ = samples
        self.diagnostics_ = diagnostics
        self.match_probabilities_ = match_probabilities(samples)
        if self.estimator == "binder":
            self.estimate_ = binder_point_estimate(
                self.match_probabilities_, loss_ratio=self.loss_ratio)
        else:
            self.estimate_ = mpmms_point_estimate(samples)
        self.population_size_ = population_size_posterior(samples)
        return self

    def _check_fitted(self):
        if not hasattr(self, "samples_"):
            raise RuntimeError("call fit before using the fitted model")

    def predict(self, dataset=None):
        """Point-estimate :class:`PairSet` of linked record pairs."""
        self._check_fitted()
        return self.estimate_.pairs

    def predict_proba(self, dataset=None):
        """Posterior match-probability table over co-linked pairs."""
        self._check_fitted()
        return self.match_probabilities_

    def score(self, truth, dataset=None):
        """Pairwise F1 of the point estimate against ``truth``."""
        self._check_fitted()
        counts = confusion(self.estimate_.pairs, truth, self.dataset_)
        f1 = precision_recall_f1(counts).f1
        return 0.0 if f1 is None else f1

    def population_size(self):
        """Posterior over the number of distinct latent individuals."""
        self._check_fitted()
        return self.population_size_

    def information_criteria(self, scope="all"):
        """Predictive-fit report (WAIC and DIC) for the fitted chain."""
        self._check_fitted()
        return criterion_report(self.samples_, scope)
