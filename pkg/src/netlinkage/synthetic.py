"""Forward simulation of the generative model.

Produces synthetic datasets with known ground truth, and exposes the
individual draws (linkage, parameters, latents, data) so tests can compose
them; the same code paths back both uses.
"""

from __future__ import annotations

import string as _string
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from . import partitions
from .data import (Adjacency, DataError, Dataset, FieldSpec, PairSet,
                   ProfileTable, RecordRef)
from .model import GlobalParams, HyperParams, LinkageStructure, ModelState
from .strings import StringDistortion


@dataclass
class SyntheticSpec:
    """Recipe for a synthetic dataset.

    Exactly one of ``n_latent`` / ``match_fraction`` must be given; the
    other is derived (``match_fraction`` is relative to the maximum number
    of cross-file pairs the file sizes allow).  ``distinct_profiles``
    assigns every latent entity its own field level, which requires at
    least ``n_latent`` levels per field.
    """

    file_sizes: tuple
    n_latent: int = None
    match_fraction: float = None
    n_fields: int = 1
    n_levels: tuple = (10,)
    field_kinds: tuple = None
    dim: int = 2
    beta: tuple = (0.0,)
    sigma2: float = 1.0
    psi: tuple = (0.01,)
    lam: float = 1.0
    theta: list = None
    distinct_profiles: bool = False
    with_networks: bool = True
    seed: int = 0

    def __post_init__(self):
        self.file_sizes = tuple(int(s) for s in self.file_sizes)
        if len(self.file_sizes) < 2 or any(s < 1 for s in self.file_sizes):
            raise DataError("need at least two non-empty files")
        total = sum(self.file_sizes)
        cap = partitions.max_pairs(self.file_sizes)
        if (self.n_latent is None) == (self.match_fraction is None):
            raise DataError("give exactly one of n_latent / match_fraction")
        if self.match_fraction is not None:
            if not 0 <= self.match_fraction <= 1:
                raise DataError("match_fraction must lie in [0, 1]")
            self.n_pairs = int(round(self.match_fraction * cap))
            self.n_latent = total - self.n_pairs
        else:
            self.n_pairs = total - int(self.n_latent)
            if not 0 <= self.n_pairs <= cap:
                raise DataError(f"n_latent must lie in [{total - cap}, {total}]")
            self.match_fraction = self.n_pairs / cap if cap else 0.0

        def percol(v, n, name):
            arr = tuple(v) if np.iterable(v) else (v,) * n
            if len(arr) == 1 and n > 1:
                arr = arr * n
            if len(arr) != n:
                raise DataError(f"{name} must have length {n}")
            return arr

        J, L = len(self.file_sizes), int(self.n_fields)
        self.beta = tuple(float(b) for b in percol(self.beta, J, "beta"))
        self.n_levels = tuple(int(m) for m in percol(self.n_levels, L, "n_levels"))
        self.psi = tuple(float(p) for p in percol(self.psi, L, "psi"))
        if self.field_kinds is None:
            self.field_kinds = ("categorical",) * L
        self.field_kinds = percol(self.field_kinds, L, "field_kinds")
        if any(k not in ("categorical", "string") for k in self.field_kinds):
            raise DataError("field kinds must be categorical or string")
        if any(not 0 <= p < 1 for p in self.psi):
            raise DataError("psi must lie in [0, 1)")
        if self.sigma2 <= 0:
            raise DataError("sigma2 must be positive")
        if self.distinct_profiles and any(m < self.n_latent for m in self.n_levels):
            raise DataError("distinct_profiles needs n_levels >= n_latent")
        if self.theta is not None:
            if len(self.theta) != L:
                raise DataError("theta must have one pmf per field")
            self.theta = [np.asarray(t, float) for t in self.theta]
            for t, m in zip(self.theta, self.n_levels):
                if t.shape != (m,) or np.any(t <= 0) or not np.isclose(t.sum(), 1.0):
                    raise DataError("theta entries must be pmfs over n_levels")


def _level_names(kind: str, m: int, rng: np.random.Generator) -> list:
    if kind == "categorical":
        return [f"v{k:03d}" for k in range(m)]
    letters = np.array(list(_string.ascii_lowercase))
    names = set()
    while len(names) < m:
        n = int(rng.integers(4, 9))
        names.add("".join(rng.choice(letters, size=n)))
    return sorted(names)


def draw_cell_given_truth(kind: str, truth: int, theta: np.ndarray,
                          distortion: StringDistortion, rng) -> int:
    """One distorted cell value: categorical fields redraw from theta,
    string fields from the distance-decay pmf around the truth."""
    if kind == "categorical":
        return int(rng.choice(len(theta), p=theta))
    return int(rng.choice(distortion.n_levels, p=distortion.pmf(truth)))


def draw_network(labels_j: np.ndarray, u: np.ndarray, beta_j: float,
                 rng) -> np.ndarray:
    """Symmetric Bernoulli adjacency for one file given positions."""
    pos = u[labels_j]
    diff = pos[:, None, :] - pos[None, :, :]
    prob = expit(beta_j - np.sqrt((diff * diff).sum(axis=-1)))
    n = len(labels_j)
    up = rng.random((n, n)) < prob
    m = np.triu(up, k=1)
    return m | m.T


def generate_synthetic(spec: SyntheticSpec):
    """Simulate a dataset from the model; returns (dataset, truth).

    Deterministic in ``spec.seed``.  Field supports in the returned dataset
    are the observed values only, as with data read from disk.
    """
    rng = np.random.default_rng(spec.seed)
    sizes = spec.file_sizes
    J, L, N = len(sizes), spec.n_fields, spec.n_latent

    pairs = partitions.sample_partition(sizes, rng, n_pairs=spec.n_pairs)
    labels = partitions.pairs_to_labels(sizes, pairs)

    names = [_level_names(k, m, rng)
             for k, m in zip(spec.field_kinds, spec.n_levels)]
    theta = spec.theta or [np.full(m, 1.0 / m) for m in spec.n_levels]
    distortions = [StringDistortion(names[ell], theta[ell], spec.lam)
                   if spec.field_kinds[ell] == "string" else None
                   for ell in range(L)]

    if spec.distinct_profiles:
        pi = np.stack([rng.permutation(spec.n_levels[ell])[:N]
                       for ell in range(L)], axis=1).astype(np.int32) \
            if L else np.zeros((N, 0), np.int32)
    else:
        pi = np.stack([rng.choice(spec.n_levels[ell], size=N, p=theta[ell])
                       for ell in range(L)], axis=1).astype(np.int32) \
            if L else np.zeros((N, 0), np.int32)
    u = rng.standard_normal((N, spec.dim)) * np.sqrt(spec.sigma2)

    tables = []
    for j, s in enumerate(sizes):
        vals = np.zeros((s, L), dtype=np.int32)
        for i in range(s):
            ent = labels[j][i]
            for ell in range(L):
                if rng.random() < spec.psi[ell]:
                    vals[i, ell] = draw_cell_given_truth(
                        spec.field_kinds[ell], int(pi[ent, ell]),
                        theta[ell], distortions[ell], rng)
                else:
                    vals[i, ell] = pi[ent, ell]
        tables.append((j, vals))

    networks = None
    if spec.with_networks:
        networks = [Adjacency(j + 1, draw_network(labels[j], u, spec.beta[j], rng))
                    for j in range(J)]

    # re-express each field over its observed support
    fields, coded = [], []
    for ell in range(L):
        observed = sorted({names[ell][v] for _, vals in tables for v in vals[:, ell]})
        idx = {v: k for k, v in enumerate(observed)}
        counts = np.zeros(len(observed))
        for _, vals in tables:
            for v in vals[:, ell]:
                counts[idx[names[ell][v]]] += 1
        fields.append(FieldSpec(f"f{ell}", spec.field_kinds[ell], tuple(observed),
                                tuple(counts / counts.sum())))
        coded.append(idx)
    profiles = []
    for j, vals in tables:
        out = np.zeros_like(vals)
        for ell in range(L):
            out[:, ell] = [coded[ell][names[ell][v]] for v in vals[:, ell]]
        profiles.append(ProfileTable(j + 1, out,
                                     [f"{j + 1}-{i + 1}" for i in range(sizes[j])]))

    truth = PairSet((RecordRef(a[0] + 1, a[1] + 1), RecordRef(b[0] + 1, b[1] + 1))
                    for a, b in pairs)
    return Dataset(fields, profiles, networks), truth


# ---------------------------------------------------------------------------
# prior draws used by joint-consistency tests

def draw_params(dataset: Dataset, hyper: HyperParams, rng) -> GlobalParams:
    beta = rng.normal(0.0, hyper.omega)
    sigma2 = float(hyper.b_sigma / rng.gamma(hyper.a_sigma))
    theta = [rng.dirichlet(hyper.alpha[ell]) if f.kind == "categorical" else None
             for ell, f in enumerate(dataset.fields)]
    psi = rng.beta(hyper.a_psi, hyper.b_psi) if dataset.n_fields \
        else np.zeros(0)
    return GlobalParams(beta, sigma2, theta, np.atleast_1d(psi))


def draw_state(dataset: Dataset, hyper: HyperParams, rng) -> ModelState:
    """Full state draw from the prior: linkage uniform over valid
    partitions, then parameters and latents from their priors."""
    sizes = dataset.sizes
    params = draw_params(dataset, hyper, rng)
    pairs = partitions.sample_partition(sizes, rng)
    linkage = LinkageStructure.from_pairs(sizes, pairs)
    n = linkage.n_clusters
    cap = dataset.n_records
    L = dataset.n_fields
    pi = np.zeros((cap, L), dtype=np.int32)
    for ell, f in enumerate(dataset.fields):
        base = params.theta[ell] if f.kind == "categorical" else f.freq_array()
        pi[:n, ell] = rng.choice(f.n_levels, size=n, p=base)
    u = np.zeros((cap, hyper.dim))
    u[:n] = rng.standard_normal((n, hyper.dim)) * np.sqrt(params.sigma2)
    w = []
    for j, t in enumerate(dataset.profiles):
        wj = np.zeros(t.values.shape, dtype=np.int8)
        obs = t.values >= 0
        wj[obs] = (rng.random(t.values.shape) < params.psi)[obs]
        w.append(wj)
    return ModelState(linkage, pi, u, w, params)


def draw_data_into(dataset: Dataset, state: ModelState, hyper: HyperParams, rng):
    """Overwrite the dataset's profile cells and edges with a fresh draw
    given the current state.  Missing cells stay missing."""
    for j, t in enumerate(dataset.profiles):
        truth = state.pi[state.linkage.labels[j]]
        for ell, f in enumerate(dataset.fields):
            theta = state.params.theta[ell]
            sd = None
            if f.kind == "string":
                from .model import get_string_distortion
                sd = get_string_distortion(f, hyper.lam)
            for i in range(t.n_records):
                if t.values[i, ell] < 0:
                    continue
                if state.w[j][i, ell] == 0:
                    t.values[i, ell] = truth[i, ell]
                else:
                    t.values[i, ell] = draw_cell_given_truth(
                        f.kind, int(truth[i, ell]),
                        theta if theta is not None else f.freq_array(), sd, rng)
    if dataset.has_networks:
        for j, net in enumerate(dataset.networks):
            net.matrix[:] = draw_network(state.linkage.labels[j], state.u,
                                         float(state.params.beta[j]), rng)
