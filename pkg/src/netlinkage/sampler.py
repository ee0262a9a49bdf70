"""MCMC for the joint profile + network linkage model.

Each iteration sweeps, in order: linkage moves (repeated per record),
distortion flags, latent profile values, latent positions, distortion
rates, field distributions, intercepts, and the position scale.  Conjugate
blocks are Gibbs draws; positions and intercepts use random-walk
Metropolis with step sizes tuned during burn-in only, so the post-burn-in
kernel is fixed.

Linkage moves propose, uniformly, either a fresh cluster or pairing with
an eligible partner — an unanchored singleton from another file, the
current partner included.  That set depends only on the configuration
with the moved record removed, so the choice itself is symmetric.  Fresh
latent profiles are drawn from the prior; fresh positions are drawn from
a mixture of the prior and a kernel around the current cluster position,
with the density ratio folded into the acceptance, because pure prior
draws almost never land near an adapted neighbourhood and would freeze
every linked pair in place.  With ``exact_linkage_ratio`` the acceptance
ratio multiplies the record's network likelihood ratio by the affected
clusters' profile likelihood ratio with the latent profiles and the
distortion flags summed out (both are redrawn from their full
conditionals after an accepted move); without it only the network factor
is used.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.special import log_expit

from .data import DataError, Dataset, PairSet
from .evaluation import PointwiseAccumulator
from .model import (LOG_ZERO, GlobalParams, HyperParams, LinkageStructure,
                    ModelState, get_string_distortion)

MODES = ("pnm", "pm", "network", "prior")

# new-cluster position proposal: mixture weight on the kernel centred at
# the current cluster position, and that kernel's scale
LOCAL_U_WEIGHT = 0.5
LOCAL_U_SD = 0.75


@dataclass
class SamplerConfig:
    """Chain length, proposal tuning and likelihood switches.

    ``mode`` picks the likelihood factors: "pnm" uses profiles and
    networks, "pm" profiles only, "network" networks only, "prior" none
    (all blocks then target the prior, which is useful for validation).
    The ``sample_*`` switches freeze individual blocks.
    """

    iterations: int = 2000
    burn_in: int = 500
    thin: int = 1
    linkage_repeats: int = 1
    mode: str = "pnm"
    step_u: float = 0.5
    step_beta: float = 0.5
    adapt: bool = True
    adapt_window: int = 50
    target_accept_u: float = 0.35
    target_accept_beta: float = 0.44
    exact_linkage_ratio: bool = True
    store_pointwise: bool = False
    sample_psi: bool = True
    sample_theta: bool = True
    sample_u: bool = True
    sample_beta: bool = True
    sample_sigma2: bool = True
    validate_every: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise DataError(f"unknown mode {self.mode!r}")
        if self.iterations < 1 or self.burn_in < 0 \
                or self.burn_in >= self.iterations:
            raise DataError("need 0 <= burn_in < iterations")
        if self.thin < 1 or self.linkage_repeats < 1:
            raise DataError("thin and linkage_repeats must be >= 1")
        if self.step_u <= 0 or self.step_beta <= 0:
            raise DataError("step sizes must be positive")
        if self.adapt_window < 1:
            raise DataError("adapt_window must be >= 1")

    @property
    def use_profile(self) -> bool:
        return self.mode in ("pnm", "pm")

    @property
    def use_network(self) -> bool:
        return self.mode in ("pnm", "network")


def adapt_step_size(step: float, rate: float, target: float) -> float:
    """Multiplicative step tuning: unchanged at the target rate, grown
    when acceptance is high, shrunk when low."""
    if not 0 <= rate <= 1 or not 0 < target < 1:
        raise DataError("rates must lie in [0, 1]")
    return float(np.clip(step * math.exp(rate - target), 1e-4, 1e4))


def batch_means_se(x, n_batches: int = 40) -> float:
    """Monte Carlo standard error of a correlated chain's mean."""
    x = np.asarray(x, dtype=float)
    n = x.size // n_batches
    if n < 1:
        raise DataError("chain too short for the requested batches")
    means = x[:n * n_batches].reshape(n_batches, n).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(n_batches))


def effective_sample_size(x) -> float:
    """ESS via the initial positive sequence of autocorrelation pair sums."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 4 or np.var(x) == 0:
        return float(n)
    xc = x - x.mean()
    f = np.fft.rfft(np.concatenate([xc, np.zeros(n)]))
    ac = np.fft.irfft(f * np.conj(f))[:n]
    ac = ac / ac[0]
    s = 0.0
    m = 0
    while 2 * m + 1 < n:
        g = ac[2 * m] + ac[2 * m + 1]
        if g < 0:
            break
        s += g
        m += 1
    tau = max(2.0 * s - 1.0, 1e-3)
    return float(n / tau)


class _IndexedSet:
    """Set with O(1) add/remove and O(1) access by position."""

    __slots__ = ("items", "pos")

    def __init__(self, items=()):
        self.items = list(items)
        self.pos = {x: k for k, x in enumerate(self.items)}

    def __len__(self):
        return len(self.items)

    def __getitem__(self, k):
        return self.items[k]

    def __contains__(self, x):
        return x in self.pos

    def add(self, x):
        if x not in self.pos:
            self.pos[x] = len(self.items)
            self.items.append(x)

    def remove(self, x):
        k = self.pos.pop(x)
        last = self.items.pop()
        if last != x:
            self.items[k] = last
            self.pos[last] = k


@dataclass
class ChainDiagnostics:
    acceptance: dict
    ess: dict
    scalar_summary: dict


@dataclass
class PosteriorSampleSet:
    """Thinned posterior draws plus per-iteration scalar traces.

    ``linkage_labels`` holds 1-based cluster labels in record order, one
    row per retained sample; scalar traces cover every post-burn-in
    iteration.  ``pointwise`` (optional) has one column per data unit,
    network dyads first.
    """

    sizes: list
    dim: int
    mode: str
    burn_in: int
    thin: int
    seed: int
    linkage_labels: np.ndarray
    beta: np.ndarray
    sigma2: np.ndarray
    psi: np.ndarray
    n_network_units: int = 0
    n_profile_units: int = 0
    pointwise: np.ndarray = None
    criteria: dict = None
    acceptance: dict = None
    config: dict = None
    hyper: dict = None

    @property
    def n_samples(self) -> int:
        return self.linkage_labels.shape[0]

    @property
    def n_records(self) -> int:
        return sum(self.sizes)

    def population_sizes(self) -> np.ndarray:
        """Latent population size of each retained sample."""
        return self.linkage_labels.max(axis=1).astype(np.int64)

    def ref_of_global(self, g: int):
        """Map a 0-based global record index to 0-based (file, index)."""
        for j, s in enumerate(self.sizes):
            if g < s:
                return (j, g)
            g -= s
        raise DataError("global record index out of range")

    def sample_pairs(self, s: int) -> list:
        """Linked 0-based ((j,i),(k,i')) record pairs of sample ``s``."""
        row = self.linkage_labels[s]
        order = np.argsort(row, kind="stable")
        out = []
        for a, b in zip(order[:-1], order[1:]):
            if row[a] == row[b]:
                out.append(tuple(sorted((self.ref_of_global(int(a)),
                                         self.ref_of_global(int(b))))))
        return sorted(out)

    def save(self, path):
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        np.savetxt(path / "labels.txt", self.linkage_labels, fmt="%d")
        cols = [f"beta_{j + 1}" for j in range(self.beta.shape[1])] + ["sigma2"] \
            + [f"psi_{l + 1}" for l in range(self.psi.shape[1])]
        stacked = np.column_stack([self.beta, self.sigma2[:, None], self.psi])
        np.savetxt(path / "traces.csv", stacked, delimiter=",",
                   header=",".join(cols), comments="")
        if self.pointwise is not None:
            np.save(path / "pointwise.npy", self.pointwise)
        meta = {"sizes": list(self.sizes), "dim": self.dim, "mode": self.mode,
                "burn_in": self.burn_in, "thin": self.thin, "seed": self.seed,
                "n_network_units": self.n_network_units,
                "n_profile_units": self.n_profile_units,
                "criteria": self.criteria, "acceptance": self.acceptance,
                "config": self.config, "hyper": self.hyper,
                "n_files": self.beta.shape[1], "n_fields": self.psi.shape[1]}
        (path / "manifest.json").write_text(json.dumps(meta, indent=2))

    @classmethod
    def load(cls, path) -> "PosteriorSampleSet":
        path = Path(path)
        meta = json.loads((path / "manifest.json").read_text())
        labels = np.loadtxt(path / "labels.txt", dtype=np.int32, ndmin=2)
        stacked = np.loadtxt(path / "traces.csv", delimiter=",", skiprows=1,
                             ndmin=2)
        J, L = meta["n_files"], meta["n_fields"]
        pw = None
        if (path / "pointwise.npy").exists():
            pw = np.load(path / "pointwise.npy")
        return cls(sizes=meta["sizes"], dim=meta["dim"], mode=meta["mode"],
                   burn_in=meta["burn_in"], thin=meta["thin"], seed=meta["seed"],
                   linkage_labels=labels,
                   beta=stacked[:, :J], sigma2=stacked[:, J],
                   psi=stacked[:, J + 1:J + 1 + L],
                   n_network_units=meta["n_network_units"],
                   n_profile_units=meta["n_profile_units"],
                   pointwise=pw, criteria=meta["criteria"],
                   acceptance=meta["acceptance"], config=meta["config"],
                   hyper=meta["hyper"])


class SamplerContext:
    """Precomputed caches plus the individual update blocks.

    All updates mutate the passed state in place and draw from ``rng``
    only, so a fixed seed reproduces the chain exactly.  The context reads
    profile and network arrays through live references; tests that redraw
    the data in place can keep using the same context.
    """

    def __init__(self, dataset: Dataset, hyper: HyperParams,
                 config: SamplerConfig, anchors: PairSet = None):
        hyper.validate(dataset)
        if config.use_network and not dataset.has_networks:
            raise DataError(f"mode {config.mode!r} needs network data")
        if config.use_profile and dataset.n_fields == 0:
            raise DataError(f"mode {config.mode!r} needs profile fields")
        self.dataset = dataset
        self.hyper = hyper
        self.config = config
        self.J = dataset.n_files
        self.L = dataset.n_fields
        self.K = hyper.dim
        self.sizes = dataset.sizes
        self.use_profile = config.use_profile and self.L > 0
        self.use_network = config.use_network and dataset.has_networks

        self.P = [t.values for t in dataset.profiles]
        self.obs = [t.values >= 0 for t in dataset.profiles]
        self.Y = [net.matrix for net in dataset.networks] \
            if dataset.has_networks else None
        self.kinds = [f.kind for f in dataset.fields]

        # string-field caches over the fixed observed support
        self.zeta_mat = {}     # zeta[p, truth] under the working measure
        self.log_zeta_mat = {}
        self.gamma = {}
        self.gamma_cum = {}
        self.log_gamma = {}
        for ell, f in enumerate(dataset.fields):
            if f.kind == "string":
                sd = get_string_distortion(f, hyper.lam)
                logz = (sd.log_gamma[:, None] + sd.log_h[None, :]
                        - hyper.lam * sd.dist)
                self.log_zeta_mat[ell] = logz
                self.zeta_mat[ell] = np.exp(logz)
                self.gamma[ell] = sd.gamma
                self.gamma_cum[ell] = np.cumsum(sd.gamma)
                self.log_gamma[ell] = sd.log_gamma

        self._others = [[np.delete(np.arange(s), i) for i in range(s)]
                        for s in self.sizes]
        self._triu = [np.triu_indices(s, k=1) for s in self.sizes]
        self._obs_idx = {(j, ell): np.nonzero(self.obs[j][:, ell])[0]
                         for j in range(self.J) for ell in range(self.L)}
        self.n_obs_cells = np.array(
            [sum(len(self._obs_idx[(j, ell)]) for j in range(self.J))
             for ell in range(self.L)], dtype=np.int64)

        # anchors: clamped pairs excluded from linkage moves
        self.anchors = anchors
        self.anchored = [np.zeros(s, dtype=bool) for s in self.sizes]
        self.anchor_pairs0 = []
        if anchors is not None and len(anchors):
            anchors.validate_against(dataset)
            for a, b in anchors:
                self.anchored[a.file - 1][a.index - 1] = True
                self.anchored[b.file - 1][b.index - 1] = True
                self.anchor_pairs0.append(((a.file - 1, a.index - 1),
                                           (b.file - 1, b.index - 1)))
        self.sweep = [(j, i) for j in range(self.J)
                      for i in range(self.sizes[j]) if not self.anchored[j][i]]

        # pointwise unit layout: network dyads first, then profile cells
        self.net_unit_files = [s * (s - 1) // 2 for s in self.sizes] \
            if self.use_network else []
        self.n_network_units = sum(self.net_unit_files)
        self.n_profile_units = int(self.n_obs_cells.sum()) if self.use_profile else 0
        self.n_units = self.n_network_units + self.n_profile_units

        self.step_u = config.step_u
        self.step_beta = np.full(self.J, config.step_beta)
        self.reset_counters()
        self._win = {"u": [0, 0], "beta": [np.zeros(self.J), np.zeros(self.J)]}

    # -- bookkeeping ----------------------------------------------------------

    def reset_counters(self):
        self.acc = {"linkage": [0, 0], "u": [0, 0], "beta": [0, 0]}

    def acceptance_rates(self) -> dict:
        return {k: (v[0] / v[1] if v[1] else None) for k, v in self.acc.items()}

    def adapt_step_sizes(self):
        a, n = self._win["u"]
        if n:
            self.step_u = adapt_step_size(self.step_u, a / n,
                                          self.config.target_accept_u)
        ab, nb = self._win["beta"]
        for j in range(self.J):
            if nb[j]:
                self.step_beta[j] = adapt_step_size(
                    self.step_beta[j], ab[j] / nb[j],
                    self.config.target_accept_beta)
        self._win = {"u": [0, 0], "beta": [np.zeros(self.J), np.zeros(self.J)]}

    def _accept(self, log_ratio: float, rng) -> bool:
        if log_ratio >= 0:
            return True
        if log_ratio < -745.0:
            return False
        return rng.random() < math.exp(log_ratio)

    # -- initialization --------------------------------------------------------

    def initial_state(self, rng, init_globals: GlobalParams = None) -> ModelState:
        """All-singleton start (anchors pre-linked), profile truths copied
        from observed values, globals at their prior centers."""
        hyper = self.hyper
        if init_globals is not None:
            params = init_globals.copy()
        else:
            sigma2 = hyper.b_sigma / (hyper.a_sigma - 1) if hyper.a_sigma > 1 \
                else hyper.b_sigma / hyper.a_sigma
            theta = [np.asarray(a, float) / np.sum(a) if k == "categorical" else None
                     for a, k in zip(hyper.alpha, self.kinds)]
            params = GlobalParams(np.zeros(self.J), float(sigma2), theta,
                                  hyper.a_psi / (hyper.a_psi + hyper.b_psi))
        params.validate(self.dataset.fields)

        if self.anchor_pairs0:
            linkage = LinkageStructure.from_pairs(self.sizes, self.anchor_pairs0)
        else:
            linkage = LinkageStructure.singletons(self.sizes)
        n = linkage.n_clusters
        cap = sum(self.sizes)
        pi = np.zeros((cap, self.L), dtype=np.int32)
        for ell, f in enumerate(self.dataset.fields):
            base = params.theta[ell] if f.kind == "categorical" else f.freq_array()
            pi[:n, ell] = rng.choice(f.n_levels, size=n, p=base)
            for j in range(self.J):
                idx = self._obs_idx[(j, ell)]
                pi[linkage.labels[j][idx], ell] = self.P[j][idx, ell]
        u = np.zeros((cap, self.K))
        u[:n] = rng.standard_normal((n, self.K)) * math.sqrt(params.sigma2)
        w = []
        for j in range(self.J):
            truth = pi[linkage.labels[j]][:, :self.L]
            wj = ((self.P[j] != truth) & self.obs[j]).astype(np.int8) \
                if self.L else np.zeros((self.sizes[j], 0), np.int8)
            w.append(wj)
        state = ModelState(linkage, pi, u, w, params)
        state.validate(self.dataset, hyper, check_w=self.config.use_profile)
        return state

    # -- per-record likelihood pieces ------------------------------------------

    def record_network_loglik(self, state: ModelState, j: int, i: int,
                              u_row) -> float:
        """Log-likelihood of record (j,i)'s dyads with its position at
        ``u_row`` and everyone else in place."""
        others = self._others[j][i]
        pos = state.u[state.linkage.labels[j][others]]
        diff = pos - u_row
        x = state.params.beta[j] - np.sqrt((diff * diff).sum(axis=1))
        y = self.Y[j][i][others]
        return float(np.where(y, log_expit(x), log_expit(-x)).sum())

    def _draw_pi_prior_row(self, state: ModelState, rng) -> np.ndarray:
        row = np.zeros(self.L, dtype=np.int32)
        for ell in range(self.L):
            if self.kinds[ell] == "categorical":
                cum = np.cumsum(state.params.theta[ell])
            else:
                cum = self.gamma_cum[ell]
            row[ell] = min(int(np.searchsorted(cum, rng.random(), side="right")),
                           len(cum) - 1)
        return row

    def _pi_field_weights(self, state: ModelState, records, ell: int):
        """Unnormalized conditional over one field's latent value for a
        cluster holding ``records``, distortion flags summed out."""
        categorical = self.kinds[ell] == "categorical"
        base = state.params.theta[ell] if categorical else self.gamma[ell]
        psi = float(state.params.psi[ell])
        w = base.copy()
        for (j, i) in records:
            p = int(self.P[j][i, ell])
            if p < 0:
                continue
            if categorical:
                g = np.full(base.shape, psi * base[p])
            else:
                g = psi * self.zeta_mat[ell][p]
            g[p] += 1.0 - psi
            w = w * g
        return w

    def cluster_profile_collapsed(self, state: ModelState, records) -> float:
        """Log-likelihood of ``records``'s cells as one cluster, with the
        cluster's latent profile and the distortion flags summed out."""
        total = 0.0
        for ell in range(self.L):
            s = float(self._pi_field_weights(state, records, ell).sum())
            total += math.log(s) if s > 0 else LOG_ZERO
        return total

    def _refresh_cluster_latents(self, state: ModelState, c: int, rng):
        """Gibbs draw of cluster ``c``'s latent profile from its flag-summed
        conditional, then of its members' distortion flags."""
        if not self.use_profile:
            return
        members = state.linkage.members[c]
        for ell in range(self.L):
            w = self._pi_field_weights(state, members, ell)
            tot = float(w.sum())
            if tot <= 0:
                continue
            cum = np.cumsum(w)
            state.pi[c, ell] = min(
                int(np.searchsorted(cum, rng.random() * tot, side="right")),
                len(cum) - 1)
        for (j, i) in members:
            self._resample_record_w(state, j, i, rng)

    def _new_u_logpdf(self, u_row, center, sigma2: float) -> float:
        """Log density of the new-cluster position proposal, a mixture of
        the position prior and a kernel around ``center``."""
        lp = -0.5 * (float((u_row * u_row).sum()) / sigma2
                     + self.K * math.log(2.0 * math.pi * sigma2))
        d = u_row - center
        s2 = LOCAL_U_SD * LOCAL_U_SD
        ll = -0.5 * (float((d * d).sum()) / s2
                     + self.K * math.log(2.0 * math.pi * s2))
        return float(np.logaddexp(lp + math.log(1.0 - LOCAL_U_WEIGHT),
                                  ll + math.log(LOCAL_U_WEIGHT)))

    def _draw_new_u(self, state: ModelState, center, rng):
        """Position for a cluster the move would create, plus the log
        prior-to-proposal density ratio at the draw.

        Fresh positions drawn from the prior alone almost never land near
        an existing neighbourhood once the chain has adapted, which freezes
        every linked pair in place; mixing in a kernel around the current
        cluster position keeps detach moves alive.  The returned ratio
        corrects the acceptance so the target is unchanged.
        """
        sigma2 = state.params.sigma2
        if not self.use_network:
            return rng.standard_normal(self.K) * math.sqrt(sigma2), 0.0
        if rng.random() < LOCAL_U_WEIGHT:
            u_new = center + rng.standard_normal(self.K) * LOCAL_U_SD
        else:
            u_new = rng.standard_normal(self.K) * math.sqrt(sigma2)
        lp = -0.5 * (float((u_new * u_new).sum()) / sigma2
                     + self.K * math.log(2.0 * math.pi * sigma2))
        return u_new, lp - self._new_u_logpdf(u_new, center, sigma2)

    def _vanish_u_logratio(self, state: ModelState, u_old, center) -> float:
        """Log proposal-to-prior density ratio for a cluster position the
        move removes; the reverse move would have to re-draw it around
        ``center``."""
        if not self.use_network:
            return 0.0
        sigma2 = state.params.sigma2
        lp = -0.5 * (float((u_old * u_old).sum()) / sigma2
                     + self.K * math.log(2.0 * math.pi * sigma2))
        return self._new_u_logpdf(u_old, center, sigma2) - lp

    def _resample_record_w(self, state: ModelState, j: int, i: int, rng):
        c = int(state.linkage.labels[j][i])
        psi = state.params.psi
        for ell in range(self.L):
            p = int(self.P[j][i, ell])
            if p < 0:
                state.w[j][i, ell] = 0
                continue
            if not self.use_profile:
                state.w[j][i, ell] = 1 if rng.random() < psi[ell] else 0
                continue
            if p != state.pi[c, ell]:
                state.w[j][i, ell] = 1
                continue
            if self.kinds[ell] == "categorical":
                zeta = float(state.params.theta[ell][p])
            else:
                zeta = float(self.zeta_mat[ell][p, p])
            q = psi[ell] * zeta
            state.w[j][i, ell] = 1 if rng.random() < q / (q + 1 - psi[ell]) else 0

    # -- update blocks ----------------------------------------------------------

    def update_linkage(self, state: ModelState, rng, repeats: int = None):
        """One full sweep of constrained linkage moves."""
        if repeats is None:
            repeats = self.config.linkage_repeats
        lk = state.linkage
        sing = [
            _IndexedSet((j, i) for i in range(self.sizes[j])
                        if not self.anchored[j][i]
                        and len(lk.members[lk.labels[j][i]]) == 1)
            for j in range(self.J)
        ]
        for (j, i) in self.sweep:
            for _ in range(repeats):
                self._move_record(state, sing, j, i, rng)

    def _move_record(self, state: ModelState, sing, j, i, rng):
        lk = state.linkage
        c = int(lk.labels[j][i])
        mem = lk.members[c]
        paired = len(mem) == 2
        n_sing = sum(len(sing[jp]) for jp in range(self.J) if jp != j)
        n_opts = 1 + n_sing + (1 if paired else 0)
        t = int(rng.integers(n_opts))
        exact = self.config.exact_linkage_ratio and self.use_profile
        self.acc["linkage"][1] += 1

        if t == 0:
            # fresh latents for this record's own (possibly new) cluster
            u_new, delta = self._draw_new_u(state, state.u[c], rng)
            if not paired:
                # the old position vanishes; the reverse move re-draws it
                # around the cluster's new position
                delta += self._vanish_u_logratio(state, state.u[c], u_new)
            if exact:
                if paired:
                    partner = mem[0] if mem[0] != (j, i) else mem[1]
                    delta += self.cluster_profile_collapsed(state, [partner]) \
                        + self.cluster_profile_collapsed(state, [(j, i)]) \
                        - self.cluster_profile_collapsed(state, mem)
                pi_new = state.pi[c]
            else:
                pi_new = self._draw_pi_prior_row(state, rng)
            if self.use_network:
                delta += self.record_network_loglik(state, j, i, u_new) \
                    - self.record_network_loglik(state, j, i, state.u[c])
            if not self._accept(delta, rng):
                return
            if paired:
                new = state.detach_record(j, i, pi_new, u_new)
                partner = mem[0]
                sing[j].add((j, i))
                sing[partner[0]].add(partner)
                if exact:
                    self._refresh_cluster_latents(state, new, rng)
                    self._refresh_cluster_latents(state, c, rng)
                    self.acc["linkage"][0] += 1
                    return
            else:
                state.set_cluster_latents(c, pi_new, u_new)
                if exact:
                    self._refresh_cluster_latents(state, c, rng)
                    self.acc["linkage"][0] += 1
                    return
            self._resample_record_w(state, j, i, rng)
            self.acc["linkage"][0] += 1
            return

        # map option index to an eligible partner
        t1 = t - 1
        q = None
        for jp in range(self.J):
            if jp == j:
                continue
            if t1 < len(sing[jp]):
                q = sing[jp][t1]
                break
            t1 -= len(sing[jp])
        if q is None:
            # staying with the current partner: nothing changes
            self.acc["linkage"][0] += 1
            return
        cq = int(lk.labels[q[0]][q[1]])
        delta = 0.0
        if not paired:
            # this record's own cluster vanishes when it joins ``cq``
            delta += self._vanish_u_logratio(state, state.u[c], state.u[cq])
        if exact:
            delta += self.cluster_profile_collapsed(state, [q, (j, i)]) \
                - self.cluster_profile_collapsed(state, [q])
            if paired:
                partner = mem[0] if mem[0] != (j, i) else mem[1]
                delta += self.cluster_profile_collapsed(state, [partner]) \
                    - self.cluster_profile_collapsed(state, mem)
            else:
                delta -= self.cluster_profile_collapsed(state, [(j, i)])
        if self.use_network:
            delta += self.record_network_loglik(state, j, i, state.u[cq]) \
                - self.record_network_loglik(state, j, i, state.u[c])
        if not self._accept(delta, rng):
            return
        tgt = state.move_record(j, i, cq)
        sing[q[0]].remove(q)
        if paired:
            partner = mem[0]
            sing[partner[0]].add(partner)
        else:
            sing[j].remove((j, i))
        if exact:
            self._refresh_cluster_latents(state, tgt, rng)
            if paired:
                self._refresh_cluster_latents(state, c, rng)
        else:
            self._resample_record_w(state, j, i, rng)
        self.acc["linkage"][0] += 1

    def update_distortions(self, state: ModelState, rng):
        """Gibbs redraw of every observed cell's distortion flag."""
        psi = state.params.psi
        for j in range(self.J):
            labj = state.linkage.labels[j]
            for ell in range(self.L):
                idx = self._obs_idx[(j, ell)]
                if not len(idx):
                    continue
                if not self.use_profile:
                    state.w[j][idx, ell] = (rng.random(len(idx)) < psi[ell]) \
                        .astype(np.int8)
                    continue
                col = self.P[j][idx, ell]
                truth = state.pi[labj[idx], ell]
                out = np.ones(len(idx), dtype=np.int8)
                eq = col == truth
                if np.any(eq):
                    vals = col[eq]
                    if self.kinds[ell] == "categorical":
                        zeta = state.params.theta[ell][vals]
                    else:
                        zeta = self.zeta_mat[ell][vals, vals]
                    q = psi[ell] * zeta
                    out[eq] = (rng.random(int(eq.sum()))
                               < q / (q + 1 - psi[ell])).astype(np.int8)
                state.w[j][idx, ell] = out

    def update_latent_profiles(self, state: ModelState, rng):
        """Per-cluster truth redraw: point mass on any undistorted linked
        value, otherwise the prior tilted by distorted linked cells (string
        fields) or the prior itself (categorical fields)."""
        n = state.n_latent
        for ell in range(self.L):
            kind = self.kinds[ell]
            forced = np.full(n, -1, dtype=np.int64)
            tilted = {}
            if self.use_profile:
                for j in range(self.J):
                    idx = self._obs_idx[(j, ell)]
                    if not len(idx):
                        continue
                    labj = state.linkage.labels[j][idx]
                    wcol = state.w[j][idx, ell]
                    zero = wcol == 0
                    forced[labj[zero]] = self.P[j][idx[zero], ell]
                    if kind == "string":
                        for k in np.nonzero(wcol == 1)[0]:
                            tilted.setdefault(int(labj[k]), []).append(
                                int(self.P[j][idx[k], ell]))
            free = forced < 0
            nfree = int(free.sum())
            col = forced.copy()
            if kind == "categorical":
                cum = np.cumsum(state.params.theta[ell])
                col[free] = np.minimum(
                    np.searchsorted(cum, rng.random(nfree), side="right"),
                    len(cum) - 1)
            else:
                sd = get_string_distortion(self.dataset.fields[ell],
                                           self.hyper.lam)
                cum = self.gamma_cum[ell]
                col[free] = np.minimum(
                    np.searchsorted(cum, rng.random(nfree), side="right"),
                    len(cum) - 1)
                for c, vals in tilted.items():
                    if not free[c]:
                        continue
                    lp = sd.log_gamma + len(vals) * sd.log_h \
                        - self.hyper.lam * sd.dist[vals].sum(axis=0)
                    lp -= lp.max()
                    p = np.exp(lp)
                    p /= p.sum()
                    col[c] = rng.choice(len(p), p=p)
            state.pi[:n, ell] = col

    def update_positions(self, state: ModelState, rng):
        """Random-walk Metropolis on each cluster position."""
        n = state.n_latent
        sigma2 = state.params.sigma2
        for c in range(n):
            cur = state.u[c].copy()
            prop = cur + self.step_u * rng.standard_normal(self.K)
            delta = (float(cur @ cur) - float(prop @ prop)) / (2.0 * sigma2)
            if self.use_network:
                for (j, i) in state.linkage.members[c]:
                    delta += self.record_network_loglik(state, j, i, prop) \
                        - self.record_network_loglik(state, j, i, cur)
            self.acc["u"][1] += 1
            self._win["u"][1] += 1
            if self._accept(delta, rng):
                state.u[c] = prop
                self.acc["u"][0] += 1
                self._win["u"][0] += 1

    def update_psi(self, state: ModelState, rng):
        """Conjugate Beta redraw of each field's distortion rate; counts
        run over observed cells only."""
        for ell in range(self.L):
            s = sum(int(state.w[j][:, ell].sum()) for j in range(self.J))
            n = int(self.n_obs_cells[ell])
            state.params.psi[ell] = rng.beta(self.hyper.a_psi[ell] + s,
                                             self.hyper.b_psi[ell] + n - s)

    def update_theta(self, state: ModelState, rng):
        """Conjugate Dirichlet redraw of each categorical field's pmf."""
        n = state.n_latent
        for ell in range(self.L):
            if self.kinds[ell] != "categorical":
                continue
            m = len(self.hyper.alpha[ell])
            counts = np.bincount(state.pi[:n, ell], minlength=m).astype(float)
            if self.use_profile:
                for j in range(self.J):
                    idx = self._obs_idx[(j, ell)]
                    sel = idx[state.w[j][idx, ell] == 1]
                    if len(sel):
                        counts += np.bincount(self.P[j][sel, ell], minlength=m)
            state.params.theta[ell] = rng.dirichlet(self.hyper.alpha[ell] + counts)

    def update_beta(self, state: ModelState, rng):
        """Random-walk Metropolis on each file's edge intercept."""
        for j in range(self.J):
            cur = float(state.params.beta[j])
            prop = cur + self.step_beta[j] * rng.standard_normal()
            om2 = float(self.hyper.omega[j]) ** 2
            delta = (cur * cur - prop * prop) / (2.0 * om2)
            if self.use_network:
                pos = state.u[state.linkage.labels[j]]
                diff = pos[:, None, :] - pos[None, :, :]
                d = np.sqrt((diff * diff).sum(axis=-1))[self._triu[j]]
                y = self.Y[j][self._triu[j]]
                xc = cur - d
                xp = prop - d
                delta += float(np.where(y, log_expit(xp), log_expit(-xp)).sum()
                               - np.where(y, log_expit(xc), log_expit(-xc)).sum())
            self.acc["beta"][1] += 1
            self._win["beta"][1][j] += 1
            if self._accept(delta, rng):
                state.params.beta[j] = prop
                self.acc["beta"][0] += 1
                self._win["beta"][0][j] += 1

    def update_sigma2(self, state: ModelState, rng):
        """Conjugate inverse-gamma redraw of the position scale."""
        n = state.n_latent
        uu = state.u[:n]
        shape = self.hyper.a_sigma + 0.5 * n * self.K
        scale = self.hyper.b_sigma + 0.5 * float((uu * uu).sum())
        state.params.sigma2 = float(scale / rng.gamma(shape))

    def iterate(self, state: ModelState, rng):
        """One full MCMC iteration over all enabled blocks."""
        cfg = self.config
        self.update_linkage(state, rng)
        if self.L:
            self.update_distortions(state, rng)
            self.update_latent_profiles(state, rng)
        if cfg.sample_u:
            self.update_positions(state, rng)
        if self.L and cfg.sample_psi:
            self.update_psi(state, rng)
        if self.L and cfg.sample_theta:
            self.update_theta(state, rng)
        if cfg.sample_beta:
            self.update_beta(state, rng)
        if cfg.sample_sigma2:
            self.update_sigma2(state, rng)

    # -- pointwise log-likelihoods ----------------------------------------------

    def pointwise_row(self, state: ModelState) -> np.ndarray:
        """Per-unit log-likelihoods at the current state: network dyads
        (upper triangle per file), then observed profile cells with the
        distortion flags summed out."""
        parts = []
        if self.use_network:
            for j in range(self.J):
                pos = state.u[state.linkage.labels[j]]
                diff = pos[:, None, :] - pos[None, :, :]
                x = state.params.beta[j] \
                    - np.sqrt((diff * diff).sum(axis=-1))[self._triu[j]]
                y = self.Y[j][self._triu[j]]
                parts.append(np.where(y, log_expit(x), log_expit(-x)))
        if self.use_profile:
            psi = state.params.psi
            for j in range(self.J):
                labj = state.linkage.labels[j]
                for ell in range(self.L):
                    idx = self._obs_idx[(j, ell)]
                    if not len(idx):
                        continue
                    p = self.P[j][idx, ell]
                    truth = state.pi[labj[idx], ell]
                    if self.kinds[ell] == "categorical":
                        zeta = state.params.theta[ell][p]
                    else:
                        zeta = self.zeta_mat[ell][p, truth]
                    val = psi[ell] * zeta + (1.0 - psi[ell]) * (p == truth)
                    parts.append(np.log(np.maximum(val, 1e-300)))
        if not parts:
            return np.zeros(0)
        return np.concatenate(parts)


def run_chain(dataset: Dataset, hyper: HyperParams, config: SamplerConfig,
              anchors: PairSet = None, init_globals: GlobalParams = None):
    """Run one chain; returns (PosteriorSampleSet, ChainDiagnostics).

    Scalar traces are stored for every post-burn-in iteration; linkage
    labels (and pointwise log-likelihoods, when any units exist) at every
    thin-th one.  Step-size adaptation happens during burn-in only.
    """
    ctx = SamplerContext(dataset, hyper, config, anchors)
    rng = np.random.default_rng(config.seed)
    state = ctx.initial_state(rng, init_globals)
    T = config.iterations - config.burn_in
    S = T // config.thin
    if S < 1:
        raise DataError("no retained samples: lengthen the chain or cut thinning")
    J, L, I = ctx.J, ctx.L, dataset.n_records
    beta_tr = np.zeros((T, J))
    sigma_tr = np.zeros(T)
    psi_tr = np.zeros((T, L))
    n_tr = np.zeros(T, dtype=np.int64)
    labels = np.zeros((S, I), dtype=np.int32)
    accum = PointwiseAccumulator(ctx.n_units) if ctx.n_units else None
    pw = np.zeros((S, ctx.n_units)) if config.store_pointwise and ctx.n_units \
        else None

    s = 0
    for t in range(1, config.iterations + 1):
        ctx.iterate(state, rng)
        if config.adapt and t <= config.burn_in and t % config.adapt_window == 0:
            ctx.adapt_step_sizes()
        if t == config.burn_in:
            ctx.reset_counters()
        if config.validate_every and t % config.validate_every == 0:
            state.validate(dataset, hyper, check_w=config.use_profile)
        if t > config.burn_in:
            k = t - config.burn_in - 1
            beta_tr[k] = state.params.beta
            sigma_tr[k] = state.params.sigma2
            psi_tr[k] = state.params.psi
            n_tr[k] = state.n_latent
            if (t - config.burn_in) % config.thin == 0:
                labels[s] = state.linkage.labels_vector()
                if accum is not None:
                    row = ctx.pointwise_row(state)
                    accum.add_row(row)
                    if pw is not None:
                        pw[s] = row
                s += 1

    criteria = None
    if accum is not None and S >= 2:
        criteria = {}
        ranges = {"all": (0, ctx.n_units)}
        if ctx.n_network_units:
            ranges["network"] = (0, ctx.n_network_units)
        if ctx.n_profile_units:
            ranges["profile"] = (ctx.n_network_units, ctx.n_units)
        for scope, (a, b) in ranges.items():
            w, d = accum.results(a, b)
            criteria[scope] = {"waic": w.waic, "lppd": w.lppd,
                               "p_waic": w.p_waic, "dic": d.dic,
                               "d_bar": d.d_bar, "d_hat": d.d_hat, "p_d": d.p_d}

    rates = ctx.acceptance_rates()
    ess = {"sigma2": effective_sample_size(sigma_tr),
           "n_latent": effective_sample_size(n_tr)}
    summary = {"sigma2": {"mean": float(sigma_tr.mean()),
                          "sd": float(sigma_tr.std(ddof=1)) if T > 1 else 0.0},
               "n_latent": {"mean": float(n_tr.mean()),
                            "sd": float(n_tr.std(ddof=1)) if T > 1 else 0.0}}
    for j in range(J):
        ess[f"beta_{j + 1}"] = effective_sample_size(beta_tr[:, j])
        summary[f"beta_{j + 1}"] = {"mean": float(beta_tr[:, j].mean()),
                                    "sd": float(beta_tr[:, j].std(ddof=1))
                                    if T > 1 else 0.0}
    for ell in range(L):
        ess[f"psi_{ell + 1}"] = effective_sample_size(psi_tr[:, ell])
        summary[f"psi_{ell + 1}"] = {"mean": float(psi_tr[:, ell].mean()),
                                     "sd": float(psi_tr[:, ell].std(ddof=1))
                                     if T > 1 else 0.0}

    samples = PosteriorSampleSet(
        sizes=list(dataset.sizes), dim=ctx.K, mode=config.mode,
        burn_in=config.burn_in, thin=config.thin, seed=config.seed,
        linkage_labels=labels, beta=beta_tr, sigma2=sigma_tr, psi=psi_tr,
        n_network_units=ctx.n_network_units,
        n_profile_units=ctx.n_profile_units,
        pointwise=pw, criteria=criteria, acceptance=rates,
        config=asdict(config), hyper=ctx.hyper.to_mapping())
    diags = ChainDiagnostics(acceptance=rates, ess=ess, scalar_summary=summary)
    return samples, diags
