"""Model quantities: parameters, linkage state, likelihoods, priors.

The generative model links records across files through a partition into
singletons and cross-file pairs.  Each latent entity carries profile values
``pi`` and a latent position ``u``; observed profile cells are either exact
copies (distortion flag w = 0) or draws from a field-level distortion
distribution (w = 1); within-file edges are Bernoulli with log-odds
``beta_j - ||u - u'||``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import expit, log_expit

from .data import DataError, Dataset, FieldSpec
from .strings import StringDistortion

# Finite stand-in for log(0); states with probability zero get this value so
# arithmetic never produces NaN.
LOG_ZERO = -1e300


# ---------------------------------------------------------------------------
# parameters

@dataclass
class GlobalParams:
    """Shared parameters: intercepts, position scale, field laws.

    ``theta`` holds one pmf per categorical field and None per string field
    (string distortions are driven by empirical frequencies instead).
    """

    beta: np.ndarray
    sigma2: float
    theta: list
    psi: np.ndarray

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=float)
        self.psi = np.asarray(self.psi, dtype=float)

    def copy(self) -> "GlobalParams":
        return GlobalParams(self.beta.copy(), float(self.sigma2),
                            [None if t is None else t.copy() for t in self.theta],
                            self.psi.copy())

    def validate(self, fields):
        if self.sigma2 <= 0:
            raise DataError("sigma2 must be positive")
        if np.any((self.psi <= 0) | (self.psi >= 1)):
            raise DataError("psi must lie in (0, 1)")
        if len(self.theta) != len(fields):
            raise DataError("theta length does not match fields")
        for f, t in zip(fields, self.theta):
            if f.kind == "categorical":
                t = np.asarray(t)
                if t.shape != (f.n_levels,) or np.any(t <= 0) \
                        or not np.isclose(t.sum(), 1.0):
                    raise DataError(f"field {f.name}: theta must be a pmf")
            elif t is not None:
                raise DataError(f"field {f.name}: string fields carry no theta")


@dataclass
class HyperParams:
    """Fixed hyperparameters of all priors."""

    dim: int
    omega: np.ndarray          # (n_files,) prior sd of each intercept
    a_sigma: float
    b_sigma: float
    alpha: list                # per-field Dirichlet weights
    a_psi: np.ndarray
    b_psi: np.ndarray
    lam: float = 1.0
    alpha_mode: tuple = ()
    cv_sigma: float = None

    def __post_init__(self):
        self.omega = np.asarray(self.omega, dtype=float)
        self.a_psi = np.asarray(self.a_psi, dtype=float)
        self.b_psi = np.asarray(self.b_psi, dtype=float)
        if self.dim < 1:
            raise DataError("dim must be >= 1")
        if self.a_sigma <= 0 or self.b_sigma <= 0:
            raise DataError("sigma2 prior shape/scale must be positive")
        if np.any(self.omega <= 0):
            raise DataError("omega must be positive")
        if np.any(self.a_psi <= 0) or np.any(self.b_psi <= 0):
            raise DataError("psi prior parameters must be positive")
        if self.lam < 0:
            raise DataError("lam must be nonnegative")

    def validate(self, dataset: Dataset):
        if len(self.omega) != dataset.n_files:
            raise DataError("omega length must equal number of files")
        if len(self.alpha) != dataset.n_fields:
            raise DataError("alpha length must equal number of fields")
        if len(self.a_psi) != dataset.n_fields or len(self.b_psi) != dataset.n_fields:
            raise DataError("psi prior length must equal number of fields")
        for f, a in zip(dataset.fields, self.alpha):
            if np.asarray(a).shape != (f.n_levels,):
                raise DataError(f"field {f.name}: alpha has wrong length")

    def to_mapping(self) -> dict:
        """Flat key-value form (single omega/a_psi/b_psi when shared)."""
        def squeeze(v):
            v = np.asarray(v, dtype=float)
            return float(v[0]) if np.all(v == v[0]) else [float(x) for x in v]
        out = {
            "K": self.dim,
            "omega": squeeze(self.omega),
            "a_sigma": float(self.a_sigma),
            "b_sigma": float(self.b_sigma),
            "lambda": float(self.lam),
            "a_psi": squeeze(self.a_psi) if len(self.a_psi) else 1.0,
            "b_psi": squeeze(self.b_psi) if len(self.b_psi) else 99.0,
        }
        if self.alpha_mode:
            out["alpha_mode"] = ",".join(self.alpha_mode)
        if self.cv_sigma is not None:
            out["cv_sigma"] = float(self.cv_sigma)
        return out

    @classmethod
    def from_mapping(cls, dataset: Dataset, mapping: dict) -> "HyperParams":
        """Rebuild from the flat form; alpha vectors come from the dataset."""
        m = dict(mapping)
        dim = int(m["K"])
        J, L = dataset.n_files, dataset.n_fields

        def expand(v, n):
            arr = np.atleast_1d(np.asarray(v, dtype=float))
            if arr.shape == (1,):
                arr = np.full(n, arr[0])
            if arr.shape != (n,):
                raise DataError("hyperparameter vector has wrong length")
            return arr

        modes = m.get("alpha_mode")
        if modes is None:
            modes = ["ones" if f.kind == "categorical" else "empirical"
                     for f in dataset.fields]
        elif isinstance(modes, str):
            modes = [s.strip() for s in modes.split(",")]
        if len(modes) == 1 and L > 1:
            modes = list(modes) * L
        if len(modes) != L:
            raise DataError("alpha_mode length must equal number of fields")
        alpha = []
        for f, mode in zip(dataset.fields, modes):
            if mode == "ones":
                alpha.append(np.ones(f.n_levels))
            elif mode == "empirical":
                alpha.append(f.freq_array())
            else:
                raise DataError(f"unknown alpha_mode {mode!r}")
        if "a_sigma" in m and "b_sigma" in m:
            a_s, b_s = float(m["a_sigma"]), float(m["b_sigma"])
            cv = m.get("cv_sigma")
        else:
            cv = float(m.get("cv_sigma", 0.5))
            a_s, b_s = elicit_sigma_prior(dataset.n_records, dim, cv)
        return cls(dim=dim,
                   omega=expand(m.get("omega", 100.0), J),
                   a_sigma=a_s, b_sigma=b_s, alpha=alpha,
                   a_psi=expand(m.get("a_psi", 1.0), L),
                   b_psi=expand(m.get("b_psi", 99.0), L),
                   lam=float(m.get("lambda", 1.0)),
                   alpha_mode=tuple(modes),
                   cv_sigma=None if cv is None else float(cv))


def elicit_sigma_prior(n_records: int, dim: int, cv: float = 0.5):
    """Inverse-gamma prior for sigma2 sized so records have room to spread.

    The prior mean grows with the number of records and the latent
    dimension; ``cv`` fixes the coefficient of variation.  Returns (shape,
    scale).
    """
    if n_records < 1 or dim < 1:
        raise DataError("need positive record count and dimension")
    root = math.sqrt(n_records)
    if root <= 2:
        raise DataError("too few records to elicit a sigma2 prior (need > 4)")
    if cv <= 0:
        raise DataError("cv must be positive")
    log_mean = (math.log(root / (root - 2))
                + 0.5 * dim * math.log(math.pi)
                - math.lgamma(0.5 * dim + 1)
                + (2.0 / dim) * math.log(n_records))
    mean = math.exp(log_mean)
    a = 2.0 + cv ** -2
    b = mean * (a - 1.0)
    return a, b


def default_hyperparams(dataset: Dataset, dim: int, cv_sigma: float = 0.5,
                        lam: float = 1.0, omega: float = 100.0,
                        a_psi: float = 1.0, b_psi: float = 99.0) -> HyperParams:
    """Weakly informative defaults: flat Dirichlet for categorical fields,
    empirical frequencies for string fields, distortion rate centered near
    a_psi/(a_psi+b_psi), elicited sigma2 prior."""
    L = dataset.n_fields
    alpha, modes = [], []
    for f in dataset.fields:
        if f.kind == "categorical":
            alpha.append(np.ones(f.n_levels))
            modes.append("ones")
        else:
            alpha.append(f.freq_array())
            modes.append("empirical")
    a_s, b_s = elicit_sigma_prior(dataset.n_records, dim, cv_sigma)
    return HyperParams(dim=dim,
                       omega=np.full(dataset.n_files, float(omega)),
                       a_sigma=a_s, b_sigma=b_s, alpha=alpha,
                       a_psi=np.full(L, float(a_psi)),
                       b_psi=np.full(L, float(b_psi)),
                       lam=lam, alpha_mode=tuple(modes), cv_sigma=cv_sigma)


# ---------------------------------------------------------------------------
# string distortion cache

@lru_cache(maxsize=64)
def get_string_distortion(fieldspec: FieldSpec, lam: float) -> StringDistortion:
    return StringDistortion(fieldspec.levels, fieldspec.freq_array(), lam)


def string_distortion_pmf(fieldspec: FieldSpec, truth_level: int,
                          lam: float = 1.0) -> np.ndarray:
    """Normalized distortion pmf of a string field given the true level."""
    if fieldspec.kind != "string":
        raise DataError(f"field {fieldspec.name} is not string-valued")
    if not 0 <= truth_level < fieldspec.n_levels:
        raise DataError("truth_level out of range")
    return get_string_distortion(fieldspec, float(lam)).pmf(truth_level)


# ---------------------------------------------------------------------------
# linkage structure

class LinkageStructure:
    """Partition of all records into singletons and cross-file pairs.

    Internally 0-based: ``labels[j][i]`` is the cluster id of record i of
    file j, ids are contiguous 0..N-1, and ``members[c]`` lists the records
    of cluster c.  ``labels_vector`` exposes the 1-based public form.
    """

    def __init__(self, labels, members=None):
        self.labels = [np.asarray(l, dtype=np.int64) for l in labels]
        if members is None:
            n = max((int(l.max()) for l in self.labels if len(l)), default=-1) + 1
            members = [[] for _ in range(n)]
            for j, lab in enumerate(self.labels):
                for i, c in enumerate(lab):
                    members[c].append((j, int(i)))
        self.members = members
        self.validate()

    @classmethod
    def singletons(cls, sizes) -> "LinkageStructure":
        labels, off = [], 0
        for s in sizes:
            labels.append(np.arange(off, off + s, dtype=np.int64))
            off += s
        return cls(labels)

    @classmethod
    def from_pairs(cls, sizes, pairs) -> "LinkageStructure":
        """Build from 0-based ((j,i),(k,i')) pairs; all else singleton."""
        from .partitions import pairs_to_labels
        return cls(pairs_to_labels(sizes, sorted(pairs)))

    @property
    def n_clusters(self) -> int:
        return len(self.members)

    @property
    def sizes(self) -> list:
        return [len(l) for l in self.labels]

    def label(self, j: int, i: int) -> int:
        return int(self.labels[j][i])

    def members_of(self, c: int) -> list:
        return self.members[c]

    def labels_vector(self) -> np.ndarray:
        """Concatenated 1-based labels in (file, index) record order."""
        return np.concatenate(self.labels) + 1

    def pairs(self) -> list:
        """Sorted 0-based record pairs currently linked."""
        out = []
        for mem in self.members:
            if len(mem) == 2:
                a, b = sorted(mem)
                out.append((a, b))
        return sorted(out)

    def copy(self) -> "LinkageStructure":
        lk = object.__new__(LinkageStructure)
        lk.labels = [l.copy() for l in self.labels]
        lk.members = [list(m) for m in self.members]
        return lk

    def validate(self):
        seen = set()
        for c, mem in enumerate(self.members):
            if len(mem) not in (1, 2):
                raise DataError(f"cluster {c} has size {len(mem)}")
            if len(mem) == 2 and mem[0][0] == mem[1][0]:
                raise DataError(f"cluster {c} pairs records within one file")
            for (j, i) in mem:
                if not (0 <= j < len(self.labels) and 0 <= i < len(self.labels[j])):
                    raise DataError(f"cluster {c} references a missing record")
                if self.labels[j][i] != c:
                    raise DataError(f"labels/members disagree at ({j},{i})")
                if (j, i) in seen:
                    raise DataError(f"record ({j},{i}) in two clusters")
                seen.add((j, i))
        if len(seen) != sum(self.sizes):
            raise DataError("some records belong to no cluster")


class ModelState:
    """One complete MCMC state.

    ``pi`` (level codes) and ``u`` (positions) are capacity arrays with one
    row per possible entity; rows 0..N-1 are live, where N is the current
    cluster count.  ``w`` holds per-file distortion flags aligned with the
    profile tables.
    """

    def __init__(self, linkage: LinkageStructure, pi, u, w, params: GlobalParams):
        self.linkage = linkage
        self.pi = np.asarray(pi, dtype=np.int32)
        self.u = np.asarray(u, dtype=np.float64)
        self.w = [np.asarray(x, dtype=np.int8) for x in w]
        self.params = params

    @property
    def n_latent(self) -> int:
        return self.linkage.n_clusters

    def copy(self) -> "ModelState":
        return ModelState(self.linkage.copy(), self.pi.copy(), self.u.copy(),
                          [x.copy() for x in self.w], self.params.copy())

    # -- mutators used by the linkage sweep ---------------------------------

    def set_cluster_latents(self, c: int, pi_row, u_row):
        self.pi[c] = pi_row
        self.u[c] = u_row

    def detach_record(self, j: int, i: int, pi_row, u_row) -> int:
        """Split record (j,i) out of its pair into a fresh cluster."""
        lk = self.linkage
        c = lk.labels[j][i]
        lk.members[c].remove((j, i))
        new = lk.n_clusters
        lk.members.append([(j, i)])
        lk.labels[j][i] = new
        self.pi[new] = pi_row
        self.u[new] = u_row
        return new

    def move_record(self, j: int, i: int, target: int) -> int:
        """Move record (j,i) into cluster ``target``; returns the final id
        of that cluster (it can change when a freed slot is recycled)."""
        lk = self.linkage
        c = int(lk.labels[j][i])
        mem = lk.members[c]
        if len(mem) == 2:
            mem.remove((j, i))
        else:
            last = lk.n_clusters - 1
            if c != last:
                lk.members[c] = lk.members[last]
                for (jj, ii) in lk.members[c]:
                    lk.labels[jj][ii] = c
                self.pi[c] = self.pi[last]
                self.u[c] = self.u[last]
                if target == last:
                    target = c
            lk.members.pop()
        lk.members[target].append((j, i))
        lk.labels[j][i] = target
        return target

    # -- validation ----------------------------------------------------------

    def validate(self, dataset: Dataset, hyper: HyperParams = None,
                 check_w: bool = True):
        """Structural invariants; ``check_w`` additionally enforces the
        data-model constraint that an undistorted cell equals its latent
        truth, which only binds when the profile likelihood is in force."""
        self.linkage.validate()
        if self.linkage.sizes != dataset.sizes:
            raise DataError("linkage sizes do not match dataset")
        n = self.n_latent
        L = dataset.n_fields
        if self.pi.shape[0] < n or (L and self.pi.shape[1] != L):
            raise DataError("pi has wrong shape")
        if hyper is not None and self.u.shape[1] != hyper.dim:
            raise DataError("u has wrong dimension")
        if not np.all(np.isfinite(self.u[:n])):
            raise DataError("u contains non-finite values")
        for ell, f in enumerate(dataset.fields):
            col = self.pi[:n, ell]
            if np.any((col < 0) | (col >= f.n_levels)):
                raise DataError(f"field {f.name}: pi level out of range")
        for j, t in enumerate(dataset.profiles):
            if self.w[j].shape != t.values.shape:
                raise DataError("w shape does not match profiles")
            if np.any((self.w[j] != 0) & (self.w[j] != 1)):
                raise DataError("w must be 0/1")
            obs = t.values >= 0
            if np.any(self.w[j][~obs] != 0):
                raise DataError("w must be 0 at missing cells")
            truth = self.pi[self.linkage.labels[j]][:, :L] if L else self.pi[:0]
            if L and check_w:
                bad = obs & (self.w[j] == 0) & (t.values != truth)
                if np.any(bad):
                    raise DataError("w = 0 at a cell that mismatches its truth")
        self.params.validate(dataset.fields)


# ---------------------------------------------------------------------------
# likelihood pieces

def edge_probability(beta_j: float, u_a, u_b) -> float:
    """Bernoulli edge probability for two latent positions."""
    d = float(np.linalg.norm(np.asarray(u_a, float) - np.asarray(u_b, float)))
    return float(expit(beta_j - d))


def _pairwise_distances(pos: np.ndarray) -> np.ndarray:
    diff = pos[:, None, :] - pos[None, :, :]
    return np.sqrt((diff * diff).sum(axis=-1))


def network_loglik(dataset: Dataset, state: ModelState) -> float:
    """Log-likelihood of all within-file edges given positions."""
    if not dataset.has_networks:
        return 0.0
    total = 0.0
    for j, net in enumerate(dataset.networks):
        pos = state.u[state.linkage.labels[j]]
        x = state.params.beta[j] - _pairwise_distances(pos)
        iu = np.triu_indices(net.n_actors, k=1)
        y = net.matrix[iu]
        xx = x[iu]
        total += float(np.where(y, log_expit(xx), log_expit(-xx)).sum())
    return total


def profile_cell_loglik_marginal(p_code: int, truth_code: int, psi: float,
                                 zeta: np.ndarray) -> float:
    """Log of the cell likelihood with the distortion flag summed out:
    (1 - psi) [p == truth] + psi * zeta[p]."""
    if p_code < 0:
        return 0.0
    val = psi * float(zeta[p_code])
    if p_code == truth_code:
        val += 1.0 - psi
    return math.log(val) if val > 0 else LOG_ZERO


def _ln_beta_pdf(x, a, b):
    if not 0 < x < 1:
        return LOG_ZERO
    return ((a - 1) * math.log(x) + (b - 1) * math.log1p(-x)
            - (math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)))


def _ln_invgamma_pdf(x, a, b):
    if x <= 0:
        return LOG_ZERO
    return a * math.log(b) - math.lgamma(a) - (a + 1) * math.log(x) - b / x


def _ln_dirichlet_pdf(x, alpha):
    x = np.asarray(x, float)
    if np.any(x <= 0):
        return LOG_ZERO
    lnb = float(np.sum([math.lgamma(a) for a in alpha]) - math.lgamma(np.sum(alpha)))
    return float(np.sum((np.asarray(alpha) - 1) * np.log(x)) - lnb)


def log_joint(dataset: Dataset, state: ModelState, hyper: HyperParams,
              use_network: bool = True, use_profile: bool = True) -> float:
    """Log of the joint density of data, latents and parameters.

    States with probability zero (e.g. an undistorted cell that mismatches
    its latent truth) get the LOG_ZERO sentinel.
    """
    p = state.params
    n = state.n_latent
    K = hyper.dim
    lp = 0.0
    # parameter priors
    for j in range(dataset.n_files):
        om = hyper.omega[j]
        lp += -0.5 * math.log(2 * math.pi * om * om) \
              - 0.5 * (p.beta[j] / om) ** 2
    lp += _ln_invgamma_pdf(p.sigma2, hyper.a_sigma, hyper.b_sigma)
    for ell, f in enumerate(dataset.fields):
        lp += _ln_beta_pdf(p.psi[ell], hyper.a_psi[ell], hyper.b_psi[ell])
        if f.kind == "categorical":
            lp += _ln_dirichlet_pdf(p.theta[ell], hyper.alpha[ell])
    # latent priors
    uu = state.u[:n]
    lp += -0.5 * n * K * math.log(2 * math.pi * p.sigma2) \
          - 0.5 * float((uu * uu).sum()) / p.sigma2
    for ell, f in enumerate(dataset.fields):
        base = np.log(p.theta[ell]) if f.kind == "categorical" \
            else np.log(f.freq_array())
        lp += float(base[state.pi[:n, ell]].sum())
    # distortion flags and profile cells
    for j, t in enumerate(dataset.profiles):
        truth = state.pi[state.linkage.labels[j]] if dataset.n_fields else None
        for ell, f in enumerate(dataset.fields):
            obs = t.values[:, ell] >= 0
            wcol = state.w[j][:, ell][obs]
            psi = p.psi[ell]
            k1 = int(wcol.sum())
            k0 = int(len(wcol) - k1)
            lp += k1 * math.log(psi) + k0 * math.log1p(-psi)
            if not use_profile:
                continue
            pv = t.values[:, ell][obs]
            tv = truth[:, ell][obs]
            mism = (wcol == 0) & (pv != tv)
            if np.any(mism):
                return LOG_ZERO
            ones = wcol == 1
            if np.any(ones):
                if f.kind == "categorical":
                    lp += float(np.log(p.theta[ell])[pv[ones]].sum())
                else:
                    sd = get_string_distortion(f, hyper.lam)
                    lp += float((sd.log_gamma[pv[ones]]
                                 + sd.log_h[tv[ones]]
                                 - hyper.lam * sd.dist[pv[ones], tv[ones]]).sum())
    if use_network:
        lp += network_loglik(dataset, state)
    return max(float(lp), LOG_ZERO)
