"""Flat text run configuration.

A run file is a sequence of ``key = value`` lines; ``#`` starts a comment
and blank lines are ignored.  List values are comma separated.  The
recognised keys are documented in docs/config.md and mirrored by the
:class:`RunConfig` fields below.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field, fields

from .data import DataError


def parse_flat_text(text: str) -> dict:
    """Parse ``key = value`` lines into a string-to-string mapping."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError("line %d: expected key = value" % lineno)
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise DataError("line %d: empty key" % lineno)
        if key in out:
            raise DataError("line %d: duplicate key %r" % (lineno, key))
        out[key] = value.strip()
    return out


def _split_list(value: str) -> list:
    return [part.strip() for part in value.split(",") if part.strip()]


_BOOL = {"true": True, "false": False, "1": True, "0": False,
         "yes": True, "no": False}

# key -> (attribute, parser); "lambda" is a python keyword so the
# attribute is lam
_KEYS = {
    "profiles": ("profiles", _split_list),
    "networks": ("networks", _split_list),
    "sizes": ("sizes", lambda v: [int(x) for x in _split_list(v)]),
    "fields": ("fields", None),
    "truth": ("truth", str),
    "anchors": ("anchors", str),
    "anchor_fractions": ("anchor_fractions",
                         lambda v: [float(x) for x in _split_list(v)]),
    "anchor_seed": ("anchor_seed", int),
    "modes": ("modes", _split_list),
    "dims": ("dims", lambda v: [int(x) for x in _split_list(v)]),
    "iterations": ("iterations", int),
    "burn_in": ("burn_in", int),
    "thin": ("thin", int),
    "linkage_repeats": ("linkage_repeats", int),
    "step_u": ("step_u", float),
    "step_beta": ("step_beta", float),
    "adapt": ("adapt", None),
    "adapt_window": ("adapt_window", int),
    "exact_linkage_ratio": ("exact_linkage_ratio", None),
    "estimator": ("estimator", str),
    "loss_ratio": ("loss_ratio", float),
    "store_pointwise": ("store_pointwise", None),
    "workers": ("workers", int),
    "seed": ("seed", int),
    "output": ("output", str),
    "omega": ("omega", float),
    "a_psi": ("a_psi", float),
    "b_psi": ("b_psi", float),
    "lambda": ("lam", float),
    "cv_sigma": ("cv_sigma", float),
    "a_sigma": ("a_sigma", float),
    "b_sigma": ("b_sigma", float),
    "alpha_mode": ("alpha_mode", str),
}


@dataclass
class RunConfig:
    """Resolved batch-run settings."""

    profiles: list = field(default_factory=list)
    networks: list = field(default_factory=list)
    sizes: list = None
    fields: dict = field(default_factory=dict)
    truth: str = None
    anchors: str = None
    anchor_fractions: list = field(default_factory=lambda: [0.0])
    anchor_seed: int = 1
    modes: list = field(default_factory=lambda: ["pnm"])
    dims: list = field(default_factory=lambda: [2])
    iterations: int = 2000
    burn_in: int = 500
    thin: int = 1
    linkage_repeats: int = 1
    step_u: float = 0.5
    step_beta: float = 0.5
    adapt: bool = True
    adapt_window: int = 50
    exact_linkage_ratio: bool = True
    estimator: str = "binder"
    loss_ratio: float = 1.0
    store_pointwise: bool = False
    workers: int = 1
    seed: int = 1
    output: str = "runs/out"
    omega: float = 100.0
    a_psi: float = 1.0
    b_psi: float = 99.0
    lam: float = 1.0
    cv_sigma: float = 0.5
    a_sigma: float = None
    b_sigma: float = None
    alpha_mode: str = None
    base_dir: str = "."

    @classmethod
    def from_mapping(cls, mapping: dict, base_dir: str = ".") -> "RunConfig":
        cfg = cls(base_dir=base_dir)
        for key, value in mapping.items():
            if key not in _KEYS:
                raise DataError("unknown config key %r" % key)
            attr, parser = _KEYS[key]
            if key == "fields":
                spec = {}
                for part in _split_list(value):
                    if ":" not in part:
                        raise DataError(
                            "fields entries must look like name:kind")
                    name, kind = part.split(":", 1)
                    spec[name.strip()] = kind.strip()
                setattr(cfg, attr, spec)
            elif parser is None:
                low = value.lower()
                if low not in _BOOL:
                    raise DataError("key %r expects a boolean" % key)
                setattr(cfg, attr, _BOOL[low])
            else:
                try:
                    setattr(cfg, attr, parser(value))
                except ValueError as exc:
                    raise DataError("key %r: %s" % (key, exc)) from exc
        return cfg

    @classmethod
    def from_file(cls, path: str) -> "RunConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                mapping = parse_flat_text(fh.read())
        except OSError as exc:
            raise DataError("cannot read config %s: %s" % (path, exc)) from exc
        return cls.from_mapping(mapping, base_dir=os.path.dirname(
            os.path.abspath(path)))

    def resolve(self, path: str) -> str:
        if os.path.isabs(path):
            return path
        return os.path.normpath(os.path.join(self.base_dir, path))

    def hyper_mapping(self, dim: int) -> dict:
        out = {"K": dim, "omega": self.omega, "a_psi": self.a_psi,
               "b_psi": self.b_psi, "lambda": self.lam,
               "cv_sigma": self.cv_sigma}
        if self.alpha_mode is not None:
            out["alpha_mode"] = self.alpha_mode
        if self.a_sigma is not None:
            out["a_sigma"] = self.a_sigma
        if self.b_sigma is not None:
            out["b_sigma"] = self.b_sigma
        return out

    def to_text(self) -> str:
        """Serialise back to the flat format, fully resolved."""
        lines = []
        for f in fields(self):
            if f.name == "base_dir":
                continue
            key = "lambda" if f.name == "lam" else f.name
            value = getattr(self, f.name)
            if value is None:
                continue
            if f.name == "fields":
                if not value:
                    continue
                value = ",".join("%s:%s" % kv for kv in value.items())
            elif f.name in ("profiles", "networks", "truth", "anchors"):
                if not value:
                    continue
                if isinstance(value, list):
                    value = ",".join(self.resolve(p) for p in value)
                else:
                    value = self.resolve(value)
            elif isinstance(value, bool):
                value = "true" if value else "false"
            elif isinstance(value, list):
                value = ",".join(str(x) for x in value)
            lines.append("%s = %s" % (key, value))
        return "\n".join(lines) + "\n"

    def validate(self) -> dict:
        """Static checks; returns issues, file digests and a size estimate."""
        issues = []
        digests = {}
        if not self.profiles and not self.networks:
            issues.append("no input files: set profiles and/or networks")
        if self.profiles and not self.fields:
            issues.append("profiles given but no fields declared")
        for name, kind in self.fields.items():
            if kind not in ("categorical", "string"):
                issues.append("field %r has unknown kind %r" % (name, kind))
        if self.networks and not self.profiles and self.sizes is None:
            issues.append("network-only runs need sizes")
        for group in (self.profiles, self.networks):
            for rel in group:
                path = self.resolve(rel)
                if os.path.isfile(path):
                    digests[rel] = _sha256(path)
                else:
                    issues.append("missing file %s" % path)
        for rel in (self.truth, self.anchors):
            if rel is None:
                continue
            path = self.resolve(rel)
            if os.path.isfile(path):
                digests[rel] = _sha256(path)
            else:
                issues.append("missing file %s" % path)
        for mode in self.modes:
            if mode not in ("pnm", "pm", "network", "prior"):
                issues.append("unknown mode %r" % mode)
            if mode in ("pnm", "network") and not self.networks:
                issues.append("mode %r needs networks" % mode)
            if mode in ("pnm", "pm") and not self.profiles:
                issues.append("mode %r needs profiles" % mode)
        if any(k < 1 for k in self.dims):
            issues.append("dims must be positive")
        if self.estimator not in ("binder", "mpmms"):
            issues.append("estimator must be binder or mpmms")
        for frac in self.anchor_fractions:
            if not 0.0 <= frac <= 1.0:
                issues.append("anchor fractions must lie in [0, 1]")
        if any(f > 0 for f in self.anchor_fractions) and \
                self.truth is None and self.anchors is None:
            issues.append("anchor fractions need truth or anchors")
        if self.anchors is not None and \
                any(0 < f < 1 for f in self.anchor_fractions):
            issues.append("an anchors file fixes the anchor set; "
                          "fractions other than 0 or 1 have no effect")
        if self.iterations <= self.burn_in:
            issues.append("iterations must exceed burn_in")
        if self.thin < 1 or (self.iterations - self.burn_in) // self.thin < 1:
            issues.append("no retained samples: check burn_in and thin")
        if self.workers < 1:
            issues.append("workers must be at least 1")
        estimate = self._memory_estimate()
        return {"issues": issues, "files": digests,
                "estimated_bytes_per_cell": estimate}

    def _counted_sizes(self):
        if self.sizes:
            return self.sizes
        counts = []
        for rel in self.profiles:
            path = self.resolve(rel)
            if not os.path.isfile(path):
                return None
            with open(path, "r", encoding="utf-8") as fh:
                counts.append(max(sum(1 for _ in fh) - 1, 0))
        return counts or None

    def _memory_estimate(self) -> int:
        sizes = self._counted_sizes()
        total_records = sum(sizes) if sizes else 0
        n_dyads = sum(s * (s - 1) // 2 for s in sizes or [])
        n_cells = total_records * len(self.fields)
        units = (n_dyads if self.networks else 0) + n_cells
        retained = max((self.iterations - self.burn_in) // max(self.thin, 1), 1)
        held = retained * total_records * 4 + units * 4 * 8
        if self.store_pointwise:
            held += retained * units * 8
        return held


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()
