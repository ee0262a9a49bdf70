"""Data containers and file formats.

Profiles are CSV files with a ``record_id`` column followed by one column
per field; empty cells are missing values.  Networks are whitespace edge
lists with 1-based node indices.  Ground-truth links and anchors share one
CSV format: ``file_a,index_a,file_b,index_b`` with 1-based indices.

Everything user-facing is 1-based; in-memory arrays are 0-based with -1 for
missing profile cells.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass

import numpy as np

FIELD_KINDS = ("categorical", "string")


class DataError(ValueError):
    """Raised for malformed inputs or inconsistent structures."""


@dataclass(frozen=True)
class FieldSpec:
    """A profile field: its name, kind, observed support and frequencies.

    ``levels`` is the sorted distinct observed values pooled across files;
    ``freqs`` are empirical frequencies over that support (they sum to one
    and are strictly positive because the support is observed).
    """

    name: str
    kind: str
    levels: tuple
    freqs: tuple

    def __post_init__(self):
        if self.kind not in FIELD_KINDS:
            raise DataError(f"unknown field kind {self.kind!r}")
        if len(self.levels) != len(set(self.levels)):
            raise DataError(f"field {self.name}: duplicate levels")
        if len(self.levels) != len(self.freqs):
            raise DataError(f"field {self.name}: levels/freqs length mismatch")
        f = np.asarray(self.freqs, dtype=float)
        if len(f) and (np.any(f <= 0) or not np.isclose(f.sum(), 1.0)):
            raise DataError(f"field {self.name}: freqs must be a positive pmf")

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    def index_of(self, value: str) -> int:
        try:
            return self.levels.index(value)
        except ValueError:
            raise DataError(f"field {self.name}: value {value!r} not in support")

    def freq_array(self) -> np.ndarray:
        return np.asarray(self.freqs, dtype=float)


@dataclass
class ProfileTable:
    """Profile rows of one file: integer level codes, -1 for missing."""

    file_id: int                 # 1-based
    values: np.ndarray           # (n_records, n_fields) int32
    record_ids: list

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.int32)
        if self.values.ndim != 2:
            raise DataError("profile values must be 2-d")
        if len(self.record_ids) != self.values.shape[0]:
            raise DataError("record_ids length does not match rows")

    @property
    def n_records(self) -> int:
        return self.values.shape[0]

    @property
    def n_fields(self) -> int:
        return self.values.shape[1]


@dataclass
class Adjacency:
    """Undirected simple network of one file as a dense boolean matrix."""

    file_id: int                 # 1-based
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=bool)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DataError("adjacency must be square")
        if m.shape[0] < 2:
            raise DataError("network needs at least two actors")
        if np.any(np.diag(m)):
            raise DataError("self-loops are not allowed")
        if not np.array_equal(m, m.T):
            raise DataError("adjacency must be symmetric")
        self.matrix = m

    @property
    def n_actors(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_edges(self) -> int:
        return int(self.matrix.sum()) // 2

    def degrees(self) -> np.ndarray:
        return self.matrix.sum(axis=0).astype(np.int64)

    def edges(self):
        """Sorted 0-based (i, i') edge tuples with i < i'."""
        ii, jj = np.nonzero(np.triu(self.matrix, k=1))
        return list(zip(ii.tolist(), jj.tolist()))


@dataclass(frozen=True, order=True)
class RecordRef:
    """1-based reference to a record: (file, index)."""

    file: int
    index: int

    def __post_init__(self):
        if self.file < 1 or self.index < 1:
            raise DataError("RecordRef is 1-based")


def _normalize_pair(a: RecordRef, b: RecordRef):
    if a.file == b.file:
        raise DataError(f"pair within one file: {a} / {b}")
    return (a, b) if a < b else (b, a)


class PairSet:
    """A set of cross-file record pairs with each record used at most once.

    Serves both as ground truth and as an anchor set.
    """

    def __init__(self, pairs=()):
        norm = sorted(_normalize_pair(a, b) for a, b in pairs)
        seen = set()
        for a, b in norm:
            for r in (a, b):
                if r in seen:
                    raise DataError(f"record {r} appears in more than one pair")
                seen.add(r)
        self.pairs = tuple(norm)

    def __len__(self):
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def __contains__(self, pair):
        return _normalize_pair(*pair) in set(self.pairs)

    def __eq__(self, other):
        return isinstance(other, PairSet) and self.pairs == other.pairs

    def __hash__(self):
        return hash(self.pairs)

    def __repr__(self):
        return f"PairSet({len(self.pairs)} pairs)"

    def records(self) -> set:
        out = set()
        for a, b in self.pairs:
            out.add(a)
            out.add(b)
        return out

    def as_set(self) -> set:
        return set(self.pairs)

    def validate_against(self, dataset: "Dataset"):
        sizes = dataset.sizes
        for r in self.records():
            if r.file > len(sizes) or r.index > sizes[r.file - 1]:
                raise DataError(f"{r} refers outside the dataset")


@dataclass
class Dataset:
    """Aligned profile tables and (optionally) one network per file."""

    fields: list
    profiles: list
    networks: list = None

    def __post_init__(self):
        if not self.profiles:
            raise DataError("dataset needs at least one file")
        L = len(self.fields)
        for t in self.profiles:
            if t.n_fields != L:
                raise DataError("profile table width does not match fields")
        for ell, f in enumerate(self.fields):
            for t in self.profiles:
                col = t.values[:, ell]
                ok = (col >= -1) & (col < f.n_levels)
                if not np.all(ok):
                    raise DataError(f"field {f.name}: level code out of range")
        if self.networks is not None:
            if len(self.networks) != len(self.profiles):
                raise DataError("need one network per file")
            for t, net in zip(self.profiles, self.networks):
                if net.n_actors != t.n_records:
                    raise DataError(
                        f"file {t.file_id}: {net.n_actors} actors vs "
                        f"{t.n_records} records")

    @property
    def n_files(self) -> int:
        return len(self.profiles)

    @property
    def sizes(self) -> list:
        return [t.n_records for t in self.profiles]

    @property
    def n_records(self) -> int:
        return sum(self.sizes)

    @property
    def n_fields(self) -> int:
        return len(self.fields)

    @property
    def has_networks(self) -> bool:
        return self.networks is not None

    def record_refs(self):
        for j, s in enumerate(self.sizes, start=1):
            for i in range(1, s + 1):
                yield RecordRef(j, i)

    def digest(self) -> str:
        """Stable content hash used by run manifests."""
        h = hashlib.sha256()
        h.update(json.dumps([(f.name, f.kind, list(f.levels)) for f in self.fields],
                            sort_keys=True).encode())
        for t in self.profiles:
            h.update(np.ascontiguousarray(t.values).tobytes())
        if self.networks is not None:
            for net in self.networks:
                h.update(np.packbits(net.matrix).tobytes())
        return h.hexdigest()


# ---------------------------------------------------------------------------
# readers / writers

def load_profiles(paths, field_kinds=None):
    """Read one profile CSV per file and pool the field supports.

    ``field_kinds`` maps field name -> kind; unnamed fields default to
    categorical.  All files must share the same header.  Returns
    ``(fields, tables)``.
    """
    field_kinds = dict(field_kinds or {})
    headers = None
    raw = []
    for path in paths:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            raise DataError(f"{path}: empty file")
        hdr = rows[0]
        if not hdr or hdr[0] != "record_id":
            raise DataError(f"{path}: first column must be record_id")
        if headers is None:
            headers = hdr
        elif hdr != headers:
            raise DataError(f"{path}: header differs from first file")
        body = rows[1:]
        if not body:
            raise DataError(f"{path}: no records")
        for r, row in enumerate(body, start=2):
            if len(row) != len(hdr):
                raise DataError(f"{path}: line {r} has {len(row)} cells, "
                                f"expected {len(hdr)}")
        raw.append(body)

    names = headers[1:]
    for n in field_kinds:
        if n not in names:
            raise DataError(f"unknown field name {n!r} in field kinds")
    kinds = [field_kinds.get(n, "categorical") for n in names]

    # pooled observed support per field
    fields = []
    for ell, (name, kind) in enumerate(zip(names, kinds)):
        values = [row[ell + 1] for body in raw for row in body if row[ell + 1] != ""]
        if not values:
            raise DataError(f"field {name}: no observed values")
        levels = sorted(set(values))
        idx = {v: k for k, v in enumerate(levels)}
        counts = np.zeros(len(levels))
        for v in values:
            counts[idx[v]] += 1
        fields.append(FieldSpec(name, kind, tuple(levels),
                                tuple(counts / counts.sum())))

    tables = []
    for file_id, body in enumerate(raw, start=1):
        vals = np.full((len(body), len(names)), -1, dtype=np.int32)
        ids = []
        for r, row in enumerate(body):
            ids.append(row[0])
            for ell in range(len(names)):
                cell = row[ell + 1]
                if cell != "":
                    vals[r, ell] = fields[ell].index_of(cell)
        tables.append(ProfileTable(file_id, vals, ids))
    return fields, tables


def write_profiles(dataset: Dataset, paths):
    if len(paths) != dataset.n_files:
        raise DataError("need one output path per file")
    for t, path in zip(dataset.profiles, paths):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["record_id"] + [f.name for f in dataset.fields])
            for r in range(t.n_records):
                row = [t.record_ids[r]]
                for ell, f in enumerate(dataset.fields):
                    code = t.values[r, ell]
                    row.append("" if code < 0 else f.levels[code])
                w.writerow(row)


def load_network(path, n_actors: int, file_id: int = 1) -> Adjacency:
    """Read a whitespace edge list with 1-based indices."""
    m = np.zeros((n_actors, n_actors), dtype=bool)
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise DataError(f"{path}: line {lineno}: expected two indices")
            try:
                a, b = int(parts[0]), int(parts[1])
            except ValueError:
                raise DataError(f"{path}: line {lineno}: non-integer index")
            if not (1 <= a <= n_actors and 1 <= b <= n_actors):
                raise DataError(f"{path}: line {lineno}: index out of range "
                                f"1..{n_actors}")
            if a == b:
                raise DataError(f"{path}: line {lineno}: self-loop")
            m[a - 1, b - 1] = True
            m[b - 1, a - 1] = True
    return Adjacency(file_id, m)


def write_network(adj: Adjacency, path):
    with open(path, "w", encoding="utf-8") as fh:
        for i, j in adj.edges():
            fh.write(f"{i + 1} {j + 1}\n")


def load_pairs(path) -> PairSet:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["file_a", "index_a", "file_b", "index_b"]:
        raise DataError(f"{path}: expected header file_a,index_a,file_b,index_b")
    pairs = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 4:
            raise DataError(f"{path}: line {lineno}: expected four cells")
        try:
            fa, ia, fb, ib = (int(c) for c in row)
        except ValueError:
            raise DataError(f"{path}: line {lineno}: non-integer cell")
        pairs.append((RecordRef(fa, ia), RecordRef(fb, ib)))
    return PairSet(pairs)


def write_pairs(pairs: PairSet, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["file_a", "index_a", "file_b", "index_b"])
        for a, b in pairs:
            w.writerow([a.file, a.index, b.file, b.index])


def load_dataset(profile_paths=None, network_paths=None, field_kinds=None,
                 sizes=None) -> Dataset:
    """Assemble a Dataset from profile CSVs and/or edge lists.

    Without profiles, ``sizes`` must give the actor count per file and the
    dataset has zero fields.
    """
    if profile_paths:
        fields, tables = load_profiles(profile_paths, field_kinds)
    else:
        if not network_paths:
            raise DataError("need profiles or networks")
        if sizes is None or len(sizes) != len(network_paths):
            raise DataError("network-only datasets need one size per file")
        fields = []
        tables = [ProfileTable(j + 1, np.zeros((s, 0), dtype=np.int32),
                               [str(i + 1) for i in range(s)])
                  for j, s in enumerate(sizes)]
    networks = None
    if network_paths:
        if len(network_paths) != len(tables):
            raise DataError("need one network per file")
        networks = [load_network(p, t.n_records, t.file_id)
                    for p, t in zip(network_paths, tables)]
    return Dataset(fields, tables, networks)


# ---------------------------------------------------------------------------
# network summaries

@dataclass
class NetworkSummary:
    density: float
    clustering: float
    assortativity: float  # None when degree variance is zero

    def as_dict(self):
        return {"density": self.density, "clustering": self.clustering,
                "assortativity": self.assortativity}


def summary_statistics(adj: Adjacency) -> NetworkSummary:
    """Density, global clustering coefficient and degree assortativity.

    Clustering is 3*triangles / connected triples (0.0 when there are no
    triples).  Assortativity is the Pearson correlation of endpoint degrees
    over directed edges; with zero degree variance it is undefined and
    reported as None.
    """
    m = adj.matrix.astype(np.float64)
    n = adj.n_actors
    e = adj.n_edges
    density = e / (n * (n - 1) / 2)
    deg = adj.degrees().astype(np.float64)
    triples = float((deg * (deg - 1) / 2).sum())
    if triples == 0:
        clustering = 0.0
    else:
        triangles = float(np.trace(m @ m @ m)) / 6.0
        clustering = 3.0 * triangles / triples
    assort = None
    if e > 0:
        ii, jj = np.nonzero(adj.matrix)
        x = deg[ii]
        y = deg[jj]
        vx = x.var()
        if vx > 0:
            assort = float(((x - x.mean()) * (y - y.mean())).mean() / vx)
    return NetworkSummary(float(density), float(clustering), assort)
