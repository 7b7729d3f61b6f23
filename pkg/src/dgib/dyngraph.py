"""Discrete dynamic graphs: data model, dataset IO, synthetic generation and
link-label sampling.

Graphs are undirected. Each snapshot stores every undirected edge once, as a
canonical ``(u, v)`` pair with ``u < v``; adjacency helpers symmetrize.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
import scipy.sparse as sp

UNTYPED = -1

MANIFEST_NAME = "manifest.json"
EDGES_NAME = "edges.csv"
FEATURES_PATTERN = "features_t{t}.csv"
FEATURES_NEXT_NAME = "features_next.csv"


class DatasetValidationError(ValueError):
    """A dataset directory disagrees with its manifest."""

    def __init__(self, path, message):
        self.path = Path(path)
        super().__init__(f"{self.path.name}: {message}")


class EmptySnapshotError(ValueError):
    pass


def _canonical_edges(edges, types, num_nodes):
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if types is None:
        types = np.full(len(edges), UNTYPED, dtype=np.int64)
    types = np.asarray(types, dtype=np.int64).reshape(-1)
    if len(types) != len(edges):
        raise ValueError("edge type array length differs from edge count")
    if len(edges) and (edges.min() < 0 or edges.max() >= num_nodes):
        raise ValueError(f"edge endpoint outside [0, {num_nodes})")
    keep = edges[:, 0] != edges[:, 1]
    edges, types = edges[keep], types[keep]
    lo = edges.min(axis=1)
    hi = edges.max(axis=1)
    keys = lo * num_nodes + hi
    # first occurrence wins for duplicated pairs
    _, first = np.unique(keys, return_index=True)
    first.sort()
    lo, hi, types, keys = lo[first], hi[first], types[first], keys[first]
    order = np.argsort(keys, kind="stable")
    return np.stack([lo[order], hi[order]], axis=1), types[order]


@dataclass(eq=False)
class GraphSnapshot:
    t: int
    edges: np.ndarray
    types: np.ndarray
    features: np.ndarray

    @classmethod
    def build(cls, t, edges, features, types=None):
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2:
            raise ValueError("features must be an N x d matrix")
        edges, types = _canonical_edges(edges, types, features.shape[0])
        return cls(int(t), edges, types, features)

    @property
    def num_nodes(self) -> int:
        return self.features.shape[0]

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def is_typed(self) -> bool:
        return bool(len(self.types)) and bool(np.all(self.types != UNTYPED))

    def adjacency(self) -> sp.csr_matrix:
        n = self.num_nodes
        if not len(self.edges):
            return sp.csr_matrix((n, n), dtype=np.float64)
        rows = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
        cols = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
        data = np.ones(len(rows))
        return sp.csr_matrix((data, (rows, cols)), shape=(n, n))

    def edge_keys(self) -> np.ndarray:
        return self.edges[:, 0] * self.num_nodes + self.edges[:, 1]

    def has_edges(self, u, v) -> np.ndarray:
        u = np.asarray(u, dtype=np.int64)
        v = np.asarray(v, dtype=np.int64)
        keys = np.minimum(u, v) * self.num_nodes + np.maximum(u, v)
        return np.isin(keys, self.edge_keys())

    def same_as(self, other: "GraphSnapshot") -> bool:
        return (
            self.t == other.t
            and np.array_equal(self.edges, other.edges)
            and np.array_equal(self.types, other.types)
            and np.array_equal(self.features, other.features)
        )


@dataclass(frozen=True)
class SplitSpec:
    train_len: int
    val_len: int
    test_len: int

    def __post_init__(self):
        if self.train_len < 1:
            raise ValueError("train_len must be >= 1")
        if self.val_len < 0 or self.test_len < 0:
            raise ValueError("split lengths must be non-negative")

    @property
    def total(self) -> int:
        return self.train_len + self.val_len + self.test_len

    @property
    def train(self) -> range:
        return range(1, self.train_len + 1)

    @property
    def val(self) -> range:
        return range(self.train_len + 1, self.train_len + self.val_len + 1)

    @property
    def test(self) -> range:
        start = self.train_len + self.val_len + 1
        return range(start, start + self.test_len)

    def phase_of(self, t: int) -> str:
        if t in self.train:
            return "train"
        if t in self.val:
            return "val"
        if t in self.test:
            return "test"
        raise ValueError(f"time {t} outside split")

    @classmethod
    def default_for(cls, n_snapshots: int) -> "SplitSpec":
        test = max(1, round(0.3 * n_snapshots))
        val = 1 if n_snapshots >= 3 else 0
        train = n_snapshots - test - val
        if train < 1:
            return cls(n_snapshots, 0, 0)
        return cls(train, val, test)


@dataclass(eq=False)
class DynamicGraph:
    snapshots: list
    next_features: np.ndarray
    split: SplitSpec | None = None
    name: str = "dynamic-graph"

    def __post_init__(self):
        self.next_features = np.asarray(self.next_features, dtype=np.float64)
        self.validate()

    @property
    def num_snapshots(self) -> int:
        return len(self.snapshots)

    T = num_snapshots

    @property
    def num_nodes(self) -> int:
        return self.next_features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.next_features.shape[1]

    @property
    def link_types(self) -> int:
        typed = [s.types[s.types != UNTYPED] for s in self.snapshots]
        typed = [x for x in typed if len(x)]
        if not typed:
            return 0
        return int(np.concatenate(typed).max()) + 1

    @property
    def num_links(self) -> int:
        return sum(s.num_edges for s in self.snapshots)

    def validate(self):
        n, d = self.next_features.shape
        prev_t = 0
        for snap in self.snapshots:
            if snap.features.shape != (n, d):
                raise ValueError(f"snapshot t={snap.t} features {snap.features.shape} != {(n, d)}")
            if snap.t <= prev_t:
                raise ValueError("snapshot times must be strictly increasing")
            prev_t = snap.t
        if self.split is not None and self.split.total != len(self.snapshots):
            raise ValueError(f"split sums to {self.split.total}, graph has {len(self.snapshots)} snapshots")

    def snapshot(self, t: int) -> GraphSnapshot:
        if not 1 <= t <= len(self.snapshots):
            raise IndexError(f"no snapshot at t={t}")
        return self.snapshots[t - 1]

    def features_at(self, t: int) -> np.ndarray:
        """X^t for t = 1..T+1."""
        if t == len(self.snapshots) + 1:
            return self.next_features
        return self.snapshot(t).features

    def history(self, s: int) -> "DynamicGraph":
        """Input view for predicting snapshot ``s``: graphs 1..s-1 and X^s."""
        if not 2 <= s <= len(self.snapshots) + 1:
            raise ValueError(f"cannot build history for target t={s}")
        return DynamicGraph(self.snapshots[: s - 1], self.features_at(s), None, self.name)

    def with_snapshots(self, snapshots, next_features=None) -> "DynamicGraph":
        nf = self.next_features if next_features is None else next_features
        return DynamicGraph(list(snapshots), nf, self.split, self.name)

    def same_as(self, other: "DynamicGraph") -> bool:
        return (
            len(self.snapshots) == len(other.snapshots)
            and all(a.same_as(b) for a, b in zip(self.snapshots, other.snapshots))
            and np.array_equal(self.next_features, other.next_features)
            and self.split == other.split
        )


@dataclass(frozen=True)
class LinkSample:
    u: int
    v: int
    t: int
    label: int


@dataclass(eq=False)
class LinkSamples:
    """Column-oriented batch of :class:`LinkSample`."""

    pairs: np.ndarray
    labels: np.ndarray
    t: int

    def __len__(self):
        return len(self.labels)

    def __iter__(self) -> Iterator[LinkSample]:
        for (u, v), y in zip(self.pairs, self.labels):
            yield LinkSample(int(u), int(v), self.t, int(y))

    @property
    def positives(self) -> np.ndarray:
        return self.pairs[self.labels == 1]

    @property
    def negatives(self) -> np.ndarray:
        return self.pairs[self.labels == 0]


def _check_prob(name, value):
    if not 0.0 <= value <= 1.0 or not np.isfinite(value):
        raise ValueError(f"{name} must be a probability in [0, 1], got {value!r}")


def _sbm_pair_probs(comm, p_intra, p_inter):
    n = len(comm)
    iu, iv = np.triu_indices(n, k=1)
    probs = np.where(comm[iu] == comm[iv], p_intra, p_inter)
    return iu, iv, probs


def generate_synthetic(
    n_nodes: int,
    n_snapshots: int,
    n_communities: int,
    p_intra: float,
    p_inter: float,
    drift: float,
    link_types: int,
    seed: int,
    feature_noise: float = 0.1,
    split: SplitSpec | None = None,
) -> DynamicGraph:
    """Planted-partition dynamic graph.

    Snapshot 1 is a stochastic block model draw. Each later snapshot removes a
    ``drift`` fraction of the previous edges and adds as many new edges drawn
    from the same block probabilities, so the community pattern persists while
    individual links churn. Features are the community one-hot plus Gaussian
    jitter of scale ``feature_noise``, redrawn per snapshot.
    """
    for name, value in (("p_intra", p_intra), ("p_inter", p_inter), ("drift", drift)):
        _check_prob(name, value)
    if n_nodes < 1 or n_snapshots < 1:
        raise ValueError("n_nodes and n_snapshots must be positive")
    if not 1 <= n_communities <= n_nodes:
        raise ValueError("n_communities must be in [1, n_nodes]")
    if link_types < 0:
        raise ValueError("link_types must be non-negative")

    comm = (np.arange(n_nodes) * n_communities) // n_nodes
    iu, iv, probs = _sbm_pair_probs(comm, p_intra, p_inter)
    onehot = np.eye(n_communities)[comm]

    def draw_types(rng, k):
        if link_types == 0:
            return np.full(k, UNTYPED, dtype=np.int64)
        return rng.integers(0, link_types, size=k)

    def draw_features(rng):
        return onehot + feature_noise * rng.standard_normal(onehot.shape)

    snapshots = []
    rng = np.random.default_rng([seed, 1])
    hit = rng.random(len(probs)) < probs
    present = hit.copy()
    pair_types = np.full(len(probs), UNTYPED, dtype=np.int64)
    pair_types[present] = draw_types(rng, int(present.sum()))
    snapshots.append(_snapshot_from_mask(1, iu, iv, present, pair_types, draw_features(rng)))

    for t in range(2, n_snapshots + 1):
        rng = np.random.default_rng([seed, t])
        live = np.flatnonzero(present)
        n_rewire = int(round(drift * len(live)))
        if n_rewire:
            dropped = rng.choice(live, size=n_rewire, replace=False)
            absent = np.flatnonzero(~present & (probs > 0))
            weights = probs[absent]
            n_add = min(n_rewire, len(absent))
            added = rng.choice(absent, size=n_add, replace=False, p=weights / weights.sum())
            present[dropped] = False
            present[added] = True
            pair_types[dropped] = UNTYPED
            pair_types[added] = draw_types(rng, n_add)
        snapshots.append(_snapshot_from_mask(t, iu, iv, present, pair_types, draw_features(rng)))

    rng = np.random.default_rng([seed, n_snapshots + 1])
    split = split or SplitSpec.default_for(n_snapshots)
    return DynamicGraph(snapshots, draw_features(rng), split, name=f"sbm-n{n_nodes}-s{seed}")


def _snapshot_from_mask(t, iu, iv, present, pair_types, features):
    idx = np.flatnonzero(present)
    edges = np.stack([iu[idx], iv[idx]], axis=1)
    return GraphSnapshot.build(t, edges, features, pair_types[idx])


def sample_link_labels(dg: DynamicGraph, t: int, rng: np.random.Generator) -> LinkSamples:
    """All positive edges of snapshot ``t`` plus as many uniform non-edges."""
    snap = dg.snapshot(t)
    n_pos = snap.num_edges
    if n_pos == 0:
        raise EmptySnapshotError(f"snapshot t={t} has no edges to sample")
    n = dg.num_nodes
    n_pairs = n * (n - 1) // 2
    if n_pairs - n_pos < n_pos:
        raise EmptySnapshotError(f"snapshot t={t} has too few non-edges for balanced sampling")
    pos_keys = set(snap.edge_keys().tolist())
    chosen: dict[int, None] = {}
    while len(chosen) < n_pos:
        need = n_pos - len(chosen)
        u = rng.integers(0, n, size=2 * need + 8)
        v = rng.integers(0, n, size=2 * need + 8)
        for a, b in zip(u.tolist(), v.tolist()):
            if a == b:
                continue
            key = min(a, b) * n + max(a, b)
            if key in pos_keys or key in chosen:
                continue
            chosen[key] = None
            if len(chosen) == n_pos:
                break
    neg_keys = np.fromiter(chosen, dtype=np.int64, count=n_pos)
    negatives = np.stack([neg_keys // n, neg_keys % n], axis=1)
    pairs = np.concatenate([snap.edges, negatives])
    labels = np.concatenate([np.ones(n_pos, dtype=np.int64), np.zeros(n_pos, dtype=np.int64)])
    return LinkSamples(pairs, labels, t)


@dataclass
class NegativeCache:
    """Evaluation link samples shared by every model trained on one dataset.

    Entries are keyed by ``(seed, split, t)``; when ``directory`` is set they
    are persisted as CSV so separate processes see identical pairs.
    """

    directory: Path | None = None
    _mem: dict = field(default_factory=dict)

    def get(self, dg: DynamicGraph, t: int, seed: int, split: str) -> LinkSamples:
        key = (seed, split, t)
        if key in self._mem:
            return self._mem[key]
        path = None
        if self.directory is not None:
            path = Path(self.directory) / f"{split}_seed{seed}_t{t}.csv"
            if path.exists():
                arr = np.loadtxt(path, delimiter=",", skiprows=1, dtype=np.int64, ndmin=2)
                samples = LinkSamples(arr[:, :2].copy(), arr[:, 2].copy(), t)
                self._mem[key] = samples
                return samples
        samples = sample_link_labels(dg, t, np.random.default_rng([seed, t, _split_code(split)]))
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            rows = np.column_stack([samples.pairs, samples.labels])
            np.savetxt(path, rows, fmt="%d", delimiter=",", header="u,v,label", comments="")
        self._mem[key] = samples
        return samples


def _split_code(split: str) -> int:
    return {"train": 0, "val": 1, "test": 2}.get(split, 3)


# --- dataset directory IO -------------------------------------------------


def save_dataset(dg: DynamicGraph, dir_path) -> Path:
    out = Path(dir_path)
    out.mkdir(parents=True, exist_ok=True)
    split = dg.split or SplitSpec(dg.num_snapshots, 0, 0)
    manifest = {
        "name": dg.name,
        "num_nodes": dg.num_nodes,
        "feature_dim": dg.feature_dim,
        "num_snapshots": dg.num_snapshots,
        "num_links": dg.num_links,
        "link_types": dg.link_types,
        "split": {"train": split.train_len, "val": split.val_len, "test": split.test_len},
        "files": {
            "edges": EDGES_NAME,
            "features": FEATURES_PATTERN,
            "features_next": FEATURES_NEXT_NAME,
        },
    }
    with open(out / EDGES_NAME, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "src", "dst", "type"])
        for snap in dg.snapshots:
            for (u, v), ty in zip(snap.edges.tolist(), snap.types.tolist()):
                writer.writerow([snap.t, u, v, "" if ty == UNTYPED else ty])
    for snap in dg.snapshots:
        _write_features(out / FEATURES_PATTERN.format(t=snap.t), snap.features)
    _write_features(out / FEATURES_NEXT_NAME, dg.next_features)
    path = out / MANIFEST_NAME
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _write_features(path, x):
    with open(path, "w") as fh:
        if x.shape[1] == 0:
            fh.write("\n" * x.shape[0])
            return
        np.savetxt(fh, x, fmt="%.17g", delimiter=",")


def _read_features(path, n, d):
    if not path.exists():
        raise FileNotFoundError(f"missing feature file {path}")
    with open(path) as fh:
        lines = fh.read().splitlines()
    if len(lines) != n:
        raise DatasetValidationError(path, f"expected {n} rows (num_nodes), found {len(lines)}")
    if d == 0:
        return np.zeros((n, 0))
    try:
        x = np.array([[float(v) for v in ln.split(",")] for ln in lines], dtype=np.float64)
    except ValueError as exc:
        raise DatasetValidationError(path, f"{exc} (expected {d} columns)") from None
    if x.shape != (n, d):
        raise DatasetValidationError(path, f"expected {d} columns (feature_dim), found ragged or {x.shape[1]}")
    return x


def load_dataset(manifest_path) -> DynamicGraph:
    manifest_path = Path(manifest_path)
    if manifest_path.is_dir():
        manifest_path = manifest_path / MANIFEST_NAME
    if not manifest_path.exists():
        raise FileNotFoundError(f"manifest not found: {manifest_path}")
    root = manifest_path.parent
    try:
        m = json.loads(manifest_path.read_text())
        n = int(m["num_nodes"])
        d = int(m["feature_dim"])
        T = int(m["num_snapshots"])
        split = SplitSpec(int(m["split"]["train"]), int(m["split"]["val"]), int(m["split"]["test"]))
        files = m.get("files", {})
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetValidationError(manifest_path, f"invalid manifest: {exc}") from None
    if split.total != T:
        raise DatasetValidationError(manifest_path, f"split sums to {split.total}, num_snapshots is {T}")

    edges_path = root / files.get("edges", EDGES_NAME)
    if not edges_path.exists():
        raise FileNotFoundError(f"missing edge file {edges_path}")
    per_t: dict[int, list] = {t: [] for t in range(1, T + 1)}
    with open(edges_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["t", "src", "dst", "type"]:
            raise DatasetValidationError(edges_path, "header must be t,src,dst,type")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                t, u, v = int(row[0]), int(row[1]), int(row[2])
                ty = int(row[3]) if len(row) > 3 and row[3].strip() else UNTYPED
            except (ValueError, IndexError):
                raise DatasetValidationError(edges_path, f"malformed row at line {lineno}") from None
            if t not in per_t:
                raise DatasetValidationError(edges_path, f"line {lineno}: t={t} outside 1..{T} (num_snapshots)")
            if not (0 <= u < n and 0 <= v < n):
                raise DatasetValidationError(edges_path, f"line {lineno}: node id outside [0, {n}) (num_nodes)")
            per_t[t].append((u, v, ty))

    pattern = files.get("features", FEATURES_PATTERN)
    snapshots = []
    for t in range(1, T + 1):
        x = _read_features(root / pattern.format(t=t), n, d)
        rows = np.array(per_t[t], dtype=np.int64).reshape(-1, 3)
        snapshots.append(GraphSnapshot.build(t, rows[:, :2], x, rows[:, 2]))
    next_x = _read_features(root / files.get("features_next", FEATURES_NEXT_NAME), n, d)
    dg = DynamicGraph(snapshots, next_x, split, name=str(m.get("name", root.name)))

    if "num_links" in m and int(m["num_links"]) != dg.num_links:
        raise DatasetValidationError(edges_path, f"{dg.num_links} distinct links, manifest declares {m['num_links']}")
    if "link_types" in m and int(m["link_types"]) < dg.link_types:
        raise DatasetValidationError(edges_path, f"link type {dg.link_types - 1} exceeds declared link_types")
    return dg


def strip_types(snap: GraphSnapshot) -> GraphSnapshot:
    return replace(snap, types=np.full(snap.num_edges, UNTYPED, dtype=np.int64))


def aggregate_degree(dg: DynamicGraph, times: Sequence[int] | None = None) -> np.ndarray:
    times = range(1, dg.num_snapshots + 1) if times is None else times
    deg = np.zeros(dg.num_nodes, dtype=np.int64)
    for t in times:
        e = dg.snapshot(t).edges
        np.add.at(deg, e[:, 0], 1)
        np.add.at(deg, e[:, 1], 1)
    return deg
