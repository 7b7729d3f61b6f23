"""Spatio-temporal k-hop neighborhoods and relative time encoding."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .dyngraph import DynamicGraph


@dataclass(frozen=True)
class TimeExpandedGraph:
    """Vertices ``(v, t)`` for t = 1..T at flat index ``(t - 1) * N + v``."""

    adjacency: sp.csr_matrix
    num_nodes: int
    num_times: int

    def index(self, v: int, t: int) -> int:
        return (t - 1) * self.num_nodes + v

    def vertex(self, i: int) -> tuple[int, int]:
        return int(i % self.num_nodes), int(i // self.num_nodes) + 1

    @property
    def num_temporal_edges(self) -> int:
        return self.num_nodes * max(self.num_times - 1, 0)


def build_time_expanded_graph(dg: DynamicGraph) -> TimeExpandedGraph:
    n, T = dg.num_nodes, dg.num_snapshots
    blocks = sp.block_diag([s.adjacency() for s in dg.snapshots], format="csr") if T else sp.csr_matrix((0, 0))
    if T > 1:
        temporal = sp.eye(n * (T - 1), n * T, k=n, format="csr")
        temporal = sp.vstack([temporal, sp.csr_matrix((n, n * T))], format="csr")
        blocks = blocks + temporal + temporal.T
    return TimeExpandedGraph(sp.csr_matrix(blocks), n, T)


@dataclass(frozen=True)
class STNeighborhood:
    anchor: tuple[int, int]
    hop: int
    members: frozenset


@dataclass(frozen=True)
class NeighborIndex:
    """All ST neighborhoods at one time step as a flat edge list.

    ``anchor[i]`` receives from ``nbr[i]``; ``prev[i]`` is True when the
    neighbor lives at t-1 rather than t.
    """

    t: int
    anchor: np.ndarray
    nbr: np.ndarray
    prev: np.ndarray
    sizes: np.ndarray

    def __len__(self):
        return len(self.anchor)


def _two_slice_graph(dg: DynamicGraph, t: int) -> sp.csr_matrix:
    """Vertices [0, N) are (., t-1), [N, 2N) are (., t); snapshot T+1 is edgeless."""
    n, T = dg.num_nodes, dg.num_snapshots
    empty = sp.csr_matrix((n, n))
    cur = dg.snapshot(t).adjacency() if t <= T else empty
    if t == 1:
        return sp.bmat([[empty, None], [None, cur]], format="csr")
    prev = dg.snapshot(t - 1).adjacency()
    eye = sp.eye(n, format="csr")
    return sp.bmat([[prev, eye], [eye, cur]], format="csr")


def _check_args(dg, k, t):
    if k < 1:
        raise ValueError("hop count k must be >= 1")
    if not 1 <= t <= dg.num_snapshots + 1:
        raise ValueError(f"t={t} outside 1..T+1")


def neighbor_index(dg: DynamicGraph, k: int, t: int) -> NeighborIndex:
    """Vectorized ST neighborhoods of every node at time ``t``.

    Distances are measured inside the two-slice subgraph over {t-1, t}, with
    temporal self-links counted as unit hops.
    """
    _check_args(dg, k, t)
    n = dg.num_nodes
    g = _two_slice_graph(dg, t)
    g.data[:] = 1.0
    start = sp.hstack([sp.csr_matrix((n, n)), sp.eye(n, format="csr")], format="csr")
    reach = start.copy()
    frontier = start
    for _ in range(k):
        frontier = frontier @ g
        frontier.data[:] = 1.0
        frontier = frontier - frontier.multiply(reach)
        frontier.eliminate_zeros()
        if frontier.nnz == 0:
            break
        reach = reach + frontier
    reach = reach - start
    reach.eliminate_zeros()
    reach = sp.csr_matrix(reach)
    reach.sort_indices()
    anchor = np.repeat(np.arange(n), np.diff(reach.indptr))
    cols = reach.indices.astype(np.int64)
    prev = cols < n
    nbr = np.where(prev, cols, cols - n)
    sizes = np.diff(reach.indptr).astype(np.int64)
    return NeighborIndex(t, anchor.astype(np.int64), nbr, prev, sizes)


def st_neighbors(dg: DynamicGraph, v: int, k: int, t: int) -> STNeighborhood:
    _check_args(dg, k, t)
    if not 0 <= v < dg.num_nodes:
        raise ValueError(f"node {v} outside graph")
    idx = neighbor_index(dg, k, t)
    sel = idx.anchor == v
    members = frozenset(
        (int(u), t - 1 if p else t) for u, p in zip(idx.nbr[sel], idx.prev[sel])
    )
    return STNeighborhood((v, t), k, members)


# --- relative time encoding -----------------------------------------------


@dataclass(frozen=True)
class EncodedFeatures:
    z0: np.ndarray


def positional_encoding(delta_t, dim: int) -> np.ndarray:
    """Sinusoidal code of shape ``(*delta_t.shape, dim)``; even dims sin, odd cos."""
    if dim % 2:
        raise ValueError("encoding dimension must be even")
    delta_t = np.asarray(delta_t, dtype=np.float64)
    freqs = 1.0 / (10000.0 ** (np.arange(0, dim, 2, dtype=np.float64) / dim))
    angles = delta_t[..., None] * freqs
    out = np.empty(delta_t.shape + (dim,))
    out[..., 0::2] = np.sin(angles)
    out[..., 1::2] = np.cos(angles)
    return out


def default_projection(d: int, d_out: int) -> np.ndarray:
    """Zero-padded identity: copies the first min(d, d_out) feature columns."""
    return np.eye(d, d_out)


def relative_time_encode(dg: DynamicGraph, d_out: int, projection: np.ndarray | None = None) -> EncodedFeatures:
    """z0[t] = X^t P + PE((T+1) - t) for t = 1..T+1 (array index t-1)."""
    if d_out % 2:
        raise ValueError("output dimension d' must be even")
    T = dg.num_snapshots
    P = default_projection(dg.feature_dim, d_out) if projection is None else np.asarray(projection)
    if P.shape != (dg.feature_dim, d_out):
        raise ValueError(f"projection shape {P.shape} != {(dg.feature_dim, d_out)}")
    X = np.stack([dg.features_at(t) for t in range(1, T + 2)])
    pe = positional_encoding(np.arange(T, -1, -1), d_out)
    return EncodedFeatures(X @ P + pe[:, None, :])
