"""AUC and the binned information-plane estimator."""
from __future__ import annotations

import hashlib
import warnings

import numpy as np
import torch
from scipy.stats import rankdata

from .bounds import mi_exact_discrete
from .dyngraph import DynamicGraph, LinkSamples


def auc(scores, labels) -> float:
    """Mann-Whitney AUC: P(positive outranks negative), ties count 1/2."""
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel().astype(bool)
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both positive and negative labels")
    ranks = rankdata(s)
    return float((ranks[y].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def plugin_mi(a, b) -> float:
    """Plug-in MI between two discrete label arrays."""
    _, ai = np.unique(np.asarray(a), return_inverse=True)
    _, bi = np.unique(np.asarray(b), return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1))
    np.add.at(table, (ai, bi), 1.0)
    table /= table.sum()
    # exact on the empirical joint; clip float dust below zero
    return max(0.0, mi_exact_discrete(table))


def equal_width_bins(x, bins: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    lo, hi = x.min(), x.max()
    if hi <= lo:
        return np.zeros(len(x), dtype=np.int64)
    edges = np.linspace(lo, hi, bins + 1)
    return np.clip(np.digitize(x, edges[1:-1]), 0, bins - 1)


def projected_mi(labels, z, bins: int = 16, n_projections: int = 8, seed: int = 0) -> float:
    """Mean plug-in MI between ``labels`` and binned random 1-D projections of ``z``."""
    z = np.asarray(z, dtype=np.float64).reshape(len(labels), -1)
    rng = np.random.default_rng(seed)
    vals = []
    for _ in range(n_projections):
        r = rng.standard_normal(z.shape[1])
        binned = equal_width_bins(z @ r, bins)
        if len(np.unique(binned)) < 2:
            warnings.warn("projection collapsed to a single bin; MI estimate set to 0", RuntimeWarning, stacklevel=2)
            vals.append(0.0)
            continue
        vals.append(plugin_mi(labels, binned))
    return float(np.mean(vals))


def input_digest(dg: DynamicGraph, nodes) -> np.ndarray:
    """Per-node hash of the node's input: next-step features and every neighbor list."""
    adjs = [s.adjacency().tocsr() for s in dg.snapshots]
    out = []
    for v in np.asarray(nodes).tolist():
        h = hashlib.blake2b(digest_size=8)
        h.update(np.ascontiguousarray(dg.next_features[v]).tobytes())
        for a in adjs:
            h.update(a.indices[a.indptr[v]:a.indptr[v + 1]].astype(np.int64).tobytes())
            h.update(b"|")
        out.append(int.from_bytes(h.digest(), "little"))
    return np.array(out, dtype=np.uint64)


def info_plane_track(trace, dg: DynamicGraph, samples: LinkSamples, estimator_bins: int = 16,
                     n_projections: int = 8, seed: int = 0) -> tuple[float, float]:
    """(I(D;Z), I(Y;Z)) coordinate of the final representation.

    I(D;Z) pairs each sampled node's input digest with its binned projected
    embedding; I(Y;Z) pairs each link label with the binned projection of the
    Hadamard product z_u * z_v.
    """
    z = trace.z_final.detach().numpy() if isinstance(trace.z_final, torch.Tensor) else np.asarray(trace.z_final)
    nodes = np.unique(samples.pairs)
    i_dz = projected_mi(input_digest(dg, nodes), z[nodes], estimator_bins, n_projections, seed)
    pair_z = z[samples.pairs[:, 0]] * z[samples.pairs[:, 1]]
    i_yz = projected_mi(samples.labels, pair_z, estimator_bins, n_projections, seed + 1)
    return i_dz, i_yz
