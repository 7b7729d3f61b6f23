"""Adversarial perturbations of dynamic graphs.

Non-targeted attacks remove one link type from the training/validation
snapshots or add Gaussian feature noise. The targeted attack is a greedy
edge-flip surrogate (not NETTACK): high-degree target nodes each receive up
to ``n`` single-edge flips, every flip chosen to maximize a surrogate
link-prediction loss on the target's incident test links.
"""
from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import asdict, dataclass, replace
from typing import Callable, Sequence

import numpy as np
import torch

from .dyngraph import UNTYPED, DynamicGraph, GraphSnapshot, aggregate_degree, strip_types

MODES = ("structure_linktype", "feature_noise", "targeted")
PHASES = ("evasion", "poisoning")
STANDARD_LAMBDAS = (0.5, 1.0, 1.5)
TARGET_RULE = "top-degree-decile sample (stand-in for NETTACK default target selection)"


@dataclass(frozen=True)
class AttackSpec:
    mode: str
    lam: float = 1.0
    n_perturbations: int = 2
    phase: str = "evasion"
    removed_type: int | None = None
    seed: int = 0
    n_targets: int = 10
    max_candidates: int = 32

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"attack mode must be one of {MODES}, got {self.mode!r}")
        if self.phase not in PHASES:
            raise ValueError(f"attack phase must be one of {PHASES}, got {self.phase!r}")
        if self.lam < 0 or not math.isfinite(self.lam):
            raise ValueError("lambda must be a finite non-negative real")
        if self.n_perturbations < 0:
            raise ValueError("n_perturbations must be >= 0")

    @property
    def standard_lambda(self) -> bool:
        return self.lam in STANDARD_LAMBDAS

    @property
    def label(self) -> str:
        if self.mode == "feature_noise":
            return f"feature_noise(lambda={self.lam:g})"
        if self.mode == "targeted":
            return f"targeted_{self.phase}(n={self.n_perturbations})"
        return "structure_linktype" + ("" if self.removed_type is None else f"(type={self.removed_type})")

    def to_dict(self) -> dict:
        return asdict(self)


# --- non-targeted ---------------------------------------------------------


def present_types(dg: DynamicGraph, times: Sequence[int] | None = None) -> list:
    times = range(1, dg.num_snapshots + 1) if times is None else times
    found = set()
    for t in times:
        ty = dg.snapshot(t).types
        found.update(ty[ty != UNTYPED].tolist())
    return sorted(found)


def choose_removed_type(dg: DynamicGraph, spec: AttackSpec, rng: np.random.Generator) -> int:
    types = present_types(dg)
    if len(types) < 2:
        raise ValueError("structure attack needs a dataset with at least two edge types")
    if spec.removed_type is not None:
        if spec.removed_type not in types:
            raise ValueError(f"edge type {spec.removed_type} not present (types: {types})")
        return int(spec.removed_type)
    return int(rng.choice(types))


def attack_structure(dg: DynamicGraph, spec: AttackSpec, rng: np.random.Generator) -> DynamicGraph:
    """Drop every edge of one type from train+val snapshots and strip the remaining types there."""
    if dg.split is None:
        raise ValueError("structure attack needs a chronological split")
    removed = choose_removed_type(dg, spec, rng)
    touched = set(dg.split.train) | set(dg.split.val)
    snaps = []
    for snap in dg.snapshots:
        if snap.t in touched:
            keep = snap.types != removed
            snap = strip_types(replace(snap, edges=snap.edges[keep], types=snap.types[keep]))
        snaps.append(snap)
    return dg.with_snapshots(snaps)


def reference_amplitude(dg: DynamicGraph) -> float:
    """Mean absolute value of every feature entry (snapshots and next step)."""
    mats = [s.features for s in dg.snapshots] + [dg.next_features]
    total = sum(float(np.abs(m).sum()) for m in mats)
    count = sum(m.size for m in mats)
    return total / count if count else 0.0


def attack_features(dg: DynamicGraph, lam: float, rng: np.random.Generator, reference: float | None = None) -> DynamicGraph:
    """X <- X + lam * r * eps for every node and feature the model reads."""
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    if lam == 0:
        return dg.with_snapshots(list(dg.snapshots))
    r = reference_amplitude(dg) if reference is None else reference
    scale = lam * r
    snaps = [replace(s, features=s.features + scale * rng.standard_normal(s.features.shape)) for s in dg.snapshots]
    nxt = dg.next_features + scale * rng.standard_normal(dg.next_features.shape)
    return dg.with_snapshots(snaps, nxt)


# --- targeted -------------------------------------------------------------


def select_targets(dg: DynamicGraph, n_targets: int, rng: np.random.Generator) -> np.ndarray:
    deg = aggregate_degree(dg)
    order = np.argsort(-deg, kind="stable")
    pool = order[: max(math.ceil(dg.num_nodes / 10), min(n_targets, dg.num_nodes))]
    k = min(n_targets, len(pool))
    return np.sort(rng.choice(pool, size=k, replace=False))


def flip_edge(snap: GraphSnapshot, u: int, v: int) -> GraphSnapshot:
    a, b = min(u, v), max(u, v)
    hit = (snap.edges[:, 0] == a) & (snap.edges[:, 1] == b)
    if hit.any():
        return replace(snap, edges=snap.edges[~hit], types=snap.types[~hit])
    ty = UNTYPED if not snap.is_typed else int(snap.types[0])
    return GraphSnapshot.build(snap.t, np.vstack([snap.edges, [[a, b]]]), snap.features, np.append(snap.types, ty))


def _apply_flip(dg: DynamicGraph, t: int, u: int, v: int) -> DynamicGraph:
    snaps = list(dg.snapshots)
    snaps[t - 1] = flip_edge(snaps[t - 1], u, v)
    return dg.with_snapshots(snaps)


def _candidates(dg, target, times, rng, max_candidates):
    n = dg.num_nodes
    cands = []
    for t in times:
        snap = dg.snapshot(t)
        e = snap.edges
        nbrs = np.concatenate([e[e[:, 0] == target, 1], e[e[:, 1] == target, 0]])
        others = np.setdiff1d(np.arange(n), np.append(nbrs, target))
        cands.extend((t, int(u)) for u in nbrs)
        cands.extend((t, int(u)) for u in others)
    if len(cands) > max_candidates:
        pick = rng.choice(len(cands), size=max_candidates, replace=False)
        cands = [cands[i] for i in sorted(pick)]
    return cands


def flip_times_for(dg: DynamicGraph, phase: str) -> list:
    T = dg.num_snapshots
    if phase == "poisoning":
        return list(range(1, T + 1))
    test = list(dg.split.test) if dg.split is not None else [T]
    # the last snapshot is never read as input; keep it only when it is all there is
    return [t for t in test if t < T] or test


def attack_targeted(
    dg: DynamicGraph,
    model_scores: Callable[[DynamicGraph, int], float],
    n: int,
    phase: str,
    rng: np.random.Generator,
    n_targets: int = 10,
    max_candidates: int = 32,
    log: list | None = None,
) -> DynamicGraph:
    """Greedy loss-ascent edge flips around high-degree targets.

    ``model_scores(graph, target)`` is the surrogate loss on the target's
    incident test links. A flip is applied only when it does not lower the
    loss, so each target gets at most ``n`` flips. Evasion flips touch test
    snapshots only; poisoning flips may touch any snapshot.
    """
    if n < 0:
        raise ValueError("number of perturbations must be >= 0")
    if phase not in PHASES:
        raise ValueError(f"unknown phase {phase!r}")
    if n == 0:
        return dg.with_snapshots(list(dg.snapshots))
    times = flip_times_for(dg, phase)
    current = dg
    for target in select_targets(dg, n_targets, rng).tolist():
        loss = model_scores(current, target)
        for step in range(n):
            best = None
            for t, u in _candidates(current, target, times, rng, max_candidates):
                cand = _apply_flip(current, t, target, u)
                val = model_scores(cand, target)
                if best is None or val > best[0]:
                    best = (val, t, u, cand)
            if best is None or best[0] < loss:
                break
            if log is not None:
                log.append({"target": target, "step": step, "t": best[1], "u": best[2],
                            "loss_before": loss, "loss_after": best[0]})
            loss, current = best[0], best[3]
    return current


def _target_links(dg_labels: DynamicGraph, target: int, times, rng):
    """Positive test links incident to target plus as many incident non-edges."""
    out = {}
    n = dg_labels.num_nodes
    for s in times:
        snap = dg_labels.snapshot(s)
        e = snap.edges
        pos = np.concatenate([e[e[:, 0] == target, 1], e[e[:, 1] == target, 0]])
        others = np.setdiff1d(np.arange(n), np.append(pos, target))
        k = min(max(len(pos), 1), len(others))
        neg = rng.choice(others, size=k, replace=False) if k else np.zeros(0, dtype=np.int64)
        partners = np.concatenate([pos, neg]).astype(np.int64)
        labels = np.concatenate([np.ones(len(pos)), np.zeros(len(neg))])
        out[s] = (np.stack([np.full(len(partners), target), partners], axis=1), labels)
    return out


def _bce(p, y):
    p = np.clip(p, 1e-7, 1 - 1e-7)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log1p(-p))) if len(y) else 0.0


class ModelSurrogate:
    """Evasion surrogate: the trained model's own predictor on clean test labels."""

    def __init__(self, model, dg_labels: DynamicGraph, seed: int = 0):
        self.model = model
        self.dg_labels = dg_labels
        self.times = list(dg_labels.split.test) if dg_labels.split is not None else [dg_labels.num_snapshots]
        self.seed = seed
        self._links: dict = {}
        self._z: OrderedDict = OrderedDict()

    def embedding(self, dg: DynamicGraph, s: int) -> torch.Tensor:
        # history(s) reads snapshots 1..s-1 and X^s; key on those objects
        nxt = dg.next_features if s > dg.num_snapshots else None
        key = tuple(dg.snapshots[: min(s, dg.num_snapshots)]) + (id(nxt),)
        hit = self._z.get(key)
        if hit is None:
            with torch.no_grad():
                z = self.model(dg.history(s), training=False).z_final
            hit = (nxt, z)  # holding nxt keeps its id unique while cached
            self._z[key] = hit
            if len(self._z) > 64:
                self._z.popitem(last=False)
        return hit[1]

    def links(self, target):
        if target not in self._links:
            rng = np.random.default_rng([self.seed, target])
            self._links[target] = _target_links(self.dg_labels, target, self.times, rng)
        return self._links[target]

    def __call__(self, dg: DynamicGraph, target: int) -> float:
        losses = []
        for s, (pairs, labels) in self.links(target).items():
            if not len(labels):
                continue
            z = self.embedding(dg, s)
            p = torch.sigmoid((z[pairs[:, 0]] * z[pairs[:, 1]]).sum(-1)).numpy()
            losses.append(_bce(p, labels))
        return float(np.mean(losses)) if losses else 0.0


def propagate(adj, x: np.ndarray, hops: int = 2) -> np.ndarray:
    """hops rounds of symmetric-normalized propagation with self-loops."""
    n = adj.shape[0]
    deg = np.asarray(adj.sum(axis=1)).ravel() + 1.0
    inv = 1.0 / np.sqrt(deg)
    out = x
    for _ in range(hops):
        out = inv[:, None] * (adj @ (inv[:, None] * out) + inv[:, None] * out)
    return out


class LinearProxySurrogate:
    """Poisoning surrogate: 2-hop linear aggregation averaged over the history."""

    def __init__(self, dg_labels: DynamicGraph, seed: int = 0, hops: int = 2):
        self.dg_labels = dg_labels
        self.times = list(dg_labels.split.test) if dg_labels.split is not None else [dg_labels.num_snapshots]
        self.seed = seed
        self.hops = hops
        self._links: dict = {}

    def embed(self, dg: DynamicGraph, s: int) -> np.ndarray:
        zs = [propagate(dg.snapshot(t).adjacency(), dg.snapshot(t).features, self.hops) for t in range(1, s)]
        return np.mean(zs, axis=0)

    def __call__(self, dg: DynamicGraph, target: int) -> float:
        if target not in self._links:
            rng = np.random.default_rng([self.seed, target])
            self._links[target] = _target_links(self.dg_labels, target, self.times, rng)
        losses = []
        for s, (pairs, labels) in self._links[target].items():
            if not len(labels):
                continue
            z = self.embed(dg, s)
            p = 1.0 / (1.0 + np.exp(-(z[pairs[:, 0]] * z[pairs[:, 1]]).sum(-1)))
            losses.append(_bce(p, labels))
        return float(np.mean(losses)) if losses else 0.0
