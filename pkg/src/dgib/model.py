"""Full DGIB model: layer recursion over t = 1..T+1, link predictor and loss."""
from __future__ import annotations

import json
import weakref
from collections import OrderedDict
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

from .bounds import (
    BoundConfig,
    GaussianParams,
    LossBreakdown,
    assemble_loss,
    ce_lower_bound,
    consensual_term,
    gaussian_log_ratio,
    kl_bernoulli_terms,
)
from .dyngraph import DynamicGraph, LinkSamples
from .layer import DGIBLayer, LayerOutput, normalized_phi, segment_sum
from .stneigh import NeighborIndex, neighbor_index, positional_encoding

# Bernoulli prior 1/|N| is 1 for single-member neighborhoods; keep it inside (0, 1).
PRIOR_CEIL = 1.0 - 1e-4
NEIGHBOR_CACHE_SIZE = 512


@dataclass(frozen=True)
class ModelConfig:
    dim: int = 16
    n_layers: int = 1
    k: int = 1
    prior_kind: str = "bernoulli"
    temperature: float = 0.5
    temperature_decay: float = 0.97
    temperature_min: float = 0.1
    init_seed: int = 0

    def __post_init__(self):
        if self.dim % 2:
            raise ValueError("representation dim must be even")
        if self.n_layers < 1 or self.k < 1:
            raise ValueError("n_layers and k must be >= 1")
        if self.prior_kind not in ("bernoulli", "categorical"):
            raise ValueError(f"unknown prior_kind {self.prior_kind!r}")

    def temperature_at(self, epoch: int) -> float:
        return max(self.temperature_min, self.temperature * self.temperature_decay**epoch)


@dataclass
class GraphContext:
    """Per-graph precomputation: neighbor indices and stacked features."""

    neighbors: list
    features: torch.Tensor
    pe: torch.Tensor

    @property
    def num_steps(self) -> int:
        return len(self.neighbors)


@dataclass
class ForwardTrace:
    z_final: torch.Tensor
    logits: dict = field(default_factory=dict)
    structures: dict = field(default_factory=dict)
    gauss: dict = field(default_factory=dict)
    z: dict = field(default_factory=dict)
    neighbor_sizes: dict = field(default_factory=dict)

    @property
    def final_time(self) -> int:
        return max(self.z)


class DGIBModel(nn.Module):
    def __init__(self, feature_dim: int, cfg: ModelConfig | None = None):
        super().__init__()
        self.cfg = cfg or ModelConfig()
        self.feature_dim = feature_dim
        gen = torch.Generator().manual_seed(self.cfg.init_seed)
        d = self.cfg.dim
        self.input_projection = nn.Parameter(
            torch.randn(feature_dim, d, dtype=torch.float64, generator=gen) * (1.0 / max(feature_dim, 1)) ** 0.5
        )
        self.layers = nn.ModuleList([DGIBLayer(d, gen) for _ in range(self.cfg.n_layers)])
        self._contexts: weakref.WeakKeyDictionary = weakref.WeakKeyDictionary()
        # neighbor indices keyed by the (t-1, t) snapshot objects; graphs that share
        # snapshots (histories, single-edge edits) reuse each other's BFS work
        self._neighbor_cache: OrderedDict = OrderedDict()

    def _neighbors(self, dg: DynamicGraph, t: int) -> NeighborIndex:
        T = dg.num_snapshots
        key = (
            dg.snapshots[t - 2] if t >= 2 else None,
            dg.snapshots[t - 1] if t <= T else None,
            t,
            dg.num_nodes,
        )
        hit = self._neighbor_cache.get(key)
        if hit is None:
            hit = neighbor_index(dg, self.cfg.k, t)
            self._neighbor_cache[key] = hit
            if len(self._neighbor_cache) > NEIGHBOR_CACHE_SIZE:
                self._neighbor_cache.popitem(last=False)
        else:
            self._neighbor_cache.move_to_end(key)
        return hit

    def prepare(self, dg: DynamicGraph) -> GraphContext:
        ctx = self._contexts.get(dg)
        if ctx is None:
            T = dg.num_snapshots
            neighbors = [self._neighbors(dg, t) for t in range(1, T + 2)]
            X = np.stack([dg.features_at(t) for t in range(1, T + 2)])
            pe = positional_encoding(np.arange(T, -1, -1), self.cfg.dim)
            ctx = GraphContext(neighbors, torch.from_numpy(X), torch.from_numpy(pe))
            self._contexts[dg] = ctx
        return ctx

    def encode_inputs(self, ctx: GraphContext) -> torch.Tensor:
        """Relative time encoding: X^t P + PE(T+1-t), shape (T+1, N, d')."""
        return ctx.features @ self.input_projection + ctx.pe[:, None, :]

    def forward(
        self,
        dg: DynamicGraph,
        generator: torch.Generator | None = None,
        training: bool = False,
        temperature: float | None = None,
        access_log: list | None = None,
    ) -> ForwardTrace:
        if dg.feature_dim != self.feature_dim:
            raise ValueError(f"graph has feature_dim {dg.feature_dim}, model expects {self.feature_dim}")
        ctx = self.prepare(dg)
        temp = self.cfg.temperature if temperature is None else temperature
        steps = list(self.encode_inputs(ctx).unbind(0))
        trace = ForwardTrace(z_final=None)
        n_layers = len(self.layers)
        for l, layer in enumerate(self.layers):
            last = l == n_layers - 1
            out_steps = []
            state = None
            for i, index in enumerate(ctx.neighbors):
                t = i + 1
                if access_log is not None:
                    access_log.append((l, t, (t,) if state is None else (t - 1, t)))
                res: LayerOutput = layer(
                    steps[i], state, index, self.cfg.prior_kind, temp, training,
                    stochastic=last, generator=generator,
                )
                out_steps.append(res.z)
                state = res.z
                if last:
                    trace.logits[t] = res.logits
                    trace.structures[t] = res.structure
                    trace.gauss[t] = res.gauss
                    trace.z[t] = res.z
                    trace.neighbor_sizes[t] = torch.from_numpy(index.sizes)
            steps = out_steps
        trace.z_final = steps[-1]
        return trace


def link_logits(z: torch.Tensor, pairs) -> torch.Tensor:
    """<z_u, z_v> for each pair."""
    pairs = torch.as_tensor(np.asarray(pairs, dtype=np.int64)).reshape(-1, 2)
    n = z.shape[0]
    if pairs.numel() and (int(pairs.min()) < 0 or int(pairs.max()) >= n):
        raise ValueError(f"node id outside [0, {n})")
    return (z[pairs[:, 0]] * z[pairs[:, 1]]).sum(-1)


def predict_links(z: torch.Tensor, pairs) -> torch.Tensor:
    """sigmoid(<z_u, z_v>) for each pair."""
    return torch.sigmoid(link_logits(z, pairs))


def structure_kl(trace: ForwardTrace, t: int, prior_kind: str) -> torch.Tensor:
    """Structure compression term at time t, averaged over the N nodes."""
    logits = trace.logits[t]
    n = logits.num_anchors
    if len(logits) == 0:
        return torch.zeros((), dtype=torch.float64)
    sizes = trace.neighbor_sizes[t].to(torch.float64)
    if prior_kind == "bernoulli":
        p0 = (1.0 / sizes[logits.anchor]).clamp(max=PRIOR_CEIL)
        per_edge = kl_bernoulli_terms(logits.phi, p0)
    else:
        pi = normalized_phi(logits)
        per_edge = torch.xlogy(pi, pi) + pi * torch.log(sizes[logits.anchor])
    return segment_sum(per_edge, logits.anchor, n).sum() / n


def _sample_nodes(n: int, m: int, generator) -> torch.Tensor:
    if m >= n:
        return torch.arange(n)
    return torch.randperm(n, generator=generator)[:m]


def feature_log_ratio(trace: ForwardTrace, t: int, nodes: torch.Tensor) -> torch.Tensor:
    g = trace.gauss[t]
    z = trace.z[t][nodes]
    p = GaussianParams(g.mu[nodes], g.log_sigma2[nodes])
    return gaussian_log_ratio(z, p, GaussianParams.standard(z.shape[1]))


def compute_loss(
    trace: ForwardTrace,
    samples: LinkSamples,
    cfg: BoundConfig,
    generator: torch.Generator | None = None,
) -> LossBreakdown:
    probs = predict_links(trace.z_final, samples.pairs)
    ce = ce_lower_bound(probs, torch.as_tensor(samples.labels, dtype=torch.float64))
    n = trace.z_final.shape[0]
    a_terms, z_terms = {}, {}
    for t in sorted(trace.z):
        if cfg.beta1 and cfg.alpha and cfg.uses_A(t):
            a_terms[t] = structure_kl(trace, t, cfg.prior_kind)
        if cfg.beta1 and cfg.alpha and cfg.uses_Z(t):
            z_terms[t] = feature_log_ratio(trace, t, _sample_nodes(n, cfg.mc_samples, generator))
    consensual = torch.zeros((), dtype=torch.float64)
    if cfg.beta2 and cfg.alpha < 1.0:
        T1 = trace.final_time
        nodes = _sample_nodes(n, cfg.mc_samples, generator)
        g = trace.gauss[T1]
        consensual = consensual_term(
            trace.z[T1][nodes],
            GaussianParams(g.mu[nodes], g.log_sigma2[nodes]),
            GaussianParams.standard(trace.z_final.shape[1]),
        )
    return assemble_loss(ce, a_terms, z_terms, consensual, cfg)


# --- checkpoints ----------------------------------------------------------

_CONFIG_KEY = "__config__"


def save_checkpoint(model: DGIBModel, path, extra: dict | None = None) -> Path:
    path = Path(path)
    arrays = {name: t.detach().cpu().numpy() for name, t in model.state_dict().items()}
    meta = {"model": asdict(model.cfg), "feature_dim": model.feature_dim, "extra": extra or {}}
    arrays[_CONFIG_KEY] = np.array(json.dumps(meta, sort_keys=True))
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_checkpoint(path) -> tuple[DGIBModel, dict]:
    with np.load(Path(path), allow_pickle=False) as data:
        meta = json.loads(str(data[_CONFIG_KEY]))
        model = DGIBModel(int(meta["feature_dim"]), ModelConfig(**meta["model"]))
        state = {k: torch.from_numpy(data[k].copy()) for k in data.files if k != _CONFIG_KEY}
    model.load_state_dict(state, strict=True)
    return model, meta.get("extra", {})

