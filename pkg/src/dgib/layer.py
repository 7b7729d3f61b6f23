"""The DGIB convolution layer.

One application at time ``t`` runs: rectified projection, pairwise attention
over spatio-temporal neighbors, stochastic structure sampling, weighted
aggregation and the Gaussian feature heads. Neighborhoods are flat edge lists
(see :class:`dgib.stneigh.NeighborIndex`) so a whole time step is processed
with a handful of gather/scatter ops.
"""
from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

from .bounds import GaussianParams
from .stneigh import NeighborIndex

LOGVAR_MIN, LOGVAR_MAX = -10.0, 10.0
_UNIFORM_EPS = 1e-10


@dataclass
class AttentionLogits:
    """Per-edge attention. ``score`` is pre-sigmoid, ``phi = sigmoid(score)``."""

    score: torch.Tensor
    anchor: torch.Tensor
    nbr: torch.Tensor
    prev: torch.Tensor
    num_anchors: int

    @property
    def phi(self) -> torch.Tensor:
        return torch.sigmoid(self.score)

    def __len__(self):
        return self.score.shape[0]


@dataclass
class SampledStructure:
    weights: torch.Tensor
    anchor: torch.Tensor
    nbr: torch.Tensor
    prev: torch.Tensor
    num_anchors: int
    mode: str
    training: bool


def _rows(x, n, dim):
    return torch.zeros(n, dim, dtype=x.dtype) if x is None else x


def project(z_prev: torch.Tensor, W: torch.Tensor) -> torch.Tensor:
    """relu(z) @ W."""
    if z_prev.ndim != 2 or z_prev.shape[1] != W.shape[0]:
        raise ValueError(f"cannot project {tuple(z_prev.shape)} with W {tuple(W.shape)}")
    return torch.relu(z_prev) @ W


def edge_scores(z_anchor: torch.Tensor, z_nbr: torch.Tensor, attn_w: torch.Tensor) -> torch.Tensor:
    """(z_v || z_u) . w for row-aligned anchor/neighbor matrices."""
    d = z_anchor.shape[-1]
    return z_anchor @ attn_w[:d] + z_nbr @ attn_w[d:]


def attention_logits(z_hat_anchor, z_hat_neighbors, attn_w) -> AttentionLogits:
    """Attention of a single anchor over its neighbor list."""
    attn_w = torch.as_tensor(attn_w, dtype=torch.float64)
    z_v = torch.as_tensor(z_hat_anchor, dtype=torch.float64).reshape(1, -1)
    m = len(z_hat_neighbors)
    if m == 0:
        empty = torch.zeros(0, dtype=torch.long)
        return AttentionLogits(torch.zeros(0, dtype=torch.float64), empty, empty, empty.bool(), 1)
    z_u = torch.stack([torch.as_tensor(z, dtype=torch.float64).reshape(-1) for z in z_hat_neighbors])
    score = edge_scores(z_v.expand(m, -1), z_u, attn_w)
    return AttentionLogits(score, torch.zeros(m, dtype=torch.long), torch.arange(m), torch.zeros(m, dtype=torch.bool), 1)


def graph_attention(z_hat_cur, z_hat_prev, index: NeighborIndex, attn_w) -> AttentionLogits:
    anchor = torch.from_numpy(index.anchor)
    nbr = torch.from_numpy(index.nbr)
    prev = torch.from_numpy(index.prev)
    src = _source_rows(z_hat_cur, z_hat_prev, nbr, prev)
    score = edge_scores(z_hat_cur[anchor], src, attn_w)
    return AttentionLogits(score, anchor, nbr, prev, z_hat_cur.shape[0])


def _source_rows(z_cur, z_prev, nbr, prev):
    if not bool(prev.any()):
        return z_cur[nbr]
    n = z_cur.shape[0]
    table = torch.cat([z_cur, _rows(z_prev, n, z_cur.shape[1])])
    return table[nbr + n * prev.long()]


def segment_sum(values: torch.Tensor, segment: torch.Tensor, n: int) -> torch.Tensor:
    out = torch.zeros((n,) + values.shape[1:], dtype=values.dtype)
    return out.index_add(0, segment, values)


def segment_softmax(logits: torch.Tensor, segment: torch.Tensor, n: int) -> torch.Tensor:
    if logits.numel() == 0:
        return logits
    seg_max = torch.full((n,), -torch.inf, dtype=logits.dtype)
    seg_max = seg_max.scatter_reduce(0, segment, logits.detach(), reduce="amax", include_self=True)
    ex = torch.exp(logits - seg_max[segment])
    return ex / segment_sum(ex, segment, n)[segment]


def normalized_phi(logits: AttentionLogits) -> torch.Tensor:
    """phi / sum(phi) within each anchor's neighborhood."""
    phi = logits.phi
    return phi / segment_sum(phi, logits.anchor, logits.num_anchors)[logits.anchor]


def draw_uniform(n: int, generator: torch.Generator | None) -> torch.Tensor:
    u = torch.rand(n, dtype=torch.float64, generator=generator)
    return u.clamp(_UNIFORM_EPS, 1.0 - _UNIFORM_EPS)


def sample_structure(
    logits: AttentionLogits,
    mode: str,
    temperature: float,
    training: bool,
    generator: torch.Generator | None = None,
    noise: torch.Tensor | None = None,
) -> SampledStructure:
    """Retention weights for every neighbor edge.

    Training draws concrete (Gumbel-type) relaxations: a relaxed Bernoulli
    gate per edge, or a relaxed one-hot over each neighborhood on the
    renormalized phi. Evaluation keeps edges with phi >= 0.5 (Bernoulli) or
    uses the normalized phi as weights (categorical). ``noise`` overrides the
    uniform draws, one per edge.
    """
    if not temperature > 0:
        raise ValueError("temperature must be positive")
    if mode not in ("bernoulli", "categorical"):
        raise ValueError(f"unknown sampling mode {mode!r}")
    m = len(logits)
    if training:
        u = draw_uniform(m, generator) if noise is None else noise
        if mode == "bernoulli":
            w = torch.sigmoid((logits.score + torch.log(u) - torch.log1p(-u)) / temperature)
        else:
            gumbel = -torch.log(-torch.log(u))
            log_pi = torch.log(normalized_phi(logits))
            w = segment_softmax((log_pi + gumbel) / temperature, logits.anchor, logits.num_anchors)
    elif mode == "bernoulli":
        w = (logits.score >= 0).to(logits.score.dtype)
    else:
        w = normalized_phi(logits)
    return SampledStructure(w, logits.anchor, logits.nbr, logits.prev, logits.num_anchors, mode, training)


def aggregate(structure: SampledStructure, z_hat_cur: torch.Tensor, z_hat_prev: torch.Tensor | None = None) -> torch.Tensor:
    """Z_v = sum over neighbors u of weight(u) * z_hat_u."""
    src = _source_rows(z_hat_cur, z_hat_prev, structure.nbr, structure.prev)
    return segment_sum(structure.weights[:, None] * src, structure.anchor, structure.num_anchors)


def gaussian_heads(
    aggregated: torch.Tensor,
    mu_head: torch.Tensor,
    logvar_head: torch.Tensor,
    training: bool,
    generator: torch.Generator | None = None,
    eps: torch.Tensor | None = None,
) -> tuple[torch.Tensor, GaussianParams]:
    mu = aggregated @ mu_head
    logvar = (aggregated @ logvar_head).clamp(LOGVAR_MIN, LOGVAR_MAX)
    if not training:
        return mu, GaussianParams(mu, logvar)
    if eps is None:
        eps = torch.randn(mu.shape, dtype=mu.dtype, generator=generator)
    return mu + torch.exp(0.5 * logvar) * eps, GaussianParams(mu, logvar)


@dataclass
class LayerOutput:
    z: torch.Tensor
    logits: AttentionLogits
    structure: SampledStructure
    gauss: GaussianParams


class DGIBLayer(nn.Module):
    """Layer parameters: projection W, attention vector w and the two Gaussian heads."""

    def __init__(self, dim: int, generator: torch.Generator | None = None):
        super().__init__()
        self.dim = dim

        def init(*shape, scale):
            return nn.Parameter(torch.randn(*shape, dtype=torch.float64, generator=generator) * scale)

        self.W = init(dim, dim, scale=(1.0 / dim) ** 0.5)
        # phi starts at exactly 0.5, so the eval threshold keeps every edge until
        # training moves the scores
        self.attn_w = nn.Parameter(torch.zeros(2 * dim, dtype=torch.float64))
        self.mu_head = init(dim, dim, scale=(1.0 / dim) ** 0.5)
        self.logvar_head = init(dim, dim, scale=0.1 * (1.0 / dim) ** 0.5)

    def forward(
        self,
        z_cur: torch.Tensor,
        z_prev: torch.Tensor | None,
        index: NeighborIndex,
        mode: str,
        temperature: float,
        training: bool,
        stochastic: bool = True,
        generator: torch.Generator | None = None,
    ) -> LayerOutput:
        zh_cur = project(z_cur, self.W)
        zh_prev = None if z_prev is None else project(z_prev, self.W)
        logits = graph_attention(zh_cur, zh_prev, index, self.attn_w)
        structure = sample_structure(logits, mode, temperature, training, generator)
        agg = aggregate(structure, zh_cur, zh_prev)
        z, gauss = gaussian_heads(agg, self.mu_head, self.logvar_head, training and stochastic, generator)
        return LayerOutput(z, logits, structure, gauss)
