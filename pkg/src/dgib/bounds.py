"""Variational bound estimators for the DGIB objective.

Every quantity is in nats. Estimators accept numpy arrays or torch tensors;
with tensor inputs they return a differentiable 0-d tensor, otherwise a
float.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
import torch

CE_EPS = 1e-7
CRITIC_CLAMP = 30.0
LOG_2PI = math.log(2.0 * math.pi)


def _tensor(x) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x
    return torch.as_tensor(np.asarray(x, dtype=np.float64))


def _result(value: torch.Tensor, *inputs):
    if any(isinstance(x, torch.Tensor) for x in inputs):
        return value
    return float(value)


@dataclass(frozen=True)
class BoundConfig:
    """Loss weights and term selection.

    ``time_indices_A`` / ``time_indices_Z`` select which time steps feed the
    structure and feature compression sums; ``None`` means every step 1..T+1
    and an empty set drops the term (ablations).
    """

    prior_kind: str = "bernoulli"
    beta1: float = 0.01
    beta2: float = 0.01
    alpha: float = 0.5
    mc_samples: int = 64
    time_indices_A: frozenset | None = None
    time_indices_Z: frozenset | None = None

    def __post_init__(self):
        if self.prior_kind not in ("bernoulli", "categorical"):
            raise ValueError(f"prior_kind must be bernoulli or categorical, got {self.prior_kind!r}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.beta1 < 0 or self.beta2 < 0:
            raise ValueError("beta1 and beta2 must be non-negative")
        if self.mc_samples < 1:
            raise ValueError("mc_samples must be >= 1")
        for name in ("time_indices_A", "time_indices_Z"):
            val = getattr(self, name)
            if val is not None and not isinstance(val, frozenset):
                object.__setattr__(self, name, frozenset(int(t) for t in val))

    def uses_A(self, t: int) -> bool:
        return self.time_indices_A is None or t in self.time_indices_A

    def uses_Z(self, t: int) -> bool:
        return self.time_indices_Z is None or t in self.time_indices_Z


@dataclass(frozen=True)
class GaussianParams:
    mu: torch.Tensor
    log_sigma2: torch.Tensor

    def __post_init__(self):
        object.__setattr__(self, "mu", _tensor(self.mu))
        object.__setattr__(self, "log_sigma2", _tensor(self.log_sigma2))

    @classmethod
    def standard(cls, dim: int) -> "GaussianParams":
        z = torch.zeros(dim, dtype=torch.float64)
        return cls(z, z.clone())

    def log_density(self, z: torch.Tensor) -> torch.Tensor:
        """Diagonal-Gaussian log-density summed over the last axis."""
        lv = self.log_sigma2
        if not torch.all(torch.isfinite(lv)) or torch.any(torch.exp(lv) <= 0):
            raise ValueError("Gaussian variance must be positive and finite")
        sq = (z - self.mu) ** 2 * torch.exp(-lv)
        return -0.5 * (LOG_2PI + lv + sq).sum(dim=-1)


@dataclass
class LossBreakdown:
    ce: object
    a_terms: Mapping[int, object] = field(default_factory=dict)
    z_terms: Mapping[int, object] = field(default_factory=dict)
    consensual: object = 0.0
    total: object = 0.0
    alpha: float = 1.0
    beta1: float = 0.0
    beta2: float = 0.0

    @property
    def sum_A(self):
        return sum(self.a_terms.values(), 0.0)

    @property
    def sum_Z(self):
        return sum(self.z_terms.values(), 0.0)

    @property
    def dgib_ms(self):
        return self.ce + self.beta1 * (self.sum_A + self.sum_Z)

    @property
    def dgib_c(self):
        return self.ce + self.beta2 * self.consensual

    def recompose(self) -> float:
        d = self.detached()
        return d.alpha * d.dgib_ms + (1.0 - d.alpha) * d.dgib_c

    def detached(self) -> "LossBreakdown":
        f = lambda x: float(x.detach()) if isinstance(x, torch.Tensor) else float(x)  # noqa: E731
        return LossBreakdown(
            f(self.ce),
            {t: f(v) for t, v in self.a_terms.items()},
            {t: f(v) for t, v in self.z_terms.items()},
            f(self.consensual),
            f(self.total),
            self.alpha,
            self.beta1,
            self.beta2,
        )

    def first_nonfinite(self) -> str | None:
        d = self.detached()
        for name, val in (("ce", d.ce), ("sum_A", d.sum_A), ("sum_Z", d.sum_Z),
                          ("consensual", d.consensual), ("total", d.total)):
            if not math.isfinite(val):
                return name
        return None


def ce_lower_bound(predicted_probs, labels):
    """Mean binary cross-entropy; the negated sufficiency lower bound."""
    p = _tensor(predicted_probs)
    y = _tensor(labels).to(p.dtype)
    if p.numel() == 0:
        raise ValueError("cross-entropy needs at least one prediction")
    if p.shape != y.shape:
        raise ValueError(f"shape mismatch: {tuple(p.shape)} vs {tuple(y.shape)}")
    p = p.clamp(CE_EPS, 1.0 - CE_EPS)
    loss = -(y * torch.log(p) + (1.0 - y) * torch.log1p(-p)).mean()
    return _result(loss, predicted_probs, labels)


def kl_bernoulli_terms(p: torch.Tensor, p0) -> torch.Tensor:
    """Elementwise KL[Bern(p) || Bern(p0)] with 0 log 0 = 0.

    Ratio form so that p == p0 gives exactly zero; rounding can still leave a
    term a few ulps below zero, which is clamped.
    """
    p0 = _tensor(p0).to(p.dtype)
    q = 1.0 - p
    return (torch.xlogy(p, p / p0) + torch.xlogy(q, q / (1.0 - p0))).clamp_min(0.0)


def kl_bernoulli(p, p0):
    """Sum of KL[Bern(p_i) || Bern(p0)] over the entries of ``p``."""
    pt = _tensor(p)
    p0t = _tensor(p0)
    if torch.any((p0t <= 0) | (p0t >= 1)):
        raise ValueError("prior probability p0 must lie strictly inside (0, 1)")
    if torch.any((pt < 0) | (pt > 1)):
        raise ValueError("Bernoulli parameters must lie in [0, 1]")
    return _result(kl_bernoulli_terms(pt, p0t).sum(), p, p0)


def kl_categorical(phi, m: int):
    """KL[Cat(phi) || Uniform(m)] = sum_i phi_i ln(phi_i m)."""
    ph = _tensor(phi)
    if ph.ndim != 1 or ph.numel() != m:
        raise ValueError(f"phi must be a vector of length m={m}")
    if abs(float(ph.sum()) - 1.0) > 1e-8 or torch.any(ph < 0):
        raise ValueError("phi must be a normalized probability vector")
    return _result(torch.xlogy(ph, ph * m).sum().clamp_min(0.0), phi)


def gaussian_log_ratio(z_samples, p: GaussianParams, q: GaussianParams):
    """Mean over samples of log P(z) - log Q(z) for diagonal Gaussians.

    ``p`` and ``q`` may carry one parameter row per sample.
    """
    z = _tensor(z_samples)
    if z.ndim == 1:
        z = z[None, :]
    if z.shape[0] == 0:
        raise ValueError("need at least one sample")
    if not torch.all(torch.isfinite(z)):
        raise ValueError("samples must be finite")
    ratio = (p.log_density(z) - q.log_density(z)).mean()
    return _result(ratio, z_samples, p.mu, p.log_sigma2, q.mu, q.log_sigma2)


def consensual_term(z_final_samples, p: GaussianParams, q: GaussianParams):
    """Consensus upper bound on I(Z^{1:T}; Z^{T+1}), sampled on final-step nodes."""
    return gaussian_log_ratio(z_final_samples, p, q)


def gaussian_kl(p: GaussianParams, q: GaussianParams) -> float:
    """Closed-form KL(p || q) for diagonal Gaussians."""
    vp, vq = torch.exp(p.log_sigma2), torch.exp(q.log_sigma2)
    kl = 0.5 * (q.log_sigma2 - p.log_sigma2 + (vp + (p.mu - q.mu) ** 2) / vq - 1.0)
    return float(kl.sum())


def mi_exact_discrete(joint) -> float:
    """I(X;Y) in nats from a joint probability table."""
    pj = np.asarray(joint, dtype=np.float64)
    if pj.ndim != 2:
        raise ValueError("joint must be a 2-D table")
    if np.any(pj < 0) or abs(pj.sum() - 1.0) > 1e-10:
        raise ValueError("joint must be non-negative and sum to 1")
    px = pj.sum(axis=1, keepdims=True)
    py = pj.sum(axis=0, keepdims=True)
    nz = pj > 0
    return float(np.sum(pj[nz] * np.log(pj[nz] / (px @ py)[nz])))


def nwj_bound(
    paired_samples: Sequence,
    marginal_samples: Sequence,
    critic: Callable,
    paired_weights=None,
    marginal_weights=None,
) -> float:
    """NWJ lower bound E_joint[f] - e^{-1} E_marginals[e^f].

    Weights turn the sample means into exact expectations when the samples
    enumerate a discrete support. Critic values above 30 are clamped with a
    RuntimeWarning.
    """
    if len(paired_samples) == 0 or len(marginal_samples) == 0:
        raise ValueError("nwj_bound needs non-empty sample sets")
    fj = np.array([critic(x, y) for x, y in paired_samples], dtype=np.float64)
    fm = np.array([critic(x, y) for x, y in marginal_samples], dtype=np.float64)
    if np.any(fm > CRITIC_CLAMP):
        warnings.warn(f"critic exceeded {CRITIC_CLAMP}; clamped before exponentiation", RuntimeWarning, stacklevel=2)
        fm = np.minimum(fm, CRITIC_CLAMP)
    wj = np.full(len(fj), 1.0 / len(fj)) if paired_weights is None else np.asarray(paired_weights, float)
    wm = np.full(len(fm), 1.0 / len(fm)) if marginal_weights is None else np.asarray(marginal_weights, float)
    return float(np.dot(wj, fj) - math.exp(-1.0) * np.dot(wm, np.exp(fm)))


def assemble_loss(ce, a_terms: Mapping[int, object], z_terms: Mapping[int, object], consensual, cfg: BoundConfig) -> LossBreakdown:
    """Compose alpha * DGIB_MS + (1 - alpha) * DGIB_C.

    Terms for time steps outside the configured index sets are discarded.
    """
    a = {t: v for t, v in a_terms.items() if cfg.uses_A(t)}
    z = {t: v for t, v in z_terms.items() if cfg.uses_Z(t)}
    parts = LossBreakdown(ce, a, z, consensual, 0.0, cfg.alpha, cfg.beta1, cfg.beta2)
    # expanded form keeps total == ce bit-exact when both betas are zero
    total = ce
    if cfg.beta1 and cfg.alpha:
        total = total + (cfg.alpha * cfg.beta1) * (parts.sum_A + parts.sum_Z)
    if cfg.beta2 and cfg.alpha < 1.0:
        total = total + ((1.0 - cfg.alpha) * cfg.beta2) * consensual
    parts.total = total
    return parts
