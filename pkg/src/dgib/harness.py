"""Training loop, evaluation, ablations, gradient checks and beta sweeps."""
from __future__ import annotations

import copy
import csv
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
import torch

from .attacks import (
    TARGET_RULE,
    AttackSpec,
    LinearProxySurrogate,
    ModelSurrogate,
    attack_features,
    attack_structure,
    attack_targeted,
    choose_removed_type,
)
from .bounds import BoundConfig, LossBreakdown
from .dyngraph import DynamicGraph, NegativeCache, sample_link_labels
from .metrics import auc, info_plane_track
from .model import DGIBModel, ModelConfig, compute_loss, link_logits

ABLATIONS = ("none", "no_cons", "no_A", "no_Z")
LR_GRID = (1e-3, 1e-4, 1e-5, 1e-6)
METRIC_COLUMNS = ("epoch", "ce", "sum_A", "sum_Z", "consensual", "total", "val_auc")
INFOPLANE_COLUMNS = ("epoch", "I_DZ", "I_YZ")


class DivergenceError(RuntimeError):
    """Raised when a loss term turns NaN/inf during training."""

    def __init__(self, term: str, epoch: int, target: int):
        super().__init__(f"non-finite loss term '{term}' at epoch {epoch} (target snapshot {target})")
        self.term = term
        self.epoch = epoch
        self.target = target


def derive_seed(*parts: int) -> int:
    """Deterministic 31-bit seed from a tuple of integers."""
    return int(np.random.SeedSequence([int(p) & 0xFFFFFFFF for p in parts]).generate_state(1)[0] & 0x7FFFFFFF)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    max_epochs: int = 1000
    patience: int = 50
    seed: int = 0
    bound_cfg: BoundConfig = field(default_factory=BoundConfig)
    ablation: str = "none"
    track_infoplane: bool = True
    infoplane_bins: int = 16

    def __post_init__(self):
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.ablation not in ABLATIONS:
            raise ValueError(f"ablation must be one of {ABLATIONS}, got {self.ablation!r}")

    def effective_bounds(self) -> BoundConfig:
        return apply_ablation(self.bound_cfg, self.ablation)


def apply_ablation(cfg: BoundConfig, variant: str) -> BoundConfig:
    """no_cons drops the consensual channel, no_A / no_Z empty the index sets."""
    if variant == "none":
        return cfg
    if variant == "no_cons":
        return replace(cfg, alpha=1.0)
    if variant == "no_A":
        return replace(cfg, time_indices_A=frozenset())
    if variant == "no_Z":
        return replace(cfg, time_indices_Z=frozenset())
    raise ValueError(f"unknown ablation {variant!r}; expected one of {ABLATIONS}")


@dataclass
class EpochRecord:
    epoch: int
    ce: float
    sum_A: float
    sum_Z: float
    consensual: float
    total: float
    val_auc: float
    wall_clock: float
    I_DZ: float = math.nan
    I_YZ: float = math.nan


@dataclass
class EvalReport:
    epochs: list = field(default_factory=list)
    test_auc: float = math.nan
    best_epoch: int = 0
    best_val_auc: float = math.nan
    stopped_early: bool = False
    config: dict = field(default_factory=dict)

    @property
    def infoplane(self) -> list:
        return [(r.epoch, r.I_DZ, r.I_YZ) for r in self.epochs]

    def to_dict(self) -> dict:
        return {
            "test_auc": self.test_auc,
            "best_epoch": self.best_epoch,
            "best_val_auc": self.best_val_auc,
            "stopped_early": self.stopped_early,
            "epochs_run": len(self.epochs),
            "runtime_s": sum(r.wall_clock for r in self.epochs),
            "wall_clock_per_epoch": [r.wall_clock for r in self.epochs],
            "config": self.config,
        }


def _fmt(x: float) -> str:
    return repr(float(x))


def write_metrics_csv(report: EvalReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(METRIC_COLUMNS)
        for r in report.epochs:
            w.writerow([r.epoch] + [_fmt(getattr(r, c)) for c in METRIC_COLUMNS[1:]])


def write_infoplane_csv(report: EvalReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(INFOPLANE_COLUMNS)
        for r in report.epochs:
            w.writerow([r.epoch, _fmt(r.I_DZ), _fmt(r.I_YZ)])


def train_targets(dg: DynamicGraph) -> list:
    if dg.split is None:
        raise ValueError("training needs a chronological split")
    targets = [s for s in dg.split.train if s >= 2]
    if not targets:
        raise ValueError("training split needs at least two snapshots")
    return targets


def evaluate_auc(
    model: DGIBModel,
    input_dg: DynamicGraph,
    targets: Sequence[int],
    cache: NegativeCache,
    seed: int,
    split: str,
    label_dg: DynamicGraph | None = None,
) -> float:
    """Mean eval-mode AUC over target snapshots.

    Inputs come from ``input_dg`` (possibly attacked), labels from
    ``label_dg`` (defaults to ``input_dg``).
    """
    label_dg = input_dg if label_dg is None else label_dg
    scores = []
    with torch.no_grad():
        for s in targets:
            samples = cache.get(label_dg, s, seed, split)
            z = model(input_dg.history(s), training=False).z_final
            # rank on logits: large inner products saturate the sigmoid into ties
            scores.append(auc(link_logits(z, samples.pairs).numpy(), samples.labels))
    return float(np.mean(scores)) if scores else math.nan


def _mean_breakdown(parts: list) -> dict:
    return {
        "ce": float(np.mean([p.ce for p in parts])),
        "sum_A": float(np.mean([p.sum_A for p in parts])),
        "sum_Z": float(np.mean([p.sum_Z for p in parts])),
        "consensual": float(np.mean([p.consensual for p in parts])),
        "total": float(np.mean([p.total for p in parts])),
    }


def train(
    model: DGIBModel,
    dg: DynamicGraph,
    cfg: TrainConfig,
    cache: NegativeCache | None = None,
    log_fn: Callable[[EpochRecord], None] | None = None,
) -> tuple[DGIBModel, EvalReport]:
    """Adam over rolling windows with val-AUC early stopping.

    Every training snapshot s >= 2 is a target once per epoch, predicted from
    the full history 1..s-1 and X^s. Negatives are redrawn each epoch.
    """
    bcfg = cfg.effective_bounds()
    targets = train_targets(dg)
    val_targets = list(dg.split.val) or targets
    cache = cache or NegativeCache()
    histories = {s: dg.history(s) for s in targets}
    opt = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    report = EvalReport(config={"train": _echo(cfg), "model": asdict(model.cfg)})
    best_state, best_val, best_epoch, since_best = None, -math.inf, 0, 0

    for epoch in range(1, cfg.max_epochs + 1):
        t0 = time.perf_counter()
        model.train()
        temp = model.cfg.temperature_at(epoch - 1)
        parts: list[LossBreakdown] = []
        for s in targets:
            samples = sample_link_labels(dg, s, np.random.default_rng([cfg.seed, epoch, s]))
            gen = torch.Generator().manual_seed(derive_seed(cfg.seed, epoch, s))
            trace = model(histories[s], gen, training=True, temperature=temp)
            if not all(torch.isfinite(z).all() for z in trace.z.values()):
                raise DivergenceError("embedding", epoch, s)
            lb = compute_loss(trace, samples, bcfg, gen)
            bad = lb.first_nonfinite()
            if bad is not None:
                raise DivergenceError(bad, epoch, s)
            opt.zero_grad()
            lb.total.backward()
            opt.step()
            parts.append(lb.detached())
        model.eval()
        val_auc = evaluate_auc(model, dg, val_targets, cache, cfg.seed, "val")
        rec = EpochRecord(epoch, val_auc=val_auc, wall_clock=0.0, **_mean_breakdown(parts))
        if cfg.track_infoplane:
            s = val_targets[-1]
            with torch.no_grad(), warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                tr = model(dg.history(s), training=False)
                rec.I_DZ, rec.I_YZ = info_plane_track(
                    tr, dg.history(s), cache.get(dg, s, cfg.seed, "val"), cfg.infoplane_bins, seed=cfg.seed
                )
        rec.wall_clock = time.perf_counter() - t0
        report.epochs.append(rec)
        if log_fn is not None:
            log_fn(rec)

        if val_auc > best_val:
            best_val, best_epoch, since_best = val_auc, epoch, 0
            best_state = copy.deepcopy(model.state_dict())
        else:
            since_best += 1
            if since_best >= cfg.patience:
                report.stopped_early = epoch < cfg.max_epochs
                break

    if best_state is not None:
        model.load_state_dict(best_state)
    report.best_epoch = best_epoch
    report.best_val_auc = best_val
    if dg.split.test:
        report.test_auc = evaluate_auc(model, dg, list(dg.split.test), cache, cfg.seed, "test")
    return model, report


def _echo(cfg: TrainConfig) -> dict:
    d = asdict(cfg)
    b = d["bound_cfg"]
    for k in ("time_indices_A", "time_indices_Z"):
        if b[k] is not None:
            b[k] = sorted(b[k])
    return d


# --- attacks on trained models ----------------------------------------------


def run_attack(
    model: DGIBModel,
    dg: DynamicGraph,
    spec: AttackSpec,
    cfg: TrainConfig,
    cache: NegativeCache | None = None,
) -> dict:
    """Clean and attacked test AUC for one attack.

    Evasion-type attacks (feature noise, targeted evasion) perturb the inputs
    of the already-trained ``model``. Structure removal and targeted
    poisoning alter training data, so a fresh model with the same init seed
    is trained on the attacked graph. Labels always come from the clean graph.
    """
    cache = cache or NegativeCache()
    test = list(dg.split.test)
    rng = np.random.default_rng([spec.seed, 7919])
    clean = evaluate_auc(model, dg, test, cache, cfg.seed, "test")
    info: dict = {"attack": spec.to_dict(), "label": spec.label}
    if spec.mode == "feature_noise":
        attacked_dg = attack_features(dg, spec.lam, rng)
        victim = model
    elif spec.mode == "structure_linktype":
        removed = choose_removed_type(dg, spec, np.random.default_rng([spec.seed, 7919]))
        attacked_dg = attack_structure(dg, replace(spec, removed_type=removed), rng)
        info["removed_type"] = removed
        victim = _retrain(model, attacked_dg, cfg, cache)
    else:
        log: list = []
        surrogate = ModelSurrogate(model, dg, spec.seed) if spec.phase == "evasion" else LinearProxySurrogate(dg, spec.seed)
        attacked_dg = attack_targeted(dg, surrogate, spec.n_perturbations, spec.phase, rng,
                                      spec.n_targets, spec.max_candidates, log)
        info["target_rule"] = TARGET_RULE
        info["flips"] = log
        victim = model if spec.phase == "evasion" else _retrain(model, attacked_dg, cfg, cache)
    attacked = evaluate_auc(victim, attacked_dg, test, cache, cfg.seed, "test", label_dg=dg)
    info.update(clean_auc=clean, attacked_auc=attacked)
    return info


def _retrain(model: DGIBModel, dg: DynamicGraph, cfg: TrainConfig, cache) -> DGIBModel:
    fresh = DGIBModel(model.feature_dim, model.cfg)
    fresh, _ = train(fresh, dg, replace(cfg, track_infoplane=False), NegativeCache(None))
    return fresh


# --- gradient checks ----------------------------------------------------------


def gradient_check(
    loss_fn: Callable[[], torch.Tensor],
    params: Sequence[torch.Tensor],
    n_params: int,
    rng: np.random.Generator,
    h: float = 1e-5,
) -> float:
    """Max relative error of autograd vs central differences on random scalars.

    relative error = |g - fd| / max(|g|, |fd|, 1e-7)
    """
    params = [p for p in params if p.requires_grad]
    loss = loss_fn()
    if not torch.isfinite(loss):
        raise FloatingPointError("loss is not finite")
    grads = torch.autograd.grad(loss, params, allow_unused=True)
    sizes = np.array([p.numel() for p in params], dtype=np.float64)
    worst = 0.0
    for _ in range(n_params):
        i = int(rng.choice(len(params), p=sizes / sizes.sum()))
        j = int(rng.integers(params[i].numel()))
        g = 0.0 if grads[i] is None else float(grads[i].reshape(-1)[j])
        flat = params[i].data.view(-1)
        orig = float(flat[j])
        with torch.no_grad():
            flat[j] = orig + h
            up = float(loss_fn())
            flat[j] = orig - h
            down = float(loss_fn())
            flat[j] = orig
        if not (math.isfinite(up) and math.isfinite(down)):
            raise FloatingPointError("loss is not finite under perturbation")
        fd = (up - down) / (2 * h)
        worst = max(worst, abs(g - fd) / max(abs(g), abs(fd), 1e-7))
    return worst


def grad_check(
    model: DGIBModel,
    dg: DynamicGraph,
    cfg: BoundConfig,
    n_params: int,
    rng: np.random.Generator,
    target: int | None = None,
    h: float = 1e-5,
) -> float:
    """Finite-difference check of the full loss with all random draws frozen.

    The relaxed (training-mode) sampling path is used so the loss is smooth;
    the generator is re-seeded identically for every evaluation.
    """
    s = dg.num_snapshots if target is None else target
    hist = dg.history(s)
    samples = sample_link_labels(dg, s, rng)
    draw_seed = int(rng.integers(2**31))

    def loss_fn():
        gen = torch.Generator().manual_seed(draw_seed)
        trace = model(hist, gen, training=True)
        return compute_loss(trace, samples, cfg, gen).total

    return gradient_check(loss_fn, list(model.parameters()), n_params, rng, h)


# --- beta trade-off -------------------------------------------------------------


SWEEP_COLUMNS = ("inv_beta1", "inv_beta2", "attack", "clean_auc", "attacked_auc")


def _beta(inv: float) -> float:
    if inv == math.inf:
        return 0.0
    if not inv > 0:
        raise ValueError("grid entries 1/beta must be positive (use inf for beta=0)")
    return 1.0 / inv


def _sweep_point(args) -> list[dict]:
    dg, inv1, inv2, attacks, train_cfg, model_cfg = args
    bcfg = replace(train_cfg.bound_cfg, beta1=_beta(inv1), beta2=_beta(inv2))
    tcfg = replace(train_cfg, bound_cfg=bcfg, track_infoplane=False)
    model = DGIBModel(dg.feature_dim, model_cfg)
    model, _ = train(model, dg, tcfg, NegativeCache())
    rows = []
    for spec in attacks:
        res = run_attack(model, dg, spec, tcfg, NegativeCache())
        rows.append({"inv_beta1": inv1, "inv_beta2": inv2, "attack": spec.label,
                     "clean_auc": res["clean_auc"], "attacked_auc": res["attacked_auc"]})
    return rows


def beta_sweep(
    dg: DynamicGraph,
    grid: Sequence[tuple[float, float]],
    attacks: Sequence[AttackSpec],
    train_cfg: TrainConfig,
    model_cfg: ModelConfig,
    workers: int = 1,
) -> list[dict]:
    """Train one model per (1/beta1, 1/beta2) point and score it clean and attacked.

    Every grid point shares the same init seed and training seed, so repeated
    points produce identical rows. One row per (grid point, attack), in grid
    order regardless of ``workers``.
    """
    if not grid:
        raise ValueError("beta grid must be non-empty")
    if not attacks:
        raise ValueError("beta sweep needs at least one attack spec")
    for inv1, inv2 in grid:
        _beta(inv1), _beta(inv2)
    jobs = [(dg, inv1, inv2, list(attacks), train_cfg, model_cfg) for inv1, inv2 in grid]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers, initializer=torch.set_num_threads, initargs=(1,)) as pool:
            chunks = list(pool.map(_sweep_point, jobs))
    else:
        chunks = [_sweep_point(j) for j in jobs]
    return [row for chunk in chunks for row in chunk]


def write_sweep_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({k: (_fmt(v) if isinstance(v, float) else v) for k, v in r.items()})
