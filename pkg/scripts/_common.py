"""Shared helpers for the experiment scripts."""
import csv
import sys
from pathlib import Path

import torch

from dgib.bounds import BoundConfig
from dgib.config import DEFAULT_LR, DEFAULT_MAX_EPOCHS, SyntheticParams
from dgib.dyngraph import NegativeCache
from dgib.harness import TrainConfig, train
from dgib.model import DGIBModel, ModelConfig

torch.set_num_threads(1)


def add_common(parser):
    parser.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    parser.add_argument("--nodes", type=int, default=100)
    parser.add_argument("--snapshots", type=int, default=6)
    parser.add_argument("--epochs", type=int, default=DEFAULT_MAX_EPOCHS)
    parser.add_argument("--lr", type=float, default=DEFAULT_LR)
    parser.add_argument("--out", type=Path, default=Path("results"))
    return parser


def graph(args, seed, **kw):
    return SyntheticParams(n_nodes=args.nodes, n_snapshots=args.snapshots, **kw).generate(seed)


def fit(args, dg, seed, bound_cfg=None, ablation="none", track_infoplane=False, prior_kind="bernoulli"):
    bcfg = bound_cfg or BoundConfig(prior_kind=prior_kind)
    cfg = TrainConfig(learning_rate=args.lr, max_epochs=args.epochs, seed=seed, bound_cfg=bcfg,
                      ablation=ablation, track_infoplane=track_infoplane)
    cache = NegativeCache()
    model = DGIBModel(dg.feature_dim, ModelConfig(init_seed=seed, prior_kind=bcfg.prior_kind))
    model, rep = train(model, dg, cfg, cache)
    return model, rep, cfg, cache


def write_rows(rows, path):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    print(f"wrote {path}", file=sys.stderr)
