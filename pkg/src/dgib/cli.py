"""Command-line entry point: ``dgib {gen,train,attack-eval,sweep}``.

Exit codes: 0 success, 2 config error, 3 numerical divergence, 4 missing artifact.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np
import torch

from .attacks import AttackSpec
from .config import ConfigError, RunConfig, load_config, parse_config
from .dyngraph import DatasetValidationError, NegativeCache, save_dataset
from .harness import (
    ABLATIONS,
    DivergenceError,
    beta_sweep,
    run_attack,
    train,
    write_infoplane_csv,
    write_metrics_csv,
    write_sweep_csv,
)
from .model import DGIBModel, load_checkpoint, save_checkpoint

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_MISSING = 0, 2, 3, 4
MODE_ALIASES = {"structure": "structure_linktype", "feature": "feature_noise", "targeted": "targeted"}

log = logging.getLogger("dgib")


class MissingArtifact(FileNotFoundError):
    pass


def thread_budget() -> int:
    raw = os.environ.get("DGIB_THREADS")
    if raw is None:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"DGIB_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError("DGIB_THREADS must be >= 1")
    return n


def _load(args) -> RunConfig:
    if args.config is None:
        return parse_config({}, args.seed)
    return load_config(args.config, args.seed)


def _out_dir(args) -> Path:
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"output directory {out} is not writable: {exc}") from exc
    if not os.access(out, os.W_OK):
        raise ConfigError(f"output directory {out} is not writable")
    return out


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, (frozenset, set)):
        return sorted(obj)
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _graph(cfg: RunConfig):
    try:
        return cfg.load_graph()
    except FileNotFoundError as exc:
        raise MissingArtifact(str(exc)) from exc


# --- commands -------------------------------------------------------------


def cmd_gen(args) -> int:
    cfg = _load(args)
    if cfg.dataset_path is not None:
        raise ConfigError("gen needs synthetic data.* keys, not data.path")
    out = _out_dir(args)
    dg = cfg.load_graph()
    manifest = save_dataset(dg, out)
    print(manifest)
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load(args)
    if args.ablation is not None:
        cfg.train = replace(cfg.train, ablation=args.ablation)
    out = _out_dir(args)
    dg = _graph(cfg)
    tcfg = cfg.train_config()
    model = DGIBModel(dg.feature_dim, cfg.model_config())
    t0 = time.perf_counter()

    def progress(rec):
        log.info("epoch %d ce=%.4f total=%.4f val_auc=%.4f", rec.epoch, rec.ce, rec.total, rec.val_auc)

    model, report = train(model, dg, tcfg, NegativeCache(), progress)
    write_metrics_csv(report, out / "metrics.csv")
    write_infoplane_csv(report, out / "infoplane.csv")
    save_checkpoint(model, out / "checkpoint.npz", {"seed": cfg.seed, "ablation": tcfg.ablation})
    payload = {
        "command": "train",
        "seed": cfg.seed,
        "ablation": tcfg.ablation,
        "config": cfg.raw,
        "dataset": dg.name,
        "test_auc": report.test_auc,
        "best_epoch": report.best_epoch,
        "best_val_auc": report.best_val_auc,
        "epochs_run": len(report.epochs),
        "stopped_early": report.stopped_early,
        "train_config": report.config,
        "runtime_s": time.perf_counter() - t0,
    }
    _write_json(out / "report.json", payload)
    if args.plot:
        from .plotting import plot_training

        plot_training(out / "metrics.csv", out / "infoplane.csv", out / "training.png")
    print(out / "report.json")
    return EXIT_OK


def _attack_spec(cfg: RunConfig, args) -> AttackSpec:
    base = cfg.attack.to_dict() if cfg.attack is not None else {"mode": "feature_noise"}
    if args.mode is not None:
        base["mode"] = MODE_ALIASES[args.mode]
    if args.lam is not None:
        base["lam"] = args.lam
    if args.n is not None:
        base["n_perturbations"] = args.n
    if args.phase is not None:
        base["phase"] = args.phase
    base["seed"] = cfg.seed
    return AttackSpec(**base)


def cmd_attack_eval(args) -> int:
    cfg = _load(args)
    spec = _attack_spec(cfg, args)
    out = _out_dir(args)
    ckpt = Path(args.checkpoint) if args.checkpoint else out / "checkpoint.npz"
    needs_ckpt = spec.mode == "feature_noise" or (spec.mode == "targeted" and spec.phase == "evasion")
    dg = _graph(cfg)
    tcfg = cfg.train_config()
    t0 = time.perf_counter()
    if ckpt.exists():
        model, _ = load_checkpoint(ckpt)
    elif needs_ckpt:
        raise MissingArtifact(f"checkpoint not found: {ckpt} (run `dgib train` first)")
    else:
        model, _ = train(DGIBModel(dg.feature_dim, cfg.model_config()), dg, replace(tcfg, track_infoplane=False))
    res = run_attack(model, dg, spec, tcfg, NegativeCache())
    rows = [
        {"condition": "clean", "auc": res["clean_auc"]},
        {"condition": "attacked", "auc": res["attacked_auc"]},
    ]
    payload = {
        "command": "attack-eval",
        "seed": cfg.seed,
        "config": cfg.raw,
        "attack": res["attack"],
        "attack_label": res["label"],
        "rows": rows,
        "clean_auc": res["clean_auc"],
        "attacked_auc": res["attacked_auc"],
        "runtime_s": time.perf_counter() - t0,
    }
    for key in ("removed_type", "target_rule", "flips"):
        if key in res:
            payload[key] = res[key]
    _write_json(out / "attack_report.json", payload)
    with open(out / "attack.csv", "w") as fh:
        fh.write("condition,auc\n")
        for r in rows:
            fh.write(f"{r['condition']},{r['auc']!r}\n")
    print(f"clean AUC {res['clean_auc']:.4f}  attacked AUC {res['attacked_auc']:.4f}  ({res['label']})")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load(args)
    if not cfg.sweep_grid:
        raise ConfigError("sweep needs a non-empty sweep.grid")
    out = _out_dir(args)
    dg = _graph(cfg)
    spec = cfg.attack or AttackSpec("feature_noise", lam=1.0)
    spec = replace(spec, seed=cfg.seed)
    rows = beta_sweep(dg, cfg.sweep_grid, [spec], cfg.train_config(), cfg.model_config(), workers=thread_budget())
    write_sweep_csv(rows, out / "tradeoff.csv")
    if args.plot:
        from .plotting import plot_tradeoff

        plot_tradeoff(out / "tradeoff.csv", out / "tradeoff.png")
    print(out / "tradeoff.csv")
    return EXIT_OK


# --- parser ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dgib", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None, help="flat namespaced JSON config")
        p.add_argument("--seed", type=int, default=None, help="master seed (overrides config 'seed')")
        p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("gen", help="generate a synthetic dataset directory")
    common(p)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train a model and write metrics/report/checkpoint")
    common(p)
    p.add_argument("--ablation", choices=ABLATIONS, default=None)
    p.add_argument("--plot", action="store_true", help="also render training.png")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("attack-eval", help="clean vs attacked test AUC")
    common(p)
    p.add_argument("--mode", choices=tuple(MODE_ALIASES), default=None)
    p.add_argument("--lambda", dest="lam", type=float, default=None, help="feature-noise scale")
    p.add_argument("--n", type=int, default=None, help="targeted flips per target")
    p.add_argument("--phase", choices=("evasion", "poisoning"), default=None)
    p.add_argument("--checkpoint", default=None, help="defaults to <out>/checkpoint.npz")
    p.set_defaults(func=cmd_attack_eval)

    p = sub.add_parser("sweep", help="beta trade-off sweep; writes tradeoff.csv")
    common(p)
    p.add_argument("--plot", action="store_true", help="also render tradeoff.png")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        torch.set_num_threads(thread_budget())
        return args.func(args)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (MissingArtifact, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (ConfigError, DatasetValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
