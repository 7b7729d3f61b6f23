"""Optional PNG renders of the CSV outputs (needs matplotlib)."""
from __future__ import annotations

import csv
from pathlib import Path


def _read(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def plot_training(metrics_csv, infoplane_csv, out_png) -> Path:
    plt = _pyplot()
    m = _read(metrics_csv)
    ip = _read(infoplane_csv)
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    ep = [int(r["epoch"]) for r in m]
    axes[0].plot(ep, [float(r["total"]) for r in m], label="total loss")
    axes[0].plot(ep, [float(r["ce"]) for r in m], label="ce")
    ax2 = axes[0].twinx()
    ax2.plot(ep, [float(r["val_auc"]) for r in m], color="k", ls="--", label="val AUC")
    axes[0].set_xlabel("epoch")
    axes[0].legend(loc="upper right")
    x = [float(r["I_DZ"]) for r in ip]
    y = [float(r["I_YZ"]) for r in ip]
    sc = axes[1].scatter(x, y, c=[int(r["epoch"]) for r in ip], cmap="viridis", s=12)
    axes[1].set_xlabel("I(D;Z) [nats]")
    axes[1].set_ylabel("I(Y;Z) [nats]")
    fig.colorbar(sc, ax=axes[1], label="epoch")
    fig.tight_layout()
    fig.savefig(out_png, dpi=120)
    plt.close(fig)
    return Path(out_png)


def plot_tradeoff(tradeoff_csv, out_png) -> Path:
    plt = _pyplot()
    rows = _read(tradeoff_csv)
    fig, ax = plt.subplots(figsize=(5, 4))
    labels = [f"{r['inv_beta1']}/{r['inv_beta2']}" for r in rows]
    xs = range(len(rows))
    ax.plot(xs, [float(r["clean_auc"]) for r in rows], "o-", label="clean")
    ax.plot(xs, [float(r["attacked_auc"]) for r in rows], "s-", label="attacked")
    ax.set_xticks(list(xs), labels, rotation=45)
    ax.set_xlabel("1/beta1 / 1/beta2")
    ax.set_ylabel("AUC")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_png, dpi=120)
    plt.close(fig)
    return Path(out_png)
