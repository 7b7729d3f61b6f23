"""Per-epoch information-plane trajectory (I(D;Z), I(Y;Z)) for one or more seeds.

The coordinates come from a binned random-projection estimator, so only the
shape of the trajectory is meaningful, not the absolute values.

    python scripts/info_plane.py --seeds 0 --epochs 200 --plot
"""
import argparse

from _common import add_common, fit, graph, write_rows


def main():
    parser = add_common(argparse.ArgumentParser(description=__doc__.splitlines()[0]))
    parser.add_argument("--plot", action="store_true")
    args = parser.parse_args()
    rows = []
    for seed in args.seeds:
        _, rep, _, _ = fit(args, graph(args, seed), seed, track_infoplane=True)
        rows += [{"seed": seed, "epoch": r.epoch, "I_DZ": r.I_DZ, "I_YZ": r.I_YZ, "val_auc": r.val_auc}
                 for r in rep.epochs]
    for seed in args.seeds:
        pts = [r for r in rows if r["seed"] == seed]
        peak = max(pts, key=lambda r: r["I_DZ"])["epoch"]
        shape = "compression phase seen" if peak < pts[-1]["epoch"] else "no decline in I(D;Z)"
        print(f"seed {seed}: I(D;Z) peaks at epoch {peak} of {pts[-1]['epoch']} ({shape})")
    path = args.out / "infoplane.csv"
    write_rows(rows, path)
    if args.plot:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(5, 4))
        for seed in args.seeds:
            pts = [r for r in rows if r["seed"] == seed]
            sc = ax.scatter([p["I_DZ"] for p in pts], [p["I_YZ"] for p in pts],
                            c=[p["epoch"] for p in pts], cmap="viridis", s=8)
        fig.colorbar(sc, label="epoch")
        ax.set_xlabel("I(D;Z) [nats]")
        ax.set_ylabel("I(Y;Z) [nats]")
        fig.tight_layout()
        fig.savefig(args.out / "infoplane.png", dpi=120)


if __name__ == "__main__":
    main()
