"""Per-epoch wall-clock as N doubles, at fixed T.

``--density fixed-p`` keeps the SBM edge probabilities constant (edge count
grows with N^2); ``--density fixed-degree`` scales them by 100/N so the
expected degree stays constant.

    python scripts/scaling.py --sizes 100 200 400 800
"""
import argparse
import time

import numpy as np

from _common import add_common, fit, graph, write_rows


def main():
    parser = add_common(argparse.ArgumentParser(description=__doc__.splitlines()[0]))
    parser.add_argument("--sizes", type=int, nargs="+", default=[100, 200, 400])
    parser.add_argument("--density", choices=("fixed-p", "fixed-degree"), default="fixed-p")
    parser.set_defaults(epochs=11)
    args = parser.parse_args()
    rows = []
    for n in args.sizes:
        scale = 1.0 if args.density == "fixed-p" else 100.0 / n
        args.nodes = n
        dg = graph(args, args.seeds[0], p_intra=min(1.0, 0.2 * scale), p_inter=min(1.0, 0.01 * scale))
        t0 = time.perf_counter()
        _, rep, _, _ = fit(args, dg, args.seeds[0])
        steady = [r.wall_clock for r in rep.epochs[1:]] or [rep.epochs[0].wall_clock]
        rows.append({"n_nodes": n, "links": dg.num_links, "first_epoch_s": rep.epochs[0].wall_clock,
                     "median_epoch_s": float(np.median(steady)), "total_s": time.perf_counter() - t0})
    for prev, cur in zip(rows, rows[1:]):
        cur["ratio"] = cur["median_epoch_s"] / prev["median_epoch_s"]
    rows[0]["ratio"] = float("nan")
    for r in rows:
        print(f"N={r['n_nodes']:5d} links={r['links']:7d} epoch={1e3 * r['median_epoch_s']:8.1f}ms ratio={r['ratio']:.2f}")
    write_rows(rows, args.out / f"scaling_{args.density}.csv")


if __name__ == "__main__":
    main()
