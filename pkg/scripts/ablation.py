"""Ablations (no_cons, no_A, no_Z) against full DGIB under targeted attacks.

    python scripts/ablation.py --phase evasion --n 2
"""
import argparse

import numpy as np

from _common import add_common, fit, graph, write_rows
from dgib.attacks import AttackSpec
from dgib.harness import ABLATIONS, run_attack


def main():
    parser = add_common(argparse.ArgumentParser(description=__doc__.splitlines()[0]))
    parser.add_argument("--phase", choices=("evasion", "poisoning"), default="evasion")
    parser.add_argument("--n", type=int, default=2)
    args = parser.parse_args()
    rows = []
    for seed in args.seeds:
        dg = graph(args, seed)
        spec = AttackSpec("targeted", n_perturbations=args.n, phase=args.phase, seed=seed)
        for variant in ABLATIONS:
            model, _, cfg, cache = fit(args, dg, seed, ablation=variant)
            res = run_attack(model, dg, spec, cfg, cache)
            rows.append({"variant": variant, "seed": seed, "clean_auc": res["clean_auc"],
                         "attacked_auc": res["attacked_auc"]})
            print(f"{variant:8s} seed {seed}: clean {res['clean_auc']:.4f} attacked {res['attacked_auc']:.4f}")
    write_rows(rows, args.out / f"ablation_{args.phase}_n{args.n}.csv")
    for variant in ABLATIONS:
        vals = [r["attacked_auc"] for r in rows if r["variant"] == variant]
        print(f"{variant:8s} {np.mean(vals):.4f} +- {np.std(vals):.4f}")


if __name__ == "__main__":
    main()
