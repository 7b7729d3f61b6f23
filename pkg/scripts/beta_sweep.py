"""Trade-off sweep over (1/beta1, 1/beta2); writes tradeoff.csv and optionally a plot.

    python scripts/beta_sweep.py --inv 1 10 100 1000 inf --attack-lambda 1.0
"""
import argparse
import itertools
import math

from _common import add_common, graph
from dgib.attacks import AttackSpec
from dgib.config import DEFAULT_LR
from dgib.harness import TrainConfig, beta_sweep, write_sweep_csv
from dgib.model import ModelConfig


def main():
    parser = add_common(argparse.ArgumentParser(description=__doc__.splitlines()[0]))
    parser.add_argument("--inv", type=float, nargs="+", default=[1, 10, 100, 1000, math.inf])
    parser.add_argument("--diagonal", action="store_true", help="only sweep 1/beta1 == 1/beta2")
    parser.add_argument("--attack-lambda", type=float, default=1.0)
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--plot", action="store_true")
    args = parser.parse_args()
    grid = [(x, x) for x in args.inv] if args.diagonal else list(itertools.product(args.inv, repeat=2))
    args.out.mkdir(parents=True, exist_ok=True)
    for seed in args.seeds:
        dg = graph(args, seed)
        cfg = TrainConfig(learning_rate=args.lr or DEFAULT_LR, max_epochs=args.epochs, seed=seed, track_infoplane=False)
        spec = AttackSpec("feature_noise", lam=args.attack_lambda, seed=seed)
        rows = beta_sweep(dg, grid, [spec], cfg, ModelConfig(init_seed=seed), workers=args.workers)
        path = args.out / f"tradeoff_seed{seed}.csv"
        write_sweep_csv(rows, path)
        if args.plot:
            from dgib.plotting import plot_tradeoff

            plot_tradeoff(path, path.with_suffix(".png"))


if __name__ == "__main__":
    main()
