"""Compare unstable-run counts with and without the information regularizer.

A run is unstable when training aborts on a non-finite value or the total
loss is not decreasing over the last 100 iterations.
"""

import argparse
import time

import numpy as np

from ariel.evaluation import run_unstable
from ariel.graph import generate_sbm
from ariel.training import TrainConfig, TrainingAborted, train_node_level

STRESS = dict(alpha=10.0, beta=1.0, delta_x=5.0)


def stress_config(eps2: float, seed: int, epochs: int = 200) -> TrainConfig:
    return TrainConfig(
        epochs=epochs, subgraph_size=100, hidden=32, out_dim=32, eps2=eps2, seed=seed,
        learning_rate=0.01, gamma=1.0,
    ).with_attack(**STRESS)


def stress_graph():
    return generate_sbm([50, 50], 0.2, 0.02, 16, 0.6, np.random.default_rng(0))


def count_unstable(g, eps2: float, seeds: int, epochs: int = 200, column: str = "total") -> int:
    bad = 0
    for s in range(seeds):
        try:
            _, _, log = train_node_level(g, stress_config(eps2, s, epochs))
        except TrainingAborted:
            bad += 1
            continue
        bad += run_unstable(log.column(column))
    return bad


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--epochs", type=int, default=200)
    ap.add_argument("--column", default="total", choices=["total", "l_con"])
    args = ap.parse_args()
    g = stress_graph()
    for eps2 in (0.0, 1.0):
        t = time.time()
        bad = count_unstable(g, eps2, args.seeds, args.epochs, args.column)
        print(f"eps2={eps2}: {bad}/{args.seeds} unstable ({time.time() - t:.0f}s)", flush=True)


if __name__ == "__main__":
    main()
