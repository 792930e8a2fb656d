"""Train on a node-level config and compare the probe with raw features.

Defaults to the bundled 2 x 150 SBM.
"""

import argparse
import time
from pathlib import Path

import numpy as np

from ariel.config import load_config, with_seed
from ariel.evaluation import embed, evaluate_embeddings
from ariel.graphio import load_graph
from ariel.training import train_node_level

DEFAULT = Path(__file__).resolve().parents[1] / "configs" / "sbm_300.ini"


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=str(DEFAULT))
    ap.add_argument("--seed", type=int)
    ap.add_argument("--data", help="graph file (overrides [data] path)")
    args = ap.parse_args()
    cfg = load_config(args.config)
    if args.seed is not None:
        with_seed(cfg, args.seed)
    g = load_graph(args.data or cfg.resolve(cfg.data_path))
    reps = cfg.eval["repetitions"]

    def progress(k, br):
        if k % 50 == 0:
            print(f"iter {k}: total {br.total:.4f}")

    t = time.time()
    enc, _, log = train_node_level(g, cfg.train, callback=progress)
    print(f"trained {len(log.records)} iterations in {time.time() - t:.0f}s")
    learned = evaluate_embeddings(embed(g, enc), g.labels, repetitions=reps, seed=cfg.seed)
    raw = evaluate_embeddings(g.features, g.labels, repetitions=reps, seed=cfg.seed)
    print(f"learned: {learned.accuracy_mean:.4f} +/- {learned.accuracy_std:.4f}")
    print(f"raw features: {raw.accuracy_mean:.4f} +/- {raw.accuracy_std:.4f}")
    print(f"total time {time.time() - t:.0f}s, nodes {g.n}, edges {g.num_edges}, classes {len(np.unique(g.labels))}")


if __name__ == "__main__":
    main()
