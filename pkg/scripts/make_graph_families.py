"""Write a two-family graph dataset: cliques (label 0) and cycles (label 1)."""

import argparse

import numpy as np

from ariel.graph import clique_graph, cycle_graph
from ariel.graphio import write_graph_dataset


def families(count: int, low: int, high: int, rng: np.random.Generator):
    graphs = []
    for _ in range(count):
        graphs.append(clique_graph(int(rng.integers(low, high + 1))).replace(graph_label=0))
        graphs.append(cycle_graph(int(rng.integers(low, high + 1))).replace(graph_label=1))
    return graphs


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("output")
    ap.add_argument("--count", type=int, default=30, help="graphs per family")
    ap.add_argument("--min-size", type=int, default=5)
    ap.add_argument("--max-size", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    graphs = families(args.count, args.min_size, args.max_size, np.random.default_rng(args.seed))
    write_graph_dataset(graphs, args.output)
    print(f"wrote {args.output} ({len(graphs)} graphs)")


if __name__ == "__main__":
    main()
