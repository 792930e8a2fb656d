"""Convert the LINQS Cora files (cora.content, cora.cites) to the graph text format.

Citations become undirected edges; self-citations and duplicates are dropped.
Class names are numbered in sorted order.
"""

import argparse

import numpy as np

from ariel.graph import Graph
from ariel.graphio import write_graph


def read_cora(content_path, cites_path) -> Graph:
    ids, rows, names = [], [], []
    with open(content_path, encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if parts:
                ids.append(parts[0])
                rows.append([float(v) for v in parts[1:-1]])
                names.append(parts[-1])
    index = {pid: k for k, pid in enumerate(ids)}
    classes = sorted(set(names))
    labels = np.array([classes.index(c) for c in names])
    pairs = set()
    with open(cites_path, encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if len(parts) != 2 or parts[0] not in index or parts[1] not in index:
                continue
            a, b = index[parts[0]], index[parts[1]]
            if a != b:
                pairs.add((min(a, b), max(a, b)))
    edges = np.array(sorted(pairs), dtype=np.int64).reshape(-1, 2)
    return Graph(len(ids), edges, np.array(rows), labels=labels, num_classes=len(classes))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("content")
    ap.add_argument("cites")
    ap.add_argument("output")
    args = ap.parse_args()
    g = read_cora(args.content, args.cites)
    write_graph(g, args.output)
    print(f"wrote {args.output} ({g.n} nodes, {g.num_edges} edges, {g.feature_dim} features, {g.num_classes} classes)")


if __name__ == "__main__":
    main()
