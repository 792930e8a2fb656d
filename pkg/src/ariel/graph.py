"""Graphs, normalization, augmentation, sampling and synthetic generation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numkit as nk
from .errors import DimensionError, GraphValidationError
from .numkit import SparseSymmetric, Tensor

DEGREE_FLOOR = 1e-12


def _canonical_edges(edges) -> np.ndarray:
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if len(e) == 0:
        return np.zeros((0, 2), dtype=np.int64)
    order = np.lexsort((e[:, 1], e[:, 0]))
    return e[order]


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected, unweighted attributed graph.

    ``edges`` holds each edge once as a row ``(i, j)`` with ``i < j``.
    ``labels`` are per-node classes; ``graph_label`` is the class of the
    whole graph for graph-level datasets.
    """

    n: int
    edges: np.ndarray
    features: np.ndarray
    labels: np.ndarray | None = None
    graph_label: int | None = None
    num_classes: int | None = field(default=None)

    def __post_init__(self):
        edges = _canonical_edges(self.edges)
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[0] != self.n:
            raise DimensionError(f"features must be {self.n} x d, got {feats.shape}")
        if len(edges):
            if np.any(edges[:, 0] == edges[:, 1]):
                raise GraphValidationError("self-loops are not allowed")
            if np.any(edges[:, 0] > edges[:, 1]):
                raise GraphValidationError("edges must be stored with i < j")
            if edges.min() < 0 or edges.max() >= self.n:
                raise GraphValidationError("edge endpoint out of range")
            if np.any(np.all(np.diff(edges, axis=0) == 0, axis=1)):
                raise GraphValidationError("duplicate edge")
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=np.int64)
            if labels.shape != (self.n,):
                raise DimensionError("labels must have one entry per node")
            object.__setattr__(self, "labels", labels)
        feats.setflags(write=False)
        edges.setflags(write=False)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "features", feats)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def adjacency(self) -> SparseSymmetric:
        return SparseSymmetric(self.n, self.edges[:, 0], self.edges[:, 1], np.ones(len(self.edges)), check=False)

    def dense_adjacency(self) -> np.ndarray:
        return self.adjacency.densify()

    def replace(self, **changes) -> "Graph":
        kw = dict(
            n=self.n,
            edges=self.edges,
            features=self.features,
            labels=self.labels,
            graph_label=self.graph_label,
            num_classes=self.num_classes,
        )
        kw.update(changes)
        return Graph(**kw)

    def same_as(self, other: "Graph") -> bool:
        if self.n != other.n or self.graph_label != other.graph_label:
            return False
        if (self.labels is None) != (other.labels is None):
            return False
        if self.labels is not None and not np.array_equal(self.labels, other.labels):
            return False
        return np.array_equal(self.edges, other.edges) and np.array_equal(self.features, other.features)


def edge_set(g: Graph) -> set[tuple[int, int]]:
    return {(int(i), int(j)) for i, j in g.edges}


def normalize_adjacency(g: Graph | SparseSymmetric, values=None) -> SparseSymmetric:
    """D^-1/2 (A + I) D^-1/2 with degrees of the self-looped matrix.

    ``g`` may be a graph (discrete mode) or a :class:`SparseSymmetric` whose
    entry values are relaxed adjacency weights in [0, 1] (continuous mode).
    Passing ``values`` overrides the stored entries. Tensor values keep the
    result differentiable.
    """
    adj = g.adjacency if isinstance(g, Graph) else g
    vals = adj.values if values is None else values
    rows, cols, n = adj.rows, adj.cols, adj.n
    if isinstance(vals, Tensor):
        # relaxed values are non-negative, so the self-loop keeps every degree >= 1
        deg = 1.0 + nk.index_add(n, rows, vals) + nk.index_add(n, cols, vals)
        inv_sqrt = nk.power(deg, -0.5)
        off = vals * nk.take_rows(inv_sqrt, rows) * nk.take_rows(inv_sqrt, cols)
        diag = nk.power(deg, -1.0)
        return SparseSymmetric(n, rows, cols, off, diag, check=False)
    vals = np.asarray(vals, dtype=np.float64)
    deg = np.ones(n)
    np.add.at(deg, rows, vals)
    np.add.at(deg, cols, vals)
    deg = np.maximum(deg, DEGREE_FLOOR)
    inv_sqrt = deg**-0.5
    return SparseSymmetric(n, rows, cols, vals * inv_sqrt[rows] * inv_sqrt[cols], 1.0 / deg, check=False)


# ---------------------------------------------------------------- augmentation


@dataclass(frozen=True)
class AugmentSpec:
    p_edge_drop: float = 0.2
    p_feature_mask: float = 0.3

    def __post_init__(self):
        for name in ("p_edge_drop", "p_feature_mask"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {p}")


def drop_edges(g: Graph, p: float, rng: np.random.Generator) -> Graph:
    keep = rng.random(g.num_edges) >= p
    return g.replace(edges=g.edges[keep])


def augment(g: Graph, spec: AugmentSpec, rng: np.random.Generator) -> Graph:
    """Random edge dropping plus whole-column feature masking."""
    out = drop_edges(g, spec.p_edge_drop, rng)
    col_keep = rng.random(g.feature_dim) >= spec.p_feature_mask
    return out.replace(features=g.features * col_keep)


def degrade_step(
    g: Graph, p: float, masked_so_far: frozenset[int] | set[int], rng: np.random.Generator
) -> tuple[Graph, frozenset[int]]:
    """One step of the information-removal sequence: drop surviving edges and
    mask still-visible feature columns, each with probability ``p``."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    out = drop_edges(g, p, rng)
    masked = set(masked_so_far)
    hits = rng.random(g.feature_dim) < p
    masked.update(int(c) for c in np.flatnonzero(hits) if c not in masked)
    feats = g.features.copy()
    if masked:
        feats[:, sorted(masked)] = 0.0
    return out.replace(features=feats), frozenset(masked)


# ---------------------------------------------------------------- sampling


@dataclass(frozen=True)
class SubgraphSample:
    subgraph: Graph
    kept_nodes: np.ndarray


def induced_subgraph(g: Graph, nodes: np.ndarray) -> Graph:
    nodes = np.asarray(nodes, dtype=np.int64)
    remap = np.full(g.n, -1, dtype=np.int64)
    remap[nodes] = np.arange(len(nodes))
    e = remap[g.edges] if g.num_edges else np.zeros((0, 2), dtype=np.int64)
    e = e[(e >= 0).all(axis=1)] if len(e) else e
    e = np.sort(e, axis=1)
    labels = None if g.labels is None else g.labels[nodes]
    return Graph(len(nodes), e, g.features[nodes], labels, g.graph_label, g.num_classes)


def sample_subgraph(g: Graph, size: int, rng: np.random.Generator) -> SubgraphSample:
    if size < 1:
        raise ValueError("subgraph size must be at least 1")
    if size >= g.n:
        return SubgraphSample(g, np.arange(g.n))
    nodes = np.sort(rng.choice(g.n, size=size, replace=False))
    return SubgraphSample(induced_subgraph(g, nodes), nodes)


# ---------------------------------------------------------------- batching


@dataclass(frozen=True)
class GraphBatch:
    graphs: tuple[Graph, ...]
    offsets: np.ndarray
    combined: Graph

    @property
    def sizes(self) -> np.ndarray:
        return np.diff(self.offsets)

    def member(self, k: int) -> Graph:
        lo, hi = self.offsets[k], self.offsets[k + 1]
        sub = induced_subgraph(self.combined, np.arange(lo, hi))
        return sub.replace(graph_label=self.graphs[k].graph_label)

    def block_support(self) -> tuple[np.ndarray, np.ndarray]:
        return block_pairs(self.offsets)


def block_pairs(offsets) -> tuple[np.ndarray, np.ndarray]:
    """Upper-triangular (i, j) pairs lying inside a diagonal block."""
    offsets = np.asarray(offsets, dtype=np.int64)
    rows, cols = [np.zeros(0, np.int64)], [np.zeros(0, np.int64)]
    for lo, hi in zip(offsets[:-1], offsets[1:]):
        r, c = np.triu_indices(hi - lo, 1)
        rows.append(r + lo)
        cols.append(c + lo)
    return np.concatenate(rows), np.concatenate(cols)


def combine_batch(graphs) -> GraphBatch:
    graphs = tuple(graphs)
    if not graphs:
        raise ValueError("empty batch")
    d = graphs[0].feature_dim
    if any(g.feature_dim != d for g in graphs):
        raise DimensionError("all graphs in a batch must share the feature width")
    sizes = np.array([g.n for g in graphs], dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    edges = [g.edges + off for g, off in zip(graphs, offsets[:-1])]
    labels = None
    if all(g.labels is not None for g in graphs):
        labels = np.concatenate([g.labels for g in graphs])
    combined = Graph(
        int(offsets[-1]),
        np.concatenate(edges) if edges else np.zeros((0, 2)),
        np.vstack([g.features for g in graphs]),
        labels,
    )
    return GraphBatch(graphs, offsets, combined)


# ---------------------------------------------------------------- synthetic


def generate_sbm(
    block_sizes,
    p_in: float,
    p_out: float,
    feature_dim: int,
    feature_noise: float,
    rng: np.random.Generator,
) -> Graph:
    """Stochastic block model with one-hot block features plus uniform noise."""
    block_sizes = [int(b) for b in block_sizes]
    if not p_in > p_out:
        raise ValueError("p_in must exceed p_out")
    if not (0 <= p_out and p_in <= 1):
        raise ValueError("edge probabilities must lie in [0, 1]")
    if feature_dim < len(block_sizes):
        raise DimensionError("feature_dim must be at least the number of blocks")
    labels = np.repeat(np.arange(len(block_sizes)), block_sizes)
    n = len(labels)
    r, c = np.triu_indices(n, 1)
    prob = np.where(labels[r] == labels[c], p_in, p_out)
    hit = rng.random(len(r)) < prob
    feats = np.zeros((n, feature_dim))
    feats[np.arange(n), labels] = 1.0
    if feature_noise > 0:
        feats += rng.uniform(-feature_noise, feature_noise, size=feats.shape)
    return Graph(n, np.stack([r[hit], c[hit]], axis=1), feats, labels, num_classes=len(block_sizes))


def clique_graph(n: int, feature_dim: int = 1) -> Graph:
    r, c = np.triu_indices(n, 1)
    return Graph(n, np.stack([r, c], axis=1), np.ones((n, feature_dim)))


def cycle_graph(n: int, feature_dim: int = 1) -> Graph:
    if n < 3:
        raise ValueError("a cycle needs at least three nodes")
    i = np.arange(n)
    e = np.sort(np.stack([i, (i + 1) % n], axis=1), axis=1)
    return Graph(n, e, np.ones((n, feature_dim)))
