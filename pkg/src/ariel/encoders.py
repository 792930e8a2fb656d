"""Two-layer GCN, three-layer GIN with mean-pool readout, and the projection head.

Parameters live in plain ``dict[str, np.ndarray]`` objects so the optimizer
and checkpoint code can walk them by name. Forward functions accept either
those arrays or :class:`~ariel.numkit.Tensor` views of them; passing tensors
created with :func:`~ariel.numkit.variable` makes the output differentiable
with respect to the weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import numkit as nk
from .errors import DegenerateInputError, DimensionError
from .graph import Graph, normalize_adjacency
from .numkit import BatchNormState, SparseSymmetric, Tensor


def glorot(fan_in: int, fan_out: int, rng: np.random.Generator) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def _check_dims(*dims):
    if any(int(d) < 1 for d in dims):
        raise ValueError("layer widths must be positive")


def init_gcn(in_dim: int, hidden: int, out_dim: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
    _check_dims(in_dim, hidden, out_dim)
    return {"W1": glorot(in_dim, hidden, rng), "W2": glorot(hidden, out_dim, rng)}


def init_head(width: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
    _check_dims(width)
    return {
        "W1": glorot(width, width, rng),
        "b1": np.zeros(width),
        "W2": glorot(width, width, rng),
        "b2": np.zeros(width),
    }


def init_gin(in_dim: int, width: int, rng: np.random.Generator, layers: int = 3) -> dict[str, np.ndarray]:
    _check_dims(in_dim, width, layers)
    params = {}
    d = in_dim
    for k in range(layers):
        params[f"L{k}.W1"] = glorot(d, width, rng)
        params[f"L{k}.b1"] = np.zeros(width)
        params[f"L{k}.W2"] = glorot(width, width, rng)
        params[f"L{k}.b2"] = np.zeros(width)
        params[f"L{k}.scale"] = np.ones(width)
        params[f"L{k}.shift"] = np.zeros(width)
        d = width
    return params


def _get(p: Mapping, key: str) -> Tensor:
    return nk.as_tensor(p[key])


# ------------------------------------------------------------------ GCN


def gcn_forward(adj_hat: SparseSymmetric, x, p: Mapping, activation: str = "relu") -> Tensor:
    """act(Â act(Â X W1) W2)."""
    x = nk.as_tensor(x)
    w1, w2 = _get(p, "W1"), _get(p, "W2")
    if x.shape[1] != w1.shape[0] or w1.shape[1] != w2.shape[0]:
        raise DimensionError(f"GCN shapes: x {x.shape}, W1 {w1.shape}, W2 {w2.shape}")
    hidden = nk.elementwise(nk.spmm(adj_hat, x @ w1), activation)
    return nk.elementwise(nk.spmm(adj_hat, hidden @ w2), activation)


# ------------------------------------------------------------------ GIN


@dataclass
class GinStats:
    """Running batch-norm statistics, one state per GIN layer."""

    layers: list[BatchNormState] = field(default_factory=list)

    @classmethod
    def fresh(cls, width: int, layers: int = 3) -> "GinStats":
        return cls([BatchNormState.fresh(width) for _ in range(layers)])

    def copy(self) -> "GinStats":
        return GinStats([s.copy() for s in self.layers])


def gin_layer_count(p: Mapping) -> int:
    return len({k.split(".")[0] for k in p if k.startswith("L")})


def gin_forward(
    adj: SparseSymmetric,
    x,
    p: Mapping,
    stats: GinStats,
    mode: str = "train",
    update_stats: bool = True,
    mlp: str = "relu",
) -> list[Tensor]:
    """Per-layer outputs X^(1..L) of a GIN with epsilon fixed at 0.

    Each layer is h(A X): Linear -> act -> Linear, then act, then batch norm.
    ``mlp="identity"`` replaces the whole of h by the identity (a test hook).
    """
    h = nk.as_tensor(x)
    outs = []
    for k in range(gin_layer_count(p)):
        agg = nk.spmm(adj, h)
        if mlp == "identity":
            h = agg
        else:
            w1 = _get(p, f"L{k}.W1")
            if agg.shape[1] != w1.shape[0]:
                raise DimensionError(f"GIN layer {k}: input width {agg.shape[1]} vs {w1.shape[0]}")
            z = nk.elementwise(agg @ w1 + _get(p, f"L{k}.b1"), mlp)
            z = z @ _get(p, f"L{k}.W2") + _get(p, f"L{k}.b2")
            z = nk.elementwise(z, mlp)
            h = nk.batch_norm(
                z, _get(p, f"L{k}.scale"), _get(p, f"L{k}.shift"), mode, stats.layers[k], update_stats
            )
        outs.append(h)
    return outs


def readout(per_layer: list, offsets) -> Tensor:
    """Concat over layers of each graph's mean node embedding; one row per graph."""
    offsets = np.asarray(offsets, dtype=np.int64)
    sizes = np.diff(offsets)
    if np.any(sizes <= 0):
        raise DegenerateInputError("every graph in the batch needs at least one node")
    total = int(offsets[-1])
    pool = np.zeros((len(sizes), total))
    for b, (lo, hi) in enumerate(zip(offsets[:-1], offsets[1:])):
        pool[b, lo:hi] = 1.0 / (hi - lo)
    layers = [nk.as_tensor(t) for t in per_layer]
    if any(t.shape[0] != total for t in layers):
        raise DimensionError("offsets do not partition the embedding rows")
    pooled = [nk.matmul(pool, t) for t in layers]
    return nk.concat(pooled, axis=1)


# ------------------------------------------------------------------ head


def project(h, head: Mapping, activation: str = "relu") -> Tensor:
    """W2 · act(W1 · h + b1) + b2. Only the losses see projected embeddings."""
    h = nk.as_tensor(h)
    w1 = _get(head, "W1")
    if h.shape[1] != w1.shape[0]:
        raise DimensionError(f"head expects width {w1.shape[0]}, got {h.shape[1]}")
    z = nk.elementwise(h @ w1 + _get(head, "b1"), activation)
    return z @ _get(head, "W2") + _get(head, "b2")


# ------------------------------------------------------------------ wrappers


@dataclass
class GcnEncoder:
    params: dict[str, np.ndarray]
    activation: str = "relu"

    kind = "gcn"

    @classmethod
    def create(cls, in_dim, hidden=128, out_dim=128, rng=None, activation="relu"):
        return cls(init_gcn(in_dim, hidden, out_dim, rng or np.random.default_rng(0)), activation)

    @property
    def in_dim(self) -> int:
        return self.params["W1"].shape[0]

    @property
    def out_dim(self) -> int:
        return self.params["W2"].shape[1]

    def forward_adj(self, adj_hat: SparseSymmetric, x, p=None, mode="train", update_stats=True) -> Tensor:
        return gcn_forward(adj_hat, x, self.params if p is None else p, self.activation)

    def forward(self, g: Graph, p=None, mode="train", update_stats=True) -> Tensor:
        return self.forward_adj(normalize_adjacency(g), g.features, p)

    def prepare(self, adj: SparseSymmetric) -> SparseSymmetric:
        """Adjacency transform applied before message passing."""
        return normalize_adjacency(adj)


@dataclass
class GinEncoder:
    params: dict[str, np.ndarray]
    stats: GinStats
    activation: str = "relu"

    kind = "gin"

    @classmethod
    def create(cls, in_dim, width=32, rng=None, layers=3, activation="relu"):
        params = init_gin(in_dim, width, rng or np.random.default_rng(0), layers)
        return cls(params, GinStats.fresh(width, layers), activation)

    @property
    def in_dim(self) -> int:
        return self.params["L0.W1"].shape[0]

    @property
    def out_dim(self) -> int:
        return sum(self.params[f"L{k}.W2"].shape[1] for k in range(gin_layer_count(self.params)))

    def layers(self, adj, x, p=None, mode="train", update_stats=True) -> list[Tensor]:
        return gin_forward(adj, x, self.params if p is None else p, self.stats, mode, update_stats, self.activation)

    def forward_adj(self, adj, x, p=None, mode="train", update_stats=True) -> Tensor:
        return nk.concat(self.layers(adj, x, p, mode, update_stats), axis=1)

    def forward(self, g: Graph, p=None, mode="train", update_stats=True) -> Tensor:
        return self.forward_adj(g.adjacency, g.features, p, mode, update_stats)

    def prepare(self, adj: SparseSymmetric) -> SparseSymmetric:
        return adj

    def graph_embeddings(self, g: Graph, offsets, p=None, mode="train", update_stats=True) -> Tensor:
        return readout(self.layers(g.adjacency, g.features, p, mode, update_stats), offsets)
