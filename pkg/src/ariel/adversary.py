"""PGD generation of the adversarial view.

Edge flips are relaxed to ``L̃ ∈ [0, 1]`` over a support of candidate pairs
(every pair i<j for a single graph, only intra-graph pairs for a batch). Each
step ascends the contrastive loss, projects ``L̃`` onto the box-plus-budget
set by bisection on the dual variable, and clips the feature perturbation to
the l∞ ball. The final relaxed matrix is discretized by Bernoulli sampling.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numkit as nk
from .contrastive import SimilarityConfig, _graph_loss_projected, _node_loss_projected
from .encoders import project, readout
from .errors import NumericError
from .graph import Graph, block_pairs
from .numkit import SparseSymmetric, Tensor


@dataclass(frozen=True)
class AttackConfig:
    steps: int = 5
    alpha: float = 0.01
    beta: float = 0.01
    delta_a_ratio: float = 0.1
    delta_x: float = 0.5
    bisect_tol: float = 1e-6
    bisect_max_iter: int = 50
    per_graph_budget: bool = False

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError("steps must be non-negative")
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError("step sizes must be positive")
        if not (self.bisect_tol > 0 and self.bisect_max_iter > 0):
            raise ValueError("bisection tolerances must be positive")
        if self.delta_a_ratio < 0 or self.delta_x < 0:
            raise ValueError("budgets must be non-negative")


@dataclass
class EdgePerturbation:
    """Relaxed (or sampled) flip indicators on the support pairs ``rows < cols``."""

    n: int
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray

    def dense(self) -> np.ndarray:
        return SparseSymmetric(self.n, self.rows, self.cols, self.values, check=False).densify()

    @property
    def total(self) -> float:
        return float(self.values.sum())


@dataclass
class AttackResult:
    graph: Graph
    relaxed: EdgePerturbation
    flips: EdgePerturbation
    feature_delta: np.ndarray
    losses: list[float] = field(default_factory=list)


# ---------------------------------------------------------------- primitives


def all_pairs(n: int) -> tuple[np.ndarray, np.ndarray]:
    return np.triu_indices(n, 1)


def adjacency_on_support(g: Graph, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """A[i, j] for each support pair."""
    keys = rows.astype(np.int64) * g.n + cols
    edge_keys = g.edges[:, 0] * g.n + g.edges[:, 1]
    return np.isin(keys, edge_keys).astype(np.float64)


def flip_mask(a: SparseSymmetric) -> SparseSymmetric:
    """C = Ā - A: +1 on absent pairs, -1 on present edges, over every pair i<j."""
    n = a.n
    rows, cols = all_pairs(n)
    dense = a.densify()
    present = dense[rows, cols]
    return SparseSymmetric(n, rows, cols, 1.0 - 2.0 * present, check=False)


def apply_perturbation(
    a_vals: np.ndarray,
    c_vals: np.ndarray,
    relaxed,
    x: np.ndarray,
    lx,
    n: int,
    rows: np.ndarray,
    cols: np.ndarray,
) -> tuple[SparseSymmetric, Tensor]:
    """(A + C∘L̃, X + L_X) on the support; differentiable in ``relaxed`` and ``lx``."""
    values = nk.add(a_vals, nk.mul(c_vals, relaxed))
    return SparseSymmetric(n, rows, cols, values, check=False), nk.add(x, lx)


def project_edge_budget(z, delta: float, tol: float = 1e-6, max_iter: int = 50) -> np.ndarray:
    """Euclidean projection onto {L : 0 <= L <= 1, ΣL <= delta}.

    Uses the clipped point when it is already within budget; otherwise
    bisects for the shift μ > 0 with Σ clip(z - μ, 0, 1) = delta.
    """
    z = np.asarray(z, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise NumericError("projection input must be finite")
    if delta < 0:
        raise ValueError("budget must be non-negative")
    clipped = np.clip(z, 0.0, 1.0)
    if clipped.sum() <= delta:
        return clipped
    lo, hi = 0.0, float(z.max())
    mu = hi
    for _ in range(max_iter):
        mu = 0.5 * (lo + hi)
        gap = np.clip(z - mu, 0.0, 1.0).sum() - delta
        if abs(gap) <= tol:
            break
        if gap > 0:
            lo = mu
        else:
            hi = mu
    else:
        # stay on the feasible side of the bracket
        mu = hi
    return np.clip(z - mu, 0.0, 1.0)


def clip_feature_perturbation(lx, delta_x: float) -> np.ndarray:
    if delta_x < 0:
        raise ValueError("delta_x must be non-negative")
    return np.clip(np.asarray(lx, dtype=np.float64), -delta_x, delta_x)


def sample_discrete(relaxed: EdgePerturbation, rng: np.random.Generator) -> EdgePerturbation:
    """Independent Bernoulli draw per upper-triangular entry."""
    p = relaxed.values
    if np.any(p < 0) or np.any(p > 1):
        raise ValueError("relaxed entries must lie in [0, 1]")
    flips = (rng.random(p.shape) < p).astype(np.float64)
    return EdgePerturbation(relaxed.n, relaxed.rows, relaxed.cols, flips)


def apply_flips(g: Graph, flips: EdgePerturbation, feature_delta: np.ndarray | None = None) -> Graph:
    a = adjacency_on_support(g, flips.rows, flips.cols)
    touched = flips.values > 0
    keep = np.ones(g.num_edges, dtype=bool)
    if touched.any():
        removed = touched & (a > 0)
        removed_keys = flips.rows[removed] * g.n + flips.cols[removed]
        keep = ~np.isin(g.edges[:, 0] * g.n + g.edges[:, 1], removed_keys)
        added = touched & (a == 0)
        new = np.stack([flips.rows[added], flips.cols[added]], axis=1)
        edges = np.concatenate([g.edges[keep], new])
    else:
        edges = g.edges
    feats = g.features if feature_delta is None else g.features + feature_delta
    return g.replace(edges=edges, features=feats)


# ---------------------------------------------------------------- attack


def _budgets(g: Graph, offsets, rows, cfg: AttackConfig):
    """Edge budget(s): the literal Σ_ij A[i,j] (each edge counted twice) times the ratio."""
    if offsets is None or not cfg.per_graph_budget:
        return None, cfg.delta_a_ratio * 2.0 * g.num_edges
    offsets = np.asarray(offsets)
    block_of_pair = np.searchsorted(offsets, rows, side="right") - 1
    block_of_edge = np.searchsorted(offsets, g.edges[:, 0], side="right") - 1
    counts = np.bincount(block_of_edge, minlength=len(offsets) - 1)
    return block_of_pair, cfg.delta_a_ratio * 2.0 * counts


def _project(z, block_of_pair, budget, cfg: AttackConfig):
    if block_of_pair is None:
        return project_edge_budget(z, budget, cfg.bisect_tol, cfg.bisect_max_iter)
    out = np.empty_like(z)
    for b, delta in enumerate(budget):
        sel = block_of_pair == b
        if sel.any():
            out[sel] = project_edge_budget(z[sel], delta, cfg.bisect_tol, cfg.bisect_max_iter)
    return out


def run_pgd(
    g: Graph,
    anchor,
    encoder,
    head,
    cfg: AttackConfig,
    sim: SimilarityConfig,
    rng: np.random.Generator,
    offsets=None,
    support=None,
) -> AttackResult:
    """Maximize the contrastive loss against ``anchor`` by perturbing ``g``.

    ``anchor`` is the fixed embedding of the reference view: node embeddings
    of G1 (node level) or readout embeddings of B+ (graph level, when
    ``offsets`` is given). Encoder and head weights are held constant; GIN
    batch norm uses batch statistics without touching its running state.
    """
    n, d = g.n, g.feature_dim
    if support is None:
        support = all_pairs(n) if offsets is None else block_pairs(offsets)
    rows, cols = (np.asarray(s, dtype=np.int64) for s in support)
    a_vals = adjacency_on_support(g, rows, cols)
    c_vals = 1.0 - 2.0 * a_vals
    block_of_pair, budget = _budgets(g, offsets, rows, cfg)

    # the anchor view is a fixed target, never differentiated
    z_anchor = project(np.asarray(nk.as_tensor(anchor).value), head)
    relaxed = np.zeros(len(rows))
    lx = np.zeros((n, d))
    losses = []
    for _ in range(cfg.steps):
        lt, lxt = nk.variable(relaxed, "L_A"), nk.variable(lx, "L_X")
        adj, x_adv = apply_perturbation(a_vals, c_vals, lt, g.features, lxt, n, rows, cols)
        prepared = encoder.prepare(adj)
        if offsets is None:
            h_adv = encoder.forward_adj(prepared, x_adv, mode="train", update_stats=False)
            loss = _node_loss_projected(z_anchor, project(h_adv, head), sim.tau)
        else:
            layers = encoder.layers(prepared, x_adv, mode="train", update_stats=False)
            loss = _graph_loss_projected(z_anchor, project(readout(layers, offsets), head), sim.tau)
        if not np.isfinite(loss.value):
            raise NumericError("attack loss is not finite")
        losses.append(float(loss.value))
        grads = nk.backward(loss, [lt, lxt])
        relaxed = _project(relaxed + cfg.alpha * grads["L_A"], block_of_pair, budget, cfg)
        lx = clip_feature_perturbation(lx + cfg.beta * np.sign(grads["L_X"]), cfg.delta_x)

    relaxed_p = EdgePerturbation(n, rows, cols, relaxed)
    flips = sample_discrete(relaxed_p, rng)
    return AttackResult(apply_flips(g, flips, lx if cfg.steps else None), relaxed_p, flips, lx, losses)


def pgd_attack(g, anchor, encoder, head, cfg, sim, rng, offsets=None) -> Graph:
    return run_pgd(g, anchor, encoder, head, cfg, sim, rng, offsets).graph
