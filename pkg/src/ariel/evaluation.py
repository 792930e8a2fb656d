"""Embedding extraction, linear probes and the degradation study."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .encoders import GcnEncoder, GinEncoder
from .errors import DegenerateInputError, DimensionError
from .graph import Graph, combine_batch, degrade_step

L2_GRID = (1e-4, 1e-3, 1e-2, 1e-1)


# ------------------------------------------------------------------ embeddings


def embed(g: Graph, encoder) -> np.ndarray:
    """Raw encoder output on the full graph, batch norm in eval mode."""
    if g.feature_dim != encoder.in_dim:
        raise DimensionError(f"encoder expects {encoder.in_dim} features, graph has {g.feature_dim}")
    return encoder.forward(g, mode="eval", update_stats=False).value.copy()


def embed_graphs(dataset: Sequence[Graph], encoder: GinEncoder, batch_size: int = 256) -> np.ndarray:
    """Readout embedding per graph (eval mode, so batching does not matter)."""
    rows = []
    for lo in range(0, len(dataset), batch_size):
        chunk = list(dataset[lo : lo + batch_size])
        if any(g.feature_dim != encoder.in_dim for g in chunk):
            raise DimensionError("dataset feature width does not match the encoder")
        batch = combine_batch(chunk)
        rows.append(encoder.graph_embeddings(batch.combined, batch.offsets, mode="eval", update_stats=False).value)
    return np.vstack(rows)


# ------------------------------------------------------------------ splits


@dataclass(frozen=True)
class Split:
    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray


def random_split(n: int, fractions=(0.1, 0.1), rng: np.random.Generator | None = None) -> Split:
    if n < 10:
        raise DegenerateInputError("need at least 10 items to split")
    f_train, f_valid = fractions
    if f_train < 0 or f_valid < 0 or f_train + f_valid > 1:
        raise ValueError("fractions must be non-negative and sum to at most 1")
    rng = rng or np.random.default_rng()
    order = rng.permutation(n)
    a = int(np.floor(f_train * n))
    b = a + int(np.floor(f_valid * n))
    return Split(order[:a], order[a:b], order[b:])


def kfold_splits(n: int, folds: int, rng: np.random.Generator) -> list[Split]:
    """Each fold is the test set once; the next fold validates, the rest train."""
    if folds < 3 or n < folds:
        raise DegenerateInputError("k-fold needs at least 3 folds and one item per fold")
    parts = np.array_split(rng.permutation(n), folds)
    out = []
    for k in range(folds):
        v = (k + 1) % folds
        train = np.concatenate([parts[j] for j in range(folds) if j not in (k, v)])
        out.append(Split(train, parts[v], parts[k]))
    return out


# ------------------------------------------------------------------ probe


def _softmax_regression(x, y, classes, l2, iterations):
    n, d = x.shape
    xb = np.hstack([x, np.ones((n, 1))])
    onehot = np.eye(classes)[y]
    lipschitz = 0.5 * np.linalg.norm(xb, 2) ** 2 / n + l2
    lr = 1.0 / lipschitz
    w = np.zeros((d + 1, classes))
    look = w.copy()
    for t in range(iterations):
        logits = xb @ look
        logits -= logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        p /= p.sum(axis=1, keepdims=True)
        grad = xb.T @ (p - onehot) / n
        grad[:-1] += l2 * look[:-1]
        w_next = look - lr * grad
        look = w_next + (t / (t + 3)) * (w_next - w)
        w = w_next
    return w


def _predict(x, w):
    return np.argmax(np.hstack([x, np.ones((len(x), 1))]) @ w, axis=1)


@dataclass(frozen=True)
class ProbeResult:
    test_accuracy: float
    valid_accuracy: float
    l2: float


def linear_probe(
    h: np.ndarray,
    labels: np.ndarray,
    split: Split,
    l2_grid: Sequence[float] = L2_GRID,
    iterations: int = 500,
) -> ProbeResult:
    """Multinomial logistic regression on frozen embeddings.

    Features are standardized with training-split statistics; the L2 weight
    is chosen by validation accuracy, and test labels are only read for the
    final score.
    """
    h = np.asarray(h, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if h.ndim != 2 or len(h) != len(labels):
        raise DimensionError("embeddings and labels must have matching rows")
    y_train = labels[split.train]
    if len(np.unique(y_train)) < 2:
        raise DegenerateInputError("training split covers fewer than two classes")
    classes = int(labels.max()) + 1
    mu = h[split.train].mean(axis=0)
    sd = h[split.train].std(axis=0)
    sd[sd < 1e-12] = 1.0
    z = (h - mu) / sd
    valid_idx = split.valid if len(split.valid) else split.train
    best = None
    for l2 in l2_grid:
        w = _softmax_regression(z[split.train], y_train, classes, l2, iterations)
        acc = float(np.mean(_predict(z[valid_idx], w) == labels[valid_idx]))
        if best is None or acc > best[0]:
            best = (acc, l2, w)
    acc_v, l2, w = best
    acc_t = float(np.mean(_predict(z[split.test], w) == labels[split.test]))
    return ProbeResult(acc_t, acc_v, l2)


@dataclass
class EvalReport:
    dataset: str
    seed: int
    repetitions: int
    accuracy_mean: float
    accuracy_std: float
    per_split: list[dict] = field(default_factory=list)
    probe: dict = field(default_factory=dict)

    @classmethod
    def from_results(cls, results: Sequence[ProbeResult], dataset="", seed=0, probe=None) -> "EvalReport":
        accs = np.array([r.test_accuracy for r in results])
        per = [dict(split=i, **asdict(r)) for i, r in enumerate(results)]
        return cls(dataset, seed, len(results), float(accs.mean()), float(accs.std()), per, dict(probe or {}))

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=False) + "\n"


def evaluate_embeddings(
    h: np.ndarray,
    labels: np.ndarray,
    repetitions: int = 20,
    seed: int = 0,
    fractions=(0.1, 0.1),
    iterations: int = 500,
    dataset: str = "",
) -> EvalReport:
    rng = np.random.default_rng(seed)
    results = [
        linear_probe(h, labels, random_split(len(labels), fractions, rng), iterations=iterations)
        for _ in range(repetitions)
    ]
    probe = dict(kind="logistic", l2_grid=list(L2_GRID), iterations=iterations, fractions=list(fractions))
    return EvalReport.from_results(results, dataset, seed, probe)


def kfold_probe(
    h: np.ndarray, labels: np.ndarray, folds: int = 5, seed: int = 0, iterations: int = 500, dataset: str = ""
) -> EvalReport:
    rng = np.random.default_rng(seed)
    results = [linear_probe(h, labels, s, iterations=iterations) for s in kfold_splits(len(labels), folds, rng)]
    probe = dict(kind="logistic", l2_grid=list(L2_GRID), iterations=iterations, folds=folds)
    return EvalReport.from_results(results, dataset, seed, probe)


# ------------------------------------------------------------------ degradation


def _row_cosine(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    na = np.maximum(np.linalg.norm(a, axis=1), 1e-12)
    nb = np.maximum(np.linalg.norm(b, axis=1), 1e-12)
    return np.einsum("ij,ij->i", a, b) / (na * nb)


def vulnerability_study(
    g: Graph,
    encoder: GcnEncoder | GinEncoder | Callable[[Graph], np.ndarray],
    p: float = 0.03,
    steps: int = 60,
    rng: np.random.Generator | None = None,
) -> list[dict]:
    """Cosine similarity between each node's embedding on G_t and on G_0.

    G_t drops each surviving edge and masks each visible feature column of
    G_{t-1} with probability ``p``. Returns one row per step t = 0..steps.
    """
    if steps < 0:
        raise ValueError("steps must be non-negative")
    rng = rng or np.random.default_rng()
    fn = encoder if callable(encoder) and not hasattr(encoder, "forward") else (lambda graph: embed(graph, encoder))
    h0 = fn(g)
    rows = [dict(step=0, mean=1.0, std=0.0, edge_retention=1.0, edges=g.num_edges)]
    current, masked = g, frozenset()
    for t in range(1, steps + 1):
        current, masked = degrade_step(current, p, masked, rng)
        sims = _row_cosine(fn(current), h0)
        rows.append(
            dict(step=t, mean=float(sims.mean()), std=float(sims.std()), edge_retention=(1 - p) ** t, edges=current.num_edges)
        )
    return rows


def curve_to_csv(rows: list[dict]) -> str:
    lines = ["step,mean,std,edge_retention"]
    lines += [f"{r['step']},{r['mean']!r},{r['std']!r},{r['edge_retention']!r}" for r in rows]
    return "\n".join(lines) + "\n"


# ------------------------------------------------------------------ training diagnostics


def late_slope(values: Sequence[float], window: int = 100) -> float:
    """Least-squares slope of the last ``window`` values; ``nan`` if any is non-finite."""
    tail = np.asarray(values, dtype=float)[-window:]
    if len(tail) < 2:
        raise DegenerateInputError("need at least two values for a slope")
    if not np.all(np.isfinite(tail)):
        return float("nan")
    return float(np.polyfit(np.arange(len(tail)), tail, 1)[0])


def run_unstable(values: Sequence[float], window: int = 100) -> bool:
    """A run is unstable when its loss is non-finite or not decreasing over the last ``window`` iterations."""
    slope = late_slope(values, window)
    return not slope < 0
