"""Training loops for node-level and graph-level adversarial contrastive learning."""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import numkit as nk
from .adversary import AttackConfig, run_pgd
from .contrastive import LossBreakdown, SimilarityConfig, ariel_graph_total, ariel_total
from .encoders import GcnEncoder, GinEncoder, init_head
from .errors import DegenerateInputError, DimensionError, NumericError
from .graph import AugmentSpec, Graph, augment, combine_batch, sample_subgraph
from .graphio import atomic_write_text


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    learning_rate: float = 1e-3
    tau: float = 0.5
    eps1: float = 1.0
    eps2: float = 1.0
    gamma: float = 1.1
    period_T: int = 20
    p_drop1: float = 0.2
    p_drop2: float = 0.2
    p_mask1: float = 0.3
    p_mask2: float = 0.3
    subgraph_size: int = 500
    batch_size: int = 128
    hidden: int = 128
    out_dim: int = 128
    gin_width: int = 32
    gin_layers: int = 3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    attack: AttackConfig = field(default_factory=AttackConfig)
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.eps1 < 0 or self.eps2 < 0:
            raise ValueError("eps1 and eps2 must be non-negative")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if self.period_T < 1:
            raise ValueError("period_T must be at least 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.subgraph_size < 1:
            raise ValueError("subgraph_size must be positive")
        AugmentSpec(self.p_drop1, self.p_mask1)
        AugmentSpec(self.p_drop2, self.p_mask2)

    @property
    def view1(self) -> AugmentSpec:
        return AugmentSpec(self.p_drop1, self.p_mask1)

    @property
    def view2(self) -> AugmentSpec:
        return AugmentSpec(self.p_drop2, self.p_mask2)

    @property
    def similarity(self) -> SimilarityConfig:
        return SimilarityConfig(self.tau)

    def with_attack(self, **changes) -> "TrainConfig":
        return replace(self, attack=replace(self.attack, **changes))


GRAPH_LEVEL_DEFAULTS = dict(gamma=1.0, batch_size=128, attack=AttackConfig(delta_a_ratio=0.05, delta_x=0.04))


def curriculum_eps1(eps1_0: float, gamma: float, period: int, k: int) -> float:
    """eps1 in effect at iteration ``k`` (0-based)."""
    return eps1_0 * gamma ** (k // period)


# ------------------------------------------------------------------ optimizer


@dataclass
class OptimizerState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def optimizer_step(
    params: dict[str, np.ndarray],
    grads,
    state: OptimizerState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> dict[str, np.ndarray]:
    """Adam with bias correction. Updates ``params`` in place and returns it."""
    state.step += 1
    t = state.step
    for name, g in grads.items():
        if name not in params:
            raise KeyError(f"gradient for unknown parameter {name!r}")
        if g.shape != params[name].shape:
            raise DimensionError(f"gradient shape {g.shape} != parameter shape {params[name].shape} for {name}")
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m, v = np.zeros_like(g), np.zeros_like(g)
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        state.m[name], state.v[name] = m, v
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        params[name] = params[name] - lr * m_hat / (np.sqrt(v_hat) + eps)
    return params


# ------------------------------------------------------------------ logging


LOG_FIELDS = ("iteration", "l_con", "l_adv", "l_ir", "total", "eps1", "seconds")


@dataclass
class TrainLog:
    records: list[dict] = field(default_factory=list)

    def append(self, iteration: int, br: LossBreakdown, seconds: float) -> None:
        self.records.append(
            dict(
                iteration=iteration,
                l_con=br.l_con,
                l_adv=br.l_adv,
                l_ir=br.l_ir,
                total=br.total,
                eps1=br.eps1,
                seconds=seconds,
            )
        )

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.records], dtype=float)

    def deterministic_view(self) -> list[tuple]:
        """Every logged field except wall time."""
        return [tuple(r[k] for k in LOG_FIELDS if k != "seconds") for r in self.records]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(LOG_FIELDS)
        for r in self.records:
            writer.writerow([r["iteration"]] + [repr(float(r[k])) for k in LOG_FIELDS[1:]])
        return buf.getvalue()

    def write_csv(self, path) -> None:
        atomic_write_text(path, self.to_csv())


class TrainingAborted(NumericError):
    def __init__(self, message: str, log: TrainLog, iteration: int):
        super().__init__(message)
        self.log = log
        self.iteration = iteration


# ------------------------------------------------------------------ helpers


def _variables(encoder, head):
    enc = {k: nk.variable(v, "enc." + k) for k, v in encoder.params.items()}
    hd = {k: nk.variable(v, "head." + k) for k, v in head.items()}
    return enc, hd


def _apply(encoder, head, grads, state, cfg: TrainConfig):
    params = {"enc." + k: v for k, v in encoder.params.items()}
    params.update({"head." + k: v for k, v in head.items()})
    optimizer_step(params, grads, state, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    for k in encoder.params:
        encoder.params[k] = params["enc." + k]
    for k in head:
        head[k] = params["head." + k]


def _check_finite(total, br, log, k):
    if not np.isfinite(total.value):
        raise TrainingAborted(f"non-finite loss at iteration {k}: {br.as_dict()}", log, k)


# ------------------------------------------------------------------ node level


def train_node_level(
    g: Graph,
    cfg: TrainConfig,
    encoder: GcnEncoder | None = None,
    head: dict | None = None,
    callback: Callable[[int, LossBreakdown], None] | None = None,
):
    """Adversarial contrastive training on sampled subgraphs of ``g``.

    Returns ``(encoder, head, log)``. One epoch is one sampled subgraph.
    """
    if g.n == 0:
        raise DegenerateInputError("graph has no nodes")
    rng = np.random.default_rng(cfg.seed)
    if encoder is None:
        encoder = GcnEncoder.create(g.feature_dim, cfg.hidden, cfg.out_dim, rng)
    if head is None:
        head = init_head(encoder.out_dim, rng)
    sim = cfg.similarity
    state = OptimizerState()
    log = TrainLog()
    eps1 = cfg.eps1
    for k in range(cfg.epochs):
        start = time.perf_counter()
        sub = sample_subgraph(g, cfg.subgraph_size, rng).subgraph
        g1 = augment(sub, cfg.view1, rng)
        g2 = augment(sub, cfg.view2, rng)
        anchor = encoder.forward(g1).value
        g_adv = run_pgd(sub, anchor, encoder, head, cfg.attack, sim, rng).graph

        enc_v, head_v = _variables(encoder, head)
        h1 = encoder.forward(g1, enc_v)
        h2 = encoder.forward(g2, enc_v)
        h_adv = encoder.forward(g_adv, enc_v)
        h_s = encoder.forward(sub, enc_v)
        total, br = ariel_total(h1, h2, h_adv, h_s, head_v, sim, eps1, cfg.eps2)
        _check_finite(total, br, log, k)
        grads = nk.backward(total, list(enc_v.values()) + list(head_v.values()))
        _apply(encoder, head, grads, state, cfg)

        log.append(k, br, time.perf_counter() - start)
        if callback is not None:
            callback(k, br)
        if (k + 1) % cfg.period_T == 0:
            eps1 *= cfg.gamma
    return encoder, head, log


# ------------------------------------------------------------------ graph level


def _batches(count: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(count)
    chunks = [order[i : i + batch_size] for i in range(0, count, batch_size)]
    if len(chunks) > 1 and len(chunks[-1]) < 2:
        chunks[-2] = np.concatenate([chunks[-2], chunks[-1]])
        chunks.pop()
    return chunks


def train_graph_level(
    dataset: list[Graph],
    cfg: TrainConfig,
    encoder: GinEncoder | None = None,
    head: dict | None = None,
    callback: Callable[[int, LossBreakdown], None] | None = None,
):
    """Batch-level adversarial contrastive training with a GIN encoder.

    An epoch is one shuffled pass over ``dataset``; the curriculum counts
    optimizer iterations.
    """
    if not dataset:
        raise DegenerateInputError("dataset is empty")
    if cfg.batch_size < 2 or len(dataset) < 2:
        raise DegenerateInputError("graph-level training needs batches of at least two graphs")
    rng = np.random.default_rng(cfg.seed)
    if encoder is None:
        encoder = GinEncoder.create(dataset[0].feature_dim, cfg.gin_width, rng, cfg.gin_layers)
    if head is None:
        head = init_head(encoder.out_dim, rng)
    sim = cfg.similarity
    state = OptimizerState()
    log = TrainLog()
    eps1 = cfg.eps1
    k = 0
    for _ in range(cfg.epochs):
        for idx in _batches(len(dataset), cfg.batch_size, rng):
            start = time.perf_counter()
            batch = combine_batch([dataset[i] for i in idx])
            plus = combine_batch([augment(dataset[i], cfg.view1, rng) for i in idx])
            offsets = batch.offsets
            anchor = encoder.graph_embeddings(plus.combined, offsets, update_stats=False).value
            adv = run_pgd(batch.combined, anchor, encoder, head, cfg.attack, sim, rng, offsets=offsets).graph

            enc_v, head_v = _variables(encoder, head)
            r = encoder.graph_embeddings(batch.combined, offsets, enc_v)
            r_plus = encoder.graph_embeddings(plus.combined, offsets, enc_v, update_stats=False)
            r_adv = encoder.graph_embeddings(adv, offsets, enc_v, update_stats=False)
            total, br = ariel_graph_total(r, r_plus, r_adv, head_v, sim, eps1, cfg.eps2)
            _check_finite(total, br, log, k)
            grads = nk.backward(total, list(enc_v.values()) + list(head_v.values()))
            _apply(encoder, head, grads, state, cfg)

            log.append(k, br, time.perf_counter() - start)
            if callback is not None:
                callback(k, br)
            k += 1
            if k % cfg.period_T == 0:
                eps1 *= cfg.gamma
    return encoder, head, log
