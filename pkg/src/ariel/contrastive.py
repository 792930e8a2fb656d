"""Contrastive objectives and the information regularizer.

Similarity is cosine on head-projected embeddings throughout. Each InfoNCE
term is evaluated as a log-sum-exp over its denominator minus the positive
logit, which stays finite for any temperature.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from . import numkit as nk
from .encoders import project
from .errors import DegenerateInputError, DimensionError
from .numkit import Tensor


@dataclass(frozen=True)
class SimilarityConfig:
    tau: float = 0.5

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("temperature must be positive")


@dataclass(frozen=True)
class LossBreakdown:
    l_con: float
    l_adv: float
    l_ir: float
    eps1: float
    eps2: float
    total: float

    def as_dict(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in ("l_con", "l_adv", "l_ir", "eps1", "eps2", "total")}


def cosine_matrix(z1, z2) -> Tensor:
    z1, z2 = nk.as_tensor(z1), nk.as_tensor(z2)
    if z1.shape[1] != z2.shape[1]:
        raise DimensionError("cosine_matrix inputs need equal widths")
    return nk.l2_normalize_rows(z1) @ nk.l2_normalize_rows(z2).T


def rowwise_cosine(z1, z2) -> Tensor:
    z1, z2 = nk.as_tensor(z1), nk.as_tensor(z2)
    if z1.shape != z2.shape:
        raise DimensionError("rowwise_cosine inputs need equal shapes")
    return nk.sum(nk.l2_normalize_rows(z1) * nk.l2_normalize_rows(z2), axis=1)


def _off_diagonal(n: int) -> np.ndarray:
    return ~np.eye(n, dtype=bool)


def infonce_terms(s_cross, s_self, tau: float) -> Tensor:
    """Per-anchor InfoNCE terms from similarity matrices.

    ``s_cross[i, j]`` = θ(anchor_i, other_j), positives on the diagonal;
    ``s_self[i, j]`` = θ(anchor_i, anchor_j), whose diagonal is excluded.
    """
    s_cross, s_self = nk.as_tensor(s_cross), nk.as_tensor(s_self)
    n = s_cross.shape[0]
    if n == 0:
        raise DegenerateInputError("contrastive loss needs at least one instance")
    logits = nk.concat([s_cross, s_self], axis=1) * (1.0 / tau)
    mask = np.concatenate([np.ones((n, n), bool), _off_diagonal(n)], axis=1)
    positives = nk.sum(s_cross * np.eye(n), axis=1) * (1.0 / tau)
    return nk.masked_logsumexp(logits, mask) - positives


def symmetric_infonce(s12, s11, s22, tau: float) -> Tensor:
    """(1/2n) Σ_i [l(u_i, v_i) + l(v_i, u_i)] from the three similarity matrices."""
    s12 = nk.as_tensor(s12)
    forward = infonce_terms(s12, s11, tau)
    reverse = infonce_terms(s12.T, s22, tau)
    n = s12.shape[0]
    return nk.sum(forward + reverse) * (0.5 / n)


def _node_loss_projected(z1: Tensor, z2: Tensor, tau: float) -> Tensor:
    if z1.shape != z2.shape:
        raise DimensionError("both views need the same shape")
    if z1.shape[0] == 0:
        raise DegenerateInputError("contrastive loss needs at least one node")
    n1, n2 = nk.l2_normalize_rows(z1), nk.l2_normalize_rows(z2)
    return symmetric_infonce(n1 @ n2.T, n1 @ n1.T, n2 @ n2.T, tau)


def _graph_loss_projected(r: Tensor, r_plus: Tensor, tau: float) -> Tensor:
    if r.shape != r_plus.shape:
        raise DimensionError("both batches need the same shape")
    if r.shape[0] == 0:
        raise DegenerateInputError("contrastive loss needs at least one graph")
    a, b = nk.l2_normalize_rows(r), nk.l2_normalize_rows(r_plus)
    return nk.mean(infonce_terms(a @ b.T, a @ a.T, tau))


def _info_reg_projected(z1: Tensor, z2: Tensor, z: Tensor) -> Tensor:
    if not (z1.shape[0] == z2.shape[0] == z.shape[0]):
        raise DimensionError("information regularization needs matched rows")
    d = 2.0 * rowwise_cosine(z1, z2) - (rowwise_cosine(z2, z) + rowwise_cosine(z1, z))
    return nk.mean(nk.relu(d))


def node_contrastive_loss(h1, h2, head: Mapping, cfg: SimilarityConfig) -> Tensor:
    h1, h2 = nk.as_tensor(h1), nk.as_tensor(h2)
    if h1.shape != h2.shape:
        raise DimensionError("both views need the same shape")
    if h1.shape[0] == 0:
        raise DegenerateInputError("contrastive loss needs at least one node")
    return _node_loss_projected(project(h1, head), project(h2, head), cfg.tau)


def graph_contrastive_loss(r, r_plus, head: Mapping, cfg: SimilarityConfig) -> Tensor:
    """One-directional batch InfoNCE anchored on ``r``."""
    r, r_plus = nk.as_tensor(r), nk.as_tensor(r_plus)
    if r.shape != r_plus.shape:
        raise DimensionError("both batches need the same shape")
    if r.shape[0] == 0:
        raise DegenerateInputError("contrastive loss needs at least one graph")
    return _graph_loss_projected(project(r, head), project(r_plus, head), cfg.tau)


def info_regularization(h1, h2, h, head: Mapping, cfg: SimilarityConfig | None = None) -> Tensor:
    """mean_i max(0, 2θ(h1_i, h2_i) - θ(h2_i, h_i) - θ(h1_i, h_i)).

    θ here carries no temperature; ``cfg`` is accepted for signature symmetry.
    """
    h1, h2, h = nk.as_tensor(h1), nk.as_tensor(h2), nk.as_tensor(h)
    if not (h1.shape[0] == h2.shape[0] == h.shape[0]):
        raise DimensionError("information regularization needs matched rows")
    return _info_reg_projected(project(h1, head), project(h2, head), project(h, head))


def _check_coefficients(eps1, eps2):
    if eps1 < 0 or eps2 < 0:
        raise ValueError("loss coefficients must be non-negative")


def ariel_total(h1, h2, h_adv, h, head, cfg: SimilarityConfig, eps1: float, eps2: float):
    """Node-level objective L_con(G1,G2) + eps1 L_con(G1,G_adv) + eps2 L_I(G1,G2,G).

    Returns the differentiable total and its :class:`LossBreakdown`.
    """
    _check_coefficients(eps1, eps2)
    z1, z2, za, z = (project(t, head) for t in (h1, h2, h_adv, h))
    l_con = _node_loss_projected(z1, z2, cfg.tau)
    l_adv = _node_loss_projected(z1, za, cfg.tau)
    l_ir = _info_reg_projected(z1, z2, z)
    total = l_con + eps1 * l_adv + eps2 * l_ir
    return total, _breakdown(l_con, l_adv, l_ir, eps1, eps2, total)


def ariel_graph_total(r, r_plus, r_adv, head, cfg: SimilarityConfig, eps1: float, eps2: float):
    """Graph-level objective L_con(B,B+) + eps1 L_con(B+,B_adv) + eps2 L_I(B,B+,B_adv).

    The regularizer compares B+ with B_adv and anchors both on the clean batch B.
    """
    _check_coefficients(eps1, eps2)
    z, zp, za = (project(t, head) for t in (r, r_plus, r_adv))
    l_con = _graph_loss_projected(z, zp, cfg.tau)
    l_adv = _graph_loss_projected(zp, za, cfg.tau)
    l_ir = _info_reg_projected(zp, za, z)
    total = l_con + eps1 * l_adv + eps2 * l_ir
    return total, _breakdown(l_con, l_adv, l_ir, eps1, eps2, total)


def _breakdown(l_con, l_adv, l_ir, eps1, eps2, total) -> LossBreakdown:
    return LossBreakdown(
        float(l_con.value), float(l_adv.value), float(l_ir.value), float(eps1), float(eps2), float(total.value)
    )
