import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ariel import numkit as nk
from ariel.contrastive import (
    SimilarityConfig,
    ariel_graph_total,
    ariel_total,
    cosine_matrix,
    graph_contrastive_loss,
    info_regularization,
    node_contrastive_loss,
)
from ariel.encoders import init_head, project
from ariel.errors import DimensionError


def identity_head(w):
    return {"W1": np.eye(w), "b1": np.zeros(w), "W2": np.eye(w), "b2": np.zeros(w)}


def linear_head(w, rng):
    """Head whose hidden layer stays active for any input row."""
    return {"W1": np.eye(w), "b1": np.full(w, 50.0), "W2": rng.normal(size=(w, w)), "b2": rng.normal(size=w)}


# ---------------------------------------------------------------- scalar oracles


def cos(u, v):
    return sum(a * b for a, b in zip(u, v)) / (math.sqrt(sum(a * a for a in u)) * math.sqrt(sum(b * b for b in v)))


def pair_term(u, v, i, tau):
    """-log of the positive over positive + inter-view + intra-view negatives."""
    pos = math.exp(cos(u[i], v[i]) / tau)
    inter = sum(math.exp(cos(u[i], v[k]) / tau) for k in range(len(u)) if k != i)
    intra = sum(math.exp(cos(u[i], u[k]) / tau) for k in range(len(u)) if k != i)
    return -math.log(pos / (pos + inter + intra))


def node_loss_oracle(z1, z2, tau):
    n = len(z1)
    return sum(pair_term(z1, z2, i, tau) + pair_term(z2, z1, i, tau) for i in range(n)) / (2 * n)


def graph_loss_oracle(r, rp, tau):
    return sum(pair_term(r, rp, i, tau) for i in range(len(r))) / len(r)


def info_oracle(z1, z2, z):
    d = [max(0.0, 2 * cos(a, b) - cos(b, c) - cos(a, c)) for a, b, c in zip(z1, z2, z)]
    return sum(d) / len(d)


def rows(m):
    return [list(map(float, r)) for r in m]


# ---------------------------------------------------------------- similarity


def test_cosine_self_and_orthogonal():
    u = np.array([[1.0, 2.0, 3.0]])
    assert cosine_matrix(u, u).value[0, 0] == pytest.approx(1.0)
    assert cosine_matrix(np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]])).value[0, 0] == 0.0


def test_cosine_matches_scalar_loop():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=(5, 4)), rng.normal(size=(6, 4))
    s = cosine_matrix(a, b).value
    for i in range(5):
        for j in range(6):
            assert abs(s[i, j] - cos(a[i], b[j])) <= 1e-12


def test_cosine_width_mismatch():
    with pytest.raises(DimensionError):
        cosine_matrix(np.ones((2, 3)), np.ones((2, 4)))


# ---------------------------------------------------------------- node loss


def test_node_loss_single_node_is_zero():
    h = np.array([[0.3, -0.2, 1.0]])
    assert node_contrastive_loss(h, h * 2, init_head(3, np.random.default_rng(0)), SimilarityConfig()).value == 0.0


def test_node_loss_two_identical_views():
    h = np.array([[1.0, 0.0], [1.0, 1.0]])
    got = float(node_contrastive_loss(h, h, identity_head(2), SimilarityConfig(1.0)).value)
    c = 1 / math.sqrt(2)
    # each term: -log(e / (e + 2 e^c))
    expect = -math.log(math.e / (math.e + 2 * math.exp(c)))
    assert got == pytest.approx(expect, abs=1e-12)
    assert got == pytest.approx(node_loss_oracle(rows(h), rows(h), 1.0), abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 7), st.floats(0.1, 2.0), st.integers(0, 2**31 - 1))
def test_node_loss_matches_oracle(n, tau, seed):
    rng = np.random.default_rng(seed)
    h1, h2 = rng.normal(size=(n, 3)), rng.normal(size=(n, 3))
    head = linear_head(3, rng)
    z1, z2 = project(h1, head).value, project(h2, head).value
    got = float(node_contrastive_loss(h1, h2, head, SimilarityConfig(tau)).value)
    assert got == pytest.approx(node_loss_oracle(rows(z1), rows(z2), tau), abs=1e-10)


def test_node_loss_is_scale_invariant_with_identity_head():
    rng = np.random.default_rng(1)
    h1, h2 = rng.normal(size=(5, 3)), rng.normal(size=(5, 3))
    head = identity_head(3)
    a = node_contrastive_loss(h1, h2, head, SimilarityConfig()).value
    b = node_contrastive_loss(3 * h1, 3 * h2, head, SimilarityConfig()).value
    assert a == pytest.approx(b, abs=1e-12)


def test_node_loss_is_symmetric_in_views():
    rng = np.random.default_rng(2)
    h1, h2 = rng.normal(size=(5, 3)), rng.normal(size=(5, 3))
    head = init_head(3, rng)
    a = node_contrastive_loss(h1, h2, head, SimilarityConfig()).value
    b = node_contrastive_loss(h2, h1, head, SimilarityConfig()).value
    assert a == pytest.approx(b, abs=1e-12)


def test_node_loss_stable_at_small_temperature():
    rng = np.random.default_rng(3)
    h = rng.normal(size=(6, 4))
    assert np.isfinite(node_contrastive_loss(h, h, init_head(4, rng), SimilarityConfig(1e-3)).value)


def test_temperature_must_be_positive():
    with pytest.raises(ValueError):
        SimilarityConfig(0.0)


# ---------------------------------------------------------------- graph loss


def test_graph_loss_single_graph_is_zero():
    r = np.array([[1.0, 2.0]])
    assert graph_contrastive_loss(r, r + 1, identity_head(2), SimilarityConfig()).value == 0.0


def test_graph_loss_hand_set_pair():
    r = np.array([[1.0, 0.0], [0.0, 1.0]])
    rp = np.array([[1.0, 1.0], [0.0, 1.0]])
    got = float(graph_contrastive_loss(r, rp, identity_head(2), SimilarityConfig(0.5)).value)
    c = 1 / math.sqrt(2)
    # anchor 0: pos c, inter-view 0, intra 0 / anchor 1: pos 1, inter c, intra 0
    t0 = -math.log(math.exp(c / 0.5) / (math.exp(c / 0.5) + 1 + 1))
    t1 = -math.log(math.exp(2) / (math.exp(2) + math.exp(c / 0.5) + 1))
    assert got == pytest.approx((t0 + t1) / 2, abs=1e-12)
    assert got == pytest.approx(graph_loss_oracle(rows(r), rows(rp), 0.5), abs=1e-12)


def test_graph_loss_permutation_invariant():
    rng = np.random.default_rng(4)
    r, rp = rng.normal(size=(6, 3)), rng.normal(size=(6, 3))
    head = init_head(3, rng)
    perm = rng.permutation(6)
    a = graph_contrastive_loss(r, rp, head, SimilarityConfig()).value
    b = graph_contrastive_loss(r[perm], rp[perm], head, SimilarityConfig()).value
    assert a == pytest.approx(b, abs=1e-12)


# ---------------------------------------------------------------- information regularizer


def test_info_reg_equal_views_is_zero():
    h = np.random.default_rng(5).normal(size=(4, 3))
    assert info_regularization(h, h, h, init_head(3, np.random.default_rng(0))).value == 0.0


def test_info_reg_direct_substitution():
    # theta(h1, h2) = 1.0, theta(h2, h) = theta(h1, h) = 0.2 -> 2.0 - 0.4
    h1 = np.array([[1.0, 0.0]])
    h = np.array([[0.2, math.sqrt(1 - 0.04)]])
    got = info_regularization(h1, h1, h, identity_head(2)).value
    assert float(got) == pytest.approx(1.6, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**31 - 1))
def test_info_reg_matches_oracle_and_is_nonnegative(n, seed):
    rng = np.random.default_rng(seed)
    h1, h2, h = (rng.normal(size=(n, 3)) for _ in range(3))
    head = linear_head(3, rng)
    z = [rows(project(t, head).value) for t in (h1, h2, h)]
    got = float(info_regularization(h1, h2, h, head).value)
    assert got >= 0
    assert got == pytest.approx(info_oracle(*z), abs=1e-12)


# ---------------------------------------------------------------- totals


def test_total_recomposes():
    rng = np.random.default_rng(6)
    h1, h2, ha, h = (rng.normal(size=(4, 3)) for _ in range(4))
    head = init_head(3, rng)
    cfg = SimilarityConfig(0.7)
    total, br = ariel_total(h1, h2, ha, h, head, cfg, 1.3, 0.4)
    l_con = float(node_contrastive_loss(h1, h2, head, cfg).value)
    l_adv = float(node_contrastive_loss(h1, ha, head, cfg).value)
    l_ir = float(info_regularization(h1, h2, h, head).value)
    assert br.total == pytest.approx(l_con + 1.3 * l_adv + 0.4 * l_ir, abs=1e-12)
    assert (br.l_con, br.l_adv, br.l_ir) == pytest.approx((l_con, l_adv, l_ir), abs=1e-12)
    assert float(total.value) == br.total


def test_total_with_zero_eps1_drops_adversarial_term():
    rng = np.random.default_rng(7)
    h1, h2, ha, h = (rng.normal(size=(4, 3)) for _ in range(4))
    _, br = ariel_total(h1, h2, ha, h, init_head(3, rng), SimilarityConfig(), 0.0, 2.0)
    assert br.total == pytest.approx(br.l_con + 2.0 * br.l_ir, abs=1e-12)


def test_total_identical_views():
    h = np.random.default_rng(8).normal(size=(5, 3))
    _, br = ariel_total(h, h, h, h, init_head(3, np.random.default_rng(1)), SimilarityConfig(), 1.0, 1.0)
    assert br.l_ir == 0.0 and br.l_adv == br.l_con


def test_graph_total_recomposes():
    rng = np.random.default_rng(9)
    r, rp, ra = (rng.normal(size=(5, 3)) for _ in range(3))
    head = init_head(3, rng)
    cfg = SimilarityConfig()
    _, br = ariel_graph_total(r, rp, ra, head, cfg, 1.5, 0.5)
    assert br.l_con == pytest.approx(float(graph_contrastive_loss(r, rp, head, cfg).value), abs=1e-12)
    assert br.l_adv == pytest.approx(float(graph_contrastive_loss(rp, ra, head, cfg).value), abs=1e-12)
    assert br.l_ir == pytest.approx(float(info_regularization(rp, ra, r, head).value), abs=1e-12)


def test_negative_coefficients_rejected():
    h = np.ones((2, 2))
    with pytest.raises(ValueError):
        ariel_total(h, h, h, h, identity_head(2), SimilarityConfig(), -1.0, 1.0)


def test_loss_gradient_wrt_embeddings():
    rng = np.random.default_rng(10)
    head = init_head(3, rng)
    head["b1"] = rng.normal(scale=0.5, size=3)
    f = lambda p: node_contrastive_loss(p["a"], p["b"], head, SimilarityConfig())  # noqa: E731
    errs = nk.finite_diff_check_many(f, {"a": rng.normal(size=(5, 3)), "b": rng.normal(size=(5, 3))})
    assert max(errs.values()) <= 1e-4
