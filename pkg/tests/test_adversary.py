import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ariel.adversary import (
    AttackConfig,
    EdgePerturbation,
    adjacency_on_support,
    all_pairs,
    apply_flips,
    apply_perturbation,
    clip_feature_perturbation,
    flip_mask,
    project_edge_budget,
    run_pgd,
    sample_discrete,
)
from ariel.contrastive import SimilarityConfig
from ariel.encoders import GcnEncoder, GinEncoder, init_head
from ariel.errors import NumericError
from ariel.graph import Graph, clique_graph, combine_batch, cycle_graph, edge_set, generate_sbm


def exact_projection(z, delta):
    """Projection onto the box-plus-budget set by walking the sorted breakpoints.

    s(mu) = sum clip(z - mu, 0, 1) is piecewise linear and non-increasing with
    kinks at z_i - 1 and z_i; the root of s(mu) = delta lies on one linear piece.
    """
    z = np.asarray(z, dtype=float)
    clipped = np.clip(z, 0, 1)
    if clipped.sum() <= delta:
        return clipped
    s = lambda mu: np.clip(z - mu, 0, 1).sum()  # noqa: E731
    knots = np.unique(np.concatenate([z, z - 1, [0.0]]))
    knots = knots[knots >= 0]
    for lo, hi in zip(knots[:-1], knots[1:]):
        if s(lo) >= delta >= s(hi):
            if s(lo) == s(hi):
                return np.clip(z - lo, 0, 1)
            mu = lo + (s(lo) - delta) * (hi - lo) / (s(lo) - s(hi))
            return np.clip(z - mu, 0, 1)
    raise AssertionError("no bracketing segment")


# ---------------------------------------------------------------- projection


def test_projection_zeros():
    np.testing.assert_array_equal(project_edge_budget(np.zeros(5), 2.0), np.zeros(5))


def test_projection_known_shift():
    out = project_edge_budget(np.array([0.9, 0.8, 0.7]), 1.5)
    np.testing.assert_allclose(out, [0.6, 0.5, 0.4], atol=1e-6)


def test_projection_inside_budget_is_clip():
    z = np.array([-0.5, 0.3, 1.7])
    np.testing.assert_array_equal(project_edge_budget(z, 10.0), [0.0, 0.3, 1.0])


def test_projection_zero_budget():
    np.testing.assert_allclose(project_edge_budget(np.array([0.4, 2.0]), 0.0), 0.0, atol=1e-6)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.0, 8.0))
def test_projection_matches_sort_oracle(seed, delta):
    rng = np.random.default_rng(seed)
    z = rng.normal(0.5, 1.0, size=15)
    got = project_edge_budget(z, delta)
    np.testing.assert_allclose(got, exact_projection(z, delta), atol=1e-6)
    assert got.min() >= 0 and got.max() <= 1 and got.sum() <= delta + 1e-6


def test_projection_rejects_non_finite():
    with pytest.raises(NumericError):
        project_edge_budget(np.array([np.nan]), 1.0)


# ---------------------------------------------------------------- flip mask and perturbation


def test_flip_mask_edgeless_and_complete():
    empty = Graph(3, np.zeros((0, 2)), np.ones((3, 1)))
    assert np.all(flip_mask(empty.adjacency).densify()[~np.eye(3, dtype=bool)] == 1)
    assert np.all(flip_mask(clique_graph(4).adjacency).densify()[~np.eye(4, dtype=bool)] == -1)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_flip_everything_gives_complement(seed):
    g = generate_sbm([3, 3], 0.6, 0.2, 2, 0.0, np.random.default_rng(seed))
    c = flip_mask(g.adjacency)
    complement = 1 - g.dense_adjacency() - np.eye(g.n)
    np.testing.assert_array_equal(g.dense_adjacency() + c.densify(), complement)


def _perturbed(g, relaxed, lx):
    r, c = all_pairs(g.n)
    a = adjacency_on_support(g, r, c)
    return apply_perturbation(a, 1 - 2 * a, relaxed, g.features, lx, g.n, r, c)


def test_zero_perturbation_is_identity():
    g = cycle_graph(5, 2)
    adj, x = _perturbed(g, np.zeros(10), np.zeros((5, 2)))
    np.testing.assert_array_equal(adj.densify(), g.dense_adjacency())
    np.testing.assert_array_equal(x.value, g.features)


def test_full_flip_on_edge_removes_it():
    g = Graph(3, np.array([[0, 1]]), np.ones((3, 1)))
    relaxed = np.zeros(3)
    relaxed[0] = 1.0  # pair (0, 1)
    adj, _ = _perturbed(g, relaxed, np.zeros((3, 1)))
    assert adj.densify()[0, 1] == 0 and adj.densify()[1, 0] == 0


def test_perturbed_adjacency_is_symmetric():
    g = generate_sbm([4, 4], 0.5, 0.2, 2, 0.0, np.random.default_rng(0))
    adj, _ = _perturbed(g, np.random.default_rng(1).random(28), np.zeros((8, 2)))
    m = adj.densify()
    np.testing.assert_array_equal(m, m.T)


def test_clip_features():
    out = clip_feature_perturbation(np.array([[0.7, -0.2], [-3.0, 0.5]]), 0.5)
    np.testing.assert_array_equal(out, [[0.5, -0.2], [-0.5, 0.5]])
    big = np.random.default_rng(2).normal(scale=5, size=(20, 20))
    assert np.abs(clip_feature_perturbation(big, 0.3)).max() <= 0.3


# ---------------------------------------------------------------- sampling


def test_sampling_extremes():
    r, c = all_pairs(4)
    rng = np.random.default_rng(0)
    zeros = sample_discrete(EdgePerturbation(4, r, c, np.zeros(6)), rng)
    ones = sample_discrete(EdgePerturbation(4, r, c, np.ones(6)), rng)
    assert zeros.total == 0 and ones.total == 6


def test_sampling_frequency():
    r, c = all_pairs(2)
    rng = np.random.default_rng(1)
    draws = [sample_discrete(EdgePerturbation(2, r, c, np.array([0.3])), rng).total for _ in range(10_000)]
    assert abs(np.mean(draws) - 0.3) < 3 * np.sqrt(0.3 * 0.7 / 10_000)


def test_apply_flips_adds_and_removes():
    g = Graph(3, np.array([[0, 1]]), np.ones((3, 1)))
    r, c = all_pairs(3)
    out = apply_flips(g, EdgePerturbation(3, r, c, np.array([1.0, 1.0, 0.0])))
    assert edge_set(out) == {(0, 2)}


# ---------------------------------------------------------------- attack


def _setup(seed=0, n_blocks=(8, 8)):
    rng = np.random.default_rng(seed)
    g = generate_sbm(list(n_blocks), 0.5, 0.05, 4, 0.5, rng)
    enc = GcnEncoder.create(4, 16, 16, rng)
    head = init_head(16, rng)
    return g, enc, head, rng


def test_zero_steps_returns_graph_unchanged():
    g, enc, head, rng = _setup()
    res = run_pgd(g, enc.forward(g).value, enc, head, AttackConfig(steps=0), SimilarityConfig(), rng)
    assert res.graph.same_as(g)


def test_attack_respects_budgets():
    g, enc, head, rng = _setup(1)
    cfg = AttackConfig(steps=5, alpha=1.0, beta=0.1, delta_a_ratio=0.1, delta_x=0.2)
    anchor = enc.forward(g).value
    res = run_pgd(g, anchor, enc, head, cfg, SimilarityConfig(), rng)
    assert res.relaxed.values.min() >= 0 and res.relaxed.values.max() <= 1
    assert res.relaxed.total <= 0.1 * 2 * g.num_edges + 1e-6
    assert np.abs(res.feature_delta).max() <= 0.2 + 1e-12
    np.testing.assert_allclose(res.graph.features, g.features + res.feature_delta)
    assert len(res.losses) == 5


def test_attack_does_not_mutate_inputs():
    g, enc, head, rng = _setup(2)
    params = {k: v.copy() for k, v in enc.params.items()}
    edges = g.edges.copy()
    run_pgd(g, enc.forward(g).value, enc, head, AttackConfig(), SimilarityConfig(), rng)
    np.testing.assert_array_equal(g.edges, edges)
    for k in params:
        np.testing.assert_array_equal(enc.params[k], params[k])


def test_attack_is_deterministic_under_seed():
    g, enc, head, _ = _setup(3)
    anchor = enc.forward(g).value
    a = run_pgd(g, anchor, enc, head, AttackConfig(), SimilarityConfig(), np.random.default_rng(9))
    b = run_pgd(g, anchor, enc, head, AttackConfig(), SimilarityConfig(), np.random.default_rng(9))
    assert a.graph.same_as(b.graph)


def test_attack_ascends_relaxed_loss():
    g, enc, head, rng = _setup(4)
    cfg = AttackConfig(steps=4, alpha=0.5, beta=0.01, delta_a_ratio=0.2, delta_x=0.1)
    res = run_pgd(g, enc.forward(g).value, enc, head, cfg, SimilarityConfig(), rng)
    assert res.losses[-1] > res.losses[0]


def _gin_batch(seed=0):
    rng = np.random.default_rng(seed)
    graphs = [clique_graph(4, 2), cycle_graph(5, 2), clique_graph(3, 2), cycle_graph(4, 2)]
    batch = combine_batch(graphs)
    enc = GinEncoder.create(2, 8, rng)
    head = init_head(enc.out_dim, rng)
    return batch, enc, head, rng


def test_graph_level_attack_stays_inside_blocks():
    batch, enc, head, rng = _gin_batch()
    anchor = enc.graph_embeddings(batch.combined, batch.offsets, update_stats=False).value
    cfg = AttackConfig(steps=3, alpha=5.0, beta=0.01, delta_a_ratio=0.5, delta_x=0.04)
    stats = enc.stats.copy()
    res = run_pgd(batch.combined, anchor, enc, head, cfg, SimilarityConfig(), rng, offsets=batch.offsets)
    block = np.searchsorted(batch.offsets, np.arange(batch.combined.n), side="right") - 1
    e = res.graph.edges
    assert np.all(block[e[:, 0]] == block[e[:, 1]])
    assert res.flips.total > 0
    for a, b in zip(stats.layers, enc.stats.layers):
        np.testing.assert_array_equal(a.running_mean, b.running_mean)


def test_per_graph_budget_mode():
    batch, enc, head, rng = _gin_batch(1)
    anchor = enc.graph_embeddings(batch.combined, batch.offsets, update_stats=False).value
    cfg = AttackConfig(steps=3, alpha=5.0, delta_a_ratio=0.25, per_graph_budget=True)
    res = run_pgd(batch.combined, anchor, enc, head, cfg, SimilarityConfig(), rng, offsets=batch.offsets)
    block = np.searchsorted(batch.offsets, res.relaxed.rows, side="right") - 1
    for k, g in enumerate(batch.graphs):
        assert res.relaxed.values[block == k].sum() <= 0.25 * 2 * g.num_edges + 1e-6


def test_attack_config_validation():
    with pytest.raises(ValueError):
        AttackConfig(alpha=0.0)
    with pytest.raises(ValueError):
        AttackConfig(delta_x=-1.0)
