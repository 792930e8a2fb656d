import numpy as np
import pytest

from ariel.adversary import AttackConfig
from ariel.contrastive import SimilarityConfig, node_contrastive_loss
from ariel.encoders import GcnEncoder, init_head
from ariel.errors import DegenerateInputError, DimensionError, NumericError
from ariel.graph import clique_graph, cycle_graph, generate_sbm
from ariel.training import (
    LOG_FIELDS,
    OptimizerState,
    TrainConfig,
    TrainingAborted,
    curriculum_eps1,
    optimizer_step,
    train_graph_level,
    train_node_level,
)

SMALL = dict(hidden=16, out_dim=16, subgraph_size=30)


@pytest.fixture(scope="module")
def sbm():
    return generate_sbm([20, 20], 0.3, 0.03, 6, 0.5, np.random.default_rng(0))


# ---------------------------------------------------------------- optimizer


def test_zero_gradient_leaves_params():
    p = {"w": np.array([1.0, -2.0])}
    optimizer_step(p, {"w": np.zeros(2)}, OptimizerState(), 0.1)
    np.testing.assert_array_equal(p["w"], [1.0, -2.0])


def test_first_adam_step_has_magnitude_lr():
    p = {"w": np.zeros(3)}
    optimizer_step(p, {"w": np.array([5.0, -0.1, 2.0])}, OptimizerState(), 0.01)
    np.testing.assert_allclose(np.abs(p["w"]), 0.01, rtol=1e-6)


def test_adam_converges_on_quadratic_bowl():
    p = {"w": np.array([1.0, -2.0, 0.5])}
    state = OptimizerState()
    for _ in range(500):
        optimizer_step(p, {"w": 2 * p["w"]}, state, 0.05)
    assert np.linalg.norm(p["w"]) <= 1e-3


def test_optimizer_shape_mismatch():
    with pytest.raises(DimensionError):
        optimizer_step({"w": np.zeros(2)}, {"w": np.zeros(3)}, OptimizerState(), 0.1)


# ---------------------------------------------------------------- curriculum and config


def test_curriculum_values():
    assert curriculum_eps1(1.0, 1.1, 20, 39) == pytest.approx(1.1)
    assert curriculum_eps1(1.0, 1.1, 20, 40) == pytest.approx(1.21)
    assert curriculum_eps1(2.0, 1.0, 5, 100) == 2.0


@pytest.mark.parametrize(
    "changes", [dict(eps1=-1.0), dict(gamma=0.0), dict(period_T=0), dict(learning_rate=0.0), dict(p_drop1=2.0)]
)
def test_config_validation(changes):
    with pytest.raises(ValueError):
        TrainConfig(**changes)


def test_logged_eps1_follows_curriculum(sbm):
    cfg = TrainConfig(epochs=9, gamma=2.0, period_T=3, **SMALL).with_attack(steps=1)
    _, _, log = train_node_level(sbm, cfg)
    expect = [curriculum_eps1(1.0, 2.0, 3, k) for k in range(9)]
    np.testing.assert_allclose(log.column("eps1"), expect)
    assert [r["iteration"] for r in log.records] == list(range(9))


# ---------------------------------------------------------------- node level


def test_node_training_is_reproducible(sbm):
    cfg = TrainConfig(epochs=4, seed=5, **SMALL).with_attack(steps=2)
    e1, h1, log1 = train_node_level(sbm, cfg)
    e2, h2, log2 = train_node_level(sbm, cfg)
    assert log1.deterministic_view() == log2.deterministic_view()
    for k in e1.params:
        np.testing.assert_array_equal(e1.params[k], e2.params[k])
    for k in h1:
        np.testing.assert_array_equal(h1[k], h2[k])


def test_node_training_does_not_mutate_graph(sbm):
    edges, feats = sbm.edges.copy(), sbm.features.copy()
    train_node_level(sbm, TrainConfig(epochs=2, **SMALL))
    np.testing.assert_array_equal(sbm.edges, edges)
    np.testing.assert_array_equal(sbm.features, feats)


def test_disabled_attack_and_augmentation_make_views_agree(sbm):
    # no attack, no augmentation, full graph: G1 = G2 = G_adv = G_s
    cfg = TrainConfig(epochs=1, p_drop1=0, p_drop2=0, p_mask1=0, p_mask2=0, hidden=16, out_dim=16,
                      subgraph_size=sbm.n).with_attack(steps=0)
    rng = np.random.default_rng(cfg.seed)
    enc = GcnEncoder.create(sbm.feature_dim, 16, 16, rng)
    head = init_head(16, rng)
    h = enc.forward(sbm).value
    expect = float(node_contrastive_loss(h, h, head, SimilarityConfig()).value)
    _, _, log = train_node_level(sbm, cfg)
    rec = log.records[0]
    assert rec["l_adv"] == pytest.approx(rec["l_con"], abs=1e-12)
    assert rec["l_con"] == pytest.approx(expect, abs=1e-12)
    assert rec["l_ir"] == 0.0


def test_training_reduces_contrastive_loss(sbm):
    # deterministic views isolate the optimizer from augmentation noise
    cfg = TrainConfig(epochs=40, learning_rate=0.01, p_drop1=0, p_drop2=0.2, p_mask1=0, p_mask2=0,
                      hidden=16, out_dim=16, subgraph_size=sbm.n).with_attack(steps=0)
    _, _, log = train_node_level(sbm, cfg)
    l_con = log.column("l_con")
    assert l_con[-10:].mean() < l_con[:10].mean()


def test_callback_sees_every_iteration(sbm):
    seen = []
    train_node_level(sbm, TrainConfig(epochs=3, **SMALL), callback=lambda k, br: seen.append(k))
    assert seen == [0, 1, 2]


def test_non_finite_loss_aborts(sbm, monkeypatch):
    import ariel.training as tr

    real = tr.ariel_total

    def poisoned(*args, **kwargs):
        total, br = real(*args, **kwargs)
        total.value = np.array(np.nan)
        return total, br

    monkeypatch.setattr(tr, "ariel_total", poisoned)
    with pytest.raises(TrainingAborted) as info:
        train_node_level(sbm, TrainConfig(epochs=3, **SMALL))
    assert isinstance(info.value, NumericError)
    assert info.value.iteration == 0


def test_log_csv_layout(sbm):
    _, _, log = train_node_level(sbm, TrainConfig(epochs=2, **SMALL))
    lines = log.to_csv().splitlines()
    assert lines[0] == ",".join(LOG_FIELDS)
    assert len(lines) == 3


# ---------------------------------------------------------------- graph level


def families(count=6):
    rng = np.random.default_rng(0)
    out = []
    for _ in range(count):
        out.append(clique_graph(int(rng.integers(4, 7))).replace(graph_label=0))
        out.append(cycle_graph(int(rng.integers(4, 7))).replace(graph_label=1))
    return out


def test_graph_training_runs_and_is_reproducible():
    cfg = TrainConfig(epochs=2, batch_size=4, gin_width=8, gamma=1.0,
                      attack=AttackConfig(delta_a_ratio=0.05, delta_x=0.04))
    e1, _, log1 = train_graph_level(families(), cfg)
    e2, _, log2 = train_graph_level(families(), cfg)
    assert len(log1.records) == 2 * 3
    assert log1.deterministic_view() == log2.deterministic_view()
    np.testing.assert_array_equal(e1.stats.layers[0].running_mean, e2.stats.layers[0].running_mean)
    assert np.all(log1.column("eps1") == 1.0)


def test_graph_training_merges_trailing_singleton():
    cfg = TrainConfig(epochs=1, batch_size=5, gin_width=4)
    _, _, log = train_graph_level(families(3), cfg)  # 6 graphs -> batches of 5 and 1 -> one batch
    assert len(log.records) == 1


def test_graph_identical_views_without_attack():
    cfg = TrainConfig(epochs=1, batch_size=12, gin_width=4, p_drop1=0, p_mask1=0).with_attack(steps=0)
    _, _, log = train_graph_level(families(), cfg)
    rec = log.records[0]
    assert rec["l_adv"] == pytest.approx(rec["l_con"], abs=1e-12)


def test_graph_training_needs_batches_of_two():
    with pytest.raises(DegenerateInputError):
        train_graph_level(families(), TrainConfig(batch_size=1))
    with pytest.raises(DegenerateInputError):
        train_graph_level(families()[:1], TrainConfig(batch_size=4))
