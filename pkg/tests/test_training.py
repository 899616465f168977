import math
import os
import types

import numpy as np
import pytest

from mitgnn import diffcore as dc
from mitgnn import graph as G
from mitgnn import propagation, training
from mitgnn.diffcore import Param, Tensor
from mitgnn.errors import DataError, NumericError
from mitgnn.synth import random_graph


def small_setup(num_layers=1, dim=3, num_intents=2, seed=5):
    graph = random_graph(3, 4, 8, items_per_basket=(2, 3), seed=seed)
    config = training.TrainConfig(dim=dim, num_intents=num_intents,
                                  num_layers=num_layers, dropout=0.0,
                                  seed=seed, val_frac=0.0)
    params = training.ModelParams.initialize(graph, config, np.random.default_rng(seed))
    states = propagation.forward(graph, params, mode="eval")
    return graph, params, states


# ---------------------------------------------------------------------------
# final representations and scores


def test_final_representation_zero_layers():
    graph, params, states = small_setup(num_layers=0)
    rep = training.final_representation(states, "user", 1)
    np.testing.assert_array_equal(rep.value[0], params.user_emb.value[1])


def test_final_representation_concatenates_in_layer_order():
    graph, params, states = small_setup(num_layers=2, dim=4)
    rep = training.final_representation(states, "item", 3)
    assert rep.shape == (1, 12)
    for l in range(3):
        np.testing.assert_array_equal(rep.value[0, 4 * l:4 * (l + 1)],
                                      states[l].E_i.value[3])


def test_predict_score_trivials():
    graph, params, states = small_setup(num_layers=0)
    params.item_emb.value[0, :] = 0.0
    states = propagation.forward(graph, params, mode="eval")
    score = training.predict_score(0, 0, states, graph)
    assert score.value[0, 0] == 0.0

    unit = np.zeros_like(params.user_emb.value[0])
    unit[0] = 1.0
    params.user_emb.value[graph.basket_owner[0]] = unit
    params.basket_emb.value[0] = unit
    params.item_emb.value[1] = unit
    states = propagation.forward(graph, params, mode="eval")
    assert abs(training.predict_score(0, 1, states, graph).value[0, 0] - 2.0) < 1e-14


def test_predict_score_vs_dot_oracle():
    graph, params, states = small_setup(num_layers=2)
    u_star = np.hstack([s.E_u.value for s in states])
    i_star = np.hstack([s.E_i.value for s in states])
    b_star = np.hstack([s.E_b.value for s in states])
    for b in range(graph.num_baskets):
        for i in range(graph.num_items):
            got = training.predict_score(b, i, states, graph).value[0, 0]
            u = graph.basket_owner[b]
            want = float(u_star[u] @ i_star[i] + b_star[b] @ i_star[i])
            assert abs(got - want) < 1e-12


# ---------------------------------------------------------------------------
# loss


def zero_score_setup():
    """One basket {item 0} out of two items, all embeddings zero, L=0."""
    graph = G.build_graph([G.InteractionRecord(0, 0, 0)], num_items=2)
    config = training.TrainConfig(dim=2, num_intents=1, num_layers=0,
                                  dropout=0.0, val_frac=0.0)
    params = training.ModelParams.initialize(graph, config)
    for p in params.all_params():
        p.value[...] = 0.0
    states = propagation.forward(graph, params, mode="eval")
    return graph, params, states


def test_bpr_loss_zero_margin_is_ln2():
    graph, params, states = zero_score_setup()
    triples = [training.SampleTriple(0, 0, 1)]
    loss = training.bpr_loss(triples, states, params, 0.0, graph)
    assert abs(loss.value[0, 0] - math.log(2.0)) < 1e-12


def test_bpr_loss_hand_case_with_regularization():
    # zero-margin triple plus lambda=0.1 over a single parameter (1, 1)
    graph, _, states = zero_score_setup()
    theta = types.SimpleNamespace(
        all_params=lambda: [Param("theta", [[1.0, 1.0]])])
    loss = training.bpr_loss([training.SampleTriple(0, 0, 1)], states,
                             theta, 0.1, graph)
    assert abs(loss.value[0, 0] - (0.6931471805599453 + 0.2)) < 1e-12


def test_bpr_loss_huge_margin_leaves_regularizer():
    graph, params, states = zero_score_setup()
    params.user_emb.value[...] = 0.0
    params.basket_emb.value[0] = [1e3, 0.0]
    params.item_emb.value[0] = [1e3, 0.0]
    params.item_emb.value[1] = [-1e3, 0.0]
    states = propagation.forward(graph, params, mode="eval")
    lam = 1e-4
    loss = training.bpr_loss([training.SampleTriple(0, 0, 1)], states,
                             params, lam, graph)
    reg = lam * sum((p.value ** 2).sum() for p in params.all_params())
    assert abs(loss.value[0, 0] - reg) < 1e-12


def test_bpr_loss_empty_triples_rejected():
    graph, params, states = zero_score_setup()
    with pytest.raises(ValueError, match="at least one triple"):
        training.bpr_loss([], states, params, 0.0, graph)


def test_bpr_loss_positive_and_matches_margin_formula():
    graph, params, states = small_setup(num_layers=1)
    rng = np.random.default_rng(0)
    triples = training.sample_triples(graph, 20, 1, rng)
    loss0 = training.bpr_loss(triples, states, params, 0.0, graph).value[0, 0]
    loss1 = training.bpr_loss(triples, states, params, 0.01, graph).value[0, 0]
    assert loss0 >= 0.0
    assert loss1 > 0.0
    assert loss1 > loss0

    # the ranking term is a function of score margins only
    margins = []
    for t in triples:
        pos = training.predict_score(t.basket, t.pos_item, states, graph).value[0, 0]
        neg = training.predict_score(t.basket, t.neg_item, states, graph).value[0, 0]
        margins.append(pos - neg)
    manual = -sum(math.log(1.0 / (1.0 + math.exp(-m))) for m in margins)
    assert abs(loss0 - manual) < 1e-10
    # shifting every score of a basket by a constant leaves the loss alone
    shifted_margins = [(m + 123.0) - 123.0 for m in margins]
    shifted = -sum(math.log(1.0 / (1.0 + math.exp(-m))) for m in shifted_margins)
    assert abs(shifted - loss0) < 1e-9


# ---------------------------------------------------------------------------
# sampling


def test_sample_triples_exclusion():
    graph = G.build_graph([G.InteractionRecord(0, 0, 0)], num_items=3)
    rng = np.random.default_rng(1)
    triples = training.sample_triples(graph, 200, 1, rng)
    assert {t.neg_item for t in triples} <= {1, 2}
    assert all(t.pos_item == 0 for t in triples)


def test_sample_triples_deterministic():
    graph = random_graph(3, 4, 8, seed=2)
    a = training.sample_triples(graph, 50, 2, np.random.default_rng(7))
    b = training.sample_triples(graph, 50, 2, np.random.default_rng(7))
    assert a == b
    assert len(a) == 100  # two negatives per positive


def test_sample_triples_negative_uniformity_chi_square():
    # single basket {0} over 21 items: negatives uniform over 20 candidates
    graph = G.build_graph([G.InteractionRecord(0, 0, 0)], num_items=21)
    rng = np.random.default_rng(3)
    n = 100_000
    triples = training.sample_triples(graph, n, 1, rng)
    counts = np.bincount([t.neg_item for t in triples], minlength=21)[1:]
    expected = n / 20.0
    chi2 = float(((counts - expected) ** 2 / expected).sum())
    dof = 19
    assert chi2 < dof + 3.0 * math.sqrt(2.0 * dof)


# ---------------------------------------------------------------------------
# optimizer


def test_adam_first_step_closed_form():
    graph, params, _ = small_setup()
    opt = training.Adam(params, learning_rate=0.01)
    g = {}
    rng = np.random.default_rng(4)
    for p in params.all_params():
        g[p.name] = np.sign(rng.normal(size=p.value.shape)) * rng.uniform(
            0.5, 2.0, p.value.shape)
        p.grad[...] = g[p.name]
    before = params.snapshot_values()
    opt.step()
    for p in params.all_params():
        delta = p.value - before[p.name]
        np.testing.assert_allclose(delta, -0.01 * np.sign(g[p.name]), rtol=1e-6)


def test_adam_zero_gradient_keeps_parameters():
    graph, params, _ = small_setup()
    opt = training.Adam(params, learning_rate=0.5)
    before = params.snapshot_values()
    opt.zero_grad()
    opt.step()
    for p in params.all_params():
        np.testing.assert_array_equal(p.value, before[p.name])
    assert params.opt.step == 1


def test_training_deterministic_trajectories():
    graph = random_graph(3, 4, 8, seed=2)
    split = G.split_transductive(graph, 0.4, seed=0)
    config = training.TrainConfig(dim=4, num_intents=2, num_layers=1,
                                  learning_rate=0.05, reg_lambda=1e-4,
                                  dropout=0.1, epochs=4, seed=9, val_frac=0.0)
    r1 = training.train(config, split)
    r2 = training.train(config, split)
    assert r1.epoch_losses == r2.epoch_losses
    for p1, p2 in zip(r1.params.all_params(), r2.params.all_params()):
        assert (p1.value == p2.value).all()


def test_training_nan_abort_keeps_checkpoint(tmp_path):
    graph = random_graph(3, 4, 8, seed=2)
    split = G.split_transductive(graph, 0.4, seed=0)
    config = training.TrainConfig(dim=4, num_intents=2, num_layers=1,
                                  learning_rate=1e200, reg_lambda=1e-4,
                                  dropout=0.0, epochs=5, seed=9, val_frac=0.0,
                                  checkpoint_every=1)
    with pytest.raises(NumericError, match="aborted at epoch"):
        training.train(config, split, checkpoint_dir=tmp_path)
    restored = training.load_checkpoint(tmp_path / "model.ckpt")
    assert restored.dim == 4


def test_training_validation_tracks_best_epoch():
    graph = random_graph(4, 12, 15, items_per_basket=(3, 6), seed=3)
    split = G.split_transductive(graph, 0.3, seed=0)
    config = training.TrainConfig(dim=4, num_intents=2, num_layers=1,
                                  learning_rate=0.05, reg_lambda=1e-4,
                                  dropout=0.0, epochs=6, seed=1,
                                  val_frac=0.2, eval_every=2)
    result = training.train(config, split)
    assert result.best_epoch is not None
    assert result.val_curve and all(0.0 <= v <= 1.0 for _, v in result.val_curve)


# ---------------------------------------------------------------------------
# checkpoints


def test_checkpoint_round_trip_bit_exact(tmp_path):
    graph, params, _ = small_setup(num_layers=2)
    params.opt.step = 3
    for p in params.all_params():
        params.opt.m[p.name] = np.random.default_rng(0).normal(size=p.value.shape)
        params.opt.v[p.name] = np.abs(np.random.default_rng(1).normal(size=p.value.shape))
    path = tmp_path / "model.ckpt"
    training.save_checkpoint(params, path)
    loaded = training.load_checkpoint(path)
    assert (loaded.num_users, loaded.num_baskets, loaded.num_items) == \
        (params.num_users, params.num_baskets, params.num_items)
    assert loaded.opt.step == 3
    for p, q in zip(params.all_params(), loaded.all_params()):
        assert p.name == q.name
        assert (p.value == q.value).all()
        assert (params.opt.m[p.name] == loaded.opt.m[q.name]).all()
    # byte-identical re-save
    path2 = tmp_path / "model2.ckpt"
    training.save_checkpoint(loaded, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_checkpoint_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"NOPE" + b"\x00" * 64)
    with pytest.raises(DataError, match="bad magic"):
        training.load_checkpoint(path)


def test_checkpoint_rejects_wrong_version(tmp_path):
    graph, params, _ = small_setup()
    path = tmp_path / "model.ckpt"
    training.save_checkpoint(params, path)
    blob = bytearray(path.read_bytes())
    blob[4] = 99
    path.write_bytes(bytes(blob))
    with pytest.raises(DataError, match="version"):
        training.load_checkpoint(path)


def test_checkpoint_rejects_truncation(tmp_path):
    graph, params, _ = small_setup()
    path = tmp_path / "model.ckpt"
    training.save_checkpoint(params, path)
    blob = path.read_bytes()
    path.write_bytes(blob[:len(blob) - 16])
    with pytest.raises((DataError, ValueError)):
        training.load_checkpoint(path)


# ---------------------------------------------------------------------------
# baseline


def test_bprmf_learns_to_rank_user_items(tmp_path):
    graph = random_graph(4, 8, 12, items_per_basket=(2, 4), seed=6)
    split = G.split_transductive(graph, 0.3, seed=0)
    config = training.TrainConfig(dim=8, num_intents=1, num_layers=0,
                                  learning_rate=0.05, reg_lambda=1e-5,
                                  dropout=0.0, epochs=60, seed=2, val_frac=0.0)
    model = training.bprmf_baseline(config, split)
    score = model.scorer()
    # training positives should outrank random unseen items on average
    tg = split.train_graph
    wins = total = 0
    for u in range(tg.num_users):
        items = set(tg.user_items[u])
        if not items or len(items) == tg.num_items:
            continue
        case = G.TestCase(G.EntityId(G.BASKET, tg.user_baskets[u][0]),
                          G.EntityId(G.USER, u), (), tuple(items))
        s = score(case)
        inside = np.mean([s[i] for i in items])
        outside = np.mean([s[i] for i in range(tg.num_items) if i not in items])
        wins += inside > outside
        total += 1
    assert wins == total


def test_full_model_gradients_match_finite_differences():
    report = training.run_gradient_check(step=1e-5)
    assert max(report.values()) < 1e-4, report
