import dataclasses

import numpy as np
import pytest

from gsmote.autodiff import backward
from gsmote.graph import class_stats, make_imbalanced_split
from gsmote.trainer import (ConfigError, ExperimentConfig, VARIANTS,
                            _build_context, compute_losses, init_params,
                            predict, pretrain, run_baseline, train,
                            train_epoch)


def cfg_for(small=True, **kw):
    base = dict(hidden_dim=16, seed=3, minority_count=1, majority_train_size=8,
                imbalance_ratio=0.5, max_epochs=5, pretrain_epochs=5)
    base.update(kw)
    return ExperimentConfig(**base)


def bundle_for(graph, masks, config, seed=3):
    rng = np.random.default_rng(seed)
    params = init_params(graph.num_features, graph.num_classes, config, rng)
    ctx = _build_context(graph, masks, config, rng)
    return params, ctx, compute_losses(params, ctx, config,
                                       np.random.default_rng(99))


# ---------------------------------------------------------------------------
# configuration


def test_config_validation_catches_unknowns():
    with pytest.raises(ConfigError):
        ExperimentConfig(variant="nope").validate()
    with pytest.raises(ConfigError):
        ExperimentConfig(mixup="sometimes").validate()
    with pytest.raises(ConfigError):
        ExperimentConfig(max_epochs=0).validate()
    with pytest.raises(ConfigError):
        ExperimentConfig(edge_threshold=1.0).validate()


def test_config_pretrain_variant_requires_epochs():
    with pytest.raises(ConfigError):
        ExperimentConfig(variant="gsmote_preT", pretrain_epochs=0).validate()


def test_config_mixup_requires_gsmote():
    with pytest.raises(ConfigError):
        ExperimentConfig(variant="origin", mixup="mix").validate()


def test_config_from_dict_rejects_unknown_keys():
    with pytest.raises(ConfigError, match="unknown config keys"):
        ExperimentConfig.from_dict({"variant": "origin", "nope": 1})


def test_config_round_trips_through_dict():
    cfg = cfg_for(variant="gsmote_preO", lambda_edge=2e-6)
    assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg


# ---------------------------------------------------------------------------
# loss composition


def test_origin_loss_is_node_loss_only(small_graph, small_masks):
    config = cfg_for(variant="origin")
    _, _, bundle = bundle_for(small_graph, small_masks, config)
    assert bundle.edge is None and bundle.mix is None
    assert bundle.total.item() == bundle.node.item()
    assert bundle.n_smote == 0


def test_soft_variant_interaction_matrix_gets_classifier_gradient(
        small_graph, small_masks):
    config = cfg_for(variant="gsmote_O", lambda_edge=0.0)
    params, _, bundle = bundle_for(small_graph, small_masks, config)
    assert bundle.edge is None  # lambda zero skips the reconstruction term
    backward(bundle.total)
    s_grad = params.edge_gen.weight.grad
    assert s_grad is not None and np.abs(s_grad).max() > 0


def test_threshold_variant_isolates_interaction_matrix_from_node_loss(
        small_graph, small_masks):
    config = cfg_for(variant="gsmote_T")
    params, _, bundle = bundle_for(small_graph, small_masks, config)
    backward(bundle.node)
    assert params.edge_gen.weight.grad is None
    backward(bundle.total)  # reconstruction term still trains it
    assert params.edge_gen.weight.grad is not None


def test_epoch_total_matches_hand_recomputation(tiny_graph, tiny_masks):
    config = cfg_for(variant="gsmote_O", hidden_dim=8, minority_count=1,
                     majority_train_size=2, lambda_edge=1e-3)
    params, ctx, bundle = bundle_for(tiny_graph, tiny_masks, config, seed=4)

    probs = bundle.probs.data
    aug = bundle.aug
    mask = np.concatenate([ctx.masks.train, np.arange(tiny_graph.n, aug.n_total)])
    node = -np.mean([np.log(probs[v, aug.labels_aug[v]]) for v in mask])

    from scipy.special import expit
    e = expit(np.maximum(
        bundle.h1.data @ params.edge_gen.weight.data @ bundle.h1.data.T, 0.0))
    edge = ((e - tiny_graph.adjacency.toarray()) ** 2).sum()

    assert bundle.total.item() == pytest.approx(node + config.lambda_edge * edge,
                                                rel=1e-10)


def test_mixup_loss_enters_total(small_graph, small_masks):
    config = cfg_for(variant="gsmote_T", mixup="mix", lambda_mix=0.25,
                     mixup_ratio=0.5)
    _, _, bundle = bundle_for(small_graph, small_masks, config)
    assert bundle.n_mixed > 0
    want = (bundle.node.item() + config.lambda_edge * bundle.edge.item()
            + 0.25 * bundle.mix.item())
    assert bundle.total.item() == pytest.approx(want, rel=1e-12)


def test_mix_prime_uses_only_ground_truth_parents(small_graph, small_masks):
    config = cfg_for(variant="gsmote_T", mixup="mix_prime", mixup_ratio=1.0)
    _, ctx, bundle = bundle_for(small_graph, small_masks, config)
    assert bundle.n_mixed > 0


# ---------------------------------------------------------------------------
# training loop behavior


def test_single_epoch_run(small_graph, small_masks):
    result = train(cfg_for(variant="origin", max_epochs=1), small_graph,
                   small_masks)
    assert len(result.history) == 1


def test_best_checkpoint_at_least_first_epoch(small_graph, small_masks):
    result = train(cfg_for(variant="origin", max_epochs=8), small_graph,
                   small_masks)
    assert result.validation.macro_f >= result.history[0]["val_macro_f"]


def test_training_is_deterministic(small_graph, small_masks):
    config = cfg_for(variant="gsmote_preO", max_epochs=6, pretrain_epochs=5)
    r1 = train(config, small_graph, small_masks)
    r2 = train(config, small_graph, small_masks)
    for p1, p2 in zip(r1.params.parameters(), r2.params.parameters()):
        assert np.array_equal(p1.data, p2.data)
    assert r1.test == r2.test
    assert [h["loss_total"] for h in r1.history] == \
           [h["loss_total"] for h in r2.history]


def test_losses_stay_finite(small_graph, small_masks):
    for variant in VARIANTS:
        result = train(cfg_for(variant=variant, max_epochs=4), small_graph,
                       small_masks)
        for row in result.history:
            assert np.isfinite(row["loss_total"])


def test_patience_stops_early(small_graph, small_masks):
    config = cfg_for(variant="origin", max_epochs=200, patience=3)
    result = train(config, small_graph, small_masks)
    assert len(result.history) < 200


def test_train_epoch_updates_parameters(small_graph, small_masks):
    from gsmote.autodiff import AdamState
    config = cfg_for(variant="gsmote_T")
    rng = np.random.default_rng(0)
    params = init_params(small_graph.num_features, small_graph.num_classes,
                         config, rng)
    ctx = _build_context(small_graph, small_masks, config, rng)
    state = AdamState(params.parameters(), learning_rate=config.learning_rate,
                      weight_decay=config.weight_decay)
    before = params.snapshot()
    row = train_epoch(params, ctx, config, rng, state)
    assert state.step == 1
    assert any(not np.array_equal(b, p.data)
               for b, p in zip(before, params.parameters()))
    assert row["n_smote"] > 0


# ---------------------------------------------------------------------------
# pre-training


def test_pretrain_reduces_edge_loss(small_graph):
    config = cfg_for(variant="gsmote_preT")
    rng = np.random.default_rng(1)
    params = init_params(small_graph.num_features, small_graph.num_classes,
                         config, rng)
    losses = pretrain(params, small_graph, epochs=40)
    assert losses[-1] < losses[0]


def test_pretrain_rejects_zero_epochs(small_graph):
    config = cfg_for(variant="gsmote_preT")
    params = init_params(small_graph.num_features, small_graph.num_classes,
                         config, np.random.default_rng(0))
    with pytest.raises(ConfigError):
        pretrain(params, small_graph, epochs=0)


def test_pretrain_reproducible(small_graph):
    config = cfg_for(variant="gsmote_preT")
    runs = []
    for _ in range(2):
        params = init_params(small_graph.num_features, small_graph.num_classes,
                             config, np.random.default_rng(2))
        runs.append(pretrain(params, small_graph, epochs=10))
    assert runs[0] == runs[1]


def test_pretrain_leaves_classifier_untouched(small_graph):
    config = cfg_for(variant="gsmote_preT")
    params = init_params(small_graph.num_features, small_graph.num_classes,
                         config, np.random.default_rng(3))
    w2_before = params.block2.weight.data.copy()
    wc_before = params.head.weight.data.copy()
    pretrain(params, small_graph, epochs=10)
    assert np.array_equal(params.block2.weight.data, w2_before)
    assert np.array_equal(params.head.weight.data, wc_before)


# ---------------------------------------------------------------------------
# degeneracy: balanced split + class-balanced plan collapses to origin


def degenerate_pair(small_graph, variant):
    masks = make_imbalanced_split(small_graph, minority_count=1,
                                  imbalance_ratio=1.0, majority_train_size=8,
                                  seed=1)
    shared = dict(max_epochs=6, hidden_dim=16, seed=5, lambda_edge=0.0,
                  oversample_mode="class_balanced", imbalance_ratio=1.0,
                  minority_count=1, majority_train_size=8)
    origin = train(ExperimentConfig(variant="origin", **shared),
                   small_graph, masks)
    other = train(ExperimentConfig(variant=variant, **shared),
                  small_graph, masks)
    return origin, other


@pytest.mark.parametrize("variant", ["gsmote_T", "gsmote_O"])
def test_degenerate_gsmote_matches_origin_bitwise(small_graph, variant):
    origin, other = degenerate_pair(small_graph, variant)
    assert all(row["n_smote"] == 0 for row in other.history)
    assert [r["loss_total"] for r in origin.history] == \
           [r["loss_total"] for r in other.history]
    for p, q in zip(origin.params.parameters()[:3],
                    other.params.parameters()[:3]):
        assert np.array_equal(p.data, q.data)


@pytest.mark.parametrize("variant", ["gsmote_preT", "gsmote_preO"])
def test_degenerate_pretrained_variants_make_no_synthetic_nodes(
        small_graph, variant):
    masks = make_imbalanced_split(small_graph, 1, 1.0, 8, seed=1)
    config = ExperimentConfig(variant=variant, max_epochs=4, pretrain_epochs=4,
                              hidden_dim=16, seed=5,
                              oversample_mode="class_balanced",
                              imbalance_ratio=1.0, minority_count=1,
                              majority_train_size=8)
    result = train(config, small_graph, masks)
    assert all(row["n_smote"] == 0 for row in result.history)


# ---------------------------------------------------------------------------
# baselines


def test_run_baseline_rejects_unknown_kind(small_graph, small_masks):
    with pytest.raises(ConfigError):
        run_baseline("gsmote_T", small_graph, small_masks, cfg_for())


def test_reweight_balanced_classes_equals_origin(small_graph):
    masks = make_imbalanced_split(small_graph, 1, 1.0, 8, seed=2)
    shared = dict(max_epochs=5, hidden_dim=16, seed=7, imbalance_ratio=1.0,
                  minority_count=1, majority_train_size=8)
    origin = train(ExperimentConfig(variant="origin", **shared),
                   small_graph, masks)
    reweight = train(ExperimentConfig(variant="reweight", **shared),
                     small_graph, masks)
    assert [r["loss_total"] for r in origin.history] == \
           [r["loss_total"] for r in reweight.history]


def test_reweight_upweights_minority(small_graph, small_masks):
    config = cfg_for(variant="reweight")
    rng = np.random.default_rng(0)
    ctx = _build_context(small_graph, small_masks, config, rng)
    y = small_graph.labels[small_masks.train]
    stats = class_stats(small_graph, small_masks.train)
    minority = int(np.argmin(stats.sizes))
    w = ctx.train_weights
    assert w[y == minority].mean() > w[y != minority].mean()
    # weights are normalized to mean one over the training mask
    assert w.mean() == pytest.approx(1.0)


def test_oversample_raw_duplicates_nodes_with_edges(small_graph, small_masks):
    config = cfg_for(variant="oversample_raw", oversample_scale=1.0)
    rng = np.random.default_rng(0)
    init_params(small_graph.num_features, small_graph.num_classes, config, rng)
    ctx = _build_context(small_graph, small_masks, config, rng)
    stats = class_stats(small_graph, small_masks.train)
    expected_new = int(round(stats.sizes.min() * 1.0))
    assert ctx.graph.n == small_graph.n + expected_new
    assert len(ctx.masks.train) == len(small_masks.train) + expected_new
    a_old = small_graph.adjacency.toarray()
    a_new = ctx.graph.adjacency.toarray()
    assert np.array_equal(a_new[:small_graph.n, :small_graph.n], a_old)
    # each duplicate's feature row equals some original train node's row
    for row in ctx.graph.features[small_graph.n:]:
        assert (row == small_graph.features[small_masks.train]).all(axis=1).any()


def test_smote_raw_features_are_convex_combinations(small_graph, small_masks):
    config = cfg_for(variant="smote_raw", oversample_scale=1.0)
    rng = np.random.default_rng(0)
    ctx = _build_context(small_graph, small_masks, config, rng)
    feats = small_graph.features
    labels = small_graph.labels
    train = small_masks.train
    for row, label in zip(ctx.graph.features[small_graph.n:],
                          ctx.graph.labels[small_graph.n:]):
        members = train[labels[train] == label]
        found = False
        for v in members:
            for u in members:
                # project onto the segment between the candidate parents
                seg = feats[u] - feats[v]
                denom = seg @ seg
                d = 0.0 if denom == 0 else float(
                    np.clip((row - feats[v]) @ seg / denom, 0.0, 1.0))
                if np.linalg.norm(row - ((1 - d) * feats[v] + d * feats[u])) < 1e-9:
                    found = True
                    break
            if found:
                break
        assert found, "synthetic raw feature row is not on any same-class segment"


def test_embed_smote_adds_per_epoch_synthetic_rows(small_graph, small_masks):
    config = cfg_for(variant="embed_smote")
    _, _, bundle = bundle_for(small_graph, small_masks, config)
    assert bundle.n_smote > 0
    assert bundle.edge is None  # no edges are generated for this baseline


def test_predict_shapes_and_distribution(small_graph, small_masks):
    config = cfg_for(variant="origin")
    rng = np.random.default_rng(0)
    params = init_params(small_graph.num_features, small_graph.num_classes,
                         config, rng)
    probs = predict(params, small_graph)
    assert probs.shape == (small_graph.n, small_graph.num_classes)
    assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-9)


def test_run_baseline_returns_report(small_graph, small_masks):
    report = run_baseline("origin", small_graph, small_masks,
                          cfg_for(max_epochs=3))
    assert 0.0 <= report.macro_f <= 1.0
