"""End-to-end training: edge-reconstruction pre-training, per-epoch
augmentation, the joint objective, the four over-sampling variants, the
mixup extension, and the baseline methods.

Every epoch re-encodes the graph, regenerates synthetic nodes in the
current embedding space, wires them in via the edge generator, and updates
all parameters on node loss + weighted edge-reconstruction loss (+ weighted
mixed-node loss). Synthetic nodes are discarded after the update and never
enter evaluation.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from .autodiff import AdamState, Value, adam_step, backward
from .edgegen import (AugmentPiece, AugmentedGraph, EdgeGenerator, PROV_MIXED,
                      PROV_SMOTE, assemble_augmented, edge_loss,
                      soft_strip_value, synthetic_rows_value, threshold_strip)
from .gnn import (ClassifierHead, SageBlock, classify, gcn_forward, node_loss,
                  renorm_propagate, sage_forward)
from .graph import (AttributedGraph, ClassStats, SplitMasks, UNKNOWN_LABEL,
                    class_stats)
from .metrics import EvalReport, evaluate
from .mixup import MixupConfig, mix_loss, mix_nodes, mixed_strip, pseudo_labels
from .smote import OversamplePlan, build_plan, oversample

BASELINE_VARIANTS = ("origin", "oversample_raw", "reweight", "smote_raw",
                     "embed_smote")
GSMOTE_VARIANTS = ("gsmote_T", "gsmote_O", "gsmote_preT", "gsmote_preO")
VARIANTS = BASELINE_VARIANTS + GSMOTE_VARIANTS
PRETRAIN_VARIANTS = ("gsmote_preT", "gsmote_preO")
SOFT_VARIANTS = ("gsmote_O", "gsmote_preO")


class ConfigError(ValueError):
    """Raised when an experiment configuration is invalid."""


@dataclass
class ExperimentConfig:
    variant: str = "gsmote_preO"
    mixup: str = "off"                 # off | mix | mix_prime
    base_model: str = "graphsage"      # graphsage | gcn
    hidden_dim: int = 64
    aggregator: str = "sum"            # sum | mean neighbor aggregation
    lambda_edge: float = 1e-6          # weight of the edge-reconstruction loss
    lambda_mix: float = 0.1            # weight of the mixed-node loss
    oversample_mode: str = "uniform"   # uniform | class_balanced
    oversample_scale: float = 2.0
    mixup_ratio: float = 1.0
    interpolation_scale: float = 0.5   # upper bound b for mixed-node deltas
    confidence_threshold: float = 0.3  # pseudo-label confidence cutoff
    mix_insertion: str = "predicted"   # vanilla | heuristic | predicted
    mix_majority_only: bool = True
    edge_threshold: float = 0.5        # eta for binarized insertion
    edge_activation: str = "relu"      # inner activation of the edge scorer
    learning_rate: float = 1e-3
    weight_decay: float = 5e-4
    max_epochs: int = 5000
    patience: int = 0                  # early stop on validation macro-F; 0 = off
    pretrain_epochs: int = 200
    pretrain_tolerance: float = 1e-3   # relative improvement counted as progress
    pretrain_window: int = 20
    seed: int = 0
    # imbalanced split construction
    minority_count: int = 3
    imbalance_ratio: float = 0.5
    majority_train_size: int = 20
    val_fraction: float = 0.5
    normalize_features: bool = False

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.mixup not in ("off", "mix", "mix_prime"):
            raise ConfigError(f"unknown mixup mode {self.mixup!r}")
        if self.mixup != "off" and self.variant not in GSMOTE_VARIANTS:
            raise ConfigError("mixup requires a gsmote_* variant")
        if self.base_model not in ("graphsage", "gcn"):
            raise ConfigError(f"unknown base model {self.base_model!r}")
        if self.aggregator not in ("sum", "mean"):
            raise ConfigError(f"unknown aggregator {self.aggregator!r}")
        if self.oversample_mode not in ("uniform", "class_balanced"):
            raise ConfigError(f"unknown oversample mode {self.oversample_mode!r}")
        if self.lambda_edge < 0 or self.lambda_mix < 0:
            raise ConfigError("loss weights must be nonnegative")
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be at least 1")
        if self.variant in PRETRAIN_VARIANTS and self.pretrain_epochs < 1:
            raise ConfigError("pre-trained variants need pretrain_epochs >= 1")
        if not 0.0 < self.edge_threshold < 1.0:
            raise ConfigError("edge_threshold must lie strictly inside (0, 1)")
        if self.edge_activation not in ("leaky_relu", "relu", "identity"):
            raise ConfigError(f"unknown edge activation {self.edge_activation!r}")
        if self.hidden_dim < 1:
            raise ConfigError("hidden_dim must be positive")
        if self.oversample_mode == "uniform" and self.oversample_scale <= 0:
            raise ConfigError("uniform oversample_scale must be positive")
        if self.mixup != "off":
            self.mixup_config().validate()

    def mixup_config(self) -> MixupConfig:
        return MixupConfig(interpolation_scale=self.interpolation_scale,
                           mixup_ratio=self.mixup_ratio,
                           confidence=self.confidence_threshold,
                           weight=self.lambda_mix,
                           use_pseudo=self.mixup == "mix",
                           insertion=self.mix_insertion,
                           majority_only=self.mix_majority_only)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**d)
        cfg.validate()
        return cfg


@dataclass
class ModelParams:
    """Feature extractor, classifier (second block + head), and edge generator."""

    encoder: SageBlock
    block2: SageBlock
    head: ClassifierHead
    edge_gen: EdgeGenerator
    base_model: str = "graphsage"

    def parameters(self) -> list[Value]:
        return [self.encoder.weight, self.block2.weight,
                self.head.weight, self.edge_gen.weight]

    def snapshot(self) -> list[np.ndarray]:
        return [p.data.copy() for p in self.parameters()]

    def restore(self, snap: list[np.ndarray]) -> None:
        for p, s in zip(self.parameters(), snap):
            p.data = s.copy()
            p.zero_grad()


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_params(num_features: int, num_classes: int, config: ExperimentConfig,
                rng: np.random.Generator) -> ModelParams:
    h = config.hidden_dim
    enc_in = num_features if config.base_model == "gcn" else 2 * num_features
    blk_in = h if config.base_model == "gcn" else 2 * h
    w1 = ad.parameter(_glorot(rng, enc_in, h), name="W1")
    w2 = ad.parameter(_glorot(rng, blk_in, h), name="W2")
    wc = ad.parameter(_glorot(rng, 2 * h, num_classes), name="Wc")
    # the bilinear form squares the embedding scale; a cooler start keeps
    # early edge scores out of sigmoid saturation
    s = ad.parameter(0.1 * _glorot(rng, h, h), name="S")
    gen = EdgeGenerator(weight=s, activation=config.edge_activation)
    return ModelParams(encoder=SageBlock(weight=w1), block2=SageBlock(weight=w2),
                       head=ClassifierHead(weight=wc), edge_gen=gen,
                       base_model=config.base_model)


# ---------------------------------------------------------------------------
# cached per-run context


def _encoder_input(graph: AttributedGraph, base_model: str,
                   aggregator: str) -> np.ndarray:
    """Constant encoder input: concat(F, agg(A, F)) or the renormalized A@F."""
    a, f = graph.adjacency, graph.features
    if base_model == "gcn":
        s = 1.0 / np.sqrt(np.asarray(a.sum(axis=1)).ravel() + 1.0)
        scaled = f * s[:, None]
        return (np.asarray(a @ scaled) + scaled) * s[:, None]
    neighbor = np.asarray(a @ f)
    if aggregator == "mean":
        deg = np.asarray(a.sum(axis=1)).ravel()
        neighbor = neighbor * np.where(deg > 0, 1.0 / np.maximum(deg, 1e-12),
                                       0.0)[:, None]
    return np.hstack([f, neighbor])


@dataclass
class _RunContext:
    graph: AttributedGraph            # graph the model trains on
    masks: SplitMasks                 # masks used for the training loss
    eval_graph: AttributedGraph       # original graph, used for all metrics
    eval_masks: SplitMasks
    encoder_input: np.ndarray
    eval_encoder_input: np.ndarray
    a_dense: np.ndarray | None
    stats: ClassStats
    plan: OversamplePlan | None
    train_weights: np.ndarray | None  # per-train-node loss weights (reweight)


def _raw_augmented(graph: AttributedGraph, masks: SplitMasks,
                   plan: OversamplePlan, rng: np.random.Generator,
                   interpolated: bool) -> tuple[AttributedGraph, SplitMasks]:
    """Input-space over-sampling (duplication or raw-feature interpolation).

    New nodes copy the seed node's adjacency row, keeping the grown matrix
    symmetric and binary; they extend the training mask only.
    """
    if interpolated:
        batch = oversample(graph.features, graph.labels, masks.train, plan, rng)
        seeds = batch.parents[:, 0]
        new_feats = batch.embeddings
        new_labels = batch.labels
    else:
        seeds_list, labels_list = [], []
        y = graph.labels
        train = masks.train
        for c in np.flatnonzero(plan.per_class_new_count):
            members = train[y[train] == c]
            if members.size == 0:
                raise ValueError(f"class {c} has no labeled train nodes to duplicate")
            picked = rng.choice(members, size=int(plan.per_class_new_count[c]),
                                replace=True)
            seeds_list.append(picked)
            labels_list.append(np.full(picked.size, c, dtype=np.int64))
        seeds = (np.concatenate(seeds_list) if seeds_list
                 else np.zeros(0, dtype=np.intp))
        new_feats = graph.features[seeds]
        new_labels = (np.concatenate(labels_list) if labels_list
                      else np.zeros(0, dtype=np.int64))
    k = seeds.size
    n = graph.n
    if k == 0:
        return graph, masks
    strip = graph.adjacency[seeds, :].tocsr()
    grown = sp.bmat([[graph.adjacency, strip.T], [strip, None]], format="csr")
    grown.data[:] = 1.0
    aug = AttributedGraph(adjacency=grown,
                          features=np.vstack([graph.features, new_feats]),
                          labels=np.concatenate([graph.labels, new_labels]),
                          num_classes=graph.num_classes)
    new_masks = SplitMasks(train=np.concatenate([masks.train, np.arange(n, n + k)]),
                           validation=masks.validation, test=masks.test)
    return aug, new_masks


def _build_context(graph: AttributedGraph, masks: SplitMasks,
                   config: ExperimentConfig, rng: np.random.Generator
                   ) -> _RunContext:
    masks.validate(graph)
    stats = class_stats(graph, masks.train)
    plan = None
    if config.variant in GSMOTE_VARIANTS or config.variant in (
            "oversample_raw", "smote_raw", "embed_smote"):
        plan = build_plan(stats, config.oversample_mode, config.oversample_scale,
                          int(stats.sizes.sum()), graph.num_classes)

    train_graph, train_masks = graph, masks
    if config.variant in ("oversample_raw", "smote_raw"):
        train_graph, train_masks = _raw_augmented(
            graph, masks, plan, rng, interpolated=config.variant == "smote_raw")

    weights = None
    if config.variant == "reweight":
        m = graph.num_classes
        per_class = stats.sizes.sum() / (m * stats.sizes.astype(np.float64))
        weights = per_class[graph.labels[masks.train]]

    enc = _encoder_input(train_graph, config.base_model, config.aggregator)
    eval_enc = enc if train_graph is graph else _encoder_input(
        graph, config.base_model, config.aggregator)
    needs_edge = config.variant in GSMOTE_VARIANTS
    return _RunContext(
        graph=train_graph, masks=train_masks, eval_graph=graph, eval_masks=masks,
        encoder_input=enc, eval_encoder_input=eval_enc,
        a_dense=graph.adjacency.toarray() if needs_edge else None,
        stats=stats, plan=plan, train_weights=weights)


# ---------------------------------------------------------------------------
# forward passes


def _encode(params: ModelParams, encoder_input: np.ndarray) -> Value:
    # equals sage_forward / gcn_forward on the constant plain graph inputs
    return ad.relu(ad.matmul(Value(encoder_input), params.encoder.weight))


def _numpy_renorm(adjacency: sp.csr_matrix, x: np.ndarray) -> np.ndarray:
    s = 1.0 / np.sqrt(np.asarray(adjacency.sum(axis=1)).ravel() + 1.0)
    scaled = x * s[:, None]
    return (np.asarray(adjacency @ scaled) + scaled) * s[:, None]


def _numpy_softmax(logits: np.ndarray) -> np.ndarray:
    e = np.exp(logits - logits.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def predict_from_h1(params: ModelParams, adjacency: sp.csr_matrix,
                    h1: np.ndarray, aggregator: str = "sum") -> np.ndarray:
    """Detached plain-graph class probabilities from first-block embeddings."""
    relu = lambda x: np.maximum(x, 0.0)  # noqa: E731
    if params.base_model == "gcn":
        h2 = relu(_numpy_renorm(adjacency, h1) @ params.block2.weight.data)
        head_in = np.hstack([h2, _numpy_renorm(adjacency, h2)])
    else:
        neighbor = np.asarray(adjacency @ h1)
        if aggregator == "mean":
            deg = np.asarray(adjacency.sum(axis=1)).ravel()
            inv = np.where(deg > 0, 1.0 / np.maximum(deg, 1e-12), 0.0)
            neighbor = neighbor * inv[:, None]
        h2 = relu(np.hstack([h1, neighbor]) @ params.block2.weight.data)
        neighbor2 = np.asarray(adjacency @ h2)
        if aggregator == "mean":
            neighbor2 = neighbor2 * inv[:, None]
        head_in = np.hstack([h2, neighbor2])
    return _numpy_softmax(relu(head_in @ params.head.weight.data))


def predict(params: ModelParams, graph: AttributedGraph,
            aggregator: str = "sum") -> np.ndarray:
    """Class probabilities on the plain graph (no synthetic nodes)."""
    enc = _encoder_input(graph, params.base_model, aggregator)
    h1 = np.maximum(enc @ params.encoder.weight.data, 0.0)
    return predict_from_h1(params, graph.adjacency, h1, aggregator)


def _classifier_forward(params: ModelParams, adjacency, features: Value,
                        config: ExperimentConfig) -> Value:
    if config.base_model == "gcn":
        h2 = gcn_forward(params.block2.weight, adjacency, features)
        return classify(params.head, h2, adjacency, renormalize=True)
    h2 = sage_forward(params.block2, adjacency, features, config.aggregator)
    return classify(params.head, h2, adjacency, config.aggregator)


# ---------------------------------------------------------------------------
# loss assembly (one epoch's forward pass)


@dataclass
class LossBundle:
    total: Value
    node: Value
    edge: Value | None
    mix: Value | None
    h1: Value
    probs: Value
    aug: AugmentedGraph | None
    n_smote: int = 0
    n_mixed: int = 0

    def scalars(self) -> dict:
        return {
            "loss_total": self.total.item(),
            "loss_node": self.node.item(),
            "loss_edge": self.edge.item() if self.edge is not None else 0.0,
            "loss_mix": self.mix.item() if self.mix is not None else 0.0,
        }


def _embed_smote_losses(params: ModelParams, ctx: _RunContext,
                        config: ExperimentConfig, rng: np.random.Generator,
                        h1: Value) -> LossBundle:
    """Interpolate at the classifier-head input, so no edges are needed."""
    graph, masks = ctx.graph, ctx.masks
    adjacency = graph.adjacency
    if config.base_model == "gcn":
        h2 = gcn_forward(params.block2.weight, adjacency, h1)
        head_in = ad.concat_cols(h2, renorm_propagate(adjacency, h2))
    else:
        h2 = sage_forward(params.block2, adjacency, h1, config.aggregator)
        neighbor = ad.sparse_matmul(adjacency, h2)
        if config.aggregator == "mean":
            deg = np.asarray(adjacency.sum(axis=1)).ravel()
            neighbor = ad.row_scale(
                neighbor, np.where(deg > 0, 1.0 / np.maximum(deg, 1e-12), 0.0))
        head_in = ad.concat_cols(h2, neighbor)
    batch = oversample(head_in.data, graph.labels, masks.train, ctx.plan, rng)
    stacked = ad.concat_rows(head_in, synthetic_rows_value(head_in, batch))
    probs = ad.row_softmax(ad.relu(ad.matmul(stacked, params.head.weight)))
    labels_aug = np.concatenate([graph.labels, batch.labels])
    mask = np.concatenate([masks.train, np.arange(graph.n, graph.n + len(batch))])
    l_node = node_loss(probs, labels_aug, mask)
    return LossBundle(total=l_node, node=l_node, edge=None, mix=None,
                      h1=h1, probs=probs, aug=None, n_smote=len(batch))


def compute_losses(params: ModelParams, ctx: _RunContext,
                   config: ExperimentConfig, rng: np.random.Generator
                   ) -> LossBundle:
    """One forward pass of the full objective for the configured variant."""
    graph, masks = ctx.graph, ctx.masks
    h1 = _encode(params, ctx.encoder_input)
    if config.variant == "embed_smote":
        return _embed_smote_losses(params, ctx, config, rng, h1)

    pieces: list[AugmentPiece] = []
    soft = config.variant in SOFT_VARIANTS
    n_smote = n_mixed = 0

    if config.variant in GSMOTE_VARIANTS:
        batch = oversample(h1.data, graph.labels, masks.train, ctx.plan, rng)
        n_smote = len(batch)
        if n_smote:
            h_syn = synthetic_rows_value(h1, batch)
            if soft:
                strip = soft_strip_value(params.edge_gen, h_syn, h1)
            else:
                strip = threshold_strip(params.edge_gen, h_syn.data, h1.data,
                                        config.edge_threshold)
            pieces.append(AugmentPiece(embeddings=h_syn, strip=strip,
                                       labels=batch.labels, label_rows=None,
                                       provenance=PROV_SMOTE))

        if config.mixup != "off":
            mix_cfg = config.mixup_config()
            if mix_cfg.use_pseudo:
                plain = predict_from_h1(params, graph.adjacency, h1.data,
                                        config.aggregator)
                eff = pseudo_labels(plain, graph.labels, masks.train,
                                    mix_cfg.confidence)
            else:
                eff = np.full(graph.n, UNKNOWN_LABEL, dtype=np.int64)
                eff[masks.train] = graph.labels[masks.train]
            mix_batch = mix_nodes(h1.data, eff, ctx.stats, mix_cfg, rng)
            n_mixed = len(mix_batch)
            if n_mixed:
                strip = mixed_strip(params.edge_gen, mix_batch, graph,
                                    mix_cfg.insertion, h_real=h1,
                                    eta=config.edge_threshold, soft=soft)
                pieces.append(AugmentPiece(
                    embeddings=synthetic_rows_value(h1, mix_batch), strip=strip,
                    labels=np.full(n_mixed, UNKNOWN_LABEL, dtype=np.int64),
                    label_rows=mix_batch.label_rows, provenance=PROV_MIXED))

    aug = assemble_augmented(graph, h1, pieces)
    probs = _classifier_forward(params, aug.adjacency_aug, aug.embeddings_aug,
                                config)

    node_mask = np.concatenate([masks.train, aug.synthetic_indices(PROV_SMOTE)])
    weights = None
    if ctx.train_weights is not None:
        weights = ctx.train_weights  # baselines never add synthetic rows
    l_node = node_loss(probs, aug.labels_aug, node_mask, weights=weights)

    l_edge = None
    if config.variant in GSMOTE_VARIANTS and config.lambda_edge != 0.0:
        l_edge = edge_loss(params.edge_gen, h1, ctx.a_dense)

    l_mix = None
    mixed_idx = aug.synthetic_indices(PROV_MIXED)
    if mixed_idx.size:
        l_mix = mix_loss(ad.take_rows(probs, mixed_idx),
                         aug.label_rows[mixed_idx])

    total = l_node
    if l_edge is not None:
        total = ad.add(total, ad.scale(l_edge, config.lambda_edge))
    if l_mix is not None:
        total = ad.add(total, ad.scale(l_mix, config.lambda_mix))
    return LossBundle(total=total, node=l_node, edge=l_edge, mix=l_mix,
                      h1=h1, probs=probs, aug=aug,
                      n_smote=n_smote, n_mixed=n_mixed)


# ---------------------------------------------------------------------------
# training loops


def pretrain(params: ModelParams, graph: AttributedGraph, epochs: int,
             learning_rate: float = 1e-3, weight_decay: float = 5e-4,
             aggregator: str = "sum", tolerance: float = 1e-3,
             window: int = 20, encoder_input: np.ndarray | None = None,
             a_dense: np.ndarray | None = None) -> list[float]:
    """Train the encoder and edge generator on reconstruction loss alone.

    Runs at most ``epochs`` epochs, stopping early once the best loss has
    improved by less than ``tolerance`` (relative) over the last ``window``
    epochs. Returns the per-epoch loss trace.
    """
    if epochs < 1:
        raise ConfigError("pretrain requires epochs >= 1")
    if encoder_input is None:
        encoder_input = _encoder_input(graph, params.base_model, aggregator)
    if a_dense is None:
        a_dense = graph.adjacency.toarray()
    targets = [params.encoder.weight, params.edge_gen.weight]
    state = AdamState(targets, learning_rate=learning_rate,
                      weight_decay=weight_decay)
    losses: list[float] = []
    best = np.inf
    since_improved = 0
    for _ in range(epochs):
        h1 = _encode(params, encoder_input)
        loss = edge_loss(params.edge_gen, h1, a_dense)
        backward(loss)
        adam_step(targets, state)
        value = loss.item()
        losses.append(value)
        if value < best * (1.0 - tolerance):
            best = min(best, value)
            since_improved = 0
        else:
            best = min(best, value)
            since_improved += 1
            if since_improved >= window:
                break
    return losses


def _fill_missing_grads(params: ModelParams) -> None:
    # parameters outside a variant's objective (e.g. S under origin) get a
    # zero gradient so the shared optimizer can step the full list
    for p in params.parameters():
        if p.grad is None:
            p.grad = np.zeros_like(p.data)


def train_epoch(params: ModelParams, ctx: _RunContext, config: ExperimentConfig,
                rng: np.random.Generator, state: AdamState) -> dict:
    """One optimization step; returns loss scalars and synthetic-node counts."""
    bundle = compute_losses(params, ctx, config, rng)
    backward(bundle.total)
    _fill_missing_grads(params)
    adam_step(params.parameters(), state)
    out = bundle.scalars()
    out["n_smote"] = bundle.n_smote
    out["n_mixed"] = bundle.n_mixed
    return out


@dataclass
class TrainResult:
    params: ModelParams
    history: list[dict] = field(default_factory=list)
    pretrain_losses: list[float] = field(default_factory=list)
    best_epoch: int = 0
    validation: EvalReport | None = None
    test: EvalReport | None = None


def train(config: ExperimentConfig, graph: AttributedGraph,
          masks: SplitMasks) -> TrainResult:
    """Full run: optional pre-training, epoch loop with best-validation
    checkpointing (macro-F), final restore, and test evaluation."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    params = init_params(graph.num_features, graph.num_classes, config, rng)
    ctx = _build_context(graph, masks, config, rng)

    result = TrainResult(params=params)
    if config.variant in PRETRAIN_VARIANTS:
        result.pretrain_losses = pretrain(
            params, ctx.eval_graph, config.pretrain_epochs,
            learning_rate=config.learning_rate, weight_decay=config.weight_decay,
            aggregator=config.aggregator, tolerance=config.pretrain_tolerance,
            window=config.pretrain_window,
            encoder_input=ctx.eval_encoder_input, a_dense=ctx.a_dense)

    state = AdamState(params.parameters(), learning_rate=config.learning_rate,
                      weight_decay=config.weight_decay)
    best_f = -np.inf
    best_snap = params.snapshot()
    best_epoch = 0
    y_eval = ctx.eval_graph.labels
    for epoch in range(1, config.max_epochs + 1):
        bundle = compute_losses(params, ctx, config, rng)
        # validation with this epoch's (pre-update) parameters, plain graph
        if ctx.graph is ctx.eval_graph:
            h1_eval = bundle.h1.data
        else:
            h1_eval = np.maximum(
                ctx.eval_encoder_input @ params.encoder.weight.data, 0.0)
        probs_val = predict_from_h1(params, ctx.eval_graph.adjacency, h1_eval,
                                    config.aggregator)
        val = evaluate(probs_val, y_eval, ctx.eval_masks.validation)
        if val.macro_f > best_f:
            best_f = val.macro_f
            best_snap = params.snapshot()
            best_epoch = epoch
        backward(bundle.total)
        _fill_missing_grads(params)
        adam_step(params.parameters(), state)
        row = {"epoch": epoch, **bundle.scalars(),
               "n_smote": bundle.n_smote, "n_mixed": bundle.n_mixed,
               "val_accuracy": val.accuracy, "val_macro_auc": val.macro_auc,
               "val_macro_f": val.macro_f}
        result.history.append(row)
        if config.patience and epoch - best_epoch >= config.patience:
            break

    # the state after the last update is one more checkpoint candidate
    probs_val = predict(params, ctx.eval_graph, config.aggregator)
    val = evaluate(probs_val, y_eval, ctx.eval_masks.validation)
    if val.macro_f > best_f:
        best_snap = params.snapshot()
        best_epoch = len(result.history) + 1

    params.restore(best_snap)
    result.best_epoch = best_epoch
    probs = predict(params, ctx.eval_graph, config.aggregator)
    result.validation = evaluate(probs, y_eval, ctx.eval_masks.validation)
    result.test = evaluate(probs, y_eval, ctx.eval_masks.test)
    return result


def run_baseline(kind: str, graph: AttributedGraph, masks: SplitMasks,
                 config: ExperimentConfig) -> EvalReport:
    """Train one of the reference methods and report test metrics."""
    if kind not in BASELINE_VARIANTS:
        raise ConfigError(f"unknown baseline {kind!r}")
    cfg = dataclasses.replace(config, variant=kind, mixup="off")
    return train(cfg, graph, masks).test
