"""Imbalanced semi-supervised node classification on graphs: synthetic
minority over-sampling in a learned embedding space, a trained edge
generator to wire synthetic nodes in, and an optional cross-class mixup
extension."""

from .autodiff import AdamState, Value, adam_step, backward, grad_check
from .edgegen import (AugmentedGraph, EdgeGenerator, augment_soft,
                      augment_threshold, edge_loss, predict_edges)
from .gnn import ClassifierHead, SageBlock, classify, gcn_forward, node_loss, sage_forward
from .graph import (AttributedGraph, ClassStats, DatasetError, SplitMasks,
                    UNKNOWN_LABEL, class_stats, generate_synthetic_graph,
                    load_graph, make_imbalanced_split, prepare_cora, save_graph)
from .metrics import EvalReport, accuracy, evaluate, macro_auc_roc, macro_f1
from .mixup import MixupConfig, insert_mixed, mix_loss, mix_nodes, pseudo_labels
from .smote import (OversamplePlan, SyntheticBatch, build_plan, interpolate,
                    nearest_same_class, oversample)
from .trainer import (ExperimentConfig, ModelParams, TrainResult, predict,
                      pretrain, run_baseline, train, train_epoch)

__all__ = [name for name in dir() if not name.startswith("_")]
