"""Desk-scale simulator for sparse federated training.

Implements a federated round loop with pluggable sparse client algorithms
(re-parametrized adaptive pruning, plain Top-K, SWAT-style training, a
fixed-sensitivity-mask baseline, dense and dense-then-prune references),
plus the sparsity-dynamics metrics used to compare them: mask IoU across
rounds, weight regrowth, nonzero communication cost, and weight-movement
statistics.
"""

from .data import LabeledDataset, lda_partition, make_synthetic
from .errors import ConfigError, NumericError, UsageError
from .federation import (FedConfig, FederationResult, run_federation,
                         sample_clients)
from .metrics import RoundReport, evaluate, iou_matrix
from .nn import LayerSpec, LrSchedule, Model, conv_net, lr_at, mlp
from .reparam import make_reparam
from .sparsity import (SparseMask, keep_count, layer_sparsity, mask_iou,
                       mask_of, regrowth_count, topk_global, topk_per_layer)

__all__ = [
    "ConfigError", "NumericError", "UsageError",
    "LabeledDataset", "lda_partition", "make_synthetic",
    "FedConfig", "FederationResult", "run_federation", "sample_clients",
    "RoundReport", "evaluate", "iou_matrix",
    "LayerSpec", "LrSchedule", "Model", "conv_net", "lr_at", "mlp",
    "make_reparam",
    "SparseMask", "keep_count", "layer_sparsity", "mask_iou", "mask_of",
    "regrowth_count", "topk_global", "topk_per_layer",
]

__version__ = "0.1.0"
