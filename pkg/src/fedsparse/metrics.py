"""Per-round measurements and result emission.

Communication is accounted in nonzero weight entries, independent of cohort
size: downlink counts the broadcast global model once per round, uplink is
the mean payload size over the sampled clients.  Bias parameters are
excluded from every count, mask, and sparsity statistic.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .nn import Model, forward
from .reparam import Identity, ReparamFn
from .sparsity import SparseMask, mask_iou

log = logging.getLogger(__name__)

_IDENTITY = Identity()


@dataclass
class RoundReport:
    """One federated round, measured on the server after aggregation."""

    round: int
    test_accuracy: float
    global_sparsity: float
    per_layer_sparsity: list[float]
    downlink_nnz: int
    uplink_nnz_mean: float
    cumulative_comm_nnz: float
    mean_client_regrowth: float
    global_l2_from_init: float
    round_l2: float
    round_cosine: float
    client_cosine_mean: float
    mask: SparseMask | None = None
    # in-memory diagnostics, not part of the CSV schema
    client_payload_nnz: list[tuple[int, int]] = field(default_factory=list)
    client_regrowth: list[tuple[int, int]] = field(default_factory=list)


CSV_COLUMNS = [
    "round", "test_accuracy", "global_sparsity", "downlink_nnz",
    "uplink_nnz_mean", "cumulative_comm_nnz", "mean_client_regrowth",
    "global_l2_from_init", "round_l2", "round_cosine", "client_cosine_mean",
]


def comm_cost(broadcast_nnz: int, payload_nnzs: Sequence[int]) -> tuple[int, float]:
    """(downlink, mean uplink) nonzero counts for one round."""
    uplink = float(np.mean(payload_nnzs)) if payload_nnzs else 0.0
    return int(broadcast_nnz), uplink


def iou_matrix(masks: Sequence[SparseMask]) -> np.ndarray:
    """Symmetric IoU matrix across retained round masks; unit diagonal."""
    n = len(masks)
    out = np.ones((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            out[i, j] = out[j, i] = mask_iou(masks[i], masks[j])
    return out


_warned_zero_cosine = False


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity; defined as 0.0 when either vector is all-zero."""
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        global _warned_zero_cosine
        if not _warned_zero_cosine:
            log.warning("cosine of an all-zero vector, returning 0.0 "
                        "(further occurrences logged at debug level)")
            _warned_zero_cosine = True
        else:
            log.debug("cosine of an all-zero vector, returning 0.0")
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def weight_movement(w_init: np.ndarray, w_prev: np.ndarray, w_new: np.ndarray,
                    client_deltas: Sequence[np.ndarray]):
    """L2/cosine statistics of one aggregation step over flattened weights.

    Returns (global_l2, round_l2, round_cos, client_cos_mean); the client
    term averages cosine similarity over unordered pairs of updates and is
    0.0 when fewer than two clients reported.
    """
    global_l2 = float(np.linalg.norm(w_new - w_init))
    round_l2 = float(np.linalg.norm(w_new - w_prev))
    round_cos = cosine(w_prev, w_new)
    pair_cosines = []
    for i in range(len(client_deltas)):
        for j in range(i + 1, len(client_deltas)):
            pair_cosines.append(cosine(client_deltas[i], client_deltas[j]))
    client_cos = float(np.mean(pair_cosines)) if pair_cosines else 0.0
    return global_l2, round_l2, round_cos, client_cos


def evaluate(model: Model, test_inputs: np.ndarray, test_labels: np.ndarray,
             reparam: ReparamFn | None = None) -> float:
    """Argmax-of-logits accuracy; argmax ties go to the lowest class index.

    The reparametrization is part of the trained network's forward
    semantics, so evaluation applies the same one used in training.
    """
    rp = reparam if reparam is not None else _IDENTITY
    trace, _ = forward(model, rp, (test_inputs, test_labels))
    predicted = np.argmax(trace.logits, axis=1)
    return float(np.mean(predicted == test_labels))


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_rounds_csv(reports: Sequence[RoundReport], path: Path) -> None:
    lines = [",".join(CSV_COLUMNS)]
    for r in reports:
        lines.append(",".join(_fmt(getattr(r, col)) for col in CSV_COLUMNS))
    path.write_text("\n".join(lines) + "\n")


def write_layer_sparsity_csv(reports: Sequence[RoundReport], path: Path) -> None:
    if not reports:
        path.write_text("round\n")
        return
    width = len(reports[0].per_layer_sparsity)
    header = ["round"] + [f"layer_{i}" for i in range(width)]
    lines = [",".join(header)]
    for r in reports:
        lines.append(",".join([str(r.round)] + [repr(v) for v in r.per_layer_sparsity]))
    path.write_text("\n".join(lines) + "\n")


def write_iou_csv(reports: Sequence[RoundReport], path: Path) -> None:
    masks = [r.mask for r in reports if r.mask is not None]
    matrix = iou_matrix(masks)
    lines = [",".join(repr(v) for v in row) for row in matrix]
    path.write_text("\n".join(lines) + ("\n" if lines else ""))


def write_summary_json(payload: dict, path: Path) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
