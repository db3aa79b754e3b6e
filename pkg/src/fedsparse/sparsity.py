"""Unstructured Top-K pruning and binary-mask algebra.

All pruning is magnitude-based: given a target sparsity ``s`` over ``n``
entries, exactly ``k = ceil((1 - s) * n)`` entries survive (the largest by
absolute value) and everything else becomes an exact ``0.0``.  Ties are
broken by keeping the lowest flat index, which makes every prune
deterministic and architecture-independent.

Masks are flat boolean vectors aligned to a model's fixed flattened-weight
ordering (layer order, then row-major within a layer; biases are never part
of a mask).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .errors import ConfigError

if TYPE_CHECKING:  # pragma: no cover
    from .nn import Model


def keep_count(n: int, sparsity: float) -> int:
    """Number of survivors of a Top-K prune: ``ceil((1 - s) * n)``.

    Evaluated exactly for the binary64 value of ``s`` (via Fraction), so the
    result never depends on intermediate float rounding.  ``s < 1`` implies
    at least one survivor.
    """
    if not 0.0 <= sparsity < 1.0:
        raise ConfigError(f"sparsity must be in [0, 1), got {sparsity}")
    if n == 0:
        return 0
    return n - math.floor(Fraction(sparsity) * n)


def topk_mask_by_count(values: np.ndarray, k: int) -> np.ndarray:
    """Boolean mask keeping the k largest |values|, ties to the lowest flat index."""
    flat = np.abs(np.ravel(values))
    mask = np.zeros(flat.shape[0], dtype=bool)
    if k > 0:
        # stable sort on -|x| keeps the earliest index first among ties
        order = np.argsort(-flat, kind="stable")
        mask[order[:k]] = True
    return mask.reshape(values.shape)


def topk_mask(values: np.ndarray, sparsity: float) -> np.ndarray:
    return topk_mask_by_count(values, keep_count(values.size, sparsity))


def topk_global(flat_params: np.ndarray, sparsity: float) -> np.ndarray:
    """Prune a flattened parameter vector to the target sparsity.

    Returns a new array with the k kept entries unchanged and all others set
    to exact 0.0.
    """
    if flat_params.ndim != 1:
        raise ValueError("topk_global expects a flattened parameter view")
    mask = topk_mask(flat_params, sparsity)
    return np.where(mask, flat_params, 0.0)


def topk_per_layer(tensor: np.ndarray, sparsity: float) -> np.ndarray:
    """Top-K prune a single tensor; flat index ties follow row-major order."""
    mask = topk_mask(tensor, sparsity)
    return np.where(mask, tensor, 0.0)


def layer_sparsity(tensor: np.ndarray) -> float:
    """Fraction of entries that are exact 0.0."""
    if tensor.size == 0:
        return 0.0
    return float(np.count_nonzero(tensor == 0.0) / tensor.size)


@dataclass
class SparseMask:
    """Binary indicator over a model's flattened weights (biases excluded)."""

    bits: np.ndarray
    layer_offsets: list[tuple[int, int]]

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=bool).ravel()

    def __len__(self) -> int:
        return int(self.bits.shape[0])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SparseMask):
            return NotImplemented
        return len(self) == len(other) and bool(np.array_equal(self.bits, other.bits))

    @property
    def nnz(self) -> int:
        return int(np.count_nonzero(self.bits))

    @property
    def density(self) -> float:
        return self.nnz / len(self) if len(self) else 0.0

    def layer_bits(self, layer: int) -> np.ndarray:
        start, stop = self.layer_offsets[layer]
        return self.bits[start:stop]


def mask_of(model: "Model") -> SparseMask:
    """Mask with bit i set iff flattened weight i is nonzero."""
    return SparseMask(model.flat_weights() != 0.0, model.layer_offsets())


def mask_iou(a: SparseMask, b: SparseMask) -> float:
    """Intersection over union of two masks; 1.0 when both are empty."""
    if len(a) != len(b):
        raise ValueError(f"mask length mismatch: {len(a)} vs {len(b)}")
    union = int(np.count_nonzero(a.bits | b.bits))
    if union == 0:
        return 1.0
    inter = int(np.count_nonzero(a.bits & b.bits))
    return inter / union


def regrowth_count(before: SparseMask, after: SparseMask) -> int:
    """Positions that switched from zero to nonzero."""
    if len(before) != len(after):
        raise ValueError(f"mask length mismatch: {len(before)} vs {len(after)}")
    return int(np.count_nonzero(~before.bits & after.bits))


@dataclass
class SparsityReport:
    """Global and per-layer zero fractions of a model's weights."""

    global_sparsity: float
    per_layer_sparsity: list[float]


def sparsity_report(model: "Model") -> SparsityReport:
    per_layer = [layer_sparsity(w) for w in model.weights]
    sizes = np.array([w.size for w in model.weights], dtype=float)
    total = sizes.sum()
    global_s = float(np.dot(sizes, per_layer) / total) if total else 0.0
    return SparsityReport(global_s, per_layer)


def prune_model_global(model: "Model", sparsity: float) -> None:
    """Apply global unstructured Top-K over the model's flattened weights."""
    model.set_flat_weights(topk_global(model.flat_weights(), sparsity))


def allocate_counts(raw: Sequence[float], sizes: Sequence[int], total: int) -> list[int]:
    """Largest-remainder rounding of per-layer keep budgets to integers.

    ``raw`` are fractional keep counts per layer (already capped at the layer
    size); the result sums to ``total`` exactly, respecting 0 <= c_l <= n_l.
    """
    floors = [min(int(math.floor(r)), n) for r, n in zip(raw, sizes)]
    remainder = total - sum(floors)
    if remainder < 0:
        # over-allocation can only come from caller rounding; trim largest floors
        order = sorted(range(len(floors)), key=lambda i: -floors[i])
        for i in order:
            if remainder == 0:
                break
            take = min(floors[i], -remainder)
            floors[i] -= take
            remainder += take
    fracs = sorted(
        range(len(raw)),
        key=lambda i: (-(raw[i] - math.floor(raw[i])), i),
    )
    while remainder > 0:
        progressed = False
        for i in fracs:
            if remainder == 0:
                break
            if floors[i] < sizes[i]:
                floors[i] += 1
                remainder -= 1
                progressed = True
        if not progressed:
            raise ConfigError("keep-count allocation infeasible: budget exceeds capacity")
    return floors
