"""Federated orchestration: round loop, client algorithms, aggregators.

Every algorithm follows the same skeleton: the server broadcasts the global
model, sampled clients train locally and send back a sparse payload (their
post-training model after communication pruning), and the server folds the
implied pseudo-gradients (payload minus broadcast) into the global model.
Sparsity of the global model is therefore emergent: a coordinate becomes an
exact zero only when every sampled client dropped it.

Client algorithms:

- ``adaptive``    re-parametrized local training with layer-wise activation
                  pruning driven by each layer's own weight sparsity, then a
                  global Top-K prune of the trained model at the target.
- ``topk``        plain dense local training, same communication prune.
- ``zerofl``      SWAT-style steps: per-layer Top-K on a forward working
                  copy of the weights and fixed-rate activation pruning,
                  with dense gradients applied to the full weights; same
                  communication prune.
- ``flash``       dense warm-up round, then a fixed global mask derived from
                  per-layer sensitivities; gradients are masked so the
                  update support never leaves the mask.
- ``naive_powerprop``  re-parametrized but entirely dense training; the
                  server prunes the global model once after the final round.
- ``dense``       no pruning anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import LabeledDataset, batch_indices
from .errors import ConfigError, NumericError
from .metrics import RoundReport, comm_cost, evaluate, weight_movement
from .nn import (LrSchedule, Model, backward, forward, lr_at,
                 prune_trace_activations, sgd_step)
from .reparam import Identity, ReparamFn, make_reparam
from .seeding import rng_for
from .sparsity import (SparseMask, allocate_counts, keep_count, layer_sparsity,
                       mask_of, prune_model_global, regrowth_count,
                       sparsity_report, topk_global, topk_mask_by_count,
                       topk_per_layer)

ALGORITHMS = ("adaptive", "topk", "zerofl", "flash", "naive_powerprop", "dense")

# zerofl and flash aggregate among nonzero contributions; the rest use
# plain pseudo-gradient averaging
DEFAULT_AGGREGATORS = {
    "adaptive": "fedavg",
    "topk": "fedavg",
    "zerofl": "nonzero_avg",
    "flash": "nonzero_avg",
    "naive_powerprop": "fedavg",
    "dense": "fedavg",
}

# algorithms whose transmitted payload is Top-K pruned to the client target
_PRUNED_PAYLOAD = ("adaptive", "topk", "zerofl")


@dataclass
class FedConfig:
    """Knobs of one federated run."""

    rounds: int
    clients_total: int
    clients_per_round: int
    local_epochs: int = 1
    batch_size: int = 16
    algorithm: str = "adaptive"
    target_sparsity: float | Sequence[float] = 0.9
    group_sizes: Sequence[int] | None = None
    reparam: str = "powerprop"
    beta: float = 1.25
    activation_pruning: bool = True
    lr_start: float = 0.5
    lr_end: float = 0.01
    aggregator: str | None = None
    client_weighting: str = "uniform"
    sampling_seed: int = 5378
    global_seed: int = 1337
    mask_every: int = 1

    def validate(self) -> None:
        if self.rounds < 0:
            raise ConfigError("rounds must be >= 0")
        if self.clients_total < 1:
            raise ConfigError("clients_total must be >= 1")
        if not 1 <= self.clients_per_round <= self.clients_total:
            raise ConfigError("clients_per_round must be in [1, clients_total]")
        if self.local_epochs < 1:
            raise ConfigError("local_epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}")
        for s in self.group_targets():
            if not 0.0 <= s < 1.0:
                raise ConfigError(f"target sparsity must be in [0, 1), got {s}")
        if self.group_sizes is not None:
            if sum(self.group_sizes) != self.clients_total:
                raise ConfigError("group sizes must sum to clients_total")
            if any(g < 1 for g in self.group_sizes):
                raise ConfigError("group sizes must be positive")
            targets = self.group_targets()
            if len(targets) != len(self.group_sizes):
                raise ConfigError("one target sparsity per client group required")
            if self.algorithm == "flash":
                raise ConfigError("flash does not support heterogeneous targets")
        elif not np.isscalar(self.target_sparsity):
            raise ConfigError("list-valued target_sparsity requires group_sizes")
        if self.aggregator not in (None, "fedavg", "nonzero_avg"):
            raise ConfigError(f"unknown aggregator {self.aggregator!r}")
        if self.client_weighting not in ("uniform", "samples"):
            raise ConfigError(f"unknown client weighting {self.client_weighting!r}")
        if self.lr_start <= 0 or self.lr_end <= 0:
            raise ConfigError("learning rates must be positive")
        if self.mask_every < 1:
            raise ConfigError("mask_every must be >= 1")
        make_reparam(self.reparam, self.beta)  # raises on bad kind / beta

    def group_targets(self) -> list[float]:
        if np.isscalar(self.target_sparsity):
            return [float(self.target_sparsity)]
        return [float(s) for s in self.target_sparsity]

    @property
    def heterogeneous(self) -> bool:
        return self.group_sizes is not None

    def group_of(self, client_id: int) -> int:
        if not self.heterogeneous:
            return 0
        edge = 0
        for g, size in enumerate(self.group_sizes):
            edge += size
            if client_id < edge:
                return g
        raise ConfigError(f"client {client_id} outside population")

    def target_for(self, client_id: int) -> float:
        return self.group_targets()[self.group_of(client_id)]

    def resolved_aggregator(self) -> str:
        return self.aggregator or DEFAULT_AGGREGATORS[self.algorithm]


@dataclass
class ClientUpdate:
    """One client's contribution to a round.

    `payload_*` is the transmitted object (the post-training model after
    communication pruning); `weight_delta` is the pseudo-gradient relative
    to the model this client received.
    """

    client_id: int
    payload_weights: list[np.ndarray]
    payload_biases: list[np.ndarray | None]
    weight_delta: list[np.ndarray]
    bias_delta: list[np.ndarray | None]
    payload_nnz: int
    regrowth: int
    num_samples: int
    target_sparsity: float
    pre_mask: SparseMask
    post_mask: SparseMask

    def flat_delta(self) -> np.ndarray:
        return np.concatenate([d.ravel() for d in self.weight_delta])


@dataclass
class FederationResult:
    reports: list[RoundReport]
    model: Model
    final_accuracy: float
    final_sparsity: float


def sample_clients(population: int, count: int, round_index: int,
                   seed: int) -> np.ndarray:
    """Uniform sample without replacement, deterministic in (seed, round)."""
    if not 1 <= count <= population:
        raise ConfigError("sample size must be in [1, population]")
    rng = rng_for(seed, "client-sample", round_index)
    return np.sort(rng.choice(population, size=count, replace=False))


def _coefficients(updates: Sequence[ClientUpdate], weighting: str) -> list[float]:
    if weighting == "samples":
        total = float(sum(u.num_samples for u in updates))
        return [u.num_samples / total for u in updates]
    return [1.0 / len(updates)] * len(updates)


def aggregate_fedavg(model: Model, updates: Sequence[ClientUpdate],
                     weighting: str = "uniform") -> None:
    """w <- w + weighted mean of client pseudo-gradients (in place).

    Evaluated as the weighted mean of the transmitted models (identical
    for the common broadcast all clients received), so a coordinate every
    client dropped aggregates to an exact 0.0 instead of cancellation dust.
    """
    if not updates:
        return
    coeffs = _coefficients(updates, weighting)
    for l in range(model.num_layers):
        acc = np.zeros_like(model.weights[l])
        for c, u in zip(coeffs, updates):
            acc += c * u.payload_weights[l]
        model.weights[l] = acc
        if model.biases[l] is not None:
            bacc = np.zeros_like(model.biases[l])
            for c, u in zip(coeffs, updates):
                if u.payload_biases[l] is not None:
                    bacc += c * u.payload_biases[l]
            model.biases[l] = bacc
    model.bump_version()


def aggregate_nonzero_avg(model: Model, updates: Sequence[ClientUpdate]) -> None:
    """Per coordinate, average the update only over clients that touched it.

    w_j <- w_j + sum_i d_ij / max(1, #{i : d_ij != 0}), evaluated as the
    plain mean of the touching clients' transmitted values; coordinates no
    client touched keep their exact previous value.
    """
    if not updates:
        return
    for l in range(model.num_layers):
        w = model.weights[l]
        touching = np.zeros(w.shape)
        total = np.zeros_like(w)
        for u in updates:
            touched = u.payload_weights[l] != w
            touching += touched
            total += np.where(touched, u.payload_weights[l], 0.0)
        model.weights[l] = np.where(touching > 0,
                                    total / np.maximum(touching, 1.0), w)
        if model.biases[l] is not None:
            b = model.biases[l]
            btouch = np.zeros(b.shape)
            btotal = np.zeros_like(b)
            for u in updates:
                if u.payload_biases[l] is not None:
                    touched = u.payload_biases[l] != b
                    btouch += touched
                    btotal += np.where(touched, u.payload_biases[l], 0.0)
            model.biases[l] = np.where(btouch > 0,
                                       btotal / np.maximum(btouch, 1.0), b)
    model.bump_version()


def _aggregate_delta(model: Model, updates: Sequence[ClientUpdate],
                     cfg: FedConfig) -> None:
    """Pseudo-gradient-space aggregation for heterogeneous broadcasts.

    With per-group pruned broadcasts the clients' reference models differ,
    so aggregation folds each delta relative to what that client received.
    """
    if not updates:
        return
    if cfg.resolved_aggregator() == "nonzero_avg":
        for l in range(model.num_layers):
            total = np.zeros_like(model.weights[l])
            touching = np.zeros(model.weights[l].shape)
            for u in updates:
                total += u.weight_delta[l]
                touching += u.weight_delta[l] != 0.0
            model.weights[l] += total / np.maximum(touching, 1.0)
            if model.biases[l] is not None:
                for u in updates:
                    if u.bias_delta[l] is not None:
                        model.biases[l] += u.bias_delta[l] / len(updates)
        model.bump_version()
        return
    coeffs = _coefficients(updates, cfg.client_weighting)
    for l in range(model.num_layers):
        acc = np.zeros_like(model.weights[l])
        for c, u in zip(coeffs, updates):
            acc += c * u.weight_delta[l]
        model.weights[l] += acc
        if model.biases[l] is not None:
            for c, u in zip(coeffs, updates):
                if u.bias_delta[l] is not None:
                    model.biases[l] += c * u.bias_delta[l]
    model.bump_version()


def _apply_aggregator(model: Model, updates: Sequence[ClientUpdate],
                      cfg: FedConfig) -> None:
    if cfg.heterogeneous:
        _aggregate_delta(model, updates, cfg)
    elif cfg.resolved_aggregator() == "nonzero_avg":
        aggregate_nonzero_avg(model, updates)
    else:
        aggregate_fedavg(model, updates, cfg.client_weighting)


def _client_reparam(cfg: FedConfig) -> ReparamFn:
    """Fresh per-session instance; baselines other than the re-parametrized
    pipelines always train with identity."""
    if cfg.algorithm in ("adaptive", "naive_powerprop"):
        return make_reparam(cfg.reparam, cfg.beta)
    return Identity()


def _local_steps(model: Model, reparam: ReparamFn, train: LabeledDataset,
                 idx: np.ndarray, cfg: FedConfig, eta: float, round_index: int,
                 client_id: int, *, act_rule: str | None = None,
                 fixed_act_sparsity: float = 0.0,
                 forward_weight_prune: float | None = None,
                 grad_masks: Sequence[np.ndarray] | None = None) -> None:
    """Mini-batch SGD over `local_epochs` passes; mutates `model` in place."""
    for epoch in range(cfg.local_epochs):
        rng = rng_for(cfg.global_seed, "batches", round_index, client_id, epoch)
        for rows in batch_indices(idx.size, cfg.batch_size, rng):
            batch_rows = idx[rows]
            batch = (train.inputs[batch_rows], train.labels[batch_rows])
            if forward_weight_prune is not None:
                fwd_model = model.copy()
                for l, w in enumerate(fwd_model.weights):
                    fwd_model.weights[l] = topk_per_layer(w, forward_weight_prune)
            else:
                fwd_model = model
            trace, _ = forward(fwd_model, reparam, batch)
            if act_rule == "layerwise":
                # zero pattern of theta equals that of the raw weights
                prune_trace_activations(
                    trace, [layer_sparsity(w) for w in fwd_model.weights])
            elif act_rule == "fixed":
                prune_trace_activations(
                    trace, [fixed_act_sparsity] * fwd_model.num_layers)
            wgrads, bgrads = backward(fwd_model, reparam, trace, batch[1])
            if grad_masks is not None:
                wgrads = [g * m for g, m in zip(wgrads, grad_masks)]
            sgd_step(model, wgrads, bgrads, eta)


def run_client(cfg: FedConfig, broadcast: Model, train: LabeledDataset,
               idx: np.ndarray, eta: float, round_index: int, client_id: int,
               flash_mask: SparseMask | None) -> ClientUpdate:
    """Execute one sampled client's local optimization and payload pruning."""
    target = cfg.target_for(client_id)
    local = broadcast.copy()
    pre_mask = mask_of(broadcast)
    reparam = _client_reparam(cfg)
    algorithm = cfg.algorithm

    kwargs: dict = {}
    if algorithm == "adaptive" and cfg.activation_pruning:
        kwargs["act_rule"] = "layerwise"
    elif algorithm == "zerofl":
        # SWAT is intrinsic to this baseline, independent of the ablation flag
        kwargs.update(act_rule="fixed", fixed_act_sparsity=target,
                      forward_weight_prune=target)
    elif algorithm == "flash" and flash_mask is not None:
        kwargs["grad_masks"] = [
            flash_mask.layer_bits(l).reshape(w.shape).astype(np.float64)
            for l, w in enumerate(local.weights)]

    _local_steps(local, reparam, train, idx, cfg, eta, round_index, client_id,
                 **kwargs)

    regrowth = regrowth_count(pre_mask, mask_of(local))
    if algorithm in _PRUNED_PAYLOAD:
        prune_model_global(local, target)
    post_mask = mask_of(local)
    deltas = [lw - bw for lw, bw in zip(local.weights, broadcast.weights)]
    bias_deltas = [None if lb is None else lb - bb
                   for lb, bb in zip(local.biases, broadcast.biases)]
    return ClientUpdate(
        client_id=client_id,
        payload_weights=local.weights,
        payload_biases=local.biases,
        weight_delta=deltas,
        bias_delta=bias_deltas,
        payload_nnz=local.weight_nnz(),
        regrowth=regrowth,
        num_samples=int(idx.size),
        target_sparsity=target,
        pre_mask=pre_mask,
        post_mask=post_mask,
    )


def flash_sensitivity_layer_stats(updates: Sequence[ClientUpdate],
                                  offsets: Sequence[tuple[int, int]],
                                  s_hat: float) -> list[float]:
    """Mean per-layer sparsity of each warm-up update after a global Top-K."""
    per_layer = np.zeros(len(offsets))
    for u in updates:
        pruned = topk_global(u.flat_delta(), s_hat)
        for l, (start, stop) in enumerate(offsets):
            per_layer[l] += layer_sparsity(pruned[start:stop])
    per_layer /= max(len(updates), 1)
    return [float(v) for v in per_layer]


def flash_sensitivity_mask(model: Model, mean_layer_sparsity: Sequence[float],
                           s_hat: float) -> SparseMask:
    """Prune the aggregated warm-up model per layer and fix the mask.

    Per-layer keep fractions k_l = clamp(r * (1 - d_l), 0, 1) with the
    scalar r solved by bisection (tolerance 1e-9 on the keep-budget
    constraint); fractional budgets are then rounded largest-remainder so
    the kept total equals ceil((1 - s_hat) * n) exactly.
    """
    sizes = [w.size for w in model.weights]
    if len(mean_layer_sparsity) != len(sizes):
        raise ConfigError("one sensitivity value per layer required")
    n = sum(sizes)
    budget = keep_count(n, s_hat)
    base = [max(0.0, 1.0 - d) for d in mean_layer_sparsity]
    capacity = sum(nl for nl, f in zip(sizes, base) if f > 0.0)
    if capacity < budget:
        raise ConfigError(
            f"sensitivity mask infeasible: max keepable {capacity} < budget {budget}")

    def kept(r: float) -> float:
        return sum(min(max(r * f, 0.0), 1.0) * nl for f, nl in zip(base, sizes))

    lo, hi = 0.0, 1.0
    while kept(hi) < budget:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if abs(kept(mid) - budget) <= 1e-9:
            lo = hi = mid
            break
        if kept(mid) < budget:
            lo = mid
        else:
            hi = mid
    r = 0.5 * (lo + hi)
    fractions = [min(max(r * f, 0.0), 1.0) for f in base]
    counts = allocate_counts([f * nl for f, nl in zip(fractions, sizes)],
                             sizes, budget)
    for l, w in enumerate(model.weights):
        keep = topk_mask_by_count(w, counts[l])
        model.weights[l] = np.where(keep, w, 0.0)
    model.bump_version()
    return mask_of(model)


def _eval_reparam(cfg: FedConfig) -> ReparamFn:
    # the re-parametrization is part of the trained network's forward
    # semantics, so evaluation mirrors the training-side choice
    if cfg.algorithm in ("adaptive", "naive_powerprop"):
        return make_reparam(cfg.reparam, cfg.beta)
    return Identity()


def run_federation(cfg: FedConfig, model_init: Model, train: LabeledDataset,
                   test: LabeledDataset,
                   partition: Sequence[np.ndarray]) -> FederationResult:
    """Execute the full federated loop; deterministic under the config seeds."""
    cfg.validate()
    if len(partition) != cfg.clients_total:
        raise ConfigError(f"partition covers {len(partition)} clients, "
                          f"config expects {cfg.clients_total}")
    model = model_init.copy()
    sched = LrSchedule(cfg.lr_start, cfg.lr_end, max(cfg.rounds, 1))
    w_init = model.flat_weights()
    flash_mask: SparseMask | None = None
    reports: list[RoundReport] = []
    cumulative = 0.0

    for t in range(cfg.rounds):
        eta = lr_at(sched, t)
        sampled = sample_clients(cfg.clients_total, cfg.clients_per_round, t,
                                 cfg.sampling_seed)
        broadcast_nnz = model.weight_nnz()
        w_prev = model.flat_weights()
        updates: list[ClientUpdate] = []
        for cid in (int(c) for c in sampled):
            received = model.copy()
            if cfg.heterogeneous:
                prune_model_global(received, cfg.target_for(cid))
            try:
                updates.append(run_client(cfg, received, train, partition[cid],
                                          eta, t, cid, flash_mask))
            except NumericError as exc:
                raise NumericError(f"round {t}, client {cid}: {exc}",
                                   round_index=t, client_id=cid) from exc

        _apply_aggregator(model, updates, cfg)
        if cfg.algorithm == "flash" and flash_mask is None:
            stats = flash_sensitivity_layer_stats(updates, model.layer_offsets(),
                                                  cfg.group_targets()[0])
            flash_mask = flash_sensitivity_mask(model, stats,
                                                cfg.group_targets()[0])

        srep = sparsity_report(model)
        accuracy = evaluate(model, test.inputs, test.labels, _eval_reparam(cfg))
        downlink, uplink = comm_cost(broadcast_nnz,
                                     [u.payload_nnz for u in updates])
        cumulative += downlink + uplink
        g_l2, r_l2, r_cos, c_cos = weight_movement(
            w_init, w_prev, model.flat_weights(),
            [u.flat_delta() for u in updates])
        keep_mask = t % cfg.mask_every == 0 or t == cfg.rounds - 1
        reports.append(RoundReport(
            round=t,
            test_accuracy=accuracy,
            global_sparsity=srep.global_sparsity,
            per_layer_sparsity=srep.per_layer_sparsity,
            downlink_nnz=downlink,
            uplink_nnz_mean=uplink,
            cumulative_comm_nnz=cumulative,
            mean_client_regrowth=float(np.mean([u.regrowth for u in updates])),
            global_l2_from_init=g_l2,
            round_l2=r_l2,
            round_cosine=r_cos,
            client_cosine_mean=c_cos,
            mask=mask_of(model) if keep_mask else None,
            client_payload_nnz=[(u.client_id, u.payload_nnz) for u in updates],
            client_regrowth=[(u.client_id, u.regrowth) for u in updates],
        ))

    if cfg.algorithm == "naive_powerprop" and cfg.rounds > 0:
        # original-recipe pruning: once, on the final global model
        prune_model_global(model, cfg.group_targets()[0])
    final_accuracy = evaluate(model, test.inputs, test.labels, _eval_reparam(cfg))
    final_sparsity = sparsity_report(model).global_sparsity
    return FederationResult(reports, model, final_accuracy, final_sparsity)
