"""Minimal feed-forward engine with explicit forward/backward passes.

Two layer kinds (dense, valid-padding conv2d), float64 throughout, and a
forward trace that stores each parameterized layer's input activation.  The
trace's activations can be pruned between forward and backward; backward
then computes the exact gradient of the fixed-mask network (the loss with
each layer's input multiplied by its retained-activation mask), which keeps
analytic gradients finite-difference-checkable with pruning enabled.
Gradients are returned as dense arrays regardless of activation sparsity.

Weight re-parametrization (see `reparam`) is applied point-wise inside
forward/backward; biases are never re-parametrized and never pruned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, NumericError, UsageError
from .reparam import ReparamFn
from .seeding import rng_for
from .sparsity import topk_mask

Batch = tuple[np.ndarray, np.ndarray]


@dataclass(frozen=True)
class LayerSpec:
    """Shape and activation of one parameterized layer."""

    kind: str                  # "dense" | "conv2d"
    in_dim: int                # input features (dense) or input channels (conv2d)
    out_dim: int               # output features (dense) or output channels (conv2d)
    kernel: int = 0            # square kernel size, conv2d only
    activation: str = "relu"   # "relu" | "none"
    has_bias: bool = True

    def __post_init__(self):
        if self.kind not in ("dense", "conv2d"):
            raise ConfigError(f"unknown layer kind {self.kind!r}")
        if self.in_dim <= 0 or self.out_dim <= 0:
            raise ConfigError("layer dims must be positive")
        if self.kind == "conv2d" and self.kernel <= 0:
            raise ConfigError("conv2d layer needs a positive kernel size")
        if self.activation not in ("relu", "none"):
            raise ConfigError(f"unknown activation {self.activation!r}")

    def weight_shape(self) -> tuple[int, ...]:
        if self.kind == "dense":
            return (self.in_dim, self.out_dim)
        return (self.out_dim, self.in_dim, self.kernel, self.kernel)


class Model:
    """Ordered layers with raw weights; flattened ordering is fixed.

    The flattened-weight vector concatenates each layer's weights in layer
    order, row-major within a layer, so masks are comparable across rounds
    and across models of identical architecture.  Biases live outside that
    ordering.
    """

    def __init__(self, specs: Sequence[LayerSpec], input_shape: tuple[int, ...],
                 weights: list[np.ndarray], biases: list[np.ndarray | None]):
        if specs and specs[-1].activation != "none":
            raise ConfigError("final classifier layer must emit raw logits")
        for spec, w in zip(specs, weights):
            if w.shape != spec.weight_shape():
                raise ConfigError(f"weight shape {w.shape} does not match spec {spec}")
        self.specs = list(specs)
        self.input_shape = tuple(input_shape)
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [None if b is None else np.asarray(b, dtype=np.float64)
                       for b in biases]
        self.version = 0

    @classmethod
    def init(cls, specs: Sequence[LayerSpec], input_shape: tuple[int, ...],
             seed: int) -> "Model":
        """He-style normal init for relu layers, scaled-down for linear ones."""
        weights, biases = [], []
        for i, spec in enumerate(specs):
            rng = rng_for(seed, "layer-init", i)
            if spec.kind == "dense":
                fan_in = spec.in_dim
            else:
                fan_in = spec.in_dim * spec.kernel * spec.kernel
            gain = 2.0 if spec.activation == "relu" else 1.0
            std = math.sqrt(gain / fan_in)
            weights.append(rng.normal(0.0, std, size=spec.weight_shape()))
            biases.append(np.zeros(spec.out_dim) if spec.has_bias else None)
        return cls(specs, input_shape, weights, biases)

    def copy(self) -> "Model":
        clone = Model(self.specs, self.input_shape,
                      [w.copy() for w in self.weights],
                      [None if b is None else b.copy() for b in self.biases])
        return clone

    def bump_version(self) -> None:
        self.version += 1

    @property
    def num_layers(self) -> int:
        return len(self.specs)

    @property
    def param_count(self) -> int:
        return sum(w.size for w in self.weights)

    def layer_offsets(self) -> list[tuple[int, int]]:
        offsets, start = [], 0
        for w in self.weights:
            offsets.append((start, start + w.size))
            start += w.size
        return offsets

    def flat_weights(self) -> np.ndarray:
        return np.concatenate([w.ravel() for w in self.weights])

    def set_flat_weights(self, flat: np.ndarray) -> None:
        if flat.size != self.param_count:
            raise ConfigError(f"flat vector has {flat.size} entries, "
                              f"model expects {self.param_count}")
        for w, (start, stop) in zip(self.weights, self.layer_offsets()):
            w[...] = flat[start:stop].reshape(w.shape)
        self.bump_version()

    def weight_nnz(self) -> int:
        return int(sum(np.count_nonzero(w) for w in self.weights))


def mlp(input_dim: int, hidden: Sequence[int], classes: int, seed: int) -> Model:
    dims = [input_dim, *hidden, classes]
    specs = []
    for i in range(len(dims) - 1):
        last = i == len(dims) - 2
        specs.append(LayerSpec("dense", dims[i], dims[i + 1],
                               activation="none" if last else "relu"))
    return Model.init(specs, (input_dim,), seed)


def conv_net(input_shape: tuple[int, int, int], channels: Sequence[int],
             kernel: int, classes: int, seed: int) -> Model:
    """Stack of valid-padding convs followed by a dense classifier head."""
    c, h, w = input_shape
    specs = []
    in_c = c
    for out_c in channels:
        specs.append(LayerSpec("conv2d", in_c, out_c, kernel=kernel))
        in_c = out_c
        h, w = h - kernel + 1, w - kernel + 1
        if h <= 0 or w <= 0:
            raise ConfigError("input too small for the conv stack")
    specs.append(LayerSpec("dense", in_c * h * w, classes, activation="none"))
    return Model.init(specs, input_shape, seed)


@dataclass
class ForwardTrace:
    """Stored per-layer input activations plus the logits of one batch."""

    activations: list[np.ndarray]
    logits: np.ndarray
    model_version: int
    act_masks: list[np.ndarray] | None = None
    input_shapes: list[tuple[int, ...]] = field(default_factory=list)


def _prepare_input(h: np.ndarray, spec: LayerSpec) -> np.ndarray:
    if spec.kind == "dense" and h.ndim > 2:
        return h.reshape(h.shape[0], -1)
    return h


def _layer_forward(a: np.ndarray, spec: LayerSpec, w: np.ndarray,
                   b: np.ndarray | None) -> np.ndarray:
    if spec.kind == "dense":
        z = a @ w
        if b is not None:
            z = z + b
        return z
    z = _conv2d(a, w)
    if b is not None:
        z = z + b[None, :, None, None]
    return z


def _conv2d(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    cols, out_h, out_w = _im2col(x, w.shape[2])
    z = cols @ w.reshape(w.shape[0], -1).T
    return np.ascontiguousarray(z.transpose(0, 3, 1, 2))


def _im2col(x: np.ndarray, k: int) -> tuple[np.ndarray, int, int]:
    batch, _, h, w = x.shape
    out_h, out_w = h - k + 1, w - k + 1
    windows = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(2, 3))
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(batch, out_h, out_w, -1)
    return cols, out_h, out_w


def _log_softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _check_batch(model: Model, batch: Batch) -> tuple[np.ndarray, np.ndarray]:
    inputs, labels = batch
    inputs = np.asarray(inputs, dtype=np.float64)
    labels = np.asarray(labels)
    if inputs.shape[0] == 0:
        raise ConfigError("empty batch")
    if inputs.shape[0] != labels.shape[0]:
        raise ConfigError("inputs and labels disagree on batch size")
    flat_dim = int(np.prod(model.input_shape))
    if inputs.ndim == 2 and inputs.shape[1] == flat_dim:
        if len(model.input_shape) > 1:
            inputs = inputs.reshape(inputs.shape[0], *model.input_shape)
    elif inputs.shape[1:] != model.input_shape:
        raise ConfigError(f"input shape {inputs.shape[1:]} does not match "
                          f"model input {model.input_shape}")
    return inputs, labels


def _run_chain(model: Model, theta: list[np.ndarray], first_input: np.ndarray,
               masks: list[np.ndarray] | None):
    """Forward through the (optionally input-masked) chain.

    Returns the per-layer prepared inputs, pre-activations, and logits.
    Layer 0's input is taken as given (masking it is the caller's job).
    """
    inputs, preacts = [], []
    h = first_input
    for l, spec in enumerate(model.specs):
        if l > 0:
            h = _prepare_input(h, spec)
            if masks is not None:
                h = h * masks[l]
        inputs.append(h)
        z = _layer_forward(h, spec, theta[l], model.biases[l])
        preacts.append(z)
        h = np.maximum(z, 0.0) if spec.activation == "relu" else z
    return inputs, preacts, h


def forward(model: Model, reparam: ReparamFn, batch: Batch) -> tuple[ForwardTrace, float]:
    """Dense forward pass with effective weights theta = reparam(w).

    The trace stores the input activation of every parameterized layer (the
    quantities activation pruning later operates on) and the logits.
    """
    inputs, labels = _check_batch(model, batch)
    theta = [reparam.apply(w, l) for l, w in enumerate(model.weights)]
    first = _prepare_input(inputs, model.specs[0])
    with np.errstate(over="ignore", invalid="ignore"):
        acts, _, logits = _run_chain(model, theta, first, None)
        logp = _log_softmax(logits)
        loss = float(-logp[np.arange(labels.shape[0]), labels].mean())
    if not math.isfinite(loss):
        raise NumericError(f"non-finite loss {loss}")
    trace = ForwardTrace([a.copy() for a in acts], logits, model.version,
                         input_shapes=[a.shape for a in acts])
    return trace, loss


def prune_trace_activations(trace: ForwardTrace, sparsities: Sequence[float]) -> None:
    """Top-K prune each stored activation tensor at its layer's target.

    Records the binary masks so that backward differentiates the fixed-mask
    network; a target of 0.0 leaves a layer untouched (all-ones mask).
    """
    if len(sparsities) != len(trace.activations):
        raise UsageError("one sparsity target per parameterized layer required")
    masks = []
    for a, s in zip(trace.activations, sparsities):
        if s >= 1.0:
            # an all-zero weight layer asks for fully pruned activations
            m = np.zeros_like(a)
        else:
            m = topk_mask(a, s).astype(np.float64)
        a *= m
        masks.append(m)
    trace.act_masks = masks


def trace_loss(model: Model, reparam: ReparamFn, trace: ForwardTrace,
               labels: np.ndarray) -> float:
    """Loss of the fixed-mask network for the trace's batch.

    This is the scalar function whose exact gradient `backward` returns;
    with no pruning it coincides with the plain forward loss.
    """
    theta = [reparam.apply(w, l) for l, w in enumerate(model.weights)]
    _, _, logits = _run_chain(model, theta, trace.activations[0], trace.act_masks)
    logp = _log_softmax(logits)
    return float(-logp[np.arange(labels.shape[0]), labels].mean())


def backward(model: Model, reparam: ReparamFn, trace: ForwardTrace,
             labels: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray | None]]:
    """Dense gradients w.r.t. raw weights (and biases) through the reparam.

    Differentiates the fixed-mask network defined by the trace's pruned
    activations; stored masks are treated as constants.
    """
    if trace.model_version != model.version:
        raise UsageError("stale trace: model was mutated after forward")
    labels = np.asarray(labels)
    theta = [reparam.apply(w, l) for l, w in enumerate(model.weights)]
    inputs, preacts, logits = _run_chain(model, theta, trace.activations[0],
                                         trace.act_masks)
    batch = labels.shape[0]
    probs = np.exp(_log_softmax(logits))
    delta = probs
    delta[np.arange(batch), labels] -= 1.0
    delta /= batch

    wgrads: list[np.ndarray] = [None] * model.num_layers  # type: ignore[list-item]
    bgrads: list[np.ndarray | None] = [None] * model.num_layers
    for l in range(model.num_layers - 1, -1, -1):
        spec = model.specs[l]
        if spec.activation == "relu":
            delta = delta * (preacts[l] > 0.0)
        a = inputs[l]
        if spec.kind == "dense":
            g_theta = a.T @ delta
            if model.biases[l] is not None:
                bgrads[l] = delta.sum(axis=0)
            da = delta @ theta[l].T
        else:
            g_theta, db, da = _conv_backward(a, theta[l], delta)
            if model.biases[l] is not None:
                bgrads[l] = db
        wgrads[l] = g_theta * reparam.grad_factor(model.weights[l], l)
        if l > 0:
            if trace.act_masks is not None:
                da = da * trace.act_masks[l]
            prev_out_shape = preacts[l - 1].shape
            if da.shape != prev_out_shape:
                da = da.reshape(prev_out_shape)
            delta = da
    return wgrads, bgrads


def _conv_backward(x: np.ndarray, w: np.ndarray, dz: np.ndarray):
    k = w.shape[2]
    cols, out_h, out_w = _im2col(x, k)
    dz_r = dz.transpose(0, 2, 3, 1)
    dw = np.einsum("bhwf,bhwc->fc", dz_r, cols).reshape(w.shape)
    db = dz.sum(axis=(0, 2, 3))
    dcols = (dz_r @ w.reshape(w.shape[0], -1)).reshape(
        x.shape[0], out_h, out_w, x.shape[1], k, k)
    dx = np.zeros_like(x)
    for i in range(k):
        for j in range(k):
            dx[:, :, i:i + out_h, j:j + out_w] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    return dw, db, dx


def sgd_step(model: Model, wgrads: Sequence[np.ndarray],
             bgrads: Sequence[np.ndarray | None], eta: float) -> None:
    """In-place w <- w - eta * g for weights and biases alike."""
    if len(wgrads) != model.num_layers:
        raise ConfigError("gradient list does not match the model's layers")
    for l, g in enumerate(wgrads):
        if g.shape != model.weights[l].shape:
            raise ConfigError(f"gradient shape {g.shape} mismatches layer {l}")
        model.weights[l] -= eta * g
        if model.biases[l] is not None and bgrads[l] is not None:
            model.biases[l] -= eta * bgrads[l]
    model.bump_version()


@dataclass(frozen=True)
class LrSchedule:
    """Exponential interpolation from eta_start at round 0 to eta_end at round T."""

    eta_start: float
    eta_end: float
    total_rounds: int

    def __post_init__(self):
        if self.eta_start <= 0 or self.eta_end <= 0:
            raise ConfigError("learning rates must be positive")
        if self.total_rounds <= 0:
            raise ConfigError("total_rounds must be positive")


def lr_at(sched: LrSchedule, t: int) -> float:
    """eta_t = eta_start * exp((t / T) * ln(eta_end / eta_start)).

    Endpoints are returned exactly so the schedule's identities hold to
    float precision.
    """
    if not 0 <= t <= sched.total_rounds:
        raise UsageError(f"round {t} outside schedule range [0, {sched.total_rounds}]")
    if t == 0:
        return sched.eta_start
    if t == sched.total_rounds:
        return sched.eta_end
    frac = t / sched.total_rounds
    return sched.eta_start * math.exp(frac * math.log(sched.eta_end / sched.eta_start))
