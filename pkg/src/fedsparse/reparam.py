"""Point-wise weight re-parametrizations and their gradient chain factors.

Each variant maps raw weights w to effective weights theta with
sign(theta) == sign(w) and 0 -> 0, so the zero pattern (and hence any
magnitude-ranked Top-K selection) is preserved.  `grad_factor` returns
d(theta)/d(w) element-wise; the local trainer multiplies incoming
theta-gradients by it to obtain gradients w.r.t. the raw weights.
"""

from __future__ import annotations

import logging

import numpy as np

from .errors import ConfigError

log = logging.getLogger(__name__)


class Identity:
    """theta = w."""

    def apply(self, w: np.ndarray, layer: int) -> np.ndarray:
        return w

    def grad_factor(self, w: np.ndarray, layer: int) -> np.ndarray:
        return np.ones_like(w)


class Powerprop:
    """theta = sign(w) * |w| ** beta, beta >= 1.

    The chain factor beta * |w| ** (beta - 1) shrinks updates of
    small-magnitude weights; for beta > 1 a weight at exactly zero receives
    a zero gradient and can never regrow.
    """

    def __init__(self, beta: float):
        if beta < 1.0:
            raise ConfigError(f"powerprop exponent must be >= 1, got {beta}")
        self.beta = float(beta)

    def apply(self, w: np.ndarray, layer: int) -> np.ndarray:
        return np.sign(w) * np.abs(w) ** self.beta

    def grad_factor(self, w: np.ndarray, layer: int) -> np.ndarray:
        return self.beta * np.abs(w) ** (self.beta - 1.0)


class SpectralExponent:
    """Per-layer exponent derived from the weight magnitude distribution.

    On the first call for a layer, each element's relative magnitude
    |w_i| / max|w| defines an exponent 1 + |w_i| / max|w|; the layer mean
    of those is cached as a single scalar e_bar in [1, 2] and reused for
    the rest of the training session.  An all-zero layer degenerates to the
    identity (e_bar = 1).
    """

    def __init__(self):
        self._exponents: dict[int, float] = {}

    @property
    def exponents(self) -> dict[int, float]:
        return dict(self._exponents)

    def _exponent(self, w: np.ndarray, layer: int) -> float:
        e = self._exponents.get(layer)
        if e is None:
            peak = float(np.max(np.abs(w))) if w.size else 0.0
            if peak == 0.0:
                log.warning("spectral exponent: layer %d is all-zero, using identity", layer)
                e = 1.0
            else:
                e = float(np.mean(1.0 + np.abs(w) / peak))
            self._exponents[layer] = e
        return e

    def apply(self, w: np.ndarray, layer: int) -> np.ndarray:
        e = self._exponent(w, layer)
        return np.sign(w) * np.abs(w) ** e

    def grad_factor(self, w: np.ndarray, layer: int) -> np.ndarray:
        e = self._exponent(w, layer)
        return e * np.abs(w) ** (e - 1.0)


class SpectralRescale:
    """theta = w * |w| / sigma with sigma = max|w| of the layer.

    sigma is treated as a constant during backprop, so the chain factor is
    2|w| / sigma.  An all-zero layer passes through unchanged.
    """

    def apply(self, w: np.ndarray, layer: int) -> np.ndarray:
        sigma = float(np.max(np.abs(w))) if w.size else 0.0
        if sigma == 0.0:
            return w.copy()
        return w * np.abs(w) / sigma

    def grad_factor(self, w: np.ndarray, layer: int) -> np.ndarray:
        sigma = float(np.max(np.abs(w))) if w.size else 0.0
        if sigma == 0.0:
            return np.ones_like(w)
        return 2.0 * np.abs(w) / sigma


ReparamFn = Identity | Powerprop | SpectralExponent | SpectralRescale

_KINDS = ("identity", "powerprop", "spectral_exponent", "spectral_rescale")


def make_reparam(kind: str, beta: float = 1.0) -> ReparamFn:
    """Fresh re-parametrization instance for one local training session."""
    if kind == "identity":
        return Identity()
    if kind == "powerprop":
        return Powerprop(beta)
    if kind == "spectral_exponent":
        return SpectralExponent()
    if kind == "spectral_rescale":
        return SpectralRescale()
    raise ConfigError(f"unknown reparam kind {kind!r}; expected one of {_KINDS}")
