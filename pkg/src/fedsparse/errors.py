"""Shared exception types."""

from __future__ import annotations


class ConfigError(ValueError):
    """Invalid configuration value or malformed config file."""


class UsageError(RuntimeError):
    """API misuse, e.g. backward on a trace from a mutated model."""


class NumericError(RuntimeError):
    """Non-finite value encountered during training.

    Carries round/client context when raised inside the federated loop.
    """

    def __init__(self, message: str, round_index: int | None = None,
                 client_id: int | None = None):
        super().__init__(message)
        self.round_index = round_index
        self.client_id = client_id
