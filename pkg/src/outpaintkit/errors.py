"""Shared exception types."""

from __future__ import annotations


class DivergenceError(RuntimeError):
    """Raised when an optimization produces a non-finite value.

    Carries the last finite metrics/trace for diagnosis.
    """

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
