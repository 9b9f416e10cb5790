"""Exception types shared across the package.

Two failure families matter to callers: configuration problems (bad
parameters, mismatched shapes, malformed JSON) and numerical failures that
occur while evaluating an otherwise well-formed problem. The CLI maps them
to exit codes 2 and 3 respectively.
"""

from __future__ import annotations


class ConfigError(ValueError):
    """Invalid configuration: parameters, dimensions, or input documents."""


class EvaluationError(RuntimeError):
    """Numerical failure during evaluation.

    Carries optional context so diagnostics can name the failing layer and
    sample row.
    """

    def __init__(self, message: str, *, layer: int | None = None,
                 sample_index: int | None = None):
        parts = [message]
        if layer is not None:
            parts.append(f"layer={layer}")
        if sample_index is not None:
            parts.append(f"sample_index={sample_index}")
        super().__init__(" ".join(parts))
        self.layer = layer
        self.sample_index = sample_index
