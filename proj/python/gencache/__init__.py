"""Python bindings for the gencache semantic LLM cache."""

from ._core import (
    AdaptivePolicy,
    Error,
    GenMode,
    HashingEmbedder,
    LookupPolicy,
    SemanticCache,
    Service,
    estimate_cost,
    estimate_tokens,
    similarity,
)

__all__ = [
    "AdaptivePolicy",
    "Error",
    "GenMode",
    "HashingEmbedder",
    "LookupPolicy",
    "SemanticCache",
    "Service",
    "estimate_cost",
    "estimate_tokens",
    "similarity",
]
