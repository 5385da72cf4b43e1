"""Contrastive query intent description generation.

The heavy lifting lives in the compiled ``_core`` module; this package
re-exports its public surface.
"""

from ._core import (
    Model,
    grad_check,
    masked_softmax,
    prep,
    preprocess_text,
    rouge_l,
    rouge_n,
    train,
)

__all__ = [
    "Model",
    "grad_check",
    "masked_softmax",
    "prep",
    "preprocess_text",
    "rouge_l",
    "rouge_n",
    "train",
]
