"""Boundary layer: raw-buffer access to decode, confidence and CER."""

from .bindings import (
    AlphabetHandle,
    BindingError,
    BoundFrameMatrix,
    LmHandle,
    bind_matrix,
    bound_cer,
    bound_confidence,
    bound_decode,
    load_lm_handle,
    make_alphabet,
    train_lm_handle,
)

__all__ = [
    "AlphabetHandle",
    "BindingError",
    "BoundFrameMatrix",
    "LmHandle",
    "bind_matrix",
    "bound_cer",
    "bound_confidence",
    "bound_decode",
    "load_lm_handle",
    "make_alphabet",
    "train_lm_handle",
]
