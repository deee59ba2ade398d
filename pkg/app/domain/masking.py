"""
Mask primitives shared by the recognizer, the attribution estimators and the
manipulation strategies. Everything here is a pure function of its inputs.
"""
from typing import Sequence

import numpy as np

from app.domain.errors import ContractViolation
from app.domain.models import ImageMask, ImageTensor, TokenSequence


def as_image(img, name: str = 'image') -> ImageTensor:
    """Validate and return an H x W x 3 float64 image with values in [0,1]."""
    array = np.asarray(img, dtype=np.float64)
    if array.ndim != 3 or array.shape[2] != 3:
        raise ContractViolation(f"{name} must be H x W x 3, got shape {array.shape}")
    if array.shape[0] < 1 or array.shape[1] < 1:
        raise ContractViolation(f"{name} must be at least 1 x 1, got {array.shape[:2]}")
    if array.size and (array.min() < 0.0 or array.max() > 1.0):
        raise ContractViolation(f"{name} values must lie in [0,1]")
    return array


def as_tokens(words: Sequence[str]) -> TokenSequence:
    tokens = list(words)
    for word in tokens:
        if not isinstance(word, str) or not word or any(ch.isspace() for ch in word):
            raise ContractViolation(f"Invalid token {word!r}: tokens are non-empty strings without whitespace")
    return tokens


def apply_text_mask(t: TokenSequence, m: Sequence[int]) -> TokenSequence:
    """Keep the words whose mask bit is 1; masked words are deleted, order preserved."""
    bits = list(m)
    if len(bits) != len(t):
        raise ContractViolation(f"Word mask length {len(bits)} does not match prompt length {len(t)}")
    return [word for word, bit in zip(t, bits) if bit]


def apply_image_mask(img: ImageTensor, m: ImageMask) -> ImageTensor:
    """out[y,x,c] = img[y,x,c] * m[y,x]"""
    image = np.asarray(img, dtype=np.float64)
    mask = np.asarray(m, dtype=np.float64)
    if image.ndim != 3 or mask.shape != image.shape[:2]:
        raise ContractViolation(f"Mask shape {mask.shape} does not match image shape {image.shape[:2]}")
    return image * mask[:, :, None]


def normalize_map(values) -> np.ndarray:
    """Min-max normalize to [0,1]; a constant map normalizes to all zeros."""
    array = np.asarray(values, dtype=np.float64)
    if array.size == 0:
        raise ContractViolation("Cannot normalize an empty map")
    low = array.min()
    high = array.max()
    if high == low:
        return np.zeros_like(array)
    return np.clip((array - low) / (high - low), 0.0, 1.0)


def binary_region(values, threshold: float) -> np.ndarray:
    """Superlevel set {normalize_map(values) >= threshold} as a boolean array."""
    return normalize_map(values) >= threshold
