"""View descriptors and similarity measures.

The per-pixel kernels (RGB -> L*a*b*, chroma histogram) run on a compiled
extension when it is available; otherwise a NumPy implementation with
identical arithmetic is selected at import time. Set MVEDGE_PURE_PYTHON=1
to force the fallback.
"""

from __future__ import annotations

import os
from typing import Sequence, Union

import numpy as np

from .errors import BinCountMismatch, DimensionMismatch, EmptyInput
from .types import ColorHistogram, Embedding, View

if os.environ.get("MVEDGE_PURE_PYTHON"):
    from . import _kernels_np as _kern

    KERNEL_BACKEND = "numpy"
else:
    try:
        from . import _kernels as _kern  # type: ignore[no-redef]

        KERNEL_BACKEND = "compiled"
    except ImportError:
        from . import _kernels_np as _kern  # type: ignore[no-redef]

        KERNEL_BACKEND = "numpy"


def _pixels_of(view: Union[View, np.ndarray]) -> np.ndarray:
    px = view.pixels if isinstance(view, View) else view
    return np.ascontiguousarray(px)


def rgb_to_lab(view: Union[View, np.ndarray]) -> np.ndarray:
    """Per-pixel CIE 1976 L*a*b* values of a view, shape (H, W, 3).

    Uses the sRGB gamma curve and the D65 white point; L* is clamped to
    [0, 100] and a*/b* to [-128, 127].
    """
    return _kern.rgb_to_lab(_pixels_of(view))


def hist(view: Union[View, np.ndarray], bins: int = 32) -> ColorHistogram:
    """Normalized (bins x bins) chroma histogram of a view.

    Each pixel's (a*, b*) pair falls into one of bins^2 equal-width
    buckets over [-128, 127]^2; counts are normalized by the pixel count,
    so the result sums to 1.
    """
    if bins < 1:
        raise ValueError("bins must be >= 1")
    return _kern.chroma_hist(_pixels_of(view), bins)


def nhi(h1: ColorHistogram, h2: ColorHistogram) -> float:
    """Normalized histogram intersection: sum(min(h1, h2)) / sum(h2).

    0 means disjoint support, 1 means h1 is fully overlapped by h2. For
    normalized inputs the denominator is 1, making the measure symmetric.
    """
    a = np.asarray(h1, dtype=np.float64)
    b = np.asarray(h2, dtype=np.float64)
    if a.shape != b.shape:
        raise BinCountMismatch(f"histogram shapes differ: {a.shape} vs {b.shape}")
    denom = float(b.sum())
    if denom == 0.0:
        return 0.0
    return float(np.minimum(a, b).sum() / denom)


def cosine(c: Embedding, e: Embedding) -> float:
    """Cosine similarity; returns 0 when either vector has zero norm.

    The zero-norm convention treats the pair as maximally dissimilar so a
    degenerate context never suppresses a transmission.
    """
    a = np.asarray(c, dtype=np.float64).ravel()
    b = np.asarray(e, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise DimensionMismatch(f"embedding dims differ: {a.size} vs {b.size}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def average_histograms(hs: Sequence[ColorHistogram]) -> ColorHistogram:
    """Element-wise mean of histograms; normalization is preserved."""
    if len(hs) == 0:
        raise EmptyInput("cannot average zero histograms")
    first = np.asarray(hs[0], dtype=np.float64)
    acc = first.copy()
    for h in hs[1:]:
        h = np.asarray(h, dtype=np.float64)
        if h.shape != first.shape:
            raise BinCountMismatch(f"histogram shapes differ: {h.shape} vs {first.shape}")
        acc += h
    return acc / len(hs)
