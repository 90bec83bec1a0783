"""NumPy implementation of the per-pixel descriptor kernels.

This is the fallback backend used when the compiled extension is not
available (or is disabled via MVEDGE_PURE_PYTHON=1). The arithmetic is
kept step-for-step identical to the compiled kernels: the sRGB gamma
expansion is read from the same 256-entry table and the XYZ/L*a*b*
expressions evaluate in the same order. The only divergence is the cube
root (np.cbrt's SIMD path vs libm), worth at most a few 1e-13 in L*a*b*;
chroma values sit no closer than ~1e-9 to a bucket edge for any 8-bit
color, so histograms (and everything computed from them) are bit-equal
across backends for every possible input.
"""

from __future__ import annotations

import numpy as np

# sRGB -> XYZ matrix (D65 reference white) and CIE 1976 L*a*b* constants.
M_XR, M_XG, M_XB = 0.4124564, 0.3575761, 0.1804375
M_YR, M_YG, M_YB = 0.2126729, 0.7151522, 0.0721750
M_ZR, M_ZG, M_ZB = 0.0193339, 0.1191920, 0.9503041
WHITE_X, WHITE_Y, WHITE_Z = 0.95047, 1.0, 1.08883
LAB_EPS = 216.0 / 24389.0
LAB_SLOPE = 841.0 / 108.0
LAB_OFFSET = 4.0 / 29.0


def _build_srgb_lut() -> np.ndarray:
    lut = np.empty(256, dtype=np.float64)
    for v in range(256):
        c = v / 255.0
        lut[v] = c / 12.92 if c <= 0.04045 else ((c + 0.055) / 1.055) ** 2.4
    lut.setflags(write=False)
    return lut


#: Gamma expansion of all 256 8-bit sRGB values; shared with the compiled
#: backend so both use the exact same linear-light values.
SRGB_TO_LINEAR = _build_srgb_lut()


def _lab_f(t: np.ndarray) -> np.ndarray:
    return np.where(t > LAB_EPS, np.cbrt(t), t * LAB_SLOPE + LAB_OFFSET)


def _linear_channels(pixels: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    r = SRGB_TO_LINEAR[pixels[..., 0]]
    g = SRGB_TO_LINEAR[pixels[..., 1]]
    b = SRGB_TO_LINEAR[pixels[..., 2]]
    return r, g, b


def rgb_to_lab(pixels: np.ndarray) -> np.ndarray:
    """Convert (H, W, 3) uint8 sRGB pixels to CIE 1976 L*a*b*.

    L* is clamped to [0, 100] and a*/b* to [-128, 127].
    """
    r, g, b = _linear_channels(pixels)
    fx = _lab_f((r * M_XR + g * M_XG + b * M_XB) / WHITE_X)
    fy = _lab_f((r * M_YR + g * M_YG + b * M_YB) / WHITE_Y)
    fz = _lab_f((r * M_ZR + g * M_ZG + b * M_ZB) / WHITE_Z)
    lab = np.empty(pixels.shape[:2] + (3,), dtype=np.float64)
    lab[..., 0] = np.clip(116.0 * fy - 16.0, 0.0, 100.0)
    lab[..., 1] = np.clip(500.0 * (fx - fy), -128.0, 127.0)
    lab[..., 2] = np.clip(200.0 * (fy - fz), -128.0, 127.0)
    return lab


def chroma_hist(pixels: np.ndarray, bins: int) -> np.ndarray:
    """Chroma histogram: bin each pixel's (a*, b*) into a (bins, bins) grid.

    Equal-width buckets over [-128, 127] on both axes; counts normalized
    by the pixel count. L* is never computed (only chroma is binned).
    """
    r, g, b = _linear_channels(pixels)
    fx = _lab_f((r * M_XR + g * M_XG + b * M_XB) / WHITE_X)
    fy = _lab_f((r * M_YR + g * M_YG + b * M_YB) / WHITE_Y)
    fz = _lab_f((r * M_ZR + g * M_ZG + b * M_ZB) / WHITE_Z)
    a = np.clip(500.0 * (fx - fy), -128.0, 127.0)
    bb = np.clip(200.0 * (fy - fz), -128.0, 127.0)
    ai = np.floor((a + 128.0) * bins / 256.0).astype(np.intp)
    bi = np.floor((bb + 128.0) * bins / 256.0).astype(np.intp)
    np.clip(ai, 0, bins - 1, out=ai)
    np.clip(bi, 0, bins - 1, out=bi)
    counts = np.bincount((ai * bins + bi).ravel(), minlength=bins * bins)
    total = pixels.shape[0] * pixels.shape[1]
    return (counts / float(total)).reshape(bins, bins)


def lab_pixel(r8: int, g8: int, b8: int) -> tuple[float, float, float]:
    """Scalar single-pixel conversion; shared by the synthetic generator."""
    r = SRGB_TO_LINEAR[r8]
    g = SRGB_TO_LINEAR[g8]
    b = SRGB_TO_LINEAR[b8]

    def f(t: float) -> float:
        return float(np.cbrt(t)) if t > LAB_EPS else t * LAB_SLOPE + LAB_OFFSET

    fx = f((r * M_XR + g * M_XG + b * M_XB) / WHITE_X)
    fy = f((r * M_YR + g * M_YG + b * M_YB) / WHITE_Y)
    fz = f((r * M_ZR + g * M_ZG + b * M_ZB) / WHITE_Z)
    lightness = min(max(116.0 * fy - 16.0, 0.0), 100.0)
    a = min(max(500.0 * (fx - fy), -128.0), 127.0)
    bb = min(max(200.0 * (fy - fz), -128.0), 127.0)
    return lightness, a, bb
