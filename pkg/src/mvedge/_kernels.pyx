# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled single-pass kernels for the per-pixel descriptor hot path.

Mirrors ``_kernels_np`` operation-for-operation (same gamma table, same
expression order; compiled with -ffp-contract=off). Histograms are
bit-equal to the fallback for every input; L*a*b* floats may differ in
the last couple of bits because libm's cbrt and np.cbrt round
differently.
"""

from libc.math cimport floor
from libc.string cimport memcpy

import numpy as np

cimport numpy as cnp

from ._kernels_np import SRGB_TO_LINEAR as _SRGB_TABLE

cnp.import_array()

cdef double[256] LUT
cdef int _i
for _i in range(256):
    LUT[_i] = _SRGB_TABLE[_i]


cdef inline double _cbrt(double x) nogil:
    # Bit-trick seed for x^(-1/3), three division-free Newton steps, one
    # cube-root polish: correct to ~1 ulp on (LAB_EPS, 1.2], which keeps
    # chroma values >1e-9 away from flipping a histogram bucket.
    cdef unsigned long long u
    cdef double z, y
    memcpy(&u, &x, 8)
    u = 0x553EF0FF289DD796ULL - u / 3
    memcpy(&z, &u, 8)
    z = z * (4.0 - x * z * z * z) / 3.0
    z = z * (4.0 - x * z * z * z) / 3.0
    z = z * (4.0 - x * z * z * z) / 3.0
    y = x * z * z
    return (2.0 * y + x / (y * y)) / 3.0

cdef double M_XR = 0.4124564, M_XG = 0.3575761, M_XB = 0.1804375
cdef double M_YR = 0.2126729, M_YG = 0.7151522, M_YB = 0.0721750
cdef double M_ZR = 0.0193339, M_ZG = 0.1191920, M_ZB = 0.9503041
cdef double WHITE_X = 0.95047, WHITE_Y = 1.0, WHITE_Z = 1.08883
cdef double LAB_EPS = 216.0 / 24389.0
cdef double LAB_SLOPE = 841.0 / 108.0
cdef double LAB_OFFSET = 4.0 / 29.0


cdef inline double _lab_f(double t) nogil:
    if t > LAB_EPS:
        return _cbrt(t)
    return t * LAB_SLOPE + LAB_OFFSET


cdef inline double _clampd(double v, double lo, double hi) nogil:
    if v < lo:
        return lo
    if v > hi:
        return hi
    return v


# Direct-mapped cache of the 24-bit-color -> L*a*b* map. Views in this
# domain repeat few distinct colors, so most pixels hit. Entries are pure
# functions of the key, hence results do not depend on call history. The
# kernels hold the GIL, which serializes access.
DEF CACHE_BITS = 13
DEF CACHE_SIZE = 1 << CACHE_BITS

cdef unsigned int[CACHE_SIZE] _cache_key
cdef double[CACHE_SIZE] _cache_l
cdef double[CACHE_SIZE] _cache_a
cdef double[CACHE_SIZE] _cache_b
for _i in range(CACHE_SIZE):
    _cache_key[_i] = 0xFFFFFFFFu  # > any 24-bit color


cdef inline Py_ssize_t _lab_cached(unsigned int key) nogil:
    """Return the cache slot holding ``key``, computing it on a miss."""
    cdef Py_ssize_t slot = (key * 2654435761u) >> (32 - CACHE_BITS)
    cdef double r, g, b, fx, fy, fz
    if _cache_key[slot] != key:
        r = LUT[(key >> 16) & 0xFF]
        g = LUT[(key >> 8) & 0xFF]
        b = LUT[key & 0xFF]
        fx = _lab_f((r * M_XR + g * M_XG + b * M_XB) / WHITE_X)
        fy = _lab_f((r * M_YR + g * M_YG + b * M_YB) / WHITE_Y)
        fz = _lab_f((r * M_ZR + g * M_ZG + b * M_ZB) / WHITE_Z)
        _cache_l[slot] = _clampd(116.0 * fy - 16.0, 0.0, 100.0)
        _cache_a[slot] = _clampd(500.0 * (fx - fy), -128.0, 127.0)
        _cache_b[slot] = _clampd(200.0 * (fy - fz), -128.0, 127.0)
        _cache_key[slot] = key
    return slot


def rgb_to_lab(const unsigned char[:, :, :] pixels):
    """Convert (H, W, 3) uint8 sRGB pixels to CIE 1976 L*a*b*."""
    cdef Py_ssize_t h = pixels.shape[0], w = pixels.shape[1]
    out = np.empty((h, w, 3), dtype=np.float64)
    cdef double[:, :, ::1] lab = out
    cdef Py_ssize_t i, j, slot
    cdef unsigned int key
    for i in range(h):
        for j in range(w):
            key = (
                (<unsigned int> pixels[i, j, 0] << 16)
                | (<unsigned int> pixels[i, j, 1] << 8)
                | <unsigned int> pixels[i, j, 2]
            )
            slot = _lab_cached(key)
            lab[i, j, 0] = _cache_l[slot]
            lab[i, j, 1] = _cache_a[slot]
            lab[i, j, 2] = _cache_b[slot]
    return out


def chroma_hist(const unsigned char[:, :, :] pixels, int bins):
    """Fused a*/b* chroma histogram with ``bins``x``bins`` buckets."""
    cdef Py_ssize_t h = pixels.shape[0], w = pixels.shape[1]
    counts = np.zeros(bins * bins, dtype=np.float64)
    cdef double[::1] flat = counts
    cdef Py_ssize_t i, j, slot
    cdef unsigned int key
    cdef long ai, bi
    for i in range(h):
        for j in range(w):
            key = (
                (<unsigned int> pixels[i, j, 0] << 16)
                | (<unsigned int> pixels[i, j, 1] << 8)
                | <unsigned int> pixels[i, j, 2]
            )
            slot = _lab_cached(key)
            ai = <long> floor((_cache_a[slot] + 128.0) * bins / 256.0)
            bi = <long> floor((_cache_b[slot] + 128.0) * bins / 256.0)
            if ai < 0:
                ai = 0
            elif ai > bins - 1:
                ai = bins - 1
            if bi < 0:
                bi = 0
            elif bi > bins - 1:
                bi = bins - 1
            flat[ai * bins + bi] += 1.0
    counts /= <double> (h * w)
    return counts.reshape(bins, bins)
