"""Classification pipeline split: backbone, view pooling, and heads.

Two backbone backends are provided so the protocols run without any
neural-network framework:

* ``ToyBackbone`` projects a view's chroma histogram through a seeded
  sparse non-negative matrix. Together with ``ToyHead`` (nearest centroid
  under cosine similarity) and the synthetic dataset generator, which
  renders each class from a distinct chroma palette, the noiseless
  pipeline classifies every view correctly.
* ``PrecomputedBackbone`` serves vectors exported offline (e.g. from a
  real convolutional backbone) via the embedding sidecar format.

Embeddings are non-negative throughout, matching post-activation feature
maps, so element-wise max is a meaningful pooling operator and cosine
similarities stay in [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Protocol, Sequence

import numpy as np

from ._kernels_np import (
    LAB_EPS,
    LAB_OFFSET,
    LAB_SLOPE,
    WHITE_X,
    WHITE_Y,
    WHITE_Z,
    lab_pixel,
)
from .descriptors import cosine, hist
from .errors import DimensionMismatch, EmptyInput, UnsupportedDimensions
from .types import Embedding, View

_TAG_PROJECTION = 101
_TAG_PALETTE = 102

_PROJECTION_FANOUT = 4  # non-zero weights per histogram bucket
_COLORS_PER_CLASS = 12
_PALETTE_BINS = 32  # bucket grid used to lay out palettes
_PALETTE_LIGHTNESS_LEVELS = (60.0, 52.0, 44.0, 36.0)


class Backbone(Protocol):
    dim: int

    def extract(self, view: View) -> Embedding: ...


class Head(Protocol):
    classes: int

    def classify(self, embedding: Embedding) -> int: ...


@dataclass(frozen=True)
class ToyModelParams:
    """Knobs shared by the toy pipeline and the synthetic generator.

    ``centroid_spread`` is the chroma radius of the class palettes;
    ``within_class_noise`` is the per-view pixel jitter (8-bit sigma) the
    generator applies around those palettes.
    """

    seed: int = 7
    dim: int = 256
    classes: int = 4
    centroid_spread: float = 52.0
    within_class_noise: float = 0.0
    bins: int = 32

    def __post_init__(self) -> None:
        if self.dim < 1 or self.classes < 2:
            raise ValueError("dim must be >= 1 and classes >= 2")
        if self.centroid_spread < 0 or self.within_class_noise < 0:
            raise ValueError("spread and noise must be non-negative")


# ---------------------------------------------------------------------------
# Class palettes (inverse color transform lives here because palettes are
# the contract between the generator and the toy centroids).
# ---------------------------------------------------------------------------


def _lab_to_srgb(lightness: float, a: float, b: float) -> tuple[float, float, float]:
    """Inverse of the pixel conversion; returns linear-gamut sRGB in [0,1]
    without clipping (callers check gamut)."""
    fy = (lightness + 16.0) / 116.0
    fx = fy + a / 500.0
    fz = fy - b / 200.0

    def finv(f: float) -> float:
        t = f * f * f
        return t if t > LAB_EPS else (f - LAB_OFFSET) / LAB_SLOPE

    x = WHITE_X * finv(fx)
    y = WHITE_Y * finv(fy)
    z = WHITE_Z * finv(fz)
    rl = 3.2404542 * x - 1.5371385 * y - 0.4985314 * z
    gl = -0.9692660 * x + 1.8760108 * y + 0.0415560 * z
    bl = 0.0556434 * x - 0.2040259 * y + 1.0572252 * z

    def gamma(c: float) -> float:
        return 12.92 * c if c <= 0.0031308 else 1.055 * c ** (1.0 / 2.4) - 0.055

    return gamma(rl), gamma(gl), gamma(bl)


def _bucket_of(color: np.ndarray, bins: int) -> tuple[int, int]:
    _, a, b = lab_pixel(int(color[0]), int(color[1]), int(color[2]))
    return (
        min(max(int((a + 128.0) * bins / 256.0), 0), bins - 1),
        min(max(int((b + 128.0) * bins / 256.0), 0), bins - 1),
    )


def _usable_bucket_colors(spread: float, bins: int) -> list[tuple[tuple[int, int], np.ndarray]]:
    """Chroma buckets that admit a saturated, in-gamut, stable color.

    A bucket qualifies when its center chroma, rendered to 8-bit sRGB at
    one of a few lightness levels and converted back, still falls in the
    same bucket (so generated pixels stay put). Returned in deterministic
    grid order.
    """
    width = 256.0 / bins
    usable = []
    for ai in range(bins):
        for bi in range(bins):
            a = (ai + 0.5) * width - 128.0
            b = (bi + 0.5) * width - 128.0
            radius = float(np.hypot(a, b))
            if not 0.35 * spread <= radius <= spread:
                continue
            for lightness in _PALETTE_LIGHTNESS_LEVELS:
                rgb = _lab_to_srgb(lightness, a, b)
                if not all(-1e-9 <= c <= 1.0 + 1e-9 for c in rgb):
                    continue
                color = np.array(
                    [round(min(max(c, 0.0), 1.0) * 255.0) for c in rgb],
                    dtype=np.uint8,
                )
                if _bucket_of(color, bins) == (ai, bi):
                    usable.append(((ai, bi), color))
                    break
    return usable


def class_palettes(seed: int, classes: int, spread: float = 52.0) -> np.ndarray:
    """Per-class chroma palettes: (classes, 12, 3) uint8 sRGB colors.

    Classes occupy contiguous hue runs of the in-gamut annulus of radius
    [0.35*spread, spread] (a class is a coherent color family); each
    class then gets a seeded draw of 12 chroma buckets from its run.
    Buckets are distinct within a run of the generator, so class
    histograms have disjoint support, which makes the noiseless toy
    pipeline exact, and chroma perturbed by moderate pixel noise tends
    to leak into buckets of the same class rather than a different one.
    """
    usable = _usable_bucket_colors(spread, _PALETTE_BINS)
    # drop one bucket at each class border as a hue margin
    if len(usable) < classes * (_COLORS_PER_CLASS + 1):
        raise ValueError(
            f"only {len(usable)} usable chroma buckets for {classes} classes "
            f"of {_COLORS_PER_CLASS} colors; lower the class count or raise "
            f"centroid_spread"
        )
    rng = np.random.Generator(
        np.random.PCG64(np.random.SeedSequence((seed, _TAG_PALETTE)))
    )
    rotation = rng.uniform(0.0, 2.0 * np.pi)
    width = 256.0 / _PALETTE_BINS

    def hue(entry):
        (ai, bi), _ = entry
        a = (ai + 0.5) * width - 128.0
        b = (bi + 0.5) * width - 128.0
        return (float(np.arctan2(b, a)) - rotation) % (2.0 * np.pi)

    ordered = sorted(usable, key=hue)
    runs = np.array_split(np.arange(len(ordered)), classes)
    palettes = np.zeros((classes, _COLORS_PER_CLASS, 3), dtype=np.uint8)
    for k in range(classes):
        pool = [ordered[i][1] for i in runs[k][1:]]  # skip the border bucket
        chosen = rng.choice(len(pool), size=_COLORS_PER_CLASS, replace=False)
        palettes[k] = np.array([pool[c] for c in chosen], dtype=np.uint8)
    return palettes


# ---------------------------------------------------------------------------
# Toy pipeline
# ---------------------------------------------------------------------------


class ToyBackbone:
    """Seeded sparse non-negative projection of the chroma histogram."""

    def __init__(self, params: ToyModelParams):
        self.params = params
        self.dim = params.dim
        rng = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence((params.seed, _TAG_PROJECTION)))
        )
        buckets = params.bins * params.bins
        proj = np.zeros((params.dim, buckets), dtype=np.float64)
        fanout = min(_PROJECTION_FANOUT, params.dim)
        for j in range(buckets):
            rows = rng.choice(params.dim, size=fanout, replace=False)
            proj[rows, j] = rng.uniform(0.5, 1.5, size=fanout)
        self._projection = proj

    def extract(self, view: View) -> Embedding:
        if not isinstance(view, View):
            raise UnsupportedDimensions("toy backbone expects a View")
        h = hist(view, self.params.bins)
        return self._projection @ h.ravel()


class ToyHead:
    """Nearest centroid under cosine similarity; ties pick the lowest class."""

    def __init__(self, centroids: np.ndarray):
        centroids = np.asarray(centroids, dtype=np.float64)
        if centroids.ndim != 2 or centroids.shape[0] < 2:
            raise ValueError("centroids must be a (classes, dim) matrix, classes >= 2")
        self._centroids = centroids
        self.classes = int(centroids.shape[0])
        self.dim = int(centroids.shape[1])

    @classmethod
    def for_backbone(cls, backbone: ToyBackbone) -> "ToyHead":
        """Centroids of the class palettes under the backbone's projection."""
        p = backbone.params
        palettes = class_palettes(p.seed, p.classes, p.centroid_spread)
        centroids = np.empty((p.classes, p.dim), dtype=np.float64)
        for k in range(p.classes):
            pixel_views = [
                View(np.full((1, 1, 3), palettes[k, j], dtype=np.uint8))
                for j in range(palettes.shape[1])
            ]
            hs = [hist(v, p.bins).ravel() for v in pixel_views]
            centroids[k] = backbone._projection @ np.mean(hs, axis=0)
        return cls(centroids)

    def classify(self, embedding: Embedding) -> int:
        e = np.asarray(embedding, dtype=np.float64).ravel()
        if e.size != self.dim:
            raise DimensionMismatch(f"embedding dim {e.size} != head dim {self.dim}")
        sims = np.array([cosine(c, e) for c in self._centroids])
        return int(np.argmax(sims))


def toy_models(params: ToyModelParams) -> tuple[ToyBackbone, ToyHead]:
    backbone = ToyBackbone(params)
    return backbone, ToyHead.for_backbone(backbone)


# ---------------------------------------------------------------------------
# Precomputed backend
# ---------------------------------------------------------------------------


class PrecomputedBackbone:
    """Serves embeddings stored offline, keyed by view provenance tags."""

    def __init__(self, table: Mapping[tuple[str, int], np.ndarray], dim: int):
        self._table = dict(table)
        self.dim = int(dim)
        for key, vec in self._table.items():
            if np.asarray(vec).size != self.dim:
                raise DimensionMismatch(f"stored vector for {key} has wrong size")

    def extract(self, view: View) -> Embedding:
        if view.tag is None:
            raise UnsupportedDimensions(
                "precomputed backbone needs views with provenance tags"
            )
        try:
            vec = self._table[view.tag]
        except KeyError:
            raise UnsupportedDimensions(f"no stored embedding for view {view.tag}")
        return np.asarray(vec, dtype=np.float64).copy()


# ---------------------------------------------------------------------------
# Pipeline operations
# ---------------------------------------------------------------------------


def extract(model: Backbone, view: View) -> Embedding:
    return model.extract(view)


def view_pool(embeddings: Sequence[Embedding]) -> Embedding:
    """Orderless element-wise maximum of a non-empty embedding list."""
    if len(embeddings) == 0:
        raise EmptyInput("cannot pool zero embeddings")
    stacked = []
    first = np.asarray(embeddings[0], dtype=np.float64).ravel()
    for e in embeddings:
        e = np.asarray(e, dtype=np.float64).ravel()
        if e.shape != first.shape:
            raise DimensionMismatch("pooled embeddings must share a dimension")
        stacked.append(e)
    return np.maximum.reduce(stacked)


def classify_single(model: Head, embedding: Embedding) -> int:
    return model.classify(embedding)


def classify_multi(model: Head, embeddings: Sequence[Embedding]) -> int:
    return model.classify(view_pool(embeddings))
