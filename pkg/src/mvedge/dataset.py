"""Dataset loading, synthetic generation, view sampling, and noise.

On-disk layout is deliberately minimal: binary PPM (P6, 8-bit) rasters, a
line-oriented tab-separated manifest, and an optional little-endian
float32 embedding sidecar per instance:

    manifest line:  instance_id<TAB>label<TAB>view.ppm,view.ppm[<TAB>sidecar]
    sidecar:        b"MVE1" + u32 view_count + u32 dim + u32 reserved
                    + view_count * dim float32 values, row-major

The synthetic generator renders each class from its chroma palette (see
``models.class_palettes``): every view is a stack of horizontal bands of
the palette colors with seeded random proportions, plus optional Gaussian
pixel jitter. With zero jitter the class histograms have disjoint chroma
support, which is what makes the toy pipeline exact on clean data.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence, TypeVar, Union

import numpy as np

from .errors import (
    MalformedRaster,
    MissingFile,
    NotEnoughViews,
    SidecarShapeMismatch,
)
from .models import ToyModelParams, class_palettes
from .types import View

SIDECAR_MAGIC = b"MVE1"

_TAG_SAMPLE = 301
_TAG_NOISE = 302
_TAG_RENDER = 303

Seed = Union[int, Sequence[int]]
_T = TypeVar("_T")


def _rng(seed: Seed) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


# ---------------------------------------------------------------------------
# Rasters and sidecars
# ---------------------------------------------------------------------------


def write_ppm(path: Union[str, Path], pixels: np.ndarray) -> None:
    """Write (H, W, 3) uint8 pixels as binary PPM (P6, maxval 255)."""
    px = np.ascontiguousarray(pixels, dtype=np.uint8)
    if px.ndim != 3 or px.shape[2] != 3:
        raise MalformedRaster("pixels must be (H, W, 3)")
    header = f"P6\n{px.shape[1]} {px.shape[0]}\n255\n".encode("ascii")
    Path(path).write_bytes(header + px.tobytes())


def read_ppm(path: Union[str, Path]) -> np.ndarray:
    """Decode a binary PPM (P6, 8-bit) file into (H, W, 3) uint8 pixels."""
    path = Path(path)
    if not path.exists():
        raise MissingFile(f"raster not found: {path}")
    data = path.read_bytes()
    pos = 0

    def token() -> bytes:
        nonlocal pos
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            return token()
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise MalformedRaster(f"truncated PPM header: {path}")
        return data[start:pos]

    try:
        magic = token()
        if magic != b"P6":
            raise MalformedRaster(f"not a binary PPM (P6): {path}")
        width, height, maxval = int(token()), int(token()), int(token())
    except ValueError:
        raise MalformedRaster(f"non-numeric PPM header field: {path}")
    if maxval != 255:
        raise MalformedRaster(f"only maxval 255 is supported: {path}")
    if width < 1 or height < 1:
        raise MalformedRaster(f"degenerate raster dimensions: {path}")
    pos += 1  # single whitespace byte after maxval
    expected = width * height * 3
    raw = data[pos : pos + expected]
    if len(raw) != expected:
        raise MalformedRaster(f"pixel payload truncated: {path}")
    return np.frombuffer(raw, dtype=np.uint8).reshape(height, width, 3).copy()


def write_sidecar(path: Union[str, Path], matrix: np.ndarray) -> None:
    """Write a (views, dim) float32 embedding sidecar."""
    m = np.ascontiguousarray(matrix, dtype="<f4")
    if m.ndim != 2:
        raise SidecarShapeMismatch("sidecar matrix must be 2-D (views x dim)")
    header = SIDECAR_MAGIC + struct.pack("<III", m.shape[0], m.shape[1], 0)
    Path(path).write_bytes(header + m.tobytes())


def read_sidecar(path: Union[str, Path]) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise MissingFile(f"sidecar not found: {path}")
    data = path.read_bytes()
    if len(data) < 16 or data[:4] != SIDECAR_MAGIC:
        raise SidecarShapeMismatch(f"bad sidecar header: {path}")
    views, dim, _reserved = struct.unpack("<III", data[4:16])
    expected = 16 + views * dim * 4
    if len(data) != expected:
        raise SidecarShapeMismatch(
            f"sidecar payload is {len(data) - 16} bytes, expected {expected - 16}: {path}"
        )
    return np.frombuffer(data[16:], dtype="<f4").reshape(views, dim).copy()


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------


@dataclass
class InstanceRecord:
    """One labeled multi-view instance; pixels load lazily when on disk."""

    instance_id: str
    label: int
    view_paths: Optional[tuple[Path, ...]] = None
    sidecar_path: Optional[Path] = None
    _pixels: Optional[tuple[np.ndarray, ...]] = field(default=None, repr=False)
    _sidecar: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def view_count(self) -> int:
        if self._pixels is not None:
            return len(self._pixels)
        return len(self.view_paths or ())


@dataclass
class DatasetManifest:
    """An indexed multi-view dataset (on disk or in memory)."""

    instances: list[InstanceRecord]
    classes: int
    width: int
    height: int
    root: Optional[Path] = None

    def pixels(self, record: InstanceRecord) -> tuple[np.ndarray, ...]:
        if record._pixels is None:
            assert record.view_paths is not None
            record._pixels = tuple(read_ppm(p) for p in record.view_paths)
        return record._pixels

    def views(self, record: InstanceRecord, period: int = 0) -> list[View]:
        """Materialize tagged View objects (node ids assigned at sampling)."""
        return [
            View(px, node=i, period=period, tag=(record.instance_id, i))
            for i, px in enumerate(self.pixels(record))
        ]

    def sidecar(self, record: InstanceRecord) -> Optional[np.ndarray]:
        if record.sidecar_path is None:
            return None
        if record._sidecar is None:
            matrix = read_sidecar(record.sidecar_path)
            if matrix.shape[0] != record.view_count:
                raise SidecarShapeMismatch(
                    f"instance {record.instance_id} has {record.view_count} views "
                    f"but sidecar holds {matrix.shape[0]} rows"
                )
            record._sidecar = matrix
        return record._sidecar


def load_dataset(
    manifest_path: Union[str, Path], classes: Optional[int] = None
) -> DatasetManifest:
    """Load a manifest; raster existence is checked eagerly, pixels lazily."""
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise MissingFile(f"manifest not found: {manifest_path}")
    root = manifest_path.parent
    records: list[InstanceRecord] = []
    for line_no, line in enumerate(manifest_path.read_text().splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.rstrip("\n").split("\t")
        if len(fields) not in (3, 4):
            raise MissingFile(
                f"{manifest_path}:{line_no}: expected 3 or 4 tab-separated fields"
            )
        instance_id, label_text, views_text = fields[:3]
        view_paths = tuple(root / p for p in views_text.split(",") if p)
        if not view_paths:
            raise MissingFile(f"{manifest_path}:{line_no}: instance lists no views")
        for p in view_paths:
            if not p.exists():
                raise MissingFile(f"raster not found: {p}")
        sidecar_path = root / fields[3] if len(fields) == 4 and fields[3] else None
        if sidecar_path is not None and not sidecar_path.exists():
            raise MissingFile(f"sidecar not found: {sidecar_path}")
        records.append(
            InstanceRecord(instance_id, int(label_text), view_paths, sidecar_path)
        )
    if not records:
        raise MissingFile(f"manifest is empty: {manifest_path}")
    first = read_ppm(records[0].view_paths[0])
    k = classes if classes is not None else max(r.label for r in records) + 1
    return DatasetManifest(
        instances=records,
        classes=k,
        width=first.shape[1],
        height=first.shape[0],
        root=root,
    )


def write_dataset(
    manifest: DatasetManifest,
    root: Union[str, Path],
    sidecars: Optional[dict[str, np.ndarray]] = None,
) -> Path:
    """Persist a dataset as PPM rasters plus a manifest file.

    ``sidecars`` optionally maps instance ids to (views, dim) embedding
    matrices. Returns the manifest path.
    """
    root = Path(root)
    views_dir = root / "views"
    views_dir.mkdir(parents=True, exist_ok=True)
    lines = []
    for record in manifest.instances:
        rel_paths = []
        for i, px in enumerate(manifest.pixels(record)):
            rel = Path("views") / f"{record.instance_id}_{i:02d}.ppm"
            write_ppm(root / rel, px)
            rel_paths.append(str(rel))
        line = f"{record.instance_id}\t{record.label}\t{','.join(rel_paths)}"
        if sidecars and record.instance_id in sidecars:
            rel = Path("views") / f"{record.instance_id}.mve"
            write_sidecar(root / rel, sidecars[record.instance_id])
            line += f"\t{rel}"
        lines.append(line)
    manifest_path = root / "manifest.tsv"
    manifest_path.write_text("\n".join(lines) + "\n")
    return manifest_path


# ---------------------------------------------------------------------------
# Synthetic generation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticSpec:
    """Desk-scale labeled multi-view dataset with controllable separability.

    Each instance anchors a dense base mixture over a few "familiar"
    palette colors; a view either re-shoots that base (probability
    ``view_redundancy``, with slight jitter) or captures a fresh sparse
    mixture over the instance's remaining "novel" colors. Redundant views
    are what the selective schemes learn to discard.
    """

    classes: int = 4
    instances_per_class: int = 3
    views_per_instance: int = 12
    width: int = 24
    height: int = 24
    centroid_spread: float = 52.0
    within_class_noise: float = 0.0
    view_redundancy: float = 0.8
    seed: int = 7

    def __post_init__(self) -> None:
        if self.classes < 2 or self.instances_per_class < 1:
            raise ValueError("need >= 2 classes and >= 1 instance per class")
        if self.views_per_instance < 1:
            raise ValueError("views_per_instance must be >= 1")
        if self.width < 1 or self.height < 1:
            raise ValueError("view dimensions must be positive")
        if self.within_class_noise < 0:
            raise ValueError("within_class_noise must be >= 0")
        if not 0.0 <= self.view_redundancy <= 1.0:
            raise ValueError("view_redundancy must be in [0, 1]")

    def model_params(self, dim: int = 256, bins: int = 32) -> ToyModelParams:
        """The toy-model parameters co-designed with this dataset."""
        return ToyModelParams(
            seed=self.seed,
            dim=dim,
            classes=self.classes,
            centroid_spread=self.centroid_spread,
            within_class_noise=self.within_class_noise,
            bins=bins,
        )


_FAMILIAR_COLORS = 4  # palette slots carrying an instance's base mixture
_NOVEL_SLOTS = 2  # palette slots a fresh view draws on
_RESHOOT_WEIGHT = 0.95  # base share of a redundant view's mixture


def _render_mixture(
    palette: np.ndarray, width: int, height: int, mixture: np.ndarray,
    sigma: float, rng: np.random.Generator,
) -> np.ndarray:
    """Horizontal color bands proportional to ``mixture``, plus jitter."""
    edges = np.rint(np.cumsum(mixture) * height).astype(int)
    edges[-1] = height
    pixels = np.empty((height, width, 3), dtype=np.float64)
    start = 0
    for color, stop in zip(palette, edges):
        pixels[start:stop] = color
        start = stop
    if sigma > 0:
        pixels += rng.normal(0.0, sigma, size=pixels.shape)
    return np.clip(np.rint(pixels), 0, 255).astype(np.uint8)


def generate_synthetic(spec: SyntheticSpec) -> DatasetManifest:
    """Render a seeded in-memory dataset; persist with ``write_dataset``."""
    palettes = class_palettes(spec.seed, spec.classes, spec.centroid_spread)
    colors = palettes.shape[1]
    familiar = min(_FAMILIAR_COLORS, colors - 1)
    records = []
    for k in range(spec.classes):
        for i in range(spec.instances_per_class):
            inst_rng = _rng((spec.seed, _TAG_RENDER, k, i))
            slots = inst_rng.permutation(colors)
            fam, nov = slots[:familiar], slots[familiar:]
            base = np.zeros(colors)
            base[fam] = inst_rng.dirichlet(np.full(familiar, 2.0))
            views = []
            for v in range(spec.views_per_instance):
                view_rng = _rng((spec.seed, _TAG_RENDER, k, i, v))
                mixture = np.zeros(colors)
                if view_rng.uniform() < spec.view_redundancy:
                    jitter = np.zeros(colors)
                    jitter[fam] = view_rng.dirichlet(np.full(familiar, 0.5))
                    mixture = _RESHOOT_WEIGHT * base + (1 - _RESHOOT_WEIGHT) * jitter
                else:
                    chosen = view_rng.choice(
                        len(nov), size=min(_NOVEL_SLOTS, len(nov)), replace=False
                    )
                    mixture[nov[chosen]] = view_rng.dirichlet(
                        np.full(len(chosen), 1.0)
                    )
                views.append(
                    _render_mixture(
                        palettes[k], spec.width, spec.height, mixture,
                        spec.within_class_noise, view_rng,
                    )
                )
            records.append(
                InstanceRecord(f"c{k:02d}i{i:02d}", k, _pixels=tuple(views))
            )
    return DatasetManifest(
        instances=records,
        classes=spec.classes,
        width=spec.width,
        height=spec.height,
    )


# ---------------------------------------------------------------------------
# Sampling and noise
# ---------------------------------------------------------------------------


def sample_views(
    views: Sequence[_T], n: int, split_context: bool, seed: Seed
) -> tuple[list[_T], list[_T]]:
    """Seeded sampling without replacement: (current views, context views).

    With ``split_context``, half of the views are held out as the
    previous-period context and the current set is drawn from the other
    half, so the two sets are always disjoint.
    """
    total = len(views)
    rng = _rng(seed)
    order = rng.permutation(total)
    if split_context:
        held_out = total // 2
        if held_out < 1:
            raise NotEnoughViews("context split needs at least 2 views")
        if n > total - held_out:
            raise NotEnoughViews(
                f"cannot sample {n} current views: only {total - held_out} "
                f"remain after holding out {held_out} context views"
            )
        context = [views[i] for i in order[:held_out]]
        current = [views[i] for i in order[held_out : held_out + n]]
        return current, context
    if n > total:
        raise NotEnoughViews(f"cannot sample {n} of {total} views")
    return [views[i] for i in order[:n]], []


@dataclass(frozen=True)
class NoiseSpec:
    """Zero-mean Gaussian RGB noise, by sigma or by target SNR.

    Exactly one of ``sigma`` (8-bit units) and ``target_snr_db`` must be
    set; in the latter case sigma is solved from the per-view signal
    power (mean squared pixel value).
    """

    sigma: Optional[float] = None
    target_snr_db: Optional[float] = None

    def __post_init__(self) -> None:
        if (self.sigma is None) == (self.target_snr_db is None):
            raise ValueError("set exactly one of sigma / target_snr_db")
        if self.sigma is not None and self.sigma < 0:
            raise ValueError("sigma must be >= 0")


def add_noise(view: View, spec: NoiseSpec, seed: Seed) -> tuple[View, float]:
    """Perturb a view with independent per-channel Gaussian noise.

    Noise is added in 8-bit space and the result clamped to [0, 255].
    Returns the noisy view and the achieved SNR in dB (inf when sigma
    resolves to zero).
    """
    pixels = view.pixels.astype(np.float64)
    power = float(np.mean(pixels * pixels))
    if spec.sigma is not None:
        sigma = spec.sigma
    else:
        sigma = float(np.sqrt(power / 10.0 ** (spec.target_snr_db / 10.0)))
    if sigma == 0.0:
        return view, float("inf")
    noise = _rng(seed).normal(0.0, sigma, size=pixels.shape)
    noisy = np.clip(np.rint(pixels + noise), 0, 255).astype(np.uint8)
    achieved = 10.0 * np.log10(power / (sigma * sigma)) if power > 0 else float("-inf")
    return replace(view, pixels=noisy), float(achieved)
