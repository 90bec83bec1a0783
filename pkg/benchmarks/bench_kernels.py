#!/usr/bin/env python
"""Benchmark the compiled descriptor kernels against the NumPy fallback.

Both backends are imported directly (the compiled one is skipped with a
note if the extension was not built) and timed on random views at a few
resolutions. Run:

    python benchmarks/bench_kernels.py [--repeats 50]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from mvedge import _kernels_np

try:
    from mvedge import _kernels
except ImportError:
    _kernels = None

SIZES = [(24, 24), (64, 64), (224, 224)]
BINS = 32


def time_call(fn, *args, repeats: int) -> float:
    fn(*args)  # warm up
    start = time.perf_counter()
    for _ in range(repeats):
        fn(*args)
    return (time.perf_counter() - start) / repeats * 1000.0


def banded_view(rng: np.random.Generator, h: int, w: int, sigma: float) -> np.ndarray:
    """A synthetic-style view: three color bands plus Gaussian jitter."""
    palette = rng.integers(0, 256, size=(3, 3))
    pixels = np.repeat(palette, [h // 3, h // 3, h - 2 * (h // 3)], axis=0)
    pixels = np.broadcast_to(pixels[:, None, :], (h, w, 3)).astype(np.float64)
    if sigma > 0:
        pixels = pixels + rng.normal(0, sigma, size=pixels.shape)
    return np.clip(np.rint(pixels), 0, 255).astype(np.uint8)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=50)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()

    rng = np.random.Generator(np.random.PCG64(args.seed))
    print(f"{'kernel':<14} {'input':>16} {'numpy ms':>10} {'compiled ms':>12} {'speedup':>8}")
    for h, w in SIZES:
        inputs = [
            ("random", rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)),
            ("banded+noise", banded_view(rng, h, w, sigma=8.0)),
        ]
        for label, pixels in inputs:
            for name, np_fn, c_fn in (
                ("rgb_to_lab", _kernels_np.rgb_to_lab,
                 None if _kernels is None else _kernels.rgb_to_lab),
                ("chroma_hist", lambda p: _kernels_np.chroma_hist(p, BINS),
                 None if _kernels is None else (lambda p: _kernels.chroma_hist(p, BINS))),
            ):
                tag = f"{w}x{h} {label}"
                np_ms = time_call(np_fn, pixels, repeats=args.repeats)
                if c_fn is None:
                    print(f"{name:<14} {tag:>16} {np_ms:>10.3f} {'(not built)':>12} {'-':>8}")
                    continue
                c_ms = time_call(c_fn, pixels, repeats=args.repeats)
                if name == "chroma_hist":
                    agree = np.array_equal(np_fn(pixels), c_fn(pixels))
                else:
                    agree = np.allclose(np_fn(pixels), c_fn(pixels), rtol=0, atol=1e-12)
                print(
                    f"{name:<14} {tag:>16} {np_ms:>10.3f} {c_ms:>12.3f} "
                    f"{np_ms / c_ms:>7.1f}x{'' if agree else '  (MISMATCH!)'}"
                )
    if _kernels is None:
        print("\ncompiled extension not built; showing fallback timings only")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
