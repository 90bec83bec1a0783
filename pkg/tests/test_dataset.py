"""Raster/sidecar round trips, sampling, noise, and the generator."""

import numpy as np
import pytest

from mvedge.dataset import (
    DatasetManifest,
    InstanceRecord,
    NoiseSpec,
    SyntheticSpec,
    add_noise,
    generate_synthetic,
    load_dataset,
    read_ppm,
    read_sidecar,
    sample_views,
    write_dataset,
    write_ppm,
    write_sidecar,
)
from mvedge.errors import (
    MalformedRaster,
    MissingFile,
    NotEnoughViews,
    SidecarShapeMismatch,
)
from mvedge.models import classify_single, extract, toy_models
from mvedge.types import View


class TestPpm:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.Generator(np.random.PCG64(0))
        pixels = rng.integers(0, 256, size=(11, 7, 3), dtype=np.uint8)
        path = tmp_path / "v.ppm"
        write_ppm(path, pixels)
        assert np.array_equal(read_ppm(path), pixels)

    def test_header_is_canonical_p6(self, tmp_path):
        path = tmp_path / "v.ppm"
        write_ppm(path, np.zeros((2, 3, 3), dtype=np.uint8))
        assert path.read_bytes().startswith(b"P6\n3 2\n255\n")

    def test_missing_file(self, tmp_path):
        with pytest.raises(MissingFile):
            read_ppm(tmp_path / "absent.ppm")

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.ppm"
        path.write_bytes(b"P5\n2 2\n255\n" + bytes(12))
        with pytest.raises(MalformedRaster):
            read_ppm(path)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "short.ppm"
        path.write_bytes(b"P6\n2 2\n255\n" + bytes(5))
        with pytest.raises(MalformedRaster):
            read_ppm(path)

    def test_wrong_maxval(self, tmp_path):
        path = tmp_path / "wide.ppm"
        path.write_bytes(b"P6\n1 1\n65535\n" + bytes(6))
        with pytest.raises(MalformedRaster):
            read_ppm(path)


class TestSidecar:
    def test_round_trip(self, tmp_path):
        rng = np.random.Generator(np.random.PCG64(1))
        matrix = rng.normal(size=(12, 64)).astype(np.float32)
        path = tmp_path / "e.mve"
        write_sidecar(path, matrix)
        assert np.array_equal(read_sidecar(path), matrix)

    def test_header_layout(self, tmp_path):
        path = tmp_path / "e.mve"
        write_sidecar(path, np.zeros((3, 5), dtype=np.float32))
        raw = path.read_bytes()
        assert raw[:4] == b"MVE1"
        assert int.from_bytes(raw[4:8], "little") == 3
        assert int.from_bytes(raw[8:12], "little") == 5
        assert len(raw) == 16 + 3 * 5 * 4

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.mve"
        path.write_bytes(b"XXXX" + bytes(12))
        with pytest.raises(SidecarShapeMismatch):
            read_sidecar(path)

    def test_row_count_mismatch_detected_at_load(self, tmp_path):
        manifest = generate_synthetic(SyntheticSpec(instances_per_class=1))
        record = manifest.instances[0]
        wrong = np.zeros((record.view_count + 1, 8), dtype=np.float32)
        manifest_path = write_dataset(
            manifest, tmp_path, sidecars={record.instance_id: wrong}
        )
        loaded = load_dataset(manifest_path)
        with pytest.raises(SidecarShapeMismatch):
            loaded.sidecar(loaded.instances[0])


class TestManifestIo:
    def test_generate_write_load_round_trip(self, tmp_path):
        manifest = generate_synthetic(SyntheticSpec(instances_per_class=1))
        path = write_dataset(manifest, tmp_path)
        loaded = load_dataset(path)
        assert loaded.classes == manifest.classes
        assert len(loaded.instances) == len(manifest.instances)
        for orig, back in zip(manifest.instances, loaded.instances):
            assert back.instance_id == orig.instance_id
            assert back.label == orig.label
            for a, b in zip(manifest.pixels(orig), loaded.pixels(back)):
                assert np.array_equal(a, b)

    def test_views_carry_provenance_tags(self):
        manifest = generate_synthetic(SyntheticSpec(instances_per_class=1))
        record = manifest.instances[0]
        views = manifest.views(record)
        assert len(views) == 12
        assert views[3].tag == (record.instance_id, 3)

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(MissingFile):
            load_dataset(tmp_path / "none.tsv")

    def test_missing_raster_listed_in_manifest(self, tmp_path):
        (tmp_path / "m.tsv").write_text("a\t0\tviews/gone.ppm\n")
        with pytest.raises(MissingFile):
            load_dataset(tmp_path / "m.tsv")

    def test_sidecar_round_trip_through_manifest(self, tmp_path):
        spec = SyntheticSpec(instances_per_class=1)
        manifest = generate_synthetic(spec)
        backbone, _ = toy_models(spec.model_params())
        sidecars = {
            r.instance_id: np.array(
                [extract(backbone, v) for v in manifest.views(r)], dtype=np.float32
            )
            for r in manifest.instances
        }
        path = write_dataset(manifest, tmp_path, sidecars)
        loaded = load_dataset(path)
        for record in loaded.instances:
            matrix = loaded.sidecar(record)
            assert matrix is not None
            assert np.array_equal(matrix, sidecars[record.instance_id])


class TestSampleViews:
    views = list(range(12))

    def test_exhaustive_sample_without_split(self):
        current, context = sample_views(self.views, 12, False, 3)
        assert sorted(current) == self.views
        assert context == []

    def test_split_is_disjoint_half(self):
        current, context = sample_views(self.views, 6, True, 3)
        assert len(current) == 6 and len(context) == 6
        assert set(current).isdisjoint(context)
        assert sorted(current + context) == self.views

    def test_same_seed_is_identical(self):
        assert sample_views(self.views, 4, True, 9) == sample_views(self.views, 4, True, 9)

    def test_different_seed_differs(self):
        runs = {tuple(sample_views(self.views, 4, True, s)[0]) for s in range(20)}
        assert len(runs) > 1

    def test_not_enough_views(self):
        with pytest.raises(NotEnoughViews):
            sample_views(self.views, 7, True, 0)
        with pytest.raises(NotEnoughViews):
            sample_views(self.views, 13, False, 0)


class TestAddNoise:
    def gray_view(self, value=120, size=16):
        return View(np.full((size, size, 3), value, dtype=np.uint8))

    def test_zero_sigma_is_identity(self):
        view = self.gray_view()
        noisy, snr = add_noise(view, NoiseSpec(sigma=0.0), 0)
        assert noisy is view
        assert snr == float("inf")

    def test_target_snr_on_uniform_gray_has_closed_form_sigma(self):
        # power = g^2, so sigma = g / 10^(snr/20); at 20 dB sigma = g/10
        view = self.gray_view(value=120)
        _, achieved = add_noise(view, NoiseSpec(target_snr_db=20.0), 1)
        assert achieved == pytest.approx(20.0, abs=1e-9)
        power = 120.0 ** 2
        sigma = np.sqrt(power / 10.0 ** 2)
        assert sigma == pytest.approx(12.0, abs=1e-12)

    def test_same_seed_same_noise_field(self):
        view = self.gray_view()
        n1, _ = add_noise(view, NoiseSpec(sigma=10.0), 42)
        n2, _ = add_noise(view, NoiseSpec(sigma=10.0), 42)
        assert np.array_equal(n1.pixels, n2.pixels)
        n3, _ = add_noise(view, NoiseSpec(sigma=10.0), 43)
        assert not np.array_equal(n1.pixels, n3.pixels)

    def test_shape_range_and_dtype_preserved(self):
        noisy, _ = add_noise(self.gray_view(), NoiseSpec(sigma=50.0), 7)
        assert noisy.pixels.shape == (16, 16, 3)
        assert noisy.pixels.dtype == np.uint8

    def test_mean_shift_within_three_sigma(self):
        # mid-gray avoids clamping; mean shift should be 0 +- 3 sigma/sqrt(n)
        sigma = 8.0
        view = self.gray_view(value=128, size=24)
        count = 24 * 24 * 3
        bound = 3.0 * sigma / np.sqrt(count)
        for seed in range(12):
            noisy, _ = add_noise(view, NoiseSpec(sigma=sigma), seed)
            shift = noisy.pixels.astype(np.float64).mean() - 128.0
            assert abs(shift) <= bound

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            NoiseSpec()
        with pytest.raises(ValueError):
            NoiseSpec(sigma=1.0, target_snr_db=10.0)
        with pytest.raises(ValueError):
            NoiseSpec(sigma=-1.0)


class TestGenerateSynthetic:
    def test_noiseless_single_view_accuracy_is_exact(self):
        spec = SyntheticSpec()
        manifest = generate_synthetic(spec)
        backbone, head = toy_models(spec.model_params())
        for record in manifest.instances:
            for view in manifest.views(record):
                assert classify_single(head, extract(backbone, view)) == record.label

    def test_class_palette_determinism(self):
        # instances of one class render from the same palette: their
        # chroma support is a subset of the class bucket set
        from mvedge.descriptors import hist
        from mvedge.models import _bucket_of, class_palettes

        spec = SyntheticSpec(instances_per_class=2)
        manifest = generate_synthetic(spec)
        palettes = class_palettes(spec.seed, spec.classes, spec.centroid_spread)
        for record in manifest.instances:
            allowed = {
                _bucket_of(palettes[record.label, j], 32)
                for j in range(palettes.shape[1])
            }
            for px in manifest.pixels(record):
                h = hist(View(px), 32)
                support = {tuple(idx) for idx in np.argwhere(h > 0)}
                assert support <= allowed

    def test_same_spec_is_bit_identical(self):
        m1 = generate_synthetic(SyntheticSpec(instances_per_class=1))
        m2 = generate_synthetic(SyntheticSpec(instances_per_class=1))
        for r1, r2 in zip(m1.instances, m2.instances):
            for a, b in zip(m1.pixels(r1), m2.pixels(r2)):
                assert np.array_equal(a, b)

    def test_noise_monotonically_degrades_accuracy(self):
        sigmas = (0.0, 24.0, 48.0, 96.0)
        means = []
        for sigma in sigmas:
            accs = []
            for seed in range(12):
                spec = SyntheticSpec(
                    instances_per_class=1, within_class_noise=sigma, seed=20 + seed
                )
                manifest = generate_synthetic(spec)
                backbone, head = toy_models(spec.model_params())
                hits = total = 0
                for record in manifest.instances:
                    for view in manifest.views(record):
                        hits += classify_single(head, extract(backbone, view)) == record.label
                        total += 1
                accs.append(hits / total)
            means.append(float(np.mean(accs)))
        assert all(b <= a + 1e-9 for a, b in zip(means, means[1:]))
        assert means[-1] < means[0]
