"""Augmentation pipeline: counts, angular consistency, synchronization."""

import numpy as np
import pytest

from lfsal.augment import (AugmentationSpec, AugmentedDataset, Sample, add_noise,
                           crop_sample, enumerate_variants, flip_sample, photometric,
                           rotate_sample, variant_recipes)
from lfsal.errors import AlignmentError, ConfigurationError
from lfsal.lightfield import (MicroLensArray, assemble_microlens_array,
                              disassemble_microlens_array, flip_lightfield,
                              rotate_lightfield)
from lfsal.metrics import adaptive_f_measure, mae
from lfsal.synthetic import indexed_lightfield


def make_sample(gen=None, a=3, n_y=6, n_x=8, mask=None):
    gen = gen or np.random.default_rng(0)
    pixels = gen.random((n_y * a, n_x * a, 3))
    if mask is None:
        mask = (gen.random((n_y, n_x)) < 0.3).astype(np.int64)
    return Sample(MicroLensArray(pixels, a), mask)


def indexed_sample(a=3, n_y=2, n_x=4):
    arr = assemble_microlens_array(indexed_lightfield(a, n_y, n_x, channels=3))
    mask = np.zeros((n_y, n_x), dtype=np.int64)
    mask[0, 0] = 1
    return Sample(arr, mask)


class TestRotate:
    def test_identity(self):
        s = make_sample()
        out = rotate_sample(s, 0)
        np.testing.assert_array_equal(out.array.pixels, s.array.pixels)
        np.testing.assert_array_equal(out.mask, s.mask)

    def test_group_property(self):
        s = make_sample()
        twice = rotate_sample(rotate_sample(s, 90), 90)
        once = rotate_sample(s, 180)
        np.testing.assert_array_equal(twice.array.pixels, once.array.pixels)
        np.testing.assert_array_equal(twice.mask, once.mask)

    @pytest.mark.parametrize("k", [90, 180, 270])
    def test_matches_lightfield_level_rotation(self, k):
        s = indexed_sample()
        rotated = rotate_sample(s, k)
        lf = disassemble_microlens_array(s.array)
        expected = assemble_microlens_array(rotate_lightfield(lf, k // 90))
        np.testing.assert_array_equal(rotated.array.pixels, expected.pixels)

    def test_bad_angle_rejected(self):
        with pytest.raises(ConfigurationError):
            rotate_sample(make_sample(), 45)


class TestFlip:
    def test_involution(self):
        s = make_sample()
        for axis in ("horizontal", "vertical"):
            back = flip_sample(flip_sample(s, axis), axis)
            np.testing.assert_array_equal(back.array.pixels, s.array.pixels)
            np.testing.assert_array_equal(back.mask, s.mask)

    def test_matches_lightfield_level_flip(self):
        s = indexed_sample()
        lf = disassemble_microlens_array(s.array)
        flipped = flip_sample(s, "horizontal")
        expected = assemble_microlens_array(flip_lightfield(lf, "horizontal"))
        np.testing.assert_array_equal(flipped.array.pixels, expected.pixels)
        # view (u, v) -> (N_u-1-u, v), column x -> N_x-1-x on the indexed field
        lf_flipped = disassemble_microlens_array(flipped.array)
        np.testing.assert_array_equal(lf_flipped.views[0, 0],
                                      lf.views[0, 2][:, ::-1])

    def test_constant_array_unchanged(self):
        a = MicroLensArray(np.full((6, 9, 3), 0.25), 3)
        s = Sample(a, np.zeros((2, 3), dtype=np.int64))
        out = flip_sample(s, "horizontal")
        np.testing.assert_array_equal(out.array.pixels, a.pixels)


class TestCrop:
    def test_full_size_is_identity(self):
        s = make_sample()
        out = crop_sample(s, (0, 0), (s.array.width, s.array.height))
        np.testing.assert_array_equal(out.array.pixels, s.array.pixels)
        np.testing.assert_array_equal(out.mask, s.mask)

    def test_reference_crop_arithmetic(self):
        # 3519x2907 from 4860x3375 at A=9 -> spatial mask crop 391x323
        assert 3519 == 9 * 391 and 2907 == 9 * 323
        spec = AugmentationSpec.default_for(4860, 3375, 9)
        assert spec.crop_size == (3519, 2907)

    def test_mask_window(self):
        s = make_sample(a=3, n_y=6, n_x=8)
        out = crop_sample(s, (6, 3), (9, 12))
        assert out.array.pixels.shape == (12, 9, 3)
        np.testing.assert_array_equal(out.mask, s.mask[1:5, 2:5])

    def test_crop_round_trips_through_disassembly(self):
        s = make_sample(a=3)
        out = crop_sample(s, (3, 3), (12, 9))
        lf = disassemble_microlens_array(out.array)
        assert (lf.n_y, lf.n_x) == (3, 4)
        np.testing.assert_array_equal(assemble_microlens_array(lf).pixels, out.array.pixels)

    def test_unaligned_origin_reported(self):
        with pytest.raises(AlignmentError, match="x0=2"):
            crop_sample(make_sample(a=3), (2, 0), (6, 6))


class TestPhotometric:
    def test_unit_factors_are_identity(self):
        s = make_sample()
        out = photometric(s, 1.0, 1.0, 1.0)
        np.testing.assert_array_equal(out.array.pixels, s.array.pixels)

    def test_brightness_clamps(self):
        a = MicroLensArray(np.full((3, 3, 3), 0.9), 3)
        s = Sample(a, np.zeros((1, 1), dtype=np.int64))
        out = photometric(s, brightness=1.5)
        np.testing.assert_allclose(out.array.pixels, 1.0)

    def test_gray_image_fixed_under_chroma(self):
        a = MicroLensArray(np.full((6, 6, 3), 0.4), 3)
        s = Sample(a, np.zeros((2, 2), dtype=np.int64))
        out = photometric(s, chroma=1.7)
        np.testing.assert_allclose(out.array.pixels, 0.4, atol=1e-12)

    def test_chroma_matches_reference_hsv(self):
        matplotlib = pytest.importorskip("matplotlib")
        from matplotlib.colors import hsv_to_rgb, rgb_to_hsv
        gen = np.random.default_rng(1)
        pix = gen.random((6, 6, 3)) * 0.8 + 0.1
        s = Sample(MicroLensArray(pix, 3), np.zeros((2, 2), dtype=np.int64))
        out = photometric(s, chroma=1.3)
        hsv = rgb_to_hsv(pix)
        hsv[..., 1] = np.clip(hsv[..., 1] * 1.3, 0, 1)
        ref = np.clip(hsv_to_rgb(hsv), 0, 1)
        np.testing.assert_allclose(out.array.pixels, ref, atol=1e-9)

    def test_contrast_keeps_mean(self):
        gen = np.random.default_rng(2)
        pix = gen.random((6, 6, 3)) * 0.3 + 0.35  # interior values, no clamping
        s = Sample(MicroLensArray(pix, 3), np.zeros((2, 2), dtype=np.int64))
        out = photometric(s, contrast=1.5)
        np.testing.assert_allclose(out.array.pixels.mean(axis=(0, 1)),
                                   pix.mean(axis=(0, 1)), atol=1e-12)

    def test_mask_never_touched(self):
        s = make_sample()
        out = photometric(s, 1.5, 1.7, 1.7)
        assert out.mask is s.mask


class TestNoise:
    def test_zero_variance_identity(self):
        s = make_sample()
        out = add_noise(s, 0.0, np.random.default_rng(0))
        np.testing.assert_array_equal(out.array.pixels, s.array.pixels)

    def test_sigma_matches_variance(self):
        # variance 0.01 -> sigma 0.1, empirically within 5% on interior values
        gen = np.random.default_rng(3)
        pixels = gen.random((600, 600, 3)) * 0.2 + 0.4
        s = Sample(MicroLensArray(pixels, 3), np.zeros((200, 200), dtype=np.int64))
        out = add_noise(s, 0.01, np.random.default_rng(4))
        sigma = (out.array.pixels - pixels).std()
        assert abs(sigma - 0.1) < 0.005

    def test_mask_bit_identical(self):
        s = make_sample()
        out = add_noise(s, 0.01, np.random.default_rng(5))
        assert out.mask is s.mask

    def test_stays_in_unit_interval(self):
        s = make_sample()
        out = add_noise(s, 0.25, np.random.default_rng(6))
        assert out.array.pixels.min() >= 0.0 and out.array.pixels.max() <= 1.0


class TestEnumeration:
    def test_default_spec_yields_48(self):
        s = make_sample(a=3, n_y=8, n_x=8)
        spec = AugmentationSpec.default_for(s.array.width, s.array.height, 3)
        variants = enumerate_variants(s, spec, seed=0)
        assert len(variants) == 48
        assert 512 * len(variants) == 24576

    def test_minimal_spec_single_identity(self):
        s = make_sample()
        spec = AugmentationSpec(rotations=(0,), flips=(), crop_size=None, crop_count=0,
                                brightness_factors=(), chroma_contrast_factor=None,
                                noise_variance=0.0, expected_count=1)
        variants = enumerate_variants(s, spec, seed=0)
        assert len(variants) == 1
        np.testing.assert_array_equal(variants[0].array.pixels, s.array.pixels)

    def test_count_mismatch_rejected(self):
        s = make_sample()
        spec = AugmentationSpec(expected_count=47,
                                crop_size=(s.array.width, s.array.height))
        with pytest.raises(ConfigurationError):
            enumerate_variants(s, spec, seed=0)

    def test_recipe_breakdown(self):
        spec = AugmentationSpec(crop_size=(9, 9))
        recipes = variant_recipes(spec)
        plain = [r for r in recipes if not r.noisy]
        rot = [r for r in plain if r.geometric[0] == "rot"]
        aux = [r for r in plain if r.geometric[0] in ("flip", "crop")]
        assert len(plain) == 24 and len(rot) == 16 and len(aux) == 8
        assert sum(r.noisy for r in recipes) == 24

    def test_metric_equivariance_of_geometric_variants(self):
        gen = np.random.default_rng(7)
        mask = (gen.random((8, 8)) < 0.3).astype(np.int64)
        mask[4, 4] = 1
        s = make_sample(gen, a=3, n_y=8, n_x=8, mask=mask)
        pred = gen.random((8, 8))
        spec = AugmentationSpec(crop_size=None, crop_count=0, noise_variance=0.0,
                                brightness_factors=(), chroma_contrast_factor=None,
                                expected_count=6)
        base_f = adaptive_f_measure(pred, s.mask)
        base_mae = mae(pred, s.mask)
        for recipe in variant_recipes(spec):
            op, arg = recipe.geometric
            if op == "rot":
                tf = lambda m, k=arg // 90: np.rot90(m, k)
            else:
                tf = (lambda m: m[:, ::-1]) if arg == "horizontal" else (lambda m: m[::-1])
            variant = (rotate_sample(s, arg) if op == "rot" else flip_sample(s, arg))
            np.testing.assert_array_equal(variant.mask, tf(s.mask))
            assert adaptive_f_measure(tf(pred), variant.mask) == pytest.approx(base_f, abs=1e-12)
            assert mae(tf(pred), variant.mask) == pytest.approx(base_mae, abs=1e-12)

    def test_determinism_same_seed(self):
        s = make_sample(a=3, n_y=8, n_x=8)
        spec = AugmentationSpec.default_for(s.array.width, s.array.height, 3)
        first = enumerate_variants(s, spec, seed=5)
        second = enumerate_variants(s, spec, seed=5)
        for a, b in zip(first, second):
            np.testing.assert_array_equal(a.array.pixels, b.array.pixels)
            np.testing.assert_array_equal(a.mask, b.mask)

    def test_different_seed_changes_crops_and_noise(self):
        s = make_sample(a=3, n_y=8, n_x=8)
        spec = AugmentationSpec.default_for(s.array.width, s.array.height, 3)
        a = enumerate_variants(s, spec, seed=5)
        b = enumerate_variants(s, spec, seed=6)
        assert any(x.array.pixels.shape != y.array.pixels.shape
                   or not np.array_equal(x.array.pixels, y.array.pixels)
                   for x, y in zip(a, b))

    def test_angular_consistency_of_all_variants(self):
        # every variant disassembles back into a valid light field
        s = indexed_sample(a=3, n_y=4, n_x=4)
        spec = AugmentationSpec.default_for(s.array.width, s.array.height, 3)
        for v in enumerate_variants(s, spec, seed=0):
            lf = disassemble_microlens_array(v.array)
            assert lf.angular_res == 3
            assert v.mask.shape == (lf.n_y, lf.n_x)

    def test_mask_sync_commutes_with_central_view(self):
        s = make_sample(a=3, n_y=6, n_x=8)
        for variant in (rotate_sample(s, 90), flip_sample(s, "horizontal")):
            lf = disassemble_microlens_array(variant.array)
            central = lf.views[1, 1]  # A=3 center
            assert central.shape[:2] == variant.mask.shape


class TestAugmentedDataset:
    def test_virtual_length_and_indexing(self):
        samples = [make_sample(np.random.default_rng(i), a=3, n_y=8, n_x=8) for i in range(3)]
        spec = AugmentationSpec.default_for(samples[0].array.width,
                                            samples[0].array.height, 3)
        ds = AugmentedDataset(lambda i: samples[i], 3, spec, seed=1)
        assert len(ds) == 3 * 48
        v = ds[50]  # sample 1, variant 2
        direct = enumerate_variants(samples[1], spec, seed=1, sample_index=1)[2]
        np.testing.assert_array_equal(v.array.pixels, direct.array.pixels)

    def test_order_independent_access(self):
        samples = [make_sample(np.random.default_rng(i), a=3, n_y=8, n_x=8) for i in range(2)]
        spec = AugmentationSpec.default_for(samples[0].array.width,
                                            samples[0].array.height, 3)
        ds1 = AugmentedDataset(lambda i: samples[i], 2, spec, seed=2)
        ds2 = AugmentedDataset(lambda i: samples[i], 2, spec, seed=2)
        idx = [5, 90, 0, 47, 48, 13]
        first = [ds1[i].array.pixels for i in idx]
        second = [ds2[i].array.pixels for i in reversed(idx)]
        for a, b in zip(first, reversed(second)):
            np.testing.assert_array_equal(a, b)
