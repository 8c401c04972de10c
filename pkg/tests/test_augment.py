"""Augmentation grid enumeration, transform semantics, dataset expansion."""

import hashlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from earbench.augment import (
    AugmentConfig,
    TransformSpec,
    apply_transform,
    augment_dataset,
    derived_image_id,
    plan_augmentations,
)
from earbench.common import DataError
from earbench.images import save_image
from earbench.manifest import DatasetManifest, ManifestEntry

# Family sizes of the default grid: the six documented value ranges plus
# the toolkit-default dropout/contrast/scale/translate lists, crops, flip.
DEFAULT_FAMILY_SIZES = {
    "brightness_add": 12,
    "brightness_mul": 11,
    "blur": 8,
    "sharpen": 16,
    "rotate": 9,
    "shear": 7,
    "dropout": 2,
    "contrast": 4,
    "scale": 2,
    "translate": 2,
    "crop": 5,
    "flip": 1,
}


def family_counts(plan):
    counts: dict[str, int] = {}
    for spec in plan:
        counts[spec.family] = counts.get(spec.family, 0) + 1
    return counts


def random_image(rng, h=32, w=24, color=False):
    shape = (h, w, 3) if color else (h, w)
    return rng.integers(0, 256, size=shape, dtype=np.uint8)


class TestPlan:
    def test_default_grid_family_sizes(self):
        plan = plan_augmentations(AugmentConfig(), aligned_mode=False)
        assert family_counts(plan) == DEFAULT_FAMILY_SIZES
        assert len(plan) == sum(DEFAULT_FAMILY_SIZES.values())

    def test_brightness_add_values(self):
        config = AugmentConfig()
        assert config.brightness_add_values == (-55, -45, -35, -25, -15, -5,
                                                5, 15, 25, 35, 45, 55)

    def test_blur_sigma_values(self):
        assert AugmentConfig().blur_sigmas == (0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0)

    def test_rotation_includes_zero(self):
        rotations = [s.parameter for s in plan_augmentations(AugmentConfig())
                     if s.family == "rotate"]
        assert rotations == [-20.0, -15.0, -10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0]

    def test_multiplier_and_sharpen_counts(self):
        config = AugmentConfig()
        assert len(config.brightness_mul_values) == 11
        assert config.brightness_mul_values[0] == 0.5
        assert config.brightness_mul_values[-1] == 1.5
        assert len(config.sharpen_values) == 16

    def test_aligned_mode_drops_flip(self):
        aligned = plan_augmentations(AugmentConfig(), aligned_mode=True)
        unaligned = plan_augmentations(AugmentConfig(), aligned_mode=False)
        assert "flip" not in family_counts(aligned)
        assert len(unaligned) == len(aligned) + 1

    def test_empty_lists_disable_families(self):
        config = AugmentConfig(blur_sigmas=(), dropout_rates=(), crop_count=0,
                               flip_enabled=False)
        counts = family_counts(plan_augmentations(config))
        assert "blur" not in counts and "dropout" not in counts
        assert "crop" not in counts and "flip" not in counts

    def test_plan_is_deterministic(self):
        assert plan_augmentations(AugmentConfig()) == plan_augmentations(AugmentConfig())


class TestConfigValidation:
    def test_dropout_range(self):
        with pytest.raises(ValueError):
            AugmentConfig(dropout_rates=(0.0,))
        with pytest.raises(ValueError):
            AugmentConfig(dropout_rates=(1.0,))

    def test_sigma_positive(self):
        with pytest.raises(ValueError):
            AugmentConfig(blur_sigmas=(0.0,))

    def test_config_file_round_trip(self, tmp_path):
        config = AugmentConfig.reduced()
        path = tmp_path / "aug.cfg"
        config.to_file(path)
        assert AugmentConfig.from_file(path) == config

    def test_config_file_rejects_unknown_key(self, tmp_path):
        path = tmp_path / "aug.cfg"
        path.write_text("mystery=1\n")
        with pytest.raises(DataError, match="mystery"):
            AugmentConfig.from_file(path)


class TestTransforms:
    def test_brightness_add_saturates(self):
        image = np.array([[100, 250]], dtype=np.uint8)
        out = apply_transform(image, TransformSpec("brightness_add", 10))
        assert out[0, 0] == 110
        assert out[0, 1] == 255
        down = apply_transform(image, TransformSpec("brightness_add", -110))
        assert down[0, 0] == 0

    def test_identity_parameters(self):
        rng = np.random.default_rng(0)
        image = random_image(rng, color=True)
        for family, parameter in (("brightness_add", 0), ("brightness_mul", 1.0),
                                  ("rotate", 0.0), ("shear", 0.0), ("scale", 1.0),
                                  ("translate", 0.0)):
            out = apply_transform(image, TransformSpec(family, parameter))
            np.testing.assert_array_equal(out, image, err_msg=family)
            assert out is not image

    def test_flip_is_mirror(self):
        rng = np.random.default_rng(1)
        image = random_image(rng)
        out = apply_transform(image, TransformSpec("flip", 1))
        np.testing.assert_array_equal(out, image[:, ::-1])

    def test_contrast_pivots_at_midgray(self):
        image = np.array([[128, 0, 255]], dtype=np.uint8)
        out = apply_transform(image, TransformSpec("contrast", 0.5))
        assert out[0, 0] == 128
        assert out[0, 1] == 64
        assert out[0, 2] == 192

    def test_translate_shifts_and_replicates_edges(self):
        image = np.arange(16, dtype=np.uint8).reshape(4, 4)
        out = apply_transform(image, TransformSpec("translate", 0.25))
        assert out[1, 1] == image[0, 0]
        assert out[0, 0] == image[0, 0]  # replicated edge

    def test_dropout_deterministic_and_rate_scaled(self):
        rng = np.random.default_rng(2)
        image = random_image(rng, h=64, w=64)
        spec = TransformSpec("dropout", 0.05, seed=777)
        one = apply_transform(image, spec)
        two = apply_transform(image, spec)
        np.testing.assert_array_equal(one, two)
        changed = (one != image).sum()
        assert 0 < changed < image.size * 0.2

    def test_dropout_seed_changes_mask(self):
        rng = np.random.default_rng(3)
        image = random_image(rng, h=64, w=64)
        one = apply_transform(image, TransformSpec("dropout", 0.05, seed=1))
        two = apply_transform(image, TransformSpec("dropout", 0.05, seed=2))
        assert (one != two).any()

    def test_crop_shape_and_determinism(self):
        rng = np.random.default_rng(4)
        image = random_image(rng, h=64, w=48)
        spec = TransformSpec("crop", 0, seed=5)
        one = apply_transform(image, spec)
        assert one.shape == (56, 42)  # 0.875 of each dimension
        np.testing.assert_array_equal(one, apply_transform(image, spec))

    def test_crop_indices_differ(self):
        rng = np.random.default_rng(5)
        image = random_image(rng, h=64, w=64)
        one = apply_transform(image, TransformSpec("crop", 0, seed=9))
        two = apply_transform(image, TransformSpec("crop", 1, seed=9))
        assert (one != two).any()

    def test_scale_preserves_shape(self):
        rng = np.random.default_rng(6)
        image = random_image(rng, h=33, w=21, color=True)
        for factor in (0.9, 1.1):
            out = apply_transform(image, TransformSpec("scale", factor))
            assert out.shape == image.shape

    def test_rotate_and_shear_preserve_shape(self):
        rng = np.random.default_rng(7)
        image = random_image(rng, h=30, w=40)
        for family, parameter in (("rotate", 15.0), ("shear", -10.0)):
            out = apply_transform(image, TransformSpec(family, parameter))
            assert out.shape == image.shape

    def test_blur_smooths(self):
        rng = np.random.default_rng(8)
        image = random_image(rng, h=32, w=32)
        out = apply_transform(image, TransformSpec("blur", 2.0))
        assert out.astype(np.float64).std() < image.astype(np.float64).std()

    def test_sharpen_lightness_scales_flat_regions(self):
        flat = np.full((10, 10), 100, dtype=np.uint8)
        brighter = apply_transform(flat, TransformSpec("sharpen", 1.5))
        assert (brighter == 150).all()
        dimmer = apply_transform(flat, TransformSpec("sharpen", 0.5))
        assert (dimmer == 50).all()

    def test_unsupported_family_rejected(self):
        with pytest.raises(ValueError):
            TransformSpec("posterize", 4)

    @given(seed=st.integers(min_value=0, max_value=2**32 - 1),
           family_index=st.integers(min_value=0, max_value=11))
    @settings(max_examples=60, deadline=None)
    def test_outputs_stay_in_uint8_range(self, seed, family_index):
        rng = np.random.default_rng(seed)
        image = random_image(rng, h=16, w=16, color=bool(seed % 2))
        params = {
            "crop": 0, "flip": 1, "brightness_add": int(rng.integers(-80, 81)),
            "brightness_mul": float(rng.uniform(0.1, 2.5)),
            "blur": float(rng.uniform(0.2, 2.5)),
            "sharpen": float(rng.uniform(0.5, 2.0)),
            "dropout": 0.05, "contrast": float(rng.uniform(0.1, 2.0)),
            "scale": float(rng.uniform(0.7, 1.4)),
            "translate": float(rng.uniform(-0.3, 0.3)),
            "rotate": float(rng.uniform(-30, 30)),
            "shear": float(rng.uniform(-20, 20)),
        }
        family = list(params)[family_index]
        out = apply_transform(image, TransformSpec(family, params[family], seed=seed))
        assert out.dtype == np.uint8
        assert out.min() >= 0 and out.max() <= 255


def toy_manifest(tmp_path, n_train=2, n_test=1, size=24):
    rng = np.random.default_rng(42)
    entries = []
    for i in range(n_train + n_test):
        pixels = rng.integers(0, 256, size=(size, size), dtype=np.uint8)
        path = tmp_path / f"im{i}.png"
        save_image(pixels, path)
        split = "train" if i < n_train else "test"
        entries.append(ManifestEntry(f"im{i}", str(path), f"subj{i % 2}", "demo",
                                     "unknown", split, size, size))
    return DatasetManifest(entries)


class TestAugmentDataset:
    def test_blur_only_config_adds_eight_entries(self, tmp_path):
        manifest = toy_manifest(tmp_path, n_train=1, n_test=0)
        config = AugmentConfig(
            brightness_add_values=(), brightness_mul_values=(), blur_sigmas=AugmentConfig().blur_sigmas,
            sharpen_values=(), rotation_degrees=(), shear_degrees=(), dropout_rates=(),
            contrast_alphas=(), scale_factors=(), translate_fractions=(), crop_count=0,
            flip_enabled=False)
        result = augment_dataset(manifest, config, tmp_path / "out")
        assert len(result) == 1 + 8
        derived = [e for e in result if "#" in e.image_id]
        assert len(derived) == 8
        assert all(e.subject == manifest[0].subject for e in derived)
        assert all(e.split == "train" for e in derived)

    def test_no_train_images_is_identity(self, tmp_path):
        manifest = toy_manifest(tmp_path, n_train=0, n_test=3)
        result = augment_dataset(manifest, AugmentConfig(), tmp_path / "out")
        assert result.entries == manifest.entries

    def test_output_count_contract(self, tmp_path):
        manifest = toy_manifest(tmp_path, n_train=3, n_test=2)
        config = AugmentConfig.reduced()
        plan_size = len(plan_augmentations(config))
        result = augment_dataset(manifest, config, tmp_path / "out", seed=5)
        assert len(result) == len(manifest) + 3 * plan_size

    def test_derived_ids_and_labels(self, tmp_path):
        manifest = toy_manifest(tmp_path, n_train=1, n_test=0)
        config = AugmentConfig(
            brightness_add_values=(10,), brightness_mul_values=(), blur_sigmas=(),
            sharpen_values=(), rotation_degrees=(), shear_degrees=(), dropout_rates=(),
            contrast_alphas=(), scale_factors=(), translate_fractions=(), crop_count=0,
            flip_enabled=False)
        result = augment_dataset(manifest, config, tmp_path / "out")
        derived = [e for e in result if "#" in e.image_id]
        assert derived[0].image_id == "im0#brightness_add=10"
        assert derived[0].subject == manifest[0].subject

    def test_derived_id_format(self):
        spec = TransformSpec("brightness_mul", 0.5)
        assert derived_image_id("x/y", spec) == "x/y#brightness_mul=0.5"

    def test_deterministic_output_bytes(self, tmp_path):
        manifest = toy_manifest(tmp_path, n_train=2, n_test=0)
        config = AugmentConfig.reduced()

        def run(out_dir):
            result = augment_dataset(manifest, config, out_dir, seed=99)
            digest = {}
            for entry in result:
                if "#" in entry.image_id:
                    digest[entry.image_id] = hashlib.sha256(
                        (tmp_path / entry.path).read_bytes()).hexdigest()
            return digest

        assert run(tmp_path / "a") == run(tmp_path / "b")

    def test_parallel_execution_matches_serial(self, tmp_path):
        manifest = toy_manifest(tmp_path, n_train=3, n_test=0, size=16)
        config = AugmentConfig(
            brightness_add_values=(10, -10), brightness_mul_values=(), blur_sigmas=(0.5,),
            sharpen_values=(), rotation_degrees=(5.0,), shear_degrees=(), dropout_rates=(0.05,),
            contrast_alphas=(), scale_factors=(), translate_fractions=(), crop_count=1,
            flip_enabled=False)
        serial = augment_dataset(manifest, config, tmp_path / "serial", seed=7, jobs=1)
        parallel = augment_dataset(manifest, config, tmp_path / "parallel", seed=7, jobs=2)
        assert [e.image_id for e in serial] == [e.image_id for e in parallel]
        for left, right in zip(serial, parallel):
            if "#" not in left.image_id:
                continue
            a = (tmp_path / left.path).read_bytes()
            b = (tmp_path / right.path).read_bytes()
            assert a == b, left.image_id
