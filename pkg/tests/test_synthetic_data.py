"""Shapes-world generator and augmentation tests."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from taskcodec import data


class TestGenerateDataset:
    def test_bit_identical_regeneration(self):
        """Same (seed, count, size, classes) twice -> byte-equal samples."""
        a = data.generate_dataset(7, 2, 64, 4)
        b = data.generate_dataset(7, 2, 64, 4)
        for sa, sb in zip(a, b):
            assert sa.image.tobytes() == sb.image.tobytes()
            assert sa.depth.tobytes() == sb.depth.tobytes()
            assert sa.segmentation.tobytes() == sb.segmentation.tobytes()

    def test_at_least_one_shape(self):
        for sample in data.generate_dataset(3, 32, 64, 4):
            assert (sample.segmentation > 0).any()

    def test_background_fraction_regression(self):
        """Frozen regression bound, measured once from this generator at
        (seed=7, count=512, size=64, classes=4): 0.7723."""
        samples = data.generate_dataset(7, 512, 64, 4)
        total = sum(s.segmentation.size for s in samples)
        background = sum(int((s.segmentation == 0).sum()) for s in samples)
        fraction = background / total
        assert 0.4 <= fraction <= 0.9  # the contract bound
        assert 0.70 <= fraction <= 0.85  # regression band around 0.7723

    def test_ranges_and_alignment(self):
        for s in data.generate_dataset(11, 16, 64, 4):
            assert s.image.shape == (3, 64, 64)
            assert s.depth.shape == (64, 64)
            assert s.segmentation.shape == (64, 64)
            assert 0.0 <= s.image.min() and s.image.max() <= 1.0
            assert 0.0 <= s.depth.min() and s.depth.max() <= 1.0
            assert s.segmentation.min() >= 0
            assert s.segmentation.max() < 4

    def test_num_classes_folding(self):
        for s in data.generate_dataset(5, 8, 64, 2):
            assert s.segmentation.max() <= 1

    def test_size_not_divisible_by_16_rejected(self):
        with pytest.raises(data.ConfigurationError):
            data.generate_dataset(1, 1, 60, 4)

    def test_invalid_counts_rejected(self):
        with pytest.raises(data.ConfigurationError):
            data.DatasetManifest(1, 0, 64, 4)
        with pytest.raises(data.ConfigurationError):
            data.DatasetManifest(1, 4, 64, 1)

    def test_manifest_roundtrip(self, tmp_path):
        m = data.DatasetManifest(9, 12, 64, 4)
        m.to_json(tmp_path / "manifest.json")
        assert data.DatasetManifest.from_json(tmp_path / "manifest.json") == m

    def test_dataset_view(self):
        ds = data.ShapesDataset(data.DatasetManifest(2, 5, 64, 4))
        assert len(ds) == 5
        direct = data.generate_sample(2, 3, 64, 4)
        assert np.array_equal(ds[3].image, direct.image)
        with pytest.raises(IndexError):
            ds[5]


class TestAugment:
    def _sample(self, seed=0):
        return data.generate_sample(13, seed, 64, 4)

    def test_identity_policy_is_bit_exact(self):
        sample = self._sample()
        policy = data.AugmentationPolicy(0.0, 0.0, 0.0, 0.0)
        out = data.augment(sample, policy, np.random.default_rng(0))
        assert out.image.tobytes() == sample.image.tobytes()
        assert out.depth.tobytes() == sample.depth.tobytes()
        assert out.segmentation.tobytes() == sample.segmentation.tobytes()

    def test_flip_maps_columns_consistently(self):
        sample = self._sample()
        policy = data.AugmentationPolicy(1.0, 0.0, 0.0, 0.0)
        out = data.augment(sample, policy, np.random.default_rng(1))
        size = sample.size
        for col in (0, 7, 31):
            assert np.array_equal(out.image[:, :, col], sample.image[:, :, size - 1 - col])
            assert np.array_equal(out.depth[:, col], sample.depth[:, size - 1 - col])
            assert np.array_equal(out.segmentation[:, col],
                                  sample.segmentation[:, size - 1 - col])

    def test_brightness_extremes_are_clamped(self):
        """Half-range 0.5 on an all-0.9 image keeps values in [0.4, 1.0] and
        clamps at 1.0 where the factor would exceed it."""
        base = self._sample()
        sample = data.ShapesSample(
            image=np.full_like(base.image, 0.9),
            depth=base.depth, segmentation=base.segmentation, sample_id=0,
        )
        policy = data.AugmentationPolicy(0.0, 0.5, 0.0, 0.0)
        saw_clamp = False
        for k in range(64):
            rng = np.random.default_rng(k)
            out = data.augment(sample, policy, rng)
            assert out.image.min() >= 0.4 - 1e-6
            assert out.image.max() <= 1.0
            factor = 1.0 + np.random.default_rng(k).uniform(-0.5, 0.5)
            if factor > 1.0 / 0.9:
                saw_clamp = True
                assert np.all(out.image == 1.0)
        assert saw_clamp

    def test_geometric_targets_untouched_by_jitter(self):
        sample = self._sample()
        policy = data.AugmentationPolicy(0.0, 0.3, 0.3, 0.3)
        out = data.augment(sample, policy, np.random.default_rng(2))
        assert np.array_equal(out.depth, sample.depth)
        assert np.array_equal(out.segmentation, sample.segmentation)

    @settings(max_examples=30, deadline=None)
    @given(
        flip=st.floats(0, 1), b=st.floats(0, 1), c=st.floats(0, 1),
        s=st.floats(0, 1), seed=st.integers(0, 10_000),
    )
    def test_jitter_never_leaves_unit_range(self, flip, b, c, s, seed):
        sample = self._sample(seed % 7)
        policy = data.AugmentationPolicy(flip, b, c, s)
        out = data.augment(sample, policy, np.random.default_rng(seed))
        assert out.image.min() >= 0.0
        assert out.image.max() <= 1.0

    def test_invalid_policy_rejected(self):
        with pytest.raises(data.ConfigurationError):
            data.AugmentationPolicy(horizontal_flip_prob=1.5)
        with pytest.raises(data.ConfigurationError):
            data.AugmentationPolicy(jitter_contrast=-0.1)


class TestImageFolderIngestion:
    def test_loads_rgb_files_sorted(self, tmp_path):
        from PIL import Image

        for name, shade in (("b.png", 64), ("a.png", 192)):
            arr = np.full((32, 48, 3), shade, dtype=np.uint8)
            Image.fromarray(arr).save(tmp_path / name)
        images = data.load_image_folder(tmp_path)
        assert len(images) == 2
        assert images[0].shape == (3, 32, 48)
        # sorted by name: a.png (192) first
        assert images[0].mean() > images[1].mean()
        assert images[0].dtype == np.float32
        assert 0.0 <= images[0].min() and images[0].max() <= 1.0

    def test_empty_folder_rejected(self, tmp_path):
        with pytest.raises(data.ConfigurationError):
            data.load_image_folder(tmp_path)
