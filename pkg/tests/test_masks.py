import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from safepaint.masks import (
    MaskBucket,
    MaskGenerationError,
    complement,
    composite,
    generate_irregular,
    load_mask,
    make_input,
    mask_ratio,
    ratio_bucket,
    save_mask,
)


def rand_case(seed, h=12, w=9, c=3):
    rng = np.random.default_rng(seed)
    image = rng.uniform(0, 1, (h, w, c))
    mask = (rng.uniform(0, 1, (h, w)) < 0.4).astype(np.float64)
    return image, mask


class TestMakeInput:
    def test_zero_mask_is_identity(self):
        image, _ = rand_case(0)
        out = make_input(image, np.zeros(image.shape[:2]))
        assert np.array_equal(out, image)

    def test_full_mask_is_all_ones(self):
        image, _ = rand_case(1)
        out = make_input(image, np.ones(image.shape[:2]))
        assert np.array_equal(out, np.ones_like(image))

    def test_hand_2x2(self):
        image = np.full((2, 2), 0.25)
        mask = np.array([[1.0, 0.0], [0.0, 0.0]])
        expected = np.array([[1.0, 0.25], [0.25, 0.25]])
        assert np.array_equal(make_input(image, mask), expected)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError, match="mismatch"):
            make_input(np.zeros((4, 4, 3)), np.zeros((5, 4)))


class TestComposite:
    def test_zero_mask_returns_background(self):
        image, _ = rand_case(2)
        fill = np.random.default_rng(3).uniform(0, 1, image.shape)
        assert np.array_equal(composite(image, np.zeros(image.shape[:2]), fill), image)

    def test_full_mask_returns_fill(self):
        image, _ = rand_case(4)
        fill = np.random.default_rng(5).uniform(0, 1, image.shape)
        assert np.array_equal(composite(image, np.ones(image.shape[:2]), fill), fill)

    def test_half_mask_mean(self):
        background = np.full((2, 2, 3), 0.2)
        fill = np.full((2, 2, 3), 0.8)
        mask = np.array([[1.0, 1.0], [0.0, 0.0]])
        out = composite(background, mask, fill)
        assert out.mean() == pytest.approx(0.5)

    @given(st.integers(0, 500))
    @settings(max_examples=40, deadline=None)
    def test_background_pixels_exact(self, seed):
        image, mask = rand_case(seed)
        fill = np.random.default_rng(seed + 1).uniform(0, 1, image.shape)
        out = composite(image, mask, fill)
        known = mask < 0.5
        assert np.array_equal(out[known], image[known])

    @given(st.integers(0, 500))
    @settings(max_examples=40, deadline=None)
    def test_self_composite_identity(self, seed):
        image, mask = rand_case(seed)
        assert np.array_equal(composite(image, mask, image), image)


class TestRatioBucket:
    def test_zero_mask(self):
        assert ratio_bucket(np.zeros((8, 8))) == MaskBucket(0, 10)

    def test_35_percent(self):
        mask = np.zeros(64 * 64)
        mask[:1434] = 1.0  # 1434/4096 = 35.0%
        assert ratio_bucket(mask.reshape(64, 64)) == MaskBucket(30, 40)

    def test_15_percent(self):
        mask = np.zeros((10, 10))
        mask.ravel()[:15] = 1.0
        assert ratio_bucket(mask) == MaskBucket(10, 20)

    def test_all_ones_clamps_to_last(self):
        assert ratio_bucket(np.ones((8, 8))) == MaskBucket(90, 100)

    @given(st.integers(0, 500))
    @settings(max_examples=50, deadline=None)
    def test_consistent_with_pixel_count(self, seed):
        _, mask = rand_case(seed, h=16, w=16)
        count = int(sum(1 for v in mask.ravel() if v == 1.0))  # independent count
        ratio = count / mask.size
        bucket = ratio_bucket(mask)
        assert bucket.lower / 100 <= ratio < bucket.upper / 100 or (
            ratio == 1.0 and bucket == MaskBucket(90, 100)
        )

    def test_buckets_tile_range(self):
        buckets = [MaskBucket(lo, lo + 10) for lo in range(0, 100, 10)]
        assert all(b.upper == b.lower + 10 for b in buckets)
        assert [b.lower for b in buckets] == list(range(0, 100, 10))

    def test_parse_and_str(self):
        assert MaskBucket.parse("30-40") == MaskBucket(30, 40)
        assert str(MaskBucket(30, 40)) == "30-40"
        with pytest.raises(ValueError):
            MaskBucket.parse("30:40")
        with pytest.raises(ValueError):
            MaskBucket(30, 45)


class TestGenerateIrregular:
    def test_deterministic(self):
        a = generate_irregular(7, MaskBucket(30, 40), 64, 64)
        b = generate_irregular(7, MaskBucket(30, 40), 64, 64)
        assert np.array_equal(a, b)

    def test_seed1_bucket_30_40(self):
        mask = generate_irregular(1, MaskBucket(30, 40), 64, 64)
        assert 0.30 <= mask_ratio(mask) < 0.40
        assert set(np.unique(mask)) <= {0.0, 1.0}

    def test_low_bucket_under_10_percent(self):
        mask = generate_irregular(3, MaskBucket(0, 10), 64, 64)
        assert mask_ratio(mask) < 0.10

    def test_all_buckets_reachable(self):
        for lo in range(0, 100, 10):
            mask = generate_irregular(11, MaskBucket(lo, lo + 10), 48, 48)
            assert MaskBucket(lo, lo + 10).contains(mask_ratio(mask))

    def test_exhausted_retries_fail_explicitly(self):
        with pytest.raises(MaskGenerationError, match="bucket"):
            generate_irregular(0, MaskBucket(30, 40), 64, 64, max_attempts=0)

    def test_too_small_rejected(self):
        with pytest.raises(ValueError):
            generate_irregular(0, MaskBucket(30, 40), 8, 8)


class TestMaskIO:
    def test_roundtrip(self, tmp_path):
        mask = generate_irregular(5, MaskBucket(20, 30), 32, 32)
        path = tmp_path / "m.png"
        save_mask(path, mask)
        assert np.array_equal(load_mask(path), mask)

    def test_loader_thresholds_at_128(self, tmp_path):
        from PIL import Image

        gray = np.array([[0, 127, 128, 255]], dtype=np.uint8)
        path = tmp_path / "gray.png"
        Image.fromarray(gray, mode="L").save(path)
        assert load_mask(path).tolist() == [[0.0, 0.0, 1.0, 1.0]]


def test_complement_involution():
    _, mask = rand_case(9)
    assert np.array_equal(complement(complement(mask)), mask)
