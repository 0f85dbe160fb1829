import numpy as np
import pytest

from vceclip.errors import ConfigError, FormatError
from vceclip.images import (
    AugmentationPolicy,
    augment,
    decode_image,
    decode_ppm,
    encode_ppm,
    hflip,
    normalize,
    resize,
    rotate90,
    vflip,
    write_image,
)


def gradient_8x8():
    y, x = np.mgrid[0:8, 0:8]
    return np.stack([x * 32, y * 32, (x + y) * 16], axis=-1).astype(np.uint8)


class TestPPM:
    def test_red_2x2(self):
        buf = b"P6\n2 2\n255\n" + bytes([255, 0, 0]) * 4
        img = decode_ppm(buf)
        assert img.shape == (2, 2, 3)
        np.testing.assert_array_equal(img, np.broadcast_to([1.0, 0.0, 0.0], (2, 2, 3)))

    def test_header_comments_and_whitespace(self):
        buf = b"P6 # comment\n1\t1\n# another\n255\n" + bytes([0, 51, 255])
        np.testing.assert_array_equal(decode_ppm(buf)[0, 0], [0.0, 0.2, 1.0])

    def test_round_trip_bit_exact(self):
        pixels = gradient_8x8()
        buf = encode_ppm(pixels)
        img = decode_ppm(buf)
        np.testing.assert_array_equal(img, pixels / 255.0)
        assert encode_ppm(img) == buf

    def test_maxval_not_255(self):
        with pytest.raises(FormatError, match="maxval"):
            decode_ppm(b"P6\n1 1\n65535\n" + bytes(6))

    def test_bad_magic(self):
        with pytest.raises(FormatError):
            decode_ppm(b"P3\n1 1\n255\n0 0 0\n")
        with pytest.raises(FormatError):
            decode_ppm(b"\x89PNG\r\n\x1a\n")

    def test_truncated_raster(self):
        with pytest.raises(OSError):
            decode_ppm(b"P6\n2 2\n255\n" + bytes(5))

    def test_truncated_header(self):
        with pytest.raises(OSError):
            decode_ppm(b"P6\n2 2")

    def test_file_round_trip(self, tmp_path):
        img = gradient_8x8() / 255.0
        write_image(tmp_path / "a.ppm", img)
        np.testing.assert_array_equal(decode_image(tmp_path / "a.ppm"), img)


class TestResize:
    def test_identity(self):
        img = np.random.default_rng(0).random((224, 224, 3))
        out = resize(img, 224)
        assert out.tobytes() == img.tobytes()

    def test_constant_upscale(self):
        img = np.full((2, 2, 3), 0.3)
        np.testing.assert_allclose(resize(img, 4), 0.3, rtol=0, atol=1e-15)

    def test_ramp_downscale_by_hand(self):
        ramp = (np.arange(16.0).reshape(4, 4) / 15.0)[..., None].repeat(3, axis=2)
        # sample points fall midway between source pixels 0/1 and 2/3
        expected = np.array([[2.5, 4.5], [10.5, 12.5]]) / 15.0
        out = resize(ramp, 2)
        for c in range(3):
            np.testing.assert_allclose(out[..., c], expected, rtol=0, atol=1e-12)

    def test_range_and_shape(self):
        img = np.random.default_rng(1).random((13, 7, 3))
        out = resize(img, 20)
        assert out.shape == (20, 20, 3)
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_single_pixel(self):
        out = resize(np.array([[[0.2, 0.4, 0.6]]]), 3)
        np.testing.assert_allclose(out, np.broadcast_to([0.2, 0.4, 0.6], (3, 3, 3)))


class TestAugment:
    img = np.random.default_rng(0).random((16, 16, 3))

    def test_identity_policy(self):
        out = augment(self.img, AugmentationPolicy.identity(), np.random.default_rng(0))
        assert out.tobytes() == self.img.tobytes()

    def test_double_half_turn(self):
        assert rotate90(rotate90(self.img, 2), 2).tobytes() == self.img.tobytes()

    def test_four_quarter_turns(self):
        out = self.img
        for _ in range(4):
            out = rotate90(out, 1)
        assert out.tobytes() == self.img.tobytes()

    def test_double_flips(self):
        assert hflip(hflip(self.img)).tobytes() == self.img.tobytes()
        assert vflip(vflip(self.img)).tobytes() == self.img.tobytes()

    def test_hflip_mirrors_columns(self):
        np.testing.assert_array_equal(hflip(self.img)[:, 0], self.img[:, -1])

    def test_forced_rotation(self):
        policy = AugmentationPolicy(rotations=(90,), horizontal_flip=0, vertical_flip=0, crop_fraction=1)
        out = augment(self.img, policy, np.random.default_rng(0))
        np.testing.assert_array_equal(out, np.rot90(self.img, 1, axes=(0, 1)))

    def test_forced_flips(self):
        policy = AugmentationPolicy(rotations=(0,), horizontal_flip=1, vertical_flip=1, crop_fraction=1)
        out = augment(self.img, policy, np.random.default_rng(0))
        np.testing.assert_array_equal(out, self.img[::-1, ::-1])

    @pytest.mark.parametrize("seed", range(20))
    def test_shape_and_range(self, seed):
        out = augment(self.img, AugmentationPolicy(crop_fraction=0.3), np.random.default_rng(seed))
        assert out.shape == self.img.shape
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_deterministic_given_rng(self):
        policy = AugmentationPolicy()
        a = augment(self.img, policy, np.random.default_rng(5))
        b = augment(self.img, policy, np.random.default_rng(5))
        assert a.tobytes() == b.tobytes()

    def test_draw_count_is_fixed(self):
        a, b = np.random.default_rng(3), np.random.default_rng(3)
        augment(self.img, AugmentationPolicy(), a)
        augment(self.img, AugmentationPolicy.identity(), b)
        assert a.random() == b.random()

    def test_non_square(self):
        with pytest.raises(ConfigError):
            augment(np.zeros((4, 8, 3)), AugmentationPolicy(), np.random.default_rng(0))

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"rotations": (45,)},
            {"rotations": ()},
            {"horizontal_flip": 1.5},
            {"vertical_flip": -0.1},
            {"crop_fraction": 0.0},
            {"crop_fraction": 1.2},
        ],
    )
    def test_policy_validation(self, kwargs):
        with pytest.raises(ConfigError):
            AugmentationPolicy(**kwargs)


def test_normalize():
    np.testing.assert_array_equal(normalize(np.array([0.0, 0.5, 1.0])), [-1.0, 0.0, 1.0])
