import numpy as np
import pytest

from splatshield import errors
from splatshield.imagecore import (
    Image,
    load_png,
    load_ppm,
    mse,
    psnr,
    save_png,
    save_ppm,
    ssim,
)

from helpers import random_image, smooth_image


# --- the Image type ----------------------------------------------------------

def test_image_validation():
    with pytest.raises(errors.DimensionMismatch):
        Image(np.zeros((4, 4)))
    with pytest.raises(errors.TooSmall):
        Image(np.zeros((3, 1, 5)))
    with pytest.raises(errors.CorruptData):
        Image(np.full((3, 4, 4), 1.5))
    with pytest.raises(errors.CorruptData):
        Image(np.full((3, 4, 4), np.nan))


def test_image_planes_frozen():
    img = random_image(4, 4, seed=1)
    with pytest.raises(ValueError):
        img.planes[0, 0, 0] = 0.3


def test_interleaved_round_trip():
    img = random_image(5, 7, seed=2)
    assert np.array_equal(Image.from_interleaved(img.to_interleaved()).planes, img.planes)


# --- PNG codec ---------------------------------------------------------------

def test_png_byte_mapping(tmp_path):
    # Oracle: straight division. Byte 128 must become 128/255 exactly.
    arr = np.arange(12, dtype=np.uint8).reshape(2, 2, 3) * 20 + 8
    arr[0, 0, 0] = 128
    import cv2

    p = tmp_path / "t.png"
    cv2.imwrite(str(p), arr[:, :, ::-1])
    img = load_png(p)
    assert img.planes[0, 0, 0] == 128 / 255
    assert np.array_equal(img.to_interleaved(), arr.astype(np.float64) / 255.0)


def test_png_write_rounds_half_up(tmp_path):
    import cv2

    vals = np.array([0.5, 127.49 / 255, 127.5 / 255, 1.0, 0.0, 254.5 / 255])
    planes = np.tile(vals, (3, 2, 1))
    p = tmp_path / "t.png"
    save_png(p, Image(planes))
    raw = cv2.imread(str(p), cv2.IMREAD_UNCHANGED)[:, :, ::-1]
    # 0.5*255 = 127.5 -> 128, not banker's 127
    assert list(raw[0, :, 0]) == [128, 127, 128, 255, 0, 255]


def test_png_round_trip_error_bound(tmp_path):
    for seed in range(5):
        img = random_image(9, 13, seed=seed)
        p = tmp_path / f"{seed}.png"
        save_png(p, img)
        back = load_png(p)
        # Half a quantization step against the 255 grid.
        assert np.max(np.abs(back.planes - img.planes)) <= 1.0 / 510 + 1e-12


def test_png_16bit(tmp_path):
    import cv2

    rng = np.random.default_rng(3)
    arr = rng.integers(0, 65536, size=(4, 5, 3), dtype=np.uint16)
    p = tmp_path / "t16.png"
    cv2.imwrite(str(p), arr[:, :, ::-1])
    img = load_png(p)
    assert np.array_equal(img.to_interleaved(), arr.astype(np.float64) / 65535.0)


def test_png_rgba_alpha_dropped(tmp_path):
    import cv2

    rng = np.random.default_rng(4)
    rgb = rng.integers(0, 256, size=(4, 4, 3), dtype=np.uint8)
    alpha = np.full((4, 4, 1), 77, np.uint8)
    p = tmp_path / "t.png"
    cv2.imwrite(str(p), np.concatenate([rgb[:, :, ::-1], alpha], axis=2))
    img = load_png(p)
    assert np.array_equal(img.to_interleaved(), rgb.astype(np.float64) / 255.0)


def test_png_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_png(tmp_path / "nope.png")

    bad = tmp_path / "bad.png"
    bad.write_bytes(b"JFIF not a png")
    with pytest.raises(errors.UnsupportedFormat):
        load_png(bad)

    trunc = tmp_path / "trunc.png"
    trunc.write_bytes(b"\x89PNG\r\n\x1a\n" + b"\x00" * 20)
    with pytest.raises(errors.CorruptData):
        load_png(trunc)

    import cv2

    gray = tmp_path / "gray.png"
    cv2.imwrite(str(gray), np.zeros((6, 6), np.uint8))
    with pytest.raises(errors.UnsupportedFormat):
        load_png(gray)


def test_png_deterministic_bytes(tmp_path):
    img = random_image(16, 16, seed=5)
    a, b = tmp_path / "a.png", tmp_path / "b.png"
    save_png(a, img)
    save_png(b, img)
    assert a.read_bytes() == b.read_bytes()


# --- PPM fallback ------------------------------------------------------------

def test_ppm_round_trip(tmp_path):
    img = random_image(6, 4, seed=6)
    p = tmp_path / "t.ppm"
    save_ppm(p, img)
    back = load_ppm(p)
    assert np.max(np.abs(back.planes - img.planes)) <= 1.0 / 510 + 1e-12


def test_ppm_header_comment(tmp_path):
    p = tmp_path / "c.ppm"
    p.write_bytes(b"P6\n# a comment\n2 2\n255\n" + bytes(range(12)))
    img = load_ppm(p)
    assert img.planes[0, 0, 0] == 0.0
    assert img.planes[2, 1, 1] == 11 / 255


def test_ppm_errors(tmp_path):
    p = tmp_path / "bad.ppm"
    p.write_bytes(b"P5\n2 2\n255\n" + bytes(12))
    with pytest.raises(errors.UnsupportedFormat):
        load_ppm(p)
    p2 = tmp_path / "short.ppm"
    p2.write_bytes(b"P6\n4 4\n255\n" + bytes(5))
    with pytest.raises(errors.CorruptData):
        load_ppm(p2)


# --- PSNR --------------------------------------------------------------------

def test_psnr_identical_is_inf():
    img = smooth_image(16, 16)
    assert psnr(img, img) == float("inf")


def test_psnr_frozen_values():
    a = Image(np.zeros((3, 8, 8)))
    b = Image(np.full((3, 8, 8), 0.1))
    # MSE 0.01 -> 10*log10(1/0.01) = 20 exactly.
    assert psnr(a, b) == pytest.approx(20.0, abs=1e-12)
    c = Image(np.ones((3, 8, 8)))
    assert psnr(a, c) == pytest.approx(0.0, abs=1e-12)


def test_psnr_symmetry_and_mismatch():
    x = random_image(12, 12, seed=7)
    y = random_image(12, 12, seed=8)
    assert psnr(x, y) == psnr(y, x)
    with pytest.raises(errors.DimensionMismatch):
        mse(x, random_image(12, 13, seed=9))


# --- SSIM --------------------------------------------------------------------

def test_ssim_identical_is_one():
    img = smooth_image(32, 32)
    assert ssim(img, img) == pytest.approx(1.0, abs=1e-12)


def test_ssim_constant_planes_closed_form():
    # Zero-variance inputs leave only the luminance term:
    # (2*mx*my + C1) / (mx^2 + my^2 + C1).
    a = Image(np.full((3, 16, 16), 0.2))
    b = Image(np.full((3, 16, 16), 0.6))
    expect = (2 * 0.2 * 0.6 + 1e-4) / (0.2 ** 2 + 0.6 ** 2 + 1e-4)
    assert ssim(a, b) == pytest.approx(expect, rel=1e-12)


def test_ssim_against_reference_implementation():
    from skimage.metrics import structural_similarity

    for seed in range(4):
        x = random_image(40, 52, seed=seed)
        blur = smooth_image(40, 52, phase=seed)
        y = Image(np.clip(0.5 * x.planes + 0.5 * blur.planes, 0, 1))
        ours = ssim(x, y)
        ref = np.mean([
            structural_similarity(
                x.planes[c], y.planes[c], data_range=1.0,
                gaussian_weights=True, sigma=1.5, use_sample_covariance=False,
            )
            for c in range(3)
        ])
        assert ours == pytest.approx(float(ref), abs=2e-7)
        assert 0.0 < ours < 1.0


def test_ssim_symmetry():
    x = random_image(24, 24, seed=10)
    y = random_image(24, 24, seed=11)
    assert ssim(x, y) == pytest.approx(ssim(y, x), abs=1e-12)


def test_ssim_too_small():
    with pytest.raises(errors.TooSmall):
        ssim(random_image(10, 32, seed=12), random_image(10, 32, seed=13))
