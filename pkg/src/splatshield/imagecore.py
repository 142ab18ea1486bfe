"""Planar float RGB images, PNG/PPM codecs, and the PSNR/SSIM metrics.

The whole toolkit computes on float64 planes in [0, 1]; quantization happens
exactly once, when an image is written to disk. PNG decode/encode is delegated
to OpenCV (which round-trips 16-bit samples correctly); the value mapping and
the error taxonomy live here.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import cv2
import numpy as np
from scipy.ndimage import convolve1d

from .errors import CorruptData, DimensionMismatch, TooSmall, UnsupportedFormat

_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"

# Pinned so that re-encoding the same planes yields byte-identical files.
_PNG_PARAMS = [cv2.IMWRITE_PNG_COMPRESSION, 3]


@dataclass(frozen=True)
class Image:
    """An RGB image as three float64 planes, shape (3, height, width).

    Samples live in [0, 1] and both dimensions are at least 2. The plane
    array is frozen at construction; operations return new images.
    """

    planes: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.planes, dtype=np.float64)
        if p.ndim != 3 or p.shape[0] != 3:
            raise DimensionMismatch(f"expected planes of shape (3, H, W), got {p.shape}")
        if p.shape[1] < 2 or p.shape[2] < 2:
            raise TooSmall(f"image must be at least 2x2, got {p.shape[2]}x{p.shape[1]}")
        if not np.all(np.isfinite(p)):
            raise CorruptData("image contains non-finite samples")
        if p.min() < 0.0 or p.max() > 1.0:
            raise CorruptData("image samples outside [0, 1]")
        p = p.copy()
        p.flags.writeable = False
        object.__setattr__(self, "planes", p)

    @property
    def height(self) -> int:
        return self.planes.shape[1]

    @property
    def width(self) -> int:
        return self.planes.shape[2]

    @classmethod
    def from_interleaved(cls, arr: np.ndarray) -> "Image":
        """Build from an (H, W, 3) array."""
        return cls(np.ascontiguousarray(np.moveaxis(np.asarray(arr, np.float64), -1, 0)))

    def to_interleaved(self) -> np.ndarray:
        return np.ascontiguousarray(np.moveaxis(self.planes, 0, -1))


def clipped_image(planes: np.ndarray) -> Image:
    """Materialize planes as an Image, clamping to [0, 1].

    This is the single place where out-of-range floats produced by linear
    algebra (reconstruction round-off, perturbation) get clamped.
    """
    return Image(np.clip(planes, 0.0, 1.0))


# --- PNG ---------------------------------------------------------------------

def load_png(path) -> Image:
    """Read an 8- or 16-bit RGB/RGBA PNG into float planes.

    Samples are mapped to [0, 1] by dividing by the bit-depth maximum
    (255 or 65535); an alpha channel is dropped. Grayscale and other depths
    are refused rather than silently converted.
    """
    if not os.path.isfile(path):
        raise FileNotFoundError(f"no such file: {path}")
    data = open(path, "rb").read()
    if not data.startswith(_PNG_MAGIC):
        raise UnsupportedFormat(f"not a PNG file: {path}")
    arr = cv2.imdecode(np.frombuffer(data, np.uint8), cv2.IMREAD_UNCHANGED)
    if arr is None:
        raise CorruptData(f"PNG payload failed to decode: {path}")
    if arr.ndim != 3:
        raise UnsupportedFormat(f"grayscale PNG not supported: {path}")
    if arr.shape[2] == 4:
        arr = arr[:, :, :3]
    if arr.shape[2] != 3:
        raise UnsupportedFormat(f"unsupported channel count {arr.shape[2]}: {path}")
    if arr.dtype == np.uint8:
        scale = 255.0
    elif arr.dtype == np.uint16:
        scale = 65535.0
    else:
        raise UnsupportedFormat(f"unsupported PNG sample type {arr.dtype}: {path}")
    rgb = arr[:, :, ::-1].astype(np.float64) / scale  # BGR(A) -> RGB
    if rgb.shape[0] < 2 or rgb.shape[1] < 2:
        raise TooSmall(f"image must be at least 2x2: {path}")
    return Image.from_interleaved(rgb)


def save_png(path, img: Image) -> None:
    """Write an 8-bit RGB PNG.

    Samples are quantized as floor(s * 255 + 0.5), i.e. round half up, so a
    mid-gray 0.5 becomes byte 128. Encoder settings are pinned: re-saving the
    same image produces byte-identical files.
    """
    q = np.floor(img.to_interleaved() * 255.0 + 0.5).astype(np.uint8)
    ok, buf = cv2.imencode(".png", q[:, :, ::-1], _PNG_PARAMS)
    if not ok:  # pragma: no cover - imencode does not fail on valid uint8 input
        raise CorruptData(f"PNG encode failed for {path}")
    with open(path, "wb") as f:
        f.write(buf.tobytes())


# --- PPM (P6), a dependency-light fallback -----------------------------------

def load_ppm(path) -> Image:
    """Read a binary P6 PPM with maxval 255."""
    if not os.path.isfile(path):
        raise FileNotFoundError(f"no such file: {path}")
    data = open(path, "rb").read()
    if not data.startswith(b"P6"):
        raise UnsupportedFormat(f"not a P6 PPM: {path}")

    # Header: magic, width, height, maxval as whitespace-separated tokens,
    # '#' comments allowed, then one whitespace byte before the raster.
    tokens, i = [], 2
    while len(tokens) < 3:
        if i >= len(data):
            raise CorruptData(f"truncated PPM header: {path}")
        c = data[i:i + 1]
        if c == b"#":
            while i < len(data) and data[i:i + 1] != b"\n":
                i += 1
        elif c.isspace():
            i += 1
        else:
            j = i
            while j < len(data) and not data[j:j + 1].isspace():
                j += 1
            tokens.append(data[i:j])
            i = j
    try:
        w, h, maxval = (int(t) for t in tokens)
    except ValueError:
        raise CorruptData(f"bad PPM header tokens: {path}")
    if maxval != 255:
        raise UnsupportedFormat(f"only maxval 255 PPM supported, got {maxval}: {path}")
    i += 1  # single whitespace after maxval
    raster = data[i:i + w * h * 3]
    if len(raster) != w * h * 3:
        raise CorruptData(f"truncated PPM raster: {path}")
    arr = np.frombuffer(raster, np.uint8).reshape(h, w, 3).astype(np.float64) / 255.0
    if h < 2 or w < 2:
        raise TooSmall(f"image must be at least 2x2: {path}")
    return Image.from_interleaved(arr)


def save_ppm(path, img: Image) -> None:
    """Write a binary P6 PPM (maxval 255, round half up)."""
    q = np.floor(img.to_interleaved() * 255.0 + 0.5).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P6\n{img.width} {img.height}\n255\n".encode())
        f.write(q.tobytes())


# --- metrics -----------------------------------------------------------------

def mse(a: Image, b: Image) -> float:
    if a.planes.shape != b.planes.shape:
        raise DimensionMismatch(f"shape mismatch: {a.planes.shape} vs {b.planes.shape}")
    d = a.planes - b.planes
    return float(np.mean(d * d))


def psnr(a: Image, b: Image) -> float:
    """Peak signal-to-noise ratio in dB against a unit dynamic range.

    Computed on the float planes; quantizing to 8 bits first would shift the
    result by under 0.1 dB for typical content. Identical images return +inf.
    """
    m = mse(a, b)
    if m == 0.0:
        return float("inf")
    return float(10.0 * np.log10(1.0 / m))


_SSIM_WIN = 11
_SSIM_SIGMA = 1.5
_SSIM_K1 = 0.01
_SSIM_K2 = 0.03


def _ssim_kernel() -> np.ndarray:
    r = _SSIM_WIN // 2
    x = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * _SSIM_SIGMA * _SSIM_SIGMA))
    return k / k.sum()


def _win_mean(x: np.ndarray, k: np.ndarray) -> np.ndarray:
    # Separable windowed mean; cropping afterwards makes it equivalent to a
    # 'valid'-mode 2D convolution with the full 11x11 window.
    y = convolve1d(x, k, axis=0, mode="constant")
    return convolve1d(y, k, axis=1, mode="constant")


def ssim(a: Image, b: Image) -> float:
    """Mean SSIM with the usual Gaussian window (11x11, sigma 1.5).

    K1 = 0.01, K2 = 0.03 against dynamic range 1.0; windowed moments are the
    biased, Gaussian-weighted kind; the map is averaged over the valid region
    and then over channels.
    """
    if a.planes.shape != b.planes.shape:
        raise DimensionMismatch(f"shape mismatch: {a.planes.shape} vs {b.planes.shape}")
    if a.height < _SSIM_WIN or a.width < _SSIM_WIN:
        raise TooSmall(f"ssim needs at least {_SSIM_WIN}x{_SSIM_WIN} images")
    k = _ssim_kernel()
    r = _SSIM_WIN // 2
    c1 = _SSIM_K1 * _SSIM_K1
    c2 = _SSIM_K2 * _SSIM_K2
    vals = []
    for x, y in zip(a.planes, b.planes):
        mu_x = _win_mean(x, k)
        mu_y = _win_mean(y, k)
        var_x = _win_mean(x * x, k) - mu_x * mu_x
        var_y = _win_mean(y * y, k) - mu_y * mu_y
        cov = _win_mean(x * y, k) - mu_x * mu_y
        num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
        den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
        smap = (num / den)[r:-r, r:-r]
        vals.append(smap.mean())
    return float(np.mean(vals))
