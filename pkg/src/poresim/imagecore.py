"""Raster primitives: gray conversion, Gaussian/DoG filtering, CIELAB, sampling, PNG I/O.

Rasters are plain numpy arrays of float64 in [0, 1], shaped (H, W) for gray
or (H, W, 3) for RGB. Conversion to 8 bit happens only in :func:`read_png`
and :func:`write_png`.
"""
from __future__ import annotations

import math
import os
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import InvalidInputError, InvalidParameterError

LUMA_WEIGHTS = (0.299, 0.587, 0.114)

# D65 reference white, 2 degree observer
WHITE_D65 = (0.95047, 1.0, 1.08883)
_SRGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_LAB_EPS = 216.0 / 24389.0
_LAB_KAPPA = 24389.0 / 27.0


def as_raster(img, name="image") -> np.ndarray:
    """Validate and return ``img`` as a float64 raster."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim not in (2, 3) or (arr.ndim == 3 and arr.shape[2] not in (1, 3)):
        raise InvalidInputError(f"{name}: expected (H, W) or (H, W, 3) array, got shape {arr.shape}")
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    if arr.size == 0:
        raise InvalidInputError(f"{name}: empty raster")
    if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
        raise InvalidInputError(f"{name}: intensities must be finite and within [0, 1]")
    return arr


def to_gray(img) -> np.ndarray:
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise InvalidInputError(f"to_gray expects 3 channels, got shape {arr.shape}")
    r, g, b = LUMA_WEIGHTS
    return r * arr[:, :, 0] + g * arr[:, :, 1] + b * arr[:, :, 2]


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian truncated at radius ceil(3 sigma)."""
    if not sigma > 0:
        raise InvalidParameterError(f"sigma must be > 0, got {sigma}")
    radius = int(math.ceil(3.0 * sigma))
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (t / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(img, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with clamp-to-edge borders."""
    kernel = gaussian_kernel(sigma)
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise InvalidInputError(f"gaussian_blur expects a gray raster, got shape {arr.shape}")
    out = ndimage.correlate1d(arr, kernel, axis=0, mode="nearest")
    return ndimage.correlate1d(out, kernel, axis=1, mode="nearest")


def dog_filter(img, sigma1: float, sigma2: float) -> np.ndarray:
    """blur(sigma1) - blur(sigma2). Dark blobs give negative responses."""
    if not (0 < sigma1 < sigma2):
        raise InvalidParameterError(f"need 0 < sigma1 < sigma2, got {sigma1}, {sigma2}")
    return gaussian_blur(img, sigma1) - gaussian_blur(img, sigma2)


def _srgb_to_linear(c):
    return np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


def _lab_f(t):
    return np.where(t > _LAB_EPS, np.cbrt(t), (_LAB_KAPPA * t + 16.0) / 116.0)


def rgb_to_lab_array(rgb) -> np.ndarray:
    """Vectorized sRGB (D65) -> CIELAB over the last axis."""
    arr = np.asarray(rgb, dtype=np.float64)
    if arr.shape[-1] != 3:
        raise InvalidInputError(f"expected trailing RGB axis, got shape {arr.shape}")
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0 or not np.all(np.isfinite(arr))):
        raise InvalidInputError("RGB channels must lie within [0, 1]")
    xyz = _srgb_to_linear(arr) @ _SRGB_TO_XYZ.T
    fx, fy, fz = (_lab_f(xyz[..., i] / WHITE_D65[i]) for i in range(3))
    return np.stack([116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)], axis=-1)


def rgb_to_lab(px) -> tuple[float, float, float]:
    L, a, b = rgb_to_lab_array(np.asarray(px, dtype=np.float64).reshape(3))
    return float(L), float(a), float(b)


def bilinear_sample_array(img, xs, ys) -> np.ndarray:
    """Bilinear samples at (xs, ys) with coordinates clamped to the image.

    Returns an array shaped like ``xs`` (plus a trailing channel axis for
    RGB input). Integer coordinates reproduce pixels exactly.
    """
    arr = np.asarray(img, dtype=np.float64)
    h, w = arr.shape[:2]
    x = np.clip(np.asarray(xs, dtype=np.float64), 0.0, w - 1.0)
    y = np.clip(np.asarray(ys, dtype=np.float64), 0.0, h - 1.0)
    x0 = np.floor(x).astype(np.intp)
    y0 = np.floor(y).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = x - x0
    fy = y - y0
    if arr.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]
    top = arr[y0, x0] * (1.0 - fx) + arr[y0, x1] * fx
    bottom = arr[y1, x0] * (1.0 - fx) + arr[y1, x1] * fx
    return top * (1.0 - fy) + bottom * fy


def bilinear_sample(img, x: float, y: float):
    out = bilinear_sample_array(img, np.array(x), np.array(y))
    return float(out) if out.ndim == 0 else out


def read_png(path) -> np.ndarray:
    with Image.open(path) as im:
        if im.mode in ("L", "I;16", "I", "1"):
            data = np.asarray(im.convert("L"), dtype=np.float64)
        else:
            data = np.asarray(im.convert("RGB"), dtype=np.float64)
    return data / 255.0


def to_uint8(img) -> np.ndarray:
    return np.clip(np.rint(np.asarray(img, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def atomic_write_bytes(path, writer) -> None:
    """Run ``writer(tmp_path)`` then rename the temp file over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=path.suffix)
    os.close(fd)
    try:
        writer(tmp)
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_png(path, img) -> None:
    data = to_uint8(img)
    if data.ndim == 3 and data.shape[2] != 3:
        raise InvalidInputError(f"cannot write PNG with shape {data.shape}")
    atomic_write_bytes(path, lambda tmp: Image.fromarray(data).save(tmp, format="PNG"))
