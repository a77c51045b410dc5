"""Image I/O, luminance handling, 8x8 block DCT and full-reference quality metrics.

Images are plain ``uint8`` arrays of shape ``(height, width, 3)``; luminance
planes and DCT grids are ``float64``.
"""

from __future__ import annotations

import io
import math
from pathlib import Path

import numpy as np
from PIL import Image
from scipy.ndimage import correlate1d

from .errors import DimensionError

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])

# standard JPEG zigzag: ZIGZAG[z] is the raster index (row * 8 + col) of the z-th coefficient
ZIGZAG = np.array([
    0, 1, 8, 16, 9, 2, 3, 10,
    17, 24, 32, 25, 18, 11, 4, 5,
    12, 19, 26, 33, 40, 48, 41, 34,
    27, 20, 13, 6, 7, 14, 21, 28,
    35, 42, 49, 56, 57, 50, 43, 36,
    29, 22, 15, 23, 30, 37, 44, 51,
    58, 59, 52, 45, 38, 31, 39, 46,
    53, 60, 61, 54, 47, 55, 62, 63,
])
UNZIGZAG = np.argsort(ZIGZAG)


def dct_matrix(size: int) -> np.ndarray:
    """Orthonormal DCT-II basis; rows are frequencies."""
    k = np.arange(size)[:, None]
    x = np.arange(size)[None, :]
    m = np.cos(np.pi * (2 * x + 1) * k / (2 * size)) * math.sqrt(2.0 / size)
    m[0, :] = math.sqrt(1.0 / size)
    return m


_D8 = dct_matrix(8)


def check_image(img: np.ndarray, *, block: bool = True) -> np.ndarray:
    if not isinstance(img, np.ndarray) or img.dtype != np.uint8 or img.ndim != 3 or img.shape[2] != 3:
        raise TypeError("image must be a uint8 array of shape (height, width, 3)")
    if block:
        check_dims(img.shape[1], img.shape[0])
    return img


def check_dims(width: int, height: int) -> None:
    for axis, size in (("width", width), ("height", height)):
        if size < 8 or size % 8:
            raise DimensionError(f"{axis} {size} is not a positive multiple of 8", axis=axis)


def load_image(path, *, pad: bool = False) -> np.ndarray:
    """Decode a PNG or JPEG file to an RGB ``uint8`` array.

    With ``pad`` the image is resized to 256x256 first; otherwise dimensions
    that are not multiples of 8 raise :class:`DimensionError`.
    """
    path = Path(path)
    try:
        with Image.open(path) as im:
            if im.format not in ("PNG", "JPEG"):
                raise ValueError(f"{path}: unsupported format {im.format}")
            im = im.convert("RGB")
            if pad:
                im = im.resize((256, 256), Image.Resampling.BILINEAR)
            arr = np.asarray(im, dtype=np.uint8).copy()
    except FileNotFoundError:
        raise
    except (OSError, SyntaxError) as exc:
        raise ValueError(f"{path}: unreadable image ({exc})") from exc
    return check_image(arr)


def save_image(img: np.ndarray, path, format: str = "png", quality: int = 95) -> None:
    check_image(img, block=False)
    fmt = format.lower()
    im = Image.fromarray(img, "RGB")
    if fmt == "png":
        im.save(path, format="PNG")
    elif fmt in ("jpeg", "jpg"):
        if not 1 <= quality <= 100:
            raise ValueError("jpeg quality must be in 1..100")
        # 4:4:4 so that high qualities stay near-lossless on colour edges
        im.save(path, format="JPEG", quality=int(quality), subsampling=0)
    else:
        raise ValueError(f"unsupported format {format!r}")


def jpeg_roundtrip(img: np.ndarray, quality: int) -> np.ndarray:
    buf = io.BytesIO()
    Image.fromarray(img, "RGB").save(buf, format="JPEG", quality=int(quality))
    buf.seek(0)
    with Image.open(buf) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()


def round_half_away(x: np.ndarray) -> np.ndarray:
    return np.where(x >= 0, np.floor(x + 0.5), np.ceil(x - 0.5))


def to_uint8(x: np.ndarray) -> np.ndarray:
    """Clip to [0, 255] then round half away from zero."""
    return round_half_away(np.clip(x, 0.0, 255.0)).astype(np.uint8)


def to_luma(img: np.ndarray) -> np.ndarray:
    """BT.601 luminance, unrounded."""
    return img.astype(np.float64) @ LUMA_WEIGHTS


def apply_luma(img: np.ndarray, new_luma: np.ndarray) -> np.ndarray:
    """Shift every channel by the luminance change, keeping chrominance."""
    if new_luma.shape != img.shape[:2]:
        raise DimensionError(f"luma plane {new_luma.shape} does not match image {img.shape[:2]}")
    delta = new_luma - to_luma(img)
    return to_uint8(img.astype(np.float64) + delta[..., None])


def block_dct(luma: np.ndarray) -> np.ndarray:
    """Orthonormal 8x8 DCT-II per block -> ``(block_rows, block_cols, 64)`` in zigzag order."""
    h, w = luma.shape
    check_dims(w, h)
    blocks = luma.reshape(h // 8, 8, w // 8, 8).transpose(0, 2, 1, 3)
    coeffs = _D8 @ blocks @ _D8.T
    return coeffs.reshape(h // 8, w // 8, 64)[..., ZIGZAG]


def block_idct(grid: np.ndarray) -> np.ndarray:
    br, bc, _ = grid.shape
    coeffs = grid[..., UNZIGZAG].reshape(br, bc, 8, 8)
    blocks = _D8.T @ coeffs @ _D8
    return blocks.transpose(0, 2, 1, 3).reshape(br * 8, bc * 8)


def _same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """PSNR in dB over all samples; ``math.inf`` for identical inputs."""
    _same_shape(a, b)
    mse = np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2)
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(255.0**2 / mse)


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-(x**2) / (2 * sigma**2))
    return g / g.sum()


def _filter_valid(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    y = correlate1d(correlate1d(x, g, axis=0, mode="constant"), g, axis=1, mode="constant")
    r = len(g) // 2
    return y[r:-r, r:-r]


def ssim(a: np.ndarray, b: np.ndarray, *, k1: float = 0.01, k2: float = 0.03) -> float:
    """Mean SSIM of the luminance planes (11x11 Gaussian window, sigma 1.5, valid positions)."""
    _same_shape(a, b)
    if a.shape[0] < 11 or a.shape[1] < 11:
        raise DimensionError("ssim needs images of at least 11x11")
    x = to_luma(a) if a.ndim == 3 else a.astype(np.float64)
    y = to_luma(b) if b.ndim == 3 else b.astype(np.float64)
    c1 = (k1 * 255) ** 2
    c2 = (k2 * 255) ** 2
    g = _gaussian_window()
    mx = _filter_valid(x, g)
    my = _filter_valid(y, g)
    sxx = _filter_valid(x * x, g) - mx * mx
    syy = _filter_valid(y * y, g) - my * my
    sxy = _filter_valid(x * y, g) - mx * my
    num = (2 * mx * my + c1) * (2 * sxy + c2)
    den = (mx * mx + my * my + c1) * (sxx + syy + c2)
    return float(np.mean(num / den))
