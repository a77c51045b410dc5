"""Common processing operations applied at a normalised severity.

Signed ops take severity in [-1, 1], one-sided ops in [0, 1]. Severity 0 is
the identity for every op. Geometric ops resample bilinearly, keep the
original dimensions and fill uncovered pixels with black.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter, map_coordinates

from .imaging import LUMA_WEIGHTS, check_image, jpeg_roundtrip, round_half_away, to_uint8
from .prng import SplitMix64

SIGNED_OPS = ("brightness", "contrast", "exposure", "saturation", "warmth", "tint", "sharpen", "rotate")
ONE_SIDED_OPS = ("blur", "grain", "jpeg", "crop", "persp_h", "persp_v")
OPS = (
    "brightness", "contrast", "exposure",
    "saturation", "warmth", "tint",
    "blur", "sharpen", "grain", "jpeg",
    "crop", "rotate", "persp_h", "persp_v",
)
GEOMETRIC_OPS = ("crop", "rotate", "persp_h", "persp_v")


@dataclass(frozen=True)
class ChannelOp:
    op: str
    severity: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.op not in OPS:
            raise ValueError(f"unknown op {self.op!r}")
        lo = -1.0 if self.op in SIGNED_OPS else 0.0
        if not lo <= self.severity <= 1.0:
            raise ValueError(f"severity {self.severity} outside [{lo:g}, 1] for {self.op}")


def apply(img: np.ndarray, op: ChannelOp) -> np.ndarray:
    check_image(img, block=False)
    s = float(op.severity)
    if s == 0.0:
        return img.copy()
    if op.op == "jpeg":
        return jpeg_roundtrip(img, int(round_half_away(np.float64(95 - 85 * s))))
    v = img.astype(np.float64)
    return to_uint8(_FLOAT_OPS[op.op](v, s, op.seed))


def apply_chain(img: np.ndarray, ops) -> np.ndarray:
    for op in ops:
        img = apply(img, op)
    return img


def _luma(v):
    return (v @ LUMA_WEIGHTS)[..., None]


def _scale_channels(v, r, g, b):
    return v * np.array([r, g, b])


def _blur(v, sigma):
    return gaussian_filter(v, sigma=(sigma, sigma, 0), mode="reflect", truncate=4.0)


def _grain(v, s, seed):
    noise = SplitMix64(seed).normals(v.size).reshape(v.shape)
    return v + 25.0 * s * noise


def _warp(v, inverse):
    """Bilinear resample: ``inverse(x, y)`` maps output pixel centres to source coordinates."""
    h, w = v.shape[:2]
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    sx, sy = inverse(xx, yy)
    out = np.empty_like(v)
    for c in range(v.shape[2]):
        out[..., c] = map_coordinates(v[..., c], [sy, sx], order=1, mode="constant", cval=0.0)
    return out


def _crop(v, s, seed):
    h, w = v.shape[:2]
    f = 1.0 - 0.5 * s
    cx, cy = (w - 1) / 2, (h - 1) / 2
    return _warp(v, lambda x, y: (cx + (x - cx) * f, cy + (y - cy) * f))


def _rotate(v, s, seed):
    h, w = v.shape[:2]
    theta = np.deg2rad(45.0 * s)
    cx, cy = (w - 1) / 2, (h - 1) / 2
    cos, sin = np.cos(theta), np.sin(theta)

    def inverse(x, y):
        dx, dy = x - cx, y - cy
        return cx + cos * dx + sin * dy, cy - sin * dx + cos * dy

    return _warp(v, inverse)


def homography(src, dst) -> np.ndarray:
    """3x3 projective map taking the four ``src`` points onto ``dst``."""
    a, b = [], []
    for (x, y), (u, w) in zip(src, dst):
        a.append([x, y, 1, 0, 0, 0, -u * x, -u * y])
        a.append([0, 0, 0, x, y, 1, -w * x, -w * y])
        b.extend([u, w])
    h = np.linalg.solve(np.array(a, dtype=np.float64), np.array(b, dtype=np.float64))
    return np.append(h, 1.0).reshape(3, 3)


def _perspective(v, s, horizontal):
    h, w = v.shape[:2]
    x1, y1 = w - 1.0, h - 1.0
    corners = [(0.0, 0.0), (x1, 0.0), (x1, y1), (0.0, y1)]
    if horizontal:
        # far (right) edge shortens toward its midpoint
        d = min(0.25 * s * w, 0.45 * h)
        quad = [(0.0, 0.0), (x1, d), (x1, y1 - d), (0.0, y1)]
    else:
        # far (bottom) edge shortens toward its midpoint
        d = min(0.25 * s * h, 0.45 * w)
        quad = [(0.0, 0.0), (x1, 0.0), (x1 - d, y1), (d, y1)]
    inv = homography(quad, corners)

    def inverse(x, y):
        den = inv[2, 0] * x + inv[2, 1] * y + inv[2, 2]
        return ((inv[0, 0] * x + inv[0, 1] * y + inv[0, 2]) / den,
                (inv[1, 0] * x + inv[1, 1] * y + inv[1, 2]) / den)

    return _warp(v, inverse)


_FLOAT_OPS = {
    "brightness": lambda v, s, _: v + 64.0 * s,
    "contrast": lambda v, s, _: (v - 128.0) * (1.0 + 0.8 * s) + 128.0,
    "exposure": lambda v, s, _: v * 2.0**s,
    "saturation": lambda v, s, _: _luma(v) + (v - _luma(v)) * (1.0 + s),
    "warmth": lambda v, s, _: _scale_channels(v, 1.0 + 0.3 * s, 1.0, 1.0 - 0.3 * s),
    "tint": lambda v, s, _: _scale_channels(v, 1.0 - 0.15 * s, 1.0 + 0.3 * s, 1.0 - 0.15 * s),
    "blur": lambda v, s, _: _blur(v, 3.0 * s),
    "sharpen": lambda v, s, _: v + s * 2.0 * (v - _blur(v, 1.0)),
    "grain": _grain,
    "crop": _crop,
    "rotate": _rotate,
    "persp_h": lambda v, s, _: _perspective(v, s, True),
    "persp_v": lambda v, s, _: _perspective(v, s, False),
}
