"""Natural-image test corpus: seeded square crops of bundled photographs, resized to 256x256."""

from functools import lru_cache

import numpy as np
import skimage.data as skdata
from PIL import Image
from sklearn.datasets import load_sample_images

PHOTOS = (
    "astronaut", "coffee", "chelsea", "camera", "rocket", "hubble_deep_field", "retina",
    "immunohistochemistry", "grass", "gravel", "brick", "moon", "coins", "page", "cat",
)


@lru_cache(maxsize=1)
def sources():
    out = []
    for name in PHOTOS:
        a = getattr(skdata, name)()
        if a.ndim == 2:
            a = np.stack([a] * 3, axis=-1)
        out.append(np.ascontiguousarray(a[..., :3], dtype=np.uint8))
    out.extend(np.asarray(a, dtype=np.uint8) for a in load_sample_images().images)
    return tuple(out)


def natural_images(count, seed=0, size=256):
    src = sources()
    rng = np.random.default_rng(seed)
    images = []
    for i in range(count):
        a = src[i % len(src)]
        h, w = a.shape[:2]
        side = int(rng.integers(min(h, w) // 2, min(h, w) + 1))
        y = int(rng.integers(0, h - side + 1))
        x = int(rng.integers(0, w - side + 1))
        crop = Image.fromarray(a[y:y + side, x:x + side])
        images.append(np.asarray(crop.resize((size, size), Image.Resampling.BILINEAR)))
    return images


def noise_images(count, seed=0, size=256):
    rng = np.random.default_rng(seed)
    return [rng.integers(0, 256, (size, size, 3), dtype=np.uint8) for _ in range(count)]


def external_features(img, key=None):
    """Stand-in for a neural extractor: z-scored 12x12 luma grid plus 4x4 colour means."""
    f = img.astype(np.float64)
    h, w = f.shape[:2]
    luma = f @ np.array([0.299, 0.587, 0.114])
    g = luma[: h // 12 * 12, : w // 12 * 12].reshape(12, h // 12, 12, w // 12).mean(axis=(1, 3))
    c = f[: h // 4 * 4, : w // 4 * 4].reshape(4, h // 4, 4, w // 4, 3).mean(axis=(1, 3))
    v = np.concatenate([g.ravel(), c.ravel()])
    return (v - v.mean()) / (v.std() + 1e-9)
