"""Projectors: content (or a feature vector) to an n-bit trait.

Three kinds are supported. ``sha256`` hashes the raw pixels, ``phash`` is a
DCT perceptual hash and ``randproj`` takes the sign of a seeded Rademacher
projection of an externally computed feature vector.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .imaging import dct_matrix, to_luma
from .prng import SplitMix64

KINDS = ("sha256", "phash", "randproj")


class Trait:
    """Immutable bit vector, serialised as MSB-first lowercase hex."""

    __slots__ = ("bits",)

    def __init__(self, bits):
        arr = np.array(bits, dtype=np.uint8).reshape(-1)
        if arr.size == 0 or np.any(arr > 1):
            raise ValueError("trait bits must be a non-empty 0/1 vector")
        arr.flags.writeable = False
        self.bits = arr

    @property
    def n(self) -> int:
        return int(self.bits.size)

    def __len__(self) -> int:
        return self.n

    def __eq__(self, other) -> bool:
        return isinstance(other, Trait) and np.array_equal(self.bits, other.bits)

    def __hash__(self) -> int:
        return hash(self.bits.tobytes())

    def __repr__(self) -> str:
        return f"Trait({self.hex() if self.n % 8 == 0 else self.bits.tolist()})"

    def hex(self) -> str:
        if self.n % 8:
            raise ValueError("hex form needs a bit count divisible by 8")
        return np.packbits(self.bits).tobytes().hex()

    @classmethod
    def from_hex(cls, text: str) -> "Trait":
        return cls(np.unpackbits(np.frombuffer(bytes.fromhex(text.strip()), dtype=np.uint8)))

    def complement(self) -> "Trait":
        return Trait(1 - self.bits)


def agreement(a: Trait, b: Trait) -> float:
    """Fraction of positions where the two traits agree."""
    if a.n != b.n:
        raise ValueError(f"trait length mismatch: {a.n} vs {b.n}")
    return float(np.count_nonzero(a.bits == b.bits)) / a.n


def project_sha256(img: np.ndarray, n: int = 64) -> Trait:
    if not 1 <= n <= 256:
        raise ValueError("sha256 traits hold at most 256 bits")
    h, w = img.shape[:2]
    digest = hashlib.sha256(struct.pack(">II", w, h) + np.ascontiguousarray(img, dtype=np.uint8).tobytes()).digest()
    return Trait(np.unpackbits(np.frombuffer(digest, dtype=np.uint8))[:n])


def _box_downscale(plane: np.ndarray, size: int) -> np.ndarray:
    h, w = plane.shape
    rows = (np.arange(size) * h) // size
    cols = (np.arange(size) * w) // size
    sums = np.add.reduceat(np.add.reduceat(plane, rows, axis=0), cols, axis=1)
    counts = np.outer(np.diff(np.append(rows, h)), np.diff(np.append(cols, w)))
    return sums / counts


_D32 = dct_matrix(32)


def phash_coefficients(img: np.ndarray) -> np.ndarray:
    """The 64 low-frequency DCT coefficients (DC included) in raster order."""
    if img.shape[0] < 32 or img.shape[1] < 32:
        raise ValueError("phash needs images of at least 32x32")
    small = _box_downscale(to_luma(img), 32)
    return (_D32 @ small @ _D32.T)[:8, :8].reshape(-1)


def project_phash(img: np.ndarray) -> Trait:
    c = phash_coefficients(img)
    return Trait(c > np.median(c))


def project_features(f, seed: int, n: int = 64) -> Trait:
    """Sign of a seeded +/-1 projection; vectors already of length n are signed directly."""
    f = np.asarray(f, dtype=np.float64).reshape(-1)
    if f.size == 0:
        raise ValueError("feature vector is empty")
    if not np.all(np.isfinite(f)):
        raise ValueError("feature vector has non-finite entries")
    if f.size == n:
        y = f
    else:
        m = SplitMix64(seed).signs(n * f.size).reshape(n, f.size)
        y = m @ f
    return Trait(y >= 0)


# --- feature vector files -------------------------------------------------

FVEC_MAGIC = b"FVEC"


def read_features(path) -> np.ndarray:
    """Read an ``FVEC`` binary file or a text file with one real per line."""
    raw = Path(path).read_bytes()
    if raw[:4] == FVEC_MAGIC:
        (d,) = struct.unpack_from("<I", raw, 4)
        values = np.frombuffer(raw, dtype="<f8", count=d, offset=32)
    else:
        values = np.array([float(tok) for tok in raw.decode("ascii").split()], dtype=np.float64)
    if values.size == 0:
        raise ValueError(f"{path}: no feature values")
    if not np.all(np.isfinite(values)):
        raise ValueError(f"{path}: non-finite feature values")
    return values.astype(np.float64)


def write_features(path, values, binary: bool = True) -> None:
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    if binary:
        header = FVEC_MAGIC + struct.pack("<I", values.size) + bytes(24)
        Path(path).write_bytes(header + values.astype("<f8").tobytes())
    else:
        Path(path).write_text("".join(f"{v!r}\n" for v in values.tolist()), encoding="ascii")


FeatureSource = Callable[[np.ndarray, Optional[str]], np.ndarray]


def grid_features(img: np.ndarray, key: str | None = None, size: int = 16) -> np.ndarray:
    """Built-in stand-in extractor: zero-mean box-downscaled luminance (size*size values)."""
    g = _box_downscale(to_luma(img), size)
    return (g - g.mean()).reshape(-1)


class FeatureDir:
    """Looks up ``<key>.fvec`` (or ``<key>.txt``) in a directory of precomputed features."""

    def __init__(self, root):
        self.root = Path(root)

    def __call__(self, img, key=None) -> np.ndarray:
        if key is None:
            raise ValueError("file-backed features need a node id")
        for suffix in (".fvec", ".txt"):
            path = self.root / f"{key}{suffix}"
            if path.exists():
                return read_features(path)
        raise FileNotFoundError(f"no feature file for {key!r} in {self.root}")


@dataclass(frozen=True)
class ProjectorSpec:
    kind: str = "sha256"
    n: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown projector {self.kind!r}; expected one of {KINDS}")
        if self.kind == "phash" and self.n != 64:
            raise ValueError("phash traits are always 64 bits")
        if self.n < 1:
            raise ValueError("trait length must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["seed"] = f"{self.seed:016x}"
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ProjectorSpec":
        return cls(kind=d["kind"], n=int(d["n"]), seed=int(d.get("seed", "0"), 16))


class Projector:
    """A projector spec bound to a feature source (used by ``randproj`` only)."""

    def __init__(self, spec: ProjectorSpec, features: FeatureSource | None = None):
        self.spec = spec
        self.features = features or grid_features

    @property
    def n(self) -> int:
        return self.spec.n

    def project(self, img: np.ndarray, key: str | None = None) -> Trait:
        kind = self.spec.kind
        if kind == "sha256":
            return project_sha256(img, self.spec.n)
        if kind == "phash":
            return project_phash(img)
        return project_features(self.features(img, key), self.spec.seed, self.spec.n)
