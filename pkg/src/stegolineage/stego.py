"""Blind DCT-domain stegosystems: dithered QIM and improved spread spectrum (ISS).

Both systems share the same carrier layout. The mid-band coefficients of
every 8x8 luminance block form a pool; a keyed permutation splits the pool
into ``n`` disjoint groups, one per trait bit, and each group carries a
Rademacher vector ``u``. Bit ``i`` lives in the scalar projection
``<c_i, u_i> / m``. Embedding moves that scalar and back-projects the change
along ``u_i``; extraction recomputes it from the received image alone.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import CapacityError
from .imaging import apply_luma, block_dct, block_idct, check_image, to_luma
from .prng import SplitMix64
from .projector import Trait

MIDBAND = (6, 20)


@dataclass(frozen=True, eq=False)
class StegoKey:
    seed: int
    width: int
    height: int
    n: int
    midband: tuple
    groups: np.ndarray = field(repr=False)  # (n, m) indices into the flattened coefficient pool
    carriers: np.ndarray = field(repr=False)  # (n, m) of +/-1
    dither: np.ndarray = field(repr=False)  # (n,) fractions in [0, 1); scaled by the QIM step

    @property
    def group_size(self) -> int:
        return self.groups.shape[1]

    @property
    def pool_size(self) -> int:
        lo, hi = self.midband
        return (self.width // 8) * (self.height // 8) * (hi - lo + 1)


def derive_material(seed: int, width: int, height: int, n: int, midband=MIDBAND) -> StegoKey:
    """Expand a 64-bit seed into permutation, carriers and dithers.

    Draw order from one SplitMix64 stream: Fisher-Yates permutation of the
    pool, then ``n * m`` carrier bits (LSB first), then ``n`` dither draws.
    """
    return _derive(int(seed), int(width), int(height), int(n), tuple(int(v) for v in midband))


@lru_cache(maxsize=64)
def _derive(seed, width, height, n, midband):
    lo, hi = midband
    if not 0 < lo <= hi < 64:
        raise ValueError(f"bad mid-band range {midband}")
    pool = (width // 8) * (height // 8) * (hi - lo + 1)
    if n < 1 or pool < n:
        raise CapacityError(f"cover of {width}x{height} offers {pool} coefficients for {n} bits")
    m = pool // n
    rng = SplitMix64(seed)
    perm = rng.permutation(pool)
    groups = perm[: n * m].reshape(n, m)
    carriers = rng.signs(n * m).reshape(n, m)
    dither = rng.block(n).astype(np.float64) / 2.0**64
    for a in (groups, carriers, dither):
        a.flags.writeable = False
    return StegoKey(seed, width, height, n, midband, groups, carriers, dither)


def key_for(img: np.ndarray, seed: int, n: int, midband=MIDBAND) -> StegoKey:
    return derive_material(seed, img.shape[1], img.shape[0], n, midband)


# --- scalar rules ---------------------------------------------------------

def qim_quantize(x, bit, delta: float, dither):
    """Nearest point of the lattice {delta*z + dither + bit*delta/2}."""
    offset = np.asarray(dither) + np.asarray(bit) * (delta / 2.0)
    return delta * np.floor((np.asarray(x) - offset) / delta + 0.5) + offset


def qim_decide(x, delta: float, dither) -> np.ndarray:
    d0 = np.abs(x - qim_quantize(x, 0, delta, dither))
    d1 = np.abs(x - qim_quantize(x, 1, delta, dither))
    return (d1 < d0).astype(np.uint8)


def iss_target(x, bit, alpha: float, lam: float):
    sigma = 2.0 * np.asarray(bit, dtype=np.float64) - 1.0
    return np.asarray(x) + (alpha * sigma - lam * np.asarray(x))


def iss_decide(x) -> np.ndarray:
    return (np.asarray(x) >= 0).astype(np.uint8)


# --- carrier projection ---------------------------------------------------

def _pool_view(grid: np.ndarray, key: StegoKey) -> np.ndarray:
    lo, hi = key.midband
    return grid[..., lo : hi + 1].reshape(-1)


def projections(grid: np.ndarray, key: StegoKey) -> np.ndarray:
    pool = _pool_view(grid, key)
    return (pool[key.groups] * key.carriers).sum(axis=1) / key.group_size


def displace(grid: np.ndarray, key: StegoKey, shift: np.ndarray) -> np.ndarray:
    """Add ``shift[i] * u_i`` to group i; the projection moves by exactly ``shift[i]``."""
    lo, hi = key.midband
    out = grid.copy()
    band = out[..., lo : hi + 1].copy()
    flat = band.reshape(-1)
    flat[key.groups] += shift[:, None] * key.carriers
    out[..., lo : hi + 1] = flat.reshape(band.shape)
    return out


def _embed(img, key, target_fn, passes):
    check_image(img)
    luma = to_luma(img)
    grid = block_dct(luma)
    target = target_fn(projections(grid, key))
    out = img
    for _ in range(passes):
        # later passes re-aim at the same targets to undo clipping/rounding losses
        cur = block_dct(to_luma(out))
        shifted = displace(cur, key, target - projections(cur, key))
        out = apply_luma(out, block_idct(shifted))
    return out


def _extract_projections(img, key):
    check_image(img)
    return projections(block_dct(to_luma(img)), key)


# --- parameter sets and front ends ---------------------------------------

@dataclass(frozen=True)
class QimParams:
    delta: float = 6.0
    midband: tuple = MIDBAND
    passes: int = 1

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("QIM step must be positive")


@dataclass(frozen=True)
class IssParams:
    alpha: float = 3.0
    lam: float = 1.0
    midband: tuple = MIDBAND
    passes: int = 1

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("ISS amplitude must be positive")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("ISS lambda must lie in [0, 1]")


def qim_embed(img: np.ndarray, t: Trait, key: StegoKey, p: QimParams = QimParams()) -> np.ndarray:
    _check_key(key, t)
    dither = key.dither * p.delta
    return _embed(img, key, lambda x: qim_quantize(x, t.bits, p.delta, dither), p.passes)


def qim_extract(img: np.ndarray, key: StegoKey, p: QimParams = QimParams()) -> Trait:
    x = _extract_projections(img, key)
    return Trait(qim_decide(x, p.delta, key.dither * p.delta))


def iss_embed(img: np.ndarray, t: Trait, key: StegoKey, p: IssParams = IssParams()) -> np.ndarray:
    _check_key(key, t)
    return _embed(img, key, lambda x: iss_target(x, t.bits, p.alpha, p.lam), p.passes)


def iss_extract(img: np.ndarray, key: StegoKey, p: IssParams = IssParams()) -> Trait:
    return Trait(iss_decide(_extract_projections(img, key)))


def _check_key(key: StegoKey, t: Trait) -> None:
    if key.n != t.n:
        raise ValueError(f"key derived for {key.n} bits, trait has {t.n}")


class Stego:
    """A stegosystem bound to its parameters; keys are derived per image size."""

    def __init__(self, method: str = "qim", params=None):
        if method == "qim":
            self.params = params if params is not None else QimParams()
        elif method == "iss":
            self.params = params if params is not None else IssParams()
        else:
            raise ValueError(f"unknown stegosystem {method!r}; expected qim or iss")
        self.method = method

    @classmethod
    def from_dict(cls, d: dict) -> "Stego":
        method = d.get("method", "qim")
        raw = dict(d.get("params", {}))
        if "midband" in raw:
            raw["midband"] = tuple(raw["midband"])
        params = (QimParams if method == "qim" else IssParams)(**raw)
        return cls(method, params)

    def to_dict(self) -> dict:
        params = {k: (list(v) if isinstance(v, tuple) else v) for k, v in vars(self.params).items()}
        return {"method": self.method, "params": params}

    def key(self, img: np.ndarray, seed: int, n: int) -> StegoKey:
        return key_for(img, seed, n, self.params.midband)

    def embed(self, img: np.ndarray, t: Trait, seed: int) -> np.ndarray:
        key = self.key(img, seed, t.n)
        fn = qim_embed if self.method == "qim" else iss_embed
        return fn(img, t, key, self.params)

    def extract(self, img: np.ndarray, seed: int, n: int) -> Trait:
        key = self.key(img, seed, n)
        fn = qim_extract if self.method == "qim" else iss_extract
        return fn(img, key, self.params)
