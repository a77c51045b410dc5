"""SplitMix64 key expansion.

Every seeded quantity in the package (stego carriers, projection matrices,
grain noise, tree synthesis) is drawn from this generator so that derived
material is bit-exact and portable.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


class SplitMix64:
    """Sequential SplitMix64 stream.

    ``block`` draws many outputs at once with numpy; it yields exactly the
    values successive ``next_u64`` calls would have produced.
    """

    def __init__(self, seed: int):
        self.state = int(seed) & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GAMMA) & MASK64
        return mix64(self.state)

    def block(self, count: int) -> np.ndarray:
        if count <= 0:
            return np.zeros(0, dtype=np.uint64)
        with np.errstate(over="ignore"):
            k = np.arange(1, count + 1, dtype=np.uint64)
            z = np.uint64(self.state) + k * np.uint64(GAMMA)
            z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
            z = z ^ (z >> np.uint64(31))
        self.state = (self.state + count * GAMMA) & MASK64
        return z

    def next_float(self) -> float:
        """Uniform in [0, 1): output / 2**64."""
        return self.next_u64() / 2.0**64

    def floats(self, count: int) -> np.ndarray:
        # top 53 bits keep the value strictly below 1.0 in double precision
        return (self.block(count) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def bits(self, count: int) -> np.ndarray:
        """``count`` bits, 64 per output, least significant bit first."""
        words = self.block((count + 63) // 64)
        shifts = np.arange(64, dtype=np.uint64)
        out = (words[:, None] >> shifts[None, :]) & np.uint64(1)
        return out.reshape(-1)[:count].astype(np.uint8)

    def signs(self, count: int) -> np.ndarray:
        """Rademacher +/-1 values; bit 1 maps to +1."""
        return self.bits(count).astype(np.float64) * 2.0 - 1.0

    def permutation(self, size: int) -> np.ndarray:
        """Fisher-Yates shuffle of ``range(size)``, j = next_u64 mod (i + 1)."""
        perm = list(range(size))
        draws = self.block(max(size - 1, 0)).tolist()
        for step, i in enumerate(range(size - 1, 0, -1)):
            j = draws[step] % (i + 1)
            perm[i], perm[j] = perm[j], perm[i]
        return np.asarray(perm, dtype=np.int64)

    def normals(self, count: int) -> np.ndarray:
        """Standard normals by Box-Muller; each pair of uniforms gives cos and sin outputs."""
        pairs = (count + 1) // 2
        u = self.floats(2 * pairs).reshape(pairs, 2)
        r = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
        theta = 2.0 * np.pi * u[:, 1]
        z = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1).reshape(-1)
        return z[:count]


def derive_seed(master: int, index: int) -> int:
    """Independent stream seed for item ``index`` under ``master``."""
    return SplitMix64((int(master) ^ int(index)) & MASK64).next_u64()
