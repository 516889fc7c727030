"""Seeded random streams.

All randomness comes from Philox4x64-10, a counter-based generator with a
published reference, keyed as ``key = (stream << 64) | seed``. Uniform doubles
take the top 53 bits of each raw 64-bit output (``(x >> 11) * 2**-53``);
normals use Box-Muller on pairs of those uniforms, so every stream can be
reproduced bit-exactly outside numpy from the raw Philox outputs.
"""
import numpy as np

from .exception import InvalidInputError

UINT64_MAX = 2**64 - 1

# Stream ids; one per consumer so adding draws in one place never shifts another.
STREAM_RIG = 1
STREAM_VALUES = 2
STREAM_QUERIES = 3
STREAM_PARAMS = 4
STREAM_DROPOUT = 5
STREAM_VERIFY = 6


class SeededStream:
    def __init__(self, seed: "int", stream: "int" = 0):
        if not 0 <= seed <= UINT64_MAX:
            raise InvalidInputError(
                name="seed", reason=f"must be a 64-bit unsigned integer, got {seed}"
            )
        self.seed = seed
        self.stream = stream
        self._bitgen = np.random.Philox(key=(stream << 64) | seed)

    def raw(self, size: "int"):
        return self._bitgen.random_raw(size)

    def uniform(self, shape=(), low: "float" = 0.0, high: "float" = 1.0):
        count = int(np.prod(shape, dtype=np.int64))
        bits = self.raw(count) >> np.uint64(11)
        unit = bits.astype(np.float64) * (1.0 / 2**53)
        return (low + (high - low) * unit).reshape(shape)

    def normal(self, shape=(), scale: "float" = 1.0):
        count = int(np.prod(shape, dtype=np.int64))
        pairs = (count + 1) // 2
        u1 = self.uniform((pairs,))
        u2 = self.uniform((pairs,))
        # 1 - u1 lies in (0, 1], keeping the log finite.
        radius = np.sqrt(-2.0 * np.log1p(-u1))
        theta = 2.0 * np.pi * u2
        values = np.concatenate([radius * np.cos(theta), radius * np.sin(theta)])
        return (scale * values[:count]).reshape(shape)

    def integers(self, low: "int", high: "int", shape=()):
        """Integers in [low, high) by scaling uniforms."""
        span = high - low
        return (low + np.floor(self.uniform(shape) * span)).astype(np.int64)

    def child(self, index: "int") -> "SeededStream":
        """Derive an independent stream for a sub-task."""
        mixed = (self.seed + index * 0x9E3779B97F4A7C15) & UINT64_MAX
        return SeededStream(mixed, self.stream)
