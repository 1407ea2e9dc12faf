"""Counter-based, splittable random streams.

A variate is a pure function of ``(seed, stream, counter)``: the stream key
is derived from the seed and the stream id, and the ``counter``-th output is
the SplitMix64 finaliser applied to ``key + (counter + 1) * GAMMA``.  Nothing
is carried between draws, so results do not depend on how trajectories are
scheduled across threads.

The scalar functions here are the reference used by the pure-Python kernel;
the compiled kernel reimplements the same integer arithmetic bit for bit.
Shot-noise sampling in the experiment layer uses :meth:`RngStream.generator`,
a numpy ``Philox`` generator keyed by the same ``(seed, stream)`` pair.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MASK64 = 0xFFFFFFFFFFFFFFFF
GAMMA = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB
SEED_SALT = 0x5851F42D4C957F2D
TWO_M53 = 1.0 / 9007199254740992.0


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * MIX1) & MASK64
    z = ((z ^ (z >> 27)) * MIX2) & MASK64
    return z ^ (z >> 31)


def stream_key(seed: int, stream: int) -> int:
    return mix64((mix64((seed ^ SEED_SALT) & MASK64) + GAMMA * (stream & MASK64)) & MASK64)


def uniform_from_key(key: int, counter: int) -> float:
    """Uniform variate in the open interval (0, 1)."""
    bits = mix64((key + GAMMA * (counter + 1)) & MASK64)
    return ((bits >> 11) + 0.5) * TWO_M53


def uniform(seed: int, stream: int, counter: int) -> float:
    return uniform_from_key(stream_key(seed, stream), counter)


def _mix64_array(z):
    z = z ^ (z >> np.uint64(30))
    z = z * np.uint64(MIX1)
    z = z ^ (z >> np.uint64(27))
    z = z * np.uint64(MIX2)
    return z ^ (z >> np.uint64(31))


def uniforms(seed: int, stream, counter):
    """Vectorised :func:`uniform`; ``stream`` and ``counter`` broadcast."""
    stream = np.asarray(stream, dtype=np.uint64)
    counter = np.asarray(counter, dtype=np.uint64)
    with np.errstate(over="ignore"):
        base = np.uint64(mix64((seed ^ SEED_SALT) & MASK64))
        key = _mix64_array(base + np.uint64(GAMMA) * stream)
        bits = _mix64_array(key + np.uint64(GAMMA) * (counter + np.uint64(1)))
    return ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * TWO_M53


@dataclass(frozen=True)
class RngStream:
    """Identifies one independent random stream."""

    seed: int
    stream: int = 0

    def __post_init__(self):
        if not 0 <= self.seed <= MASK64:
            raise ValueError(f"seed must fit in 64 unsigned bits, got {self.seed}")
        if self.stream < 0:
            raise ValueError(f"stream id must be non-negative, got {self.stream}")

    @property
    def key(self) -> int:
        return stream_key(self.seed, self.stream)

    def uniform(self, counter: int) -> float:
        return uniform_from_key(self.key, counter)

    def uniforms(self, start: int, n: int):
        return uniforms(self.seed, self.stream, np.arange(start, start + n, dtype=np.uint64))

    def substream(self, index: int) -> "RngStream":
        """A stream derived from this one; distinct indices collide only with negligible probability."""
        return RngStream(self.seed, stream_key(self.stream, index) >> 1)

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(key=[self.seed, self.stream]))
