"""Deterministic counter-based random streams.

Each station owns independent streams keyed by (master seed, station,
replication, purpose).  Draw ``n`` of a stream is a pure function of
(key, n) -- a SplitMix64-style avalanche of ``key + n * GAMMA`` -- so
replications are order-independent and a consumer can roll a stream
back simply by resetting its counter.

The compiled simulation kernel reimplements :func:`mix64` in C; the two
must stay bit-identical.
"""

from __future__ import annotations

import numpy as np

MASK64 = 0xFFFFFFFFFFFFFFFF
GAMMA = 0x9E3779B97F4A7C15
_MUL1 = 0xBF58476D1CE4E5B9
_MUL2 = 0x94D049BB133111EB
_INV53 = 2.0 ** -53

# Stream purposes.  CONTEND feeds the per-slot access decisions, GAIN the
# per-win fading draws of the memoryless channel kinds, FADING the one-off
# oscillator setup of the time-correlated kind.
CONTEND = 1
GAIN = 2
FADING = 3


def mix64(z: int) -> int:
    """SplitMix64 finalizer of a 64-bit integer."""
    z &= MASK64
    z ^= z >> 30
    z = (z * _MUL1) & MASK64
    z ^= z >> 27
    z = (z * _MUL2) & MASK64
    z ^= z >> 31
    return z


def stream_key(master_seed: int, station: int, replication: int, purpose: int) -> int:
    """Derive the 64-bit key of one (station, replication, purpose) stream."""
    k = mix64(master_seed)
    k = mix64(k + GAMMA * (station + 1))
    k = mix64(k + GAMMA * (replication + 1))
    k = mix64(k + GAMMA * (purpose + 1))
    return k


def draw(key: int, n: int) -> float:
    """Uniform in [0, 1) at position ``n`` (1-based) of the stream ``key``."""
    return (mix64(key + GAMMA * n) >> 11) * _INV53


def draw_block(key: int, start: int, count: int) -> np.ndarray:
    """Uniforms at positions start+1 .. start+count, vectorized.

    Bit-identical to ``count`` successive calls of :func:`draw`.
    """
    idx = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    z = np.uint64(key) + np.uint64(GAMMA) * idx
    z ^= z >> np.uint64(30)
    z *= np.uint64(_MUL1)
    z ^= z >> np.uint64(27)
    z *= np.uint64(_MUL2)
    z ^= z >> np.uint64(31)
    return (z >> np.uint64(11)).astype(np.float64) * _INV53
