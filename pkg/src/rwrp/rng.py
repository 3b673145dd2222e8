"""Counter-based pseudo-random numbers.

Every random quantity in the package is a pure function of a 64-bit key and
a counter, so results never depend on iteration order, thread schedule or
worker count.  The generator is the splitmix64 finalizer applied to
``key + counter * GAMMA``; the same arithmetic is reimplemented inside the
numba kernels, and a test pins the two implementations to each other.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15


def mix64(z: int) -> int:
    """splitmix64 finalizer on a 64-bit integer."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return (z ^ (z >> 31)) & MASK64


def stream_key(*parts: int) -> int:
    """Fold an arbitrary tuple of integers into one 64-bit key.

    Integers wider than 64 bits are folded limb by limb, so the pair
    ``(master_seed << 64) | index`` used for replicate streams keeps its
    injectivity before hashing.
    """
    h = GAMMA
    for part in parts:
        part = int(part)
        if part < 0:
            part = (-part << 1) | 1
        while True:
            h = mix64(h ^ mix64(part & MASK64))
            part >>= 64
            if part == 0:
                break
    return h


def _np_mix64(z: np.ndarray) -> np.ndarray:
    z = z.astype(np.uint64, copy=True)
    z ^= z >> np.uint64(30)
    z *= np.uint64(0xBF58476D1CE4E5B9)
    z ^= z >> np.uint64(27)
    z *= np.uint64(0x94D049BB133111EB)
    z ^= z >> np.uint64(31)
    return z


def uniforms(key: int, counters: np.ndarray) -> np.ndarray:
    """Uniform [0,1) values for an array of counters under one key."""
    state = np.uint64(key) + counters.astype(np.uint64) * np.uint64(GAMMA)
    bits = _np_mix64(state)
    return (bits >> np.uint64(11)) * np.float64(2.0**-53)


def uniform_at(key: int, counter: int) -> float:
    """Scalar version of :func:`uniforms`."""
    bits = mix64((key + counter * GAMMA) & MASK64)
    return (bits >> 11) * 2.0**-53


def site_uniforms(key: int, site_hashes: np.ndarray) -> np.ndarray:
    """Per-site uniforms keyed by (environment key XOR coordinate hash).

    Keying by coordinates rather than by flat index makes the values of a
    shared seed agree between a box and any enlargement of it.
    """
    bits = _np_mix64(np.uint64(key) ^ site_hashes.astype(np.uint64))
    return (bits >> np.uint64(11)) * np.float64(2.0**-53)
