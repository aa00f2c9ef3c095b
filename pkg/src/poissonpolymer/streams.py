"""Deterministic random-stream derivation.

All randomness flows through the Philox-4x64-10 counter-based generator.  A
single master seed is expanded into independent substreams with a documented
mixing rule, so the stream layout is reproducible from (seed, tag, index)
alone and does not depend on execution order or worker scheduling:

    k1 = splitmix64(master_seed)
    k2 = splitmix64(k1 XOR fnv1a64(tag))
    k3 = splitmix64(k2 XOR index)
    Philox key = (k3, splitmix64(k3 XOR 0x9E3779B97F4A7C15))

``tag`` is an ASCII label for the consumer ("paths", "cloud", ...), ``index``
the replicate number.  Identical triples always yield bitwise-identical
streams.
"""

from __future__ import annotations

import numpy as np

__all__ = ["splitmix64", "fnv1a64", "stream_key", "substream"]

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(z: int) -> int:
    """One step of the splitmix64 output mix (Steele, Lea, Flood 2014)."""
    z = (z + _GOLDEN) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return (z ^ (z >> 31)) & _MASK


def fnv1a64(text: str) -> int:
    """FNV-1a 64-bit hash of an ASCII tag."""
    h = 0xCBF29CE484222325
    for byte in text.encode("ascii"):
        h = ((h ^ byte) * 0x100000001B3) & _MASK
    return h


def stream_key(master_seed: int, tag: str, index: int = 0) -> int:
    """64-bit substream identifier for (master seed, module tag, replicate)."""
    k = splitmix64(master_seed & _MASK)
    k = splitmix64(k ^ fnv1a64(tag))
    return splitmix64(k ^ (index & _MASK))


def substream(master_seed: int, tag: str, index: int = 0) -> np.random.Generator:
    """Philox generator for the given substream triple."""
    k = stream_key(master_seed, tag, index)
    key = np.array([k, splitmix64(k ^ _GOLDEN)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
