"""Keyed random streams.

Every stream is a Philox (counter-based) generator whose key is derived
from a master seed and a tuple of integer labels via ``SeedSequence``. A
particle's Brownian increments therefore depend only on ``(seed, index)``,
and results do not depend on how work is split across processes.

Gaussian variates come from ``Generator.standard_normal`` (numpy's
ziggurat method), which is part of the golden-value contract.
"""
from __future__ import annotations

import struct

import numpy as np

__all__ = ["derive_seed", "stream", "brownian_increments", "float_key"]

_MASK64 = (1 << 64) - 1


def float_key(x: float) -> int:
    """Integer label carrying the exact bits of a float."""
    return struct.unpack("<Q", struct.pack("<d", float(x)))[0]


def derive_seed(master: int, *keys: int) -> int:
    """A 64-bit seed determined by ``master`` and the integer labels."""
    ss = np.random.SeedSequence(int(master) & _MASK64, spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, np.uint64)[0])


def stream(seed: int, *keys: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed) & _MASK64, spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


def brownian_increments(seed: int, n_paths: int, n_steps: int, m: int, dt: float, first: int = 0) -> np.ndarray:
    """Increments ``dB`` of shape ``(n_paths, n_steps, m)`` with variance ``dt``.

    Path ``i`` reads stream ``(seed, first + i)``, so enlarging ``n_paths``
    leaves existing paths unchanged.
    """
    out = np.empty((n_paths, n_steps, m))
    scale = np.sqrt(dt)
    for i in range(n_paths):
        out[i] = stream(seed, first + i).standard_normal((n_steps, m)) * scale
    return out
