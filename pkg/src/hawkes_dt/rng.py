"""Reproducible random streams.

Every stream is a numpy ``Philox`` (4x64, 10 rounds) counter-based generator
keyed by the 128-bit value::

    key = seed | path_index << 64 | purpose << 120

so ``(seed, path_index, purpose)`` identifies a stream independently of the
platform, of the order in which paths are simulated and of process-level
parallelism.  ``seed`` is a 64-bit unsigned integer, ``path_index`` must be
below 2**56 and ``purpose`` below 256.
"""
from __future__ import annotations

import numpy as np

DTHP = 1
EXACT = 2
OPERATOR_MC = 3
MARK_QUADRATURE = 4
EXPERIMENT = 5

_U64 = (1 << 64) - 1


def stream_key(seed: int, path_index: int = 0, purpose: int = 0) -> int:
    if not 0 <= seed <= _U64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    if not 0 <= path_index < 1 << 56:
        raise ValueError(f"path index out of range: {path_index}")
    if not 0 <= purpose < 256:
        raise ValueError(f"purpose tag out of range: {purpose}")
    return seed | (path_index << 64) | (purpose << 120)


def stream(seed: int, path_index: int = 0, purpose: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=stream_key(seed, path_index, purpose)))


def derive_seed(seed: int, *labels: int) -> int:
    """Deterministic 64-bit child seed, used to give sub-experiments distinct seeds."""
    ss = np.random.SeedSequence([seed & _U64, *labels])
    return int(ss.generate_state(1, dtype=np.uint64)[0])
