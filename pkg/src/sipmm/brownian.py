"""Reproducible Brownian increments on dyadic lattices.

Each path owns an independent Philox stream keyed by a hash of
``(seed, path_index)``; increment ``i`` of a path is always the ``i``-th
64-bit word of that stream pushed through the inverse normal CDF.  A path can
therefore be regenerated alone, in any order, on any worker, bit for bit.

Coarse increments are formed by summing neighbouring pairs level by level,
so ``coarsen(lat, l)`` equals one more halving of ``coarsen(lat, l + 1)``
exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from .errors import DomainError

MAX_LEVEL = 30
_U53 = 2.0**-53


def _check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise DomainError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def stream_key(seed: int, path_index: int) -> np.ndarray:
    """128-bit Philox key mixed from the run seed and the path index."""
    if path_index < 0:
        raise DomainError(f"path_index must be non-negative, got {path_index}")
    ss = np.random.SeedSequence(_check_seed(seed), spawn_key=(int(path_index),))
    return ss.generate_state(2, dtype=np.uint64)


def standard_normals(seed: int, path_index: int, n: int) -> np.ndarray:
    """First ``n`` standard normal variates of the path's stream."""
    bits = np.random.Philox(key=stream_key(seed, path_index)).random_raw(n)
    # top 53 bits, shifted to the midpoint of their cell: u in (0, 1) strictly
    u = ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * _U53
    return ndtri(u)


def _check_level(L: int) -> int:
    if not 0 <= L <= MAX_LEVEL:
        raise DomainError(f"lattice level must lie in [0, {MAX_LEVEL}], got {L}")
    return int(L)


@dataclass(frozen=True)
class BrownianLattice:
    T: float
    level_fine: int
    increments: np.ndarray = field(repr=False)
    seed: int
    path_index: int

    @property
    def step(self) -> float:
        return self.T / 2**self.level_fine

    @property
    def size(self) -> int:
        return self.increments.size


def generate(seed: int, path_index: int, L: int, T: float) -> BrownianLattice:
    """Increments of one Brownian path on the grid of 2**L steps over [0, T]."""
    L = _check_level(L)
    if not T > 0:
        raise DomainError(f"horizon T must be positive, got {T!r}")
    n = 2**L
    z = standard_normals(seed, path_index, n)
    inc = z * np.sqrt(T / n)
    inc.setflags(write=False)
    return BrownianLattice(float(T), L, inc, int(seed), int(path_index))


def generate_block(seed: int, path_indices, L: int, T: float) -> np.ndarray:
    """Fine increments for several paths, shape (2**L, len(path_indices)).

    Column j is bit-identical to ``generate(seed, path_indices[j], L, T).increments``.
    """
    L = _check_level(L)
    n = 2**L
    path_indices = list(path_indices)
    out = np.empty((n, len(path_indices)))
    scale = np.sqrt(T / n)
    for j, m in enumerate(path_indices):
        out[:, j] = standard_normals(seed, m, n) * scale
    return out


def halve(increments: np.ndarray) -> np.ndarray:
    """Sum consecutive pairs along the first axis."""
    return increments[0::2] + increments[1::2]


def coarsen_increments(increments: np.ndarray, L: int, l: int) -> np.ndarray:
    """Coarsen an array whose first axis holds 2**L increments to 2**l."""
    if l > L:
        raise DomainError(f"cannot coarsen level {L} to finer level {l}")
    if l < 0:
        raise DomainError(f"coarse level must be non-negative, got {l}")
    out = increments
    for _ in range(L - l):
        out = halve(out)
    return out


def coarsen(lat: BrownianLattice, l: int) -> np.ndarray:
    """Increments of ``lat`` aggregated to 2**l steps by pairwise summation."""
    out = coarsen_increments(lat.increments, lat.level_fine, l)
    return np.array(out)
