"""Counter-based click realizations.

A click bit is a pure function of ``(seed, mode, arm, index)``: the tuple is
folded through the SplitMix64 finalizer and the top 53 bits of the result give
a uniform ``u`` in [0, 1); the arm is clicked iff ``u < ctr``.  Nothing is
stored, so any entry of either realization matrix can be read in any order and
two policies sharing a seed see exactly the same clicks.

Key chain (all arithmetic modulo 2**64)::

    h = mix64(seed)
    h = mix64(h ^ stream)      # 1 = per-round, 2 = stack, 3 = baseline RNG
    h = mix64(h ^ arm)         # 1-based canonical arm index
    h = mix64(h ^ index)       # 1-based round or pull ordinal
    u = (h >> 11) * 2**-53

``HASH_VERSION`` names this construction; it is written into every
experiment file so results can be replayed bit-exactly.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property

import numba
import numpy as np

HASH_VERSION = "splitmix64-chain-v1"

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_INV_2_53 = 1.0 / 9007199254740992.0


class Mode(enum.IntEnum):
    PER_ROUND = 1
    STACK = 2


# stream tag reserved for the random_available baseline's own draws
BASELINE_STREAM = 3


def mix64(x: int) -> int:
    """SplitMix64 finalizer on a Python int, reduced modulo 2**64."""
    z = (x + _GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def hash_uniform(seed: int, stream: int, arm: int, index: int) -> float:
    h = mix64(seed & MASK64)
    h = mix64(h ^ (stream & MASK64))
    h = mix64(h ^ (arm & MASK64))
    h = mix64(h ^ (index & MASK64))
    return (h >> 11) * _INV_2_53


def derive_seed(*parts: int) -> int:
    """Fold integers into one 64-bit seed with the same mixer.

    ``derive_seed(base, T, r)`` is the seed of replication ``r`` at horizon
    ``T``; it does not depend on how many replications are run.
    """
    h = 0
    for p in parts:
        h = mix64(h ^ (p & MASK64))
    return h


# -- numba twins, used inside the simulation kernel -------------------------

_GOLDEN_U = np.uint64(_GOLDEN)
_M1_U = np.uint64(_M1)
_M2_U = np.uint64(_M2)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)


@numba.njit(cache=True)
def mix64_nb(z):
    z = np.uint64(z) + _GOLDEN_U
    z = (z ^ (z >> _S30)) * _M1_U
    z = (z ^ (z >> _S27)) * _M2_U
    return z ^ (z >> _S31)


@numba.njit(cache=True)
def stream_key_nb(seed, stream):
    return mix64_nb(mix64_nb(np.uint64(seed)) ^ np.uint64(stream))


@numba.njit(cache=True)
def uniform_nb(key, arm, index):
    h = mix64_nb(np.uint64(key) ^ np.uint64(arm))
    h = mix64_nb(h ^ np.uint64(index))
    return np.float64(h >> _S11) * _INV_2_53


@numba.njit(cache=True)
def _materialize_nb(seed, stream, ctr, cols):
    k = ctr.shape[0]
    key = stream_key_nb(seed, stream)
    out = np.zeros((k, cols), dtype=np.uint8)
    for i in range(k):
        for t in range(cols):
            if uniform_nb(key, i + 1, t + 1) < ctr[i]:
                out[i, t] = 1
    return out


@dataclass(frozen=True)
class ClickSource:
    """Seeded view of one realization matrix for a fixed set of CTRs.

    Arms and indices are 1-based, matching canonical arm numbering.
    """

    seed: int
    ctr: tuple[float, ...]
    horizon: int
    mode: Mode

    def __post_init__(self) -> None:
        object.__setattr__(self, "seed", int(self.seed) & MASK64)
        object.__setattr__(self, "ctr", tuple(float(c) for c in self.ctr))
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")

    @classmethod
    def for_instance(cls, instance, seed: int, mode: Mode = Mode.STACK) -> "ClickSource":
        return cls(seed, tuple(instance.ctr), instance.horizon, mode)

    @cached_property
    def ctr_array(self) -> np.ndarray:
        return np.asarray(self.ctr, dtype=np.float64)

    @property
    def k(self) -> int:
        return len(self.ctr)

    def _bit(self, arm: int, index: int) -> int:
        if not 1 <= arm <= self.k:
            raise IndexError(f"arm {arm} out of range 1..{self.k}")
        if not 1 <= index <= self.horizon:
            raise IndexError(f"index {index} out of range 1..{self.horizon}")
        u = hash_uniform(self.seed, int(self.mode), arm, index)
        return int(u < self.ctr[arm - 1])

    def stack_click(self, arm: int, position: int) -> int:
        """Y'[arm, position]: outcome of the ``position``-th pull of ``arm``."""
        if self.mode is not Mode.STACK:
            raise ValueError("stack_click on a per-round source")
        return self._bit(arm, position)

    def per_round_click(self, arm: int, round_: int) -> int:
        """Y[arm, round]: outcome if ``arm`` is shown in round ``round_``."""
        if self.mode is not Mode.PER_ROUND:
            raise ValueError("per_round_click on a stack source")
        return self._bit(arm, round_)

    def materialize(self, rows: int | None = None, cols: int | None = None) -> np.ndarray:
        rows = self.k if rows is None else rows
        cols = self.horizon if cols is None else cols
        if not 1 <= rows <= self.k or not 1 <= cols <= self.horizon:
            raise ValueError(
                f"requested {rows}x{cols} exceeds realization {self.k}x{self.horizon}"
            )
        return _materialize_nb(np.uint64(self.seed), int(self.mode), self.ctr_array[:rows], cols)

