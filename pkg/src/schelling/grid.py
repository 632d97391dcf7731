"""Torus lattice of +/-1 spins with incrementally maintained window counts.

Nodes are addressed by flat integer index ``u = (y + h) * L + (x + h)`` where
``L = 2h`` and ``(x, y)`` ranges over the torus ``[-h, h)^2``. Every node keeps
the number of +1 particles in its radius-``w`` l-infinity window, the node
itself included, so a window holds ``N = (2w + 1)^2`` particles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

PLUS = 1
MINUS = -1


@dataclass(frozen=True)
class Intolerance:
    """Intolerance ``tau = ceil(tau_tilde * N) / N`` with an integer threshold.

    ``threshold`` is the minimum number of same-state particles (center
    included) a particle needs in its window to be stable.
    """

    tau_tilde: Fraction
    N: int

    def __post_init__(self):
        t = Fraction(self.tau_tilde)
        if not 0 <= t <= 1:
            raise ValueError(f"tau_tilde must lie in [0, 1], got {t}")
        object.__setattr__(self, "tau_tilde", t)

    @classmethod
    def from_value(cls, value, N: int) -> Intolerance:
        """Build from a Fraction, int, "num/den" string or decimal string/float."""
        if isinstance(value, str):
            value = Fraction(value.strip())
        elif isinstance(value, float):
            value = Fraction(str(value))
        return cls(Fraction(value), N)

    @property
    def threshold(self) -> int:
        return math.ceil(self.tau_tilde * self.N)

    @property
    def tau(self) -> Fraction:
        return Fraction(self.threshold, self.N)

    @property
    def flip_ceiling(self) -> int:
        # a particle with same-state count c becomes stable after flipping iff
        # N - c + 1 >= threshold
        return self.N + 1 - self.threshold

    def __str__(self):
        t = self.tau
        return f"{t.numerator}/{t.denominator}"


def window_offsets(w: int) -> np.ndarray:
    r = np.arange(-w, w + 1)
    dy, dx = np.meshgrid(r, r, indexing="ij")
    return np.stack([dy.ravel(), dx.ravel()], axis=1)


class SpinGrid:
    """Spins on the ``2h x 2h`` torus with horizon ``w``.

    ``spins`` and ``counts`` are 2-D arrays indexed ``[y + h, x + h]``;
    ``flat_spins``/``flat_counts`` are views on the same memory.
    """

    def __init__(self, h: int, w: int, spins=None):
        if h < 1 or w < 1:
            raise ValueError("h and w must be positive")
        if not 2 * h > 2 * (2 * w + 1):
            raise ValueError(
                f"torus side 2h={2 * h} must exceed 2(2w+1)={2 * (2 * w + 1)} "
                "so that neighborhoods never wrap onto themselves"
            )
        self.h = h
        self.w = w
        self.L = 2 * h
        self.N = (2 * w + 1) ** 2
        if spins is None:
            spins = np.ones((self.L, self.L), dtype=np.int8)
        spins = np.asarray(spins)
        if spins.shape != (self.L, self.L):
            raise ValueError(f"spins must have shape {(self.L, self.L)}, got {spins.shape}")
        if not np.all((spins == 1) | (spins == -1)):
            raise ValueError("spins must be +1 or -1")
        self.spins = np.ascontiguousarray(spins, dtype=np.int8).copy()
        self.counts = window_sum(self.spins == PLUS, w)
        self.flat_spins = self.spins.reshape(-1)
        self.flat_counts = self.counts.reshape(-1)
        off = window_offsets(w)
        self._dy = off[:, 0]
        self._dx = off[:, 1]

    # -- construction -------------------------------------------------------

    @classmethod
    def new_random(cls, h: int, w: int, p: float = 0.5, seed=None) -> SpinGrid:
        """I.i.d. spins, each +1 with probability ``p``."""
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"p must lie in [0, 1], got {p}")
        rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed)
        L = 2 * h
        plus = rng.random((L, L)) < p
        return cls(h, w, np.where(plus, PLUS, MINUS).astype(np.int8))

    @classmethod
    def filled(cls, h: int, w: int, state: int = PLUS) -> SpinGrid:
        return cls(h, w, np.full((2 * h, 2 * h), state, dtype=np.int8))

    def copy(self) -> SpinGrid:
        return SpinGrid(self.h, self.w, self.spins)

    # -- addressing ---------------------------------------------------------

    @property
    def size(self) -> int:
        return self.L * self.L

    def index(self, x: int, y: int) -> int:
        h, L = self.h, self.L
        return ((y + h) % L) * L + (x + h) % L

    def coords(self, u: int) -> tuple[int, int]:
        r, c = divmod(int(u), self.L)
        return c - self.h, r - self.h

    @property
    def origin(self) -> int:
        return self.index(0, 0)

    def window(self, u: int, radius: int | None = None) -> np.ndarray:
        """Flat indices of the radius-``radius`` window around ``u`` (default ``w``)."""
        L = self.L
        r, c = divmod(int(u), L)
        if radius is None or radius == self.w:
            rows = (r + self._dy) % L
            cols = (c + self._dx) % L
        else:
            span = np.arange(-radius, radius + 1)
            rows = ((r + span) % L).repeat(len(span))
            cols = np.tile((c + span) % L, len(span))
        return rows * L + cols

    def torus_linf(self, u: int, v) -> np.ndarray:
        """l-infinity torus distance from node ``u`` to node(s) ``v``."""
        L = self.L
        r1, c1 = divmod(int(u), L)
        v = np.asarray(v)
        r2, c2 = np.divmod(v, L)
        dr = np.abs(r2 - r1)
        dc = np.abs(c2 - c1)
        return np.maximum(np.minimum(dr, L - dr), np.minimum(dc, L - dc))

    # -- local rule ---------------------------------------------------------

    def same_state_count(self, u: int) -> int:
        k = int(self.flat_counts[u])
        return k if self.flat_spins[u] == PLUS else self.N - k

    def same_state_counts(self) -> np.ndarray:
        """Same-state count of every node, shape ``(L, L)``."""
        return np.where(self.spins == PLUS, self.counts, self.N - self.counts)

    def is_unstable(self, u: int, tau: Intolerance) -> bool:
        return self.same_state_count(u) < tau.threshold

    def is_flip_stabilizable(self, u: int, tau: Intolerance) -> bool:
        """Whether flipping ``u`` alone would leave it stable."""
        return self.N - self.same_state_count(u) + 1 >= tau.threshold

    def unstable_mask(self, tau: Intolerance) -> np.ndarray:
        return self.same_state_counts() < tau.threshold

    def active_mask(self, tau: Intolerance) -> np.ndarray:
        """Nodes that are unstable and would become stable by flipping."""
        c = self.same_state_counts()
        return (c < tau.threshold) & (c <= tau.flip_ceiling)

    # -- mutation -----------------------------------------------------------

    def flip(self, u: int) -> np.ndarray:
        """Negate spin ``u`` and patch the counts of its window.

        Returns the flat indices of the window, whose counts changed by one.
        """
        s = self.flat_spins[u]
        self.flat_spins[u] = -s
        idx = self.window(u)
        # +1 -> -1 removes one plus particle from every window containing u
        self.flat_counts[idx] -= s
        return idx

    def recount_bruteforce(self) -> np.ndarray:
        """Direct O(L^2 w^2) recomputation of the +1 window counts."""
        out = np.zeros_like(self.counts)
        plus = (self.spins == PLUS).astype(np.int32)
        for dy in range(-self.w, self.w + 1):
            for dx in range(-self.w, self.w + 1):
                out += np.roll(plus, shift=(-dy, -dx), axis=(0, 1))
        return out

    def check_counts(self) -> bool:
        return bool(np.array_equal(self.counts, self.recount_bruteforce()))

    def plus_fraction(self) -> float:
        return float(np.mean(self.spins == PLUS))

    def __eq__(self, other):
        if not isinstance(other, SpinGrid):
            return NotImplemented
        return (self.h, self.w) == (other.h, other.w) and np.array_equal(self.spins, other.spins)

    def __repr__(self):
        return f"SpinGrid(h={self.h}, w={self.w}, plus_fraction={self.plus_fraction():.3f})"


def window_sum(mask: np.ndarray, radius: int) -> np.ndarray:
    """Periodic box sum of ``mask`` over ``(2*radius+1)^2`` windows via a summed-area table."""
    a = np.asarray(mask, dtype=np.int64)
    L0, L1 = a.shape
    k = 2 * radius + 1
    padded = np.pad(a, radius, mode="wrap") if radius < min(L0, L1) else _tile_pad(a, radius)
    sat = np.zeros((padded.shape[0] + 1, padded.shape[1] + 1), dtype=np.int64)
    sat[1:, 1:] = padded.cumsum(0).cumsum(1)
    out = sat[k:, k:] - sat[:-k, k:] - sat[k:, :-k] + sat[:-k, :-k]
    return out[:L0, :L1].astype(np.int32)


def _tile_pad(a, radius):
    L0, L1 = a.shape
    reps = (2 * radius) // min(L0, L1) + 3
    big = np.tile(a, (reps, reps))
    o0 = (reps // 2) * L0 - radius
    o1 = (reps // 2) * L1 - radius
    return big[o0 : o0 + L0 + 2 * radius, o1 : o1 + L1 + 2 * radius]


def make_rng(seed) -> np.random.Generator:
    """Philox4x64-10 generator keyed directly by a 64-bit seed, counter at zero."""
    if seed is None:
        return np.random.Generator(np.random.Philox())
    return np.random.Generator(np.random.Philox(key=int(seed) & 0xFFFFFFFFFFFFFFFF))
