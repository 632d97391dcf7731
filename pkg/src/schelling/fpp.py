"""First-passage growth of flipped nodes under the region-of-expansion rule.

The lattice is the unbounded plane. A w-block is a ``(w+1) x (w+1)`` square
of nodes, keyed by its lower-left corner. Once every node of a w-block has
flipped, each node of its outer ring (the co-centered ``(w+3)``-square minus
the block) becomes eligible and flips after its own waiting time.

Waiting times are attached to nodes rather than to events: node ``(x, y)``
reads its clock from a tile of samples generated by a Philox stream whose
counter encodes the tile. Any two growths run with the same seed therefore
see identical clocks, which makes restricted and unrestricted runs comparable.
"""

from __future__ import annotations

import csv
import heapq
import math
from dataclasses import dataclass

import numpy as np

from .dynamics import EXPONENTIAL, WaitingTimeDistribution

TILE = 32
_MASK64 = 0xFFFFFFFFFFFFFFFF


class NodeClocks:
    """Lazily generated per-node waiting times for one seed."""

    def __init__(self, seed: int, dist: WaitingTimeDistribution = EXPONENTIAL):
        self.seed = int(seed) & _MASK64
        self.dist = dist
        self._tiles: dict[tuple[int, int], np.ndarray] = {}

    def __getitem__(self, node: tuple[int, int]) -> float:
        x, y = node
        key = (x // TILE, y // TILE)
        tile = self._tiles.get(key)
        if tile is None:
            counter = np.array([key[0] & _MASK64, key[1] & _MASK64, 0, 0], dtype=np.uint64)
            bg = np.random.Philox(key=self.seed, counter=counter)
            tile = np.asarray(self.dist.sample(np.random.Generator(bg), (TILE, TILE)), dtype=float)
            self._tiles[key] = tile
        return float(tile[y % TILE, x % TILE])


def seed_block(w: int) -> tuple[int, int]:
    """Lower-left corner of the w-block centered at the origin (half-integer center for odd w)."""
    return (-(w // 2), -(w // 2))


def block_nodes(corner, w):
    cx, cy = corner
    return [(cx + i, cy + j) for j in range(w + 1) for i in range(w + 1)]


def ring_nodes(corner, w):
    cx, cy = corner
    lo_x, lo_y, hi_x, hi_y = cx - 1, cy - 1, cx + w + 1, cy + w + 1
    out = [(x, lo_y) for x in range(lo_x, hi_x + 1)]
    out += [(x, hi_y) for x in range(lo_x, hi_x + 1)]
    out += [(lo_x, y) for y in range(lo_y + 1, hi_y)]
    out += [(hi_x, y) for y in range(lo_y + 1, hi_y)]
    return out


class Growth:
    """Event-driven growth from the origin seed block.

    ``flipped`` maps node -> flip time; ``eligible_since`` maps node -> the
    time it became eligible; ``witness`` maps node -> the completed block
    that made it eligible. ``allowed`` optionally restricts which nodes may flip.
    """

    def __init__(self, w: int, seed: int, dist: WaitingTimeDistribution = EXPONENTIAL, allowed=None):
        if w < 1:
            raise ValueError("w must be positive")
        self.w = w
        self.seed = seed
        self.clocks = NodeClocks(seed, dist)
        self.allowed = allowed
        self.current_time = 0.0
        self.flipped: dict[tuple[int, int], float] = {}
        self.eligible_since: dict[tuple[int, int], float] = {}
        self.witness: dict[tuple[int, int], tuple[int, int]] = {}
        self._block_fill: dict[tuple[int, int], int] = {}
        self._heap: list[tuple[float, tuple[int, int]]] = []
        self.seed_nodes = frozenset(block_nodes(seed_block(w), w))
        for v in sorted(self.seed_nodes):
            self._flip(v, 0.0)

    def _flip(self, v, t):
        self.flipped[v] = t
        w = self.w
        full = (w + 1) ** 2
        fill = self._block_fill
        x, y = v
        for j in range(w + 1):
            for i in range(w + 1):
                corner = (x - i, y - j)
                n = fill.get(corner, 0) + 1
                fill[corner] = n
                if n == full:
                    self._activate(corner, t)

    def _activate(self, corner, t):
        for u in ring_nodes(corner, self.w):
            if u in self.eligible_since or u in self.flipped:
                continue
            if self.allowed is not None and not self.allowed(u):
                continue
            self.eligible_since[u] = t
            self.witness[u] = corner
            heapq.heappush(self._heap, (t + self.clocks[u], u))

    def next_time(self) -> float:
        return self._heap[0][0] if self._heap else math.inf

    def step(self):
        t, v = heapq.heappop(self._heap)
        self.current_time = t
        self._flip(v, t)
        return v, t

    def advance_until(self, time_budget: float):
        while self._heap and self._heap[0][0] <= time_budget:
            self.step()
        self.current_time = max(self.current_time, time_budget)

    def run_until_flipped(self, targets, max_events: int | None = None):
        pending = {tuple(t) for t in targets} - set(self.flipped)
        n = 0
        while pending:
            if not self._heap:
                raise RuntimeError("growth stalled before reaching all targets")
            v, _ = self.step()
            pending.discard(v)
            n += 1
            if max_events is not None and n >= max_events:
                break
        return {tuple(t): self.flipped.get(tuple(t), math.inf) for t in targets}

    def check_witnesses(self) -> bool:
        """Every non-seed flip has a completed block, finished no later than its eligibility, around it."""
        w = self.w
        for v, t in self.flipped.items():
            if v in self.seed_nodes:
                continue
            corner = self.witness[v]
            e = self.eligible_since[v]
            if v not in ring_nodes(corner, w) or e > t:
                return False
            if max(self.flipped.get(b, math.inf) for b in block_nodes(corner, w)) != e:
                return False
        return True


@dataclass(frozen=True)
class PassageRecord:
    target: tuple[int, int]
    passage_time: float
    seed: int


def simulate_growth(w: int, targets, dist: WaitingTimeDistribution = EXPONENTIAL, seed: int = 0, allowed=None) -> list[PassageRecord]:
    """Passage time from the origin seed block to each target."""
    g = Growth(w, seed, dist, allowed)
    times = g.run_until_flipped(targets)
    return [PassageRecord(tuple(t), times[tuple(t)], seed) for t in targets]


def passage_stats(records) -> dict[tuple[int, int], tuple[float, float, float]]:
    """Per-target ``(mean, sample std, coefficient of variation)``."""
    by_target: dict[tuple[int, int], list[float]] = {}
    for r in records:
        by_target.setdefault(tuple(r.target), []).append(r.passage_time)
    out = {}
    for t, xs in by_target.items():
        if len(xs) < 2:
            raise ValueError(f"target {t} has fewer than 2 samples")
        a = np.asarray(xs, dtype=float)
        mean = float(a.mean())
        std = float(a.std(ddof=1))
        out[t] = (mean, std, std / mean if mean else math.nan)
    return out


def empirical_ball(w: int, time_budget: float, dist: WaitingTimeDistribution = EXPONENTIAL, seed: int = 0) -> set[tuple[int, int]]:
    """Nodes flipped by ``time_budget``."""
    if time_budget < 0:
        raise ValueError("time budget must be non-negative")
    g = Growth(w, seed, dist)
    g.advance_until(time_budget)
    return set(g.flipped)


def directional_radius(ball, direction: tuple[int, int]) -> int:
    """Largest k such that k * direction lies in the ball, walking out from the origin."""
    dx, dy = direction
    k = 0
    while ((k + 1) * dx, (k + 1) * dy) in ball:
        k += 1
    return k


def write_passage_csv(records, path):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["target_x", "target_y", "seed", "passage_time"])
        for r in records:
            wr.writerow([r.target[0], r.target[1], r.seed, repr(float(r.passage_time))])


def read_passage_csv(path) -> list[PassageRecord]:
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        return [
            PassageRecord((int(row["target_x"]), int(row["target_y"])), float(row["passage_time"]), int(row["seed"]))
            for row in rd
        ]
