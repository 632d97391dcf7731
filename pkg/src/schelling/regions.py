"""Geometric detectors: affected nodes, block renormalization, bad clusters,
radical and unstable regions, cascade closure, expandable regions, firewalls
and monochromatic regions.

All detectors read a SpinGrid snapshot. ``cascade_closure`` is the only
function that mutates its argument, and callers are expected to hand it a copy.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb

import numpy as np
from scipy.ndimage import maximum_filter

from .grid import MINUS, PLUS, Intolerance, SpinGrid, make_rng, window_sum

NONE = 0
EPS_DOUBLE_PRIME = 0.265


# ---------------------------------------------------------------------------
# affected nodes
# ---------------------------------------------------------------------------


@dataclass
class AffectedMap:
    """Per-node labels: ``+1`` plus-affected, ``-1`` minus-affected, ``0`` neither.

    A node is theta-affected when a theta-particle there would be unstable
    while a particle of the opposite state would be stable.
    """

    labels: np.ndarray

    def nodes(self, theta: int) -> np.ndarray:
        return np.flatnonzero(self.labels.reshape(-1) == theta)

    def count(self, theta: int) -> int:
        return int(np.count_nonzero(self.labels == theta))

    def any(self, theta: int, mask=None) -> bool:
        hit = self.labels == theta
        if mask is not None:
            hit &= _as_mask(mask, self.labels.shape)
        return bool(hit.any())


def classify_affected(grid: SpinGrid, tau: Intolerance) -> AffectedMap:
    T, N = tau.threshold, grid.N
    # k = number of +1 particles among the N - 1 non-center nodes
    k = grid.counts - (grid.spins == PLUS)
    plus = (k + 1 < T) & (N - k >= T)
    minus = (N - k < T) & (k + 1 >= T)
    assert not np.any(plus & minus)
    labels = np.zeros(grid.spins.shape, dtype=np.int8)
    labels[plus] = PLUS
    labels[minus] = MINUS
    return AffectedMap(labels)


def is_affected_star(grid: SpinGrid, tau: Intolerance, u: int, markers=frozenset()) -> bool:
    """Affected* is a forced label: true for marked nodes, otherwise only if a
    particle surrounded by its own state would still be unstable (never for tau <= 1)."""
    return int(u) in markers or grid.N < tau.threshold


# ---------------------------------------------------------------------------
# blocks
# ---------------------------------------------------------------------------


def block_side(m: int) -> int:
    """Nodes per axis of an m-block (a neighborhood of radius m/2)."""
    return m + 1


@dataclass
class BlockMap:
    """Disjoint tiling of the torus into square blocks of ``side`` nodes.

    ``bad`` is indexed ``[by, bx]``; it is all False until labels are computed.
    """

    h: int
    side: int
    bad: np.ndarray
    theta: int | None = None
    eps: float | None = None

    @property
    def nb(self) -> int:
        return self.bad.shape[0]

    def block_of(self, x: int, y: int) -> tuple[int, int]:
        L = 2 * self.h
        return ((x + self.h) % L) // self.side, ((y + self.h) % L) // self.side

    def nodes(self, bx: int, by: int) -> tuple[slice, slice]:
        """Row and column slices (array coordinates) of block ``(bx, by)``."""
        s = self.side
        return slice(by * s, (by + 1) * s), slice(bx * s, (bx + 1) * s)

    @property
    def origin_block(self) -> tuple[int, int]:
        return self.block_of(0, 0)


def renormalize(grid: SpinGrid, side: int) -> BlockMap:
    if side < 1 or grid.L % side:
        raise ValueError(f"torus side {grid.L} is not divisible by block side {side}")
    nb = grid.L // side
    return BlockMap(grid.h, side, np.zeros((nb, nb), dtype=bool))


def good_block_excess(grid: SpinGrid, theta: int) -> np.ndarray:
    """``W_I - N_I/2`` for the radius-w/2 window I centered at every node.

    ``W_I`` counts particles of the state opposite to ``theta``.
    """
    r = grid.w // 2
    n_i = (2 * r + 1) ** 2
    plus = window_sum(grid.spins == PLUS, r)
    w_i = n_i - plus if theta == PLUS else plus
    return w_i - n_i / 2


def classify_block(grid: SpinGrid, block: tuple[int, int], side: int, theta: int, eps: float) -> str:
    """``"good"`` iff every window I centered in the block has ``W_I - N_I/2 < N^(1/2+eps)``."""
    if not 0 < eps < 0.5:
        raise ValueError("eps must lie in (0, 1/2)")
    bm = renormalize(grid, side)
    rows, cols = bm.nodes(*block)
    excess = good_block_excess(grid, theta)[rows, cols]
    return "good" if excess.max() < grid.N ** (0.5 + eps) else "bad"


def classify_blocks(grid: SpinGrid, side: int, theta: int, eps: float) -> BlockMap:
    if not 0 < eps < 0.5:
        raise ValueError("eps must lie in (0, 1/2)")
    bm = renormalize(grid, side)
    excess = good_block_excess(grid, theta)
    nb = bm.nb
    per_block = excess.reshape(nb, side, nb, side).max(axis=(1, 3))
    bm.bad = per_block >= grid.N ** (0.5 + eps)
    bm.theta, bm.eps = theta, eps
    return bm


class UnionFind:
    """Disjoint sets over ``0..n-1`` with path halving and union by size."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n

    def find(self, a: int) -> int:
        p = self.parent
        while p[a] != a:
            p[a] = p[p[a]]
            a = p[a]
        return a

    def union(self, a: int, b: int) -> int:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return ra
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        return ra


@dataclass
class BadCluster:
    blocks: list[tuple[int, int]]
    reference: tuple[int, int]
    radius: int

    def __len__(self):
        return len(self.blocks)


def _block_linf(a, b, nb, periodic):
    dx = abs(a[0] - b[0])
    dy = abs(a[1] - b[1])
    if periodic:
        dx, dy = min(dx, nb - dx), min(dy, nb - dy)
    return max(dx, dy)


def bad_clusters(bm: BlockMap, reference=None, periodic: bool = True) -> list[BadCluster]:
    """Moore-connected clusters of bad blocks.

    A cluster's radius is the largest block l-infinity distance from its
    reference block: ``reference`` if the cluster contains it, otherwise the
    cluster's first block in raster order.
    """
    bad = bm.bad
    nb = bad.shape[0]
    ids = np.flatnonzero(bad.reshape(-1)).tolist()
    uf = UnionFind(nb * nb)
    badset = set(ids)
    for i in ids:
        by, bx = divmod(i, nb)
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                if (dx, dy) <= (0, 0):
                    continue
                yy, xx = by + dy, bx + dx
                if periodic:
                    yy, xx = yy % nb, xx % nb
                elif not (0 <= yy < nb and 0 <= xx < nb):
                    continue
                j = yy * nb + xx
                if j in badset:
                    uf.union(i, j)
    groups: dict[int, list[tuple[int, int]]] = {}
    for i in ids:
        by, bx = divmod(i, nb)
        groups.setdefault(uf.find(i), []).append((bx, by))
    out = []
    for blocks in groups.values():
        ref = reference if reference is not None and tuple(reference) in blocks else blocks[0]
        radius = max(_block_linf(ref, b, nb, periodic) for b in blocks)
        out.append(BadCluster(blocks, tuple(ref), radius))
    out.sort(key=lambda c: (c.blocks[0][1], c.blocks[0][0]))
    return out


def origin_cluster_radius(bm: BlockMap, periodic: bool = True) -> int:
    """Radius of the bad cluster containing the origin block, or -1 if that block is good."""
    ob = bm.origin_block
    if not bm.bad[ob[1], ob[0]]:
        return -1
    for c in bad_clusters(bm, reference=ob, periodic=periodic):
        if c.reference == ob:
            return c.radius
    raise AssertionError("origin block missing from its cluster")


def cluster_mask(bm: BlockMap, cluster: BadCluster) -> np.ndarray:
    L = 2 * bm.h
    mask = np.zeros((L, L), dtype=bool)
    for bx, by in cluster.blocks:
        rows, cols = bm.nodes(bx, by)
        mask[rows, cols] = True
    return mask


def sample_origin_cluster_radii(w, eps, side, n_fields, h, theta=PLUS, seed=None) -> np.ndarray:
    """Origin-cluster radius on ``n_fields`` independent uniform random grids."""
    rng = make_rng(seed)
    out = np.empty(n_fields, dtype=np.int64)
    for i in range(n_fields):
        g = SpinGrid.new_random(h, w, 0.5, rng)
        out[i] = origin_cluster_radius(classify_blocks(g, side, theta, eps))
    return out


# ---------------------------------------------------------------------------
# radical and unstable regions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RadicalParams:
    eps: float = 0.1
    eps_prime: float = 0.3
    eps_double_prime: float = EPS_DOUBLE_PRIME

    def __post_init__(self):
        if not 0 < self.eps < 0.5:
            raise ValueError("eps must lie in (0, 1/2)")
        if self.eps_prime <= 0:
            raise ValueError("eps_prime must be positive")

    def tau_hat(self, tau: float, N: int) -> float:
        return tau * (1 - 1 / (tau * N ** (0.5 - self.eps)))

    @staticmethod
    def tau_bar(tau: float, N: int) -> float:
        return 1 - tau + 2 / N

    def tau_bar_prime(self, tau: float, N: int) -> float:
        tb = self.tau_bar(tau, N)
        return (1 - 1 / (tb * N ** (0.5 - self.eps))) * tb

    def radical_radius(self, w: int) -> int:
        return math.floor((1 + self.eps_prime) * w)

    def unstable_radius(self, w: int) -> int:
        return math.floor(self.eps_prime * w)

    def radical_threshold(self, tau: float, N: int) -> float:
        """Radical iff the theta count is strictly below this value."""
        t = self.tau_hat(tau, N) if tau < 0.5 else self.tau_bar_prime(tau, N)
        return t * (1 + self.eps_prime) ** 2 * N

    def unstable_threshold(self, tau: float, N: int) -> int:
        t = tau if tau < 0.5 else self.tau_bar(tau, N)
        return math.floor(t * self.eps_prime**2 * N - N ** (0.5 + self.eps))


def _count_state(grid: SpinGrid, center: int, radius: int, theta: int) -> int:
    return int(np.count_nonzero(grid.flat_spins[grid.window(center, radius)] == theta))


def is_radical_region(grid: SpinGrid, center: int, tau: Intolerance, params: RadicalParams, theta: int = PLUS) -> bool:
    """Radius-(1+eps')w neighborhood holding fewer theta-particles than the
    radical threshold (super-radical threshold when tau > 1/2)."""
    R = params.radical_radius(grid.w)
    if 2 * R + 1 > grid.L:
        raise ValueError("radical region does not fit on the torus")
    return _count_state(grid, center, R, theta) < params.radical_threshold(float(tau.tau), grid.N)


def is_unstable_region(grid: SpinGrid, center: int, tau: Intolerance, params: RadicalParams, theta: int = PLUS) -> bool:
    """Radius-eps'w neighborhood holding enough (super-)unstable theta-particles.

    At least one such particle is always required: at small N the floor
    threshold is non-positive.
    """
    r = params.unstable_radius(grid.w)
    if r < 1:
        raise ValueError("eps' * w must be at least 1")
    idx = grid.window(center, r)
    act = grid.active_mask(tau).reshape(-1)[idx]
    n = int(np.count_nonzero(act & (grid.flat_spins[idx] == theta)))
    return n >= 1 and n >= params.unstable_threshold(float(tau.tau), grid.N)


# ---------------------------------------------------------------------------
# cascade closure and expandable regions
# ---------------------------------------------------------------------------


def _as_mask(region, shape) -> np.ndarray:
    if isinstance(region, np.ndarray) and region.dtype == bool:
        return region.reshape(shape)
    mask = np.zeros(int(np.prod(shape)), dtype=bool)
    mask[np.fromiter((int(v) for v in region), dtype=np.int64)] = True
    return mask.reshape(shape)


def flip_limit(tau: Intolerance) -> int:
    """A particle with same-state count c flips (and stabilizes) iff c < this.

    Equals the threshold for tau <= 1/2 + 1/N and the super-unstable bound
    ``(1 - tau + 2/N) N`` above it.
    """
    return min(tau.threshold, tau.N + 2 - tau.threshold)


def cascade_closure(grid: SpinGrid, tau: Intolerance, allowed_region, theta: int, order=None):
    """Flip theta-particles inside ``allowed_region`` until none can flip.

    Mutates ``grid``. Returns ``(flipped_nodes, flip_count)``. Flips only lower
    the theta count seen by other theta-particles, so the fixpoint does not
    depend on the processing order; ``order`` (a Generator) shuffles it anyway.
    """
    region = _as_mask(allowed_region, (grid.L, grid.L)).reshape(-1)
    limit = flip_limit(tau)
    N = grid.N
    spins, counts = grid.flat_spins, grid.flat_counts

    def can_flip(v):
        if spins[v] != theta:
            return False
        c = counts[v] if theta == PLUS else N - counts[v]
        return c < limit

    start = [v for v in np.flatnonzero(region).tolist() if can_flip(v)]
    if order is not None:
        order.shuffle(start)
    queue = deque(start)
    queued = set(start)
    flipped = []
    while queue:
        v = queue.popleft()
        queued.discard(v)
        if not can_flip(v):
            continue
        idx = grid.flip(v)
        flipped.append(v)
        nxt = [int(x) for x in idx.tolist() if region[x] and x not in queued and can_flip(x)]
        if order is not None:
            order.shuffle(nxt)
        for x in nxt:
            queue.append(x)
            queued.add(x)
    return set(flipped), len(flipped)


def expansion_shells(grid: SpinGrid, cluster) -> tuple[np.ndarray, np.ndarray]:
    """X1 = cluster dilated by floor(N/4) in l-infinity; X2 = the next floor(N/4) shell."""
    d = grid.N // 4
    base = _as_mask(cluster, (grid.L, grid.L))
    x1 = maximum_filter(base, size=2 * d + 1, mode="wrap")
    x12 = maximum_filter(x1, size=2 * d + 1, mode="wrap")
    return x1, x12 & ~x1


def is_expandable(grid: SpinGrid, tau: Intolerance, cluster, theta: int = PLUS) -> bool:
    """Whether flips of theta-particles inside X1 can create a theta-affected node in X2."""
    x1, x2 = expansion_shells(grid, cluster)
    work = grid.copy()
    cascade_closure(work, tau, x1, theta)
    return classify_affected(work, tau).any(theta, x2)


def trigger_region(grid: SpinGrid, center: int) -> np.ndarray:
    """Flat indices of the central w-block N_{w/2}."""
    return grid.window(center, grid.w // 2)


def trigger_succeeds(grid: SpinGrid, tau: Intolerance, center: int, theta: int = PLUS) -> tuple[bool, int]:
    """Run the closure inside the central w-block of ``center`` on a copy.

    Returns whether the block ends up entirely in the state opposite to
    ``theta``, and the number of flips used (at most ``(w+1)^2``).
    """
    work = grid.copy()
    block = trigger_region(work, center)
    _, n = cascade_closure(work, tau, block, theta)
    return bool(np.all(work.flat_spins[block] == -theta)), n


def sample_radical_grid(w: int, tau: Intolerance, params: RadicalParams, rng, theta: int = PLUS, h=None) -> SpinGrid:
    """Uniform grid conditioned on the origin being a radical region of type ``theta``.

    The theta count K of the radical region is drawn from the binomial law
    truncated below the radical threshold, then K positions are chosen
    uniformly; everything outside the region is i.i.d. fair.
    """
    R = params.radical_radius(w)
    if h is None:
        h = max(R, (3 * w) // 2) + w + 2
    g = SpinGrid.new_random(h, w, 0.5, rng)
    n_s = (2 * R + 1) ** 2
    thr = params.radical_threshold(float(tau.tau), g.N)
    kmax = math.ceil(thr) - 1
    if kmax < 0:
        raise ValueError("radical threshold is not positive")
    kmax = min(kmax, n_s)
    weights = [comb(n_s, k) for k in range(kmax + 1)]
    total = sum(weights)
    probs = np.array([x / total for x in weights])
    k = int(rng.choice(kmax + 1, p=probs / probs.sum()))
    idx = g.window(g.origin, R)
    region = np.full(n_s, -theta, dtype=np.int8)
    region[rng.choice(n_s, size=k, replace=False)] = theta
    spins = g.spins.copy().reshape(-1)
    spins[idx] = region
    return SpinGrid(h, w, spins.reshape(g.L, g.L))


# ---------------------------------------------------------------------------
# firewalls
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FirewallSpec:
    """Annulus ``r - sqrt(2) w <= |y - center|_2 <= r`` around ``center`` (torus coordinates)."""

    center: tuple[int, int]
    r: Fraction
    w: int

    def __post_init__(self):
        object.__setattr__(self, "r", Fraction(self.r))
        if self.r < 3 * self.w:
            raise ValueError("firewall radius must be at least 3w")

    def contains_offset(self, dx, dy):
        """Exact membership test for integer offsets (scalars or arrays)."""
        p, q = self.r.numerator, self.r.denominator
        d2 = np.asarray(dx, dtype=object) ** 2 + np.asarray(dy, dtype=object) ** 2
        outer = d2 * q * q <= p * p
        # d >= r - sqrt(2) w  <=>  a <= 0 or a^2 <= 8 p^2 w^2 q^2,  a = q^2 (r^2 + 2 w^2 - d^2)
        a = p * p + 2 * self.w**2 * q * q - d2 * q * q
        inner = (a <= 0) | (a * a <= 8 * p * p * self.w**2 * q * q)
        out = outer & inner
        return bool(out) if np.ndim(out) == 0 else out.astype(bool)

    def offsets(self) -> np.ndarray:
        R = math.floor(self.r)
        span = np.arange(-R, R + 1)
        dy, dx = np.meshgrid(span, span, indexing="ij")
        keep = self.contains_offset(dx, dy)
        return np.stack([dx[keep], dy[keep]], axis=1)

    def members(self, grid: SpinGrid) -> np.ndarray:
        cx, cy = self.center
        off = self.offsets()
        if 2 * math.floor(self.r) + 1 > grid.L:
            raise ValueError("firewall does not fit on the torus")
        return np.array([grid.index(cx + dx, cy + dy) for dx, dy in off.tolist()], dtype=np.int64)

    def disk_offsets_mask(self, pad: int) -> tuple[np.ndarray, int]:
        """Boolean mask of the closed disk of radius r on a square of half-width floor(r)+pad."""
        R = math.floor(self.r) + pad
        span = np.arange(-R, R + 1)
        dy, dx = np.meshgrid(span, span, indexing="ij")
        r2 = self.r * self.r
        return (dx**2 + dy**2) * r2.denominator <= r2.numerator, R


def is_firewall(grid: SpinGrid, spec: FirewallSpec) -> bool:
    s = grid.flat_spins[spec.members(grid)]
    return bool(np.all(s == s[0]))


def static_firewall_stable(spec: FirewallSpec, tau: Intolerance, w: int | None = None) -> bool:
    """Worst case: disk interior in the annulus state, everything outside opposite.

    True iff every annulus member still has at least ``threshold`` same-state
    particles in its window.
    """
    w = spec.w if w is None else w
    disk, R = spec.disk_offsets_mask(w + 1)
    same = window_sum(disk, w)
    off = spec.offsets()
    vals = same[off[:, 1] + R, off[:, 0] + R]
    return bool(np.all(vals >= tau.threshold))


def firewall_grid(h: int, w: int, spec: FirewallSpec, state: int = PLUS) -> SpinGrid:
    """Disk of radius r in ``state`` on a torus otherwise filled with the opposite state."""
    g = SpinGrid.filled(h, w, -state)
    disk, R = spec.disk_offsets_mask(0)
    cx, cy = spec.center
    spins = g.spins
    for dy, dx in zip(*np.nonzero(disk)):
        spins[(cy + dy - R + h) % g.L, (cx + dx - R + h) % g.L] = state
    return SpinGrid(h, w, spins)


# ---------------------------------------------------------------------------
# monochromatic regions
# ---------------------------------------------------------------------------


def mono_radii(grid: SpinGrid) -> np.ndarray:
    """Largest r such that the radius-r square at each center is monochromatic (capped at h-1)."""
    plus = grid.spins == PLUS
    R = np.zeros(plus.shape, dtype=np.int32)
    alive = np.ones(plus.shape, dtype=bool)
    for r in range(1, grid.h):
        s = window_sum(plus, r)
        mono = alive & ((s == 0) | (s == (2 * r + 1) ** 2))
        if not mono.any():
            break
        R[mono] = r
        alive = mono
    return R


def monochromatic_region(grid: SpinGrid, u: int, radii=None) -> tuple[int, int, tuple[int, int]]:
    """``(rho, (2 rho + 1)^2, center)`` of the largest monochromatic square containing ``u``.

    Ties go to the lexicographically smallest center ``(x, y)``.
    """
    R = mono_radii(grid) if radii is None else radii
    Rf = R.reshape(-1)
    d = grid.torus_linf(u, np.arange(grid.size))
    ok = d <= Rf
    best = int(Rf[ok].max())
    cand = np.flatnonzero(ok & (Rf == best))
    centers = sorted(grid.coords(c) for c in cand.tolist())
    return best, (2 * best + 1) ** 2, centers[0]


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


@dataclass
class RegionReport:
    plus_affected: int
    minus_affected: int
    mono_radius: int
    mono_size: int
    mono_center: tuple[int, int]
    radical_centers: list[tuple[int, int]] = field(default_factory=list)
    firewalls: dict[str, bool] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "plus_affected": self.plus_affected,
            "minus_affected": self.minus_affected,
            "mono_radius": self.mono_radius,
            "mono_size": self.mono_size,
            "mono_center": list(self.mono_center),
            "radical_centers": [list(c) for c in self.radical_centers],
            "firewalls": dict(self.firewalls),
        }


def region_report(grid: SpinGrid, tau: Intolerance, u: int | None = None, params: RadicalParams | None = None,
                  theta: int = PLUS, firewalls=()) -> RegionReport:
    u = grid.origin if u is None else u
    am = classify_affected(grid, tau)
    rho, size, center = monochromatic_region(grid, u)
    rad = []
    if params is not None and 2 * params.radical_radius(grid.w) + 1 <= grid.L:
        thr = params.radical_threshold(float(tau.tau), grid.N)
        R = params.radical_radius(grid.w)
        cnt = window_sum(grid.spins == theta, R)
        rad = sorted(grid.coords(v) for v in np.flatnonzero(cnt.reshape(-1) < thr).tolist())
    fw = {f"{s.center}:{s.r}": is_firewall(grid, s) for s in firewalls}
    return RegionReport(am.count(PLUS), am.count(MINUS), rho, size, center, rad, fw)
