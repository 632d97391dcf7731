"""Glauber dynamics on a SpinGrid under a discrete or a continuous-time scheduler.

Both schedulers keep the set of unstable nodes up to date after every flip by
re-examining only the flipped node's window, so an event costs O(w^2).
"""

from __future__ import annotations

import enum
import heapq
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from .grid import Intolerance, SpinGrid, make_rng

DEFAULT_MAX_EVENTS = 10**9


class Outcome(enum.Enum):
    FLIPPED = "flipped"
    NULL = "null"
    NO_UNSTABLE = "no_unstable"


@dataclass(frozen=True)
class Event:
    outcome: Outcome
    node: int | None = None
    time: float | None = None


@dataclass(frozen=True)
class WaitingTimeDistribution:
    """Waiting-time law ``F`` of the clock process.

    ``sample(rng, size)`` must return positive samples. ``mgf_bound`` is a
    ``gamma > 0`` with ``E[exp(gamma * X)] < inf``; it is only recorded.
    """

    name: str
    sample: Callable[[np.random.Generator, int | None], np.ndarray | float]
    mgf_bound: float

    @classmethod
    def exponential(cls, rate: float = 1.0) -> WaitingTimeDistribution:
        if rate <= 0:
            raise ValueError("rate must be positive")
        scale = 1.0 / rate
        return cls(f"exponential(rate={rate})", lambda rng, size=None: rng.exponential(scale, size), rate / 2)

    @classmethod
    def gamma(cls, shape: float, scale: float = 1.0) -> WaitingTimeDistribution:
        if shape <= 0 or scale <= 0:
            raise ValueError("shape and scale must be positive")
        return cls(
            f"gamma(shape={shape}, scale={scale})",
            lambda rng, size=None: rng.gamma(shape, scale, size),
            1 / (2 * scale),
        )

    @classmethod
    def pluggable(cls, sample, name="custom", mgf_bound=float("nan")) -> WaitingTimeDistribution:
        # F(0) = 0, non-degeneracy and the exponential moment are the caller's responsibility
        return cls(name, sample, mgf_bound)


EXPONENTIAL = WaitingTimeDistribution.exponential()


@dataclass
class SteadyStateReport:
    steps_taken: int
    flips_executed: int
    null_events: int
    final_lyapunov: int
    reached_steady: bool
    initial_lyapunov: int = 0
    elapsed_time: float | None = None


def lyapunov(grid: SpinGrid) -> int:
    """Sum over all nodes of the same-state count in their window."""
    return int(grid.same_state_counts().sum(dtype=np.int64))


def is_steady(grid: SpinGrid, tau: Intolerance) -> bool:
    """True iff no node is both unstable and stabilizable by a flip."""
    return not bool(grid.active_mask(tau).any())


class _Scheduler:
    """Unstable-set bookkeeping shared by both schedulers."""

    kind = "base"

    def __init__(self, grid: SpinGrid, tau: Intolerance, rng=None, check_lyapunov: bool = False):
        if tau.N != grid.N:
            raise ValueError(f"intolerance built for N={tau.N}, grid has N={grid.N}")
        self.grid = grid
        self.tau = tau
        self.rng = rng if isinstance(rng, np.random.Generator) else make_rng(rng)
        self.check_lyapunov = check_lyapunov
        self.steps = 0
        self.flips = 0
        self.nulls = 0
        n = grid.size
        self.pos = np.full(n, -1, dtype=np.int64)
        self.members: list[int] = []
        c = grid.same_state_counts().reshape(-1)
        unst = c < tau.threshold
        self.active = unst & (c <= tau.flip_ceiling)
        self.n_active = int(self.active.sum())
        for v in np.flatnonzero(unst).tolist():
            self._add(v)
        self.lyapunov = int(c.sum(dtype=np.int64))

    # indexed set of unstable nodes
    def _add(self, v: int):
        self.pos[v] = len(self.members)
        self.members.append(v)

    def _remove(self, v: int):
        i = self.pos[v]
        last = self.members.pop()
        if last != v:
            self.members[i] = last
            self.pos[last] = i
        self.pos[v] = -1

    @property
    def unstable_count(self) -> int:
        return len(self.members)

    def is_steady(self) -> bool:
        return self.n_active == 0

    def _flip(self, u: int):
        g = self.grid
        c = g.same_state_count(u)
        idx = g.flip(u)
        before = self.lyapunov
        self.lyapunov += 2 * (g.N - 2 * c + 1)
        if self.check_lyapunov:
            assert self.lyapunov > before, "Lyapunov function failed to increase"
            assert self.lyapunov == lyapunov(g)
        self._refresh(idx)
        self.flips += 1

    def _refresh(self, idx: np.ndarray):
        g = self.grid
        k = g.flat_counts[idx]
        c = np.where(g.flat_spins[idx] == 1, k, g.N - k)
        unst = c < self.tau.threshold
        act = unst & (c <= self.tau.flip_ceiling)
        self.n_active += int(act.sum()) - int(self.active[idx].sum())
        self.active[idx] = act
        changed = np.flatnonzero(unst != (self.pos[idx] >= 0))
        for j in changed.tolist():
            v = int(idx[j])
            if unst[j]:
                self._add(v)
                self._on_unstable(v)
            else:
                self._remove(v)
                self._on_stable(v)

    def _on_unstable(self, v: int):
        pass

    def _on_stable(self, v: int):
        pass

    def step(self) -> Event:
        raise NotImplementedError

    def run(self, max_events: int = DEFAULT_MAX_EVENTS, on_event=None) -> SteadyStateReport:
        """Advance until steady or until ``max_events`` further events were consumed."""
        if max_events < 0:
            raise ValueError("max_events must be non-negative")
        start_steps, start_flips, start_nulls = self.steps, self.flips, self.nulls
        initial = self.lyapunov
        while self.steps - start_steps < max_events and self.n_active > 0:
            ev = self.step()
            if on_event is not None:
                on_event(ev)
        return SteadyStateReport(
            steps_taken=self.steps - start_steps,
            flips_executed=self.flips - start_flips,
            null_events=self.nulls - start_nulls,
            final_lyapunov=self.lyapunov,
            reached_steady=self.n_active == 0,
            initial_lyapunov=initial,
            elapsed_time=getattr(self, "now", None),
        )


class DiscreteScheduler(_Scheduler):
    """Uniform pick among unstable nodes; flip iff the flip stabilizes it."""

    kind = "discrete"

    def step(self) -> Event:
        n = len(self.members)
        if n == 0:
            return Event(Outcome.NO_UNSTABLE)
        u = self.members[int(self.rng.integers(n))]
        self.steps += 1
        if self.active[u]:
            self._flip(u)
            return Event(Outcome.FLIPPED, u)
        self.nulls += 1
        return Event(Outcome.NULL, u)

    def state(self) -> dict:
        return {
            "kind": self.kind,
            "members": list(self.members),
            "rng": self.rng.bit_generator.state,
            "steps": self.steps,
            "flips": self.flips,
            "nulls": self.nulls,
        }

    @classmethod
    def restore(cls, grid: SpinGrid, tau: Intolerance, state: dict) -> DiscreteScheduler:
        s = cls(grid, tau, make_rng(0))
        members = [int(v) for v in state["members"]]
        if sorted(members) != sorted(s.members):
            raise ValueError("checkpointed unstable set does not match the grid")
        s.members = members
        s.pos[:] = -1
        s.pos[members] = np.arange(len(members))
        s.rng.bit_generator.state = state["rng"]
        s.steps, s.flips, s.nulls = state["steps"], state["flips"], state["nulls"]
        return s


class ContinuousScheduler(_Scheduler):
    """Next-event simulation of i.i.d. clocks attached to unstable particles.

    A clock is drawn when a particle becomes unstable and discarded when it
    becomes stable; a null event (unstable, flip would not stabilize) redraws it.
    """

    kind = "continuous"

    def __init__(self, grid, tau, rng=None, dist: WaitingTimeDistribution = EXPONENTIAL, check_lyapunov=False):
        self.dist = dist
        self.now = 0.0
        self._heap: list[tuple[float, int, int]] = []
        self._version = np.zeros(grid.size, dtype=np.int64)
        super().__init__(grid, tau, rng, check_lyapunov)
        if self.members:
            # members were added before the clocks existed; draw them in member order
            times = np.asarray(dist.sample(self.rng, len(self.members)), dtype=float)
            self._heap = [(float(t), v, 0) for t, v in zip(times, self.members)]
            heapq.heapify(self._heap)

    def _on_unstable(self, v):
        self._version[v] += 1
        t = self.now + float(self.dist.sample(self.rng, None))
        heapq.heappush(self._heap, (t, v, int(self._version[v])))

    def _on_stable(self, v):
        self._version[v] += 1

    def _pop(self):
        heap = self._heap
        while heap:
            t, v, ver = heapq.heappop(heap)
            if ver == self._version[v]:
                return t, v
        return None

    def step(self) -> Event:
        top = self._pop()
        if top is None:
            return Event(Outcome.NO_UNSTABLE)
        t, u = top
        self.now = t
        self.steps += 1
        if self.active[u]:
            self._version[u] += 1
            self._flip(u)
            return Event(Outcome.FLIPPED, u, t)
        self.nulls += 1
        self._on_unstable(u)
        return Event(Outcome.NULL, u, t)

    def state(self) -> dict:
        live = sorted((t, v) for t, v, ver in self._heap if ver == self._version[v])
        return {
            "kind": self.kind,
            "clocks": [[v, t] for t, v in live],
            "now": self.now,
            "members": list(self.members),
            "rng": self.rng.bit_generator.state,
            "steps": self.steps,
            "flips": self.flips,
            "nulls": self.nulls,
        }

    @classmethod
    def restore(cls, grid, tau, state, dist: WaitingTimeDistribution = EXPONENTIAL) -> ContinuousScheduler:
        s = cls(grid, tau, make_rng(0), dist)
        members = [int(v) for v in state["members"]]
        if sorted(members) != sorted(s.members):
            raise ValueError("checkpointed unstable set does not match the grid")
        s.members = members
        s.pos[:] = -1
        s.pos[members] = np.arange(len(members))
        s._version[:] = 0
        s._heap = [(float(t), int(v), 0) for v, t in state["clocks"]]
        heapq.heapify(s._heap)
        s.now = float(state["now"])
        s.rng.bit_generator.state = state["rng"]
        s.steps, s.flips, s.nulls = state["steps"], state["flips"], state["nulls"]
        return s


def make_scheduler(grid, tau, scheduler="discrete", rng=None, dist=EXPONENTIAL, check_lyapunov=False):
    if isinstance(scheduler, _Scheduler):
        return scheduler
    if scheduler == "discrete":
        return DiscreteScheduler(grid, tau, rng, check_lyapunov)
    if scheduler == "continuous":
        return ContinuousScheduler(grid, tau, rng, dist, check_lyapunov)
    raise ValueError(f"unknown scheduler {scheduler!r}")


def step_discrete(grid: SpinGrid, tau: Intolerance, rng) -> Event:
    """One event of the discrete chain on ``grid`` (builds a fresh scheduler)."""
    return DiscreteScheduler(grid, tau, rng).step()


def step_continuous(grid: SpinGrid, tau: Intolerance, dist=EXPONENTIAL, rng=None) -> Event:
    """One event of the clock process started from fresh clocks."""
    return ContinuousScheduler(grid, tau, rng, dist).step()


def run_to_steady_state(
    grid: SpinGrid,
    tau: Intolerance,
    scheduler="discrete",
    max_events: int = DEFAULT_MAX_EVENTS,
    rng=None,
    dist=EXPONENTIAL,
    check_lyapunov: bool = False,
) -> SteadyStateReport:
    sched = make_scheduler(grid, tau, scheduler, rng, dist, check_lyapunov)
    return sched.run(max_events)


def lyapunov_upper_bound(grid: SpinGrid) -> int:
    return grid.size * grid.N


def max_flips_bound(grid: SpinGrid) -> int:
    """Upper bound on the number of flips in any run.

    The sum starts at no less than ``size`` (each center counts itself) and
    ends at no more than ``size * N``. An executed flip has ``c <= (N - 1) / 2``,
    so it raises the sum by ``2 (N - 2c + 1) >= 4``.
    """
    return (lyapunov_upper_bound(grid) - grid.size) // 4
