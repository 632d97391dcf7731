from fractions import Fraction

import numpy as np
import pytest
from scipy import stats

from schelling.dynamics import (
    ContinuousScheduler,
    DiscreteScheduler,
    Outcome,
    WaitingTimeDistribution,
    is_steady,
    lyapunov,
    lyapunov_upper_bound,
    max_flips_bound,
    run_to_steady_state,
    step_continuous,
    step_discrete,
)
from schelling.grid import PLUS, Intolerance, SpinGrid, make_rng


def tau_for(grid, value):
    return Intolerance.from_value(value, grid.N)


def isolated_minus(h=8, w=1):
    g = SpinGrid.filled(h, w, PLUS)
    g.flip(g.origin)
    return g


def lyapunov_oracle(grid):
    total = 0
    L = grid.L
    for r in range(L):
        for c in range(L):
            s = grid.spins[r, c]
            for dy in range(-grid.w, grid.w + 1):
                for dx in range(-grid.w, grid.w + 1):
                    total += grid.spins[(r + dy) % L, (c + dx) % L] == s
    return int(total)


class TestSingleStep:
    def test_monochromatic_has_no_unstable_node(self):
        g = SpinGrid.filled(8, 1)
        tau = tau_for(g, "0.45")
        assert step_discrete(g, tau, make_rng(0)).outcome is Outcome.NO_UNSTABLE
        ev = step_continuous(g, tau, rng=make_rng(0))
        assert ev.outcome is Outcome.NO_UNSTABLE and ev.time is None

    def test_isolated_minus_flips(self):
        g = isolated_minus()
        tau = Intolerance(Fraction(4, 9), 9)
        s = DiscreteScheduler(g, tau, make_rng(1))
        assert s.members == [g.origin]
        ev = s.step()
        assert ev.outcome is Outcome.FLIPPED and ev.node == g.origin
        assert np.all(g.spins == PLUS)
        assert s.is_steady()

    def test_null_event_leaves_grid_unchanged(self):
        # at tau = 1 almost every node is unstable but only c <= 1 can be fixed by flipping
        g = SpinGrid.new_random(6, 1, 0.5, seed=8)
        s = DiscreteScheduler(g, Intolerance(Fraction(1), 9), make_rng(2))
        nulls = 0
        for _ in range(200):
            before = g.copy()
            ev = s.step()
            if ev.outcome is Outcome.NULL:
                nulls += 1
                assert g == before
                assert not g.is_flip_stabilizable(ev.node, s.tau)
        assert nulls > 0 and s.nulls == nulls

    def test_first_pick_uniform_over_unstable_set(self):
        g = SpinGrid.new_random(5, 1, 0.5, seed=31)
        tau = tau_for(g, "0.45")
        members = DiscreteScheduler(g.copy(), tau, make_rng(0)).members
        pos = {v: i for i, v in enumerate(members)}
        counts = np.zeros(len(members))
        for k in range(20_000):
            ev = DiscreteScheduler(g.copy(), tau, make_rng(k)).step()
            counts[pos[ev.node]] += 1
        assert stats.chisquare(counts).pvalue > 0.001

    def test_single_unstable_clock_is_exponential(self):
        g = isolated_minus()
        tau = Intolerance(Fraction(4, 9), 9)
        times = [ContinuousScheduler(g.copy(), tau, make_rng(k)).step().time for k in range(10_000)]
        assert stats.kstest(times, "expon").pvalue > 0.01


class TestLyapunov:
    def test_monochromatic_value(self):
        assert lyapunov(SpinGrid.filled(8, 1)) == 256 * 9 == 2304

    def test_isolated_minus_value(self):
        assert lyapunov(isolated_minus()) == 2288

    def test_matches_enumeration(self):
        g = SpinGrid.new_random(5, 1, 0.5, seed=6)
        assert lyapunov(g) == lyapunov_oracle(g)

    @pytest.mark.parametrize("kind", ["discrete", "continuous"])
    @pytest.mark.parametrize("tau_tilde", ["0.45", "0.55", "0.3", "0.7"])
    def test_strictly_increases_on_each_flip(self, kind, tau_tilde):
        g = SpinGrid.new_random(10, 1, 0.5, seed=3)
        tau = tau_for(g, tau_tilde)
        values = [lyapunov(g)]

        def record(ev):
            if ev.outcome is Outcome.FLIPPED:
                values.append(lyapunov(g))

        s = DiscreteScheduler(g, tau, make_rng(4)) if kind == "discrete" else ContinuousScheduler(g, tau, make_rng(4))
        s.run(5000, on_event=record)
        assert len(values) > 1
        assert all(b > a for a, b in zip(values, values[1:]))
        assert s.lyapunov == lyapunov(g)


class TestSteadyState:
    def test_monochromatic_takes_no_flips(self):
        g = SpinGrid.filled(8, 1)
        rep = run_to_steady_state(g, tau_for(g, "0.45"), rng=make_rng(0))
        assert rep.flips_executed == 0 and rep.reached_steady

    @pytest.mark.parametrize("w", [1, 2])
    @pytest.mark.parametrize("kind", ["discrete", "continuous"])
    def test_terminates_within_lyapunov_bound(self, w, kind):
        g = SpinGrid.new_random(12, w, 0.5, seed=w)
        rep = run_to_steady_state(g, tau_for(g, "0.45"), kind, rng=make_rng(5), check_lyapunov=True)
        assert rep.reached_steady
        assert rep.final_lyapunov <= lyapunov_upper_bound(g)
        assert rep.flips_executed <= max_flips_bound(g)
        assert is_steady(g, tau_for(g, "0.45"))

    def test_replay_is_deterministic(self):
        finals = []
        for _ in range(2):
            g = SpinGrid.new_random(16, 1, 0.5, seed=12)
            run_to_steady_state(g, tau_for(g, "0.4"), "discrete", rng=make_rng(99))
            finals.append(g)
        assert finals[0] == finals[1]

    def test_steady_grid_is_a_fixpoint(self):
        g = SpinGrid.new_random(16, 1, 0.5, seed=7)
        tau = tau_for(g, "0.45")
        s = DiscreteScheduler(g, tau, make_rng(1))
        assert s.run().reached_steady
        frozen = g.copy()
        extra = s.run(10_000)
        assert extra.flips_executed == 0 and g == frozen
        # the unstable-but-unstabilizable nodes still generate null events at tau > 1/2
        g2 = frozen.copy()
        s2 = DiscreteScheduler(g2, tau, make_rng(2))
        for _ in range(10_000):
            if s2.step().outcome is Outcome.NO_UNSTABLE:
                break
        assert g2 == frozen

    def test_mid_cascade_not_steady(self):
        g = isolated_minus()
        assert not is_steady(g, Intolerance(Fraction(4, 9), 9))

    def test_gamma_clocks_reach_steady(self):
        g = SpinGrid.new_random(10, 1, 0.5, seed=2)
        dist = WaitingTimeDistribution.gamma(2.0, 0.5)
        rep = run_to_steady_state(g, tau_for(g, "0.45"), "continuous", rng=make_rng(3), dist=dist)
        assert rep.reached_steady and rep.elapsed_time > 0

    def test_negative_budget_rejected(self):
        g = SpinGrid.filled(8, 1)
        with pytest.raises(ValueError):
            DiscreteScheduler(g, tau_for(g, "0.45")).run(-1)

    def test_mismatched_intolerance_rejected(self):
        g = SpinGrid.filled(8, 1)
        with pytest.raises(ValueError):
            DiscreteScheduler(g, Intolerance(Fraction(1, 2), 25))


class TestStateRestore:
    @pytest.mark.parametrize("cls", [DiscreteScheduler, ContinuousScheduler])
    def test_restore_continues_identically(self, cls):
        g = SpinGrid.new_random(16, 1, 0.5, seed=21)
        tau = tau_for(g, "0.45")
        a = cls(g, tau, make_rng(8))
        a.run(150)
        g2 = g.copy()
        b = cls.restore(g2, tau, a.state())
        ra, rb = a.run(10**6), b.run(10**6)
        assert g == g2
        assert (ra.steps_taken, ra.flips_executed) == (rb.steps_taken, rb.flips_executed)

    def test_restore_rejects_foreign_state(self):
        g = SpinGrid.new_random(16, 1, 0.5, seed=21)
        tau = tau_for(g, "0.45")
        st = DiscreteScheduler(g.copy(), tau, make_rng(0)).state()
        st["members"] = st["members"][:-1]
        with pytest.raises(ValueError):
            DiscreteScheduler.restore(g, tau, st)
