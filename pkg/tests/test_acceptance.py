"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v`` or directly with
``python3 tests/test_acceptance.py``. Each ``criterion_NN`` returns
``(ok, detail)`` and knows nothing about pytest.
"""

from __future__ import annotations

import csv
import io
import json
import math
import sys
import tempfile
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

sys.path.insert(0, str(Path(__file__).parent))

from oracles import closure_reachability, mono_bruteforce_all

from schelling.bounds import emit_curves, g_of_tau, p_affected_exact, tau_star
from schelling.dynamics import (
    ContinuousScheduler,
    DiscreteScheduler,
    Outcome,
    lyapunov,
    make_scheduler,
)
from schelling.fpp import passage_stats, simulate_growth
from schelling.grid import PLUS, Intolerance, SpinGrid, make_rng
from schelling.harness.config import ExperimentConfig
from schelling.harness.io import CheckpointError, checkpoint, resume
from schelling.harness.runner import run_config
from schelling.regions import (
    FirewallSpec,
    RadicalParams,
    cascade_closure,
    firewall_grid,
    mono_radii,
    monochromatic_region,
    sample_origin_cluster_radii,
    sample_radical_grid,
    static_firewall_stable,
    trigger_succeeds,
)

TAU = "0.45"


def tol_check(value, target, tol):
    return abs(value - target) <= tol


# 1 -------------------------------------------------------------------------


def criterion_01():
    t0 = time.perf_counter()
    g = SpinGrid.new_random(64, 3, 0.5, seed=1)
    nodes = make_rng(2).integers(g.size, size=100_000)
    for u in nodes.tolist():
        g.flip(u)
    same = np.array_equal(g.counts, g.recount_bruteforce())
    dt = time.perf_counter() - t0
    return same and dt < 10, f"counts==recount {same}, {dt:.2f}s (limit 10s)"


# 2 -------------------------------------------------------------------------


def lyapunov_run(tau_tilde, events, w=2, h=64):
    """Chain fresh random grids until ``events`` events are consumed."""
    seed, done, flips, bad = 0, 0, 0, 0
    while done < events:
        rng = make_rng(1000 + seed)
        g = SpinGrid.new_random(h, w, 0.5, rng)
        tau = Intolerance.from_value(tau_tilde, g.N)
        s = DiscreteScheduler(g, tau, rng)
        while done < events and s.n_active > 0:
            before = s.lyapunov
            ev = s.step()
            done += 1
            if ev.outcome is Outcome.FLIPPED:
                flips += 1
                bad += s.lyapunov <= before
            if done % 5000 == 0 and s.lyapunov != lyapunov(g):
                bad += 1
        bad += s.lyapunov != lyapunov(g)
        seed += 1
    return flips, bad, seed


def criterion_02():
    parts, ok = [], True
    for t in ("0.45", "0.55"):
        flips, bad, grids = lyapunov_run(t, 100_000)
        ok &= bad == 0 and flips > 0
        parts.append(f"tau~={t}: {flips} flips over {grids} grids, {bad} violations")
    return ok, "; ".join(parts)


# 3 -------------------------------------------------------------------------


def criterion_03():
    runs, extra = 0, 0
    for kind in ("discrete", "continuous"):
        for t in ("0.45", "0.55"):
            for w in (1, 2):
                for seed in range(3):
                    rng = make_rng(seed)
                    g = SpinGrid.new_random(24, w, 0.5, rng)
                    s = make_scheduler(g, Intolerance.from_value(t, g.N), kind, rng)
                    if not s.run(10**7).reached_steady:
                        return False, f"run {kind} {t} w={w} seed={seed} not steady"
                    runs += 1
                    for _ in range(10_000):
                        extra += s.step().outcome is Outcome.FLIPPED
    return extra == 0, f"{runs} steady runs, {extra} flips in 10^4 extra events each"


# 4 -------------------------------------------------------------------------


def first_flipped(cls, grid, tau, trials, seed0):
    out = np.zeros(grid.size, dtype=np.int64)
    for i in range(trials):
        s = cls(grid.copy(), tau, make_rng(seed0 + i))
        while True:
            ev = s.step()
            if ev.outcome is Outcome.FLIPPED:
                out[ev.node] += 1
                break
    return out


def criterion_04(trials=100_000):
    g = SpinGrid.new_random(8, 1, 0.5, seed=2024)
    tau = Intolerance.from_value(TAU, g.N)
    a = first_flipped(DiscreteScheduler, g, tau, trials, 0)
    b = first_flipped(ContinuousScheduler, g, tau, trials, 10**7)
    keep = (a + b) > 0
    p = stats.chi2_contingency(np.vstack([a[keep], b[keep]]))[1]
    return p > 0.01, f"{int(keep.sum())} nodes, chi-square p={p:.4f} (need >0.01)"


# 5 -------------------------------------------------------------------------


def criterion_05():
    t0 = time.perf_counter()
    t = tau_star()
    dt = time.perf_counter() - t0
    ok = tol_check(t, 0.433, 0.001) and tol_check(1 - t, 0.567, 0.001) and dt < 1
    return ok, f"tau*={t:.7f}, mirror={1 - t:.7f}, {dt:.3f}s"


# 6 -------------------------------------------------------------------------


def criterion_06():
    g_half = abs(g_of_tau(0.5))
    ts = tau_star()
    grid = np.arange(math.ceil(ts * 1e4) / 1e4, 0.5, 1e-4)
    gmax = max(g_of_tau(float(t)) for t in grid)
    return g_half <= 1e-12 and gmax < 0.265, f"|g(1/2)|={g_half:.1e}, max g={gmax:.5f} on {len(grid)} points"


# 7 -------------------------------------------------------------------------


def criterion_07():
    taus = [round(0.434 + k * 0.001, 12) for k in range(133)]
    rows = list(csv.DictReader(io.StringIO(emit_curves(taus))))
    tau = np.array([float(r["tau"]) for r in rows])
    a = np.array([float(r["a"]) for r in rows])
    b = np.array([float(r["b"]) for r in rows])
    below = bool(np.all(a <= b))
    lo = a[tau < 0.5]  # ascending tau, so a must fall toward 1/2
    hi = a[tau > 0.5]
    grows = bool(np.all(np.diff(lo) < 0) and np.all(np.diff(hi) > 0))
    return below and grows, f"{len(rows)} rows, a<=b {below}, a grows away from 1/2 {grows}"


# 8 -------------------------------------------------------------------------


def criterion_08():
    t0 = time.perf_counter()
    res = {N: p_affected_exact(N, Intolerance.from_value(TAU, N).tau).residual_bits for N in (25, 49, 81, 121)}
    dt = time.perf_counter() - t0
    ok = all(abs(r) <= 7 for r in res.values()) and dt < 1
    return ok, ", ".join(f"N={N}: {r:+.2f} bits" for N, r in res.items()) + f", {dt:.3f}s"


# 9 -------------------------------------------------------------------------


def criterion_09(samples=300):
    rng = make_rng(9)
    frac = {}
    for w in (6, 8, 10):
        N = (2 * w + 1) ** 2
        tau = Intolerance.from_value(TAU, N)
        params = RadicalParams(eps=0.1, eps_prime=g_of_tau(float(tau.tau)) + 0.02)
        hits = 0
        for _ in range(samples):
            g = sample_radical_grid(w, tau, params, rng)
            ok, n = trigger_succeeds(g, tau, g.origin)
            hits += ok and n <= (w + 1) ** 2
        frac[w] = hits / samples
    v = list(frac.values())
    ok = all(b >= a for a, b in zip(v, v[1:])) and frac[10] > 0.9
    return ok, ", ".join(f"w={w}: {f:.3f}" for w, f in frac.items()) + f" ({samples} samples each)"


# 10 ------------------------------------------------------------------------


def firewall_case(w, h, events=10_000, seed=0):
    spec = FirewallSpec((0, 0), w**3, w)
    g = firewall_grid(h, w, spec, PLUS)
    tau = Intolerance.from_value(TAU, g.N)
    static = static_firewall_stable(spec, tau)
    members = set(spec.members(g).tolist())
    hit = 0

    def watch(ev):
        nonlocal hit
        hit += ev.outcome is Outcome.FLIPPED and ev.node in members

    DiscreteScheduler(g, tau, make_rng(seed)).run(events, on_event=watch)
    return static, hit


def criterion_10():
    parts, ok = [], True
    for w, h in ((2, 16), (3, 40)):
        static, hit = firewall_case(w, h)
        ok &= static and hit == 0
        parts.append(f"w={w} r={w**3}: static {static}, annulus flips {hit}")
    return ok, "; ".join(parts)


# 11 ------------------------------------------------------------------------


def criterion_11():
    mism = 0
    nontrivial = 0
    for k in range(30):
        rng = make_rng(500 + k)
        g = SpinGrid.new_random(5, 1, float(rng.uniform(0.25, 0.6)), rng)
        tau = Intolerance.from_value(["0.40", "0.45", "0.55", "0.60"][k % 4], 9)
        r0, c0 = (int(x) for x in rng.integers(0, g.L, size=2))
        region = [((r0 + dr) % g.L, (c0 + dc) % g.L) for dr in range(3) for dc in range(4)]
        union, _ = closure_reachability(g.spins, 1, tau.threshold, region, PLUS)
        got, _ = cascade_closure(g.copy(), tau, [r * g.L + c for r, c in region], PLUS)
        mism += got != {r * g.L + c for r, c in union}
        nontrivial += len(union) > 0
    return mism == 0, f"30 instances (12-node regions), {nontrivial} with flips, {mism} mismatches"


# 12 ------------------------------------------------------------------------


def patchy_grid(rng, patch, noise, h=16):
    L = 2 * h
    coarse = rng.choice([-1, 1], size=(L // patch, L // patch))
    s = np.kron(coarse, np.ones((patch, patch), dtype=int))
    s = np.where(rng.random((L, L)) < noise, -s, s)
    s = np.roll(s, tuple(int(x) for x in rng.integers(0, L, size=2)), axis=(0, 1))
    return SpinGrid(h, 1, s.astype(np.int8))


def criterion_12():
    rng = make_rng(12)
    bad = 0
    biggest = 0
    for k in range(20):
        patch = (1, 2, 4, 8, 16)[k % 5]
        g = patchy_grid(rng, patch, 0.03 if patch > 1 else 0.0)
        best, cx, cy = mono_bruteforce_all(g.spins)
        radii = mono_radii(g)
        for u in range(g.size):
            r, c = divmod(u, g.L)
            rho, size, center = monochromatic_region(g, u, radii)
            bad += (rho, size, center) != (best[r, c], (2 * best[r, c] + 1) ** 2, (cx[r, c], cy[r, c]))
        biggest = max(biggest, int(best.max()))
    return bad == 0, f"20 grids x 1024 nodes, largest radius {biggest}, {bad} mismatches"


# 13 ------------------------------------------------------------------------


def criterion_13(seeds=20, h=128):
    means = {}
    for w in (1, 2, 3, 4):
        sizes = []
        for seed in range(seeds):
            rng = make_rng(seed)
            g = SpinGrid.new_random(h, w, 0.5, rng)
            DiscreteScheduler(g, Intolerance.from_value(TAU, g.N), rng).run(10**9)
            sizes.append(monochromatic_region(g, g.origin)[1])
        means[w] = float(np.mean(sizes))
    v = list(means.values())
    ok = all(b > a for a, b in zip(v, v[1:]))
    return ok, ", ".join(f"w={w}: {m:.1f}" for w, m in means.items())


# 14 ------------------------------------------------------------------------


def tail_is_log_linear(p):
    """Positive, strictly decreasing, and a straight line in log p (R^2 >= 0.9)."""
    p = np.asarray(p, dtype=float)
    if np.any(p <= 0) or np.any(np.diff(p) >= 0):
        return False
    fit = stats.linregress(np.arange(1, len(p) + 1), np.log(p))
    return fit.slope < 0 and fit.rvalue**2 >= 0.9


def criterion_14(fields=1000):
    radii = sample_origin_cluster_radii(4, 0.1, 5, fields, 25, seed=14)
    p = [float((radii >= k).mean()) for k in (1, 2, 3, 4)]
    return tail_is_log_linear(p), f"{fields} fields, P(radius>=k) k=1..4: {p}, any bad block {bool((radii >= 0).any())}"


# 15 ------------------------------------------------------------------------


def criterion_15(seeds=200):
    dists = (10, 20, 40, 80)
    recs = []
    for s in range(seeds):
        recs += simulate_growth(1, [(d, 0) for d in dists], seed=s)
    st = passage_stats(recs)
    means = [st[(d, 0)][0] for d in dists]
    cov20, cov80 = st[(20, 0)][2], st[(80, 0)][2]
    r2 = stats.linregress(dists, means).rvalue ** 2
    return cov80 < cov20 and r2 > 0.99, f"CoV d=20 {cov20:.4f}, d=80 {cov80:.4f}, R^2={r2:.5f}"


# 16 ------------------------------------------------------------------------


def tree_equal(a: Path, b: Path) -> bool:
    fa = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    fb = sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    return fa == fb and all((a / f).read_bytes() == (b / f).read_bytes() for f in fa)


def sim_cfg(out, **kw):
    cfg = ExperimentConfig(mode="simulate", h=16, w=1, tau_tilde=Fraction(9, 20), seed=1, output_dir=out)
    for k, v in kw.items():
        setattr(cfg, k, v)
    return cfg


def criterion_16():
    checks = {}
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        run_config(sim_cfg(tmp / "a", snapshot_every=100, checkpoint_every=100))
        run_config(sim_cfg(tmp / "b", snapshot_every=100, checkpoint_every=100))
        checks["rerun"] = tree_equal(tmp / "a", tmp / "b") and (tmp / "a" / "replica_0000" / "final.snap").exists()

        run_config(ExperimentConfig(mode="bounds", output_dir=tmp / "bounds"))
        with open(tmp / "bounds" / "curves.csv") as fh:
            rows = list(csv.DictReader(fh))
        checks["bounds a<=b"] = bool(rows) and all(float(r["a"]) <= float(r["b"]) for r in rows)

        run_config(sim_cfg(tmp / "seq", h=20, replicas=8, workers=1))
        run_config(sim_cfg(tmp / "par", h=20, replicas=8, workers=4))
        checks["parallel"] = tree_equal(tmp / "seq", tmp / "par")

        def start():
            rng = make_rng(17)
            g = SpinGrid.new_random(128, 1, 0.5, rng)
            return g, DiscreteScheduler(g, Intolerance.from_value(TAU, g.N), rng)

        g_ref, s_ref = start()
        s_ref.run(10_000)
        g, s = start()
        s.run(1_000)
        ck = checkpoint(g, s, tmp / "ck.json")
        g2, s2, extra = resume(ck)
        checkpoint(g2, s2, tmp / "ck2.json", extra=extra)
        checks["idempotent"] = ck.read_bytes() == (tmp / "ck2.json").read_bytes()
        s2.run(10_000 - s2.steps)
        checks["replay 10^3->10^4"] = (
            s_ref.steps == 10_000 and g2 == g_ref and (s2.flips, s2.lyapunov) == (s_ref.flips, s_ref.lyapunov)
        )

        doc = json.loads(ck.read_text())
        doc["payload"]["scheduler"]["steps"] += 1
        ck.write_text(json.dumps(doc))
        try:
            resume(ck)
            checks["corrupt rejected"] = False
        except CheckpointError:
            checks["corrupt rejected"] = True
    return all(checks.values()), ", ".join(f"{k} {v}" for k, v in checks.items())


CRITERIA = {int(name[-2:]): fn for name, fn in sorted(globals().items()) if name.startswith("criterion_")}


def report(n, ok, detail):
    return f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"


@pytest.mark.parametrize("n", sorted(CRITERIA))
def test_criterion(n, capsys):
    ok, detail = CRITERIA[n]()
    with capsys.disabled():
        print("\n" + report(n, ok, detail))
    assert ok, report(n, ok, detail)


if __name__ == "__main__":
    failed = 0
    for n in sorted(CRITERIA):
        ok, detail = CRITERIA[n]()
        failed += not ok
        print(report(n, ok, detail), flush=True)
    sys.exit(1 if failed else 0)
