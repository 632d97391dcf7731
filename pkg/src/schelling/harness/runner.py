"""Mode dispatch and replica execution.

Every replica is a pure function of ``(config, replica seed)`` and writes only
inside its own directory, so a worker pool and a plain loop produce the same
files. Aggregate files are written by the parent after all replicas return,
in replica order.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import bounds, fpp
from ..dynamics import make_scheduler
from ..grid import Intolerance, SpinGrid, make_rng
from ..regions import monochromatic_region, sample_origin_cluster_radii
from .config import ExperimentConfig, replica_seed
from .io import MetricsRow, checkpoint, write_metrics, write_snapshot

# keys that change where or how fast outputs are produced, not what they contain
_NON_SEMANTIC = ("output_dir", "workers")


@dataclass(frozen=True)
class ReplicaTask:
    config: ExperimentConfig
    index: int
    seed: int
    directory: Path
    w: int
    tau_tilde: object


def _map(fn, tasks, workers):
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, tasks))
    return [fn(t) for t in tasks]


def _write_config(cfg: ExperimentConfig, out: Path):
    keep = [ln for ln in cfg.to_text().splitlines() if ln.split("=", 1)[0] not in _NON_SEMANTIC]
    (out / "config.txt").write_text("\n".join(keep) + "\n")


def _metrics(task: ReplicaTask, sched) -> MetricsRow:
    grid = sched.grid
    rho, size, _ = monochromatic_region(grid, grid.origin)
    return MetricsRow(
        replica=task.index,
        seed=task.seed,
        step=sched.steps,
        flips=sched.flips,
        null_events=sched.nulls,
        lyapunov=sched.lyapunov,
        unstable_count=sched.unstable_count,
        mono_radius_origin=rho,
        mono_size_origin=size,
        steady=sched.is_steady(),
    )


def simulate_replica(task: ReplicaTask) -> list[MetricsRow]:
    """Random start, dynamics until steady or ``max_events``; returns the metrics rows."""
    cfg = task.config
    out = task.directory
    out.mkdir(parents=True, exist_ok=True)
    rng = make_rng(task.seed)
    grid = SpinGrid.new_random(cfg.h, task.w, cfg.p_init, rng)
    tau = Intolerance.from_value(task.tau_tilde, grid.N)
    sched = make_scheduler(grid, tau, cfg.scheduler, rng)

    every = [k for k in (cfg.snapshot_every, cfg.checkpoint_every) if k > 0]
    rows = [_metrics(task, sched)]
    if cfg.snapshot_every:
        (out / "snapshots").mkdir(exist_ok=True)
        write_snapshot(grid, tau, 0, out / "snapshots" / f"step_{0:012d}.snap")
    if cfg.checkpoint_every:
        (out / "checkpoints").mkdir(exist_ok=True)

    while sched.steps < cfg.max_events and not sched.is_steady():
        limit = cfg.max_events - sched.steps
        for k in every:
            limit = min(limit, k - sched.steps % k)
        sched.run(limit)
        s = sched.steps
        if cfg.snapshot_every and s % cfg.snapshot_every == 0:
            write_snapshot(grid, tau, s, out / "snapshots" / f"step_{s:012d}.snap")
            rows.append(_metrics(task, sched))
        if cfg.checkpoint_every and s % cfg.checkpoint_every == 0:
            checkpoint(grid, sched, out / "checkpoints" / f"step_{s:012d}.json")

    if rows[-1].step != sched.steps or len(rows) == 1:
        rows.append(_metrics(task, sched))
    write_snapshot(grid, tau, sched.steps, out / "final.snap")
    write_metrics(rows, out / "metrics.csv")
    return rows


def _replica_tasks(cfg: ExperimentConfig, out: Path) -> list[ReplicaTask]:
    return [
        ReplicaTask(cfg, i, replica_seed(cfg.seed, i), out / f"replica_{i:04d}", cfg.w, cfg.tau_tilde)
        for i in range(cfg.replicas)
    ]


def run_simulate(cfg: ExperimentConfig, out: Path) -> list[list[MetricsRow]]:
    results = _map(simulate_replica, _replica_tasks(cfg, out), cfg.workers)
    write_metrics([r for rows in results for r in rows], out / "metrics.csv")
    return results


def _tau_label(t) -> str:
    return f"{t.numerator}-{t.denominator}"


def run_sweep(cfg: ExperimentConfig, out: Path):
    """Replicas over the ``w_list x tau_list`` product; replica seeds are numbered across cells."""
    cells = [(w, t) for w in (cfg.w_list or [cfg.w]) for t in (cfg.tau_list or [cfg.tau_tilde])]
    tasks = []
    for c, (w, t) in enumerate(cells):
        cell_dir = out / f"w{w}_tau{_tau_label(t)}"
        for i in range(cfg.replicas):
            k = c * cfg.replicas + i
            tasks.append(ReplicaTask(cfg, k, replica_seed(cfg.seed, k), cell_dir / f"replica_{k:04d}", w, t))
    results = _map(simulate_replica, tasks, cfg.workers)
    final = [((t.w, f"{t.tau_tilde.numerator}/{t.tau_tilde.denominator}"), rows[-1]) for t, rows in zip(tasks, results)]
    write_metrics(final, out / "sweep.csv", header_prefix=("w", "tau_tilde"))

    with open(out / "sweep_summary.csv", "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["w", "tau_tilde", "replicas", "mean_mono_size_origin", "steady_fraction"])
        for c, (w, t) in enumerate(cells):
            rows = [r for (_, r) in final[c * cfg.replicas:(c + 1) * cfg.replicas]]
            sizes = [r.mono_size_origin for r in rows]
            wr.writerow([w, f"{t.numerator}/{t.denominator}", len(rows),
                         repr(float(np.mean(sizes))), repr(sum(r.steady for r in rows) / len(rows))])
    return final


def bounds_grid(cfg: ExperimentConfig) -> list[float]:
    n = int(math.floor((cfg.tau_max - cfg.tau_min) / cfg.tau_step + 1e-9))
    return [round(cfg.tau_min + k * cfg.tau_step, 12) for k in range(n + 1)]


def run_bounds(cfg: ExperimentConfig, out: Path):
    with open(out / "curves.csv", "w", newline="") as fh:
        bounds.emit_curves(bounds_grid(cfg), cfg.epsilon, cfg.bounds_N, fh)
    ts = bounds.tau_star()
    summary = {"tau_star": ts, "tau_star_mirror": 1 - ts, "eps_for_tau_star": 1e-9}
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


def fpp_targets(cfg: ExperimentConfig) -> list[tuple[int, int]]:
    dx, dy = cfg.fpp_direction
    return [(d * dx, d * dy) for d in cfg.fpp_distances]


def fpp_replica(task: ReplicaTask):
    return fpp.simulate_growth(task.w, fpp_targets(task.config), seed=task.seed)


def run_fpp(cfg: ExperimentConfig, out: Path):
    tasks = _replica_tasks(cfg, out)
    records = [r for recs in _map(fpp_replica, tasks, cfg.workers) for r in recs]
    fpp.write_passage_csv(records, out / "passage.csv")
    if cfg.replicas < 2:
        return records, None
    stats = fpp.passage_stats(records)
    with open(out / "passage_stats.csv", "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["target_x", "target_y", "distance", "mean", "std", "cov"])
        for d, t in zip(cfg.fpp_distances, fpp_targets(cfg)):
            m, s, v = stats[t]
            wr.writerow([t[0], t[1], d, repr(m), repr(s), repr(v)])
    return records, stats


def percolation_replica(task: ReplicaTask) -> np.ndarray:
    cfg = task.config
    return sample_origin_cluster_radii(task.w, cfg.epsilon, cfg.block_side, cfg.fields, cfg.h, seed=task.seed)


def cluster_tail(radii: np.ndarray, kmax: int | None = None) -> list[tuple[int, int, float]]:
    """``(k, #{radius >= k}, fraction)`` for ``k = 0..kmax``."""
    radii = np.asarray(radii)
    if kmax is None:
        kmax = max(int(radii.max(initial=0)), 0)
    return [(k, int((radii >= k).sum()), float((radii >= k).mean())) for k in range(kmax + 1)]


def run_percolation(cfg: ExperimentConfig, out: Path):
    tasks = _replica_tasks(cfg, out)
    results = _map(percolation_replica, tasks, cfg.workers)
    with open(out / "radii.csv", "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["replica", "seed", "field", "radius"])
        for t, radii in zip(tasks, results):
            for j, r in enumerate(radii.tolist()):
                wr.writerow([t.index, t.seed, j, r])
    allr = np.concatenate(results)
    tail = cluster_tail(allr, max(4, int(allr.max(initial=0))))
    with open(out / "tail.csv", "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["k", "count", "probability"])
        for k, n, p in tail:
            wr.writerow([k, n, repr(p)])
    return allr


_MODES = {
    "simulate": run_simulate,
    "sweep": run_sweep,
    "bounds": run_bounds,
    "fpp": run_fpp,
    "percolation": run_percolation,
}


def run_config(cfg: ExperimentConfig):
    """Validate, create ``output_dir``, run the mode. Returns the mode's in-memory result."""
    cfg.validate()
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_config(cfg, out)
    return _MODES[cfg.mode](cfg, out)
