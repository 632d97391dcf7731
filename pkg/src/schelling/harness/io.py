"""Snapshot, checkpoint and metrics file formats."""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import astuple, dataclass, fields
from fractions import Fraction
from pathlib import Path

import numpy as np

from ..dynamics import ContinuousScheduler, DiscreteScheduler
from ..grid import Intolerance, SpinGrid

SNAPSHOT_MAGIC = "SCHELLING v1"
CHECKPOINT_FORMAT = "SCHELLING-CHECKPOINT"
CHECKPOINT_VERSION = 1


class SnapshotError(ValueError):
    pass


class CheckpointError(ValueError):
    pass


@dataclass
class Snapshot:
    grid: SpinGrid
    tau: Intolerance
    step: int


def _rows(grid: SpinGrid) -> list[str]:
    table = np.where(grid.spins == 1, "+", "-")
    return ["".join(r) for r in table]


def format_snapshot(grid: SpinGrid, tau: Intolerance, step: int = 0) -> str:
    t = tau.tau
    head = f"h={grid.h} w={grid.w} tau={t.numerator}/{t.denominator} step={step}"
    return "\n".join([SNAPSHOT_MAGIC, head, *_rows(grid)]) + "\n"


def write_snapshot(grid: SpinGrid, tau: Intolerance, step: int, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="\n") as fh:
        fh.write(format_snapshot(grid, tau, step))
    return path


def _parse_header(line: str, lineno: int) -> dict:
    out = {}
    for part in line.split():
        if "=" not in part:
            raise SnapshotError(f"line {lineno}: malformed header field {part!r}")
        k, v = part.split("=", 1)
        out[k] = v
    missing = {"h", "w", "tau", "step"} - set(out)
    if missing:
        raise SnapshotError(f"line {lineno}: header lacks {', '.join(sorted(missing))}")
    try:
        return {"h": int(out["h"]), "w": int(out["w"]), "tau": Fraction(out["tau"]), "step": int(out["step"])}
    except (ValueError, ZeroDivisionError) as exc:
        raise SnapshotError(f"line {lineno}: malformed header value ({exc})") from None


def parse_snapshot(text: str) -> Snapshot:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or lines[0] != SNAPSHOT_MAGIC:
        raise SnapshotError(f"line 1: expected {SNAPSHOT_MAGIC!r}")
    if len(lines) < 2:
        raise SnapshotError("line 2: missing header")
    hdr = _parse_header(lines[1], 2)
    L = 2 * hdr["h"]
    rows = lines[2:]
    spins = np.empty((L, L), dtype=np.int8)
    for i in range(L):
        lineno = i + 3
        if i >= len(rows):
            raise SnapshotError(f"line {lineno}: file truncated, expected {L} rows")
        row = rows[i]
        if len(row) != L:
            raise SnapshotError(f"line {lineno}: expected {L} characters, got {len(row)}")
        bad = set(row) - {"+", "-"}
        if bad:
            raise SnapshotError(f"line {lineno}: illegal character {sorted(bad)[0]!r}")
        spins[i] = np.frombuffer(row.encode(), dtype=np.uint8) == ord("+")
    if len(rows) > L:
        raise SnapshotError(f"line {L + 3}: unexpected trailing content")
    spins = np.where(spins == 1, 1, -1).astype(np.int8)
    try:
        grid = SpinGrid(hdr["h"], hdr["w"], spins)
    except ValueError as exc:
        raise SnapshotError(f"line 2: {exc}") from None
    return Snapshot(grid, Intolerance(hdr["tau"], grid.N), hdr["step"])


def read_snapshot(path) -> Snapshot:
    return parse_snapshot(Path(path).read_text())


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, np.ndarray):
        return {"__ndarray__": [int(x) for x in obj.tolist()], "dtype": str(obj.dtype)}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _from_jsonable(obj):
    if isinstance(obj, dict):
        if "__ndarray__" in obj:
            return np.array(obj["__ndarray__"], dtype=obj["dtype"])
        return {k: _from_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_from_jsonable(v) for v in obj]
    return obj


def checkpoint(grid: SpinGrid, scheduler, path, extra: dict | None = None) -> Path:
    """Write grid, intolerance and full scheduler state (RNG included) as checksummed JSON."""
    tau = scheduler.tau
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "h": grid.h,
        "w": grid.w,
        "tau_tilde": str(tau.tau_tilde),
        "spins": _rows(grid),
        "scheduler": _jsonable(scheduler.state()),
        "extra": extra or {},
    }
    body = json.dumps(payload, sort_keys=True)
    digest = hashlib.sha256(body.encode()).hexdigest()
    path = Path(path)
    path.write_text(json.dumps({"sha256": digest, "payload": payload}, sort_keys=True) + "\n")
    return path


def resume(path, dist=None):
    """Rebuild ``(grid, scheduler, extra)`` from a checkpoint file."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
        payload = doc["payload"]
        digest = doc["sha256"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise CheckpointError(f"{path}: corrupted checkpoint ({exc})") from None
    if hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest() != digest:
        raise CheckpointError(f"{path}: checksum mismatch")
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path}: not a checkpoint file")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {payload.get('version')}")
    try:
        rows = payload["spins"]
        spins = np.array([[1 if c == "+" else -1 for c in r] for r in rows], dtype=np.int8)
        grid = SpinGrid(payload["h"], payload["w"], spins)
        tau = Intolerance(Fraction(payload["tau_tilde"]), grid.N)
        state = _from_jsonable(payload["scheduler"])
        kind = state["kind"]
        if kind == "discrete":
            sched = DiscreteScheduler.restore(grid, tau, state)
        elif kind == "continuous":
            sched = ContinuousScheduler.restore(grid, tau, state, *(() if dist is None else (dist,)))
    except (KeyError, ValueError, TypeError) as exc:
        raise CheckpointError(f"{path}: inconsistent checkpoint ({exc})") from None
    if kind not in ("discrete", "continuous"):
        raise CheckpointError(f"{path}: unknown scheduler kind {kind!r}")
    return grid, sched, payload.get("extra", {})


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


@dataclass
class MetricsRow:
    replica: int
    seed: int
    step: int
    flips: int
    null_events: int
    lyapunov: int
    unstable_count: int
    mono_radius_origin: int
    mono_size_origin: int
    steady: bool

    def __post_init__(self):
        assert self.mono_size_origin == (2 * self.mono_radius_origin + 1) ** 2


METRICS_HEADER = [f.name for f in fields(MetricsRow)]


def write_metrics(rows, path, header_prefix=()) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow([*header_prefix, *METRICS_HEADER])
        for r in rows:
            prefix, row = r if isinstance(r, tuple) else ((), r)
            wr.writerow([*prefix, *(str(v).lower() if isinstance(v, bool) else v for v in astuple(row))])
    return path
