"""CSV persistence of run records and percentile summaries."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bench import RunRecord


def csv_header(dim: int) -> list[str]:
    return (["seed", "iteration"] + [f"x_{i}" for i in range(dim)]
            + ["y", "best_y", "true_y", "cum_y", "acq", "stopped", "wall_ms"])


def _num(v) -> str:
    return "" if v is None else repr(float(v))


def write_records(path, streams) -> None:
    """Write per-seed record streams (lists of RunRecord) to one CSV file."""
    streams = [s for s in streams if s]
    dim = streams[0][0].x.size if streams else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(csv_header(dim))
        for stream in streams:
            for r in stream:
                w.writerow([r.seed, r.iteration, *map(_num, r.x), _num(r.y), _num(r.best_y),
                            _num(r.true_y), _num(r.cum_y), _num(r.acq), int(r.stopped),
                            f"{r.wall_ms:.3f}"])


def _opt(s: str):
    return None if s == "" else float(s)


def read_records(path) -> list[list[RunRecord]]:
    """Inverse of :func:`write_records`; streams are grouped by seed in file order."""
    streams: dict[int, list[RunRecord]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        dim = sum(1 for h in header if h.startswith("x_"))
        if header != csv_header(dim):
            raise ValueError(f"{path}: unexpected header {header}")
        for row in reader:
            seed = int(row[0])
            x = np.array([float(v) for v in row[2:2 + dim]])
            y, best, true_y, cum, acq, stopped, wall = row[2 + dim:]
            streams.setdefault(seed, []).append(RunRecord(
                seed, int(row[1]), x, float(y), float(best), _opt(true_y), float(cum), _opt(acq),
                stopped == "1", float(wall)))
    return list(streams.values())


@dataclass
class SummaryRow:
    task: str
    algo: str
    iteration: int
    n: int
    q25: float
    median: float
    q75: float
    median_stop: int | None


def percentiles(values) -> tuple[float, float, float]:
    """25th, 50th and 75th percentile with linear interpolation between order statistics."""
    q = np.percentile(np.asarray(values, dtype=float), [25, 50, 75], method="linear")
    return float(q[0]), float(q[1]), float(q[2])


def median_stopping(stop_iterations, n_seeds: int) -> int | None:
    """Smallest iteration by which at least half of the seeds had stopped."""
    stops = sorted(s for s in stop_iterations if s is not None)
    need = math.ceil(n_seeds / 2)
    if n_seeds == 0 or len(stops) < need:
        return None
    return stops[need - 1]


def best_curve(stream, length: int, metric: str = "best_y") -> np.ndarray:
    """Best-so-far per iteration, held at its last value after a run ends early."""
    if metric == "best_y":
        vals = np.array([r.best_y for r in stream])
    else:
        vals = np.minimum.accumulate(np.array([getattr(r, metric) for r in stream], dtype=float))
    out = np.full(length, vals[-1])
    out[: vals.size] = vals
    return out


def summarize(streams, task: str = "", algo: str = "", metric: str = "best_y") -> list[SummaryRow]:
    """Per-iteration quartiles of best-so-far across seeds, plus the median stopping iteration."""
    streams = [s for s in streams if s]
    if not streams:
        raise ValueError("no completed seeds to summarize")
    length = max(len(s) for s in streams)
    curves = np.stack([best_curve(s, length, metric) for s in streams])
    stops = [next((r.iteration for r in s if r.stopped), None) for s in streams]
    med_stop = median_stopping(stops, len(streams))
    rows = []
    for i in range(length):
        q25, med, q75 = percentiles(curves[:, i])
        rows.append(SummaryRow(task, algo, i + 1, len(streams), q25, med, q75, med_stop))
    return rows


SUMMARY_HEADER = ["task", "algo", "iteration", "n", "q25", "median", "q75", "median_stop"]


def write_summary(path, rows: list[SummaryRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_HEADER)
        for r in rows:
            w.writerow([r.task, r.algo, r.iteration, r.n, repr(r.q25), repr(r.median), repr(r.q75),
                        "" if r.median_stop is None else r.median_stop])


def split_stem(path) -> tuple[str, str]:
    """'<task>__<algo>.csv' -> (task, algo)."""
    stem = Path(path).stem
    task, _, algo = stem.partition("__")
    return task, algo or stem
