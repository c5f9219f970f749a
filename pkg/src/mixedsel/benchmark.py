"""Replicated selection benchmark on synthetic problems.

Each replication draws a problem from a :class:`SyntheticSpec` with seed
``seed0 + r``, tunes the regularizer with :func:`select_model` and scores
the selected support against the truth. Summaries report the median and
the 5th and 95th percentiles of every metric over successful replications.
"""
from __future__ import annotations

import csv
import io
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from mixedsel.errors import MixedSelError
from mixedsel.selection import BIC, InfoCriterion, refit_best, select_model
from mixedsel.simulation import SyntheticSpec, generate
from mixedsel.solvers.config import SolverConfig

METRICS = ("accuracy", "fe_accuracy", "re_accuracy", "f1", "fe_f1", "re_f1", "time", "iterations")


@dataclass(frozen=True)
class BenchmarkTask:
    solver: str
    reg: str
    seed: int
    ic: InfoCriterion = BIC
    cfg: SolverConfig = SolverConfig()
    lam_range: Optional[Tuple[float, float]] = None
    k_max: Optional[int] = None
    spec: Callable[[int], SyntheticSpec] = SyntheticSpec.gbd_synthetic


@dataclass
class ReplicationResult:
    """Outcome of one replication; ``error`` is set when the run failed.

    ``iterations`` is the iteration count of a cold refit at the selected
    hyperparameters and ``path_iterations`` that of the warm-started path
    entry. ``time`` covers the whole selection run.
    """

    solver: str
    reg: str
    seed: int
    metrics: Dict[str, float]
    hyper: Dict[str, float]
    path_iterations: int = 0
    converged: bool = True
    error: Optional[str] = None


def run_replication(task: BenchmarkTask) -> ReplicationResult:
    """Generates, selects, scores and refits one replication."""
    try:
        problem, truth = generate(task.spec(task.seed))
        start = time.perf_counter()
        report = select_model(problem, task.solver, task.reg, task.ic, task.lam_range,
                              k_max=task.k_max, cfg=task.cfg)
        elapsed = time.perf_counter() - start
        entry = report.best_entry
        if entry is None:
            raise MixedSelError("every fit on the path failed")
        report.score(truth)
        refit = refit_best(problem, report, task.solver, task.cfg)
        metrics = {k: v for k, v in report.metrics.as_dict().items() if k in METRICS}
        metrics["time"] = elapsed
        metrics["iterations"] = float(refit.iterations)
        return ReplicationResult(task.solver, task.reg, task.seed, metrics, dict(entry.hyper),
                                 entry.result.iterations, refit.converged)
    except (MixedSelError, ValueError, np.linalg.LinAlgError, FloatingPointError) as exc:
        return ReplicationResult(task.solver, task.reg, task.seed, {}, {}, error=f"{type(exc).__name__}: {exc}")


def run_tasks(tasks: Sequence[BenchmarkTask], threads: int = 1) -> List[ReplicationResult]:
    """Runs tasks in a pool of ``threads`` worker processes; results keep task order."""
    if threads < 1:
        raise ValueError("threads must be positive")
    if threads == 1 or len(tasks) <= 1:
        return [run_replication(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(run_replication, tasks))


@dataclass
class SummaryRow:
    solver: str
    reg: str
    n_ok: int
    n_failed: int
    median: Dict[str, float]
    p05: Dict[str, float]
    p95: Dict[str, float]
    mean: Dict[str, float]


def summarize(results: Sequence[ReplicationResult]) -> List[SummaryRow]:
    """One row per (solver, regularizer) in order of first appearance."""
    keys: List[Tuple[str, str]] = []
    for r in results:
        if (r.solver, r.reg) not in keys:
            keys.append((r.solver, r.reg))
    rows = []
    for solver, reg in keys:
        group = [r for r in results if (r.solver, r.reg) == (solver, reg)]
        ok = [r for r in group if r.error is None]
        stats = {name: {} for name in ("median", "p05", "p95", "mean")}
        for m in METRICS:
            values = np.array([r.metrics[m] for r in ok], dtype=float)
            values = values[np.isfinite(values)]
            empty = values.size == 0
            stats["median"][m] = np.nan if empty else float(np.median(values))
            stats["p05"][m] = np.nan if empty else float(np.percentile(values, 5))
            stats["p95"][m] = np.nan if empty else float(np.percentile(values, 95))
            stats["mean"][m] = np.nan if empty else float(np.mean(values))
        rows.append(SummaryRow(solver, reg, len(ok), len(group) - len(ok), **stats))
    return rows


def benchmark(solvers: Sequence[str], regs: Sequence[str], replications: int, seed0: int = 0,
              threads: int = 1, **task_options) -> Tuple[List[SummaryRow], List[ReplicationResult]]:
    """Runs ``replications`` seeds for every solver × regularizer pair.

    The same seeds are used for every pair, so rows are paired comparisons.
    """
    if replications < 1:
        raise ValueError("replications must be positive")
    tasks = [BenchmarkTask(s, g, seed0 + r, **task_options)
             for s in solvers for g in regs for r in range(replications)]
    results = run_tasks(tasks, threads)
    return summarize(results), results


def summary_csv(rows: Sequence[SummaryRow], include_time: bool = True) -> str:
    """CSV text: solver, reg, n_ok, n_failed, then median/p05/p95 per metric."""
    metrics = [m for m in METRICS if include_time or m != "time"]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["solver", "reg", "n_ok", "n_failed"]
                    + [f"{m}_{s}" for m in metrics for s in ("median", "p05", "p95")])
    for r in rows:
        writer.writerow([r.solver, r.reg, r.n_ok, r.n_failed]
                        + [repr(getattr(r, s)[m]) for m in metrics for s in ("median", "p05", "p95")])
    return buf.getvalue()


def _cell(row: SummaryRow, m: str) -> str:
    med, lo, hi = row.median[m], row.p05[m], row.p95[m]
    if not np.isfinite(med):
        return "-"
    if m in ("time", "iterations"):
        fmt = "{:.2f}" if m == "time" else "{:.0f}"
        return f"{fmt.format(med)} ({fmt.format(lo)}-{fmt.format(hi)})"
    return f"{100 * med:.0f} ({100 * lo:.0f}-{100 * hi:.0f})"


def summary_table(rows: Sequence[SummaryRow]) -> str:
    """Fixed-width text table; scores are percentages, "median (p5-p95)"."""
    header = ["solver", "reg", "ok", "failed"] + list(METRICS)
    body = [[r.solver, r.reg, str(r.n_ok), str(r.n_failed)] + [_cell(r, m) for m in METRICS] for r in rows]
    widths = [max(len(line[j]) for line in [header] + body) for j in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(line, widths)).rstrip() for line in [header] + body]
    return "\n".join(lines) + "\n"


def replications_csv(results: Sequence[ReplicationResult]) -> str:
    """Per-replication CSV for downstream plotting."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["solver", "reg", "seed", "hyper"] + list(METRICS) + ["path_iterations", "converged", "error"])
    for r in results:
        hyper = ";".join(f"{k}={v!r}" for k, v in r.hyper.items())
        writer.writerow([r.solver, r.reg, r.seed, hyper] + [repr(r.metrics.get(m, np.nan)) for m in METRICS]
                        + [r.path_iterations, r.converged, r.error or ""])
    return buf.getvalue()

