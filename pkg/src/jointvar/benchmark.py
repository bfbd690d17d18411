"""Monte Carlo benchmark harness: simulate, fit every requested method, and
score recovery against the generating truth.

Each (condition, T, replication) work item generates one dataset from a seed
derived deterministically from the base seed and the item coordinates, so
results do not depend on worker count or scheduling. Rows are sorted before
they are written.
"""

from __future__ import annotations

import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import metrics as m_mod
from .methods import METHODS, FitOptions, fit_method
from .simulator import CONDITIONS, HeterogeneitySpec, generate_dataset

WORKERS_ENV = "JOINTVAR_WORKERS"

METRIC_FIELDS = ("mcc", "sensitivity", "specificity", "bias", "rmse")
ROW_FIELDS = ("condition", "t", "method", "replication") + METRIC_FIELDS


@dataclass(frozen=True)
class BenchmarkConfig:
    conditions: tuple[str, ...]
    t_values: tuple[int, ...]
    methods: tuple[str, ...]
    replications: int
    seed: int = 0
    d: int = 10
    k: int = 15
    options: FitOptions = field(default_factory=FitOptions)
    workers: int = 1

    def __post_init__(self) -> None:
        if not self.conditions:
            raise ValueError("need at least one condition")
        if not self.t_values or any(t < 1 for t in self.t_values):
            raise ValueError("need at least one positive series length")
        if not self.methods:
            raise ValueError("need at least one method")
        for c in self.conditions:
            if c not in CONDITIONS:
                raise ValueError(f"unknown condition {c!r}")
        for m in self.methods:
            if m not in METHODS:
                raise ValueError(f"unknown method {m!r}")
        if self.replications < 1:
            raise ValueError("replication count must be >= 1")


def dataset_seed(base_seed: int, condition: str, t_len: int, rep: int) -> np.random.SeedSequence:
    """Deterministic per-dataset seed independent of scheduling: the base
    seed plus the item coordinates (condition index, T, replication)."""
    cond_idx = sorted(CONDITIONS).index(condition)
    return np.random.SeedSequence([int(base_seed), cond_idx, int(t_len), int(rep)])


def run_item(args) -> tuple[list[dict], list[dict]]:
    """One work item: simulate a dataset and fit every method on it.

    Returns (metric rows, failure records). Module-level so process pools can
    pickle it.
    """
    condition, t_len, rep, methods, base_seed, d, k, opts = args
    rows: list[dict] = []
    failures: list[dict] = []
    spec = HeterogeneitySpec.from_condition(condition, d=d, k=k)
    dataset = generate_dataset(spec, t_len, seed=dataset_seed(base_seed, condition, t_len, rep))
    for method in methods:
        try:
            fit = fit_method(dataset.series, p=1, method=method, opts=opts)
            report = m_mod.evaluate(dataset.true_models, fit.totals, fit.zero_tol)
        except Exception as exc:  # excluded from rows, surfaced in the summary
            failures.append(
                {
                    "condition": condition,
                    "t": t_len,
                    "method": method,
                    "replication": rep,
                    "reason": f"{type(exc).__name__}: {exc}",
                }
            )
            continue
        rows.append(
            {
                "condition": condition,
                "t": t_len,
                "method": method,
                "replication": rep,
                "mcc": report.mean_mcc,
                "sensitivity": report.mean_sensitivity,
                "specificity": report.mean_specificity,
                "bias": report.mean_abs_bias,
                "rmse": report.mean_rmse,
            }
        )
    return rows, failures


def default_workers() -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


def run_benchmark(config: BenchmarkConfig, log=None) -> tuple[list[dict], list[dict]]:
    """Run every (condition, T, replication) item, in parallel when asked.

    Returns (rows, failures), rows sorted by (condition, t, method,
    replication) so output is reproducible regardless of scheduling.
    """
    items = [
        (cond, t, rep, config.methods, config.seed, config.d, config.k, config.options)
        for cond in config.conditions
        for t in config.t_values
        for rep in range(config.replications)
    ]
    rows: list[dict] = []
    failures: list[dict] = []
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            for item_rows, item_failures in pool.map(run_item, items):
                rows.extend(item_rows)
                failures.extend(item_failures)
    else:
        for item in items:
            item_rows, item_failures = run_item(item)
            rows.extend(item_rows)
            failures.extend(item_failures)
    rows.sort(key=lambda r: (r["condition"], r["t"], r["method"], r["replication"]))
    failures.sort(key=lambda r: (r["condition"], r["t"], r["method"], r["replication"]))
    if failures and log is not False:
        stream = log or sys.stderr
        for f in failures:
            print(
                f"benchmark failure: condition={f['condition']} t={f['t']} "
                f"method={f['method']} rep={f['replication']}: {f['reason']}",
                file=stream,
            )
    return rows, failures


def summarize(rows: list[dict], failures: list[dict] | None = None) -> list[dict]:
    """Mean of every metric per (condition, t, method) cell plus counts."""
    cells: dict[tuple, list[dict]] = {}
    for r in rows:
        cells.setdefault((r["condition"], r["t"], r["method"]), []).append(r)
    fail_counts: dict[tuple, int] = {}
    for f in failures or []:
        key = (f["condition"], f["t"], f["method"])
        fail_counts[key] = fail_counts.get(key, 0) + 1
    out = []
    for key in sorted(set(cells) | set(fail_counts)):
        members = cells.get(key, [])
        row = {"condition": key[0], "t": key[1], "method": key[2], "n": len(members),
               "n_failed": fail_counts.get(key, 0)}
        for metric in METRIC_FIELDS:
            row[f"mean_{metric}"] = (
                float(np.mean([m[metric] for m in members])) if members else float("nan")
            )
        out.append(row)
    return out
