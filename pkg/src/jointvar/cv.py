"""Penalty selection by cross-validated one-step forecast error.

Two schemes are provided: blocked folds (each subject's series is cut into F
contiguous blocks; one block per round is held out from every subject) and a
rolling window (refit on a trailing window at each time origin and score the
next observation). Both aggregate mean squared forecast error per entry over
subjects and held-out points and pick the penalty cell with the smallest
value, breaking ties toward the sparser cell (larger lambda1, then larger
lambda2).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .solver import (
    DivergenceError,
    EffectsDecomposition,
    LambdaGrid,
    MultiVarProblem,
    SolverConfig,
    fista_solve,
)
from .var_core import MultiSubjectSeries, RegressionForm

if TYPE_CHECKING:  # pragma: no cover
    from .weights import AdaptiveWeights


@dataclass(frozen=True)
class FoldPlan:
    """Per-subject contiguous index blocks partitioning each series.

    ``blocks[k]`` is a list of (start, stop) pairs for subject k; the scheme
    is "blocked" or "rolling" (``horizon`` applies to rolling only).
    """

    blocks: tuple[tuple[tuple[int, int], ...], ...]
    scheme: str = "blocked"
    horizon: int = 1

    def __post_init__(self) -> None:
        if self.scheme not in ("blocked", "rolling"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        for subj in self.blocks:
            pos = 0
            for start, stop in subj:
                if start != pos or stop <= start:
                    raise ValueError("blocks must be contiguous, disjoint, covering")
                pos = stop

    @property
    def n_folds(self) -> int:
        return len(self.blocks[0])


@dataclass(frozen=True)
class CvTable:
    """Forecast error per grid cell: cellwise mean over subjects and folds,
    the per-subject breakdown, and the selected (i, j) cell."""

    lambda1: np.ndarray
    lambda2_scale: np.ndarray
    msfe: np.ndarray
    msfe_by_subject: np.ndarray
    selected: tuple[int, int]
    failures: dict[tuple[int, int], str]

    @property
    def selected_lambda1(self) -> float:
        return float(self.lambda1[self.selected[0]])

    @property
    def selected_lambda2_scale(self) -> float:
        return float(self.lambda2_scale[self.selected[1]])

    @property
    def selected_msfe(self) -> float:
        return float(self.msfe[self.selected])

    def to_csv(self, path) -> None:
        """One row per grid cell: indices, penalty values, aggregate MSFE,
        per-subject MSFE columns."""
        k = self.msfe_by_subject.shape[2]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["cell_i", "cell_j", "lambda1", "lambda2_scale", "selected", "msfe"]
                + [f"msfe_subj{i + 1}" for i in range(k)]
            )
            for i in range(self.lambda1.size):
                for j in range(self.lambda2_scale.size):
                    writer.writerow(
                        [
                            i,
                            j,
                            repr(float(self.lambda1[i])),
                            repr(float(self.lambda2_scale[j])),
                            int((i, j) == self.selected),
                            repr(float(self.msfe[i, j])),
                        ]
                        + [repr(float(v)) for v in self.msfe_by_subject[i, j]]
                    )


@dataclass(frozen=True)
class CvSelection:
    """Outcome of a CV run: the score table plus the full-data refit at the
    selected cell."""

    table: CvTable
    decomposition: EffectsDecomposition
    plan: FoldPlan | None = None


def make_blocked_folds(
    t_lens: Sequence[int], f: int, p: int = 1
) -> FoldPlan:
    """Split each subject's 1..T into F contiguous blocks whose sizes differ
    by at most one (earlier blocks take the remainder). No shuffling: blocks
    are temporal segments."""
    if f < 2:
        raise ValueError("need at least 2 folds")
    blocks = []
    for t_len in t_lens:
        if t_len < f * (p + 2):
            raise ValueError(
                f"series of length {t_len} is too short for {f} folds "
                f"at lag order {p} (need at least {f * (p + 2)})"
            )
        base = t_len // f
        extra = t_len % f
        subj = []
        pos = 0
        for i in range(f):
            size = base + (1 if i < extra else 0)
            subj.append((pos, pos + size))
            pos += size
        blocks.append(tuple(subj))
    return FoldPlan(blocks=tuple(blocks), scheme="blocked")


def forecast_msfe(
    phi: np.ndarray, block: np.ndarray, context: np.ndarray | None = None
) -> float:
    """Mean squared one-step forecast error over a held-out block.

    Predictions use the observed lags (from ``context``, the data immediately
    preceding the block, then from within the block itself). Block points
    without enough observed history are skipped and the divisor adjusted.
    """
    phi = np.asarray(phi, dtype=float)
    block = np.asarray(block, dtype=float)
    d = phi.shape[0]
    if phi.ndim != 2 or phi.shape[1] % d != 0:
        raise ValueError(f"phi shape {phi.shape} is not d x (d*p)")
    p = phi.shape[1] // d
    if block.ndim != 2 or block.shape[0] != d:
        raise ValueError(f"block shape {block.shape} does not match d={d}")
    if context is None:
        ctx = np.empty((d, 0))
    else:
        ctx = np.asarray(context, dtype=float)[:, -p:]
    c = ctx.shape[1]
    full = np.hstack([ctx, block])
    t0 = max(p, c)
    if full.shape[1] <= t0:
        raise ValueError("no block point has enough observed history to score")
    targets = full[:, t0:]
    z = np.vstack([full[:, t0 - lag : full.shape[1] - lag] for lag in range(1, p + 1)])
    err = targets - phi @ z
    return float(np.mean(err * err))


def _segment_forms(x: np.ndarray, exclude: tuple[int, int], p: int) -> list[RegressionForm]:
    """Regression forms for the contiguous pieces of ``x`` left after removing
    columns [start, stop); pieces shorter than p+1 contribute nothing."""
    start, stop = exclude
    forms = []
    for seg in (x[:, :start], x[:, stop:]):
        t_len = seg.shape[1]
        if t_len >= p + 1:
            y = seg[:, p:]
            z = np.vstack([seg[:, p - lag : t_len - lag] for lag in range(1, p + 1)])
            forms.append(RegressionForm(y=y, z=z))
    return forms


def _select_cell(msfe: np.ndarray) -> tuple[int, int]:
    """Minimum-MSFE cell; on ties the scan order (lambda1 descending, then
    lambda2 descending) keeps the sparser cell."""
    best = None
    best_val = np.inf
    n1, n2 = msfe.shape
    for i in range(n1):
        for j in range(n2):
            v = msfe[i, j]
            if np.isfinite(v) and v < best_val:
                best_val = v
                best = (i, j)
    if best is None:
        raise RuntimeError("every grid cell failed during cross-validation")
    return best


def _fit_fold_path(
    problem: MultiVarProblem,
    grid: LambdaGrid,
    weights,
    cfg: SolverConfig,
    failures: dict[tuple[int, int], str],
    warm_cache: dict[tuple[int, int], EffectsDecomposition] | None = None,
) -> dict[tuple[int, int], EffectsDecomposition]:
    """Warm-started sweep over all grid cells on one training problem; cells
    whose solve fails are recorded in ``failures`` and skipped."""
    n1, n2 = grid.shape
    out: dict[tuple[int, int], EffectsDecomposition] = {}
    for i in range(n1):
        for j in range(n2):
            warm = None
            if warm_cache is not None:
                warm = warm_cache.get((i, j))
            if warm is None:
                if j > 0 and (i, j - 1) in out:
                    warm = out[(i, j - 1)]
                elif i > 0 and (i - 1, 0) in out:
                    warm = out[(i - 1, 0)]
            try:
                dec, _ = fista_solve(problem, grid.penalty(i, j, weights), cfg, warm)
            except DivergenceError as exc:
                failures.setdefault((i, j), str(exc))
                continue
            out[(i, j)] = dec
    return out


def bcv_select(
    data: MultiSubjectSeries,
    p: int,
    grid: LambdaGrid,
    weights: "AdaptiveWeights | None" = None,
    cfg: SolverConfig | None = None,
    plan: FoldPlan | None = None,
    folds: int = 10,
) -> CvSelection:
    """Blocked cross-validation over the penalty grid.

    For each fold, the model is fit on every subject's remaining blocks and
    each subject's held-out block is forecast one step ahead with that
    subject's fitted total transition matrix. After scoring all cells the
    minimizer is refit on the full data.
    """
    cfg = cfg or SolverConfig()
    if plan is None:
        plan = make_blocked_folds(data.t_lens, folds, p)
    if plan.scheme != "blocked":
        raise ValueError("bcv_select requires a blocked fold plan")
    n1, n2 = grid.shape
    k = data.k
    f = plan.n_folds
    sq_err = np.zeros((n1, n2, k))
    counts = np.zeros((n1, n2, k))
    failures: dict[tuple[int, int], str] = {}

    for fold in range(f):
        subject_forms = []
        for s_idx, subj in enumerate(data):
            block = plan.blocks[s_idx][fold]
            forms = _segment_forms(subj.data, block, p)
            if not forms:
                raise ValueError(
                    f"fold {fold} leaves no usable training data for subject "
                    f"{subj.subject_id!r}"
                )
            subject_forms.append(forms)
        train = MultiVarProblem.from_forms(subject_forms, p)
        sols = _fit_fold_path(train, grid, weights, cfg, failures)
        for (i, j), dec in sols.items():
            totals = dec.totals
            for s_idx, subj in enumerate(data):
                start, stop = plan.blocks[s_idx][fold]
                ctx = subj.data[:, max(0, start - p) : start] if start > 0 else None
                msfe = forecast_msfe(totals[s_idx], subj.data[:, start:stop], ctx)
                sq_err[i, j, s_idx] += msfe
                counts[i, j, s_idx] += 1.0

    by_subject = np.where(counts > 0, sq_err / np.maximum(counts, 1.0), np.inf)
    valid = counts.min(axis=2) == f
    msfe = np.where(valid, by_subject.mean(axis=2), np.inf)
    for cell in zip(*np.nonzero(~valid)):
        failures.setdefault(tuple(int(c) for c in cell), "missing fold fit")

    selected = _select_cell(msfe)
    full = MultiVarProblem.from_series(data, p)
    final, _ = fista_solve(full, grid.penalty(*selected, weights), cfg)
    table = CvTable(
        lambda1=grid.lambda1,
        lambda2_scale=grid.lambda2_scale,
        msfe=msfe,
        msfe_by_subject=by_subject,
        selected=selected,
        failures=failures,
    )
    return CvSelection(table=table, decomposition=final, plan=plan)


def rwcv_select(
    data: MultiSubjectSeries,
    p: int,
    grid: LambdaGrid,
    weights: "AdaptiveWeights | None" = None,
    cfg: SolverConfig | None = None,
    window: int | None = None,
) -> CvSelection:
    """Rolling-window cross-validation: at each origin t (shared across
    subjects, from ``window`` to min T - 1) fit on each subject's trailing
    window and score the one-step forecast of observation t. Warm starts are
    carried across origins per cell."""
    cfg = cfg or SolverConfig()
    min_t = min(data.t_lens)
    if window is None:
        window = min_t // 2
    if window < p + 2:
        raise ValueError(f"window must be at least p+2={p + 2}, got {window}")
    if window >= min_t:
        raise ValueError(f"window {window} must be below the shortest series ({min_t})")
    n1, n2 = grid.shape
    k = data.k
    sq_err = np.zeros((n1, n2, k))
    n_origins = 0
    failures: dict[tuple[int, int], str] = {}
    missing: dict[tuple[int, int], bool] = {}
    warm_cache: dict[tuple[int, int], EffectsDecomposition] = {}

    for origin in range(window, min_t):
        n_origins += 1
        subject_forms = []
        for subj in data:
            seg = subj.data[:, origin - window : origin]
            y = seg[:, p:]
            z = np.vstack(
                [seg[:, p - lag : window - lag] for lag in range(1, p + 1)]
            )
            subject_forms.append(RegressionForm(y=y, z=z))
        train = MultiVarProblem.from_forms(subject_forms, p)
        sols = _fit_fold_path(train, grid, weights, cfg, failures, warm_cache)
        warm_cache = sols
        for i in range(n1):
            for j in range(n2):
                if (i, j) not in sols:
                    missing[(i, j)] = True
                    continue
                totals = sols[(i, j)].totals
                for s_idx, subj in enumerate(data):
                    lags = subj.data[:, origin - p : origin]
                    z = lags[:, ::-1].T.reshape(-1)
                    pred = totals[s_idx] @ z
                    err = subj.data[:, origin] - pred
                    sq_err[i, j, s_idx] += float(err @ err)

    by_subject = sq_err / (n_origins * data.d)
    msfe = by_subject.mean(axis=2)
    for cell in missing:
        msfe[cell] = np.inf
        by_subject[cell] = np.inf
        failures.setdefault(cell, "missing origin fit")

    selected = _select_cell(msfe)
    full = MultiVarProblem.from_series(data, p)
    final, _ = fista_solve(full, grid.penalty(*selected, weights), cfg)
    table = CvTable(
        lambda1=grid.lambda1,
        lambda2_scale=grid.lambda2_scale,
        msfe=msfe,
        msfe_by_subject=by_subject,
        selected=selected,
        failures=failures,
    )
    return CvSelection(table=table, decomposition=final, plan=None)
