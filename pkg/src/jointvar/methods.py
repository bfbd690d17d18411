"""Method roster: joint estimators and per-subject (K=1) baselines.

Every method consumes centered multi-subject data and produces per-subject
total transition matrices; joint methods additionally produce the common and
unique blocks and a cross-validation table. The roster matches the
configuration enum used by the CLI.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import weights as w_mod
from .cv import CvSelection, CvTable, bcv_select, rwcv_select
from .solver import LambdaGrid, MultiVarProblem, SolverConfig, build_grid
from .var_core import MultiSubjectSeries, center

JOINT_METHODS = (
    "multivar-standard",
    "multivar-adaptive-ml",
    "multivar-adaptive-ridge",
    "multivar-adaptive-lasso",
)
K1_METHODS = (
    "k1-ml-thresh",
    "k1-adaptive-ml",
    "k1-adaptive-ridge",
    "k1-adaptive-lasso",
)
METHODS = JOINT_METHODS + K1_METHODS

CV_SCHEMES = ("bcv", "rwcv")


@dataclass(frozen=True)
class FitOptions:
    """Shared knobs for all methods (unused ones are ignored per method)."""

    folds: int = 10
    cv: str = "bcv"
    grid_n1: int = 10
    grid_n2: int = 10
    ratio: float = 0.01
    alpha: float = 1.0
    signif_level: float = 0.05
    window: int | None = None
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self) -> None:
        if self.cv not in CV_SCHEMES:
            raise ValueError(f"cv must be one of {CV_SCHEMES}, got {self.cv!r}")


@dataclass(frozen=True)
class FitResult:
    """Fitted per-subject totals plus whatever the method exposes on top."""

    method: str
    totals: np.ndarray
    common: np.ndarray | None = None
    unique: np.ndarray | None = None
    cv_table: CvTable | None = None
    subject_cv: tuple[dict, ...] | None = None
    selection: dict = field(default_factory=dict)
    means: np.ndarray | None = None
    seconds: float = 0.0

    @property
    def zero_tol(self) -> float:
        """Support tolerance appropriate for this estimator: exact zeros from
        thresholded OLS, numeric zeros from the proximal methods."""
        return 0.0 if self.method == "k1-ml-thresh" else 1e-12


def _initials(data: MultiSubjectSeries, p: int, kind: str, opts: FitOptions):
    if kind == "ml":
        return w_mod.initial_ml(data, p)
    if kind == "ridge":
        return w_mod.initial_ridge(data, p, folds=opts.folds)
    if kind == "lasso":
        return w_mod.initial_lasso(
            data, p, ratio=opts.ratio, folds=opts.folds, cfg=opts.solver
        )
    raise ValueError(f"unknown initial estimator {kind!r}")


def _joint_fit(
    data: MultiSubjectSeries, p: int, method: str, opts: FitOptions
) -> FitResult:
    aw = None
    if method != "multivar-standard":
        kind = method.rsplit("-", 1)[-1]
        initials = _initials(data, p, kind, opts)
        aw = w_mod.build_adaptive_weights(initials, alpha=opts.alpha)
    problem = MultiVarProblem.from_series(data, p)
    grid: LambdaGrid = build_grid(
        problem, aw, n1=opts.grid_n1, n2=opts.grid_n2, ratio=opts.ratio
    )
    if opts.cv == "bcv":
        sel: CvSelection = bcv_select(
            data, p, grid, aw, cfg=opts.solver, folds=opts.folds
        )
    else:
        sel = rwcv_select(data, p, grid, aw, cfg=opts.solver, window=opts.window)
    dec = sel.decomposition
    return FitResult(
        method=method,
        totals=dec.totals,
        common=dec.common,
        unique=dec.unique,
        cv_table=sel.table,
        selection={
            "lambda1": sel.table.selected_lambda1,
            "lambda2_scale": sel.table.selected_lambda2_scale,
            "msfe": sel.table.selected_msfe,
            "cv": opts.cv,
        },
    )


def _k1_fit(data: MultiSubjectSeries, p: int, method: str, opts: FitOptions) -> FitResult:
    if method == "k1-ml-thresh":
        models = w_mod.ml_thresholded(data, p, alpha_level=opts.signif_level)
        totals = np.array([m.stacked() for m in models])
        return FitResult(
            method=method, totals=totals,
            selection={"signif_level": opts.signif_level},
        )
    kind = method.rsplit("-", 1)[-1]
    initials = _initials(data, p, kind, opts)
    totals = []
    per_subject = []
    for k, subj in enumerate(data):
        wmat = w_mod.k1_weight_matrix(initials.phis[k], alpha=opts.alpha)
        phi, lam, msfe = w_mod.single_lasso_cv(
            subj, p, wmat, n_lambda=opts.grid_n1, ratio=opts.ratio,
            folds=opts.folds, cfg=opts.solver,
        )
        totals.append(phi)
        per_subject.append({"subject": subj.subject_id, "lambda": lam, "msfe": msfe})
    return FitResult(
        method=method,
        totals=np.array(totals),
        subject_cv=tuple(per_subject),
        selection={"initial": kind, "alpha": opts.alpha},
    )


def fit_method(
    data: MultiSubjectSeries,
    p: int,
    method: str,
    opts: FitOptions | None = None,
    precentered: bool = False,
) -> FitResult:
    """Center the data (unless told it already is) and run one roster method."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    opts = opts or FitOptions()
    t0 = time.perf_counter()
    if precentered:
        centered, means = data, None
    else:
        centered, means = center(data)
    if method in JOINT_METHODS:
        result = _joint_fit(centered, p, method, opts)
    else:
        result = _k1_fit(centered, p, method, opts)
    elapsed = time.perf_counter() - t0
    return FitResult(
        method=result.method,
        totals=result.totals,
        common=result.common,
        unique=result.unique,
        cv_table=result.cv_table,
        subject_cv=result.subject_cv,
        selection=result.selection,
        means=means,
        seconds=elapsed,
    )
