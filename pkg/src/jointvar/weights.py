"""Initial per-subject estimators and adaptive penalty weights.

Three initial estimators are available for the adaptive penalty: plain
maximum likelihood (component-wise OLS), ridge regression, and the Lasso,
the latter two tuned per subject by blocked cross-validation. Adaptive
weights divide each penalty entry by a power of the entrywise weighted
median of the initial estimates (common block) or of the deviation from
that median (unique blocks); tiny divisors are floored and the resulting
weights capped to keep the solver well-posed.

Also here: the significance-thresholded OLS baseline and the per-subject
adaptive Lasso used when subjects are modeled separately (K=1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .cv import forecast_msfe, make_blocked_folds, _segment_forms
from .solver import (
    MultiVarProblem,
    SolverConfig,
    lambda_max,
    solve_single,
)
from .var_core import MultiSubjectSeries, SubjectSeries, VarModel, build_regression, fit_ols

DEFAULT_FLOOR = 1e-8
DEFAULT_CAP = 1e8


@dataclass(frozen=True)
class InitialEstimates:
    """Per-subject preliminary transition estimates (K x d x dp), the method
    used, per-subject effective sample sizes (T_k - p), and the tuning value
    chosen per subject where the method has one."""

    phis: np.ndarray
    method: str
    n_obs: np.ndarray
    tuning: np.ndarray | None = None

    def __post_init__(self) -> None:
        phis = np.asarray(self.phis, dtype=float)
        if phis.ndim != 3:
            raise ValueError("phis must be K x d x dp")
        if not np.all(np.isfinite(phis)):
            raise ValueError("initial estimates contain non-finite entries")
        object.__setattr__(self, "phis", phis)
        object.__setattr__(self, "n_obs", np.asarray(self.n_obs, dtype=float))

    @property
    def k(self) -> int:
        return self.phis.shape[0]


@dataclass(frozen=True)
class AdaptiveWeights:
    """Entrywise penalty multipliers: ``common_weights`` (d x dp) built from
    reciprocal powers of the weighted-median initial estimate and
    ``unique_weights`` (K x d x dp) from deviations around it."""

    common_weights: np.ndarray
    unique_weights: np.ndarray
    alpha: float
    cap: float

    def __post_init__(self) -> None:
        cw = np.asarray(self.common_weights, dtype=float)
        uw = np.asarray(self.unique_weights, dtype=float)
        if np.any(cw <= 0) or np.any(uw <= 0):
            raise ValueError("adaptive weights must be positive")
        object.__setattr__(self, "common_weights", cw)
        object.__setattr__(self, "unique_weights", uw)


def initial_ml(data: MultiSubjectSeries, p: int) -> InitialEstimates:
    """Unpenalized per-subject OLS fits (maximum likelihood under Gaussian
    noise)."""
    phis = np.array([fit_ols(s, p).stacked() for s in data])
    n_obs = np.array([s.t_len - p for s in data], dtype=float)
    return InitialEstimates(phis=phis, method="maximum-likelihood", n_obs=n_obs)


def default_ridge_grid(data: MultiSubjectSeries, p: int, size: int = 20) -> np.ndarray:
    """20 log-spaced ridge levels spanning [1e-4, 1e2] times the mean design
    Gram diagonal, a scale-aware default."""
    scales = []
    for s in data:
        z = build_regression(s, p).z
        scales.append(np.trace(z @ z.T) / z.shape[0])
    base = float(np.mean(scales))
    return np.geomspace(1e-4 * base, 1e2 * base, size)


def _ridge_fit(q: np.ndarray, s: np.ndarray, gamma: float) -> np.ndarray:
    dp = q.shape[0]
    return np.linalg.solve(q + gamma * np.eye(dp), s.T).T


def initial_ridge(
    data: MultiSubjectSeries,
    p: int,
    ridge_grid: np.ndarray | None = None,
    folds: int = 10,
) -> InitialEstimates:
    """Per-subject ridge fits with the level chosen by blocked CV on that
    subject's own series."""
    if ridge_grid is None:
        ridge_grid = default_ridge_grid(data, p)
    ridge_grid = np.asarray(ridge_grid, dtype=float)
    if ridge_grid.size < 1 or np.any(ridge_grid <= 0):
        raise ValueError("ridge grid must be nonempty and positive")
    # larger gamma first so ties resolve toward the stronger shrinkage
    order = np.argsort(ridge_grid)[::-1]
    grid_desc = ridge_grid[order]

    phis, chosen = [], []
    for subj in data:
        plan = make_blocked_folds([subj.t_len], folds, p)
        scores = np.zeros(grid_desc.size)
        for fold in range(plan.n_folds):
            start, stop = plan.blocks[0][fold]
            forms = _segment_forms(subj.data, (start, stop), p)
            if not forms:
                raise ValueError(
                    f"fold {fold} leaves no training data for {subj.subject_id!r}"
                )
            q = sum(f.z @ f.z.T for f in forms)
            s = sum(f.y @ f.z.T for f in forms)
            ctx = subj.data[:, max(0, start - p) : start] if start > 0 else None
            block = subj.data[:, start:stop]
            for g_idx, gamma in enumerate(grid_desc):
                phi = _ridge_fit(q, s, gamma)
                scores[g_idx] += forecast_msfe(phi, block, ctx)
        best = int(np.argmin(scores))
        full = build_regression(subj, p)
        phis.append(_ridge_fit(full.z @ full.z.T, full.y @ full.z.T, grid_desc[best]))
        chosen.append(grid_desc[best])
    n_obs = np.array([s.t_len - p for s in data], dtype=float)
    return InitialEstimates(
        phis=np.array(phis), method="ridge", n_obs=n_obs, tuning=np.array(chosen)
    )


def single_lasso_cv(
    series: SubjectSeries,
    p: int,
    weight_matrix: np.ndarray | None = None,
    n_lambda: int = 10,
    ratio: float = 0.01,
    folds: int = 10,
    cfg: SolverConfig | None = None,
    lambda_grid: np.ndarray | None = None,
) -> tuple[np.ndarray, float, np.ndarray]:
    """Single-subject (weighted) Lasso with the penalty chosen by blocked CV.

    Returns (phi_hat, chosen lambda, per-lambda MSFE). The grid defaults to
    ``n_lambda`` log-spaced values from the subject's own lambda_max down to
    ``ratio`` times it.
    """
    cfg = cfg or SolverConfig()
    full = MultiVarProblem.from_series(MultiSubjectSeries((series,)), p)
    if lambda_grid is None:
        _, l2max = lambda_max(full)
        anchor = float(l2max[0]) if weight_matrix is None else float(
            np.max(np.abs((2.0 / full.n_total) * full.s[0]) / weight_matrix)
        )
        if anchor <= 0:
            lambda_grid = np.zeros(n_lambda)
        else:
            lambda_grid = np.geomspace(anchor, ratio * anchor, n_lambda)
    else:
        lambda_grid = np.sort(np.asarray(lambda_grid, dtype=float))[::-1]
    if lambda_grid.size < 1:
        raise ValueError("lambda grid must be nonempty")

    plan = make_blocked_folds([series.t_len], folds, p)
    scores = np.zeros(lambda_grid.size)
    for fold in range(plan.n_folds):
        start, stop = plan.blocks[0][fold]
        forms = _segment_forms(series.data, (start, stop), p)
        if not forms:
            raise ValueError(f"fold {fold} leaves no training data")
        train = MultiVarProblem.from_forms([forms], p)
        ctx = series.data[:, max(0, start - p) : start] if start > 0 else None
        block = series.data[:, start:stop]
        warm = None
        for l_idx, lam in enumerate(lambda_grid):
            phi, _ = solve_single(train, float(lam), weight_matrix, cfg, warm)
            warm = phi
            scores[l_idx] += forecast_msfe(phi, block, ctx)
    best = int(np.argmin(scores))
    phi_hat, _ = solve_single(full, float(lambda_grid[best]), weight_matrix, cfg)
    return phi_hat, float(lambda_grid[best]), scores / plan.n_folds


def initial_lasso(
    data: MultiSubjectSeries,
    p: int,
    lambda_grid: np.ndarray | None = None,
    n_lambda: int = 10,
    ratio: float = 0.01,
    folds: int = 10,
    cfg: SolverConfig | None = None,
) -> InitialEstimates:
    """Per-subject Lasso fits (unit weights) tuned by blocked CV; yields
    sparse initial estimates."""
    phis, chosen = [], []
    for subj in data:
        phi, lam, _ = single_lasso_cv(
            subj, p, None, n_lambda=n_lambda, ratio=ratio, folds=folds,
            cfg=cfg, lambda_grid=lambda_grid,
        )
        phis.append(phi)
        chosen.append(lam)
    n_obs = np.array([s.t_len - p for s in data], dtype=float)
    return InitialEstimates(
        phis=np.array(phis), method="lasso", n_obs=n_obs, tuning=np.array(chosen)
    )


def ml_thresholded(
    data: MultiSubjectSeries, p: int, alpha_level: float = 0.05
) -> list[VarModel]:
    """Per-subject OLS with entries failing a two-sided t-test at
    ``alpha_level`` set to zero (classical row-wise OLS standard errors)."""
    if not 0.0 < alpha_level <= 1.0:
        raise ValueError(f"alpha_level must be in (0, 1], got {alpha_level}")
    out = []
    for subj in data:
        form = build_regression(subj, p)
        model = fit_ols(subj, p)
        phi = model.stacked().copy()
        n = form.n
        dp = form.z.shape[0]
        dof = n - dp
        gram_inv = np.linalg.pinv(form.z @ form.z.T)
        resid = form.y - phi @ form.z
        sigma2 = np.sum(resid * resid, axis=1) / max(dof, 1)
        se = np.sqrt(np.outer(sigma2, np.diag(gram_inv)))
        with np.errstate(divide="ignore", invalid="ignore"):
            tstat = np.where(se > 0, phi / se, np.inf * np.sign(phi))
        pvals = 2.0 * stats.t.sf(np.abs(tstat), df=max(dof, 1))
        phi[pvals > alpha_level] = 0.0
        out.append(VarModel.from_stacked(phi, noise_cov=model.noise_cov))
    return out


def entrywise_weighted_median(
    phis: np.ndarray, subject_weights: np.ndarray | None = None
) -> np.ndarray:
    """Entrywise weighted median over subjects.

    Uses the lower weighted median: the first sorted value whose cumulative
    weight reaches half the total. With equal weights this is the ordinary
    (lower) sample median.
    """
    phis = np.asarray(phis, dtype=float)
    if phis.ndim != 3:
        raise ValueError("phis must be K x d x dp")
    k = phis.shape[0]
    if subject_weights is None:
        w = np.ones(k)
    else:
        w = np.asarray(subject_weights, dtype=float)
    if w.shape != (k,) or np.any(w < 0) or w.sum() <= 0:
        raise ValueError("need one nonnegative weight per subject, not all zero")
    order = np.argsort(phis, axis=0, kind="stable")
    sorted_vals = np.take_along_axis(phis, order, axis=0)
    sorted_w = w[order]
    cum = np.cumsum(sorted_w, axis=0)
    crossing = cum >= 0.5 * w.sum()
    first = np.argmax(crossing, axis=0)
    return np.take_along_axis(sorted_vals, first[None, :, :], axis=0)[0]


def build_adaptive_weights(
    initials: InitialEstimates,
    subject_weights: np.ndarray | None = None,
    alpha: float = 1.0,
    floor_eps: float = DEFAULT_FLOOR,
    cap: float = DEFAULT_CAP,
) -> AdaptiveWeights:
    """Adaptive penalty weights from initial estimates.

    Common weight at (i, j) is 1 / max(|median_ij|, floor_eps)^alpha, the
    subject-k unique weight is 1 / max(|phi_k_ij - median_ij|, floor_eps)^alpha,
    both capped at ``cap``. Subject weights for the median default to the
    effective sample sizes T_k - p.
    """
    if alpha < 1.0:
        raise ValueError(f"alpha must be >= 1, got {alpha}")
    if floor_eps <= 0 or cap <= 0:
        raise ValueError("floor_eps and cap must be positive")
    if subject_weights is None:
        subject_weights = initials.n_obs
    med = entrywise_weighted_median(initials.phis, subject_weights)
    common = np.minimum(1.0 / np.maximum(np.abs(med), floor_eps) ** alpha, cap)
    dev = np.abs(initials.phis - med[None, :, :])
    unique = np.minimum(1.0 / np.maximum(dev, floor_eps) ** alpha, cap)
    return AdaptiveWeights(
        common_weights=common, unique_weights=unique, alpha=float(alpha), cap=float(cap)
    )


def k1_weight_matrix(
    phi: np.ndarray,
    alpha: float = 1.0,
    floor_eps: float = DEFAULT_FLOOR,
    cap: float = DEFAULT_CAP,
) -> np.ndarray:
    """Adaptive-Lasso weight matrix for a single subject: reciprocal powers of
    the initial estimate's magnitudes, floored and capped as above."""
    if alpha < 1.0:
        raise ValueError(f"alpha must be >= 1, got {alpha}")
    return np.minimum(1.0 / np.maximum(np.abs(phi), floor_eps) ** alpha, cap)
