"""Joint estimation of common and subject-unique VAR effects.

The objective minimized over the stacked parameter (G0, G1, ..., GK) is

    (1/N) sum_k || Y_k - (G0 + Gk) Z_k ||_2^2
        + lambda1 * || W0 o G0 ||_1
        + sum_k lambda2_k * || Wk o Gk ||_1

where o is entrywise multiplication, the weight matrices default to ones,
and N = sum_k d * n_k is the total number of scalar observations. Each
subject's fitted transition matrix is the total G0 + Gk.

The smooth part depends on the data only through per-subject cross moments
S_k = Y_k Z_k' and Gram matrices Q_k = Z_k Z_k', so solves are independent of
the series length once a ``MultiVarProblem`` has been formed. Minimization
uses FISTA with a fixed step from the Lipschitz bound (optional backtracking)
and a monotone restart whenever the momentum step would increase the
objective.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .var_core import MultiSubjectSeries, RegressionForm, build_regression

if TYPE_CHECKING:  # pragma: no cover
    from .weights import AdaptiveWeights


class DivergenceError(RuntimeError):
    """Objective became non-finite during iteration."""

    def __init__(self, iteration: int, step: float):
        super().__init__(
            f"objective became non-finite at iteration {iteration} (step size {step:.3g})"
        )
        self.iteration = iteration
        self.step = step


@dataclass(frozen=True)
class EffectsDecomposition:
    """Common effects ``common`` (d x dp) plus per-subject unique effects
    ``unique`` (K x d x dp). Totals are always recomputed, never stored."""

    common: np.ndarray
    unique: np.ndarray

    def __post_init__(self) -> None:
        common = np.asarray(self.common, dtype=float)
        unique = np.asarray(self.unique, dtype=float)
        if common.ndim != 2 or unique.ndim != 3 or unique.shape[1:] != common.shape:
            raise ValueError(
                f"inconsistent decomposition: common {common.shape}, unique {unique.shape}"
            )
        object.__setattr__(self, "common", common)
        object.__setattr__(self, "unique", unique)

    @property
    def k(self) -> int:
        return self.unique.shape[0]

    @property
    def totals(self) -> np.ndarray:
        """Per-subject transition matrices, common + unique (K x d x dp)."""
        return self.common[None, :, :] + self.unique

    def cancellation_mask(self, tol: float = 1e-12) -> np.ndarray:
        """Entries where common and unique are both nonzero but nearly cancel
        in the total; sparsity of the total is only induced through the sum,
        so such entries deserve a flag."""
        both = (self.common[None] != 0.0) & (self.unique != 0.0)
        return both & (np.abs(self.totals) <= tol)

    @classmethod
    def zeros(cls, k: int, d: int, dp: int) -> EffectsDecomposition:
        return cls(common=np.zeros((d, dp)), unique=np.zeros((k, d, dp)))


@dataclass(frozen=True)
class PenaltySpec:
    """Penalty levels: one lambda1 for the common block, per-subject lambda2,
    and optional adaptive weights (absent => all weights one)."""

    lambda1: float
    lambda2: np.ndarray
    weights: "AdaptiveWeights | None" = None

    def __post_init__(self) -> None:
        lam2 = np.atleast_1d(np.asarray(self.lambda2, dtype=float))
        if not np.isfinite(self.lambda1) or self.lambda1 < 0:
            raise ValueError(f"lambda1 must be finite and >= 0, got {self.lambda1}")
        if not np.all(np.isfinite(lam2)) or np.any(lam2 < 0):
            raise ValueError("lambda2 values must be finite and >= 0")
        object.__setattr__(self, "lambda2", lam2)


@dataclass(frozen=True)
class SolverConfig:
    """Iteration budget, relative-objective convergence threshold, and step
    rule (fixed 1/L by default; set ``backtrack`` in (0,1) to start from
    ``initial_step`` and shrink until the descent condition holds)."""

    max_iter: int = 5000
    tol: float = 1e-6
    backtrack: float | None = None
    initial_step: float | None = None

    def __post_init__(self) -> None:
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.tol <= 0:
            raise ValueError("tol must be > 0")
        if self.backtrack is not None and not 0.0 < self.backtrack < 1.0:
            raise ValueError("backtrack factor must be in (0, 1)")


@dataclass(frozen=True)
class SolveInfo:
    iterations: int
    converged: bool
    objective: float
    restarts: int
    step: float


@dataclass(frozen=True)
class LambdaGrid:
    """Cartesian penalty grid: absolute lambda1 values (descending) and shared
    lambda2 multipliers (descending, in (0,1]) scaled per subject by that
    subject's lambda2_max anchor."""

    lambda1: np.ndarray
    lambda2_scale: np.ndarray
    lambda2_max: np.ndarray

    def __post_init__(self) -> None:
        l1 = np.atleast_1d(np.asarray(self.lambda1, dtype=float))
        l2 = np.atleast_1d(np.asarray(self.lambda2_scale, dtype=float))
        l2max = np.atleast_1d(np.asarray(self.lambda2_max, dtype=float))
        for name, arr in (("lambda1", l1), ("lambda2_scale", l2)):
            if arr.size < 1 or np.any(arr < 0) or np.any(np.diff(arr) > 0):
                raise ValueError(f"{name} must be nonempty, nonnegative, descending")
        object.__setattr__(self, "lambda1", l1)
        object.__setattr__(self, "lambda2_scale", l2)
        object.__setattr__(self, "lambda2_max", l2max)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.lambda1.size, self.lambda2_scale.size)

    def penalty(self, i: int, j: int, weights: "AdaptiveWeights | None" = None) -> PenaltySpec:
        """Penalty for grid cell (i, j): lambda1[i] and lambda2_scale[j] times
        each subject's anchor."""
        return PenaltySpec(
            lambda1=float(self.lambda1[i]),
            lambda2=self.lambda2_scale[j] * self.lambda2_max,
            weights=weights,
        )


@dataclass(frozen=True)
class MultiVarProblem:
    """Sufficient statistics of the smooth loss: per-subject cross moments
    ``s`` = Y Z' (K x d x dp), Gram matrices ``q`` = Z Z' (K x dp x dp),
    squared outcome norms and scored column counts."""

    s: np.ndarray
    q: np.ndarray
    y_sq: np.ndarray
    n_obs: np.ndarray
    p: int

    @property
    def k(self) -> int:
        return self.s.shape[0]

    @property
    def d(self) -> int:
        return self.s.shape[1]

    @property
    def dp(self) -> int:
        return self.s.shape[2]

    @property
    def n_total(self) -> float:
        """Total scalar observations N = d * sum_k n_k."""
        return float(self.d * self.n_obs.sum())

    @classmethod
    def from_forms(
        cls, forms: Sequence[RegressionForm | Sequence[RegressionForm]], p: int
    ) -> MultiVarProblem:
        """Build from one or several regression forms per subject; several
        forms arise when a subject's series is split into contiguous segments
        (cross-validation folds) that must not be lagged across."""
        s_list, q_list, ysq, nobs = [], [], [], []
        for entry in forms:
            segs = [entry] if isinstance(entry, RegressionForm) else list(entry)
            if not segs:
                raise ValueError("each subject needs at least one regression form")
            d, dp = segs[0].y.shape[0], segs[0].z.shape[0]
            s = np.zeros((d, dp))
            q = np.zeros((dp, dp))
            c = 0.0
            n = 0
            for f in segs:
                s += f.y @ f.z.T
                q += f.z @ f.z.T
                c += float(np.sum(f.y * f.y))
                n += f.n
            s_list.append(s)
            q_list.append(q)
            ysq.append(c)
            nobs.append(n)
        return cls(
            s=np.array(s_list),
            q=np.array(q_list),
            y_sq=np.array(ysq, dtype=float),
            n_obs=np.array(nobs, dtype=float),
            p=p,
        )

    @classmethod
    def from_series(cls, data: MultiSubjectSeries, p: int) -> MultiVarProblem:
        return cls.from_forms([build_regression(s, p) for s in data], p)

    def subject(self, k: int) -> MultiVarProblem:
        """Single-subject view (K=1) of subject k."""
        return MultiVarProblem(
            s=self.s[k : k + 1],
            q=self.q[k : k + 1],
            y_sq=self.y_sq[k : k + 1],
            n_obs=self.n_obs[k : k + 1],
            p=self.p,
        )

    def lipschitz(self) -> float:
        """Upper bound on the Lipschitz constant of the smooth gradient over
        the stacked parameter: 2 * (K+1) * max_k sigma_max(Q_k) / N."""
        sig = max(float(np.linalg.eigvalsh(qk)[-1]) for qk in self.q)
        return 2.0 * (self.k + 1) * sig / self.n_total


def smooth_loss(problem: MultiVarProblem, totals: np.ndarray) -> float:
    """(1/N) sum_k ||Y_k - T_k Z_k||_2^2 evaluated from sufficient statistics."""
    tq = np.einsum("kij,kjl->kil", totals, problem.q)
    val = problem.y_sq.sum() - 2.0 * float(np.sum(totals * problem.s)) + float(
        np.sum(totals * tq)
    )
    return val / problem.n_total


def smooth_grad(
    problem: MultiVarProblem, common: np.ndarray, unique: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Gradient of the smooth loss w.r.t. (common, unique).

    The gradient w.r.t. each total is (2/N)(T_k Q_k - S_k); the common block
    receives the sum over subjects.
    """
    totals = common[None, :, :] + unique
    tq = np.einsum("kij,kjl->kil", totals, problem.q)
    g = (2.0 / problem.n_total) * (tq - problem.s)
    return g.sum(axis=0), g


def _penalty_value(pen: PenaltySpec, common: np.ndarray, unique: np.ndarray) -> float:
    if pen.weights is None:
        p1 = float(np.abs(common).sum())
        p2 = np.abs(unique).sum(axis=(1, 2))
    else:
        p1 = float(np.abs(pen.weights.common_weights * common).sum())
        p2 = np.abs(pen.weights.unique_weights * unique).sum(axis=(1, 2))
    total = pen.lambda1 * p1
    for lam, nrm in zip(pen.lambda2, p2):
        if nrm > 0.0:
            total += float(lam) * float(nrm)
    return total


def objective(
    problem: MultiVarProblem, dec: EffectsDecomposition, pen: PenaltySpec
) -> float:
    """Full penalized objective at a decomposition."""
    if dec.unique.shape[0] != problem.k or dec.common.shape != (problem.d, problem.dp):
        raise ValueError(
            f"decomposition shape {dec.unique.shape} does not match problem "
            f"(K={problem.k}, d={problem.d}, dp={problem.dp})"
        )
    if pen.lambda2.size != problem.k:
        raise ValueError(f"need {problem.k} lambda2 values, got {pen.lambda2.size}")
    return smooth_loss(problem, dec.totals) + _penalty_value(pen, dec.common, dec.unique)


def prox_weighted_l1(
    v: np.ndarray, threshold: float, w: np.ndarray | None = None
) -> np.ndarray:
    """Entrywise soft-threshold: sign(v) * max(|v| - threshold * w, 0)."""
    if threshold < 0:
        raise ValueError("threshold must be >= 0")
    v = np.asarray(v, dtype=float)
    cut = threshold if w is None else threshold * np.asarray(w, dtype=float)
    return np.sign(v) * np.maximum(np.abs(v) - cut, 0.0)


def _weight_arrays(
    pen: PenaltySpec, k: int, d: int, dp: int
) -> tuple[np.ndarray, np.ndarray]:
    if pen.weights is None:
        return np.ones((d, dp)), np.ones((k, d, dp))
    w0 = np.asarray(pen.weights.common_weights, dtype=float)
    wk = np.asarray(pen.weights.unique_weights, dtype=float)
    if w0.shape != (d, dp) or wk.shape != (k, d, dp):
        raise ValueError("adaptive weight shapes do not match the problem")
    return w0, wk


def fista_solve(
    problem: MultiVarProblem,
    pen: PenaltySpec,
    cfg: SolverConfig | None = None,
    warm_start: EffectsDecomposition | None = None,
) -> tuple[EffectsDecomposition, SolveInfo]:
    """Minimize the penalized objective by accelerated proximal gradient.

    Gradient steps on the smooth loss over the stacked parameter alternate
    with blockwise soft-thresholding (common block at lambda1 * W0, subject
    blocks at lambda2_k * Wk). A monotone restart drops the momentum whenever
    it would increase the objective, so the reported objective never
    increases. Deterministic given the inputs.
    """
    cfg = cfg or SolverConfig()
    k, d, dp = problem.k, problem.d, problem.dp
    if pen.lambda2.size != k:
        raise ValueError(f"need {k} lambda2 values, got {pen.lambda2.size}")
    w0, wk = _weight_arrays(pen, k, d, dp)
    lam2 = pen.lambda2[:, None, None]

    if warm_start is not None:
        x_c = warm_start.common.copy()
        x_u = warm_start.unique.copy()
    else:
        x_c = np.zeros((d, dp))
        x_u = np.zeros((k, d, dp))

    lip = problem.lipschitz()
    if cfg.backtrack is None:
        step = 1.0 / lip if lip > 0 else 1.0
    else:
        step = cfg.initial_step if cfg.initial_step else (1.0 / lip if lip > 0 else 1.0)

    def prox_from(c: np.ndarray, u: np.ndarray, gc: np.ndarray, gu: np.ndarray, st: float):
        cand_c = prox_weighted_l1(c - st * gc, pen.lambda1 * st, w0)
        cand_u = prox_weighted_l1(u - st * gu, st, lam2 * wk)
        return cand_c, cand_u

    def full_obj(c: np.ndarray, u: np.ndarray) -> float:
        return smooth_loss(problem, c[None] + u) + _penalty_value(pen, c, u)

    def backtracked(c: np.ndarray, u: np.ndarray, st: float):
        # shrink the step until the quadratic upper bound holds at the prox point
        f_y = smooth_loss(problem, c[None] + u)
        gc, gu = smooth_grad(problem, c, u)
        while True:
            cand_c, cand_u = prox_from(c, u, gc, gu, st)
            f_cand = smooth_loss(problem, cand_c[None] + cand_u)
            dc, du = cand_c - c, cand_u - u
            quad = (
                f_y
                + float(np.sum(gc * dc))
                + float(np.sum(gu * du))
                + (float(np.sum(dc * dc)) + float(np.sum(du * du))) / (2.0 * st)
            )
            if f_cand <= quad + 1e-15 * max(1.0, abs(f_cand)):
                return cand_c, cand_u, st
            st *= cfg.backtrack

    y_c, y_u = x_c.copy(), x_u.copy()
    t_mom = 1.0
    f_x = full_obj(x_c, x_u)
    restarts = 0
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        if cfg.backtrack is None:
            gc, gu = smooth_grad(problem, y_c, y_u)
            cand_c, cand_u = prox_from(y_c, y_u, gc, gu, step)
        else:
            cand_c, cand_u, step = backtracked(y_c, y_u, step)
        f_cand = full_obj(cand_c, cand_u)
        if not math.isfinite(f_cand):
            raise DivergenceError(it, step)
        if f_cand > f_x:
            # monotone restart: plain proximal step from the last iterate
            restarts += 1
            t_mom = 1.0
            if cfg.backtrack is None:
                gc, gu = smooth_grad(problem, x_c, x_u)
                cand_c, cand_u = prox_from(x_c, x_u, gc, gu, step)
            else:
                cand_c, cand_u, step = backtracked(x_c, x_u, step)
            f_cand = full_obj(cand_c, cand_u)
            if not math.isfinite(f_cand):
                raise DivergenceError(it, step)
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t_mom * t_mom))
        beta = (t_mom - 1.0) / t_next
        y_c = cand_c + beta * (cand_c - x_c)
        y_u = cand_u + beta * (cand_u - x_u)
        rel = abs(f_x - f_cand) / max(1.0, abs(f_x))
        x_c, x_u, f_x, t_mom = cand_c, cand_u, f_cand, t_next
        if rel < cfg.tol:
            converged = True
            break

    dec = EffectsDecomposition(common=x_c, unique=x_u)
    return dec, SolveInfo(
        iterations=it, converged=converged, objective=f_x, restarts=restarts, step=step
    )


def solve_single(
    problem: MultiVarProblem,
    lam: float,
    weight_matrix: np.ndarray | None = None,
    cfg: SolverConfig | None = None,
    warm_start: np.ndarray | None = None,
) -> tuple[np.ndarray, SolveInfo]:
    """Single-subject weighted Lasso on a K=1 problem:
    (1/N) ||Y - phi Z||_2^2 + lam * ||W o phi||_1, solved with the same FISTA
    scheme over the one transition matrix. Returns (phi_hat, info)."""
    if problem.k != 1:
        raise ValueError("solve_single expects a K=1 problem")
    cfg = cfg or SolverConfig()
    if lam < 0 or not math.isfinite(lam):
        raise ValueError("lam must be finite and >= 0")
    d, dp = problem.d, problem.dp
    w = np.ones((d, dp)) if weight_matrix is None else np.asarray(weight_matrix, float)
    if w.shape != (d, dp):
        raise ValueError(f"weight matrix shape {w.shape} != ({d}, {dp})")

    q = problem.q[0]
    s = problem.s[0]
    n_total = problem.n_total
    lip = 2.0 * float(np.linalg.eigvalsh(q)[-1]) / n_total
    step = 1.0 / lip if lip > 0 else 1.0

    def f_smooth(phi: np.ndarray) -> float:
        return (
            problem.y_sq[0]
            - 2.0 * float(np.sum(phi * s))
            + float(np.sum(phi * (phi @ q)))
        ) / n_total

    def f_full(phi: np.ndarray) -> float:
        return f_smooth(phi) + lam * float(np.abs(w * phi).sum())

    x = np.zeros((d, dp)) if warm_start is None else np.array(warm_start, dtype=float)
    y = x.copy()
    t_mom = 1.0
    f_x = f_full(x)
    restarts = 0
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        grad = (2.0 / n_total) * (y @ q - s)
        cand = prox_weighted_l1(y - step * grad, lam * step, w)
        f_cand = f_full(cand)
        if not math.isfinite(f_cand):
            raise DivergenceError(it, step)
        if f_cand > f_x:
            restarts += 1
            t_mom = 1.0
            grad = (2.0 / n_total) * (x @ q - s)
            cand = prox_weighted_l1(x - step * grad, lam * step, w)
            f_cand = f_full(cand)
            if not math.isfinite(f_cand):
                raise DivergenceError(it, step)
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t_mom * t_mom))
        beta = (t_mom - 1.0) / t_next
        y = cand + beta * (cand - x)
        rel = abs(f_x - f_cand) / max(1.0, abs(f_x))
        x, f_x, t_mom = cand, f_cand, t_next
        if rel < cfg.tol:
            converged = True
            break
    return x, SolveInfo(
        iterations=it, converged=converged, objective=f_x, restarts=restarts, step=step
    )


def lambda_max(
    problem: MultiVarProblem, weights: "AdaptiveWeights | None" = None
) -> tuple[float, np.ndarray]:
    """Smallest penalty levels at which the all-zero decomposition is
    stationary: the weighted max-absolute entries of (2/N) sum_k Y_k Z_k'
    (common block) and of (2/N) Y_k Z_k' per subject."""
    w0, wk = _weight_arrays(
        PenaltySpec(0.0, np.zeros(problem.k), weights), problem.k, problem.d, problem.dp
    )
    g = (2.0 / problem.n_total) * problem.s
    l1 = float(np.max(np.abs(g.sum(axis=0)) / w0)) if g.size else 0.0
    l2 = np.max(np.abs(g) / wk, axis=(1, 2))
    return l1, l2


def build_grid(
    problem: MultiVarProblem,
    weights: "AdaptiveWeights | None" = None,
    n1: int = 10,
    n2: int = 10,
    ratio: float = 0.01,
) -> LambdaGrid:
    """Log-spaced descending grids from lambda_max down to ratio * lambda_max,
    paired as a full Cartesian product. The lambda2 grid is a shared multiplier
    ladder applied to each subject's own anchor."""
    if n1 < 1 or n2 < 1:
        raise ValueError("grid sizes must be >= 1")
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must be in (0, 1)")
    l1max, l2max = lambda_max(problem, weights)
    if l1max > 0:
        l1 = np.geomspace(l1max, ratio * l1max, n1)
    else:
        l1 = np.zeros(n1)
    scale = np.geomspace(1.0, ratio, n2)
    return LambdaGrid(lambda1=l1, lambda2_scale=scale, lambda2_max=l2max)


@dataclass(frozen=True)
class PathResult:
    """Solutions over a penalty grid, keyed by (i, j) cell indices."""

    grid: LambdaGrid
    solutions: dict[tuple[int, int], EffectsDecomposition]
    infos: dict[tuple[int, int], SolveInfo]
    failures: dict[tuple[int, int], str]


def fit_path(
    problem: MultiVarProblem,
    grid: LambdaGrid,
    weights: "AdaptiveWeights | None" = None,
    cfg: SolverConfig | None = None,
    strict: bool = True,
) -> PathResult:
    """Solve every grid cell in descending-penalty order, warm-starting each
    cell from its nearest previously solved neighbor. With ``strict=False``
    failed cells are recorded instead of raised."""
    cfg = cfg or SolverConfig()
    n1, n2 = grid.shape
    solutions: dict[tuple[int, int], EffectsDecomposition] = {}
    infos: dict[tuple[int, int], SolveInfo] = {}
    failures: dict[tuple[int, int], str] = {}
    for i in range(n1):
        for j in range(n2):
            if j > 0 and (i, j - 1) in solutions:
                warm = solutions[(i, j - 1)]
            elif i > 0 and (i - 1, j) in solutions:
                warm = solutions[(i - 1, j)]
            else:
                warm = None
            pen = grid.penalty(i, j, weights)
            try:
                dec, info = fista_solve(problem, pen, cfg, warm_start=warm)
            except DivergenceError as exc:
                if strict:
                    raise
                failures[(i, j)] = str(exc)
                continue
            solutions[(i, j)] = dec
            infos[(i, j)] = info
    return PathResult(grid=grid, solutions=solutions, infos=infos, failures=failures)
