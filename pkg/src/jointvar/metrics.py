"""Path-recovery and accuracy metrics against the generating truth."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .var_core import VarModel

#: Penalized estimators produce exact zeros; a tiny tolerance keeps numeric
#: dust out of the support. Thresholded-OLS estimates should be compared at 0.
DEFAULT_ZERO_TOL = 1e-12


@dataclass(frozen=True)
class ConfusionCounts:
    """Support-recovery counts for one subject; they total d*d*p."""

    tp: int
    tn: int
    fp: int
    fn: int

    def __post_init__(self) -> None:
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise ValueError("confusion counts must be nonnegative")

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


@dataclass(frozen=True)
class MetricsReport:
    """Per-subject and mean recovery/accuracy metrics."""

    mcc: np.ndarray
    sensitivity: np.ndarray
    specificity: np.ndarray
    abs_bias: np.ndarray
    rmse: np.ndarray
    zero_tol: float

    @property
    def mean_mcc(self) -> float:
        return float(self.mcc.mean())

    @property
    def mean_sensitivity(self) -> float:
        return float(self.sensitivity.mean())

    @property
    def mean_specificity(self) -> float:
        return float(self.specificity.mean())

    @property
    def mean_abs_bias(self) -> float:
        return float(self.abs_bias.mean())

    @property
    def mean_rmse(self) -> float:
        return float(self.rmse.mean())


def _stacked(x) -> np.ndarray:
    if isinstance(x, VarModel):
        return x.stacked()
    return np.asarray(x, dtype=float)


def confusion(true, est, zero_tol: float = DEFAULT_ZERO_TOL) -> ConfusionCounts:
    """Count support agreement between a generating matrix and an estimate;
    an entry is nonzero iff its magnitude exceeds ``zero_tol``."""
    if zero_tol < 0:
        raise ValueError("zero_tol must be >= 0")
    t = _stacked(true)
    e = _stacked(est)
    if t.shape != e.shape:
        raise ValueError(f"shape mismatch: true {t.shape} vs estimate {e.shape}")
    t_nz = np.abs(t) > zero_tol
    e_nz = np.abs(e) > zero_tol
    return ConfusionCounts(
        tp=int(np.sum(t_nz & e_nz)),
        tn=int(np.sum(~t_nz & ~e_nz)),
        fp=int(np.sum(~t_nz & e_nz)),
        fn=int(np.sum(t_nz & ~e_nz)),
    )


def mcc(counts: ConfusionCounts) -> float:
    """Matthews correlation coefficient; 0 by convention whenever a
    denominator factor vanishes (chance level)."""
    tp, tn, fp, fn = counts.tp, counts.tn, counts.fp, counts.fn
    denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    if denom == 0:
        return 0.0
    return (tp * tn - fp * fn) / math.sqrt(denom)


def sensitivity_specificity(counts: ConfusionCounts) -> tuple[float, float]:
    """(TP/(TP+FN), TN/(TN+FP)); a vacuous ratio (no positives, or no
    negatives, in the truth) counts as 1."""
    sens = counts.tp / (counts.tp + counts.fn) if counts.tp + counts.fn > 0 else 1.0
    spec = counts.tn / (counts.tn + counts.fp) if counts.tn + counts.fp > 0 else 1.0
    return sens, spec


def _stacked_all(x) -> np.ndarray:
    """Normalize a matrix, a VarModel, or a per-subject collection of either
    to a (K, d, dp) array."""
    if isinstance(x, VarModel):
        return x.stacked()[None]
    if isinstance(x, (list, tuple)):
        return np.stack([_stacked(m) for m in x])
    arr = np.asarray(x, dtype=float)
    return arr[None] if arr.ndim == 2 else arr


def bias_rmse(true, est) -> tuple[float, float]:
    """Mean absolute deviation and root mean square deviation per entry,
    averaged over subjects: (1/K) sum_k mean|diff_k| and
    (1/K) sum_k sqrt(mean(diff_k^2))."""
    t = _stacked_all(true)
    e = _stacked_all(est)
    if t.shape != e.shape:
        raise ValueError(f"shape mismatch: true {t.shape} vs estimate {e.shape}")
    diff = e - t
    bias = np.mean(np.abs(diff), axis=(1, 2))
    rmse = np.sqrt(np.mean(diff * diff, axis=(1, 2)))
    return float(bias.mean()), float(rmse.mean())


def evaluate(
    true_models: Sequence[VarModel] | np.ndarray,
    est_totals: np.ndarray,
    zero_tol: float = DEFAULT_ZERO_TOL,
) -> MetricsReport:
    """Score every subject's estimate against its generating matrix."""
    est = np.asarray(est_totals, dtype=float)
    k = est.shape[0]
    if len(true_models) != k:
        raise ValueError(f"{len(true_models)} true models but {k} estimates")
    mccs = np.empty(k)
    sens = np.empty(k)
    spec = np.empty(k)
    bias = np.empty(k)
    rmse = np.empty(k)
    for i in range(k):
        counts = confusion(true_models[i], est[i], zero_tol)
        mccs[i] = mcc(counts)
        sens[i], spec[i] = sensitivity_specificity(counts)
        bias[i], rmse[i] = bias_rmse(true_models[i], est[i])
    return MetricsReport(
        mcc=mccs, sensitivity=sens, specificity=spec,
        abs_bias=bias, rmse=rmse, zero_tol=zero_tol,
    )
