"""Single-subject VAR(p) machinery: model container, regression form, stability,
simulation, and least-squares fitting.

Conventions used throughout the package:

* series are stored as ``d x T`` arrays (rows = variables, columns = time);
* all estimators assume zero-mean data; callers center first (see ``center``);
* transition matrices are stacked horizontally as ``d x (d*p)`` blocks
  ``[phi_1 ... phi_p]`` whenever a single matrix is more convenient than a
  list of lag matrices.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

DEFAULT_BURN_IN = 200

_SYM_TOL = 1e-10
_EIG_TOL = 1e-10


class RankDeficientDesign(UserWarning):
    """Raised as a warning when the OLS design has effective rank < d*p."""


def _readonly(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=float, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class VarModel:
    """VAR(p) parameters: lag matrices ``phi`` (each d x d) and the noise
    covariance ``noise_cov`` (d x d, symmetric PSD)."""

    phi: tuple[np.ndarray, ...]
    noise_cov: np.ndarray

    def __post_init__(self) -> None:
        if len(self.phi) < 1:
            raise ValueError("VarModel needs at least one lag matrix")
        phi = tuple(_readonly(m) for m in self.phi)
        d = phi[0].shape[0]
        for lag, m in enumerate(phi, start=1):
            if m.ndim != 2 or m.shape != (d, d):
                raise ValueError(
                    f"lag-{lag} matrix has shape {m.shape}; expected ({d}, {d})"
                )
        cov = _readonly(self.noise_cov)
        if cov.shape != (d, d):
            raise ValueError(f"noise_cov has shape {cov.shape}; expected ({d}, {d})")
        if np.max(np.abs(cov - cov.T)) > _SYM_TOL:
            raise ValueError("noise_cov is not symmetric within 1e-10")
        if np.min(np.linalg.eigvalsh(0.5 * (cov + cov.T))) < -_EIG_TOL:
            raise ValueError("noise_cov has an eigenvalue below -1e-10")
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "noise_cov", cov)

    @property
    def p(self) -> int:
        return len(self.phi)

    @property
    def d(self) -> int:
        return self.phi[0].shape[0]

    def stacked(self) -> np.ndarray:
        """Lag matrices stacked horizontally: ``[phi_1 ... phi_p]``, d x (d*p)."""
        return np.hstack(self.phi)

    @classmethod
    def from_stacked(cls, mat: np.ndarray, noise_cov: np.ndarray | None = None) -> VarModel:
        """Build a model from a ``d x (d*p)`` stacked transition matrix."""
        mat = np.asarray(mat, dtype=float)
        d = mat.shape[0]
        if mat.ndim != 2 or mat.shape[1] % d != 0:
            raise ValueError(f"stacked matrix shape {mat.shape} is not d x (d*p)")
        p = mat.shape[1] // d
        phi = tuple(mat[:, lag * d : (lag + 1) * d] for lag in range(p))
        if noise_cov is None:
            noise_cov = np.eye(d)
        return cls(phi=phi, noise_cov=noise_cov)


@dataclass(frozen=True)
class SubjectSeries:
    """One subject's observed series: ``data`` is d x T, columns are time points."""

    data: np.ndarray
    subject_id: str = "subject"

    def __post_init__(self) -> None:
        data = _readonly(self.data)
        if data.ndim != 2:
            raise ValueError(f"series {self.subject_id!r} must be 2-D, got ndim={data.ndim}")
        if not np.all(np.isfinite(data)):
            raise ValueError(f"series {self.subject_id!r} contains non-finite entries")
        object.__setattr__(self, "data", data)

    @property
    def d(self) -> int:
        return self.data.shape[0]

    @property
    def t_len(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class MultiSubjectSeries:
    """An ordered collection of subject series sharing the same variable count."""

    subjects: tuple[SubjectSeries, ...]

    def __post_init__(self) -> None:
        subjects = tuple(self.subjects)
        if len(subjects) < 1:
            raise ValueError("need at least one subject")
        d = subjects[0].d
        for s in subjects:
            if s.d != d:
                raise ValueError(
                    f"subject {s.subject_id!r} has {s.d} variables; expected {d}"
                )
        object.__setattr__(self, "subjects", subjects)

    @property
    def k(self) -> int:
        return len(self.subjects)

    @property
    def d(self) -> int:
        return self.subjects[0].d

    @property
    def t_lens(self) -> tuple[int, ...]:
        return tuple(s.t_len for s in self.subjects)

    def __iter__(self):
        return iter(self.subjects)


@dataclass(frozen=True)
class RegressionForm:
    """Lagged regression layout of a series: outcomes ``y`` (d x n) and the
    design ``z`` (d*p x n) whose column t stacks lags 1..p of outcome t."""

    y: np.ndarray
    z: np.ndarray

    def __post_init__(self) -> None:
        y = _readonly(self.y)
        z = _readonly(self.z)
        if y.ndim != 2 or z.ndim != 2 or y.shape[1] != z.shape[1]:
            raise ValueError(f"inconsistent regression form: y {y.shape}, z {z.shape}")
        if z.shape[0] % y.shape[0] != 0:
            raise ValueError(f"design rows {z.shape[0]} not a multiple of d={y.shape[0]}")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "z", z)

    @property
    def n(self) -> int:
        return self.y.shape[1]

    @property
    def p(self) -> int:
        return self.z.shape[0] // self.y.shape[0]


def build_regression(series: SubjectSeries, p: int) -> RegressionForm:
    """Rewrite a series in lagged regression form.

    Column t of ``y`` is the observation at time p+t; column t of ``z`` stacks
    that observation's p predecessors (lag 1 block on top).
    """
    if p < 1:
        raise ValueError("lag order p must be >= 1")
    d, t_len = series.data.shape
    if t_len < p + 2:
        raise ValueError(
            f"series {series.subject_id!r} has T={t_len}; "
            f"estimation with p={p} needs at least T={p + 2}"
        )
    x = series.data
    y = x[:, p:]
    z = np.vstack([x[:, p - lag : t_len - lag] for lag in range(1, p + 1)])
    return RegressionForm(y=y, z=z)


def companion_matrix(model: VarModel) -> np.ndarray:
    """Companion form of the lag polynomial: top block row ``[phi_1 ... phi_p]``,
    identity blocks on the subdiagonal. For p=1 this is ``phi_1`` itself."""
    d, p = model.d, model.p
    if p == 1:
        return model.phi[0].copy()
    comp = np.zeros((d * p, d * p))
    comp[:d, :] = model.stacked()
    comp[d:, : d * (p - 1)] = np.eye(d * (p - 1))
    return comp


def spectral_radius(model: VarModel) -> float:
    """Largest modulus among companion-matrix eigenvalues."""
    return float(np.max(np.abs(np.linalg.eigvals(companion_matrix(model)))))


def is_stable(model: VarModel, margin: float = 1.0) -> bool:
    """True iff the companion spectral radius is strictly below ``margin``."""
    if not 0.0 < margin <= 1.0:
        raise ValueError(f"margin must be in (0, 1], got {margin}")
    return spectral_radius(model) < margin


def _psd_factor(cov: np.ndarray) -> np.ndarray:
    """Factor L with L L' = cov for a PSD matrix (eigen-based, handles singular)."""
    w, v = np.linalg.eigh(0.5 * (cov + cov.T))
    return v * np.sqrt(np.clip(w, 0.0, None))


def simulate_var(
    model: VarModel,
    t_len: int,
    burn_in: int = DEFAULT_BURN_IN,
    seed=None,
    init: np.ndarray | None = None,
    subject_id: str = "sim",
) -> SubjectSeries:
    """Iterate the VAR recursion with Gaussian noise of covariance ``noise_cov``.

    The first ``burn_in`` generated points are discarded. The output depends
    only on (model, t_len, burn_in, seed, init).
    """
    if t_len < 1:
        raise ValueError("t_len must be >= 1")
    if burn_in < 0:
        raise ValueError("burn_in must be >= 0")
    rho = spectral_radius(model)
    if rho >= 1.0:
        raise ValueError(
            f"refusing to simulate an unstable model (spectral radius {rho:.6g} >= 1)"
        )
    d, p = model.d, model.p
    total = burn_in + t_len
    rng = np.random.default_rng(seed)
    shocks = _psd_factor(model.noise_cov) @ rng.standard_normal((d, total))

    x = np.zeros((d, p + total))
    if init is not None:
        init = np.asarray(init, dtype=float)
        if init.shape != (d, p):
            raise ValueError(f"init must have shape ({d}, {p}), got {init.shape}")
        x[:, :p] = init
    for t in range(total):
        acc = shocks[:, t].copy()
        for lag in range(1, p + 1):
            acc += model.phi[lag - 1] @ x[:, p + t - lag]
        x[:, p + t] = acc
    return SubjectSeries(data=x[:, p + burn_in :], subject_id=subject_id)


def fit_ols(series: SubjectSeries, p: int) -> VarModel:
    """Row-wise least-squares fit of a VAR(p).

    Solves min ||Y - phi Z||_2^2 via SVD; on a rank-deficient design the
    minimum-norm solution is returned and a ``RankDeficientDesign`` warning is
    emitted. The residual covariance (dof-corrected) is stored as noise_cov.
    """
    form = build_regression(series, p)
    y, z = form.y, form.z
    n = form.n
    dp = z.shape[0]
    if n <= dp:
        raise ValueError(
            f"OLS needs more usable time points than regressors: "
            f"T-p={n} <= d*p={dp} for series {series.subject_id!r}"
        )
    phi_t, _, rank, _ = np.linalg.lstsq(z.T, y.T, rcond=None)
    if rank < dp:
        warnings.warn(
            f"design for series {series.subject_id!r} has effective rank "
            f"{rank} < {dp}; returning the minimum-norm solution",
            RankDeficientDesign,
            stacklevel=2,
        )
    phi = phi_t.T
    resid = y - phi @ z
    cov = resid @ resid.T / max(n - dp, 1)
    cov = 0.5 * (cov + cov.T)
    return VarModel.from_stacked(phi, noise_cov=cov)


def center(data: MultiSubjectSeries) -> tuple[MultiSubjectSeries, np.ndarray]:
    """Subtract each subject's per-variable mean; returns (centered, means).

    ``means`` has shape (K, d), one row per subject.
    """
    centered = []
    means = np.empty((data.k, data.d))
    for k, s in enumerate(data):
        mu = s.data.mean(axis=1)
        means[k] = mu
        centered.append(SubjectSeries(s.data - mu[:, None], subject_id=s.subject_id))
    return MultiSubjectSeries(tuple(centered)), means
