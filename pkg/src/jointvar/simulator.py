"""Multi-subject VAR data generation with controlled heterogeneity.

Supports are assigned in G rounds: round g picks a fresh set of path
locations (a stated proportion of the d*d grid, disjoint from earlier
rounds) and a random set of subjects (a stated proportion of K) who all
receive those locations. Coefficient values are then drawn independently
per subject from a uniform magnitude interval, so subjects sharing a path
location still differ in its value, and each subject's matrix is rescaled
into the stable region if needed.

A second generator builds the simpler common/unique layout: one path set
shared by every subject plus per-subject disjoint unique sets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .var_core import (
    DEFAULT_BURN_IN,
    MultiSubjectSeries,
    VarModel,
    simulate_var,
    spectral_radius,
)

#: Named heterogeneity presets: (path proportions, subject proportions).
#: "no" shares one fifth of all paths across every subject; "low" adds
#: progressively rarer paths to large subject fractions; "high" reverses the
#: subject fractions so the rarest paths are the widely shared ones.
CONDITIONS: dict[str, tuple[tuple[float, ...], tuple[float, ...]]] = {
    "no": ((1 / 5,), (1.0,)),
    "low": ((1 / 5, 1 / 10, 1 / 20), (1.0, 2 / 3, 1 / 3)),
    "high": ((1 / 5, 1 / 10, 1 / 20), (1 / 3, 2 / 3, 1.0)),
}

_INT_TOL = 1e-9


def _as_int(x: float, what: str) -> int:
    n = round(x)
    if abs(x - n) > _INT_TOL:
        raise ValueError(f"{what} = {x!r} is not an integer")
    return int(n)


@dataclass(frozen=True)
class HeterogeneitySpec:
    """Design of one heterogeneity condition.

    ``pi_p[g]`` is the fraction of the d*d paths assigned in round g
    (strictly decreasing, summing to at most 1); ``pi_i[g]`` is the fraction
    of the K subjects receiving them. Both must yield integer counts.
    Coefficient magnitudes are drawn from [value_lb, value_ub]; matrices are
    rescaled to spectral radius ``stability_target`` when they land outside.
    """

    pi_p: tuple[float, ...]
    pi_i: tuple[float, ...]
    d: int
    k: int
    value_lb: float = 0.1
    value_ub: float = 0.9
    stability_target: float = 0.95
    random_sign: bool = False

    def __post_init__(self) -> None:
        pi_p = tuple(float(x) for x in self.pi_p)
        pi_i = tuple(float(x) for x in self.pi_i)
        if len(pi_p) != len(pi_i) or not pi_p:
            raise ValueError("pi_p and pi_i must be nonempty and equally long")
        if any(not 0.0 < x <= 1.0 for x in pi_p + pi_i):
            raise ValueError("proportions must lie in (0, 1]")
        if any(b >= a for a, b in zip(pi_p, pi_p[1:], strict=False)):
            raise ValueError("pi_p must be strictly decreasing")
        if sum(pi_p) > 1.0 + _INT_TOL:
            raise ValueError(f"pi_p sums to {sum(pi_p):.4f} > 1")
        if self.d < 1 or self.k < 1:
            raise ValueError("d and k must be >= 1")
        for g, x in enumerate(pi_p):
            _as_int(x * self.d * self.d, f"pi_p[{g}] * d^2")
        for g, x in enumerate(pi_i):
            _as_int(x * self.k, f"pi_i[{g}] * k")
        if not 0.0 < self.value_lb <= self.value_ub:
            raise ValueError("need 0 < value_lb <= value_ub")
        if not 0.0 < self.stability_target < 1.0:
            raise ValueError("stability_target must be in (0, 1)")
        object.__setattr__(self, "pi_p", pi_p)
        object.__setattr__(self, "pi_i", pi_i)

    @property
    def n_groups(self) -> int:
        return len(self.pi_p)

    @property
    def path_counts(self) -> tuple[int, ...]:
        return tuple(_as_int(x * self.d * self.d, "path count") for x in self.pi_p)

    @property
    def subject_counts(self) -> tuple[int, ...]:
        return tuple(_as_int(x * self.k, "subject count") for x in self.pi_i)

    @classmethod
    def from_condition(cls, name: str, d: int = 10, k: int = 15, **kwargs) -> HeterogeneitySpec:
        if name not in CONDITIONS:
            raise ValueError(
                f"unknown condition {name!r}; expected one of {sorted(CONDITIONS)}"
            )
        pi_p, pi_i = CONDITIONS[name]
        return cls(pi_p=pi_p, pi_i=pi_i, d=d, k=k, **kwargs)


@dataclass(frozen=True)
class SupportAssignment:
    """Outcome of the round-based support draw: per-subject boolean masks
    (K x d x d) plus each round's flat path indices and subject indices."""

    masks: np.ndarray
    group_paths: tuple[np.ndarray, ...]
    group_subjects: tuple[np.ndarray, ...]


@dataclass(frozen=True)
class GeneratedDataset:
    """Simulated series together with the generating truth."""

    series: MultiSubjectSeries
    true_models: tuple[VarModel, ...]
    true_common_support: np.ndarray
    true_supports: np.ndarray

    @property
    def k(self) -> int:
        return self.series.k


def assign_supports(spec: HeterogeneitySpec, seed=None) -> SupportAssignment:
    """Draw path locations and subject sets round by round.

    Round g selects spec.path_counts[g] unused locations uniformly without
    replacement and spec.subject_counts[g] subjects uniformly from all K;
    every selected subject's mask gains those locations.
    """
    rng = np.random.default_rng(seed)
    d, k = spec.d, spec.k
    path_counts = spec.path_counts
    if sum(path_counts) > d * d:
        raise ValueError(
            f"cumulative path demand {sum(path_counts)} exceeds d^2 = {d * d}"
        )
    remaining = np.arange(d * d)
    masks = np.zeros((k, d, d), dtype=bool)
    group_paths, group_subjects = [], []
    for n_paths, n_subj in zip(path_counts, spec.subject_counts):
        paths = rng.choice(remaining, size=n_paths, replace=False)
        remaining = np.setdiff1d(remaining, paths, assume_unique=True)
        subjects = rng.choice(k, size=n_subj, replace=False)
        rows, cols = np.unravel_index(paths, (d, d))
        for s in subjects:
            masks[s, rows, cols] = True
        group_paths.append(np.sort(paths))
        group_subjects.append(np.sort(subjects))
    return SupportAssignment(
        masks=masks,
        group_paths=tuple(group_paths),
        group_subjects=tuple(group_subjects),
    )


def rescale_to_stability(model: VarModel, target: float) -> VarModel:
    """Shrink a model into the stable region, preserving its zero pattern.

    If the spectral radius rho exceeds ``target``, lag-l matrices are scaled
    by (target/rho)**l, which moves every companion eigenvalue onto
    target/rho times its original value.
    """
    if not 0.0 < target < 1.0:
        raise ValueError("target must be in (0, 1)")
    rho = spectral_radius(model)
    if rho <= target:
        return model
    c = target / rho
    phi = tuple(m * c ** (lag + 1) for lag, m in enumerate(model.phi))
    return VarModel(phi=phi, noise_cov=model.noise_cov)


def draw_coefficients(
    masks: np.ndarray | SupportAssignment, spec: HeterogeneitySpec, seed=None
) -> list[VarModel]:
    """Independent per-subject coefficient draws on the assigned supports.

    Each masked entry gets a magnitude from Uniform(value_lb, value_ub), a
    positive sign (random sign only when spec.random_sign), and the matrix is
    rescaled into the stable region. Noise covariance is the identity.
    """
    if isinstance(masks, SupportAssignment):
        masks = masks.masks
    masks = np.asarray(masks, dtype=bool)
    rng = np.random.default_rng(seed)
    models = []
    eye = np.eye(spec.d)
    for k in range(masks.shape[0]):
        mask = masks[k]
        nnz = int(mask.sum())
        vals = rng.uniform(spec.value_lb, spec.value_ub, size=nnz)
        if spec.random_sign:
            vals *= rng.choice([-1.0, 1.0], size=nnz)
        phi = np.zeros((spec.d, spec.d))
        phi[mask] = vals
        model = VarModel(phi=(phi,), noise_cov=eye)
        models.append(rescale_to_stability(model, spec.stability_target))
    return models


def generate_dataset(
    spec: HeterogeneitySpec,
    t_len: int,
    seed=None,
    burn_in: int = DEFAULT_BURN_IN,
) -> GeneratedDataset:
    """Assign supports, draw coefficients, and simulate each subject's series
    (unit noise covariance). Records the generating truth for scoring."""
    root = np.random.SeedSequence(seed)
    children = root.spawn(2 + spec.k)
    assignment = assign_supports(spec, children[0])
    models = draw_coefficients(assignment, spec, children[1])
    subjects = tuple(
        simulate_var(
            models[k],
            t_len,
            burn_in=burn_in,
            seed=children[2 + k],
            subject_id=f"subj{k + 1:02d}",
        )
        for k in range(spec.k)
    )
    supports = assignment.masks.copy()
    return GeneratedDataset(
        series=MultiSubjectSeries(subjects),
        true_models=tuple(models),
        true_common_support=supports.all(axis=0),
        true_supports=supports,
    )


def generate_common_unique(
    k: int,
    d: int,
    t_len: int,
    prop_fill_com: float,
    prop_fill_ind: float,
    lb: float = 0.1,
    ub: float = 0.9,
    seed=None,
    stability_target: float = 0.95,
    random_sign: bool = False,
    burn_in: int = DEFAULT_BURN_IN,
) -> GeneratedDataset:
    """Common/unique support layout: one path set shared by all subjects plus
    per-subject unique sets, all mutually disjoint. Values and stability as in
    ``draw_coefficients``."""
    if k < 1 or d < 1:
        raise ValueError("k and d must be >= 1")
    if prop_fill_com < 0 or prop_fill_ind < 0 or prop_fill_com + prop_fill_ind > 1.0 + _INT_TOL:
        raise ValueError("proportions must be nonnegative and sum to at most 1")
    n_com = _as_int(prop_fill_com * d * d, "prop_fill_com * d^2")
    n_ind = _as_int(prop_fill_ind * d * d, "prop_fill_ind * d^2")
    demand = n_com + k * n_ind
    if demand > d * d:
        raise ValueError(
            f"{n_com} common + {k} x {n_ind} unique paths demand {demand} "
            f"locations but only d^2 = {d * d} exist"
        )
    root = np.random.SeedSequence(seed)
    children = root.spawn(2 + k)
    rng = np.random.default_rng(children[0])

    remaining = np.arange(d * d)
    com_paths = rng.choice(remaining, size=n_com, replace=False)
    remaining = np.setdiff1d(remaining, com_paths, assume_unique=True)
    masks = np.zeros((k, d, d), dtype=bool)
    rows, cols = np.unravel_index(com_paths, (d, d))
    masks[:, rows, cols] = True
    for s in range(k):
        ind_paths = rng.choice(remaining, size=n_ind, replace=False)
        remaining = np.setdiff1d(remaining, ind_paths, assume_unique=True)
        r, c = np.unravel_index(ind_paths, (d, d))
        masks[s, r, c] = True

    spec = HeterogeneitySpec(
        pi_p=(1.0,), pi_i=(1.0,), d=d, k=k,
        value_lb=lb, value_ub=ub,
        stability_target=stability_target, random_sign=random_sign,
    )
    models = draw_coefficients(masks, spec, children[1])
    subjects = tuple(
        simulate_var(
            models[s], t_len, burn_in=burn_in, seed=children[2 + s],
            subject_id=f"subj{s + 1:02d}",
        )
        for s in range(k)
    )
    common = np.zeros((d, d), dtype=bool)
    common[rows, cols] = True
    return GeneratedDataset(
        series=MultiSubjectSeries(subjects),
        true_models=tuple(models),
        true_common_support=common,
        true_supports=masks,
    )
