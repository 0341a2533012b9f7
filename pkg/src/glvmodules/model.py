"""Domain types, hyperparameters, and prior densities for the module-structured
generalized Lotka-Volterra model.

Abundances are handled internally in rescaled units (raw concentrations divided
by a dataset-derived constant, see :func:`abundance_scale`) so the Gaussian
linear algebra in the sampler stays well conditioned. Coefficients are
transformed back to raw units on output.
"""

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import gammaln

from .errors import StructuralInconsistencyError, ValidationError

__all__ = [
    "Taxon",
    "TimeGrid",
    "Subject",
    "Dataset",
    "GlvSelfParams",
    "ModuleStructure",
    "VarianceParams",
    "Hyperparameters",
    "LatentState",
    "expand_to_taxa",
    "crp_log_prob",
    "sample_crp_partition",
    "log_prior_variances",
    "scaled_inv_chi_sq_logpdf",
    "gamma_logpdf",
    "canonical_assignments",
    "abundance_scale",
]


@dataclass(frozen=True)
class Taxon:
    """One taxonomic unit. Ids are dense integer indices in [0, n), stable across a run."""

    id: int
    name: str


@dataclass(frozen=True)
class TimeGrid:
    """Observation times plus the dense latent grid used for integration.

    dense_times is a strictly increasing superset of observation_times; every
    observation time appears exactly once. deltas[k] = dense_times[k+1] -
    dense_times[k].
    """

    observation_times: np.ndarray
    dense_times: np.ndarray

    def __post_init__(self):
        obs = np.asarray(self.observation_times, dtype=float)
        dense = np.asarray(self.dense_times, dtype=float)
        object.__setattr__(self, "observation_times", obs)
        object.__setattr__(self, "dense_times", dense)
        if obs.ndim != 1 or dense.ndim != 1:
            raise ValidationError("time grids must be one-dimensional")
        if len(obs) == 0:
            raise ValidationError("observation grid is empty")
        if np.any(np.diff(obs) <= 0):
            raise ValidationError("observation times must be strictly increasing")
        if np.any(np.diff(dense) <= 0):
            raise ValidationError("dense times must be strictly increasing")
        # every observation time must appear exactly once in the dense grid
        idx = np.searchsorted(dense, obs)
        if np.any(idx >= len(dense)) or not np.allclose(dense[np.minimum(idx, len(dense) - 1)], obs):
            raise ValidationError("dense grid must contain every observation time")

    @classmethod
    def from_observations(cls, observation_times, max_step: float) -> "TimeGrid":
        """Build a dense grid by subdividing each observation gap to steps <= max_step."""
        obs = np.asarray(observation_times, dtype=float)
        if max_step <= 0:
            raise ValidationError("max_step must be positive")
        if obs.ndim != 1 or len(obs) == 0:
            raise ValidationError("observation grid is empty")
        if np.any(np.diff(obs) <= 0):
            raise ValidationError("observation times must be strictly increasing")
        pieces = [np.array([obs[0]])]
        for t0, t1 in zip(obs[:-1], obs[1:]):
            n_sub = int(np.ceil((t1 - t0) / max_step - 1e-12))
            pieces.append(np.linspace(t0, t1, n_sub + 1)[1:])
        dense = np.concatenate(pieces)
        return cls(observation_times=obs, dense_times=dense)

    @property
    def deltas(self) -> np.ndarray:
        return np.diff(self.dense_times)

    @property
    def n_dense(self) -> int:
        return len(self.dense_times)

    @property
    def observation_indices(self) -> np.ndarray:
        """Indices of the observation times within the dense grid."""
        return np.searchsorted(self.dense_times, self.observation_times)


@dataclass(frozen=True)
class Subject:
    """One biological replicate: counts, qPCR totals, and its time grid.

    counts rows align with grid.observation_times. qpcr_variance holds the
    known per-measurement variance of the total-concentration assay.
    """

    id: str
    grid: TimeGrid
    counts: np.ndarray
    qpcr_mean: np.ndarray
    qpcr_variance: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts)
        qm = np.asarray(self.qpcr_mean, dtype=float)
        qv = np.asarray(self.qpcr_variance, dtype=float)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "qpcr_mean", qm)
        object.__setattr__(self, "qpcr_variance", qv)
        n_obs = len(self.grid.observation_times)
        if counts.ndim != 2 or counts.shape[0] != n_obs:
            raise ValidationError(
                f"subject {self.id}: counts must have one row per observation time"
            )
        if not np.issubdtype(counts.dtype, np.integer):
            raise ValidationError(f"subject {self.id}: counts must be integers")
        if np.any(counts < 0):
            raise ValidationError(f"subject {self.id}: negative counts")
        if qm.shape != (n_obs,) or qv.shape != (n_obs,):
            raise ValidationError(
                f"subject {self.id}: qPCR sequences need one entry per observation"
            )
        if np.any(qm <= 0):
            raise ValidationError(f"subject {self.id}: qPCR totals must be positive")
        if np.any(qv <= 0):
            raise ValidationError(f"subject {self.id}: qPCR variances must be positive")

    @property
    def read_depths(self) -> np.ndarray:
        """Per-sample read depth, always the row sum of the counts."""
        return self.counts.sum(axis=1)

    @property
    def n_taxa(self) -> int:
        return self.counts.shape[1]


@dataclass(frozen=True)
class Dataset:
    """A study: subjects sharing one taxa list, plus fixed count-dispersion parameters.

    dispersion_params = (a0, a1) of the abundance-dependent Negative Binomial
    dispersion; they are pre-trained on raw reads and stay fixed during
    inference.
    """

    subjects: tuple
    taxa: tuple
    dispersion_params: tuple

    def __post_init__(self):
        object.__setattr__(self, "subjects", tuple(self.subjects))
        object.__setattr__(self, "taxa", tuple(self.taxa))
        a0, a1 = self.dispersion_params
        if a0 < 0 or a1 < 0:
            raise ValidationError("dispersion parameters must be non-negative")
        object.__setattr__(self, "dispersion_params", (float(a0), float(a1)))
        ids = [t.id for t in self.taxa]
        if ids != list(range(len(ids))):
            raise ValidationError("taxon ids must be dense and ordered 0..n-1")
        if len({t.name for t in self.taxa}) != len(self.taxa):
            raise ValidationError("duplicate taxon names")
        for s in self.subjects:
            if s.n_taxa != len(self.taxa):
                raise ValidationError(f"subject {s.id} does not match the taxa list")

    @property
    def n_taxa(self) -> int:
        return len(self.taxa)


@dataclass(frozen=True)
class GlvSelfParams:
    """Per-species growth rates (1/day) and self-interaction terms (1/(day*abundance))."""

    growth: np.ndarray
    self_interaction: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.growth, dtype=float)
        s = np.asarray(self.self_interaction, dtype=float)
        object.__setattr__(self, "growth", g)
        object.__setattr__(self, "self_interaction", s)
        if g.shape != s.shape or g.ndim != 1:
            raise ValidationError("growth and self_interaction must be equal-length vectors")
        if not (np.all(np.isfinite(g)) and np.all(np.isfinite(s))):
            raise ValidationError("self parameters must be finite")


def canonical_assignments(assignments) -> np.ndarray:
    """Relabel module ids so each module is named by its smallest member taxon index."""
    c = np.asarray(assignments)
    out = np.empty_like(c)
    for label in np.unique(c):
        members = np.where(c == label)[0]
        out[members] = members.min()
    return out


@dataclass(frozen=True)
class ModuleStructure:
    """Partition of taxa into interaction modules plus the module-level directed graph.

    b maps ordered pairs (target_module, source_module) of distinct occupied
    modules to interaction weights; z holds the 0/1 edge indicators on the same
    key set. Module ids are canonical: the smallest member taxon index.
    """

    assignments: np.ndarray
    interactions: dict
    edges: dict

    def __post_init__(self):
        c = np.asarray(self.assignments)
        object.__setattr__(self, "assignments", c)
        object.__setattr__(self, "interactions", dict(self.interactions))
        object.__setattr__(self, "edges", dict(self.edges))
        if c.ndim != 1 or len(c) == 0:
            raise ValidationError("assignments must be a non-empty vector")
        if not np.array_equal(c, canonical_assignments(c)):
            raise ValidationError("module ids must be canonical (smallest member index)")
        occupied = set(int(m) for m in np.unique(c))
        pairs = {(l, m) for l in occupied for m in occupied if l != m}
        bkeys = set(self.interactions)
        zkeys = set(self.edges)
        if bkeys != zkeys:
            raise StructuralInconsistencyError("interaction and edge key sets differ")
        if bkeys != pairs:
            missing = pairs - bkeys
            extra = bkeys - pairs
            raise StructuralInconsistencyError(
                f"module pair keys inconsistent with assignments "
                f"(missing={sorted(missing)}, extra={sorted(extra)})"
            )
        for k, v in self.edges.items():
            if v not in (0, 1):
                raise StructuralInconsistencyError(f"edge indicator {k} must be 0 or 1")

    @property
    def module_ids(self) -> list:
        return sorted(int(m) for m in np.unique(self.assignments))

    @property
    def n_modules(self) -> int:
        return len(np.unique(self.assignments))


def expand_to_taxa(modules: ModuleStructure, n_taxa: int) -> np.ndarray:
    """Expand the module-level interaction graph to a taxa-level matrix.

    Entry (i, j) is b[c_i, c_j] * z[c_i, c_j] when taxa i and j sit in
    different modules, and exactly zero on the diagonal and within-module
    blocks. Rows of taxa sharing a target module are identical outside that
    module by construction.
    """
    c = modules.assignments
    if len(c) != n_taxa:
        raise StructuralInconsistencyError(
            f"assignments cover {len(c)} taxa, expected {n_taxa}"
        )
    mat = np.zeros((n_taxa, n_taxa))
    for i in range(n_taxa):
        for j in range(n_taxa):
            if c[i] == c[j]:
                continue
            key = (int(c[i]), int(c[j]))
            if key not in modules.interactions:
                raise StructuralInconsistencyError(f"missing interaction entry {key}")
            mat[i, j] = modules.interactions[key] * modules.edges[key]
    return mat


def crp_log_prob(assignments, alpha: float) -> float:
    """Log probability of a partition under the Chinese-restaurant representation.

    Uses the exchangeable partition probability alpha^K * Gamma(alpha) /
    Gamma(alpha + n) * prod_l Gamma(n_l), so the value depends only on the
    multiset of cluster sizes.
    """
    c = np.asarray(assignments)
    if c.ndim != 1 or len(c) == 0:
        raise ValidationError("assignments must be a non-empty vector")
    if alpha <= 0:
        raise ValidationError("alpha must be positive")
    _, sizes = np.unique(c, return_counts=True)
    n = len(c)
    k = len(sizes)
    return (
        k * np.log(alpha)
        + float(np.sum(gammaln(sizes)))
        + gammaln(alpha)
        - gammaln(alpha + n)
    )


def sample_crp_partition(n: int, alpha: float, rng) -> np.ndarray:
    """Draw a partition of n items by sequential Chinese-restaurant seating.

    Returns canonical assignments (smallest member index labels).
    """
    if n < 1:
        raise ValidationError("need at least one item")
    if alpha <= 0:
        raise ValidationError("alpha must be positive")
    c = np.zeros(n, dtype=int)
    sizes = [1]
    for i in range(1, n):
        weights = np.array(sizes + [alpha], dtype=float)
        choice = rng.choice(len(weights), p=weights / weights.sum())
        if choice == len(sizes):
            sizes.append(1)
        else:
            sizes[choice] += 1
        c[i] = choice
    return canonical_assignments(c)


@dataclass(frozen=True)
class VarianceParams:
    """Sampled variance terms plus the fixed coupling and edge hyperparameters."""

    sigma_a_sq: float
    sigma_b_sq: float
    sigma_w_sq: float
    sigma_q_sq: float
    alpha: float
    pi_z: float

    def __post_init__(self):
        for name in ("sigma_a_sq", "sigma_b_sq", "sigma_w_sq", "sigma_q_sq", "alpha"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be strictly positive")
        if not 0.0 < self.pi_z < 1.0:
            raise ValidationError("pi_z must lie in the open unit interval")


@dataclass(frozen=True)
class Hyperparameters:
    """Prior hyperparameters and fixed model constants.

    Fields left as None are calibrated from the dataset at initialization
    (see sampler.initialize_state): the process-noise prior scale, the
    coupling variance, the box bound, and the abundance rescale constant.
    """

    a_var_dof: float = 2.5
    a_var_scale: float = 1.0
    b_var_dof: float = 2.5
    b_var_scale: float = 4.0
    w_var_dof: float = 2.5
    w_var_scale: float = None
    alpha_shape: float = 1.0
    alpha_rate: float = 1.0
    sigma_q_sq: float = None
    box_bound: float = None
    pi_z: float = 0.5
    max_step: float = 0.25
    rescale: float = None
    positivity_floor: float = 1e-6
    init_state_var: float = None
    qpcr_log_scale: bool = False

    def __post_init__(self):
        for name in ("a_var_dof", "a_var_scale", "b_var_dof", "b_var_scale",
                     "w_var_dof", "alpha_shape", "alpha_rate", "max_step",
                     "positivity_floor"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise ValidationError(f"{name} must be positive")
        for name in ("w_var_scale", "sigma_q_sq", "box_bound", "rescale", "init_state_var"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise ValidationError(f"{name} must be positive when given")
        if not 0.0 < self.pi_z < 1.0:
            raise ValidationError("pi_z must lie in the open unit interval")

    def with_values(self, **kwargs) -> "Hyperparameters":
        return replace(self, **kwargs)


@dataclass(frozen=True)
class LatentState:
    """One full configuration of the latent variables.

    x and q are tuples of per-subject dense-grid matrices [n_dense x n_taxa];
    q entries lie in [0, box_bound) while x is unconstrained in sign (the box
    acts through the coupling only). scale records the abundance rescale
    constant so raw units can be recovered (raw = internal * scale).
    """

    x: tuple
    q: tuple
    self_params: GlvSelfParams
    modules: ModuleStructure
    variances: VarianceParams
    scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(np.asarray(m, dtype=float) for m in self.x))
        object.__setattr__(self, "q", tuple(np.asarray(m, dtype=float) for m in self.q))
        if len(self.x) != len(self.q):
            raise ValidationError("x and q must have one matrix per subject")
        for xs, qs in zip(self.x, self.q):
            if xs.shape != qs.shape:
                raise ValidationError("x and q shapes must match per subject")
            if np.any(qs < 0):
                raise ValidationError("q entries must be non-negative")
        if self.scale <= 0:
            raise ValidationError("scale must be positive")


def abundance_scale(dataset: Dataset) -> float:
    """Dataset-derived rescale constant: geometric mean of qPCR totals over n_taxa."""
    totals = np.concatenate([s.qpcr_mean for s in dataset.subjects])
    return float(np.exp(np.mean(np.log(totals))) / dataset.n_taxa)


def scaled_inv_chi_sq_logpdf(value: float, dof: float, scale: float) -> float:
    """Log density of the scaled Inverse-Chi-squared distribution."""
    if value <= 0:
        raise ValidationError("variance value must be positive")
    half = dof / 2.0
    return (
        half * np.log(half * scale)
        - gammaln(half)
        - (half + 1.0) * np.log(value)
        - half * scale / value
    )


def gamma_logpdf(value: float, shape: float, rate: float) -> float:
    """Log density of the Gamma distribution in shape/rate parameterization."""
    if value <= 0:
        raise ValidationError("value must be positive")
    return shape * np.log(rate) - gammaln(shape) + (shape - 1.0) * np.log(value) - rate * value


def log_prior_variances(v: VarianceParams, h: Hyperparameters) -> float:
    """Joint log prior of the sampled variance terms and the DP concentration.

    Sum of scaled Inverse-Chi-squared terms for sigma_a_sq, sigma_b_sq and
    sigma_w_sq plus the Gamma term for alpha. The fixed parameters (coupling
    variance, pi_z) carry no prior mass.
    """
    if h.w_var_scale is None:
        raise ValidationError("w_var_scale must be calibrated before evaluating the prior")
    return (
        scaled_inv_chi_sq_logpdf(v.sigma_a_sq, h.a_var_dof, h.a_var_scale)
        + scaled_inv_chi_sq_logpdf(v.sigma_b_sq, h.b_var_dof, h.b_var_scale)
        + scaled_inv_chi_sq_logpdf(v.sigma_w_sq, h.w_var_dof, h.w_var_scale)
        + gamma_logpdf(v.alpha, h.alpha_shape, h.alpha_rate)
    )
