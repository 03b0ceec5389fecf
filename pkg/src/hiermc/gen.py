"""Seeded samplers for ground-truth instances.

Rating vectors are drawn column-by-column from an 8-pattern column profile:
pattern l = (b1, b2, b3) puts (1, b1, 1^b1) on the first cluster's groups and
(b2, b3, b2^b3) on the second's, so XOR closure holds by construction and the
uniform profile gives expected deltas of 1/2.  Graphs follow the hierarchical
SBM with edge probabilities (alpha, beta, gamma) keyed to the pair relation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import (
    DegenerateModelError,
    HierarchyConfig,
    Observation,
    Partition,
    RatingModel,
    SideGraph,
    UnsupportedFieldError,
    ValidationError,
)
from .rng import substream

__all__ = [
    "GraphParams",
    "ObservationParams",
    "ColumnSectionProfile",
    "RealObservation",
    "GaussianInstance",
    "gen_rating_model",
    "gen_partition",
    "gen_hsbm_graph",
    "sample_observations",
    "gen_hierarchical_group_means",
    "gen_gaussian_instance",
]


@dataclass(frozen=True)
class GraphParams:
    """HSBM edge probabilities: alpha within a group, beta across groups of one
    cluster, gamma across clusters.  Homophily requires alpha >= beta >= gamma."""

    alpha: float
    beta: float
    gamma: float

    def __post_init__(self):
        for name, v in (("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)):
            if not (0.0 <= v <= 1.0):
                raise ValidationError(f"{name}={v} outside [0, 1]")
        if not (self.alpha >= self.beta >= self.gamma):
            raise ValidationError("need alpha >= beta >= gamma")

    @classmethod
    def from_tilde(cls, alpha_tilde: float, beta_tilde: float, gamma_tilde: float,
                   n: int) -> "GraphParams":
        """Scaled parameterization x = x_tilde * ln(n) / n (natural log)."""
        s = math.log(n) / n
        return cls(alpha=alpha_tilde * s, beta=beta_tilde * s, gamma=gamma_tilde * s)


@dataclass(frozen=True)
class ObservationParams:
    """Erasure/flip channel: each entry observed w.p. p, flipped w.p. theta."""

    p: float
    theta: float

    def __post_init__(self):
        if not (0.0 <= self.p <= 1.0):
            raise ValidationError(f"p={self.p} outside [0, 1]")
        if not (0.0 <= self.theta < 0.5):
            raise ValidationError(f"theta={self.theta} outside [0, 1/2)")


@dataclass(frozen=True)
class ColumnSectionProfile:
    """Proportions tau over the 8 column patterns l = b1b2b3, summing to 1.

    Index order is the integer value of b1b2b3 (000, 001, ..., 111).
    """

    tau: tuple[float, ...]

    def __post_init__(self):
        tau = tuple(float(t) for t in self.tau)
        if len(tau) != 8:
            raise ValidationError("profile needs exactly 8 pattern proportions")
        if any(t < 0 for t in tau):
            raise ValidationError("pattern proportions must be nonnegative")
        if abs(sum(tau) - 1.0) > 1e-12:
            raise ValidationError(f"pattern proportions sum to {sum(tau)}, not 1")
        object.__setattr__(self, "tau", tau)

    @classmethod
    def uniform(cls) -> "ColumnSectionProfile":
        return cls(tau=tuple([1.0 / 8.0] * 8))


# Column values per pattern l = 4*b1 + 2*b2 + b3 (same order as tau); rows of
# the table are the six groups (A1, A2, A3, B1, B2, B3).
_PATTERN_TABLE = np.array(
    [
        [1, b1, 1 ^ b1, b2, b3, b2 ^ b3]
        for b1 in (0, 1)
        for b2 in (0, 1)
        for b3 in (0, 1)
    ],
    dtype=np.uint8,
)


def _largest_remainder_counts(tau: tuple[float, ...], m: int) -> np.ndarray:
    raw = np.array(tau) * m
    counts = np.floor(raw).astype(np.int64)
    remainder = raw - counts
    short = m - int(counts.sum())
    # ties go to the lower pattern index
    order = np.lexsort((np.arange(8), -remainder))
    for k in order[:short]:
        counts[k] += 1
    return counts


def gen_rating_model(config: HierarchyConfig, profile: ColumnSectionProfile,
                     rng_seed: int, exact: bool = False) -> RatingModel:
    """Draw the 6 rating vectors column-wise from the pattern profile.

    With `exact`, pattern counts are fixed to the largest-remainder rounding of
    tau*m (columns laid out in pattern order) instead of sampled, which pins
    the deltas exactly for reproducible experiments.
    """
    if (config.c, config.g, config.r, config.q) != (2, 3, 2, 2):
        raise UnsupportedFieldError("rating-vector generator requires (c,g,r,q) = (2,3,2,2)")
    if exact:
        counts = _largest_remainder_counts(profile.tau, config.m)
        patterns = np.repeat(np.arange(8), counts)
    else:
        rng = substream(rng_seed, "rating-model")
        patterns = rng.choice(8, size=config.m, p=np.array(profile.tau))
    columns = _PATTERN_TABLE[patterns]          # (m, 6)
    vectors = columns.T.reshape(2, 3, config.m)
    model = RatingModel(vectors=vectors, config=config)
    try:
        model.validate()
    except DegenerateModelError as exc:
        raise DegenerateModelError(f"profile produced a degenerate model: {exc}") from exc
    return model


def gen_partition(config: HierarchyConfig, rng_seed: int) -> Partition:
    """Assign users to (cluster, group) respecting config.group_sizes."""
    rng = substream(rng_seed, "partition")
    users = rng.permutation(config.n)
    cluster_of = np.empty(config.n, dtype=np.int64)
    group_of = np.empty(config.n, dtype=np.int64)
    pos = 0
    for x in range(config.c):
        for i in range(config.g):
            s = config.group_sizes[x][i]
            block = users[pos:pos + s]
            cluster_of[block] = x
            group_of[block] = i
            pos += s
    return Partition(cluster_of=cluster_of, group_of=group_of)


def gen_hsbm_graph(part: Partition, params: GraphParams, rng_seed: int) -> SideGraph:
    """Sample each unordered user pair independently with the relation's probability."""
    rng = substream(rng_seed, "graph")
    n = part.n
    iu, iv = np.triu_indices(n, k=1)
    same_cluster = part.cluster_of[iu] == part.cluster_of[iv]
    same_group = same_cluster & (part.group_of[iu] == part.group_of[iv])
    prob = np.where(same_group, params.alpha, np.where(same_cluster, params.beta, params.gamma))
    keep = rng.random(iu.size) < prob
    edges = np.stack([iu[keep], iv[keep]], axis=1)
    return SideGraph(n=n, edges=edges)


def sample_observations(matrix: np.ndarray, params: ObservationParams,
                        rng_seed: int) -> Observation:
    """Observe each entry w.p. p; flip (XOR 1) each observed value w.p. theta."""
    matrix = np.asarray(matrix, dtype=np.uint8)
    n, m = matrix.shape
    rng = substream(rng_seed, "observations")
    observed = rng.random((n, m)) < params.p
    flips = rng.random((n, m)) < params.theta  # drawn for all cells: independent of `observed`
    rows, cols = np.nonzero(observed)
    vals = matrix[rows, cols] ^ flips[rows, cols].astype(np.uint8)
    return Observation(n=n, m=m, rows=rows, cols=cols, vals=vals)


@dataclass(frozen=True)
class RealObservation:
    """Sparse real-valued observations (the Gaussian-noise variant)."""

    n: int
    m: int
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.int64)
        cols = np.asarray(self.cols, dtype=np.int64)
        vals = np.asarray(self.vals, dtype=np.float64)
        if not (rows.shape == cols.shape == vals.shape) or rows.ndim != 1:
            raise ValidationError("rows, cols, vals must be equal-length 1-d arrays")
        for name, a in (("rows", rows), ("cols", cols), ("vals", vals)):
            a = np.array(a, copy=True)
            a.flags.writeable = False
            object.__setattr__(self, name, a)

    @property
    def size(self) -> int:
        return self.rows.size


@dataclass(frozen=True)
class GaussianInstance:
    obs: RealObservation
    truth_matrix: np.ndarray
    group_means: np.ndarray  # (c, g, m)
    partition: Partition
    config: HierarchyConfig
    sigma2: float
    p: float


def gen_hierarchical_group_means(config: HierarchyConfig, rng_seed: int,
                                 low: float = 0.0, high: float = 10.0) -> np.ndarray:
    """Per-group real rating vectors with cluster-level similarity.

    Each cluster draws a center uniform in the middle of [low, high]; groups
    perturb it, clipped back to the range.
    """
    rng = substream(rng_seed, "group-means")
    span = high - low
    centers = rng.uniform(low + span / 4, high - span / 4, size=(config.c, 1, config.m))
    offsets = rng.uniform(-span / 4, span / 4, size=(config.c, config.g, config.m))
    return np.clip(centers + offsets, low, high)


def gen_gaussian_instance(config: HierarchyConfig, group_means: np.ndarray,
                          sigma2: float, p: float, rng_seed: int) -> GaussianInstance:
    """Real-valued instance: observed entries are group means plus N(0, sigma2) noise."""
    if sigma2 < 0:
        raise ValidationError("sigma2 must be nonnegative")
    if not (0.0 <= p <= 1.0):
        raise ValidationError("p must lie in [0, 1]")
    group_means = np.asarray(group_means, dtype=np.float64)
    if group_means.shape != (config.c, config.g, config.m):
        raise ValidationError(
            f"group_means must have shape {(config.c, config.g, config.m)}"
        )
    part = gen_partition(config, rng_seed)
    truth = group_means[part.cluster_of, part.group_of]
    rng = substream(rng_seed, "gaussian-observations")
    observed = rng.random((config.n, config.m)) < p
    noise = rng.normal(0.0, math.sqrt(sigma2), size=(config.n, config.m))
    rows, cols = np.nonzero(observed)
    vals = truth[rows, cols] + noise[rows, cols]
    obs = RealObservation(n=config.n, m=config.m, rows=rows, cols=cols, vals=vals)
    return GaussianInstance(obs=obs, truth_matrix=truth, group_means=group_means,
                            partition=part, config=config, sigma2=sigma2, p=p)
