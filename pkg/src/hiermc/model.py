"""Core domain types for rating matrices with hierarchical graph side information.

The universe: `n` users partitioned into `c` clusters of `g` groups each, every
group sharing one length-`m` rating vector over F_q, a partially observed noisy
rating matrix, and an undirected social graph on the users.

All indices are 0-based (users, items, clusters, groups).  All types are
immutable after construction and all operations are pure.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "ValidationError",
    "DimensionError",
    "UnsupportedFieldError",
    "DegenerateModelError",
    "TooLargeError",
    "ParseError",
    "HierarchyConfig",
    "Partition",
    "RatingModel",
    "Observation",
    "SideGraph",
    "DeltaPair",
    "map_y_to_z",
    "hamming",
    "compute_deltas",
    "materialize_matrix",
]


class ValidationError(ValueError):
    """A domain precondition or invariant was violated."""


class DimensionError(ValidationError):
    """Operands have incompatible dimensions."""


class UnsupportedFieldError(ValidationError):
    """Operation is only defined for a smaller field (typically q = 2)."""


class DegenerateModelError(ValidationError):
    """Rating model carries coinciding vectors, making recovery ill-posed."""


class TooLargeError(ValidationError):
    """An exhaustive computation would exceed its configured cap."""


class ParseError(ValueError):
    """Malformed input file; carries the offending line number."""

    def __init__(self, path: str, line_no: int, message: str):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = path
        self.line_no = line_no


def _as_readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)  # detach from the caller's buffer before freezing
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class HierarchyConfig:
    """Problem dimensions: n users, m items, c clusters x g groups, rank r, field F_q.

    `group_sizes[x][i]` is the number of users in group i of cluster x.  When
    omitted, users are split equally (requires c*g | n).
    """

    n: int
    m: int
    c: int = 2
    g: int = 3
    r: int = 2
    q: int = 2
    group_sizes: tuple[tuple[int, ...], ...] | None = None

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise ValidationError(f"need n, m >= 1, got n={self.n}, m={self.m}")
        if self.c < 1:
            raise ValidationError(f"need c >= 1, got c={self.c}")
        if not (1 <= self.r <= self.g):
            raise ValidationError(f"need 1 <= r <= g, got r={self.r}, g={self.g}")
        if self.q < 2:
            raise ValidationError(f"need q >= 2, got q={self.q}")
        if self.group_sizes is None:
            k = self.c * self.g
            if self.n % k != 0:
                raise ValidationError(
                    f"n={self.n} not divisible into {k} equal groups; pass group_sizes"
                )
            sizes = tuple(tuple(self.n // k for _ in range(self.g)) for _ in range(self.c))
        else:
            sizes = tuple(tuple(int(s) for s in row) for row in self.group_sizes)
            if len(sizes) != self.c or any(len(row) != self.g for row in sizes):
                raise ValidationError("group_sizes must be c rows of g entries")
            if any(s < 1 for row in sizes for s in row):
                raise ValidationError("every group size must be >= 1")
            if sum(s for row in sizes for s in row) != self.n:
                raise ValidationError("group_sizes must sum to n")
        object.__setattr__(self, "group_sizes", sizes)

    @property
    def n_groups(self) -> int:
        return self.c * self.g

    def equal_sized(self) -> bool:
        first = self.group_sizes[0][0]
        return all(s == first for row in self.group_sizes for s in row)


@dataclass(frozen=True)
class Partition:
    """Per-user (cluster, group) labels."""

    cluster_of: np.ndarray
    group_of: np.ndarray

    def __post_init__(self):
        cl = np.asarray(self.cluster_of, dtype=np.int64)
        gr = np.asarray(self.group_of, dtype=np.int64)
        if cl.ndim != 1 or gr.shape != cl.shape:
            raise DimensionError("cluster_of and group_of must be equal-length 1-d arrays")
        if cl.size and (cl.min() < 0 or gr.min() < 0):
            raise ValidationError("labels must be nonnegative")
        object.__setattr__(self, "cluster_of", _as_readonly(cl))
        object.__setattr__(self, "group_of", _as_readonly(gr))

    @property
    def n(self) -> int:
        return self.cluster_of.size

    def cluster_members(self, x: int) -> np.ndarray:
        return np.flatnonzero(self.cluster_of == x)

    def group_members(self, x: int, i: int) -> np.ndarray:
        return np.flatnonzero((self.cluster_of == x) & (self.group_of == i))

    def sizes(self, c: int | None = None, g: int | None = None) -> tuple[tuple[int, ...], ...]:
        c = int(self.cluster_of.max()) + 1 if c is None else c
        g = int(self.group_of.max()) + 1 if g is None else g
        return tuple(
            tuple(int(len(self.group_members(x, i))) for i in range(g)) for x in range(c)
        )

    def validate_labels(self, config: HierarchyConfig) -> None:
        if self.n != config.n:
            raise DimensionError(f"partition covers {self.n} users, config has {config.n}")
        if self.cluster_of.max(initial=0) >= config.c or self.group_of.max(initial=0) >= config.g:
            raise ValidationError("labels exceed configured (c, g)")

    def validate_against(self, config: HierarchyConfig) -> None:
        self.validate_labels(config)
        if self.sizes(config.c, config.g) != config.group_sizes:
            raise ValidationError("derived group sizes do not match config.group_sizes")


@dataclass(frozen=True)
class RatingModel:
    """The c*g rating vectors over F_q, shaped (c, g, m)."""

    vectors: np.ndarray
    config: HierarchyConfig

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=np.uint8)
        cfg = self.config
        if v.shape != (cfg.c, cfg.g, cfg.m):
            raise DimensionError(f"vectors must have shape {(cfg.c, cfg.g, cfg.m)}, got {v.shape}")
        if v.size and v.max() >= cfg.q:
            raise ValidationError(f"vector entries must lie in [0, q={cfg.q})")
        object.__setattr__(self, "vectors", _as_readonly(v))

    def vector(self, x: int, i: int) -> np.ndarray:
        return self.vectors[x, i]

    def validate(self) -> None:
        """Check XOR closure (for the (g,r,q)=(3,2,2) case) and nondegenerate deltas."""
        cfg = self.config
        if (cfg.g, cfg.r, cfg.q) == (3, 2, 2):
            for x in range(cfg.c):
                if not np.array_equal(
                    self.vectors[x, 2], self.vectors[x, 0] ^ self.vectors[x, 1]
                ):
                    raise ValidationError(f"cluster {x}: third vector is not v1 XOR v2")
        deltas = compute_deltas(self)  # raises DegenerateModelError when delta_g == 0
        if self.config.c > 1 and deltas.delta_c == 0.0:
            raise DegenerateModelError("distinct clusters carry a common rating vector")


@dataclass(frozen=True)
class Observation:
    """Sparse observed entries of the rating matrix, at most one per cell."""

    n: int
    m: int
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.int64)
        cols = np.asarray(self.cols, dtype=np.int64)
        vals = np.asarray(self.vals, dtype=np.uint8)
        if not (rows.shape == cols.shape == vals.shape) or rows.ndim != 1:
            raise DimensionError("rows, cols, vals must be equal-length 1-d arrays")
        if rows.size:
            if rows.min() < 0 or rows.max() >= self.n:
                raise ValidationError("row index out of range")
            if cols.min() < 0 or cols.max() >= self.m:
                raise ValidationError("column index out of range")
            flat = rows * self.m + cols
            if np.unique(flat).size != flat.size:
                raise ValidationError("duplicate (row, col) entry")
        object.__setattr__(self, "rows", _as_readonly(rows))
        object.__setattr__(self, "cols", _as_readonly(cols))
        object.__setattr__(self, "vals", _as_readonly(vals))

    @classmethod
    def from_entries(cls, entries, n: int, m: int) -> "Observation":
        entries = sorted(entries)
        rows = [e[0] for e in entries]
        cols = [e[1] for e in entries]
        vals = [e[2] for e in entries]
        return cls(n=n, m=m, rows=np.array(rows, dtype=np.int64),
                   cols=np.array(cols, dtype=np.int64), vals=np.array(vals, dtype=np.uint8))

    @property
    def size(self) -> int:
        return self.rows.size

    def __len__(self) -> int:
        return self.rows.size


@dataclass(frozen=True)
class SideGraph:
    """Undirected simple graph on n users; edges stored canonically (u < v, sorted)."""

    n: int
    edges: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=np.int64)
        if e.size == 0:
            e = e.reshape(0, 2)
        if e.ndim != 2 or e.shape[1] != 2:
            raise DimensionError("edges must have shape (E, 2)")
        if e.size:
            if e.min() < 0 or e.max() >= self.n:
                raise ValidationError("vertex index out of range")
            if np.any(e[:, 0] == e[:, 1]):
                raise ValidationError("self-loops are not allowed")
            lo = np.minimum(e[:, 0], e[:, 1])
            hi = np.maximum(e[:, 0], e[:, 1])
            e = np.stack([lo, hi], axis=1)
            order = np.lexsort((e[:, 1], e[:, 0]))
            e = e[order]
            if np.any((np.diff(e[:, 0]) == 0) & (np.diff(e[:, 1]) == 0)):
                raise ValidationError("duplicate edge")
        object.__setattr__(self, "edges", _as_readonly(e))

    @classmethod
    def from_edge_set(cls, n: int, pairs) -> "SideGraph":
        arr = np.array(sorted((min(u, v), max(u, v)) for u, v in pairs), dtype=np.int64)
        return cls(n=n, edges=arr.reshape(-1, 2))

    @property
    def edge_count(self) -> int:
        return self.edges.shape[0]

    @cached_property
    def _adjacency(self) -> np.ndarray:
        a = np.zeros((self.n, self.n), dtype=np.uint8)
        if self.edge_count:
            a[self.edges[:, 0], self.edges[:, 1]] = 1
            a[self.edges[:, 1], self.edges[:, 0]] = 1
        a.flags.writeable = False
        return a

    def adjacency(self) -> np.ndarray:
        return self._adjacency

    def degrees(self) -> np.ndarray:
        return self._adjacency.sum(axis=1, dtype=np.int64)

    def edge_key_set(self) -> set[tuple[int, int]]:
        return {(int(u), int(v)) for u, v in self.edges}


@dataclass(frozen=True)
class DeltaPair:
    """Minimum normalized Hamming distances: within clusters and across clusters."""

    delta_g: float
    delta_c: float

    def __post_init__(self):
        if not (0.0 <= self.delta_g <= 1.0 and 0.0 <= self.delta_c <= 1.0):
            raise ValidationError("deltas must lie in [0, 1]")


def map_y_to_z(obs: Observation) -> np.ndarray:
    """Map ratings over {0,1,*} to the multiplicative domain {+1,-1,0}.

    Observed 0 -> +1, observed 1 -> -1, unobserved -> 0.  XOR of ratings then
    corresponds to multiplication of their images.  Only defined for q = 2.
    """
    if obs.size and obs.vals.max() > 1:
        raise UnsupportedFieldError("Y -> Z mapping is only defined for q = 2 ratings")
    z = np.zeros((obs.n, obs.m), dtype=np.int8)
    z[obs.rows, obs.cols] = 1 - 2 * obs.vals.astype(np.int8)
    return z


def hamming(u, v) -> int:
    """Number of coordinates where the two vectors differ."""
    u = np.asarray(u)
    v = np.asarray(v)
    if u.shape != v.shape:
        raise DimensionError(f"length mismatch: {u.shape} vs {v.shape}")
    return int(np.count_nonzero(u != v))


def _min_pair_distances(vectors: np.ndarray) -> tuple[int, int]:
    """Raw (min intra-cluster, min inter-cluster) Hamming distances, no validation."""
    c, g, _ = vectors.shape
    intra = min(
        hamming(vectors[x, i], vectors[x, j])
        for x in range(c)
        for i, j in itertools.combinations(range(g), 2)
    )
    if c < 2:
        return intra, 0
    inter = min(
        hamming(vectors[x, i], vectors[y, j])
        for x, y in itertools.combinations(range(c), 2)
        for i in range(g)
        for j in range(g)
    )
    return intra, inter


def compute_deltas(model: RatingModel) -> DeltaPair:
    """Minimum normalized Hamming distances of the model's rating vectors.

    delta_g is the minimum over distinct group pairs within one cluster;
    delta_c over group pairs from distinct clusters (min over all unordered
    cluster pairs when c > 2).  delta_g == 0 makes groups unidentifiable and
    raises; delta_c == 0 is reported as-is and rejected by model validation.
    """
    intra, inter = _min_pair_distances(model.vectors)
    if intra == 0:
        raise DegenerateModelError("two groups in one cluster share a rating vector")
    m = model.config.m
    return DeltaPair(delta_g=intra / m, delta_c=inter / m)


def materialize_matrix(model: RatingModel, part: Partition) -> np.ndarray:
    """Stack the rating matrix: row u is the vector of u's (cluster, group)."""
    part.validate_labels(model.config)
    return model.vectors[part.cluster_of, part.group_of].copy()
