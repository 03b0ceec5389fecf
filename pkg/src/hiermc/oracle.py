"""Exact likelihood machinery and an exhaustive MLE for tiny instances.

The negative log-likelihood of a candidate (partition, vectors) keeps only the
candidate-dependent terms:

    L(X) = log((1-theta)/theta) * disagreements(Y, X)
         + sum_mu [ log((1-mu)/mu) * e_mu - log(1-mu) * |P_mu| ]

over the three pair relations mu in {alpha, beta, gamma}.  exp(-L + offset)
with the documented `log_offset` equals the joint probability P[Y, G | X];
`brute_force_log_prob` computes that probability independently, pair by pair
and entry by entry, and is the correctness oracle for everything else.

Boundary parameters (theta = 0, mu in {0, 1}) switch to feasibility filtering:
candidates assigning probability zero to the data get L = +inf.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .model import (
    HierarchyConfig,
    Observation,
    Partition,
    RatingModel,
    SideGraph,
    TooLargeError,
    UnsupportedFieldError,
    ValidationError,
    _min_pair_distances,
    materialize_matrix,
)

__all__ = [
    "TruthParams",
    "PairCounts",
    "Candidate",
    "MleResult",
    "count_pairs_and_edges",
    "count_disagreements",
    "neg_log_likelihood",
    "log_offset",
    "brute_force_log_prob",
    "exhaustive_mle",
]


@dataclass(frozen=True)
class TruthParams:
    """Generative parameters assumed known to the oracle."""

    alpha: float
    beta: float
    gamma: float
    theta: float
    p: float = 1.0

    def __post_init__(self):
        for name, v in (("alpha", self.alpha), ("beta", self.beta),
                        ("gamma", self.gamma), ("p", self.p)):
            if not (0.0 <= v <= 1.0):
                raise ValidationError(f"{name}={v} outside [0, 1]")
        if not (0.0 <= self.theta < 0.5):
            raise ValidationError(f"theta={self.theta} outside [0, 1/2)")


@dataclass(frozen=True)
class PairCounts:
    """Pair-set sizes and edge counts per relation (within group / cross group
    within cluster / cross cluster)."""

    p_alpha: int
    p_beta: int
    p_gamma: int
    e_alpha: int
    e_beta: int
    e_gamma: int


@dataclass(frozen=True)
class Candidate:
    """A hypothesized (partition, rating model); vectors must be XOR-closed."""

    partition: Partition
    model: RatingModel

    def __post_init__(self):
        cfg = self.model.config
        if (cfg.g, cfg.q) == (3, 2):
            v = self.model.vectors
            for x in range(cfg.c):
                if not np.array_equal(v[x, 2], v[x, 0] ^ v[x, 1]):
                    raise ValidationError(f"candidate cluster {x} violates XOR closure")
        self.partition.validate_labels(cfg)

    def matrix(self) -> np.ndarray:
        return materialize_matrix(self.model, self.partition)


def count_pairs_and_edges(part: Partition, graph: SideGraph) -> PairCounts:
    """Classify every unordered user pair by relation; count pairs and edges."""
    n = part.n
    if graph.n != n:
        raise ValidationError("partition and graph cover different user counts")
    iu, iv = np.triu_indices(n, k=1)
    same_cluster = part.cluster_of[iu] == part.cluster_of[iv]
    same_group = same_cluster & (part.group_of[iu] == part.group_of[iv])
    cross_cluster = ~same_cluster
    beta_rel = same_cluster & ~same_group
    adj = graph.adjacency()
    edged = adj[iu, iv].astype(bool)
    return PairCounts(
        p_alpha=int(same_group.sum()),
        p_beta=int(beta_rel.sum()),
        p_gamma=int(cross_cluster.sum()),
        e_alpha=int((same_group & edged).sum()),
        e_beta=int((beta_rel & edged).sum()),
        e_gamma=int((cross_cluster & edged).sum()),
    )


def count_disagreements(obs: Observation, candidate_matrix: np.ndarray) -> int:
    """Observed entries of Y that differ from the candidate matrix."""
    candidate_matrix = np.asarray(candidate_matrix)
    if candidate_matrix.shape != (obs.n, obs.m):
        raise ValidationError("candidate matrix shape does not match observations")
    return int(np.count_nonzero(candidate_matrix[obs.rows, obs.cols] != obs.vals))


def _rating_term(disagreements: int, theta: float) -> float:
    if theta == 0.0:
        return math.inf if disagreements > 0 else 0.0
    return math.log((1.0 - theta) / theta) * disagreements


def _graph_term(e_mu: int, p_mu: int, mu: float) -> float:
    if mu <= 0.0:
        return math.inf if e_mu > 0 else 0.0
    if mu >= 1.0:
        return math.inf if e_mu < p_mu else 0.0
    return math.log((1.0 - mu) / mu) * e_mu - math.log(1.0 - mu) * p_mu


def neg_log_likelihood(cand: Candidate, obs: Observation, graph: SideGraph,
                       params: TruthParams) -> float:
    """Candidate-dependent part of -log P[Y, G | X] (see module docstring)."""
    lam = count_disagreements(obs, cand.matrix())
    counts = count_pairs_and_edges(cand.partition, graph)
    total = _rating_term(lam, params.theta)
    for e_mu, p_mu, mu in (
        (counts.e_alpha, counts.p_alpha, params.alpha),
        (counts.e_beta, counts.p_beta, params.beta),
        (counts.e_gamma, counts.p_gamma, params.gamma),
    ):
        total += _graph_term(e_mu, p_mu, mu)
    return total


def log_offset(obs: Observation, params: TruthParams) -> float:
    """Candidate-independent log-factor: exp(-L + log_offset) = P[Y, G | X].

    Equals |Omega| * (log p + log(1-theta)) + (nm - |Omega|) * log(1-p).
    """
    n_obs = obs.size
    n_missing = obs.n * obs.m - n_obs
    total = 0.0
    if n_obs:
        if params.p == 0.0:
            return -math.inf
        total += n_obs * (math.log(params.p) + math.log(1.0 - params.theta))
    if n_missing:
        if params.p == 1.0:
            return -math.inf
        total += n_missing * math.log(1.0 - params.p)
    return total


def brute_force_log_prob(cand: Candidate, obs: Observation, graph: SideGraph,
                         params: TruthParams) -> float:
    """log P[Y, G | X] by direct products: one factor per pair, per cell.

    Deliberately naive (plain loops, no shared code with the L computation);
    this is the independent check of `neg_log_likelihood` + `log_offset`.
    """
    x_matrix = cand.matrix()
    cluster_of = cand.partition.cluster_of
    group_of = cand.partition.group_of
    edge_set = graph.edge_key_set()
    total = 0.0
    for u in range(graph.n):
        for v in range(u + 1, graph.n):
            if cluster_of[u] != cluster_of[v]:
                mu = params.gamma
            elif group_of[u] == group_of[v]:
                mu = params.alpha
            else:
                mu = params.beta
            prob = mu if (u, v) in edge_set else 1.0 - mu
            if prob == 0.0:
                return -math.inf
            total += math.log(prob)
    observed = {(int(r), int(c)): int(val)
                for r, c, val in zip(obs.rows, obs.cols, obs.vals)}
    for r in range(obs.n):
        for c in range(obs.m):
            if (r, c) in observed:
                prob = params.p * (params.theta if observed[(r, c)] != x_matrix[r, c]
                                   else 1.0 - params.theta)
            else:
                prob = 1.0 - params.p
            if prob == 0.0:
                return -math.inf
            total += math.log(prob)
    return total


@dataclass(frozen=True)
class MleResult:
    candidate: Candidate
    nll: float
    is_tie: bool
    n_candidates: int
    best_index: int
    delta_g: float
    delta_c: float


def _equal_partitions(n: int, size: int):
    """All ways to fill 6 labeled equal-size groups, lexicographic by member tuples."""
    users = tuple(range(n))

    def fill(remaining, slots):
        if not slots:
            yield ()
            return
        for combo in itertools.combinations(remaining, size):
            rest = tuple(u for u in remaining if u not in combo)
            for tail in fill(rest, slots - 1):
                yield (combo,) + tail

    yield from fill(users, 6)


def _disagreement_table(obs: Observation, n: int, m: int) -> np.ndarray:
    """D[u, v_int] = observed disagreements of user u against vector v_int."""
    k = 1 << m
    bits = ((np.arange(k)[:, None] >> np.arange(m - 1, -1, -1)[None, :]) & 1).astype(np.uint8)
    table = np.zeros((n, k), dtype=np.int64)
    for u in range(n):
        sel = obs.rows == u
        cols = obs.cols[sel]
        vals = obs.vals[sel]
        if cols.size:
            table[u] = (bits[:, cols] != vals[None, :]).sum(axis=1)
    return table


def exhaustive_mle(obs: Observation, graph: SideGraph, params: TruthParams,
                   config: HierarchyConfig, *, cap: int = 10_000_000,
                   require_deltas: tuple[float, float] | None = None) -> MleResult:
    """Enumerate every equal-size partition x XOR-closed vector assignment.

    Candidates are ordered canonically (partitions lexicographic by group
    member tuples, then the four basis vectors (v1A, v2A, v1B, v2B) as binary
    numbers); ties return the first minimizer with `is_tie` set.  Search
    spaces above `cap` raise rather than silently sampling.  With
    `require_deltas`, only candidates of exactly those (delta_g, delta_c) are
    considered.
    """
    if (config.c, config.g, config.q) != (2, 3, 2):
        raise UnsupportedFieldError("exhaustive MLE requires (c, g, q) = (2, 3, 2)")
    if not config.equal_sized():
        raise ValidationError("exhaustive MLE enumerates equal group sizes only")
    n, m = config.n, config.m
    size = n // 6
    n_partitions = 1
    remaining = n
    for _ in range(6):
        n_partitions *= math.comb(remaining, size)
        remaining -= size
    k = 1 << m
    n_candidates = n_partitions * k ** 4
    if n_candidates > cap:
        raise TooLargeError(
            f"{n_candidates} candidates exceed the cap of {cap}; shrink n or m")

    d_table = _disagreement_table(obs, n, m)
    xor_a, xor_b = np.meshgrid(np.arange(k), np.arange(k), indexing="ij")
    xor_idx = xor_a ^ xor_b                      # third vector index per basis pair
    bits = ((np.arange(k)[:, None] >> np.arange(m - 1, -1, -1)[None, :]) & 1).astype(np.uint8)
    popcount = np.array([bin(v).count("1") for v in range(k)])

    theta = params.theta
    w_rating = math.log((1.0 - theta) / theta) if theta > 0 else math.inf

    pd = intra_pair = None
    if require_deltas is not None:
        pd = popcount[np.bitwise_xor.outer(np.arange(k), np.arange(k))]
        # intra_pair[v1, v2] = min(d(v1,v2), d(v1,v3), d(v2,v3)) with v3 = v1^v2;
        # d(v1, v3) = popcount(v2) and d(v2, v3) = popcount(v1)
        intra_pair = np.minimum(pd, np.minimum(popcount[None, :], popcount[:, None]))

    best_nll = math.inf
    best_tuple = None
    best_index = -1
    tie_count = 0
    candidate_base = 0

    for part_idx, groups in enumerate(_equal_partitions(n, size)):
        cluster_of = np.empty(n, dtype=np.int64)
        group_of = np.empty(n, dtype=np.int64)
        for slot, members in enumerate(groups):
            x, i = divmod(slot, 3)
            for u in members:
                cluster_of[u] = x
                group_of[u] = i
        part = Partition(cluster_of=cluster_of, group_of=group_of)
        counts = count_pairs_and_edges(part, graph)
        graph_term = (_graph_term(counts.e_alpha, counts.p_alpha, params.alpha)
                      + _graph_term(counts.e_beta, counts.p_beta, params.beta)
                      + _graph_term(counts.e_gamma, counts.p_gamma, params.gamma))

        # per-cluster disagreement grids over all (v1, v2) basis pairs
        sd = np.stack([d_table[list(groups[slot])].sum(axis=0) for slot in range(6)])
        lam_a = sd[0][:, None] + sd[1][None, :] + sd[2][xor_idx]
        lam_b = sd[3][:, None] + sd[4][None, :] + sd[5][xor_idx]

        if require_deltas is None:
            local = _best_combo_factored(lam_a, lam_b, theta, w_rating, graph_term, k)
        else:
            local = _best_combo_full(lam_a, lam_b, theta, w_rating, graph_term, k,
                                     pd, intra_pair, xor_idx, require_deltas, m)
        if local is not None:
            nll, combo_index, count = local
            if nll < best_nll:
                best_nll = nll
                best_tuple = (groups, combo_index)
                best_index = candidate_base + combo_index
                tie_count = count
            elif nll == best_nll:
                tie_count += count
        candidate_base += k ** 4

    if best_tuple is None:
        raise ValidationError("no admissible candidate (feasibility or delta filtering "
                              "removed the whole search space)")

    groups, combo_index = best_tuple
    v2b = combo_index % k
    v1b = (combo_index // k) % k
    v2a = (combo_index // (k * k)) % k
    v1a = combo_index // (k * k * k)
    cluster_of = np.empty(n, dtype=np.int64)
    group_of = np.empty(n, dtype=np.int64)
    for slot, members in enumerate(groups):
        x, i = divmod(slot, 3)
        for u in members:
            cluster_of[u] = x
            group_of[u] = i
    vectors = np.stack([
        np.stack([bits[v1a], bits[v2a], bits[v1a ^ v2a]]),
        np.stack([bits[v1b], bits[v2b], bits[v1b ^ v2b]]),
    ])
    cand = Candidate(partition=Partition(cluster_of=cluster_of, group_of=group_of),
                     model=RatingModel(vectors=vectors, config=config))
    intra, inter = _min_pair_distances(vectors)
    return MleResult(candidate=cand, nll=best_nll, is_tie=tie_count > 1,
                     n_candidates=n_candidates, best_index=best_index,
                     delta_g=intra / m, delta_c=inter / m)


def _best_combo_factored(lam_a, lam_b, theta, w_rating, graph_term, k):
    """Best basis combo for one partition; Lambda separates over the clusters."""
    if theta == 0.0:
        feas_a = np.flatnonzero(lam_a.ravel() == 0)
        feas_b = np.flatnonzero(lam_b.ravel() == 0)
        if feas_a.size == 0 or feas_b.size == 0:
            return None
        combo = int(feas_a[0]) * k * k + int(feas_b[0])
        return graph_term, combo, int(feas_a.size) * int(feas_b.size)
    min_a = lam_a.min()
    min_b = lam_b.min()
    idx_a = int(np.argmin(lam_a.ravel()))
    idx_b = int(np.argmin(lam_b.ravel()))
    count = int((lam_a == min_a).sum()) * int((lam_b == min_b).sum())
    nll = graph_term + w_rating * float(min_a + min_b)
    return nll, idx_a * k * k + idx_b, count


def _best_combo_full(lam_a, lam_b, theta, w_rating, graph_term, k,
                     pd, intra_pair, xor_idx, require_deltas, m):
    """Delta-restricted variant: evaluates the full (v1A,v2A,v1B,v2B) grid."""
    dg_req, dc_req = require_deltas
    # cross-cluster min distance over the 3x3 vector pairs
    trip_a = np.stack([
        np.broadcast_to(np.arange(k)[:, None], (k, k)),
        np.broadcast_to(np.arange(k)[None, :], (k, k)),
        xor_idx,
    ])                                                       # (3, k, k) vector ints
    flat_a = trip_a.reshape(3, -1)
    inter = np.full((k * k, k * k), np.iinfo(np.int64).max)
    for i in range(3):
        for j in range(3):
            inter = np.minimum(inter, pd[flat_a[i][:, None], flat_a[j][None, :]])
    dg = np.minimum(intra_pair.ravel()[:, None],
                    intra_pair.ravel()[None, :])             # (k^2, k^2)
    ok = (dg == round(dg_req * m)) & (inter == round(dc_req * m))
    lam = lam_a.ravel()[:, None] + lam_b.ravel()[None, :]
    if theta == 0.0:
        ok &= lam == 0
        scores = np.where(ok, 0.0, np.inf)
    else:
        scores = np.where(ok, w_rating * lam, np.inf)
    flat = scores.ravel()
    idx = int(np.argmin(flat))
    if not np.isfinite(flat[idx]):
        return None
    best = flat[idx]
    count = int((flat == best).sum())
    return graph_term + float(best), idx, count
