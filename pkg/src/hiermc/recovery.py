"""Four-phase recovery: clusters, groups, rating vectors, local refinement.

Phase 1 exactly recovers the two clusters by spectral bisection of the
degree-normalized adjacency.  Phase 2 runs a spectral embedding + k-means
within each cluster for almost-exact groups.  Phase 3 decodes the three
rating vectors per cluster by a per-column counting rule whose output always
satisfies XOR closure.  Phase 4 iteratively reassigns each user to the group
maximizing a local log-likelihood score combining rating matches and edge
counts, with all channel/graph parameters estimated from the data.

Tie-breaking is everywhere toward the lowest group index; user updates within
a refinement sweep are synchronous (scored against the previous sweep's
groups).
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .gen import RealObservation
from .model import (
    HierarchyConfig,
    Observation,
    Partition,
    RatingModel,
    SideGraph,
    UnsupportedFieldError,
    ValidationError,
    map_y_to_z,
    materialize_matrix,
)
from .rng import substream

__all__ = [
    "EstimatedParams",
    "RecoveryResult",
    "GaussianRecoveryResult",
    "phase1_cluster",
    "phase2_group",
    "phase3_vectors",
    "estimate_params",
    "phase4_refine",
    "recover",
    "recover_gaussian",
    "misclassification_counts",
]

# Estimates are clamped into (0, 1) by this margin so log-weights stay finite.
CLAMP_EPS = 1e-4

POWER_TOL = 1e-6
POWER_ITERS = 300
KMEANS_RESTARTS = 5


@dataclass(frozen=True)
class EstimatedParams:
    """Channel/graph estimates (already clamped) and the derived log-weights."""

    alpha_hat: float
    beta_hat: float
    theta_hat: float
    rating_weight: float
    graph_weight: float


@dataclass
class RecoveryResult:
    partition_hat: Partition
    vectors_hat: RatingModel
    matrix_hat: np.ndarray
    diagnostics: dict = field(default_factory=dict)


@dataclass
class GaussianRecoveryResult:
    partition_hat: Partition
    means_hat: np.ndarray   # (c, g, m)
    matrix_hat: np.ndarray  # (n, m) real-valued
    diagnostics: dict = field(default_factory=dict)


def _power_iteration(mat: np.ndarray, rng: np.random.Generator, ortho=(),
                     tol: float = POWER_TOL, max_iter: int = POWER_ITERS) -> np.ndarray:
    n = mat.shape[0]
    x = rng.standard_normal(n)
    for v in ortho:
        x -= (v @ x) * v
    nx = np.linalg.norm(x)
    if nx < 1e-12:
        x = np.ones(n)
        nx = np.linalg.norm(x)
    x /= nx
    for _ in range(max_iter):
        y = mat @ x
        for v in ortho:
            y -= (v @ y) * v
        ny = np.linalg.norm(y)
        if ny < 1e-30:
            break  # x lies in the kernel; keep the current direction
        y /= ny
        if y @ x < 0:
            y = -y
        done = np.linalg.norm(y - x) < tol
        x = y
        if done:
            break
    j = int(np.argmax(np.abs(x)))
    return -x if x[j] < 0 else x


def _normalized_adjacency(a: np.ndarray) -> np.ndarray:
    d = a.sum(axis=1)
    scale = 1.0 / np.sqrt(np.maximum(d, 1.0))
    return a * scale[:, None] * scale[None, :]


def _component_count(n: int, edges: np.ndarray) -> int:
    parent = list(range(n))

    def find(u):
        while parent[u] != u:
            parent[u] = parent[parent[u]]
            u = parent[u]
        return u

    for u, v in edges:
        ru, rv = find(int(u)), find(int(v))
        if ru != rv:
            parent[ru] = rv
    return sum(1 for u in range(n) if find(u) == u)


def phase1_cluster(graph: SideGraph, k: int = 2, *, seed: int = 0) -> np.ndarray:
    """Exact cluster recovery by spectral bisection plus one majority pass.

    Splits on the sign of the second eigenvector of the degree-normalized
    adjacency (shifted to make power iteration stable), then reassigns each
    user to the side holding the majority of its neighbors.  Labels are
    defined up to a swap; user 0 is canonically labeled 0.
    """
    if k != 2:
        raise UnsupportedFieldError("cluster recovery is implemented for k = 2 only")
    n = graph.n
    if n < k:
        raise ValidationError(f"need at least {k} users, got {n}")
    if graph.edge_count == 0:
        warnings.warn("empty graph: clusters carry no signal, returning a balanced split")
        return (np.arange(n) % 2).astype(np.int64)
    n_comp = _component_count(n, graph.edges)
    if n_comp > k:
        warnings.warn(f"graph has {n_comp} components for {k} clusters")

    a = graph.adjacency().astype(np.float64)
    b = _normalized_adjacency(a)
    b[np.diag_indices(n)] += 1.0  # shift: spectrum now in [0, 2], top-2 are the pair we need
    rng = substream(seed, "phase1")
    v1 = _power_iteration(b, rng)
    v2 = _power_iteration(b, rng, ortho=(v1,))
    labels = (v2 >= 0).astype(np.int64)

    deg = a.sum(axis=1)
    cnt1 = a @ labels.astype(np.float64)
    cnt0 = deg - cnt1
    labels = np.where(cnt1 > cnt0, 1, np.where(cnt0 > cnt1, 0, labels)).astype(np.int64)
    return labels ^ labels[0]


def _farthest_point_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centers = [points[int(rng.integers(n))]]
    d2 = np.sum((points - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        centers.append(points[int(np.argmax(d2))])
        d2 = np.minimum(d2, np.sum((points - centers[-1]) ** 2, axis=1))
    return np.array(centers)


def _lloyd(points: np.ndarray, centers: np.ndarray, iters: int, tol: float):
    k = centers.shape[0]
    labels = np.zeros(points.shape[0], dtype=np.int64)
    for _ in range(iters):
        d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        labels = np.argmin(d2, axis=1)
        new_centers = centers.copy()
        for j in range(k):
            mask = labels == j
            if mask.any():
                new_centers[j] = points[mask].mean(axis=0)
            else:
                # re-seed an emptied center on the worst-served point
                new_centers[j] = points[int(np.argmax(d2.min(axis=1)))]
        shift = np.abs(new_centers - centers).max()
        centers = new_centers
        if shift < tol:
            break
    d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    labels = np.argmin(d2, axis=1)
    inertia = float(d2[np.arange(points.shape[0]), labels].sum())
    return labels, inertia


def _kmeans(points: np.ndarray, k: int, rng: np.random.Generator,
            restarts: int = KMEANS_RESTARTS, iters: int = POWER_ITERS,
            tol: float = POWER_TOL) -> np.ndarray:
    best_labels, best_inertia = None, np.inf
    for _ in range(restarts):
        centers = _farthest_point_init(points, k, rng)
        labels, inertia = _lloyd(points, centers, iters, tol)
        if inertia < best_inertia:
            best_labels, best_inertia = labels, inertia
    return best_labels


def phase2_group(graph: SideGraph, members: np.ndarray, g: int = 3, *,
                 seed: int = 0, stream_tag: str = "phase2") -> np.ndarray:
    """Almost-exact grouping of one cluster's members.

    Embeds the within-cluster adjacency rows by its top-g eigenvectors (power
    iteration with orthogonal deflation) and clusters them with seeded k-means
    (farthest-point init, 5 restarts).  Returns a group label per member.
    """
    members = np.asarray(members, dtype=np.int64)
    if members.size < g:
        raise ValidationError(f"cluster has {members.size} users, fewer than g={g}")
    a = graph.adjacency()[np.ix_(members, members)].astype(np.float64)
    b = _normalized_adjacency(a)
    b[np.diag_indices(members.size)] += 1.0
    rng = substream(seed, stream_tag)
    basis: list[np.ndarray] = []
    for _ in range(g):
        basis.append(_power_iteration(b, rng, ortho=tuple(basis)))
    embedding = np.column_stack(basis)
    return _kmeans(embedding, g, rng)


def phase3_vectors(z: np.ndarray, part: Partition, config: HierarchyConfig) -> np.ndarray:
    """Decode all rating vectors from the +-1/0 observation array.

    Per column and cluster: the group with the largest observation sum gets a
    0; the other two both get 0 or both 1 by the sign of their combined sum
    (ties decode as 0, and the argmax tie goes to the lowest group index).
    Output columns therefore always have even parity within each cluster.
    """
    c, g, m = config.c, config.g, config.m
    zf = z.astype(np.float64)
    vectors = np.zeros((c, g, m), dtype=np.uint8)
    for x in range(c):
        masks = np.stack([
            (part.cluster_of == x) & (part.group_of == i) for i in range(g)
        ]).astype(np.float64)                      # (g, n)
        delta = masks @ zf                          # (g, m) group observation sums
        j = np.argmax(delta, axis=0)                # ties -> lowest index
        rest = delta.sum(axis=0) - delta[j, np.arange(m)]
        fill = (rest < 0).astype(np.uint8)          # >= 0 decodes the pair as zeros
        vectors[x] = np.broadcast_to(fill, (g, m)).copy()
        vectors[x][j, np.arange(m)] = 0
    return vectors


def _pair_totals(sizes: np.ndarray) -> tuple[float, float]:
    """(within-group pairs, cross-group same-cluster pairs) for a (c, g) size table."""
    s = sizes.astype(np.float64)
    p_alpha = (s * (s - 1) / 2).sum()
    per_cluster = s.sum(axis=1)
    p_beta = ((per_cluster ** 2 - (s ** 2).sum(axis=1)) / 2).sum()
    return float(p_alpha), float(p_beta)


def _edge_type_counts(graph: SideGraph, part: Partition) -> tuple[int, int]:
    if graph.edge_count == 0:
        return 0, 0
    u, v = graph.edges[:, 0], graph.edges[:, 1]
    same_cluster = part.cluster_of[u] == part.cluster_of[v]
    same_group = same_cluster & (part.group_of[u] == part.group_of[v])
    return int(same_group.sum()), int((same_cluster & ~same_group).sum())


def _graph_estimates(graph: SideGraph, part: Partition, config: HierarchyConfig):
    sizes = np.zeros((config.c, config.g), dtype=np.int64)
    for x in range(config.c):
        for i in range(config.g):
            sizes[x, i] = part.group_members(x, i).size
    p_alpha, p_beta = _pair_totals(sizes)
    e_alpha, e_beta = _edge_type_counts(graph, part)
    alpha_hat = e_alpha / p_alpha if p_alpha > 0 else 0.0
    beta_hat = e_beta / p_beta if p_beta > 0 else 0.0
    a = min(max(alpha_hat, CLAMP_EPS), 1.0 - CLAMP_EPS)
    b = min(max(beta_hat, CLAMP_EPS), 1.0 - CLAMP_EPS)
    # floored at 0 whenever alpha_hat <= beta_hat (no usable homophily signal)
    graph_weight = max(math.log(((1.0 - b) * a) / ((1.0 - a) * b)), 0.0)
    return a, b, graph_weight


def estimate_params(obs: Observation, graph: SideGraph, part: Partition,
                    vectors: np.ndarray, config: HierarchyConfig) -> EstimatedParams:
    """Estimate (alpha, beta, theta) on the estimated groups; derive log-weights.

    theta_hat counts observed entries disagreeing with the decoded vector of
    the owner's estimated group.  All estimates are clamped so both weights
    stay finite; the graph weight is floored at 0 when alpha_hat <= beta_hat.
    """
    alpha_hat, beta_hat, graph_weight = _graph_estimates(graph, part, config)
    if obs.size == 0:
        warnings.warn("no observed entries: theta_hat set to the clamp floor")
        theta_hat = CLAMP_EPS
    else:
        predicted = vectors[part.cluster_of[obs.rows], part.group_of[obs.rows], obs.cols]
        theta_hat = float(np.count_nonzero(predicted != obs.vals)) / obs.size
    th = min(max(theta_hat, CLAMP_EPS), 0.5 - CLAMP_EPS)
    rating_weight = math.log((1.0 - th) / th)
    return EstimatedParams(alpha_hat=alpha_hat, beta_hat=beta_hat, theta_hat=th,
                           rating_weight=rating_weight, graph_weight=graph_weight)


def _match_counts(z_rows: np.ndarray, vectors_x: np.ndarray) -> np.ndarray:
    """Observed-agreement counts between user rows of Z and each group vector."""
    zv = (1.0 - 2.0 * vectors_x.astype(np.float64))      # (g, m) in {+1, -1}
    agree_minus_disagree = z_rows @ zv.T                 # (rows, g)
    observed = np.abs(z_rows).sum(axis=1, keepdims=True)
    return (observed + agree_minus_disagree) / 2.0


def phase4_refine(z: np.ndarray, graph: SideGraph, part: Partition,
                  vectors: np.ndarray, params: EstimatedParams,
                  config: HierarchyConfig, *, flag: int = 0, T: int = 1):
    """T sweeps of local refinement; returns the final (partition, vectors).

    Per sweep, each user moves to the group maximizing
    matches * rating_weight + edges_to_group * graph_weight, scored against the
    previous sweep's groups (synchronous update); cluster labels never change.
    With flag = 1 the vectors are re-decoded after every sweep.
    """
    if T < 0:
        raise ValidationError("T must be >= 0")
    if flag not in (0, 1):
        raise ValidationError("flag must be 0 or 1")
    a = graph.adjacency().astype(np.float64)
    zf = z.astype(np.float64)
    vectors = vectors.copy()
    group_of = part.group_of.copy()
    for _ in range(T):
        new_group_of = group_of.copy()
        for x in range(config.c):
            rows = np.flatnonzero(part.cluster_of == x)
            masks = np.stack([
                ((part.cluster_of == x) & (group_of == i)).astype(np.float64)
                for i in range(config.g)
            ])                                            # (g, n) previous-sweep groups
            edge_counts = a[rows] @ masks.T               # (nx, g)
            matches = _match_counts(zf[rows], vectors[x])
            scores = matches * params.rating_weight + edge_counts * params.graph_weight
            new_group_of[rows] = np.argmax(scores, axis=1)
        group_of = new_group_of
        for x in range(config.c):
            for i in range(config.g):
                if not np.any((part.cluster_of == x) & (group_of == i)):
                    warnings.warn(f"refinement emptied group {i} of cluster {x}")
        if flag == 1:
            vectors = phase3_vectors(z, Partition(part.cluster_of, group_of), config)
    return Partition(cluster_of=part.cluster_of, group_of=group_of), vectors


def default_iterations(n: int) -> int:
    return max(1, math.ceil(math.log2(max(n, 2))))


def misclassification_counts(part_hat: Partition, truth: Partition,
                             c: int = 2, g: int = 3) -> dict:
    """Best-alignment error counts: cluster labels, and joint (cluster, group).

    Minimized over cluster swaps and per-cluster group permutations, so
    internally consistent relabelings count as zero errors.
    """
    import itertools

    n = part_hat.n
    cl_h, gr_h = part_hat.cluster_of, part_hat.group_of
    cl_t, gr_t = truth.cluster_of, truth.group_of
    best_cluster = n
    best_joint = n
    for swap in itertools.permutations(range(c)):
        mapped = np.array(swap)[cl_t]
        cluster_err = int(np.count_nonzero(cl_h != mapped))
        best_cluster = min(best_cluster, cluster_err)
        joint = cluster_err  # misclustered users cannot be group-correct
        for x_t in range(c):
            x_h = swap[x_t]
            in_x = (cl_t == x_t) & (cl_h == x_h)
            best_x = int(np.count_nonzero(in_x))
            for perm in itertools.permutations(range(g)):
                mism = int(np.count_nonzero(np.array(perm)[gr_t[in_x]] != gr_h[in_x]))
                best_x = min(best_x, mism)
            joint += best_x
        best_joint = min(best_joint, joint)
    return {"cluster_errors": best_cluster, "joint_errors": best_joint}


def recover(obs: Observation, graph: SideGraph, config: HierarchyConfig, *,
            flag: int = 1, T: int | None = None, seed: int = 0,
            truth_matrix: np.ndarray | None = None,
            truth_partition: Partition | None = None) -> RecoveryResult:
    """Run the full pipeline and materialize the estimated rating matrix.

    Optional ground truth enables per-phase misclassification diagnostics and
    the `success` flag.  T defaults to ceil(log2(n)).
    """
    if config.q != 2 or (config.c, config.g) != (2, 3):
        raise UnsupportedFieldError("recovery pipeline requires (c, g, q) = (2, 3, 2)")
    if obs.n != config.n or obs.m != config.m or graph.n != config.n:
        raise ValidationError("observation/graph dimensions do not match config")
    t_start = time.perf_counter()
    z = map_y_to_z(obs)
    cluster_of = phase1_cluster(graph, 2, seed=seed)
    group_of = np.zeros(config.n, dtype=np.int64)
    for x in range(2):
        members = np.flatnonzero(cluster_of == x)
        group_of[members] = phase2_group(graph, members, config.g, seed=seed,
                                         stream_tag=f"phase2/{x}")
    part0 = Partition(cluster_of=cluster_of, group_of=group_of)
    vectors0 = phase3_vectors(z, part0, config)
    params = estimate_params(obs, graph, part0, vectors0, config)
    T = default_iterations(config.n) if T is None else T
    part_final, vectors_final = phase4_refine(
        z, graph, part0, vectors0, params, config, flag=flag, T=T)
    model_hat = RatingModel(vectors=vectors_final, config=config)
    matrix_hat = materialize_matrix(model_hat, part_final)

    diagnostics = {
        "flag": flag,
        "iterations": T,
        "seed": seed,
        "alpha_hat": params.alpha_hat,
        "beta_hat": params.beta_hat,
        "theta_hat": params.theta_hat,
        "rating_weight": params.rating_weight,
        "graph_weight": params.graph_weight,
    }
    if truth_partition is not None:
        diagnostics["phase12_errors"] = misclassification_counts(
            part0, truth_partition, config.c, config.g)
        diagnostics["final_errors"] = misclassification_counts(
            part_final, truth_partition, config.c, config.g)
    if truth_matrix is not None:
        diagnostics["success"] = bool(np.array_equal(matrix_hat, truth_matrix))
        diagnostics["wrong_entries"] = int(np.count_nonzero(matrix_hat != truth_matrix))
    diagnostics["wall_time"] = time.perf_counter() - t_start
    return RecoveryResult(partition_hat=part_final, vectors_hat=model_hat,
                          matrix_hat=matrix_hat, diagnostics=diagnostics)


def _dense_real(robs: RealObservation) -> tuple[np.ndarray, np.ndarray]:
    w = np.zeros((robs.n, robs.m))
    y = np.zeros((robs.n, robs.m))
    w[robs.rows, robs.cols] = 1.0
    y[robs.rows, robs.cols] = robs.vals
    return y, w


def _group_item_means(y: np.ndarray, w: np.ndarray, part: Partition,
                      config: HierarchyConfig) -> np.ndarray:
    """Per-(group, item) observed means with item-mean then global-mean fallback."""
    total = w.sum()
    global_mean = float((y * w).sum() / total) if total > 0 else 0.0
    col_cnt = w.sum(axis=0)
    col_sum = (y * w).sum(axis=0)
    item_mean = np.where(col_cnt > 0, col_sum / np.maximum(col_cnt, 1.0), global_mean)
    means = np.empty((config.c, config.g, config.m))
    for x in range(config.c):
        for i in range(config.g):
            rows = part.group_members(x, i)
            cnt = w[rows].sum(axis=0)
            sm = (y[rows] * w[rows]).sum(axis=0)
            means[x, i] = np.where(cnt > 0, sm / np.maximum(cnt, 1.0), item_mean)
    return means


def recover_gaussian(robs: RealObservation, graph: SideGraph,
                     config: HierarchyConfig, *, T: int | None = None,
                     seed: int = 0) -> GaussianRecoveryResult:
    """Real-valued variant: group/item means as vector estimates, RMSE refinement.

    Phases 1-2 are unchanged.  Vector estimation is the per-group per-item
    observed mean (Gaussian MLE).  Refinement scores each user and group as
    -rmse * n_observed * lambda + edges * graph_weight with
    lambda = 1 / (2 * estimated residual variance), re-estimating means after
    each sweep.
    """
    if (config.c, config.g) != (2, 3):
        raise UnsupportedFieldError("gaussian pipeline requires (c, g) = (2, 3)")
    if robs.n != config.n or robs.m != config.m or graph.n != config.n:
        raise ValidationError("observation/graph dimensions do not match config")
    cluster_of = phase1_cluster(graph, 2, seed=seed)
    group_of = np.zeros(config.n, dtype=np.int64)
    for x in range(2):
        members = np.flatnonzero(cluster_of == x)
        group_of[members] = phase2_group(graph, members, config.g, seed=seed,
                                         stream_tag=f"phase2/{x}")
    part = Partition(cluster_of=cluster_of, group_of=group_of)
    y, w = _dense_real(robs)
    means = _group_item_means(y, w, part, config)

    residuals = robs.vals - means[part.cluster_of[robs.rows],
                                  part.group_of[robs.rows], robs.cols]
    sigma2_hat = float(np.mean(residuals ** 2)) if robs.size else 0.0
    lam = 1.0 / (2.0 * max(sigma2_hat, 1e-9))
    _, _, graph_weight = _graph_estimates(graph, part, config)

    a = graph.adjacency().astype(np.float64)
    n_obs = w.sum(axis=1)
    sum_y2 = (y ** 2 * w).sum(axis=1)
    T = default_iterations(config.n) if T is None else T
    group_of = part.group_of.copy()
    for _ in range(T):
        new_group_of = group_of.copy()
        for x in range(config.c):
            rows = np.flatnonzero(part.cluster_of == x)
            masks = np.stack([
                ((part.cluster_of == x) & (group_of == i)).astype(np.float64)
                for i in range(config.g)
            ])
            edge_counts = a[rows] @ masks.T
            mu = means[x]                                     # (g, m)
            sse = (sum_y2[rows, None]
                   - 2.0 * (y[rows] @ mu.T)
                   + w[rows] @ (mu ** 2).T)
            cnt = np.maximum(n_obs[rows, None], 1.0)
            rmse = np.sqrt(np.maximum(sse, 0.0) / cnt)
            rmse[n_obs[rows] == 0] = 0.0                      # no ratings: graph decides
            scores = -rmse * n_obs[rows, None] * lam + edge_counts * graph_weight
            new_group_of[rows] = np.argmax(scores, axis=1)
        group_of = new_group_of
        means = _group_item_means(y, w, Partition(part.cluster_of, group_of), config)
    part_final = Partition(cluster_of=part.cluster_of, group_of=group_of)
    matrix_hat = means[part_final.cluster_of, part_final.group_of]
    diagnostics = {"sigma2_hat": sigma2_hat, "lambda": lam,
                   "graph_weight": graph_weight, "iterations": T, "seed": seed}
    return GaussianRecoveryResult(partition_hat=part_final, means_hat=means,
                                  matrix_hat=matrix_hat, diagnostics=diagnostics)
