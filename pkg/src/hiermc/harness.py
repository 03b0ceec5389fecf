"""Monte Carlo orchestration: phase-transition sweeps, flag pairing, RMSE runs.

Every trial is a pure function of one integer seed, derived as
base_seed + point_index * SEED_STRIDE + trial_index, so sweeps reproduce
bit-identically and aggregate independently of execution order.  Trials whose
generation turns out degenerate are excluded and counted, never resampled.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .gen import (
    ColumnSectionProfile,
    GraphParams,
    ObservationParams,
    gen_gaussian_instance,
    gen_hierarchical_group_means,
    gen_hsbm_graph,
    gen_partition,
    gen_rating_model,
    sample_observations,
)
from .model import (
    DegenerateModelError,
    DeltaPair,
    HierarchyConfig,
    ValidationError,
    materialize_matrix,
)
from .recovery import recover, recover_gaussian
from .rng import RNG_SCHEME
from .theory import InfoMeasures, info_measures, p_star_232

__all__ = [
    "SEED_STRIDE",
    "SweepSpec",
    "GaussianSpec",
    "TrialOutcome",
    "PointResult",
    "wilson_interval",
    "run_trial",
    "sweep",
    "compare_flags",
    "rmse_trial",
    "rmse_eval",
    "format_sweep_rows",
    "format_flag_rows",
    "format_rmse_rows",
]

SEED_STRIDE = 1_000_000

_Z95 = 1.959963984540054


@dataclass(frozen=True)
class SweepSpec:
    """A success-rate experiment over a grid of p/p* multipliers."""

    n: int
    m: int
    theta: float
    graph: GraphParams
    multipliers: tuple[float, ...]
    trials: int
    base_seed: int = 0
    flag: int = 1
    iterations: int | None = None
    delta_g: float = 0.5
    delta_c: float = 0.5
    profile: ColumnSectionProfile = field(default_factory=ColumnSectionProfile.uniform)
    exact_profile: bool = True
    tilde: tuple[float, float, float] | None = None  # as given, echoed in manifests

    def __post_init__(self):
        mults = tuple(float(x) for x in self.multipliers)
        if any(x < 0 for x in mults):
            raise ValidationError("multipliers must be nonnegative")
        if list(mults) != sorted(mults):
            raise ValidationError("multipliers must be sorted ascending")
        if self.trials < 1:
            raise ValidationError("need trials >= 1")
        if self.flag not in (0, 1):
            raise ValidationError("flag must be 0 or 1")
        object.__setattr__(self, "multipliers", mults)

    @classmethod
    def with_tilde(cls, n: int, m: int, theta: float, alpha_tilde: float,
                   beta_tilde: float, gamma_tilde: float, **kwargs) -> "SweepSpec":
        graph = GraphParams.from_tilde(alpha_tilde, beta_tilde, gamma_tilde, n)
        return cls(n=n, m=m, theta=theta, graph=graph,
                   tilde=(alpha_tilde, beta_tilde, gamma_tilde), **kwargs)

    def config(self) -> HierarchyConfig:
        return HierarchyConfig(n=self.n, m=self.m)

    def measures(self) -> InfoMeasures:
        return info_measures(self.graph, ObservationParams(p=0.0, theta=self.theta))

    def p_star(self) -> float:
        ps = p_star_232(self.n, self.m, self.theta, self.measures(),
                        DeltaPair(delta_g=self.delta_g, delta_c=self.delta_c))
        return ps.value

    def manifest(self) -> dict:
        return {
            "n": self.n, "m": self.m, "theta": self.theta,
            "alpha": self.graph.alpha, "beta": self.graph.beta, "gamma": self.graph.gamma,
            "tilde": list(self.tilde) if self.tilde else None,
            "multipliers": list(self.multipliers), "trials": self.trials,
            "base_seed": self.base_seed, "flag": self.flag,
            "iterations": self.iterations,
            "delta_g": self.delta_g, "delta_c": self.delta_c,
            "tau": list(self.profile.tau), "exact_profile": self.exact_profile,
            "p_star": self.p_star(), "seed_stride": SEED_STRIDE,
            "rng_scheme": RNG_SCHEME,
        }


@dataclass(frozen=True)
class TrialOutcome:
    success: bool
    valid: bool
    seed: int
    wall_time: float
    diagnostics: dict


@dataclass(frozen=True)
class PointResult:
    multiplier: float
    p: float
    trials: int          # valid trials entering the rate
    successes: int
    invalid: int
    success_rate: float
    ci_low: float
    ci_high: float


def wilson_interval(successes: int, trials: int, z: float = _Z95) -> tuple[float, float]:
    """Wilson score interval; preferred over the normal one at small counts."""
    if trials == 0:
        return 0.0, 1.0
    phat = successes / trials
    denom = 1.0 + z * z / trials
    center = (phat + z * z / (2 * trials)) / denom
    half = z * math.sqrt(phat * (1 - phat) / trials + z * z / (4 * trials * trials)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def trial_seed(spec: SweepSpec, point_index: int, trial_index: int) -> int:
    return spec.base_seed + point_index * SEED_STRIDE + trial_index


def run_trial(spec: SweepSpec, point_index: int, trial_index: int,
              flag: int | None = None) -> TrialOutcome:
    """Generate one instance, recover, and compare entrywise with the truth."""
    seed = trial_seed(spec, point_index, trial_index)
    p = min(spec.multipliers[point_index] * spec.p_star(), 1.0)
    config = spec.config()
    start = time.perf_counter()
    try:
        model = gen_rating_model(config, spec.profile, seed, exact=spec.exact_profile)
    except DegenerateModelError as exc:
        return TrialOutcome(success=False, valid=False, seed=seed,
                            wall_time=time.perf_counter() - start,
                            diagnostics={"invalid_reason": str(exc)})
    part = gen_partition(config, seed)
    graph = gen_hsbm_graph(part, spec.graph, seed)
    truth = materialize_matrix(model, part)
    obs = sample_observations(truth, ObservationParams(p=p, theta=spec.theta), seed)
    result = recover(obs, graph, config, flag=spec.flag if flag is None else flag,
                     T=spec.iterations, seed=seed, truth_matrix=truth,
                     truth_partition=part)
    success = bool(result.diagnostics["success"])
    # independent entrywise recount, kept alongside the primary comparison
    recount = int(np.count_nonzero(result.matrix_hat != truth)) == 0
    if recount != success:
        raise AssertionError("success flag disagrees with entrywise recount")
    return TrialOutcome(success=success, valid=True, seed=seed,
                        wall_time=time.perf_counter() - start,
                        diagnostics=result.diagnostics)


def _sweep_task(args):
    spec, point_index, trial_index = args
    out = run_trial(spec, point_index, trial_index)
    return point_index, trial_index, out.valid, out.success


def _aggregate(spec: SweepSpec, hits: dict[int, list[tuple[bool, bool]]]) -> list[PointResult]:
    points = []
    for pi, mult in enumerate(spec.multipliers):
        outcomes = hits.get(pi, [])
        valid = [s for ok, s in outcomes if ok]
        invalid = sum(1 for ok, _ in outcomes if not ok)
        successes = sum(valid)
        n_valid = len(valid)
        lo, hi = wilson_interval(successes, n_valid)
        rate = successes / n_valid if n_valid else 0.0
        points.append(PointResult(
            multiplier=mult, p=min(mult * spec.p_star(), 1.0), trials=n_valid,
            successes=successes, invalid=invalid, success_rate=rate,
            ci_low=lo, ci_high=hi))
    return points


def sweep(spec: SweepSpec, jobs: int = 1) -> list[PointResult]:
    """Success rate per multiplier with Wilson 95% intervals."""
    tasks = [(spec, pi, ti) for pi in range(len(spec.multipliers))
             for ti in range(spec.trials)]
    hits: dict[int, list[tuple[bool, bool]]] = {}
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_task, tasks, chunksize=4))
    else:
        results = [_sweep_task(t) for t in tasks]
    for pi, ti, valid, success in sorted(results):
        hits.setdefault(pi, []).append((valid, success))
    return _aggregate(spec, hits)


def _flags_task(args):
    spec, point_index, trial_index = args
    out0 = run_trial(spec, point_index, trial_index, flag=0)
    out1 = run_trial(spec, point_index, trial_index, flag=1)
    return point_index, trial_index, (out0.valid, out0.success), (out1.valid, out1.success)


def compare_flags(spec: SweepSpec, jobs: int = 1) -> dict[int, list[PointResult]]:
    """Paired-seed success rates for flag=0 and flag=1 on identical instances."""
    tasks = [(spec, pi, ti) for pi in range(len(spec.multipliers))
             for ti in range(spec.trials)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_flags_task, tasks, chunksize=4))
    else:
        results = [_flags_task(t) for t in tasks]
    hits0: dict[int, list[tuple[bool, bool]]] = {}
    hits1: dict[int, list[tuple[bool, bool]]] = {}
    for pi, ti, o0, o1 in sorted(results):
        hits0.setdefault(pi, []).append(o0)
        hits1.setdefault(pi, []).append(o1)
    return {0: _aggregate(spec, hits0), 1: _aggregate(spec, hits1)}


@dataclass(frozen=True)
class GaussianSpec:
    """Real-valued RMSE experiment on a hierarchical-means instance."""

    n: int
    m: int
    graph: GraphParams
    p: float
    sigma2: float
    base_seed: int = 0
    mean_low: float = 0.0
    mean_high: float = 10.0
    iterations: int | None = None
    tilde: tuple[float, float, float] | None = None

    def config(self) -> HierarchyConfig:
        return HierarchyConfig(n=self.n, m=self.m)

    def manifest(self) -> dict:
        return {
            "n": self.n, "m": self.m, "p": self.p, "sigma2": self.sigma2,
            "alpha": self.graph.alpha, "beta": self.graph.beta, "gamma": self.graph.gamma,
            "tilde": list(self.tilde) if self.tilde else None,
            "base_seed": self.base_seed,
            "mean_low": self.mean_low, "mean_high": self.mean_high,
            "iterations": self.iterations, "rng_scheme": RNG_SCHEME,
        }


def _masked_rmse(pred: np.ndarray, truth: np.ndarray, mask: np.ndarray) -> float:
    k = int(mask.sum())
    if k == 0:
        return 0.0
    diff = (pred - truth)[mask]
    return float(np.sqrt((diff ** 2).sum() / k))


def rmse_trial(spec: GaussianSpec, trial_index: int,
               methods=("proposed", "user_average", "item_average")) -> dict[str, float]:
    """RMSE over unobserved entries for the pipeline and the trivial baselines."""
    seed = spec.base_seed + trial_index
    config = spec.config()
    means = gen_hierarchical_group_means(config, seed, spec.mean_low, spec.mean_high)
    inst = gen_gaussian_instance(config, means, spec.sigma2, spec.p, seed)
    graph = gen_hsbm_graph(inst.partition, spec.graph, seed)

    observed = np.zeros((spec.n, spec.m), dtype=bool)
    observed[inst.obs.rows, inst.obs.cols] = True
    unobserved = ~observed
    y = np.zeros((spec.n, spec.m))
    y[inst.obs.rows, inst.obs.cols] = inst.obs.vals

    total = observed.sum()
    global_mean = float(y[observed].mean()) if total else 0.0
    out: dict[str, float] = {}
    for method in methods:
        if method == "proposed":
            res = recover_gaussian(inst.obs, graph, config, T=spec.iterations, seed=seed)
            pred = res.matrix_hat
        elif method == "user_average":
            cnt = observed.sum(axis=1)
            avg = np.where(cnt > 0, y.sum(axis=1) / np.maximum(cnt, 1), global_mean)
            pred = np.repeat(avg[:, None], spec.m, axis=1)
        elif method == "item_average":
            cnt = observed.sum(axis=0)
            avg = np.where(cnt > 0, y.sum(axis=0) / np.maximum(cnt, 1), global_mean)
            pred = np.repeat(avg[None, :], spec.n, axis=0)
        else:
            raise ValidationError(f"unknown method {method!r}")
        out[method] = _masked_rmse(pred, inst.truth_matrix, unobserved)
    return out


def rmse_eval(spec: GaussianSpec, trials: int = 1,
              methods=("proposed", "user_average", "item_average")) -> list[dict]:
    """One row per (trial, method): {trial, method, p, sigma2, rmse}."""
    rows = []
    for t in range(trials):
        values = rmse_trial(spec, t, methods)
        for method in methods:
            rows.append({"trial": t, "method": method, "p": spec.p,
                         "sigma2": spec.sigma2, "rmse": values[method]})
    return rows


def format_sweep_rows(points: list[PointResult]) -> str:
    lines = ["p_over_pstar,trials,successes,success_rate,ci_low,ci_high"]
    for pt in points:
        lines.append(f"{pt.multiplier:.10g},{pt.trials},{pt.successes},"
                     f"{pt.success_rate:.6f},{pt.ci_low:.6f},{pt.ci_high:.6f}")
    return "\n".join(lines) + "\n"


def format_flag_rows(by_flag: dict[int, list[PointResult]]) -> str:
    lines = ["p_over_pstar,flag,trials,successes,success_rate,ci_low,ci_high"]
    for flag in (0, 1):
        for pt in by_flag[flag]:
            lines.append(f"{pt.multiplier:.10g},{flag},{pt.trials},{pt.successes},"
                         f"{pt.success_rate:.6f},{pt.ci_low:.6f},{pt.ci_high:.6f}")
    return "\n".join(lines) + "\n"


def format_rmse_rows(rows: list[dict]) -> str:
    lines = ["method,p,sigma2,rmse"]
    for row in rows:
        lines.append(f"{row['method']},{row['p']:.10g},{row['sigma2']:.10g},"
                     f"{row['rmse']:.6f}")
    return "\n".join(lines) + "\n"
