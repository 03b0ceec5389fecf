"""Command-line entry point.

Subcommands: theory | generate | recover | sweep | compare-flags | rmse | oracle.
Every run writes a manifest sufficient to reproduce it.  Exit codes: 0 on
success, 1 on I/O or parse errors, 2 on domain/validation errors.  The default
seed comes from the HIERMC_SEED environment variable; --seed wins.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import __version__
from .fileio import (
    ensure_dir,
    read_edge_list,
    read_matrix,
    read_observations,
    write_edge_list,
    write_manifest,
    write_matrix,
    write_observations,
)
from .gen import (
    ColumnSectionProfile,
    GraphParams,
    ObservationParams,
    gen_hsbm_graph,
    gen_partition,
    gen_rating_model,
    sample_observations,
)
from .harness import (
    GaussianSpec,
    SweepSpec,
    compare_flags,
    format_flag_rows,
    format_rmse_rows,
    format_sweep_rows,
    rmse_eval,
    sweep,
)
from .model import (
    DeltaPair,
    HierarchyConfig,
    ParseError,
    ValidationError,
    compute_deltas,
    materialize_matrix,
)
from .oracle import TruthParams, exhaustive_mle
from .recovery import recover
from .rng import RNG_SCHEME
from .theory import InfoMeasures, RegimeKind, p_star_232, p_star_general, regime_map

_TERM_REGIME = {1: RegimeKind.PERFECT.value, 2: RegimeKind.GROUPING_LIMITED.value,
                3: RegimeKind.CLUSTERING_LIMITED.value}


def _default_seed() -> int:
    return int(os.environ.get("HIERMC_SEED", "0"))


def _add_seed(parser):
    parser.add_argument("--seed", type=int, default=None,
                        help="base seed (default: $HIERMC_SEED or 0)")


def _add_graph_args(parser, required=True):
    group = parser.add_mutually_exclusive_group(required=required)
    group.add_argument("--graph-probs", nargs=3, type=float,
                       metavar=("ALPHA", "BETA", "GAMMA"),
                       help="absolute edge probabilities")
    group.add_argument("--graph-tilde", nargs=3, type=float,
                       metavar=("ALPHA~", "BETA~", "GAMMA~"),
                       help="scaled edge probabilities x = x~ * ln(n)/n")


def _resolve_graph(args, n: int) -> tuple[GraphParams, tuple | None]:
    if args.graph_probs is not None:
        return GraphParams(*args.graph_probs), None
    a, b, g = args.graph_tilde
    return GraphParams.from_tilde(a, b, g, n), (a, b, g)


def _resolve_seed(args) -> int:
    return args.seed if args.seed is not None else _default_seed()


def _manifest_common(args, command: str, seed: int) -> dict:
    return {"command": command, "seed": seed, "rng_scheme": RNG_SCHEME,
            "version": __version__}


def cmd_theory(args) -> int:
    deltas = DeltaPair(delta_g=args.delta_g, delta_c=args.delta_c)
    if args.map:
        if args.gamma is None:
            raise ValidationError("--map requires --gamma for the (alpha, beta) inversion")
        i_g_values = np.linspace(0.0, args.i_g_max, args.grid)
        i_c2_values = np.linspace(0.0, args.i_c2_max, args.grid)
        cells = regime_map(i_g_values, i_c2_values, args.n, args.m, args.theta,
                           deltas, args.gamma)
        out_dir = ensure_dir(args.out_dir)
        csv_path = os.path.join(out_dir, "regime_map.csv")
        with open(csv_path, "w") as fh:
            fh.write("I_g,I_c2,regime,p_star\n")
            for cell in cells:
                fh.write(f"{cell.i_g:.10g},{cell.i_c2:.10g},"
                         f"{cell.regime.kind.value},{cell.p_star:.6g}\n")
        if not args.no_plot:
            from .plotting import plot_regime_map
            plot_regime_map(cells, os.path.join(out_dir, "regime_map.png"),
                            title=f"n={args.n} m={args.m} "
                                  f"dg={args.delta_g:g} dc={args.delta_c:g}")
        manifest = _manifest_common(args, "theory-map", 0)
        manifest.update({"n": args.n, "m": args.m, "theta": args.theta,
                         "delta_g": args.delta_g, "delta_c": args.delta_c,
                         "gamma": args.gamma, "grid": args.grid,
                         "i_g_max": args.i_g_max, "i_c2_max": args.i_c2_max})
        write_manifest(manifest, os.path.join(out_dir, "regime_map_manifest.json"))
        counts = {}
        for cell in cells:
            counts[cell.regime.kind.value] = counts.get(cell.regime.kind.value, 0) + 1
        print(f"wrote {csv_path} cells={len(cells)} " +
              " ".join(f"{k}={v}" for k, v in sorted(counts.items())))
        return 0

    if args.i_measures is not None:
        i_g, i_c1, i_c2 = args.i_measures
        info = InfoMeasures(i_g=i_g, i_c1=i_c1, i_c2=i_c2)
    elif args.graph_probs is not None or args.graph_tilde is not None:
        graph, _ = _resolve_graph(args, args.n)
        from .theory import info_measures
        info = info_measures(graph, ObservationParams(p=0.0, theta=args.theta))
    else:
        raise ValidationError("provide --i-measures, --graph-probs, or --graph-tilde")
    if args.general is not None:
        c, g, r, q = (int(v) for v in args.general)
        ps = p_star_general(c, g, r, q, args.n, args.m, args.theta, info, deltas)
    else:
        ps = p_star_232(args.n, args.m, args.theta, info, deltas)
    extra = " out_of_range=1" if ps.out_of_range else ""
    print(f"p_star={ps.value:.6g} active_term={ps.active_term} "
          f"regime={_TERM_REGIME[ps.active_term]} prefactor={ps.prefactor:.6g}"
          f"{extra}")
    return 0


def cmd_generate(args) -> int:
    seed = _resolve_seed(args)
    config = HierarchyConfig(n=args.n, m=args.m)
    graph_params, tilde = _resolve_graph(args, args.n)
    profile = (ColumnSectionProfile(tau=tuple(args.tau)) if args.tau
               else ColumnSectionProfile.uniform())
    model = gen_rating_model(config, profile, seed, exact=args.exact_deltas)
    part = gen_partition(config, seed)
    graph = gen_hsbm_graph(part, graph_params, seed)
    truth = materialize_matrix(model, part)
    obs = sample_observations(truth, ObservationParams(p=args.p, theta=args.theta), seed)
    deltas = compute_deltas(model)

    out_dir = ensure_dir(args.out_dir)
    write_edge_list(graph, os.path.join(out_dir, "graph.txt"))
    write_observations(obs, os.path.join(out_dir, "observations.txt"))
    write_matrix(truth, os.path.join(out_dir, "truth.txt"))
    manifest = _manifest_common(args, "generate", seed)
    manifest.update({
        "n": args.n, "m": args.m, "p": args.p, "theta": args.theta,
        "alpha": graph_params.alpha, "beta": graph_params.beta,
        "gamma": graph_params.gamma, "tilde": list(tilde) if tilde else None,
        "tau": list(profile.tau), "exact_deltas": args.exact_deltas,
        "delta_g": deltas.delta_g, "delta_c": deltas.delta_c,
        "edges": graph.edge_count, "observed": obs.size,
    })
    write_manifest(manifest, os.path.join(out_dir, "manifest.json"))
    print(f"wrote {out_dir}: n={args.n} m={args.m} edges={graph.edge_count} "
          f"observed={obs.size} delta_g={deltas.delta_g:.6g} delta_c={deltas.delta_c:.6g}")
    return 0


def cmd_recover(args) -> int:
    seed = _resolve_seed(args)
    config = HierarchyConfig(n=args.n, m=args.m)
    graph = read_edge_list(args.graph, args.n)
    obs = read_observations(args.observations, args.n, args.m)
    truth = read_matrix(args.truth) if args.truth else None
    if truth is not None and truth.shape != (args.n, args.m):
        raise ValidationError(f"truth matrix is {truth.shape}, expected {(args.n, args.m)}")
    result = recover(obs, graph, config, flag=args.flag, T=args.iterations,
                     seed=seed, truth_matrix=truth)
    out_dir = ensure_dir(args.out_dir)
    write_matrix(result.matrix_hat, os.path.join(out_dir, "matrix_hat.txt"))
    diag_path = os.path.join(out_dir, "diagnostics.txt")
    with open(diag_path, "w") as fh:
        for key in sorted(result.diagnostics):
            fh.write(f"{key}={result.diagnostics[key]}\n")
    manifest = _manifest_common(args, "recover", seed)
    manifest.update({"n": args.n, "m": args.m, "graph": os.path.abspath(args.graph),
                     "observations": os.path.abspath(args.observations),
                     "truth": os.path.abspath(args.truth) if args.truth else None,
                     "flag": args.flag, "iterations": args.iterations})
    write_manifest(manifest, os.path.join(out_dir, "recover_manifest.json"))
    d = result.diagnostics
    summary = (f"alpha_hat={d['alpha_hat']:.6g} beta_hat={d['beta_hat']:.6g} "
               f"theta_hat={d['theta_hat']:.6g} T={d['iterations']}")
    if truth is not None:
        summary = f"success={str(d['success']).lower()} wrong_entries={d['wrong_entries']} " + summary
    print(summary)
    return 0


def _build_sweep_spec(args, seed: int) -> SweepSpec:
    graph_params, tilde = _resolve_graph(args, args.n)
    return SweepSpec(
        n=args.n, m=args.m, theta=args.theta, graph=graph_params,
        multipliers=tuple(args.multipliers), trials=args.trials, base_seed=seed,
        flag=args.flag, iterations=args.iterations,
        delta_g=args.delta_g, delta_c=args.delta_c, tilde=tilde,
        exact_profile=not args.sampled_deltas)


def cmd_sweep(args) -> int:
    seed = _resolve_seed(args)
    spec = _build_sweep_spec(args, seed)
    points = sweep(spec, jobs=args.jobs)
    out_dir = ensure_dir(args.out_dir)
    csv_path = os.path.join(out_dir, "sweep.csv")
    with open(csv_path, "w") as fh:
        fh.write(format_sweep_rows(points))
    manifest = _manifest_common(args, "sweep", seed)
    manifest.update(spec.manifest())
    write_manifest(manifest, os.path.join(out_dir, "sweep_manifest.json"))
    if not args.no_plot:
        from .plotting import plot_sweep
        plot_sweep(points, os.path.join(out_dir, "sweep.png"),
                   title=f"n={spec.n} m={spec.m} theta={spec.theta:g} flag={spec.flag}")
    print(f"wrote {csv_path} p_star={spec.p_star():.6g} points={len(points)} "
          f"trials={spec.trials}")
    return 0


def cmd_compare_flags(args) -> int:
    seed = _resolve_seed(args)
    args.flag = 1  # placeholder; both flags run regardless
    spec = _build_sweep_spec(args, seed)
    by_flag = compare_flags(spec, jobs=args.jobs)
    out_dir = ensure_dir(args.out_dir)
    csv_path = os.path.join(out_dir, "compare_flags.csv")
    with open(csv_path, "w") as fh:
        fh.write(format_flag_rows(by_flag))
    manifest = _manifest_common(args, "compare-flags", seed)
    manifest.update(spec.manifest())
    del manifest["flag"]
    write_manifest(manifest, os.path.join(out_dir, "compare_flags_manifest.json"))
    if not args.no_plot:
        from .plotting import plot_flag_comparison
        plot_flag_comparison(by_flag, os.path.join(out_dir, "compare_flags.png"),
                             title=f"n={spec.n} m={spec.m} theta={spec.theta:g}")
    print(f"wrote {csv_path} p_star={spec.p_star():.6g}")
    return 0


def cmd_rmse(args) -> int:
    seed = _resolve_seed(args)
    graph_params, tilde = _resolve_graph(args, args.n)
    spec = GaussianSpec(n=args.n, m=args.m, graph=graph_params, p=args.p,
                        sigma2=args.sigma2, base_seed=seed, tilde=tilde,
                        iterations=args.iterations)
    rows = rmse_eval(spec, trials=args.trials)
    out_dir = ensure_dir(args.out_dir)
    csv_path = os.path.join(out_dir, "rmse.csv")
    with open(csv_path, "w") as fh:
        fh.write(format_rmse_rows(rows))
    manifest = _manifest_common(args, "rmse", seed)
    manifest.update(spec.manifest())
    manifest["trials"] = args.trials
    write_manifest(manifest, os.path.join(out_dir, "rmse_manifest.json"))
    if not args.no_plot:
        from .plotting import plot_rmse
        plot_rmse(rows, os.path.join(out_dir, "rmse.png"),
                  title=f"p={spec.p:g} sigma2={spec.sigma2:g}")
    means = {}
    for row in rows:
        means.setdefault(row["method"], []).append(row["rmse"])
    summary = " ".join(f"{k}={float(np.mean(v)):.4f}" for k, v in means.items())
    print(f"wrote {csv_path} {summary}")
    return 0


def cmd_oracle(args) -> int:
    seed = _resolve_seed(args)
    config = HierarchyConfig(n=args.n, m=args.m)
    graph = read_edge_list(args.graph, args.n)
    obs = read_observations(args.observations, args.n, args.m)
    params = TruthParams(alpha=args.alpha, beta=args.beta, gamma=args.gamma,
                         theta=args.theta, p=args.p)
    result = exhaustive_mle(obs, graph, params, config, cap=args.cap)
    line = (f"nll={result.nll:.6g} tie={str(result.is_tie).lower()} "
            f"candidates={result.n_candidates} delta_g={result.delta_g:.6g} "
            f"delta_c={result.delta_c:.6g}")
    if args.truth:
        truth = read_matrix(args.truth)
        match = bool(np.array_equal(result.candidate.matrix(), truth))
        line += f" matches_truth={str(match).lower()}"
    print(line)
    out_dir = ensure_dir(args.out_dir)
    manifest = _manifest_common(args, "oracle", seed)
    manifest.update({"n": args.n, "m": args.m, "alpha": args.alpha, "beta": args.beta,
                     "gamma": args.gamma, "theta": args.theta, "p": args.p,
                     "cap": args.cap, "nll": result.nll,
                     "candidates": result.n_candidates})
    write_manifest(manifest, os.path.join(out_dir, "oracle_manifest.json"))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hiermc",
        description="Matrix completion with hierarchical graph side information")
    parser.add_argument("--version", action="version", version=f"hiermc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("theory", help="evaluate the optimal observation threshold")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--theta", type=float, default=0.0)
    p.add_argument("--i-measures", nargs=3, type=float, metavar=("I_G", "I_C1", "I_C2"))
    _add_graph_args(p, required=False)
    p.add_argument("--delta-g", type=float, required=True)
    p.add_argument("--delta-c", type=float, required=True)
    p.add_argument("--general", nargs=4, metavar=("C", "G", "R", "Q"),
                   help="evaluate the general-(c,g,r,q) formula instead of (2,3,2,2)")
    p.add_argument("--map", action="store_true",
                   help="emit a regime map over an (I_g, I_c2) grid")
    p.add_argument("--gamma", type=float, help="cross-cluster probability for --map")
    p.add_argument("--i-g-max", type=float, default=0.05)
    p.add_argument("--i-c2-max", type=float, default=0.02)
    p.add_argument("--grid", type=int, default=50)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_theory)

    p = sub.add_parser("generate", help="write a synthetic instance to disk")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--theta", type=float, default=0.0)
    _add_graph_args(p)
    p.add_argument("--tau", nargs=8, type=float, help="column pattern proportions")
    p.add_argument("--exact-deltas", action="store_true",
                   help="fix pattern counts by largest-remainder rounding")
    p.add_argument("--out-dir", default=".")
    _add_seed(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("recover", help="run the four-phase pipeline on files")
    p.add_argument("--graph", required=True)
    p.add_argument("--observations", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--truth", help="optional ground-truth matrix for scoring")
    p.add_argument("--flag", type=int, choices=(0, 1), default=1)
    p.add_argument("--iterations", "-T", type=int, default=None)
    p.add_argument("--out-dir", default=".")
    _add_seed(p)
    p.set_defaults(func=cmd_recover)

    def add_sweep_args(p, with_flag=True):
        p.add_argument("--n", type=int, required=True)
        p.add_argument("--m", type=int, required=True)
        p.add_argument("--theta", type=float, default=0.0)
        _add_graph_args(p)
        p.add_argument("--multipliers", nargs="+", type=float, required=True)
        p.add_argument("--trials", type=int, required=True)
        if with_flag:
            p.add_argument("--flag", type=int, choices=(0, 1), default=1)
        p.add_argument("--iterations", "-T", type=int, default=None)
        p.add_argument("--delta-g", type=float, default=0.5)
        p.add_argument("--delta-c", type=float, default=0.5)
        p.add_argument("--sampled-deltas", action="store_true",
                       help="sample column patterns instead of exact counts")
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--out-dir", default=".")
        p.add_argument("--no-plot", action="store_true")
        _add_seed(p)

    p = sub.add_parser("sweep", help="success-rate sweep over p/p* multipliers")
    add_sweep_args(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare-flags", help="paired flag=0 vs flag=1 sweep")
    add_sweep_args(p, with_flag=False)
    p.set_defaults(func=cmd_compare_flags)

    p = sub.add_parser("rmse", help="Gaussian-variant RMSE against trivial baselines")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--sigma2", type=float, required=True)
    _add_graph_args(p)
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--iterations", "-T", type=int, default=None)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--no-plot", action="store_true")
    _add_seed(p)
    p.set_defaults(func=cmd_rmse)

    p = sub.add_parser("oracle", help="exhaustive MLE audit of a tiny instance")
    p.add_argument("--graph", required=True)
    p.add_argument("--observations", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--theta", type=float, required=True)
    p.add_argument("--p", type=float, default=1.0)
    p.add_argument("--truth", help="optional ground-truth matrix")
    p.add_argument("--cap", type=int, default=10_000_000)
    p.add_argument("--out-dir", default=".")
    _add_seed(p)
    p.set_defaults(func=cmd_oracle)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
