"""Command-line entry points: gen, decompose, experiment, concentration.

Every output file starts with comment lines echoing the fully resolved
configuration (defaults included) and the package version, so a run is
reproducible from its own artifacts.  All randomness flows from --seed via
counter substreams; identical configuration and seed give bit-identical
output files.
"""

import argparse
import sys

import numpy as np

from . import __version__
from .concentration import SweepSpec, run_sweep, sweep_slope
from .decomposition import (
    CPPowerDecomposition,
    DecompositionConfig,
    decompose,
    save_report,
)
from .evaluation import TABLE_COLUMNS, recovery_curve, table_row
from .models import (
    ICASpec,
    MultiviewSpec,
    gen_gmm,
    gen_ica,
    gen_multiview,
    load_samples,
    moment_gmm3,
    moment_ica4,
    moment_multiview,
    save_samples,
)
from .tensor import cp_to_dense, load_tensor, save_tensor

DEFAULT_TABLE_K = (10, 20, 50, 100, 200)
FULL_TABLE_K = (10, 20, 50, 100, 200, 500)
DEFAULT_FIG_K = (10, 100)
DEFAULT_L_GRID = (10, 30, 100, 300, 1000, 3000, 10000)


def _echo_config(fh, args, command):
    fh.write(f"# cplearn {__version__} command={command}\n")
    for key in sorted(vars(args)):
        if key in ("func", "config"):
            continue
        fh.write(f"# {key}={getattr(args, key)}\n")


def _read_config(path):
    """Flat key-value text: one 'key value' or 'key=value' per line, # comments."""
    overrides = {}
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, _, value = line.replace("=", " ", 1).partition(" ")
            overrides[key.strip().replace("-", "_")] = value.strip()
    return overrides


def _apply_config_file(parser, argv, args):
    """Use config values as subcommand defaults; explicit flags still win."""
    overrides = _read_config(args.config)
    sub = parser._subparsers._group_actions[0].choices[args.command]
    typed = {}
    for action in sub._actions:
        if action.dest in overrides:
            raw = overrides.pop(action.dest)
            if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
                typed[action.dest] = raw.lower() in ("1", "true", "yes")
            elif action.type is not None:
                typed[action.dest] = action.type(raw)
            else:
                typed[action.dest] = raw
            action.required = False
    if overrides:
        raise SystemExit(f"unknown config keys: {sorted(overrides)}")
    sub.set_defaults(**typed)
    return parser.parse_args(argv)


def _int_list(text):
    return [int(t) for t in text.split(",")]


def cmd_gen(args):
    if args.model in ("multiview", "gmm"):
        spec = MultiviewSpec(d=args.d, k=args.k, noise_scale=args.zeta,
                             balanced=args.balanced)
        gen = gen_multiview if args.model == "multiview" else gen_gmm
        samples, truth = gen(spec, args.n, args.seed)
    else:
        spec = ICASpec(d=args.d, k=args.k, source_law=args.source_law,
                       sparsity=args.sparsity)
        samples, mixing, kappa = gen_ica(spec, args.n, args.seed)
        truth = None
    save_samples(args.out, samples)
    if args.truth_out:
        if args.model == "ica":
            from .tensor import CPModel
            truth = CPModel.symmetric(np.abs(kappa), mixing, order=4,
                                      signs=np.sign(kappa))
        save_tensor(args.truth_out, cp_to_dense(truth))
    print(f"wrote {samples.n_views}-view sample set (d={samples.d}, n={samples.n}) to {args.out}")
    return 0


def cmd_decompose(args):
    if args.tensor:
        oracle = load_tensor(args.tensor)
    else:
        samples = load_samples(args.samples)
        if args.moment == "multiview":
            oracle = moment_multiview(samples)
        elif args.moment == "gmm3":
            if args.variance is None:
                raise SystemExit("--variance is required for the gmm3 moment")
            oracle = moment_gmm3(samples, args.variance)
        else:
            oracle = moment_ica4(samples)
    cfg = DecompositionConfig(
        k=args.k, n_init=args.n_init, max_iter=args.max_iter,
        stopping=args.stopping, t1=args.t1, t2=args.t2,
        cluster_epsilon=args.cluster_epsilon, init=args.init, seed=args.seed,
    )
    report = decompose(oracle, cfg)
    save_report(args.out, report)
    with open(args.out) as fh:
        body = fh.read()
    with open(args.out, "w") as fh:
        _echo_config(fh, args, "decompose")
        fh.write(body)
    k_found = 0 if report.model is None else report.model.k
    print(f"recovered {k_found}/{args.k} components in {report.elapsed_seconds:.2f}s"
          + (" (shortfall)" if report.shortfall else ""))
    return 0


def _table_cell(k, args):
    spec = MultiviewSpec(d=args.d, k=k, noise_scale=args.zeta, balanced=True)
    L = min(args.init_per_component * k, args.max_init)
    runs = []
    for run in range(args.runs):
        samples, truth = gen_multiview(spec, args.n, _run_seed(args.seed, k, run))
        oracle = moment_multiview(samples)
        cfg = DecompositionConfig(k=k, n_init=L, max_iter=args.max_iter,
                                  t1=args.t1, t2=args.t2, seed=_run_seed(args.seed, k, run))
        runs.append((decompose(oracle, cfg), truth))
    return table_row(runs, match_threshold=args.match_threshold)


def _run_seed(root, k, run):
    return (int(root) * 1_000_003 + k * 131 + run) % (2 ** 63)


def cmd_experiment(args):
    failures = 0
    with open(args.out, "w") as fh:
        _echo_config(fh, args, f"experiment {args.subcommand}")
        if args.subcommand == "table1":
            fh.write(",".join(TABLE_COLUMNS) + "\n")
            for k in args.k_grid:
                try:
                    row = _table_cell(k, args)
                    fh.write(row.as_csv() + "\n")
                except Exception as exc:  # keep the remaining cells running
                    failures += 1
                    fh.write(f"{k},error,{exc}\n")
                fh.flush()
        else:
            fh.write("k,L,rate_mean,rate_median\n")
            for k in args.k_grid:
                grid = [L for L in args.L_grid if L <= args.max_init] or [args.max_init]
                try:
                    per_run = []
                    spec = MultiviewSpec(d=args.d, k=k, noise_scale=args.zeta, balanced=True)
                    for run in range(args.runs):
                        samples, truth = gen_multiview(spec, args.n, _run_seed(args.seed, k, run))
                        cfg = DecompositionConfig(k=k, n_init=grid[-1], max_iter=args.max_iter,
                                                  t1=args.t1, t2=args.t2,
                                                  seed=_run_seed(args.seed, k, run))
                        curve = recovery_curve(moment_multiview(samples), truth, cfg, grid,
                                               threshold=args.recovery_threshold)
                        per_run.append([r for _, r in curve])
                    rates = np.array(per_run)
                    for i, L in enumerate(grid):
                        fh.write(f"{k},{L},{rates[:, i].mean():.6g},{np.median(rates[:, i]):.6g}\n")
                except Exception as exc:
                    failures += 1
                    fh.write(f"{k},error,{exc},\n")
                fh.flush()
    print(f"wrote {args.out}" + (f" ({failures} failed cells)" if failures else ""))
    return 1 if failures else 0


def cmd_concentration(args):
    if not args.n_grid:
        raise SystemExit("n_grid must not be empty")
    spec = SweepSpec(model=args.model, d=args.d, k=args.k, n_grid=tuple(args.n_grid),
                     seeds=args.seeds, regime=args.regime,
                     sparsity_grid=tuple(args.sparsity_grid or ()))
    cells = run_sweep(spec, root_seed=args.seed)
    with open(args.out, "w") as fh:
        _echo_config(fh, args, "concentration")
        fh.write("model,d,k,regime,n,seed,error_estimate\n")
        for c in cells:
            fh.write(f"{c.model},{c.d},{c.k},{c.regime},{c.n},{c.seed},{c.error:.8g}\n")
    if args.slopes_out and args.model != "sparse-ica":
        fit = sweep_slope(cells)
        with open(args.slopes_out, "w") as fh:
            _echo_config(fh, args, "concentration-slopes")
            fh.write("model,d,k,regime,slope,intercept,residual_std,n_points\n")
            fh.write(f"{args.model},{args.d},{args.k},{args.regime},"
                     f"{fit.slope:.6g},{fit.intercept:.6g},{fit.residual_std:.6g},{fit.n_points}\n")
    print(f"wrote {len(cells)} cells to {args.out}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="cplearn",
                                description="CP decomposition of latent-variable moment tensors")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate synthetic samples")
    g.add_argument("--model", choices=("multiview", "gmm", "ica"), default="multiview")
    g.add_argument("--d", type=int, default=100)
    g.add_argument("--k", type=int, default=10)
    g.add_argument("--n", type=int, default=1000)
    g.add_argument("--zeta", type=float, default=0.01,
                   help="per-entry noise scale (multiview/gmm)")
    g.add_argument("--balanced", action="store_true", default=True)
    g.add_argument("--no-balanced", dest="balanced", action="store_false")
    g.add_argument("--source-law", choices=("rademacher", "uniform", "bernoulli-gaussian"),
                   default="rademacher")
    g.add_argument("--sparsity", type=float, default=0.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--truth-out", default=None)
    g.add_argument("--config", default=None)
    g.set_defaults(func=cmd_gen)

    d = sub.add_parser("decompose", help="decompose samples or a dense tensor")
    src = d.add_mutually_exclusive_group(required=True)
    src.add_argument("--samples", default=None)
    src.add_argument("--tensor", default=None)
    d.add_argument("--moment", choices=("multiview", "gmm3", "ica4"), default="multiview")
    d.add_argument("--variance", type=float, default=None,
                   help="known spherical variance for the gmm3 moment")
    d.add_argument("--k", type=int, required=True)
    d.add_argument("--n-init", type=int, default=100)
    d.add_argument("--max-iter", type=int, default=100)
    d.add_argument("--stopping", choices=("threshold", "fixed"), default="threshold")
    d.add_argument("--t1", type=float, default=1e-08)
    d.add_argument("--t2", type=float, default=1e-07)
    d.add_argument("--cluster-epsilon", type=float, default=0.5)
    d.add_argument("--init", choices=("random-sphere", "svd-slice"), default="random-sphere")
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--out", required=True)
    d.add_argument("--config", default=None)
    d.set_defaults(func=cmd_decompose)

    e = sub.add_parser("experiment", help="reproduce the error table or recovery curves")
    e.add_argument("subcommand", choices=("table1", "fig3"))
    e.add_argument("--d", type=int, default=100)
    e.add_argument("--n", type=int, default=1000)
    e.add_argument("--zeta", type=float, default=0.01, help="per-entry noise scale")
    e.add_argument("--k-grid", type=_int_list, default=list(DEFAULT_TABLE_K))
    e.add_argument("--full-grid", action="store_true",
                   help="use the full k grid including 500")
    e.add_argument("--L-grid", type=_int_list, default=list(DEFAULT_L_GRID))
    e.add_argument("--runs", type=int, default=10)
    e.add_argument("--max-iter", type=int, default=100)
    e.add_argument("--t1", type=float, default=1e-08)
    e.add_argument("--t2", type=float, default=1e-07)
    e.add_argument("--init-per-component", type=int, default=100,
                   help="L = min(this * k, max-init)")
    e.add_argument("--max-init", type=int, default=20000)
    e.add_argument("--match-threshold", type=float, default=0.2)
    e.add_argument("--recovery-threshold", type=float, default=0.2)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out", required=True)
    e.add_argument("--config", default=None)
    e.set_defaults(func=cmd_experiment)

    c = sub.add_parser("concentration", help="error-norm sweeps over sample size")
    c.add_argument("--model", choices=("multiview", "ica", "sparse-ica"), default="multiview")
    c.add_argument("--d", type=int, default=50)
    c.add_argument("--k", type=int, default=50)
    c.add_argument("--regime", choices=("low", "high"), default="low")
    c.add_argument("--n-grid", type=_int_list, default=[1000, 4000, 16000])
    c.add_argument("--sparsity-grid", type=_int_list, default=None)
    c.add_argument("--seeds", type=int, default=5)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out", required=True)
    c.add_argument("--slopes-out", default=None)
    c.add_argument("--config", default=None)
    c.set_defaults(func=cmd_concentration)
    return p


def main(argv=None):
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        args = _apply_config_file(parser, argv, args)
    if args.command == "experiment" and args.full_grid:
        args.k_grid = list(FULL_TABLE_K)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
