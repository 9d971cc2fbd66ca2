"""Command-line entry point: ``fembem-bench {run,alpha,fit}``."""

import argparse
import logging
import sys
from pathlib import Path

from .bench import BenchmarkConfig, STRATEGIES, run_alpha_table, run_benchmark, run_offline_fit
from .errors import FembemError
from .micro_bem import composite_moduli


def _add_config_flags(p):
    p.add_argument("--config", type=Path, help="INI file with a [benchmark] section")
    p.add_argument("--strategy", choices=STRATEGIES)
    p.add_argument("--surface-n", type=int, dest="surface_n", help="resolution exponent n")
    p.add_argument("--surface-file", dest="surface_file", help="x y z height file")
    p.add_argument("--seed", type=int)
    p.add_argument("--steps", type=int, help="pseudo-time steps of the loading program")
    p.add_argument("--out", help="output directory")
    p.add_argument("--tol-corr", type=float, dest="tol_corr")
    p.add_argument("--tol-newton", type=float, dest="tol_newton")
    p.add_argument("--dump-maps", type=int, nargs="+", dest="dump_maps", metavar="STEP",
                   help="write pressure maps for these steps")


def _config(args):
    keys = ("strategy", "surface_n", "surface_file", "seed", "steps", "out", "tol_corr",
            "tol_newton", "dump_maps")
    overrides = {k: getattr(args, k, None) for k in keys}
    if args.config is not None:
        return BenchmarkConfig.from_file(args.config, **overrides)
    return BenchmarkConfig(**{k: v for k, v in overrides.items() if v is not None})


def build_parser():
    parser = argparse.ArgumentParser(prog="fembem-bench",
                                     description="FEM-BEM rough contact benchmark")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="multiscale two-block benchmark")
    _add_config_flags(run)

    alpha = sub.add_parser("alpha", help="flat-punch shape factor table")
    alpha.add_argument("--n", type=int, nargs="+", default=[1, 2, 3, 4, 5, 6])
    alpha.add_argument("--matrix-free", action="store_true", help="allow n >= 7")
    alpha.add_argument("--out", default="bench_out")
    alpha.add_argument("--E1", type=float, default=1.0)
    alpha.add_argument("--nu1", type=float, default=0.3)
    alpha.add_argument("--E2", type=float, default=1.0)
    alpha.add_argument("--nu2", type=float, default=0.3)

    fit = sub.add_parser("fit", help="off-line power-law fit for the SAN strategy")
    _add_config_flags(fit)
    fit.add_argument("--study", type=int, nargs="+", metavar="N_STEPS",
                     help="also fit with these sample counts")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "alpha":
            elastic = composite_moduli(args.E1, args.nu1, args.E2, args.nu2)
            rows = run_alpha_table(args.n, elastic, matrix_free=args.matrix_free,
                                   out=Path(args.out) / "alpha.csv")
            for n, a in rows:
                print(f"n={n}  alpha={a:.4f}")
            return 0
        config = _config(args)
        if args.command == "fit":
            fit, seconds, study = run_offline_fit(config, study_steps=args.study)
            print(f"a={fit.a:.4g}  b={fit.b:.4f}  R2={fit.r2:.5f}  ({seconds:.2f} s)")
            for k, a, b, r2, sec in study:
                print(f"n_steps={k}: a={a:.4g}  b={b:.4f}  R2={r2:.5f}  ({sec:.2f} s)")
            return 0
        out = run_benchmark(config)
        last = out.curve[-1] if out.curve else None
        if last is not None:
            print(f"{len(out.curve)} steps converged; final P = {last[3]:.6g} N, "
                  f"P/(EA) = {last[4]:.6g}")
        if not out.converged:
            print(f"Newton failed at step {out.failure.step + 1}; see "
                  f"{Path(config.out) / 'failure.txt'}", file=sys.stderr)
            return 1
        return 0
    except FembemError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
