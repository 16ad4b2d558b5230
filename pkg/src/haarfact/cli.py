"""Command-line interface: ``haarfact {gen,factor,verify,norm,formulas,bench}``."""

from __future__ import annotations

import argparse
import json
import os
import sys
from fractions import Fraction

from .exceptions import HaarfactError, HypothesisError, SelectionError, StageFailure

EXIT_OK = 0
EXIT_STAGE_FAILURE = 2
EXIT_MISMATCH = 3


def _seed(args) -> int:
    override = os.environ.get("HAARFACT_SEED")
    return int(override) if override not in (None, "") else args.seed


def _emit(data, output: str | None) -> None:
    from .generate import write_json

    if output:
        write_json(data, output)
    else:
        json.dump(data, sys.stdout, sort_keys=True, indent=1)
        sys.stdout.write("\n")


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def cmd_gen(args) -> int:
    from .generate import generate_operator, save_operator

    params = {}
    for item in args.param or []:
        key, _, value = item.partition("=")
        params[key] = _parse_value(value)
    if args.values:
        params["values"] = [v.strip() for v in args.values.split(",")]
    seed = _seed(args)
    op = generate_operator(args.kind, args.nmax, seed, params)
    meta = {"kind": args.kind, "n_max": args.nmax, "seed": seed, "params": params}
    if args.output:
        digest = save_operator(op, args.output, meta)
        print(digest)
    else:
        _emit(dict(op.to_json(), meta=meta), None)
    return EXIT_OK


def cmd_factor(args) -> int:
    from .generate import load_operator
    from .norms import ExpectationStrategy
    from .pipeline import PipelineConfig, full_factor

    T = load_operator(args.op)
    config = PipelineConfig(space=args.space, eta=args.eta, delta=args.delta, mode=args.mode,
                            seed=_seed(args), max_samples=args.max_samples,
                            min_depth=args.min_depth, max_depth=args.max_depth,
                            allow_degraded=args.allow_degraded,
                            column_method=args.column_method,
                            strategy=ExpectationStrategy(mc_samples=args.mc_samples,
                                                         seed=_seed(args)))
    try:
        cert = full_factor(T, config)
    except (StageFailure, SelectionError, HypothesisError) as exc:
        diagnostic = getattr(exc, "diagnostic", {})
        json.dump({"error": str(exc), "diagnostic": diagnostic}, sys.stderr, default=str,
                  sort_keys=True)
        sys.stderr.write("\n")
        return EXIT_STAGE_FAILURE
    _emit(cert.to_json(), args.output)
    if args.output:
        print(f"branch={cert.branch} scalar={cert.scalar} depth={cert.depth} "
              f"error={cert.certified_error:.6g} bound={cert.neumann_bound:.6g}")
    return EXIT_OK


def cmd_verify(args) -> int:
    from .generate import read_json
    from .verify import run_verify

    report = run_verify(read_json(args.cert), read_json(args.op), args.samples, _seed(args))
    if args.json:
        json.dump(report.to_json(), sys.stdout, sort_keys=True, default=str)
        sys.stdout.write("\n")
    elif report.ok:
        values = report.values
        print(f"verified: branch={values['branch']} scalar={values['scalar']} "
              f"depth={values['depth']} max_basis_residual={values['max_basis_residual']:.3g} "
              f"bound={values['neumann_bound']:.6g}"
              + (f" estimate={values['norm_product_estimate']:.6g}"
                 if "norm_product_estimate" in values else ""))
    else:
        print(f"FAILED: {report.clause}: {report.detail}", file=sys.stderr)
    return EXIT_OK if report.ok else EXIT_MISMATCH


def cmd_norm(args) -> int:
    from .generate import load_vector
    from .linalg import OmegaCoefficients
    from .norms import ExpectationStrategy, hardy_norm, omega_norm

    x = load_vector(args.vec)
    strategy = ExpectationStrategy(exact_cutoff=args.exact_cutoff, mc_samples=args.mc_samples,
                                   seed=_seed(args))
    if isinstance(x, OmegaCoefficients):
        result = omega_norm(x, spec=args.space, strategy=strategy)
    else:
        result = hardy_norm(x, args.space, strategy)
    _emit(result.to_json(), None)
    return EXIT_OK


def cmd_formulas(args) -> int:
    from .pipeline import formulas

    gamma = Fraction(args.gamma)
    eta = Fraction(args.eta)
    _emit(formulas(args.n, gamma, eta), None)
    return EXIT_OK


def cmd_bench(args) -> int:
    from .bench import run_bench, to_csv

    rows = run_bench(args.suite, args.budget, _seed(args) if args.seed is not None else None)
    if args.format == "csv":
        text = to_csv(rows)
    else:
        text = json.dumps(rows, sort_keys=True, indent=1) + "\n"
    if args.output:
        with open(args.output, "w", encoding="utf-8") as handle:
            handle.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="haarfact",
                                     description="Generate operators, factor the identity "
                                                 "through them and re-check certificates.")
    parser.add_argument("--threads", type=int, default=None,
                        help="cap numba and BLAS threads")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate an operator file")
    gen.add_argument("--kind", required=True,
                     choices=["identity", "diagonal", "multiplier", "random", "perturbed-identity"])
    gen.add_argument("--nmax", type=int, required=True)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--values", help="comma-separated diagonal values, e.g. 3/5,4/5")
    gen.add_argument("--param", action="append", metavar="KEY=VALUE",
                     help="generator parameter (gamma, eps, density, space)")
    gen.add_argument("-o", "--output")
    gen.set_defaults(func=cmd_gen)

    factor = sub.add_parser("factor", help="run the factorization pipeline")
    factor.add_argument("--op", required=True)
    factor.add_argument("--space", default="lp:1:independent")
    factor.add_argument("--eta", type=float, default=0.1)
    factor.add_argument("--delta", type=float, default=0.0)
    factor.add_argument("--mode", default="auto", choices=["auto", "large-diagonal", "primary"])
    factor.add_argument("--seed", type=int, default=0)
    factor.add_argument("--max-samples", type=int, default=10_000)
    factor.add_argument("--mc-samples", type=int, default=10_000)
    factor.add_argument("--min-depth", type=int, default=0)
    factor.add_argument("--max-depth", type=int, default=None)
    factor.add_argument("--allow-degraded", action="store_true")
    factor.add_argument("--column-method", default="exact", choices=["exact", "triangle"])
    factor.add_argument("-o", "--output")
    factor.set_defaults(func=cmd_factor)

    verify = sub.add_parser("verify", help="independently re-check a certificate")
    verify.add_argument("--cert", required=True)
    verify.add_argument("--op", required=True)
    verify.add_argument("--samples", type=int, default=0,
                        help="random trials for the norm estimate of L and R")
    verify.add_argument("--seed", type=int, default=0)
    verify.add_argument("--json", action="store_true")
    verify.set_defaults(func=cmd_verify)

    norm = sub.add_parser("norm", help="norm of a coefficient vector")
    norm.add_argument("--space", default="lp:1:independent")
    norm.add_argument("--vec", required=True)
    norm.add_argument("--exact-cutoff", type=int, default=20)
    norm.add_argument("--mc-samples", type=int, default=10_000)
    norm.add_argument("--seed", type=int, default=0)
    norm.set_defaults(func=cmd_norm)

    form = sub.add_parser("formulas", help="sufficient depths N0, N1, N2")
    form.add_argument("--n", type=int, required=True)
    form.add_argument("--gamma", required=True)
    form.add_argument("--eta", required=True)
    form.set_defaults(func=cmd_formulas)

    bench = sub.add_parser("bench", help="timing and accuracy tables")
    bench.add_argument("--suite", default="all", choices=["all", "norm", "pipeline", "mc"])
    bench.add_argument("--budget", type=float, default=None, help="seconds per suite")
    bench.add_argument("--seed", type=int, default=None)
    bench.add_argument("--format", default="csv", choices=["csv", "json"])
    bench.add_argument("-o", "--output")
    bench.set_defaults(func=cmd_bench)
    return parser


def _limit_threads(count: int | None):
    if count is None:
        return None
    import numba
    from threadpoolctl import threadpool_limits

    numba.set_num_threads(max(1, min(count, numba.config.NUMBA_NUM_THREADS)))
    return threadpool_limits(limits=count)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    limiter = _limit_threads(args.threads)
    try:
        return args.func(args)
    except HaarfactError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE_FAILURE
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    finally:
        if limiter is not None:
            limiter.restore_original_limits()


if __name__ == "__main__":
    sys.exit(main())
