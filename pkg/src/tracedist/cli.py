"""Command-line entry point: ``tracedist <verb> ...``.

All output is JSON (or newline-delimited traces for ``sample``).  ``--out``
writes to a file (or a directory for ``preset``) instead of stdout.
Exit codes: 0 success / conforming, 2 non-conforming estimate, 1 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict

from .builtins import resolve_chain
from .chain import ChainError
from .estimator import (
    CI_METHODS,
    DEFAULT_BATCH,
    DEFAULT_CAP,
    decide_equivalence_black_box,
    estimate_fixed_k,
    estimate_infinite,
    estimate_unbounded,
    paired_samplers,
)
from .experiments import PRESETS, ExperimentConfig, emit_report, run_preset
from .oracle import (
    EnumerationGuardError,
    decide_trace_equivalence,
    finite_trace_distance,
    fixed_k_distance,
    infinite_trace_distance_approx,
    tv_lower_bound_demo,
)
from .sampler import Sampler
from .structure import analyze

EXIT_OK, EXIT_USAGE, EXIT_NONCONFORMING = 0, 1, 2


class UsageError(Exception):
    pass


def _global_flags(p):
    # SUPPRESS keeps a subcommand default from overwriting a value given before the verb
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master seed (default 0)")
    p.add_argument("--out", default=argparse.SUPPRESS, help="output file or directory")
    p.add_argument("--threads", type=int, default=argparse.SUPPRESS,
                   help="worker threads for replications (0 = auto)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tracedist",
                                     description="Trace distances between labelled Markov chains.")
    _global_flags(parser)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True)

    est = sub.add_parser("estimate", help="black-box distance estimate from simulated runs")
    _global_flags(est)
    est.add_argument("--chain-a", required=True)
    est.add_argument("--chain-b", required=True)
    est.add_argument("--mode", choices=["fixed-k", "unbounded", "infinite", "equiv"], required=True)
    est.add_argument("--k", type=int)
    est.add_argument("--epsilon", type=float, help="fixed-k half-width target (default delta/2)")
    est.add_argument("--pmin", type=float)
    est.add_argument("--nmax", type=int)
    est.add_argument("--alpha", type=float, default=0.05)
    est.add_argument("--delta", type=float, default=0.2)
    est.add_argument("--ci", choices=CI_METHODS, default="goodman")
    est.add_argument("--grid", type=float, default=0.1, help="precision grid for equiv mode")
    est.add_argument("--batch", type=int, default=DEFAULT_BATCH)
    est.add_argument("--cap", type=int, default=DEFAULT_CAP)
    est.add_argument("--replication", type=int, default=0)

    orc = sub.add_parser("oracle", help="exact white-box computations")
    _global_flags(orc)
    orc.add_argument("what", choices=["dk", "finite", "infinite", "equiv", "demo-tv"])
    orc.add_argument("--chain-a")
    orc.add_argument("--chain-b")
    orc.add_argument("--k", type=int)
    orc.add_argument("--epsilon", type=float, default=0.05)
    orc.add_argument("--tau", type=float, default=0.1)
    orc.add_argument("--steps", type=int, nargs="+", default=[25, 100, 400])
    orc.add_argument("--exact", action=argparse.BooleanOptionalAction, default=True)

    an = sub.add_parser("analyze", help="state classification, lassos and BSCC flags")
    _global_flags(an)
    an.add_argument("chain")

    smp = sub.add_parser("sample", help="dump simulated traces, one per line")
    _global_flags(smp)
    smp.add_argument("chain")
    smp.add_argument("--length", type=int, required=True)
    smp.add_argument("--count", type=int, default=10)
    smp.add_argument("--stream", default="chain")
    smp.add_argument("--observe-states", action="store_true")

    demo = sub.add_parser("demo", help="numerical demonstrations")
    _global_flags(demo)
    demo.add_argument("what", choices=["tv"])
    demo.add_argument("--tau", type=float, default=0.1)
    demo.add_argument("--steps", type=int, nargs="+", default=[25, 100, 400])

    pre = sub.add_parser("preset", help="run an experiment preset")
    _global_flags(pre)
    pre.add_argument("name", choices=PRESETS)
    pre.add_argument("--replications", type=int)
    pre.add_argument("--tau", type=float, default=0.1)
    pre.add_argument("--pmin", type=float)
    pre.add_argument("--nmax", type=int)
    pre.add_argument("--alpha", type=float)
    pre.add_argument("--delta", type=float)
    pre.add_argument("--epsilon", type=float)
    pre.add_argument("--k", type=int)
    pre.add_argument("--steps", type=int, nargs="+")
    pre.add_argument("--ci", choices=CI_METHODS)
    pre.add_argument("--batch", type=int, default=DEFAULT_BATCH)
    pre.add_argument("--chains", type=int, default=500, help="lemma-fuzz chain count")
    return parser


def _emit(obj, out):
    text = json.dumps(obj, indent=2, default=_jsonable)
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _jsonable(x):
    if hasattr(x, "tolist"):
        return x.tolist()
    if hasattr(x, "to_dict"):
        return x.to_dict()
    raise TypeError(f"not JSON serializable: {type(x).__name__}")


def _pair(args):
    if not args.chain_a or not args.chain_b:
        raise UsageError("--chain-a and --chain-b are required")
    return resolve_chain(args.chain_a), resolve_chain(args.chain_b)


def _cmd_estimate(args):
    c1, c2 = _pair(args)
    equiv = args.mode == "equiv"
    s1, s2 = paired_samplers(c1, c2, args.seed, args.replication, observe_states=equiv)
    if args.mode == "fixed-k":
        if args.k is None:
            raise UsageError("--k is required for fixed-k mode")
        eps = args.epsilon if args.epsilon is not None else args.delta / 2
        report = estimate_fixed_k(s1, s2, args.k, args.alpha, eps, args.ci, args.batch, args.cap)
    elif equiv:
        report = decide_equivalence_black_box(s1, s2, args.grid, args.alpha)
    else:
        if args.pmin is None or args.nmax is None:
            raise UsageError(f"--pmin and --nmax are required for {args.mode} mode")
        fn = estimate_unbounded if args.mode == "unbounded" else estimate_infinite
        report = fn(s1, s2, args.pmin, args.nmax, args.alpha, args.delta, args.ci,
                    args.batch, args.cap)
    _emit(report.to_dict(), args.out)
    return EXIT_OK if report.conforming else EXIT_NONCONFORMING


def _cmd_oracle(args):
    if args.what == "demo-tv":
        return _tv(args.tau, args.steps, args.out, exact=args.exact)
    c1, c2 = _pair(args)
    if args.what == "dk":
        if args.k is None:
            raise UsageError("--k is required for oracle dk")
        result = fixed_k_distance(c1, c2, args.k).to_dict()
    elif args.what == "finite":
        result = finite_trace_distance(c1, c2, args.epsilon).to_dict()
    elif args.what == "infinite":
        result = infinite_trace_distance_approx(c1, c2, args.epsilon).to_dict()
    else:
        result = {"equivalent": decide_trace_equivalence(c1, c2),
                  "horizon": c1.n + c2.n - 1}
    _emit(result, args.out)
    return EXIT_OK


def _tv(tau, steps, out, exact=None):
    modes = [True, False] if exact is None else [exact]
    rows = []
    for n in steps:
        for e in modes:
            d = tv_lower_bound_demo(tau, n, exact=e)
            rows.append(asdict(d) | {"gap": d.gap})
    _emit({"tau": tau, "rows": rows}, out)
    return EXIT_OK


def _cmd_analyze(args):
    _emit(analyze(resolve_chain(args.chain)), args.out)
    return EXIT_OK


def _cmd_sample(args):
    chain = resolve_chain(args.chain)
    sampler = Sampler(chain, args.seed, args.stream, observe_states=args.observe_states)
    batch = sampler.draw(args.length, args.count)
    lines = batch.lines()
    if args.observe_states:
        names = chain.states
        lines = [f"{t}\t{' '.join(names[i] for i in row)}" for t, row in zip(lines, batch.states)]
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_demo(args):
    return _tv(args.tau, args.steps, args.out)


def _cmd_preset(args):
    cfg = ExperimentConfig(
        preset=args.name, seed=args.seed, replications=args.replications, tau=args.tau,
        pmin=args.pmin, n=args.nmax, alpha=args.alpha, delta=args.delta, epsilon=args.epsilon,
        k=args.k, ci_method=args.ci, batch_size=args.batch, chains=args.chains,
        threads=args.threads, out_dir=None,
        **({"steps": args.steps} if args.steps else {}),
    )
    report = run_preset(cfg)
    if args.out:
        emit_report(report, args.out)
        print(json.dumps({"preset": report.preset, "out": args.out,
                          "aggregate": report.aggregate}, indent=2))
    else:
        _emit(report.to_dict(), None)
    return EXIT_OK


_COMMANDS = {
    "estimate": _cmd_estimate,
    "oracle": _cmd_oracle,
    "analyze": _cmd_analyze,
    "sample": _cmd_sample,
    "demo": _cmd_demo,
    "preset": _cmd_preset,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE
    for name, default in (("seed", 0), ("out", None), ("threads", 1)):
        if not hasattr(args, name):
            setattr(args, name, default)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.verb](args)
    except (UsageError, ChainError, ValueError, EnumerationGuardError, OSError) as e:
        print(f"tracedist: error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
