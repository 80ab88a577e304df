"""Command-line surface: gen, extract, verify, lemmas, bench.

Exit codes: 0 success, 1 usage/IO errors, 2 extraction failure signaled,
3 verification mismatch. cmd_bench fans trials across threads when
GRADLEAK_THREADS is set (0 = one thread per CPU); rows are always written in
(h, trial) order regardless of completion order.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .errors import (
    ConfigError,
    ExtractionFailure,
    GeometryError,
    GradleakError,
    MatchAmbiguityError,
    SignRecoveryError,
)
from .extraction import ExtractionConfig, learn_model
from .model import (
    generate_random_net,
    load_net,
    load_recovered,
    save_net,
    save_recovered,
)
from .oracle import FiniteDiffConfig, Oracle, SmoothGradConfig
from .validation import (
    functional_equivalence,
    match_rows,
    mc_cauchy_tail,
    mc_chi2_diff,
    mc_crossing_gap,
    mc_gaussian_product,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_EXTRACTION_FAILED = 2
EXIT_VERIFY_MISMATCH = 3

BENCH_HEADER = [
    "h",
    "d",
    "mode",
    "trial",
    "success",
    "gradient_queries",
    "value_queries",
    "max_rel_error",
    "seconds",
]
_BENCH_VERIFY_POINTS = 1000
_BENCH_VERIFY_TOL = 1e-7
_GENERATOR_C_MIN = 0.1
_GENERATOR_W_MIN = 0.1
_ATTACKER_C = 0.01


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); remap to exit 1
        raise _UsageError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="gradleak", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", parents=[], help="generate a random target model file")
    gen.add_argument("--d", type=int, required=True, help="input dimension")
    gen.add_argument("--h", type=int, required=True, help="hidden width")
    gen.add_argument("--c-min", type=float, default=_GENERATOR_C_MIN)
    gen.add_argument("--w-min", type=float, default=_GENERATOR_W_MIN)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=cmd_gen)

    ext = sub.add_parser("extract", help="run the extraction attack against a model file")
    ext.add_argument("--model", required=True)
    ext.add_argument("--mode", choices=("grad", "smoothgrad", "membership"), default="grad")
    ext.add_argument("--h", type=int, default=None, help="assumed hidden width (default: true width)")
    ext.add_argument("--delta", type=float, default=0.1)
    ext.add_argument("--c", type=float, default=_ATTACKER_C)
    ext.add_argument("--seed", type=int, default=0)
    ext.add_argument("--max-retries", type=int, default=5)
    ext.add_argument("--sigma", type=float, default=0.0)
    ext.add_argument("--n-samples", type=int, default=10)
    ext.add_argument("--out", required=True, help="recovered model file")
    ext.add_argument("--report", default=None, help="report JSON file")
    ext.set_defaults(func=cmd_extract)

    ver = sub.add_parser("verify", help="compare a recovered model against the target")
    ver.add_argument("--model", required=True)
    ver.add_argument("--recovered", required=True)
    ver.add_argument("--samples", type=int, default=100_000)
    ver.add_argument("--tol", type=float, default=1e-7)
    ver.add_argument("--seed", type=int, default=0)
    ver.set_defaults(func=cmd_verify)

    lem = sub.add_parser("lemmas", help="Monte Carlo checks of the probability bounds")
    lem.add_argument("--which", choices=("gap", "tail", "chi2diff", "product", "all"), default="all")
    lem.add_argument("--samples", type=int, default=1_000_000)
    lem.add_argument("--seed", type=int, default=0)
    lem.add_argument("--c", type=float, default=0.5)
    lem.add_argument("--epsilon", type=float, default=None)
    lem.add_argument("--l", type=float, default=10.0)
    lem.set_defaults(func=cmd_lemmas)

    ben = sub.add_parser("bench", help="query-count benchmark over widths")
    ben.add_argument("--h-list", required=True, help="comma-separated widths, e.g. 2,4,8")
    ben.add_argument("--d", type=int, required=True)
    ben.add_argument("--trials", type=int, required=True)
    ben.add_argument("--mode", choices=("grad", "smoothgrad", "membership"), default="grad")
    ben.add_argument("--delta", type=float, default=0.1)
    ben.add_argument("--seed", type=int, default=0)
    ben.add_argument("--out", required=True)
    ben.set_defaults(func=cmd_bench)

    return parser


def cmd_gen(args) -> int:
    if args.h > args.d:
        print(
            f"error: h={args.h} exceeds d={args.d}; {args.h} rows in dimension "
            f"{args.d} cannot be linearly independent",
            file=sys.stderr,
        )
        return EXIT_USAGE
    net = generate_random_net(args.d, args.h, c_min=args.c_min, w_min=args.w_min, seed=args.seed)
    save_net(net, args.out)
    gram = net.A @ net.A.T
    off = np.abs(gram - np.eye(net.h))
    print(f"wrote {args.out}")
    print(f"  d={net.d} h={net.h}")
    print(f"  max |row norm - 1| = {np.max(np.abs(np.sqrt(np.sum(net.A**2, axis=1)) - 1)):.3e}")
    print(f"  max pairwise |<A_i,A_j>| = {np.max(off) if net.h > 1 else 0.0:.6f} (allowed {1 - args.c_min:.6f})")
    print(f"  min |w_i| = {np.min(np.abs(net.w)):.6f} (required {args.w_min:.6f})")
    return EXIT_OK


def _failure_report(cfg: ExtractionConfig, oracle: Oracle) -> dict:
    return {
        "success": False,
        "retries": cfg.max_retries,
        "gradient_queries": oracle.ledger.gradient_queries,
        "value_queries": oracle.ledger.value_queries,
        "crossings": [],
    }


def cmd_extract(args) -> int:
    net = load_net(args.model)
    h = args.h if args.h is not None else net.h
    cfg = ExtractionConfig(
        h=h,
        delta=args.delta,
        c=args.c,
        seed=args.seed,
        max_retries=args.max_retries,
    )
    oracle = Oracle(
        net,
        mode=args.mode,
        fd=FiniteDiffConfig(),
        sg=SmoothGradConfig(sigma=args.sigma, n_samples=args.n_samples, seed=args.seed),
    )
    try:
        report = learn_model(oracle, cfg)
    except (ExtractionFailure, GeometryError, SignRecoveryError) as err:
        print(f"extraction failed: {err}", file=sys.stderr)
        if args.report:
            Path(args.report).write_text(json.dumps(_failure_report(cfg, oracle), indent=2) + "\n")
        return EXIT_EXTRACTION_FAILED
    save_recovered(report.model, args.out)
    if args.report:
        Path(args.report).write_text(json.dumps(report.report_dict(), indent=2) + "\n")
    print(
        f"extracted h={report.model.h} rows in {report.gradient_queries} gradient "
        f"and {report.value_queries} value queries (retries={report.retries})"
    )
    return EXIT_OK


def cmd_verify(args) -> int:
    net = load_net(args.model)
    model = load_recovered(args.recovered)
    if net.d != model.d or net.h != model.h:
        raise ValueError(
            f"dimension mismatch: model d={net.d} h={net.h}, recovered d={model.d} h={model.h}"
        )
    try:
        model.validate_signs()
    except ValueError as err:
        print(f"recovered model is malformed: {err}", file=sys.stderr)
        return EXIT_VERIFY_MISMATCH

    eq = functional_equivalence(net, model, args.samples, args.tol, seed=args.seed)
    print(f"max relative error over {eq.n_points} points: {eq.max_rel_error:.3e} (tol {eq.tol:.1e})")
    if eq.vacuous:
        print("warning: 0 sample points, equivalence check is vacuous")
    try:
        match = match_rows(net, model.Z)
        print(
            f"row match: permutation {match.permutation.tolist()}, signs "
            f"{match.signs.tolist()}, max row error {match.max_row_error:.3e}"
        )
    except MatchAmbiguityError as err:
        print(f"row match ambiguous: {err}")
    return EXIT_OK if eq.passed else EXIT_VERIFY_MISMATCH


def cmd_lemmas(args) -> int:
    which = args.which
    reports = []
    if which in ("gap", "all"):
        eps = args.epsilon if args.epsilon is not None else 1e-3
        reports.append(("gap", mc_crossing_gap(args.c, eps, args.samples, seed=args.seed)))
    if which in ("tail", "all"):
        reports.append(("tail", mc_cauchy_tail(args.l, args.samples, seed=args.seed)))
    if which in ("chi2diff", "all"):
        eps = args.epsilon if args.epsilon is not None else 0.1
        reports.append(("chi2diff", mc_chi2_diff(eps, args.samples, seed=args.seed)))
    if which in ("product", "all"):
        reports.append(("product", mc_gaussian_product(args.samples, seed=args.seed)))
    all_passed = True
    for name, rep in reports:
        line = {"lemma": name}
        line.update(rep.to_dict())
        print(json.dumps(line))
        all_passed = all_passed and rep.passed
    return EXIT_OK if all_passed else EXIT_VERIFY_MISMATCH


def _bench_workers() -> int:
    raw = os.environ.get("GRADLEAK_THREADS", "1")
    try:
        n = int(raw)
    except ValueError as err:
        raise ConfigError(f"GRADLEAK_THREADS must be an integer, got {raw!r}") from err
    if n < 0:
        raise ConfigError("GRADLEAK_THREADS must be non-negative")
    if n == 0:
        return os.cpu_count() or 1
    return n


def _bench_trial(spec) -> dict:
    h, d, mode, trial, delta, base_seed = spec
    seeds = np.random.SeedSequence([base_seed, h, trial]).generate_state(3, dtype=np.uint64)
    net_seed, extract_seed, verify_seed = (int(s) for s in seeds)
    net = generate_random_net(d, h, c_min=_GENERATOR_C_MIN, w_min=_GENERATOR_W_MIN, seed=net_seed)
    oracle = Oracle(net, mode=mode, sg=SmoothGradConfig(sigma=0.0, seed=extract_seed))
    cfg = ExtractionConfig(h=h, delta=delta, c=_ATTACKER_C, seed=extract_seed)
    start = time.perf_counter()
    try:
        report = learn_model(oracle, cfg)
        eq = functional_equivalence(
            net, report.model, _BENCH_VERIFY_POINTS, _BENCH_VERIFY_TOL, seed=verify_seed
        )
        success = eq.passed
        max_rel_error = eq.max_rel_error
    except (ExtractionFailure, GeometryError, SignRecoveryError):
        success = False
        max_rel_error = float("nan")
    seconds = time.perf_counter() - start
    return {
        "h": h,
        "d": d,
        "mode": mode,
        "trial": trial,
        "success": success,
        "gradient_queries": oracle.ledger.gradient_queries,
        "value_queries": oracle.ledger.value_queries,
        "max_rel_error": max_rel_error,
        "seconds": round(seconds, 6),
    }


def cmd_bench(args) -> int:
    try:
        h_list = [int(tok) for tok in args.h_list.split(",") if tok.strip()]
    except ValueError as err:
        raise _UsageError(f"bad --h-list: {err}") from err
    if not h_list or args.trials < 1:
        raise _UsageError("--h-list must be nonempty and --trials positive")
    for h in h_list:
        if h > args.d:
            raise _UsageError(f"h={h} exceeds d={args.d}")

    specs = [
        (h, args.d, args.mode, trial, args.delta, args.seed)
        for h in h_list
        for trial in range(args.trials)
    ]
    workers = _bench_workers()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_bench_trial, specs))
    else:
        rows = [_bench_trial(spec) for spec in specs]

    rows.sort(key=lambda r: (h_list.index(r["h"]), r["trial"]))
    with open(args.out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=BENCH_HEADER)
        writer.writeheader()
        writer.writerows(rows)
    n_success = sum(1 for r in rows if r["success"])
    print(f"wrote {len(rows)} rows to {args.out} ({n_success} successes)")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except _UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (ExtractionFailure, GeometryError, SignRecoveryError) as err:
        print(f"extraction failed: {err}", file=sys.stderr)
        return EXIT_EXTRACTION_FAILED
    except (GradleakError, ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
