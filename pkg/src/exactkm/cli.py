"""exactkm command line: ``run``, ``bench`` and ``gen``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .core import DatasetError, load_dataset, parse_gen_spec, save_dataset
from .engine import RunConfig, RunResult, run
from .strategies import ALGORITHMS

EXIT_OK, EXIT_INPUT, EXIT_ALGORITHM, EXIT_MISMATCH = 0, 1, 2, 3


class _AlgorithmError(Exception):
    pass


def _check_algorithm(name: str) -> str:
    if name not in ALGORITHMS:
        raise _AlgorithmError(f"unknown algorithm {name!r}; valid: {', '.join(ALGORITHMS)}")
    return name


def _load(args):
    if args.gen:
        return parse_gen_spec(args.gen)
    if not args.data:
        raise DatasetError("one of --data or --gen is required")
    return load_dataset(args.data, args.format)


def stats_document(result: RunResult, k: int, seed: int) -> dict:
    per_round = [r.as_dict() for r in result.per_round_stats]
    return {
        "algorithm": result.algorithm,
        "k": k,
        "seed": seed,
        "rounds": result.rounds_executed,
        "converged": result.converged,
        "per_round": per_round,
        "totals": result.totals(),
        "wall_ms": result.wall_ms,
    }


def cmd_run(args) -> int:
    _check_algorithm(args.algorithm)
    data = _load(args)
    cfg = RunConfig(algorithm=args.algorithm, k=args.k, seed=args.seed,
                    max_rounds=args.max_rounds, n_workers=args.threads)
    result = run(cfg, data)
    if args.out_centroids:
        np.savetxt(args.out_centroids, result.final_centroids, delimiter=",", fmt="%.17g")
    if args.out_assignments:
        Path(args.out_assignments).write_text("".join(f"{j}\n" for j in result.final_assignments))
    doc = stats_document(result, args.k, args.seed)
    if args.stats:
        Path(args.stats).write_text(json.dumps(doc, indent=2) + "\n")
    print(f"{args.algorithm}: {result.rounds_executed} rounds, converged={result.converged}, "
          f"assign calcs={doc['totals']['dist_calcs_assign']}, {result.wall_ms:.1f} ms")
    return EXIT_OK


def _parse_list(text: str, conv=str) -> list:
    items = [s.strip() for s in text.split(",") if s.strip()]
    if not items:
        raise ValueError(f"empty list {text!r}")
    return [conv(s) for s in items]


def bench(data, k: int, seeds, algorithms, threads: int = 1, max_rounds: int = 1000):
    """Run every (algorithm, seed) pair serially.

    Returns (rows, mismatch) where ``mismatch`` describes the first per-round
    assignment difference between an algorithm and the first one listed.
    """
    runs = {alg: [] for alg in algorithms}
    mismatch = None
    for seed in seeds:
        base = None
        for alg in algorithms:
            cfg = RunConfig(algorithm=alg, k=k, seed=seed, max_rounds=max_rounds, n_workers=threads)
            res = run(cfg, data)
            runs[alg].append(res)
            if base is None:
                base = res
            elif mismatch is None and res.digests != base.digests:
                t = next((i for i, (x, y) in enumerate(zip(base.digests, res.digests)) if x != y),
                         min(len(base.digests), len(res.digests)))
                mismatch = (f"seed {seed}: {alg} diverges from {algorithms[0]} at round {t} "
                            f"({res.rounds_executed} vs {base.rounds_executed} rounds)")
    rows = []
    ref = None
    for alg in algorithms:
        rs = runs[alg]
        row = {
            "algorithm": alg,
            "rounds": float(np.mean([r.rounds_executed for r in rs])),
            "wall_ms": float(np.mean([r.wall_ms for r in rs])),
            "dist_calcs_assign": float(np.mean([r.dist_calcs_assign for r in rs])),
            "dist_calcs_total": float(np.mean([r.dist_calcs_total for r in rs])),
        }
        if ref is None:
            ref = row
        row["q_t"] = _ratio(row["wall_ms"], ref["wall_ms"])
        row["q_a"] = _ratio(row["dist_calcs_assign"], ref["dist_calcs_assign"])
        row["q_au"] = _ratio(row["dist_calcs_total"], ref["dist_calcs_total"])
        rows.append(row)
    return rows, mismatch


def _ratio(x: float, y: float) -> float:
    if y == 0:
        return 1.0 if x == 0 else float("inf")
    return x / y


def cmd_bench(args) -> int:
    algorithms = _parse_list(args.algorithms)
    for alg in algorithms:
        _check_algorithm(alg)
    try:
        seeds = _parse_list(args.seeds, int)
    except ValueError as exc:
        raise DatasetError(f"bad --seeds: {exc}") from None
    data = _load(args)
    rows, mismatch = bench(data, args.k, seeds, algorithms, args.threads, args.max_rounds)
    header = f"{'algorithm':<10}{'rounds':>8}{'wall_ms':>12}{'assign':>14}{'total':>14}{'q_t':>8}{'q_a':>8}{'q_au':>8}"
    print(header)
    for r in rows:
        print(f"{r['algorithm']:<10}{r['rounds']:>8.1f}{r['wall_ms']:>12.1f}{r['dist_calcs_assign']:>14.0f}"
              f"{r['dist_calcs_total']:>14.0f}{r['q_t']:>8.3f}{r['q_a']:>8.3f}{r['q_au']:>8.3f}")
    if args.json:
        Path(args.json).write_text(json.dumps(rows, indent=2) + "\n")
    if mismatch:
        print(f"trajectory mismatch: {mismatch}", file=sys.stderr)
        return EXIT_MISMATCH
    return EXIT_OK


def cmd_gen(args) -> int:
    data = parse_gen_spec(args.spec)
    save_dataset(args.out, data, args.format)
    print(f"wrote {data.n_samples}x{data.dim} to {args.out}")
    return EXIT_OK


def _add_input(p) -> None:
    p.add_argument("--data", help="dataset path")
    p.add_argument("--format", choices=("csv", "binary"), default="csv")
    p.add_argument("--gen", metavar="gauss:N:d:modes:seed", help="generate the dataset instead of loading")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--max-rounds", type=int, default=1000)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="exactkm", description="Exact accelerated k-means.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="cluster one dataset with one algorithm")
    _add_input(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--algorithm", default="exp", help=f"one of {', '.join(ALGORITHMS)}")
    p.add_argument("--out-centroids")
    p.add_argument("--out-assignments")
    p.add_argument("--stats")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bench", help="compare algorithms over several seeds")
    _add_input(p)
    p.add_argument("--seeds", default="0")
    p.add_argument("--algorithms", default="sta,exp")
    p.add_argument("--json", help="also write the table as JSON")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("gen", help="write a Gaussian-mixture dataset")
    p.add_argument("spec", metavar="gauss:N:d:modes:seed")
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("csv", "binary"), default="csv")
    p.set_defaults(func=cmd_gen)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _AlgorithmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ALGORITHM
    except (DatasetError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
