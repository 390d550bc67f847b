"""Command line interface.

Exit codes: 0 on success, 2 for configuration errors, 3 when the external
evaluator cannot be driven.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

from .benchmarks import REGISTRY, list_benchmarks
from .classifier import EventLabel, ExperimentalDesign, label_from_token
from .driver import RunConfig, estimate_only, run
from .errors import ConfigError, DomainError, EvaluatorError
from .exploration import plan_table
from .reporting import default_out_dir, fmt, summarize, write_run

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_EVALUATOR = 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rare-ring", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run the sequential design on a limit state")
    src = r.add_mutually_exclusive_group(required=True)
    src.add_argument("--benchmark", help="built-in benchmark name")
    src.add_argument("--evaluator", help="external command speaking the line protocol")
    r.add_argument("--dim", type=int)
    r.add_argument("--budget", type=int, default=200)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--n-is", type=int, default=10_000)
    r.add_argument("--n-is-final", type=int, default=100_000)
    r.add_argument("--estimate-every", type=int, default=5)
    r.add_argument("--stop-psi-ratio", type=float, default=0.01, help="0 disables stopping")
    r.add_argument("--dots-per-seed", type=int, default=1000)
    r.add_argument("--K", type=int, default=5)
    r.add_argument("--max-level", type=int, default=15)
    r.add_argument("--fraction", type=float, default=1e-4)
    r.add_argument("--outer-rule", choices=("estimate", "exterior"), default="estimate")
    r.add_argument("--out", type=Path, help="output directory (default $RARE_RING_OUT)")
    r.add_argument("--format", choices=("csv", "json"), default="csv")
    r.add_argument("--binary-only", action="store_true")
    r.add_argument("--repeat", type=int, default=1, help="run seeds seed..seed+k-1 and summarize")
    r.add_argument("--force", action="store_true", help="overwrite existing outputs")

    sub.add_parser("list-benchmarks", help="list built-in benchmarks")

    pl = sub.add_parser("plan", help="print exploration levels, counts and radii")
    pl.add_argument("--dim", type=int, required=True)
    pl.add_argument("--levels", type=int, default=15)

    e = sub.add_parser("estimate-only", help="re-estimate from a saved design")
    e.add_argument("--ed", type=Path, required=True, help="ed.csv, ed JSON or report.json")
    e.add_argument("--n-is", type=int, default=100_000)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--K", type=int, default=5)
    return p


def load_design(path: Path) -> ExperimentalDesign:
    text = path.read_text()
    if path.suffix == ".json":
        data = json.loads(text)
        return ExperimentalDesign.from_dict(data.get("ed", data))
    rows = [line.split(",") for line in text.splitlines() if line.strip()]
    header, body = rows[0], rows[1:]
    coords = [i for i, h in enumerate(header) if h.startswith("x")]
    li = header.index("label")
    ed = ExperimentalDesign(len(coords))
    registry: dict[str, EventLabel] = {}
    for row in body:
        raw = row[header.index("raw")] if "raw" in header else ""
        ed.add_point([float(row[i]) for i in coords], label_from_token(row[li], registry),
                     float(raw) if raw else None)
    return ed


def _cmd_run(args) -> int:
    base = dict(
        benchmark=args.benchmark, command=args.evaluator, dim=args.dim, budget=args.budget,
        n_is=args.n_is, n_is_final=args.n_is_final, estimate_every=args.estimate_every,
        stop_psi_ratio=args.stop_psi_ratio, dots_per_seed=args.dots_per_seed, K=args.K,
        max_level=args.max_level, fraction=args.fraction, binary_only=args.binary_only,
        outer_rule=args.outer_rule,
    )
    if args.repeat < 1:
        raise ConfigError("--repeat must be at least 1")
    out = args.out if args.out is not None else default_out_dir()
    results = []
    for k in range(args.repeat):
        seed = args.seed + k
        cfg = RunConfig(seed=seed, **base).validate()
        res = run(cfg)
        target = out if args.repeat == 1 else out / f"seed_{seed}"
        write_run(res, target, args.format, args.force)
        results.append(res)
        for rec in res.final:
            print(f"seed {seed}: {rec.label.name} p_hat={fmt(rec.p_hat)} cov={fmt(rec.cov)} "
                  f"n_sim={res.n_sim} stop={res.termination}")
        if not res.final:
            print(f"seed {seed}: no rare event found in {res.n_sim} evaluations")
        for s in res.sensitivities:
            print(f"seed {seed}: s^2[{s.label}] = " + " ".join(fmt(v) for v in s.s))
    if args.repeat > 1:
        table = summarize(results)
        print(table, end="")
        summary = out / "summary.txt"
        if summary.exists() and not args.force:
            raise ConfigError(f"{summary} exists; pass --force to overwrite")
        summary.write_text(table)
    return EXIT_OK


def _cmd_list() -> int:
    for name in list_benchmarks():
        b = REGISTRY[name]
        dim = "any" if not b.fixed_dim else str(b.dim)
        print(f"{name:<12} dim={dim:<4} p_ref={b.reference.p_f:.6g}  {b.description}")
    return EXIT_OK


def _cmd_plan(args) -> int:
    print(f"{'level':>5} {'p_out':>8} {'n_i':>6} {'rho_i':>8}")
    for level, p_out, n, rho in plan_table(args.dim, args.levels):
        print(f"{level:>5} {p_out:>8.0e} {n:>6} {rho:>8.2f}")
    return EXIT_OK


def _cmd_estimate(args) -> int:
    if not args.ed.exists():
        raise ConfigError(f"{args.ed} does not exist")
    ed = load_design(args.ed)
    records, sens = estimate_only(ed, args.n_is, args.seed, K=args.K)
    if not records:
        print("design holds no rare point; nothing to estimate")
    for rec in records:
        print(f"{rec.label.name} p_hat={fmt(rec.p_hat)} cov={fmt(rec.cov)} "
              f"r={fmt(rec.annulus.r)} R={fmt(rec.annulus.R)} n_is={rec.n_is}")
    for s in sens:
        print(f"s^2[{s.label}] = " + " ".join(fmt(v) for v in s.s))
    return EXIT_OK


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            if args.command == "run":
                return _cmd_run(args)
            if args.command == "list-benchmarks":
                return _cmd_list()
            if args.command == "plan":
                return _cmd_plan(args)
            return _cmd_estimate(args)
    except EvaluatorError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EVALUATOR
    except (ConfigError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
