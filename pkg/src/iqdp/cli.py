"""Command-line front end.

Exit codes: 0 ok, 2 usage or validation error, 3 capacity error, 4 a
self-check between two independent evaluation routes failed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from typing import Sequence

import numpy as np

from iqdp import closed_forms as cf
from iqdp.errors import CapacityError, IQDPError, SelfCheckError
from iqdp.model import (
    Pmf,
    State,
    Target,
    make_binomial,
    make_truncated_geometric,
    make_uniform,
)
from iqdp.simulate import BinarySearchPolicy, MappingPolicy, MaxSearchPolicy, SimConfig, run
from iqdp.solver import (
    SolveConfig,
    default_lambda_grid,
    gap_metrics,
    quantizer_cost_curve,
    solve,
    solve_many,
)
from iqdp.spaces import SearchSpace

EXIT_OK, EXIT_USAGE, EXIT_CAPACITY, EXIT_SELFCHECK = 0, 2, 3, 4
SELF_CHECK_TOL = 1e-9


class UsageError(IQDPError, ValueError):
    pass


def _fmt(x: float) -> str:
    return format(x, ".12g")


def parse_lambdas(text: str | None) -> np.ndarray:
    """``lo:hi:step`` (inclusive) or a comma-separated list; default grid if None."""
    if text is None:
        return default_lambda_grid()
    try:
        if ":" in text:
            lo, hi, step = (float(t) for t in text.split(":"))
            if step <= 0 or hi < lo:
                raise ValueError
            n = int(round((hi - lo) / step)) + 1
            lam = np.linspace(lo, hi, n)
        else:
            lam = np.array([float(t) for t in text.split(",") if t.strip()])
    except ValueError:
        raise UsageError(f"cannot parse lambda grid {text!r}") from None
    if lam.size == 0 or np.any(lam < 0) or np.any(lam > 1):
        raise UsageError("lambda values must lie in [0, 1]")
    return np.sort(lam)


def parse_quantizer(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in text.replace(" ", "").split(",") if t)
    except ValueError:
        raise UsageError(f"cannot parse quantizer {text!r}") from None


def make_pmf(dist: str, L: int, p: float | None) -> Pmf:
    if dist == "uniform":
        return make_uniform(L)
    if p is None:
        raise UsageError(f"--p is required for the {dist} distribution")
    if dist == "geometric":
        return make_truncated_geometric(L, p)
    return make_binomial(L, p)


def load_policy(doc: dict) -> dict[tuple[int, int, int], tuple[int, ...]]:
    """Policy table from a document written by ``solve``."""
    return {
        (e["state"]["N"], e["state"]["lo"], e["state"]["hi"]): tuple(e["quantizer"])
        for e in doc["policy"]
    }


def _threads() -> int:
    raw = os.environ.get("IQDP_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"IQDP_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise UsageError("IQDP_THREADS must be >= 0")
    return n or (os.cpu_count() or 1)


def _csv(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _json(doc) -> str:
    return json.dumps(doc, indent=2) + "\n"


def _root(args) -> State:
    return State.root(make_pmf(args.dist, args.L, args.p), args.N)


def _space(args) -> SearchSpace:
    return SearchSpace(args.space)


# -- commands ----------------------------------------------------------------


def cmd_solve(args) -> str:
    root = _root(args)
    cfg = SolveConfig(args.lam, Target.parse(args.target), _space(args), args.feedback)
    sol = solve(root, cfg)
    doc = sol.to_dict()
    doc.update(dist=args.dist, L=args.L, p=args.p)
    if args.format == "csv":
        return _csv(
            ["lambda", "rate", "delay", "cost"],
            [[_fmt(sol.lam), _fmt(sol.expected_rate), _fmt(sol.expected_delay), _fmt(sol.cost)]],
        )
    return _json(doc)


def cmd_sweep(args) -> str:
    root = _root(args)
    tables = solve_many(root, args.target, _space(args), parse_lambdas(args.lambdas), args.feedback)
    cost, rate, delay = tables.cost(root), tables.rate(root), tables.delay(root)
    rows = [(float(l), float(r), float(d), float(c)) for l, r, d, c in zip(tables.lambdas, rate, delay, cost)]
    if args.format == "json":
        return _json([{"lambda": l, "rate": r, "delay": d, "cost": c} for l, r, d, c in rows])
    return _csv(["lambda", "rate", "delay", "cost"], [[_fmt(v) for v in row] for row in rows])


def cmd_heuristics(args) -> str:
    header = [
        "N", "L", "rb_closed", "rb_recursion", "tau_b_exact", "tau_b_bound",
        "rm_closed", "rm_recursion", "tau_m_closed", "tau_m_recursion",
    ]
    rows, docs = [], []
    for N in args.N:
        for L in args.L:
            row: dict = {"N": N, "L": L}
            if L & (L - 1) == 0:
                row["rb_closed"] = cf.binary_search_rate(N, L, cf.CLOSED)
                row["rb_recursion"] = cf.binary_search_rate(N, L, cf.RECURSION)
                row["tau_b_exact"] = cf.binary_search_delay(N, L, cf.RECURSION)
                row["tau_b_bound"] = cf.binary_search_delay(N, L, cf.BOUND)
                _agree(row, "rb_closed", "rb_recursion")
            row["rm_closed"] = cf.max_search_rate(N, L, cf.CLOSED)
            row["rm_recursion"] = cf.max_search_rate(N, L, cf.RECURSION)
            row["tau_m_closed"] = cf.max_search_delay(N, L, cf.CLOSED)
            row["tau_m_recursion"] = cf.max_search_delay(N, L, cf.RECURSION)
            _agree(row, "rm_closed", "rm_recursion")
            _agree(row, "tau_m_closed", "tau_m_recursion")
            docs.append(row)
            rows.append([row["N"], row["L"]] + [
                _fmt(row[h]) if h in row else "" for h in header[2:]
            ])
    if args.format == "json":
        return _json(docs)
    return _csv(header, rows)


def _agree(row: dict, a: str, b: str) -> None:
    if abs(row[a] - row[b]) > SELF_CHECK_TOL:
        raise SelfCheckError(
            f"{a}={row[a]!r} and {b}={row[b]!r} disagree at N={row['N']}, L={row['L']}"
        )


def cmd_gap(args) -> str:
    root = _root(args)
    subset = SearchSpace(args.subset)
    rep = gap_metrics(root, args.target, subset, parse_lambdas(args.lambdas), _space(args))
    print(
        f"delta_max={_fmt(rep.worst)} delta_min={_fmt(rep.best)} "
        f"delta_rel_max={_fmt(rep.worst_relative)}",
        file=sys.stderr,
    )
    if args.format == "json":
        return _json({
            "subset": subset.name,
            "full": args.space,
            "delta_max": rep.worst,
            "delta_min": rep.best,
            "delta_rel_max": rep.worst_relative,
            "points": [
                {"lambda": float(l), "delta_abs": float(d), "delta_rel": float(r)}
                for l, d, r in zip(rep.lambdas, rep.delta, rep.relative)
            ],
        })
    return _csv(
        ["lambda", "delta_abs", "delta_rel"],
        [[_fmt(l), _fmt(d), _fmt(r)] for l, d, r in zip(rep.lambdas, rep.delta, rep.relative)],
    )


def cmd_compare(args) -> str:
    root = _root(args)
    q1, q2 = parse_quantizer(args.q1), parse_quantizer(args.q2)
    tables = solve_many(root, args.target, _space(args), parse_lambdas(args.lambdas))
    c1 = quantizer_cost_curve(root, q1, args.target, tables=tables)
    c2 = quantizer_cost_curve(root, q2, args.target, tables=tables)
    opt = tables.cost(root)
    if args.format == "json":
        return _json({
            "q1": list(q1),
            "q2": list(q2),
            "points": [
                {"lambda": float(l), "cost_q1": float(a), "cost_q2": float(b), "cost_opt": float(o)}
                for l, a, b, o in zip(tables.lambdas, c1, c2, opt)
            ],
        })
    return _csv(
        ["lambda", "cost_q1", "cost_q2", "cost_opt"],
        [[_fmt(v) for v in row] for row in zip(tables.lambdas, c1, c2, opt)],
    )


def cmd_family(args) -> str:
    space = SearchSpace(args.space)
    qs = space.candidates(args.L)
    if args.format == "json":
        return _json({"L": args.L, "space": space.name, "size": len(qs), "quantizers": [list(q) for q in qs]})
    return _csv(["index", "bins", "quantizer"], [[i, len(q), " ".join(map(str, q))] for i, q in enumerate(qs)])


def cmd_simulate(args) -> str:
    root = _root(args)
    target = Target.parse(args.target)
    if args.policy_file:
        with open(args.policy_file) as fh:
            policy = MappingPolicy(load_policy(json.load(fh)))
        name = "file"
    elif args.policy == "binary":
        policy, name = BinarySearchPolicy(), "binary"
    elif args.policy == "max":
        policy, name = MaxSearchPolicy(), "max"
    else:
        if args.lam is None:
            raise UsageError("--lambda is required for the dp policy")
        cfg = SolveConfig(args.lam, target, _space(args), args.feedback)
        policy, name = solve(root, cfg), "dp"
    rep = run(root, target, SimConfig(args.trials, args.seed, policy, workers=_threads()))
    doc = rep.to_dict()
    doc.update(policy=name, target=target.value, dist=args.dist, L=args.L, N=args.N, p=args.p)
    if args.lam is not None:
        doc["lambda"] = args.lam
    if args.format == "csv":
        keys = list(rep.to_dict())
        return _csv(keys, [[doc[k] for k in keys]])
    return _json(doc)


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="iqdp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, source=True, fmt="json"):
        if source:
            p.add_argument("--dist", choices=("uniform", "geometric", "binomial"), default="uniform")
            p.add_argument("--L", type=int, required=True)
            p.add_argument("--p", type=float)
            p.add_argument("--N", type=int, required=True)
            p.add_argument("--target", choices=[t.value for t in Target], default="max")
            p.add_argument("--space", choices=SearchSpace.KINDS[:-1], default="partitions")
        p.add_argument("--format", choices=("json", "csv"), default=fmt)
        p.add_argument("--out", help="output path (default: standard output)")

    p = sub.add_parser("solve", help="optimal policy for one lambda")
    common(p)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--feedback", action="store_true", help="charge the CEO's feedback bits")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="rate-delay trade-off over a lambda grid")
    common(p, fmt="csv")
    p.add_argument("--lambdas")
    p.add_argument("--feedback", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("simulate", help="Monte Carlo run of the protocol")
    common(p)
    p.add_argument("--policy", choices=("dp", "binary", "max"), default="dp")
    p.add_argument("--policy-file", help="policy document written by 'solve'")
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--feedback", action="store_true")
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("family", help="list the quantizers of a search space")
    p.add_argument("--L", type=int, required=True)
    p.add_argument("--space", choices=SearchSpace.KINDS[:-1], default="extended")
    common(p, source=False)
    p.set_defaults(func=cmd_family)

    p = sub.add_parser("gap", help="gap to optimality of a restricted search space")
    common(p, fmt="csv")
    p.add_argument("--subset", choices=SearchSpace.KINDS[:-1], default="extended")
    p.add_argument("--lambdas")
    p.set_defaults(func=cmd_gap)

    p = sub.add_parser("compare", help="cost of two root quantizers, optimal afterwards")
    common(p, fmt="csv")
    p.add_argument("--q1", required=True)
    p.add_argument("--q2", required=True)
    p.add_argument("--lambdas")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("heuristics", help="binary and max search rate/delay table")
    p.add_argument("--N", type=int, nargs="+", required=True)
    p.add_argument("--L", type=int, nargs="+", required=True)
    common(p, source=False, fmt="csv")
    p.set_defaults(func=cmd_heuristics)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        text = args.func(args)
    except CapacityError as exc:
        print(f"iqdp: capacity error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except SelfCheckError as exc:
        print(f"iqdp: self-check failed: {exc}", file=sys.stderr)
        return EXIT_SELFCHECK
    except (IQDPError, ValueError) as exc:
        print(f"iqdp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.out:
        with open(args.out, "w", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
