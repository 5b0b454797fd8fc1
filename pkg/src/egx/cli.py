"""Command-line front end.

``egx extract`` runs one extraction pipeline on one e-graph, ``egx bench``
runs method configurations over a directory of e-graphs, and ``egx decode``
turns a solver solution for an emitted model back into an extraction.

Exit codes: 0 on success, 2 when no valid extraction exists, 1 on usage or
I/O errors.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import bench
from .egraph import INF, EGraphError, InfeasibleError, deduplicate, load_egraph
from .exact import solve_exact
from .greedy import COST_KINDS, extract_greedy
from .ilp import build_ilp, emit_lp, emit_warmstart, parse_solution
from .parallel import extract_parallel
from .prune import DEFAULT_THETA, parse_theta, prune, store_mask

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE = 0, 1, 2
MODES = ("greedy", "parallel", "exact", "hybrid")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1: {text!r}")
    return v


def _positive_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be > 0: {text!r}")
    return v


def _theta(text: str):
    try:
        return parse_theta(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="egx", description="DAG-cost e-graph extraction")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    ex = sub.add_parser("extract", help="extract one e-graph")
    ex.add_argument("--input", required=True, metavar="PATH")
    ex.add_argument("--mode", choices=MODES, default="hybrid")
    ex.add_argument("--cost", choices=COST_KINDS, default="dag")
    ex.add_argument("--theta", type=_theta, metavar="RATIONAL|inf", help="pruning threshold (hybrid only, default 1.25)")
    ex.add_argument("--workers", type=_positive_int, metavar="N", help="parallel mode threads (default: EGX_THREADS or CPU count)")
    ex.add_argument("--batch-size", type=_positive_int, metavar="N", help="parallel mode batch size (default 4 x workers)")
    ex.add_argument("--timeout", type=_positive_float, metavar="SECONDS", help="exact search limit (default 60)")
    ex.add_argument("--dedup", choices=("on", "off", "aggressive"), default="off")
    ex.add_argument("--output", metavar="PATH", help="extraction JSON (default stdout)")
    ex.add_argument("--emit-lp", metavar="PATH")
    ex.add_argument("--emit-warmstart", metavar="PATH")
    ex.add_argument("--emit-mask", metavar="PATH", help="pruned node list as JSON (hybrid only)")
    ex.add_argument("--stats", action="store_true", help="print a summary to stderr")
    ex.add_argument("--bks", metavar="COST|PATH", help="best known cost, or a JSON map keyed by file stem")

    be = sub.add_parser("bench", help="run methods over a corpus directory")
    be.add_argument("--corpus", required=True, metavar="DIR")
    be.add_argument("--methods", default="greedy,hybrid", metavar="SPEC", help="e.g. greedy,parallel:8,exact,hybrid:1.25")
    be.add_argument("--bks", metavar="PATH")
    be.add_argument("--timeout", type=_positive_float, default=60.0, metavar="SECONDS")
    be.add_argument("--report", metavar="PATH", help="CSV output (default stdout)")
    be.add_argument("--dedup", choices=("on", "off", "aggressive"), default="on")
    be.add_argument("--jobs", type=_positive_int, default=1, metavar="N", help="benchmarks run in parallel")

    de = sub.add_parser("decode", help="read a solver solution for an emitted model")
    de.add_argument("--input", required=True, metavar="PATH")
    de.add_argument("--solution", required=True, metavar="PATH")
    de.add_argument("--dedup", choices=("on", "off", "aggressive"), default="off")
    de.add_argument("--output", metavar="PATH")
    parser.subcommands = {"extract": ex, "bench": be, "decode": de}
    return parser


def _check_extract_flags(args) -> None:
    mode = args.mode
    if args.theta is not None and mode != "hybrid":
        raise UsageError(f"--theta applies to hybrid mode only, not {mode}")
    if args.emit_mask and mode != "hybrid":
        raise UsageError("--emit-mask applies to hybrid mode only")
    if mode != "parallel":
        for flag in ("workers", "batch_size"):
            if getattr(args, flag) is not None:
                raise UsageError(f"--{flag.replace('_', '-')} applies to parallel mode only")
    if args.timeout is not None and mode not in ("exact", "hybrid"):
        raise UsageError("--timeout applies to exact and hybrid modes only")
    if args.cost != "dag":
        if mode in ("exact", "hybrid"):
            raise UsageError(f"{mode} mode optimizes DAG cost only")
        if args.emit_lp or args.emit_warmstart:
            raise UsageError("model emission needs --cost dag")
    if args.emit_warmstart and mode == "exact":
        raise UsageError("--emit-warmstart needs a heuristic solution (greedy, parallel or hybrid mode)")


def _load(path: str, dedup: str):
    egraph = load_egraph(path)
    if dedup != "off":
        egraph, _ = deduplicate(egraph, aggressive=dedup == "aggressive")
    return egraph


def _bks_value(spec: str, input_path: str) -> int | None:
    try:
        return int(spec)
    except ValueError:
        pass
    table = bench.load_bks(spec)
    name = bench.benchmark_name(input_path)
    if name not in table:
        print(f"egx: warning: {name!r} not in {spec}", file=sys.stderr)
        return None
    return table[name]


def _write_json(doc: dict, path: str | None) -> None:
    text = json.dumps(doc, indent=1) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _result_doc(res) -> dict:
    doc = res.to_json()
    doc["cost_kind"] = res.cost_kind
    doc["cost"] = None if res.cost == INF else int(res.cost)
    doc["status"] = res.status
    return doc


def cmd_extract(args) -> int:
    _check_extract_flags(args)
    egraph = _load(args.input, args.dedup)
    mode = args.mode
    warm = costs = mask = None
    timeout = 60.0 if args.timeout is None else args.timeout
    try:
        if mode == "greedy":
            res, costs = extract_greedy(egraph, args.cost)
            warm = res
        elif mode == "parallel":
            res, costs = extract_parallel(egraph, args.cost, workers=args.workers, batch_size=args.batch_size)
            warm = res
        elif mode == "exact":
            res, _ = solve_exact(egraph, time_limit=timeout)
        else:
            warm, costs = extract_greedy(egraph)
            mask = prune(egraph, costs, DEFAULT_THETA if args.theta is None else args.theta)
            res, _ = solve_exact(egraph, mask, warm, time_limit=timeout)
    except InfeasibleError as exc:
        print(f"egx: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE

    if args.emit_mask:
        store_mask(mask, egraph, args.emit_mask)
    if args.emit_lp or args.emit_warmstart:
        model = build_ilp(egraph, mask, warm)
        if args.emit_lp:
            emit_lp(model, args.emit_lp)
        if args.emit_warmstart:
            emit_warmstart(model, args.emit_warmstart)

    _write_json(_result_doc(res), args.output)

    if args.stats:
        _print_stats(args, egraph, res, warm, mask)
    if not res.valid:
        print(f"egx: no valid extraction ({res.status})", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


def _print_stats(args, egraph, res, warm, mask) -> None:
    if warm is not None and args.cost == "dag" and args.mode != "parallel":
        H = warm.dag_cost
    else:
        try:
            H = extract_greedy(egraph)[0].dag_cost
        except InfeasibleError:
            H = INF
    lines = [
        f"nodes: {egraph.num_nodes}",
        f"classes: {egraph.num_classes}",
    ]
    if mask is not None:
        lines.append(f"pruned: {len(mask.pruned)} ({mask.ratio(egraph):.1%})")
    lines += [f"H: {bench._fmt_cost(H)}", f"final: {bench._fmt_cost(res.dag_cost)}"]
    if args.cost != "dag":
        lines.append(f"{args.cost}: {bench._fmt_cost(res.cost)}")
    lines.append(f"status: {res.status}")
    if args.bks is not None:
        bks = _bks_value(args.bks, args.input)
        if bks is not None:
            alpha = bench.normalized_gap(res.dag_cost, H, bks)
            lines.append(f"alpha: {bench._fmt_alpha(alpha)}")
    print("\n".join(lines), file=sys.stderr)


def cmd_bench(args) -> int:
    try:
        methods = bench.parse_methods(args.methods)
    except ValueError as exc:
        raise UsageError(f"--methods: {exc}") from None
    files = bench.corpus_files(args.corpus)
    table = bench.load_bks(args.bks) if args.bks else None
    records = bench.run_suite(files, methods, table, time_limit=args.timeout, dedup=args.dedup, jobs=args.jobs)
    if args.report:
        bench.write_csv(records, args.report)
    else:
        bench.write_csv(records, sys.stdout)
    return EXIT_OK


def cmd_decode(args) -> int:
    egraph = _load(args.input, args.dedup)
    model = build_ilp(egraph)
    res = parse_solution(model, args.solution)
    _write_json(_result_doc(res), args.output)
    return EXIT_OK if res.valid else EXIT_INFEASIBLE


COMMANDS = {"extract": cmd_extract, "bench": cmd_bench, "decode": cmd_decode}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.subcommands[args.command].print_usage(sys.stderr)
        print(f"egx {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (OSError, EGraphError, ValueError, json.JSONDecodeError) as exc:
        print(f"egx: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
