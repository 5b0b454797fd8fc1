"""Run extractor configurations over a corpus and report normalized gaps.

The gap of a run is ``alpha = (cost - BKS) / (H - BKS)`` where ``H`` is the
sequential greedy DAG cost of the deduplicated instance and ``BKS`` is the
best known cost.  ``alpha = 0`` means the best known cost was reached and
``alpha = 1`` means no gain over greedy.
"""

from __future__ import annotations

import csv
import io
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .egraph import INF, EGraph, EGraphError, InfeasibleError, deduplicate, load_egraph
from .exact import solve_exact
from .greedy import extract_greedy
from .parallel import extract_parallel
from .prune import DEFAULT_THETA, format_theta, parse_theta, prune

CSV_COLUMNS = ("benchmark", "method", "theta", "workers", "wall_time_s", "cost", "H", "BKS", "alpha", "status")
METHOD_KINDS = ("greedy", "parallel", "exact", "hybrid")


def normalized_gap(final, heuristic, bks) -> Fraction | float:
    """``(final - bks) / (heuristic - bks)``; 0 when all three coincide.

    Returns ``inf`` for a missing final cost, or when greedy already matched
    the best known cost and the run did worse.
    """
    if final == INF or heuristic == INF or bks == INF:
        return INF
    if heuristic == bks:
        return Fraction(0) if final == bks else INF
    return Fraction(int(final) - int(bks), int(heuristic) - int(bks))


@dataclass(frozen=True)
class MethodConfig:
    kind: str
    workers: int | None = None
    theta: Fraction | float | None = None

    @property
    def label(self) -> str:
        if self.kind == "parallel":
            return f"parallel:{self.workers}"
        if self.kind == "hybrid":
            return f"hybrid:{format_theta(self.theta)}"
        return self.kind


def parse_methods(spec: str) -> list[MethodConfig]:
    """Read a method list such as ``"greedy,parallel:8,exact,hybrid:1.25"``.

    ``parallel`` defaults to one worker per CPU and ``hybrid`` to the default
    threshold; ``hybrid:inf`` prunes nothing.
    """
    out = []
    for token in (t.strip() for t in spec.split(",")):
        if not token:
            continue
        kind, _, arg = token.partition(":")
        kind = kind.strip().lower()
        if kind not in METHOD_KINDS:
            raise ValueError(f"unknown method {kind!r} (expected one of {', '.join(METHOD_KINDS)})")
        if kind == "parallel":
            try:
                workers = int(arg) if arg else os.cpu_count() or 1
            except ValueError:
                raise ValueError(f"bad worker count in {token!r}") from None
            if workers < 1:
                raise ValueError(f"bad worker count in {token!r}")
            out.append(MethodConfig("parallel", workers=workers))
        elif kind == "hybrid":
            out.append(MethodConfig("hybrid", theta=parse_theta(arg) if arg else DEFAULT_THETA))
        elif arg:
            raise ValueError(f"method {kind!r} takes no argument")
        else:
            out.append(MethodConfig(kind))
    if not out:
        raise ValueError("no methods given")
    return out


@dataclass
class GapRecord:
    benchmark: str
    method: str
    theta: Fraction | float | None
    workers: int | None
    wall_time: float
    final_cost: int | float
    H: int | float
    BKS: int | float
    alpha: Fraction | float
    status: str
    provisional_bks: bool = False
    trace: list[tuple[float, int]] = field(default_factory=list)

    def row(self) -> dict[str, str]:
        return {
            "benchmark": self.benchmark,
            "method": self.method,
            "theta": "" if self.theta is None else format_theta(self.theta),
            "workers": "" if self.workers is None else str(self.workers),
            "wall_time_s": f"{self.wall_time:.6f}",
            "cost": _fmt_cost(self.final_cost),
            "H": _fmt_cost(self.H),
            "BKS": _fmt_cost(self.BKS) + ("*" if self.provisional_bks else ""),
            "alpha": _fmt_alpha(self.alpha),
            "status": self.status,
        }


def _fmt_cost(v) -> str:
    return "inf" if v == INF else str(int(v))


def _fmt_alpha(a) -> str:
    if a == INF:
        return "inf"
    return f"{float(a):.6g}"


def load_bks(path: str | os.PathLike) -> dict[str, int]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict) or not all(isinstance(v, int) for v in doc.values()):
        raise EGraphError(f"{path}: BKS file must map benchmark names to integers")
    return doc


def store_bks(bks: dict[str, int], path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(dict(sorted(bks.items())), fh, indent=1)


def run_method(egraph: EGraph, method: MethodConfig, time_limit: float = 60.0):
    """Run one configuration; returns ``(cost, status, seconds, trace)``."""
    trace: list[tuple[float, int]] = []
    start = time.perf_counter()
    try:
        if method.kind == "greedy":
            res, _ = extract_greedy(egraph)
        elif method.kind == "parallel":
            res, _ = extract_parallel(egraph, workers=method.workers)
        elif method.kind == "exact":
            res, _ = solve_exact(egraph, time_limit=time_limit, on_incumbent=lambda c, t: trace.append((t, c)))
        else:
            warm, costs = extract_greedy(egraph)
            mask = prune(egraph, costs, method.theta)
            res, _ = solve_exact(
                egraph,
                mask,
                warm,
                time_limit=time_limit,
                on_incumbent=lambda c, t: trace.append((time.perf_counter() - start, c)),
            )
    except InfeasibleError:
        return INF, "infeasible", time.perf_counter() - start, trace
    elapsed = time.perf_counter() - start
    return (res.dag_cost if res.valid else INF), res.status, elapsed, trace


def _bench_one(path: str, methods: list[MethodConfig], time_limit: float, dedup: str):
    egraph = load_egraph(path)
    if dedup != "off":
        egraph, _ = deduplicate(egraph, aggressive=dedup == "aggressive")
    try:
        H = extract_greedy(egraph)[0].dag_cost
    except InfeasibleError:
        H = INF
    runs = [(m, *run_method(egraph, m, time_limit)) for m in methods]
    return H, runs


def benchmark_name(path: str | os.PathLike) -> str:
    name = Path(path).name
    for ext in (".json", ".egraph"):
        if name.endswith(ext):
            return name[: -len(ext)]
    return name


def corpus_files(directory: str | os.PathLike) -> list[Path]:
    d = Path(directory)
    if not d.is_dir():
        raise EGraphError(f"{directory}: not a directory")
    return sorted(p for p in d.iterdir() if p.is_file() and p.suffix == ".json")


def run_suite(
    corpus: list[str | os.PathLike],
    methods: list[MethodConfig],
    bks: dict[str, int] | None = None,
    time_limit: float = 60.0,
    dedup: str = "on",
    jobs: int = 1,
) -> list[GapRecord]:
    """One record per (benchmark, method), ordered by benchmark then method label.

    ``H`` is the sequential greedy cost after deduplication.  A benchmark
    missing from ``bks`` gets the best cost seen in this run as its BKS and
    is flagged provisional.  ``jobs > 1`` spreads benchmarks (never methods)
    over worker processes.
    """
    if dedup not in ("on", "off", "aggressive"):
        raise ValueError(f"bad dedup mode {dedup!r}")
    bks = bks or {}
    paths = [str(p) for p in corpus]
    if jobs > 1 and len(paths) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_bench_one, paths, [methods] * len(paths), [time_limit] * len(paths), [dedup] * len(paths)))
    else:
        results = [_bench_one(p, methods, time_limit, dedup) for p in paths]

    records = []
    for path, (H, runs) in zip(paths, results):
        name = benchmark_name(path)
        provisional = name not in bks
        best = bks.get(name, min([H, *(r[1] for r in runs)]))
        for m, cost, status, secs, trace in runs:
            records.append(
                GapRecord(
                    benchmark=name,
                    method=m.label,
                    theta=m.theta,
                    workers=m.workers,
                    wall_time=secs,
                    final_cost=cost,
                    H=H,
                    BKS=best,
                    alpha=normalized_gap(cost, H, best),
                    status=status,
                    provisional_bks=provisional,
                    trace=trace,
                )
            )
    records.sort(key=lambda r: (r.benchmark, r.method))
    return records


def write_csv(records: list[GapRecord], sink) -> None:
    """CSV report; a trailing ``*`` on BKS marks a provisional value."""
    own = isinstance(sink, (str, os.PathLike))
    fh = open(sink, "w", encoding="utf-8", newline="") if own else sink
    try:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for r in records:
            writer.writerow(r.row())
    finally:
        if own:
            fh.close()


def csv_text(records: list[GapRecord]) -> str:
    buf = io.StringIO()
    write_csv(records, buf)
    return buf.getvalue()
