"""Acceptance criteria, one test each.

Every test prints a single ``CRITERION <n> <PASS|FAIL>: ...`` line (also
under output capture) before asserting, so a plain ``pytest -v`` run lists
the outcome of each criterion.
"""

import io
import itertools
import time

import pytest

from corpus import FIG2_GREEDY, medium_instance, small_corpus
from egx.bench import parse_methods, run_suite
from egx.egraph import INF, check_selection, evaluate_dag_cost, store_egraph
from egx.exact import enumerate_oracle, solve_exact
from egx.generate import layered_egraph, motivating_example
from egx.greedy import extract_greedy
from egx.ilp import build_ilp, emit_lp, emit_warmstart, parse_solution
from egx.parallel import extract_parallel
from egx.prune import prune

THETAS = ("1", "1.05", "1.25", "1.5", "inf")


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {n} {'PASS' if ok else 'FAIL'}: {detail}")
        return ok

    return emit


def test_criterion_1_motivating_example(report):
    start = time.perf_counter()
    g = motivating_example()
    greedy, costs = extract_greedy(g)
    mask = prune(g, costs, "1.25")
    hybrid, _ = solve_exact(g, mask, greedy)
    exact, _ = solve_exact(g)
    kept = mask.retained_ids(g)
    elapsed = time.perf_counter() - start
    checks = {
        "greedy=17": greedy.dag_cost == 17,
        "hybrid=16": hybrid.dag_cost == 16,
        "exact=16": exact.dag_cost == 16,
        "pruned={E5,E10}": set(mask.pruned_ids(g)) == {"E5", "E10"},
        "kept {E2,E3}": kept["or"] == ["E2", "E3"],
        "kept E6,E9": kept["a"] == ["E6"] and kept["not_b"] == ["E9"],
        "<1s": elapsed < 1.0,
    }
    ok = all(checks.values())
    report(1, ok, f"greedy {greedy.dag_cost}, hybrid {hybrid.dag_cost}, exact {exact.dag_cost}, "
                  f"pruned {mask.pruned_ids(g)}, {elapsed * 1000:.1f} ms; failed: {[k for k, v in checks.items() if not v]}")
    assert ok


def test_criterion_2_parallel_fixpoint(report):
    instances = 0
    classes = 0
    mismatched = 0
    for seed in range(120):
        g = medium_instance(seed)
        assert g.num_nodes <= 500
        try:
            _, seq = extract_greedy(g)
        except Exception:
            seq = None
        for workers in (1, 2, 8):
            try:
                _, par = extract_parallel(g, workers=workers)
            except Exception:
                par = None
            if seq is None or par is None:
                mismatched += (seq is None) != (par is None)
                continue
            want = {c: cs.total for c, cs in seq.best.items()}
            got = {c: cs.total for c, cs in par.best.items()}
            for c in range(g.num_classes):
                classes += 1
                mismatched += want.get(c, INF) != got.get(c, INF)
        instances += 1
    ok = instances >= 100 and mismatched == 0
    report(2, ok, f"{instances} graphs x workers {{1,2,8}}, {classes} class comparisons, {mismatched} mismatches")
    assert ok


def test_criterion_3_exact_soundness(report):
    corpus = small_corpus()
    bad = []
    for seed, g in corpus:
        res, status = solve_exact(g)
        _, cost = enumerate_oracle(g)
        if status != "optimal" or res.dag_cost != cost:
            bad.append(seed)
    ok = len(corpus) >= 100 and not bad
    report(3, ok, f"{len(corpus)} instances (<= {max(g.num_classes for _, g in corpus)} classes), mismatches {bad}")
    assert ok


def _levels_exist(model, values):
    """Solve the ordering rows for the level variables by relaxation.

    Returns level values satisfying every ``eq5e`` row and the bounds, or
    None when the rows admit no solution.
    """
    levels = {v: 0 for v in model.level_vars.values()}
    rows = []
    for row in model.constraints["eq5e"]:
        (_, hi), (_, lo), (m, opp) = row.terms
        if values[opp] == 0:
            rows.append((hi, lo))
    for _ in range(len(levels) + 1):
        changed = False
        for hi, lo in rows:
            if levels[hi] < levels[lo] + 1:
                levels[hi] = levels[lo] + 1
                changed = True
        if not changed:
            break
    else:
        return None
    if any(v > model.level_bound for v in levels.values()):
        return None
    return levels


def test_criterion_4_ilp_equivalence(report):
    corpus = small_corpus()
    valid_checked = valid_failures = 0
    feasible = decode_failures = objective_mismatch = 0
    below = minimal = minimal_mismatch = 0
    example = None
    for seed, g in corpus:
        model = build_ilp(g)
        classes = range(g.num_classes)
        # valid extraction -> feasible assignment
        seen = set()
        for combo in itertools.product(*(g.class_nodes[c] for c in classes)):
            sel = dict(zip(classes, combo))
            if not check_selection(g, sel).valid:
                continue
            sel = {c: sel[c] for c in g.reachable_classes(sel)}
            key = tuple(sorted(sel.items()))
            if key in seen:
                continue
            seen.add(key)
            valid_checked += 1
            values = model.assignment(sel)
            if model.violations(values, ("eq5b", "eq5c", "eq5d", "eq5e", "eq5f")):
                valid_failures += 1
        # feasible assignment -> valid extraction with equal objective
        for combo in itertools.product(*((None,) + g.class_nodes[c] for c in classes)):
            values = {v: 0 for v in model.binaries}
            for c, n in zip(classes, combo):
                if n is not None:
                    values[model.select_vars[n]] = 1
                    values[model.active_vars[c]] = 1
            for n, var in model.opp_vars.items():
                values[var] = 1 - values[model.select_vars[n]]
            if model.violations(values, ("eq5b", "eq5c", "eq5d", "eq5f", "eq5g")):
                continue
            levels = _levels_exist(model, values)
            if levels is None:
                continue
            values.update(levels)
            assert model.violations(values) == []
            feasible += 1
            text = "".join(f"{k} {v}\n" for k, v in values.items())
            res = parse_solution(model, io.StringIO(text))
            if not res.valid:
                decode_failures += 1
                continue
            objective, dag = model.objective_value(values), evaluate_dag_cost(g, res.choices)
            below += objective < dag
            if sum(n is not None for n in combo) == len(res.choices):
                minimal += 1
                minimal_mismatch += objective != dag
            if objective != dag:
                objective_mismatch += 1
                if example is None:
                    extra = sorted(set(g.class_ids[c] for c, n in zip(classes, combo) if n is not None) - set(res.choices))
                    example = (seed, objective, dag, extra)
    ok = valid_failures == 0 and decode_failures == 0 and objective_mismatch == 0
    detail = (
        f"{valid_checked} valid extractions checked ({valid_failures} violate rows); "
        f"{feasible} feasible assignments ({decode_failures} decode invalid, "
        f"{objective_mismatch} with objective != DAG cost)"
    )
    if example:
        seed, obj, dag, extra = example
        detail += (
            f"; e.g. seed {seed}: objective {obj:g} vs DAG cost {dag}, extra active "
            f"classes {extra} unreachable from the roots. The model lets a class be "
            f"active without any selected parent, so such assignments pay for nodes "
            f"the extraction never uses. Objective below DAG cost: {below}; on the {minimal} "
            f"assignments activating only root-reachable classes, {minimal_mismatch} mismatches"
        )
    report(4, ok, detail)
    assert ok


def _corpus_with_fig2():
    return [("fig2", motivating_example())] + [(f"s{seed:03d}", g) for seed, g in small_corpus()]


def test_criterion_5_hybrid_dominance(report, tmp_path):
    infeasible_warm = []
    for name, g in _corpus_with_fig2():
        warm, costs = extract_greedy(g)
        sel = warm.selection(g)
        for theta in THETAS:
            model = build_ilp(g, prune(g, costs, theta), warm)
            values = {**model.assignment(sel), **model.warm_start}
            if model.violations(values):
                infeasible_warm.append((name, theta))
        store_egraph(g, tmp_path / f"{name}.json")
    files = sorted(tmp_path.glob("*.json"))
    methods = parse_methods(",".join(f"hybrid:{t}" for t in THETAS))
    records = run_suite(files, methods, time_limit=30)
    worse = [(r.benchmark, r.method) for r in records if not r.alpha <= 1 or r.final_cost > r.H]
    ok = not infeasible_warm and not worse and len(records) == len(files) * len(THETAS)
    report(5, ok, f"{len(files)} instances x theta {THETAS}: warm start infeasible in {len(infeasible_warm)} models, "
                  f"{len(records)} gap records, {len(worse)} with alpha > 1")
    assert ok


def test_criterion_6_prune_monotonicity(report):
    violations = []
    corpus = _corpus_with_fig2()
    for name, g in corpus:
        _, costs = extract_greedy(g)
        sets = [prune(g, costs, t).pruned for t in ("1.5", "1.25", "1.05", "1")]
        if not all(a <= b for a, b in zip(sets, sets[1:])):
            violations.append(name)
    ok = not violations
    report(6, ok, f"{len(corpus)} instances, chain 1.5 <= 1.25 <= 1.05 <= 1 broken on {violations}")
    assert ok


def test_criterion_7_interop_round_trip(report):
    g = motivating_example()

    def emit():
        warm, costs = extract_greedy(g)
        model = build_ilp(g, prune(g, costs, "1.25"), warm)
        lp, ws = io.BytesIO(), io.BytesIO()
        emit_lp(model, lp)
        emit_warmstart(model, ws)
        return model, lp.getvalue(), ws.getvalue()

    model, lp1, ws1 = emit()
    _, lp2, ws2 = emit()
    res = parse_solution(model, io.BytesIO(ws1))
    ok = res.dag_cost == 17 and res.choices == FIG2_GREEDY and lp1 == lp2 and ws1 == ws2
    report(7, ok, f"decoded warm start cost {res.dag_cost}, LP {len(lp1)} bytes identical={lp1 == lp2}, "
                  f"warm start identical={ws1 == ws2}")
    assert ok


def test_criterion_8_scaling_report(report):
    g = layered_egraph(7, layers=20, classes_per_layer=2500, nodes_per_class=(1, 3), roots=4)
    times = {}
    totals = {}
    for workers in (1, 8):
        start = time.perf_counter()
        res, costs = extract_parallel(g, workers=workers)
        times[workers] = time.perf_counter() - start
        totals[workers] = {c: cs.total for c, cs in costs.best.items()}
    speedup = times[1] / times[8]
    ok = g.num_nodes >= 100_000 and totals[1] == totals[8]
    report(
        8,
        ok,
        f"report only: {g.num_nodes} nodes, 1 worker {times[1]:.2f}s, 8 workers {times[8]:.2f}s, "
        f"speedup {speedup:.2f}x (no threshold; the published runtimes, speedups and synthesis "
        f"results are out of reach on this machine)",
    )
    assert ok
