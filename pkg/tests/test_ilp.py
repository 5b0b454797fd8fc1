import io
import itertools

import numpy as np
import pytest
from scipy.optimize import Bounds, LinearConstraint, milp

from corpus import FIG2_GREEDY, FIG2_OPTIMAL, small_corpus
from egx.egraph import INF, EGraph, EGraphError, ENode, ExtractionResult, check_selection
from egx.exact import enumerate_oracle
from egx.greedy import extract_greedy
from egx.ilp import (
    FAMILIES,
    SolutionError,
    build_ilp,
    emit_lp,
    emit_warmstart,
    lp_text,
    parse_solution,
)
from egx.prune import prune


@pytest.fixture
def fig2_model(fig2):
    warm, costs = extract_greedy(fig2)
    return build_ilp(fig2, prune(fig2, costs, "1.25"), warm)


def s(g, node_id):
    return f"s_{g.node_index[node_id]}"


def solution_text(values):
    return "".join(f"{k} {v}\n" for k, v in values.items())


def test_big_m():
    nodes = [ENode(f"n{i}", "f", (f"c{i - 1}",) if i else (), f"c{i}", 1) for i in range(9)]
    model = build_ilp(EGraph(nodes, ["c8"]))
    assert model.big_m == 10 and model.level_bound == 9


def test_fig2_fixings(fig2, fig2_model):
    fixed = {r.name: r for r in fig2_model.constraints["eq5g"]}
    assert set(fixed) == {f"eq5g_{fig2.node_index['E5']}", f"eq5g_{fig2.node_index['E10']}"}
    text = lp_text(fig2_model)
    assert f" eq5g_{fig2.node_index['E5']}: {s(fig2, 'E5')} = 0\n" in text
    assert [r.name for r in fig2_model.constraints["eq5d"]] == [f"eq5d_{fig2.class_index['root']}"]
    # pruned nodes have no complement variable and stay out of the objective
    assert fig2.node_index["E5"] not in fig2_model.opp_vars
    assert s(fig2, "E5") not in {v for _, v in fig2_model.objective}


def test_fig2_warm_start(fig2, fig2_model):
    warm = fig2_model.warm_start
    chosen = {fig2.node_index[n] for n in FIG2_GREEDY.values()}
    for n, var in fig2_model.select_vars.items():
        if n in fig2_model.opp_vars:
            assert warm[var] == (1 if n in chosen else 0)
    assert warm[s(fig2, "E2")] == 1 and warm[s(fig2, "E3")] == 0
    active = {c for c, v in fig2_model.active_vars.items() if warm[v]}
    assert active == {fig2.class_index[c] for c in FIG2_GREEDY}
    buf = io.BytesIO()
    emit_warmstart(fig2_model, buf)
    lines = buf.getvalue().decode().splitlines()
    assert f"{s(fig2, 'E2')} 1" in lines and f"{s(fig2, 'E3')} 0" in lines
    bits = dict(line.split() for line in lines)
    for var, bit in bits.items():
        if var.startswith("s_"):
            assert bits["o_" + var[2:]] == str(1 - int(bit))


def test_warm_start_satisfies_model(fig2, fig2_model):
    sel = fig2.to_dense(FIG2_GREEDY)
    values = {**fig2_model.assignment(sel), **fig2_model.warm_start}
    assert fig2_model.violations(values) == []
    assert fig2_model.objective_value(values) == 17


def test_no_warm_start(fig2):
    model = build_ilp(fig2)
    with pytest.raises(EGraphError):
        emit_warmstart(model, io.StringIO())


def test_single_node_model():
    model = build_ilp(EGraph([ENode("n0", "x", (), "c0", 3)], ["c0"]))
    text = lp_text(model)
    assert text.startswith("\\") and "Minimize" in text and text.endswith("End\n")
    assert [name for name in model.select_vars.values()] == ["s_0"]
    rows = {fam: [r.name for r in rows] for fam, rows in model.constraints.items()}
    assert rows == {"eq5b": ["eq5b_0"], "eq5c": [], "eq5d": ["eq5d_0"], "eq5e": [], "eq5f": ["eq5f_0"], "eq5g": []}


def test_emission_is_deterministic(fig2):
    def emitted():
        warm, costs = extract_greedy(fig2)
        model = build_ilp(fig2, prune(fig2, costs), warm)
        a, b = io.BytesIO(), io.BytesIO()
        emit_lp(model, a)
        emit_warmstart(model, b)
        return a.getvalue(), b.getvalue()

    assert emitted() == emitted()


def test_emit_to_path(fig2_model, tmp_path):
    emit_lp(fig2_model, tmp_path / "m.lp")
    assert (tmp_path / "m.lp").read_text() == lp_text(fig2_model)


def test_long_rows_wrap():
    nodes = [ENode(f"n{i}", "x", (), "c", 1) for i in range(200)]
    text = lp_text(build_ilp(EGraph(nodes, ["c"])))
    assert max(len(line) for line in text.splitlines()) <= 200


def test_self_cyclic_fixed():
    g = EGraph([ENode("n0", "f", ("c0",), "c0", 0), ENode("n1", "x", (), "c0", 4)], ["c0"])
    model = build_ilp(g)
    assert [r.name for r in model.constraints["eq5g"]] == ["eq5g_0"]


def test_parse_optimal_and_greedy(fig2, fig2_model):
    opt = fig2_model.assignment(fig2.to_dense(FIG2_OPTIMAL))
    res = parse_solution(fig2_model, io.StringIO("# optimum\n" + solution_text(opt)))
    assert res.choices == FIG2_OPTIMAL and res.dag_cost == 16 and res.valid
    res = parse_solution(fig2_model, io.StringIO(solution_text(fig2_model.warm_start)))
    assert res.choices == FIG2_GREEDY and res.dag_cost == 17


def test_parse_errors(fig2, fig2_model):
    with pytest.raises(SolutionError, match="two selected"):
        parse_solution(fig2_model, io.StringIO(f"{s(fig2, 'E2')} 1\n{s(fig2, 'E3')} 1\n"))
    with pytest.raises(SolutionError, match="no selected"):
        parse_solution(fig2_model, io.StringIO(f"a_{fig2.class_index['or']} 1\n"))
    with pytest.raises(SolutionError, match="unknown"):
        parse_solution(fig2_model, io.StringIO("zz_1 1\n"))
    with pytest.raises(SolutionError):
        parse_solution(fig2_model, io.StringIO("s_1\n"))


def test_warm_violating_mask(fig2):
    _, costs = extract_greedy(fig2)
    bad = ExtractionResult.from_selection(fig2, fig2.to_dense(dict(FIG2_GREEDY, not_b="E10")))
    with pytest.raises(EGraphError, match="pruned"):
        build_ilp(fig2, prune(fig2, costs), bad)


def test_dead_root():
    g = EGraph([ENode("n0", "f", ("c0",), "c0", 1)], ["c0"])
    from egx.greedy import ClassCosts

    mask = prune(g, ClassCosts({}, [INF]), "inf")
    with pytest.raises(EGraphError, match="root"):
        build_ilp(g, mask)


def valid_extractions(g):
    classes = list(range(g.num_classes))
    for combo in itertools.product(*(g.class_nodes[c] for c in classes)):
        sel = dict(zip(classes, combo))
        if check_selection(g, sel).valid:
            reach = g.reachable_classes(sel)
            yield {c: sel[c] for c in reach}


@pytest.mark.parametrize("seed, g", small_corpus()[:40])
def test_round_trip_random(seed, g):
    model = build_ilp(g)
    seen = set()
    for sel in valid_extractions(g):
        key = tuple(sorted(sel.items()))
        if key in seen:
            continue
        seen.add(key)
        values = model.assignment(sel)
        assert model.violations(values) == []
        res = parse_solution(model, io.StringIO(solution_text(values)))
        assert res.selection(g) == sel
        assert res.dag_cost == model.objective_value(values)


def solve_with_milp(model):
    c, A, lo, hi, integrality, bounds, names = model.to_matrix()
    lb = np.array([b[0] for b in bounds], float)
    ub = np.array([b[1] for b in bounds], float)
    out = milp(c, constraints=LinearConstraint(A, lo, hi), integrality=integrality, bounds=Bounds(lb, ub))
    if out.status != 0:
        return None
    return dict(zip(names, out.x))


@pytest.mark.parametrize("seed, g", small_corpus()[:60])
def test_milp_solution_matches_oracle(seed, g):
    # a generic MILP solver on the emitted rows lands on the enumerated optimum
    model = build_ilp(g)
    values = solve_with_milp(model)
    res = ExtractionResult.from_selection(g, model.decode(values))
    assert res.valid
    assert res.dag_cost == round(model.objective_value(values)) == enumerate_oracle(g)[1]
    assert set(FAMILIES) == set(model.constraints)
