import itertools
import math

import numpy as np
import pytest

from fiberplan.core import NodeRecord, Problem, SteinerTree, is_steiner_tree
from fiberplan.qubo import (
    ABSENT,
    Qubo,
    QuboBuildParams,
    build_stp_qubo,
    decode_assignment,
    encoding_var_count,
    exhaustive_qubo_min,
    export_qubo_coordinates,
    parse_assignment_file,
    qubit_count,
    qubo_energy,
    repair_components,
    required_depth,
    run_qubo,
    sample_qubo_sa,
    solve_qubo,
)
from fiberplan.solvers import solve_baseline, solve_exact

TOL = 1e-9


def node(x, y, kind="waypoint"):
    return NodeRecord(float(x), float(y), 0.0, kind)


def path3(costs=(1.0, 2.0)):
    return Problem.build([node(0, 0, "terminal"), node(1, 0), node(2, 0, "terminal")],
                         [(0, 1, costs[0]), (1, 2, costs[1])], [0, 2])


def star4(costs=(1.0, 1.0, 1.0)):
    nodes = [node(0, 0)] + [node(1, i, "terminal") for i in range(3)]
    edges = [(0, i + 1, costs[i]) for i in range(3)]
    return Problem.build(nodes, edges, [1, 2, 3])


def tiny_random_instance(rng):
    """Random 3/4-node connected instance whose encoding stays enumerable."""
    while True:
        shape = rng.integers(0, 4)
        c = lambda: float(np.round(rng.uniform(0.5, 2.0), 2))
        if shape == 0:
            p = path3((c(), c()))
        elif shape == 1:
            nodes = [node(0, 0, "terminal"), node(1, 0, "terminal"), node(0.5, 1)]
            p = Problem.build(nodes, [(0, 1, c()), (0, 2, c()), (1, 2, c())], [0, 1])
        elif shape == 2:
            nodes = [node(0, 0, "terminal"), node(1, 0, "terminal"),
                     node(0.5, 1, "terminal")]
            p = Problem.build(nodes, [(0, 1, c()), (0, 2, c()), (1, 2, c())],
                              [0, 1, 2])
        else:
            p = star4((c(), c(), c()))
        depth = required_depth(p)
        if encoding_var_count(p, depth) <= 24:
            return p, depth


def valid_tree_assignment(q: Qubo, p: Problem, tree_edges, root):
    """Independently construct the encoding of a depth-labeled tree."""
    adj = {}
    for u, v in tree_edges:
        adj.setdefault(u, []).append(v)
        adj.setdefault(v, []).append(u)
    depth = {root: 0}
    queue = [root]
    parent = {}
    while queue:
        x = queue.pop(0)
        for y in adj.get(x, []):
            if y not in depth:
                depth[y] = depth[x] + 1
                parent[y] = x
                queue.append(y)
    index = q.index_of
    bits = [0] * q.n_vars
    if ("root", root) not in index:
        return None
    bits[index[("root", root)]] = 1
    for v in range(p.n_nodes):
        if v == root:
            continue
        if v in depth:
            tag = ("node_depth", v, depth[v])
        elif v not in p.terminal_set:
            tag = ("node_depth", v, ABSENT)
        else:
            return None
        if tag not in index:
            return None
        bits[index[tag]] = 1
    for child, par in parent.items():
        tag = ("edge_depth", par, child, depth[child])
        if tag not in index:
            return None
        bits[index[tag]] = 1
    for u, v in tree_edges:
        a, b = min(u, v), max(u, v)
        bits[index[("edge_used", a, b)]] = 1
    return tuple(bits)


# --------------------------------------------------------------- qubit count

def test_qubit_count_paper_instance():
    assert qubit_count(158, 458) == 85699


def test_qubit_count_zero():
    assert qubit_count(0, 0) == 0


def test_qubit_count_tiny():
    assert qubit_count(2, 1) == 10


# -------------------------------------------------------------------- build

def test_ground_state_decodes_to_path():
    p = path3()
    q = build_stp_qubo(p, QuboBuildParams(max_depth=2))
    assignment, _ = exhaustive_qubo_min(q)
    edges, violations = decode_assignment(q, assignment, p)
    assert violations == []
    assert sorted(edges) == [(0, 1), (1, 2)]


def test_ground_state_matches_exact_on_random_tinies():
    rng = np.random.default_rng(131)
    for _ in range(5):
        p, depth = tiny_random_instance(rng)
        q = build_stp_qubo(p, QuboBuildParams(max_depth=depth))
        assignment, _ = exhaustive_qubo_min(q)
        edges, violations = decode_assignment(q, assignment, p)
        assert violations == []
        tree = SteinerTree.from_edges(p, edges)
        assert tree.cost == pytest.approx(solve_exact(p).cost, abs=TOL)


def test_variable_count_matches_formula():
    rng = np.random.default_rng(137)
    for _ in range(5):
        p, depth = tiny_random_instance(rng)
        q = build_stp_qubo(p, QuboBuildParams(max_depth=depth))
        assert q.n_vars == encoding_var_count(p, depth)


def test_energy_identity_over_all_valid_trees():
    for p, depth in ((path3(), 2), (star4(), 2)):
        q = build_stp_qubo(p, QuboBuildParams(max_depth=depth, cost_b=1.0))
        others = [i for i in range(p.n_nodes) if i not in p.terminal_set]
        checked = 0
        for r in range(len(others) + 1):
            for extra in itertools.combinations(others, r):
                nodes = set(p.terminals) | set(extra)
                induced = [(u, v) for u, v, _ in p.edges
                           if u in nodes and v in nodes]
                for tree_edges in itertools.combinations(induced, len(nodes) - 1):
                    covered = {i for e in tree_edges for i in e}
                    ok, _ = (is_steiner_tree(p, tree_edges)
                             if covered == nodes else (False, None))
                    if not ok:
                        continue
                    for root in p.terminals:
                        bits = valid_tree_assignment(q, p, tree_edges, root)
                        if bits is None:
                            continue
                        cost = sum(p.edge_cost[(min(u, v), max(u, v))]
                                   for u, v in tree_edges)
                        assert qubo_energy(q, bits) == pytest.approx(cost, abs=TOL)
                        checked += 1
        assert checked > 0


def test_penalty_dominance_single_flips():
    p = path3()
    params = QuboBuildParams(max_depth=2)
    q = build_stp_qubo(p, params)
    bits = valid_tree_assignment(q, p, [(0, 1), (1, 2)], root=0)
    base = qubo_energy(q, bits)
    penalty_a = 2.0 * sum(c for _, _, c in p.edges) + 1.0
    max_edge = max(c for _, _, c in p.edges)
    for i in range(q.n_vars):
        flipped = list(bits)
        flipped[i] ^= 1
        delta = qubo_energy(q, flipped) - base
        assert delta >= penalty_a - max_edge - TOL
        assert delta > 0


def test_build_asserts_penalty_dominance():
    p = path3()
    with pytest.raises(ValueError, match="penalty_a"):
        build_stp_qubo(p, QuboBuildParams(max_depth=2, penalty_a=0.5))


def test_build_warns_on_small_depth():
    p = path3()
    with pytest.warns(UserWarning, match="span"):
        build_stp_qubo(p, QuboBuildParams(max_depth=1))


# ----------------------------------------------------------------- exhaustive

def plain_qubo(linear, quadratic=None, offset=0.0):
    return Qubo(n_vars=len(linear), linear=tuple(linear),
                quadratic=quadratic or {}, offset=offset,
                var_map=tuple(("var", i) for i in range(len(linear))))


def test_exhaustive_all_zero():
    q = plain_qubo([0.0, 0.0, 0.0])
    assignment, energy = exhaustive_qubo_min(q)
    assert assignment == (0, 0, 0)
    assert energy == 0.0


def test_exhaustive_positive_linear():
    assignment, energy = exhaustive_qubo_min(plain_qubo([1.0]))
    assert assignment == (0,) and energy == 0.0


def test_exhaustive_negative_linear():
    assignment, energy = exhaustive_qubo_min(plain_qubo([-1.0]))
    assert assignment == (1,) and energy == -1.0


def test_exhaustive_guard():
    with pytest.raises(ValueError, match="guard"):
        exhaustive_qubo_min(plain_qubo([0.0] * 25))


def test_exhaustive_lexicographic_tie():
    # two degenerate minima 10 and 01; lexicographically smaller wins
    q = plain_qubo([-1.0, -1.0], {(0, 1): 2.0})
    assignment, energy = exhaustive_qubo_min(q)
    assert assignment == (0, 1)
    assert energy == -1.0


# -------------------------------------------------------------------- sampler

def test_sampler_matches_exhaustive_statistically():
    rng = np.random.default_rng(139)
    hits, runs = 0, 100
    p = path3()
    q = build_stp_qubo(p, QuboBuildParams(max_depth=2))
    _, target = exhaustive_qubo_min(q)
    for i in range(runs):
        _, energy = sample_qubo_sa(q, sweeps=2000, restarts=10, seed=i)
        if energy <= target + TOL:
            hits += 1
    assert hits >= 95
    del rng


def test_sampler_energy_consistent_with_reevaluation():
    p = star4()
    q = build_stp_qubo(p, QuboBuildParams(max_depth=2))
    assignment, energy = sample_qubo_sa(q, sweeps=300, restarts=3, seed=7)
    assert energy == pytest.approx(qubo_energy(q, assignment), abs=TOL)


def test_sampler_more_restarts_never_worse():
    p = star4()
    q = build_stp_qubo(p, QuboBuildParams(max_depth=2))
    _, e5 = sample_qubo_sa(q, sweeps=200, restarts=5, seed=3)
    _, e10 = sample_qubo_sa(q, sweeps=200, restarts=10, seed=3)
    assert e10 <= e5 + TOL


def test_sampler_deterministic():
    p = star4()
    q = build_stp_qubo(p, QuboBuildParams(max_depth=2))
    assert sample_qubo_sa(q, sweeps=200, restarts=3, seed=11) == \
        sample_qubo_sa(q, sweeps=200, restarts=3, seed=11)


# ------------------------------------------------------------------- decoding

def test_decode_all_zero_reports_missing_root():
    p = path3()
    q = build_stp_qubo(p, QuboBuildParams(max_depth=2))
    edges, violations = decode_assignment(q, (0,) * q.n_vars, p)
    assert edges == []
    assert any("root count 0" in v for v in violations)


def test_decode_two_roots():
    p = path3()
    q = build_stp_qubo(p, QuboBuildParams(max_depth=2))
    bits = [0] * q.n_vars
    bits[q.index_of[("root", 0)]] = 1
    bits[q.index_of[("root", 2)]] = 1
    _, violations = decode_assignment(q, bits, p)
    assert any("root count 2" in v for v in violations)


# --------------------------------------------------------------------- repair

def test_repair_keeps_valid_tree():
    p = path3()
    tree = solve_baseline(p)
    repaired = repair_components(tree.edges, p)
    assert repaired.edges == tree.edges


def test_repair_empty_edge_set():
    p = star4()
    repaired = repair_components([], p)
    ok, violations = is_steiner_tree(p, repaired.edges)
    assert ok, violations


def test_repair_fragments():
    p = star4()
    repaired = repair_components([(0, 1)], p)
    ok, _ = is_steiner_tree(p, repaired.edges)
    assert ok


# ----------------------------------------------------------------- end to end

def test_solve_qubo_exhaustive_matches_exact():
    rng = np.random.default_rng(149)
    for _ in range(5):
        p, depth = tiny_random_instance(rng)
        out = run_qubo(p, QuboBuildParams(max_depth=depth), method="exhaustive")
        assert out.violations == ()
        assert out.tree.cost == pytest.approx(solve_exact(p).cost, abs=TOL)


def test_solve_qubo_always_valid():
    rng = np.random.default_rng(151)
    for i in range(5):
        p, depth = tiny_random_instance(rng)
        tree = solve_qubo(p, QuboBuildParams(max_depth=depth), method="sa",
                          sweeps=60, restarts=2, seed=i)
        ok, violations = is_steiner_tree(p, tree.edges)
        assert ok, violations


def test_solve_qubo_deterministic():
    p = star4()
    kw = dict(method="sa", sweeps=100, restarts=2, seed=5)
    assert solve_qubo(p, **kw) == solve_qubo(p, **kw)


# ------------------------------------------------------------------- exchange

def test_coordinate_export_round_trip_energy():
    p = path3()
    q = build_stp_qubo(p, QuboBuildParams(max_depth=2))
    text = export_qubo_coordinates(q).decode()
    linear = [0.0] * q.n_vars
    quadratic = {}
    offset = 0.0
    for line in text.strip().split("\n"):
        if line.startswith("# offset"):
            offset = float(line.split()[-1])
            continue
        i, j, w = line.split()
        i, j, w = int(i), int(j), float(w)
        if i == j:
            linear[i] = w
        else:
            quadratic[(i, j)] = w
    clone = Qubo(n_vars=q.n_vars, linear=tuple(linear), quadratic=quadratic,
                 offset=offset, var_map=q.var_map)
    rng = np.random.default_rng(157)
    for _ in range(20):
        bits = tuple(int(b) for b in rng.integers(0, 2, q.n_vars))
        assert qubo_energy(clone, bits) == pytest.approx(qubo_energy(q, bits),
                                                         abs=TOL)


def test_parse_assignment_file():
    data = b"0110\n# comment\n1001\n"
    assert parse_assignment_file(data) == [(0, 1, 1, 0), (1, 0, 0, 1)]
    with pytest.raises(ValueError):
        parse_assignment_file(b"01x1\n")
