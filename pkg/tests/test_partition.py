import itertools

import numpy as np
import pytest

from fiberplan.core import (
    NodeRecord,
    Problem,
    SteinerTree,
    is_steiner_tree,
    shortest_path,
    single_source_distances,
)
from fiberplan.partition import (
    Partition,
    educated_guess_k,
    eigengap_k,
    greedy_modularity_partition,
    merge_center_of_mass,
    merge_sph,
    modularity,
    random_walk_laplacian_spectrum,
    repair_partition,
    spectral_partition,
    split_subproblems,
    voronoi_partition,
)

from oracles import all_partitions, modularity_eq3, random_connected_problem

TOL = 1e-9


def node(x, y, kind="waypoint"):
    return NodeRecord(float(x), float(y), 0.0, kind)


def two_cliques_problem():
    """Two 4-cliques joined by one bridge; one terminal per clique."""
    nodes = [node(i % 2, i // 2, "terminal" if i == 0 else "waypoint") for i in range(4)]
    nodes += [node(10 + i % 2, i // 2, "terminal" if i == 0 else "waypoint")
              for i in range(4)]
    edges = [(a, b, 1.0) for a, b in itertools.combinations(range(4), 2)]
    edges += [(a + 4, b + 4, 1.0) for a, b in itertools.combinations(range(4), 2)]
    edges.append((3, 4, 5.0))
    return Problem.build(nodes, edges, [0, 4])


def single_edge_problem():
    return Problem.build([node(0, 0, "terminal"), node(1, 0, "terminal")],
                         [(0, 1, 1.0)], [0, 1])


# ----------------------------------------------------------------- modularity

def test_modularity_single_cluster_is_zero():
    p = two_cliques_problem()
    assert modularity(p, [0] * p.n_nodes) == pytest.approx(0.0, abs=1e-12)


def test_modularity_singletons_single_edge():
    p = single_edge_problem()
    assert modularity(p, [0, 1]) == pytest.approx(-0.5, abs=1e-12)
    assert modularity_eq3(p, [0, 1]) == pytest.approx(-0.5, abs=1e-12)


def test_modularity_bridge_split_matches_oracle():
    p = two_cliques_problem()
    labels = [0, 0, 0, 0, 1, 1, 1, 1]
    assert modularity(p, labels) == pytest.approx(modularity_eq3(p, labels), abs=1e-12)


def test_modularity_matches_oracle_on_random_partitions():
    rng = np.random.default_rng(31)
    for _ in range(5):
        p = random_connected_problem(rng, n_min=4, n_max=7)
        for _ in range(20):
            labels = rng.integers(0, 3, size=p.n_nodes).tolist()
            assert modularity(p, labels) == pytest.approx(
                modularity_eq3(p, labels), abs=1e-12)


# ---------------------------------------------------------- greedy modularity

def test_greedy_modularity_two_cliques():
    p = two_cliques_problem()
    part = greedy_modularity_partition(p)
    assert part.k == 2
    assert len(set(part.assignment[:4])) == 1
    assert len(set(part.assignment[4:])) == 1
    # exhaustive check: returned labels reach the global Eq.-3 maximum
    best = max(all_partitions(range(p.n_nodes)),
               key=lambda lab: modularity_eq3(p, lab))
    assert modularity(p, part) == pytest.approx(modularity_eq3(p, best), abs=1e-12)


def test_greedy_modularity_complete_graph_single_cluster():
    nodes = [node(i, 0, "terminal" if i == 0 else "waypoint") for i in range(4)]
    edges = [(a, b, 1.0) for a, b in itertools.combinations(range(4), 2)]
    p = Problem.build(nodes, edges, [0])
    part = greedy_modularity_partition(p)
    assert part.k == 1
    best = max(all_partitions(range(4)), key=lambda lab: modularity_eq3(p, lab))
    assert modularity_eq3(p, best) == pytest.approx(0.0, abs=1e-12)


def test_greedy_modularity_at_least_all_in_one():
    rng = np.random.default_rng(37)
    for _ in range(10):
        p = random_connected_problem(rng, n_min=5, n_max=8)
        part = greedy_modularity_partition(p)
        assert modularity(p, part) >= modularity(p, [0] * p.n_nodes) - 1e-12


def test_greedy_modularity_value_consistent():
    p = two_cliques_problem()
    part = greedy_modularity_partition(p)
    assert modularity(p, part) == pytest.approx(modularity_eq3(p, list(part.assignment)),
                                                abs=1e-12)


# ------------------------------------------------------------------- spectral

def test_spectral_two_cliques_matches_min_ncut():
    p = two_cliques_problem()
    part = spectral_partition(p, 2, seed=0)
    assert part.k == 2
    clusters = {frozenset(part.cluster_nodes(0)), frozenset(part.cluster_nodes(1))}
    # exhaustive minimum normalized cut over the affinity used by the method
    from fiberplan.partition import _affinity

    w = _affinity(p)
    best, best_val = None, np.inf
    nodes = list(range(p.n_nodes))
    for r in range(1, len(nodes) // 2 + 1):
        for side in itertools.combinations(nodes, r):
            a = set(side)
            b = set(nodes) - a
            cut = sum(w[i, j] for i in a for j in b)
            vol_a = sum(w[i, j] for i in a for j in nodes)
            vol_b = sum(w[i, j] for i in b for j in nodes)
            val = cut / vol_a + cut / vol_b
            if val < best_val - 1e-12:
                best_val, best = val, {frozenset(a), frozenset(b)}
    assert clusters == best


def test_spectral_k1_single_cluster():
    p = two_cliques_problem()
    part = spectral_partition(p, 1)
    assert part.k == 1


def test_spectral_all_singletons():
    nodes = [node(i, 0, "terminal") for i in range(4)]
    edges = [(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (0, 3, 1.0)]
    p = Problem.build(nodes, edges, [0, 1, 2, 3])
    part = spectral_partition(p, 4, seed=1)
    assert part.k == 4
    assert sorted(part.assignment) == [0, 1, 2, 3]


def test_spectral_k_out_of_range():
    p = single_edge_problem()
    with pytest.raises(ValueError):
        spectral_partition(p, 0)
    with pytest.raises(ValueError):
        spectral_partition(p, 3)


# ------------------------------------------------------------------ eigengaps

def test_eigengap_simple():
    assert eigengap_k([0.0, 0.01, 0.9, 1.1]) == 2


def test_eigengap_uniform_ties_to_one():
    assert eigengap_k([0.0, 1.0, 2.0, 3.0]) == 1


def test_eigengap_counts_components():
    # three disjoint triangles bridged by two heavy edges: near-zero leading
    # eigenvalues per loose cluster, so the gap sits at k = 3
    nodes = [node(i, 0, "terminal" if i % 3 == 0 else "waypoint") for i in range(9)]
    edges = []
    for blk in range(3):
        b = 3 * blk
        edges += [(b, b + 1, 0.1), (b + 1, b + 2, 0.1), (b, b + 2, 0.1)]
    edges += [(2, 3, 50.0), (5, 6, 50.0)]
    p = Problem.build(nodes, edges, [0, 3, 6])
    vals, _ = random_walk_laplacian_spectrum(p)
    assert eigengap_k(vals) == 3


def test_educated_guess_values():
    assert educated_guess_k(7) == 2
    assert educated_guess_k(8) == 3
    assert educated_guess_k(1) == 2


# -------------------------------------------------------------------- voronoi

def voronoi_grid_problem():
    """3x3 grid, terminals at three corners."""
    nodes = [node(x, y, "terminal" if (x, y) in [(0, 0), (2, 0), (0, 2)] else "waypoint")
             for y in range(3) for x in range(3)]
    edges = []
    for y in range(3):
        for x in range(3):
            i = y * 3 + x
            if x < 2:
                edges.append((i, i + 1, 1.0))
            if y < 2:
                edges.append((i, i + 3, 1.0))
    return Problem.build(nodes, edges, [0, 2, 6])


def test_voronoi_full_region_per_terminal():
    p = voronoi_grid_problem()
    part = voronoi_partition(p, k_target=3)
    assert part.k == 3
    # each node sits in the region of its nearest terminal (ties: lowest id)
    dists = {t: single_source_distances(p, t) for t in p.terminals}
    for n in range(p.n_nodes):
        best_t = min(p.terminals, key=lambda t: (dists[t][n], t))
        assert part.assignment[n] == part.assignment[best_t]


def test_voronoi_path_strictly_nearer():
    nodes = [node(0, 0, "terminal"), node(1, 0), node(2, 0, "terminal")]
    p = Problem.build(nodes, [(0, 1, 1.0), (1, 2, 2.0)], [0, 2])
    part = voronoi_partition(p, 2)
    assert part.assignment[1] == part.assignment[0]


def test_voronoi_merge_to_single_region():
    p = voronoi_grid_problem()
    part = voronoi_partition(p, k_target=1)
    assert part.k == 1


def test_voronoi_node_limit_blocks_merging():
    p = voronoi_grid_problem()
    part = voronoi_partition(p, k_target=1, node_limit=4)
    assert part.k > 1


def test_voronoi_k_target_exceeds_terminals():
    p = voronoi_grid_problem()
    with pytest.raises(ValueError):
        voronoi_partition(p, k_target=4)


# ----------------------------------------------------------------- invariants

def assert_valid_partition(p, part):
    assert len(part.assignment) == p.n_nodes
    from fiberplan.core import connected_components

    for members in part.clusters():
        assert members, "empty cluster"
        sub_edges = [(u, v) for u, v, _ in p.edges
                     if part.assignment[u] == part.assignment[members[0]]
                     and part.assignment[v] == part.assignment[members[0]]]
        assert len(connected_components(members, sub_edges)) == 1
        assert any(t in members for t in p.terminals), "cluster without terminal"


def test_partitioners_produce_valid_partitions():
    rng = np.random.default_rng(41)
    for _ in range(8):
        p = random_connected_problem(rng, n_min=6, n_max=9, n_terminals=3)
        for part in (greedy_modularity_partition(p),
                     spectral_partition(p, 2, seed=3),
                     voronoi_partition(p, 2)):
            assert_valid_partition(p, part)


def test_repair_fixes_bad_labels():
    p = two_cliques_problem()
    # cluster 1 has no terminal; cluster 2 is disconnected
    labels = [0, 0, 1, 1, 2, 0, 2, 2]
    part = repair_partition(p, labels)
    assert_valid_partition(p, part)


# ---------------------------------------------------------------- subproblems

def test_split_identity_for_single_cluster():
    p = two_cliques_problem()
    subs = split_subproblems(p, Partition(tuple([0] * p.n_nodes), 1))
    assert len(subs) == 1
    assert subs[0].problem.n_nodes == p.n_nodes
    assert subs[0].back_map == tuple(range(p.n_nodes))


def test_split_covers_nodes_once():
    p = two_cliques_problem()
    part = greedy_modularity_partition(p)
    subs = split_subproblems(p, part)
    seen = sorted(g for sub in subs for g in sub.back_map)
    assert seen == list(range(p.n_nodes))
    assert sum(len(sub.problem.terminals) for sub in subs) == len(p.terminals)


# -------------------------------------------------------------------- merging

def global_tree(p, sub, tree):
    back = sub.back_map
    edges = [(back[u], back[v]) for u, v in tree.edges]
    nodes = frozenset(back[n] for n in tree.nodes)
    return SteinerTree(edges=tuple(sorted(edges)), nodes=nodes, cost=tree.cost)


def test_merge_single_tree_unchanged():
    from fiberplan.solvers import solve_baseline

    p = two_cliques_problem()
    tree = solve_baseline(p)
    for merger in (merge_sph, merge_center_of_mass):
        merged = merger(p, [tree])
        assert merged.edges == tree.edges


def test_merge_two_singletons_on_path():
    nodes = [node(0, 0, "terminal"), node(1, 0), node(2, 0, "terminal")]
    p = Problem.build(nodes, [(0, 1, 1.0), (1, 2, 1.0)], [0, 2])
    t0 = SteinerTree(edges=(), nodes=frozenset({0}), cost=0.0)
    t2 = SteinerTree(edges=(), nodes=frozenset({2}), cost=0.0)
    merged = merge_sph(p, [t0, t2])
    assert merged.edges == ((0, 1), (1, 2))


def test_merge_bounds_against_exact():
    from fiberplan.solvers import solve_exact

    rng = np.random.default_rng(43)
    for _ in range(10):
        p = random_connected_problem(rng, n_min=6, n_max=9, n_terminals=4)
        part = voronoi_partition(p, 2)
        subs = split_subproblems(p, part)
        trees = [global_tree(p, sub, solve_exact(sub.problem)) for sub in subs]
        for merger in (merge_sph, merge_center_of_mass):
            merged = merger(p, trees)
            ok, violations = is_steiner_tree(p, merged.edges)
            assert ok, violations
            exact = solve_exact(p)
            assert merged.cost >= exact.cost - TOL


def test_merge_com_symmetric_grid():
    # two parallel 3-node columns; the only connection runs through the middle
    nodes = [node(0, 0, "terminal"), node(0, 1), node(0, 2, "terminal"),
             node(2, 0, "terminal"), node(2, 1), node(2, 2, "terminal"),
             node(1, 1)]
    edges = [(0, 1, 1.0), (1, 2, 1.0), (3, 4, 1.0), (4, 5, 1.0),
             (1, 6, 1.0), (6, 4, 1.0)]
    p = Problem.build(nodes, edges, [0, 2, 3, 5])
    left = SteinerTree.from_edges(p, [(0, 1), (1, 2)])
    right = SteinerTree.from_edges(p, [(3, 4), (4, 5)])
    merged = merge_center_of_mass(p, [left, right])
    ok, _ = is_steiner_tree(p, merged.edges)
    assert ok
    assert (1, 6) in merged.edges and (4, 6) in merged.edges


def test_merge_sph_preselection_still_valid():
    p = two_cliques_problem()
    left = SteinerTree(edges=(), nodes=frozenset({0}), cost=0.0)
    right = SteinerTree(edges=(), nodes=frozenset({4}), cost=0.0)
    merged = merge_sph(p, [left, right], n_partitions=1, n_nodes=1)
    ok, _ = is_steiner_tree(p, merged.edges)
    assert ok
