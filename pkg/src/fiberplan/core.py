"""Graph data model and shared primitives for Steiner-tree planning.

Everything downstream (simplifiers, partitioners, solvers, mergers) works on
the immutable :class:`Problem` / :class:`SteinerTree` types defined here and
on the deterministic graph routines (shortest paths, metric closure, MST,
pruning). All tie-breaks are fixed so repeated runs produce identical output.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

__all__ = [
    "NodeRecord",
    "Problem",
    "SteinerTree",
    "validate_problem",
    "is_steiner_tree",
    "tree_cost",
    "shortest_path",
    "single_source_paths",
    "single_source_distances",
    "metric_closure",
    "minimum_spanning_tree",
    "prune_tree",
    "build_tree_via_closure",
    "rebuild_tree",
    "connected_components",
]

KIND_WAYPOINT = "waypoint"
KIND_TERMINAL = "terminal"
KIND_DISTRIBUTOR = "distributor"

Edge = tuple[int, int]
WeightedEdge = tuple[int, int, float]


@dataclass(frozen=True)
class NodeRecord:
    """A graph node: 2-D position, ditch-cost weight and role."""

    x: float
    y: float
    weight: float = 0.0
    kind: str = KIND_WAYPOINT


def canonical_edge(u: int, v: int) -> Edge:
    return (u, v) if u < v else (v, u)


@dataclass(frozen=True)
class Problem:
    """Weighted undirected graph with a required terminal set.

    Nodes are dense integers 0..N-1; edges are stored canonically as
    (min, max, cost). Instances are immutable and safe to share across
    concurrent solver runs.
    """

    nodes: tuple[NodeRecord, ...]
    edges: tuple[WeightedEdge, ...]
    terminals: tuple[int, ...]
    distributors: tuple[int, ...] = ()
    name: str = ""

    @staticmethod
    def build(nodes: Sequence[NodeRecord], edges: Iterable[tuple[int, int, float]],
              terminals: Iterable[int], distributors: Iterable[int] = (),
              name: str = "") -> "Problem":
        """Normalize raw collections into the canonical representation."""
        canon = sorted({(*canonical_edge(u, v), float(c)) for u, v, c in edges})
        return Problem(
            nodes=tuple(nodes),
            edges=tuple(canon),
            terminals=tuple(sorted(set(terminals))),
            distributors=tuple(sorted(set(distributors))),
            name=name,
        )

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @cached_property
    def terminal_set(self) -> frozenset[int]:
        return frozenset(self.terminals)

    @cached_property
    def edge_cost(self) -> dict[Edge, float]:
        return {(u, v): c for u, v, c in self.edges}

    @cached_property
    def adjacency(self) -> dict[int, tuple[tuple[int, float], ...]]:
        adj: dict[int, list[tuple[int, float]]] = {i: [] for i in range(self.n_nodes)}
        for u, v, c in self.edges:
            adj[u].append((v, c))
            adj[v].append((u, c))
        return {i: tuple(sorted(nbrs)) for i, nbrs in adj.items()}

    @cached_property
    def positions(self):
        import numpy as np

        return np.array([(n.x, n.y) for n in self.nodes], dtype=float)

    @cached_property
    def weights(self):
        import numpy as np

        return np.array([n.weight for n in self.nodes], dtype=float)

    @cached_property
    def _dijkstra_cache(self) -> dict:
        # per-source memo for single_source_paths; instances are immutable
        return {}

    @cached_property
    def _tree_cache(self) -> dict:
        # node-subset memo for build_tree_via_closure
        return {}


@dataclass(frozen=True)
class SteinerTree:
    """A tree claimed to span all terminals of some Problem."""

    edges: tuple[Edge, ...]
    nodes: frozenset[int]
    cost: float

    @staticmethod
    def from_edges(p: Problem, edges: Iterable[Edge]) -> "SteinerTree":
        canon = tuple(sorted(canonical_edge(u, v) for u, v in edges))
        nodes = frozenset(i for e in canon for i in e)
        if not nodes:
            nodes = frozenset(p.terminals)
        return SteinerTree(edges=canon, nodes=nodes, cost=tree_cost(p, canon))

    @property
    def n_edges(self) -> int:
        return len(self.edges)


def tree_cost(p: Problem, edges: Iterable[Edge]) -> float:
    """Sum of the problem costs of the given edges."""
    cost_of = p.edge_cost
    return float(sum(cost_of[canonical_edge(u, v)] for u, v in edges))


def connected_components(nodes: Iterable[int],
                         edges: Iterable[Edge]) -> list[set[int]]:
    """Components of the subgraph on `nodes` with `edges`, ordered by min node."""
    adj: dict[int, list[int]] = {n: [] for n in nodes}
    for u, v in edges:
        adj[u].append(v)
        adj[v].append(u)
    seen: set[int] = set()
    comps = []
    for start in sorted(adj):
        if start in seen:
            continue
        stack = [start]
        comp = {start}
        seen.add(start)
        while stack:
            x = stack.pop()
            for y in adj[x]:
                if y not in comp:
                    comp.add(y)
                    seen.add(y)
                    stack.append(y)
        comps.append(comp)
    return comps


def validate_problem(p: Problem) -> list[str]:
    """Check every Problem invariant; returns one message per violation."""
    violations: list[str] = []
    n = p.n_nodes
    if n == 0:
        violations.append("problem has no nodes")
        return violations
    seen: set[Edge] = set()
    for u, v, c in p.edges:
        if not (0 <= u < n and 0 <= v < n):
            violations.append(f"edge ({u},{v}) references unknown node")
            continue
        if u == v:
            violations.append(f"self-loop at node {u}")
        if (u, v) in seen:
            violations.append(f"duplicate edge ({u},{v})")
        seen.add((u, v))
        if c < 0:
            violations.append(f"edge ({u},{v}) has negative cost {c}")
    if not p.terminals:
        violations.append("terminal set is empty")
    for t in p.terminals:
        if not (0 <= t < n):
            violations.append(f"terminal {t} is not a node index")
    for d in p.distributors:
        if d not in p.terminal_set:
            violations.append(f"distributor {d} is not a terminal")
    for i, rec in enumerate(p.nodes):
        if rec.weight < 0:
            violations.append(f"node {i} has negative weight {rec.weight}")
        expected = (KIND_DISTRIBUTOR if i in p.distributors
                    else KIND_TERMINAL if i in p.terminal_set
                    else KIND_WAYPOINT)
        if rec.kind != expected:
            violations.append(f"node {i} kind {rec.kind!r} inconsistent with role {expected!r}")
    ok_edges = [(u, v) for u, v, _ in p.edges if 0 <= u < n and 0 <= v < n]
    if len(connected_components(range(n), ok_edges)) > 1:
        violations.append("graph is disconnected")
    return violations


def is_steiner_tree(p: Problem, edges: Iterable[Edge]) -> tuple[bool, list[str]]:
    """True iff the candidate edge set is a valid Steiner tree for p."""
    canon = []
    for u, v in edges:
        e = canonical_edge(u, v)
        if e not in p.edge_cost:
            raise ValueError(f"candidate edge {e} is not a problem edge")
        canon.append(e)
    violations: list[str] = []
    if len(set(canon)) != len(canon):
        violations.append("duplicate edges in candidate")
    canon = sorted(set(canon))
    node_set = {i for e in canon for i in e}
    if not canon:
        if len(p.terminals) == 1:
            return True, []
        violations.append("empty edge set cannot span multiple terminals")
        return False, violations
    for t in p.terminals:
        if t not in node_set:
            violations.append(f"terminal {t} uncovered")
    comps = connected_components(node_set, canon)
    if len(comps) > 1:
        violations.append(f"candidate has {len(comps)} components")
    if len(canon) != len(node_set) - 1:
        violations.append("cycle: edge count exceeds node count - 1"
                          if len(canon) >= len(node_set) else "not connected")
    return not violations, violations


def single_source_paths(p: Problem, source: int):
    """Dijkstra from `source` returning (dist, path) maps for all nodes.

    Ties between equal-cost routes resolve to the lexicographically smallest
    node sequence, which makes every caller deterministic.
    """
    cache = p._dijkstra_cache
    hit = cache.get(source)
    if hit is not None:
        return hit
    adj = p.adjacency
    dist: dict[int, float] = {}
    path: dict[int, tuple[int, ...]] = {}
    heap: list[tuple[float, tuple[int, ...]]] = [(0.0, (source,))]
    while heap:
        d, pth = heapq.heappop(heap)
        node = pth[-1]
        if node in dist:
            continue
        dist[node] = d
        path[node] = pth
        for nbr, c in adj[node]:
            if nbr not in dist:
                heapq.heappush(heap, (d + c, pth + (nbr,)))
    cache[source] = (dist, path)
    return dist, path


def single_source_distances(p: Problem, source: int) -> dict[int, float]:
    """Distance-only Dijkstra (cheaper than single_source_paths)."""
    adj = p.adjacency
    dist: dict[int, float] = {}
    heap: list[tuple[float, int]] = [(0.0, source)]
    while heap:
        d, node = heapq.heappop(heap)
        if node in dist:
            continue
        dist[node] = d
        for nbr, c in adj[node]:
            if nbr not in dist:
                heapq.heappush(heap, (d + c, nbr))
    return dist


def shortest_path(p: Problem, u: int, v: int) -> tuple[list[int], float]:
    """Minimal-cost path between u and v with its distance."""
    if not (0 <= u < p.n_nodes and 0 <= v < p.n_nodes):
        raise ValueError(f"unknown node in ({u}, {v})")
    dist, path = single_source_paths(p, u)
    if v not in dist:
        raise ValueError(f"node {v} unreachable from {u}")
    return list(path[v]), dist[v]


def metric_closure(p: Problem, nodes: Iterable[int]
                   ) -> dict[Edge, tuple[float, tuple[int, ...]]]:
    """Complete graph over `nodes` weighted by shortest-path distance.

    Each closure edge keeps the realizing path so it can be expanded back
    into original-graph edges.
    """
    subset = sorted(set(nodes))
    closure: dict[Edge, tuple[float, tuple[int, ...]]] = {}
    for i, u in enumerate(subset):
        if i == len(subset) - 1:
            break
        dist, path = single_source_paths(p, u)
        for v in subset[i + 1:]:
            if v not in dist:
                raise ValueError(f"node {v} unreachable from {u}")
            closure[(u, v)] = (dist[v], path[v])
    return closure


class _UnionFind:
    def __init__(self, items: Iterable[int]):
        self.parent = {i: i for i in items}

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[max(ra, rb)] = min(ra, rb)
        return True


def minimum_spanning_tree(nodes: Iterable[int],
                          edges: Iterable[WeightedEdge]) -> list[Edge]:
    """Kruskal MST over an explicit node/edge set.

    Ties break on the smallest (cost, u, v) triple. Raises on disconnected
    input.
    """
    node_list = sorted(set(nodes))
    if len(node_list) <= 1:
        return []
    uf = _UnionFind(node_list)
    picked: list[Edge] = []
    for c, u, v in sorted((c, *canonical_edge(u, v)) for u, v, c in edges):
        if uf.union(u, v):
            picked.append((u, v))
            if len(picked) == len(node_list) - 1:
                break
    if len(picked) != len(node_list) - 1:
        raise ValueError("minimum_spanning_tree: input graph is disconnected")
    return picked


def prune_tree(p: Problem, edges: Iterable[Edge]) -> SteinerTree:
    """Iteratively strip non-terminal leaves until every leaf is a terminal."""
    canon = sorted({canonical_edge(u, v) for u, v in edges})
    node_set = {i for e in canon for i in e}
    if not canon and len(p.terminals) > 1:
        raise ValueError("prune_tree: empty edge set cannot cover the terminals")
    for t in p.terminals:
        if canon and t not in node_set:
            raise ValueError(f"prune_tree: terminal {t} not covered by input edges")
    if canon:
        if len(connected_components(node_set, canon)) != 1:
            raise ValueError("prune_tree: input edges are not connected")
        if len(canon) != len(node_set) - 1:
            raise ValueError("prune_tree: input edges contain a cycle")
    degree: dict[int, int] = {n: 0 for n in node_set}
    incident: dict[int, set[Edge]] = {n: set() for n in node_set}
    for e in canon:
        for end in e:
            degree[end] += 1
            incident[end].add(e)
    alive = set(canon)
    terminal_set = p.terminal_set
    leaves = [n for n in sorted(node_set) if degree[n] == 1 and n not in terminal_set]
    while leaves:
        leaf = leaves.pop()
        (edge,) = [e for e in incident[leaf] if e in alive]
        alive.discard(edge)
        other = edge[0] if edge[1] == leaf else edge[1]
        degree[leaf] -= 1
        degree[other] -= 1
        if degree[other] == 1 and other not in terminal_set:
            leaves.append(other)
    return SteinerTree.from_edges(p, sorted(alive))


def build_tree_via_closure(p: Problem, nodes: Iterable[int]) -> SteinerTree:
    """Tree through all of `nodes`: closure MST, path expansion, MST, prune.

    With `nodes` = terminals this is the classical metric-closure
    2-approximation whose cost is within (2 - 2/t) of the optimum.
    """
    subset = sorted(set(nodes) | p.terminal_set)
    key = tuple(subset)
    cached = p._tree_cache.get(key)
    if cached is not None:
        return cached
    if len(subset) == 1:
        tree = SteinerTree.from_edges(p, [])
        p._tree_cache[key] = tree
        return tree
    closure = metric_closure(p, subset)
    closure_mst = minimum_spanning_tree(subset, [(u, v, closure[(u, v)][0])
                                                 for (u, v) in closure])
    expanded: set[Edge] = set()
    for u, v in closure_mst:
        path = closure[(u, v)][1]
        expanded.update(canonical_edge(a, b) for a, b in zip(path, path[1:]))
    union_nodes = {i for e in expanded for i in e}
    mst = minimum_spanning_tree(union_nodes,
                                [(u, v, p.edge_cost[(u, v)]) for u, v in expanded])
    tree = prune_tree(p, mst)
    p._tree_cache[key] = tree
    return tree


def connect_components_via_paths(p: Problem, edges: Iterable[Edge],
                                 extra_nodes: Iterable[int] = ()) -> set[Edge]:
    """Augment an edge set with cheapest shortest paths until it is connected.

    The component containing the smallest node repeatedly grows a shortest
    path to the nearest node of any other component.
    """
    kept = {canonical_edge(u, v) for u, v in edges}
    for e in kept:
        if e not in p.edge_cost:
            raise ValueError(f"unknown edge {e}")
    node_set = {i for e in kept for i in e} | set(extra_nodes)
    comps = connected_components(node_set, kept)
    while len(comps) > 1:
        comps.sort(key=min)
        base = comps[0]
        membership = {n: ci for ci, comp in enumerate(comps) for n in comp}
        # multi-source Dijkstra out of `base` until another component is hit
        adj = p.adjacency
        dist: dict[int, float] = {}
        heap = [(0.0, (s,)) for s in sorted(base)]
        heapq.heapify(heap)
        found: tuple[int, ...] | None = None
        while heap:
            d, pth = heapq.heappop(heap)
            node = pth[-1]
            if node in dist:
                continue
            dist[node] = d
            if membership.get(node, 0) != 0:
                found = pth
                break
            for nbr, c in adj[node]:
                if nbr not in dist:
                    heapq.heappush(heap, (d + c, pth + (nbr,)))
        if found is None:
            raise ValueError("connect_components_via_paths: graph is disconnected")
        kept.update(canonical_edge(a, b) for a, b in zip(found, found[1:]))
        node_set = {i for e in kept for i in e} | set(extra_nodes)
        comps = connected_components(node_set, kept)
    return kept


def rebuild_tree(p: Problem, edges: Iterable[Edge]) -> SteinerTree:
    """Repair an arbitrary edge set into a valid Steiner tree.

    Missing terminals join as singleton components, components are connected
    along cheapest shortest paths, then MST + prune.
    """
    kept = connect_components_via_paths(p, edges, extra_nodes=p.terminals)
    if not kept:
        return SteinerTree.from_edges(p, [])
    union_nodes = {i for e in kept for i in e}
    mst = minimum_spanning_tree(union_nodes,
                                [(u, v, p.edge_cost[(u, v)]) for u, v in kept])
    return prune_tree(p, mst)
