"""Graph simplification before solving.

Three reducers produce a SimplifiedProblem whose solution can be lifted back
onto the source graph: a triangulation-based evolutionary simplifier, a
growing neural gas that learns the cost field's topology, and a
conductivity-threshold variant of the physarum dynamics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial import Delaunay, QhullError

from .core import (
    KIND_WAYPOINT,
    NodeRecord,
    Problem,
    SteinerTree,
    canonical_edge,
    connect_components_via_paths,
    connected_components,
    rebuild_tree,
    single_source_paths,
)
from .physarum import PhysarumParams, run_dynamics
from .seeds import derive_seed

__all__ = [
    "SimplifiedProblem",
    "TriangleIndividual",
    "TriangleEaParams",
    "GngParams",
    "identity_simplification",
    "triangle_error",
    "triangle_simplify",
    "sample_signal",
    "gng_simplify",
    "physarum_simplify",
    "lift_solution",
]

ISO_LEVELS = 5


@dataclass(frozen=True)
class SimplifiedProblem:
    """A reduced problem plus the mapping back to its source graph.

    node_map[i] is the source node represented by simplified node i;
    terminals always map to themselves.
    """

    problem: Problem
    origin: Problem
    node_map: tuple[int, ...]


@dataclass(frozen=True)
class TriangleIndividual:
    """A selection of source non-terminals with its population fitness."""

    selection: frozenset[int]
    fitness: float


@dataclass(frozen=True)
class TriangleEaParams:
    population: int = 40
    elitism: int = 4
    tournament: int = 3
    mutation_rate: float = 0.02
    generations: int = 200


@dataclass(frozen=True)
class GngParams:
    max_nodes: int = 40
    lambda_insert: int = 100
    eps_b: float = 0.05
    eps_n: float = 0.006
    age_max: int = 50
    alpha_split: float = 0.5
    d_decay: float = 0.995
    iso_level: bool = False
    iso_level_probs: tuple[float, ...] | None = None
    n_signals: int = 10000

    def __post_init__(self):
        if not (0 < self.eps_n <= self.eps_b < 1):
            raise ValueError("need 0 < eps_n <= eps_b < 1")
        if self.max_nodes < 2:
            raise ValueError("max_nodes must be >= 2")


def identity_simplification(p: Problem) -> SimplifiedProblem:
    return SimplifiedProblem(problem=p, origin=p,
                             node_map=tuple(range(p.n_nodes)))


# -------------------------------------------------------------- triangulation

def _delaunay(points: np.ndarray) -> Delaunay:
    if len(points) < 3:
        raise ValueError("degenerate selection: need at least three points")
    try:
        return Delaunay(points)
    except QhullError as exc:
        raise ValueError(f"degenerate selection: {exc}") from exc


def _barycentric(tri: Delaunay, simplex: int, point: np.ndarray) -> np.ndarray:
    t = tri.transform[simplex]
    b = t[:2].dot(point - t[2])
    return np.append(b, 1.0 - b.sum())


def _clamped_interpolation(tri: Delaunay, values: np.ndarray,
                           point: np.ndarray) -> float:
    """Value at `point` from the nearest triangle, barycentrics clamped."""
    pts = tri.points
    best = None
    for simplex in range(len(tri.simplices)):
        bary = _barycentric(tri, simplex, point)
        clamped = np.maximum(bary, 0.0)
        clamped /= clamped.sum()
        verts = tri.simplices[simplex]
        realized = clamped.dot(pts[verts])
        dist = float(np.linalg.norm(realized - point))
        value = float(clamped.dot(values[verts]))
        if best is None or dist < best[0] - 1e-15:
            best = (dist, value)
    return best[1]


def triangle_error(p: Problem, selection: Iterable[int]) -> float:
    """Mean |interpolated - actual| node weight under the selection's
    Delaunay triangulation (selection plus all terminals)."""
    chosen = sorted(set(selection) | p.terminal_set)
    for n in chosen:
        if n in p.terminal_set:
            continue
        if not (0 <= n < p.n_nodes):
            raise ValueError(f"selection references unknown node {n}")
    points = p.positions[chosen]
    values = p.weights[chosen]
    tri = _delaunay(points)
    queries = p.positions
    simplices = tri.find_simplex(queries)
    total = 0.0
    for i in range(p.n_nodes):
        s = simplices[i]
        if s >= 0:
            bary = _barycentric(tri, int(s), queries[i])
            interp = float(bary.dot(values[tri.simplices[int(s)]]))
        else:
            interp = _clamped_interpolation(tri, values, queries[i])
        total += abs(interp - p.weights[i])
    return total / p.n_nodes


def _triangulation_edges(points: np.ndarray) -> list[tuple[int, int]]:
    """Delaunay edges over `points`, complete graph if degenerate."""
    if len(points) >= 3:
        try:
            tri = Delaunay(points)
            edges = set()
            for simplex in tri.simplices:
                for a in range(3):
                    for b in range(a + 1, 3):
                        edges.add(canonical_edge(int(simplex[a]), int(simplex[b])))
            return sorted(edges)
        except QhullError:
            pass
    return [(a, b) for a in range(len(points)) for b in range(a + 1, len(points))]


def _graph_from_points(p: Problem, chosen: Sequence[int], name: str
                       ) -> SimplifiedProblem:
    """Simplified problem over source nodes `chosen`: triangulation edges,
    cost = mean endpoint weight times Euclidean length."""
    chosen = sorted(chosen)
    points = p.positions[chosen]
    pairs = _triangulation_edges(points)
    records = [p.nodes[g] for g in chosen]
    local = {g: i for i, g in enumerate(chosen)}
    edges = []
    for a, b in pairs:
        ga, gb = chosen[a], chosen[b]
        length = float(np.linalg.norm(p.positions[ga] - p.positions[gb]))
        cost = (p.nodes[ga].weight + p.nodes[gb].weight) / 2.0 * length
        edges.append((a, b, cost))
    terminals = [local[t] for t in p.terminals]
    distributors = [local[d] for d in p.distributors]
    sub = Problem.build(records, edges, terminals, distributors, name=name)
    return SimplifiedProblem(problem=sub, origin=p, node_map=tuple(chosen))


def triangle_simplify(p: Problem, alpha: float = 1.0, beta: float = 1.0,
                      max_nonterminals: int | None = None,
                      ea_params: TriangleEaParams | None = None,
                      seed: int = 0) -> SimplifiedProblem:
    """Evolve a non-terminal selection whose triangulation approximates the
    weight field well while staying small.

    Fitness is -(alpha * error^ + beta * size^) with both terms min-max
    normalized over the current population each generation.
    """
    ea = ea_params or TriangleEaParams()
    candidates = [i for i in range(p.n_nodes) if i not in p.terminal_set]
    cap = len(candidates) if max_nonterminals is None else max_nonterminals
    if cap < 0:
        raise ValueError("max_nonterminals must be >= 0")
    rng = np.random.default_rng(seed)
    error_cache: dict[frozenset, float] = {}

    def raw_error(sel: frozenset) -> float:
        if sel not in error_cache:
            try:
                error_cache[sel] = triangle_error(p, sel)
            except ValueError:
                error_cache[sel] = math.inf
        return error_cache[sel]

    def capped(sel: set[int]) -> frozenset:
        sel = set(sel)
        while len(sel) > cap:
            ordered = sorted(sel)
            sel.discard(ordered[int(rng.integers(len(ordered)))])
        return frozenset(sel)

    def evaluate(pop: list[frozenset]) -> list[TriangleIndividual]:
        errors = [raw_error(s) for s in pop]
        finite = [e for e in errors if math.isfinite(e)]
        lo = min(finite) if finite else 0.0
        hi = max(finite) if finite else 0.0
        def norm_err(e):
            if not math.isfinite(e):
                return 2.0
            return 0.0 if hi - lo <= 1e-15 else (e - lo) / (hi - lo)
        sizes = [len(s) for s in pop]
        slo, shi = min(sizes), max(sizes)
        def norm_size(s):
            return 0.0 if shi - slo == 0 else (s - slo) / (shi - slo)
        return [TriangleIndividual(s, -(alpha * norm_err(e) + beta * norm_size(n)))
                for s, e, n in zip(pop, errors, sizes)]

    population = []
    for _ in range(ea.population):
        mask = rng.random(len(candidates)) < 0.5
        population.append(capped({c for c, m in zip(candidates, mask) if m}))

    def sort_key(ind: TriangleIndividual):
        return (-ind.fitness, raw_error(ind.selection), len(ind.selection),
                tuple(sorted(ind.selection)))

    scored = evaluate(population)
    for _ in range(ea.generations):
        scored.sort(key=sort_key)
        elites = [ind.selection for ind in scored[:ea.elitism]]

        def tournament() -> frozenset:
            picks = rng.integers(0, len(scored), size=ea.tournament)
            return scored[min(int(i) for i in picks)].selection

        offspring: list[frozenset] = []
        while len(offspring) < ea.population - ea.elitism:
            a, b = tournament(), tournament()
            child = set()
            for c in candidates:
                src = a if rng.random() < 0.5 else b
                if c in src:
                    child.add(c)
            for c in candidates:  # bit-flip mutation
                if rng.random() < ea.mutation_rate:
                    child.symmetric_difference_update({c})
            offspring.append(capped(child))
        population = offspring + elites
        scored = evaluate(population)
    scored.sort(key=sort_key)
    best = scored[0].selection
    chosen = sorted(set(best) | p.terminal_set)
    return _graph_from_points(p, chosen, name=f"{p.name}#triangle")


# ------------------------------------------------------------------------ GNG

def sample_signal(positions: np.ndarray, weights: np.ndarray, iso: bool,
                  iso_probs: Sequence[float] | None,
                  rng: np.random.Generator) -> np.ndarray:
    """Draw one input position from the weight field.

    Uniform over positions when iso is off; otherwise each position's
    probability is proportional to the sampling weight of its iso level.
    """
    n = len(positions)
    if n == 0:
        raise ValueError("empty weight field")
    if not iso:
        return positions[int(rng.integers(n))]
    if iso_probs is None or len(iso_probs) == 0:
        raise ValueError("iso sampling needs per-level probabilities")
    levels = iso_levels(weights, len(iso_probs))
    raw = np.array([iso_probs[lv] for lv in levels], dtype=float)
    return positions[int(rng.choice(n, p=raw / raw.sum()))]


def iso_levels(weights: np.ndarray, n_levels: int) -> np.ndarray:
    """Quantize weights into equal-width bins over their range."""
    lo, hi = float(np.min(weights)), float(np.max(weights))
    if hi - lo <= 1e-15:
        return np.zeros(len(weights), dtype=int)
    idx = ((weights - lo) / (hi - lo) * n_levels).astype(int)
    return np.minimum(idx, n_levels - 1)


def default_iso_probs(weights: np.ndarray, n_levels: int = ISO_LEVELS
                      ) -> tuple[float, ...]:
    """Per-level sampling weights proportional to the bin midpoints, so
    expensive regions draw proportionally more network nodes."""
    lo, hi = float(np.min(weights)), float(np.max(weights))
    if hi - lo <= 1e-15:
        return tuple([1.0] * n_levels)
    return tuple(lo + (lv + 0.5) * (hi - lo) / n_levels for lv in range(n_levels))


def gng_simplify(p: Problem, params: GngParams = GngParams(),
                 seed: int = 0) -> SimplifiedProblem:
    """Growing neural gas over the weight field, then terminal snap-in.

    The gas adapts to signals sampled from the source node positions; after
    adaptation every terminal is added and wired to its nearest gas unit, and
    gas edges are priced like ordinary edges (mean weight times length).
    """
    rng = np.random.default_rng(seed)
    positions = p.positions
    weights = p.weights
    iso_probs = params.iso_level_probs
    if params.iso_level and iso_probs is None:
        iso_probs = default_iso_probs(weights)

    def signal() -> np.ndarray:
        return sample_signal(positions, weights, params.iso_level, iso_probs, rng)

    next_id = 2
    pos: dict[int, np.ndarray] = {0: signal().astype(float).copy(),
                                  1: signal().astype(float).copy()}
    err: dict[int, float] = {0: 0.0, 1: 0.0}
    age: dict[tuple[int, int], int] = {}

    def neighbors(n: int) -> list[int]:
        return sorted(b if a == n else a for a, b in age if n in (a, b))

    for s in range(1, params.n_signals + 1):
        x = signal()
        ids = sorted(pos)
        d2 = [float(((pos[i] - x) ** 2).sum()) for i in ids]
        order = sorted(range(len(ids)), key=lambda k: (d2[k], ids[k]))
        s1 = ids[order[0]]
        s2 = ids[order[1]]
        for e in list(age):
            if s1 in e:
                age[e] += 1
        err[s1] += d2[order[0]]
        pos[s1] += params.eps_b * (x - pos[s1])
        for nb in neighbors(s1):
            pos[nb] += params.eps_n * (x - pos[nb])
        age[canonical_edge(s1, s2)] = 0
        for e in [e for e, a in age.items() if a > params.age_max]:
            del age[e]
        for n in [n for n in list(pos) if not neighbors(n) and n not in (s1, s2)]:
            del pos[n]
            del err[n]
        if s % params.lambda_insert == 0 and len(pos) < params.max_nodes:
            q = max(sorted(err), key=lambda n: (err[n], -n))
            q_nbrs = neighbors(q)
            if q_nbrs:
                f = max(q_nbrs, key=lambda n: (err[n], -n))
                r = next_id
                next_id += 1
                pos[r] = (pos[q] + pos[f]) / 2.0
                age.pop(canonical_edge(q, f), None)
                age[canonical_edge(q, r)] = 0
                age[canonical_edge(r, f)] = 0
                err[q] *= params.alpha_split
                err[f] *= params.alpha_split
                err[r] = err[q]
                if len(pos) >= params.max_nodes:
                    break
        for n in err:
            err[n] *= params.d_decay

    gas_ids = sorted(pos)
    terminals = list(p.terminals)
    records: list[NodeRecord] = [p.nodes[t] for t in terminals]
    node_map: list[int] = list(terminals)
    gas_index: dict[int, int] = {}
    gas_weight: dict[int, float] = {}
    for g in gas_ids:
        dist = np.linalg.norm(positions - pos[g], axis=1)
        nearest_src = int(np.argmin(dist))
        gas_index[g] = len(records)
        gas_weight[g] = float(weights[nearest_src])
        records.append(NodeRecord(float(pos[g][0]), float(pos[g][1]),
                                  gas_weight[g], KIND_WAYPOINT))
        node_map.append(nearest_src)

    def link_cost(i: int, j: int) -> float:
        length = float(np.linalg.norm(
            np.array([records[i].x, records[i].y])
            - np.array([records[j].x, records[j].y])))
        return (records[i].weight + records[j].weight) / 2.0 * length

    edges: set[tuple[int, int]] = set()
    for a, b in age:
        edges.add(canonical_edge(gas_index[a], gas_index[b]))
    for li, t in enumerate(terminals):
        dists = [(float(np.linalg.norm(positions[t] - pos[g])), g) for g in gas_ids]
        _, g = min(dists)
        edges.add(canonical_edge(li, gas_index[g]))
    # wire any remaining components together at their closest node pair
    comps = connected_components(range(len(records)), edges)
    while len(comps) > 1:
        comps.sort(key=min)
        pairs = []
        for other in comps[1:]:
            for a in sorted(comps[0]):
                for b in sorted(other):
                    pairs.append((link_cost(a, b), a, b))
        _, a, b = min(pairs)
        edges.add(canonical_edge(a, b))
        comps = connected_components(range(len(records)), edges)

    weighted = [(a, b, link_cost(a, b)) for a, b in sorted(edges)]
    local_terminals = list(range(len(terminals)))
    local_distributors = [terminals.index(d) for d in p.distributors]
    sub = Problem.build(records, weighted, local_terminals, local_distributors,
                        name=f"{p.name}#gng")
    return SimplifiedProblem(problem=sub, origin=p, node_map=tuple(node_map))


# ------------------------------------------------------------------- physarum

def physarum_simplify(p: Problem, params: PhysarumParams = PhysarumParams(),
                      keep_threshold: float = 0.01) -> SimplifiedProblem:
    """Keep edges whose conductivity stays at or above `keep_threshold`.

    Runs the shared physarum dynamics without the MST/prune finalization;
    if thresholding disconnects the survivors, terminals are re-attached via
    shortest paths in the source graph.
    """
    best_d = np.zeros(len(p.edges))
    if len(p.terminals) >= 2:
        for i in range(params.initializations):
            rng = np.random.default_rng(derive_seed(params.seed, "physarum-init", i))
            state = _final_state(p, params, rng)
            best_d = np.maximum(best_d, state)
    kept = [(u, v) for d, (u, v, _) in zip(best_d, p.edges) if d >= keep_threshold]
    connected = connect_components_via_paths(p, kept, extra_nodes=p.terminals)
    chosen = sorted({i for e in connected for i in e} | p.terminal_set)
    local = {g: i for i, g in enumerate(chosen)}
    records = [p.nodes[g] for g in chosen]
    edges = [(local[u], local[v], p.edge_cost[(u, v)]) for u, v in sorted(connected)]
    sub = Problem.build(records, edges, [local[t] for t in p.terminals],
                        [local[d] for d in p.distributors],
                        name=f"{p.name}#physarum")
    return SimplifiedProblem(problem=sub, origin=p, node_map=tuple(chosen))


def _final_state(p: Problem, params: PhysarumParams,
                 rng: np.random.Generator) -> np.ndarray:
    from .physarum import PhysarumDisconnected

    try:
        state, _ = run_dynamics(p, params, rng)
    except PhysarumDisconnected:
        return np.zeros(len(p.edges))
    return state.conductivity


# -------------------------------------------------------------------- lifting

def lift_solution(sp: SimplifiedProblem, tree: SteinerTree) -> SteinerTree:
    """Map a tree on the simplified graph back to a valid tree on the origin.

    Each simplified edge becomes the shortest origin path between its mapped
    endpoints; the union is repaired with MST + prune.
    """
    origin = sp.origin
    union: set[tuple[int, int]] = set()
    for a, b in tree.edges:
        u, v = sp.node_map[a], sp.node_map[b]
        if u == v:
            continue
        _, paths = single_source_paths(origin, u)
        path = paths[v]
        union.update(canonical_edge(x, y) for x, y in zip(path, path[1:]))
    return rebuild_tree(origin, union)
