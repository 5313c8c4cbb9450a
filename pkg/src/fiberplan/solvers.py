"""Classic Steiner solvers: metric-closure baseline, exact enumeration,
an evolutionary algorithm over node selections, and simulated annealing.

EA and SA both represent a candidate tree by its non-terminal selection and
rebuild the actual tree through the metric closure, so every intermediate
state is a valid Steiner tree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .core import (
    Problem,
    SteinerTree,
    build_tree_via_closure,
    canonical_edge,
    connected_components,
    minimum_spanning_tree,
    prune_tree,
    rebuild_tree,
)

__all__ = [
    "EaParams",
    "SaParams",
    "solve_baseline",
    "solve_exact",
    "random_tree",
    "ea_fitness",
    "ea_crossover",
    "ea_mutate",
    "solve_ea",
    "flip_selection",
    "sa_propose",
    "sa_accept",
    "solve_sa",
]

EXACT_GUARD = 20
RANDOM_SELECTION_PROB = 0.3


@dataclass(frozen=True)
class EaParams:
    population: int = 60
    elitism: int = 6
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 0.05
    seed_with_baseline: bool = True
    generations: int = 300
    tournament: int = 3
    seed: int = 0


@dataclass(frozen=True)
class SaParams:
    beta_0: float = 1.0
    beta_factor: float = 1.25
    steps_per_level: int = 200
    levels: int = 40
    proposal_flip_count: int = 1
    seed: int = 0


def _non_terminals(p: Problem) -> list[int]:
    return [i for i in range(p.n_nodes) if i not in p.terminal_set]


def solve_baseline(p: Problem) -> SteinerTree:
    """MST of the terminals' metric closure, expanded and pruned.

    Guaranteed within a factor (2 - 2/t) of the optimum for t terminals.
    """
    return build_tree_via_closure(p, p.terminals)


def solve_exact(p: Problem) -> SteinerTree:
    """Provably optimal tree by enumerating non-terminal subsets.

    For each subset whose union with the terminals induces a connected
    subgraph, take MST + prune; the best result over all subsets is optimal.
    Guarded to at most 20 non-terminals.
    """
    others = _non_terminals(p)
    if len(others) > EXACT_GUARD:
        raise ValueError(f"solve_exact guard: {len(others)} non-terminals > {EXACT_GUARD}")
    terminals = list(p.terminals)
    if len(terminals) == 1:
        return SteinerTree.from_edges(p, [])
    best: SteinerTree | None = None
    for mask in range(1 << len(others)):
        node_set = set(terminals)
        node_set.update(others[i] for i in range(len(others)) if mask >> i & 1)
        induced = [(u, v, c) for u, v, c in p.edges if u in node_set and v in node_set]
        if len(connected_components(node_set, [(u, v) for u, v, _ in induced])) != 1:
            continue
        mst = minimum_spanning_tree(node_set, induced)
        tree = prune_tree(p, mst)
        if best is None or tree.cost < best.cost - 1e-15:
            best = tree
    assert best is not None  # the full node set is always connected
    return best


def random_tree(p: Problem, rng: np.random.Generator,
                prob: float = RANDOM_SELECTION_PROB) -> SteinerTree:
    """Tree through the terminals plus a Bernoulli sample of non-terminals."""
    selection = [s for s in _non_terminals(p) if rng.random() < prob]
    return build_tree_via_closure(p, list(p.terminals) + selection)


# ------------------------------------------------------------------------ EA

def ea_fitness(costs: Iterable[float], sizes: Iterable[int],
               alpha: float, beta: float) -> np.ndarray:
    """f(x) = -(alpha * cost^ + beta * size^), normalized over the population.

    Both terms are min-max normalized to [0, 1] across the current
    population; a population of identical values normalizes to all zeros.
    """
    def normalize(values):
        arr = np.asarray(list(values), dtype=float)
        lo, hi = arr.min(), arr.max()
        if hi - lo <= 1e-15:
            return np.zeros_like(arr)
        return (arr - lo) / (hi - lo)

    return -(alpha * normalize(costs) + beta * normalize(sizes))


def _random_subtree(tree: SteinerTree, rng: np.random.Generator):
    """Split a tree at a random edge: (removed nodes, removed edges, kept edges)."""
    edges = tree.edges
    idx = int(rng.integers(len(edges)))
    cut = edges[idx]
    root = cut[int(rng.integers(2))]
    adj: dict[int, list[int]] = {}
    for u, v in edges:
        if (u, v) == cut:
            continue
        adj.setdefault(u, []).append(v)
        adj.setdefault(v, []).append(u)
    removed = {root}
    stack = [root]
    while stack:
        x = stack.pop()
        for y in adj.get(x, []):
            if y not in removed:
                removed.add(y)
                stack.append(y)
    removed_edges = {e for e in edges if e[0] in removed and e[1] in removed}
    kept_edges = set(edges) - removed_edges - {cut}
    return removed, removed_edges, kept_edges


def _largest_fitting_subtree(tree: SteinerTree, region: set[int]):
    """Largest subtree of `tree` whose node set fits inside `region`."""
    candidates: list[tuple[int, tuple[int, ...], frozenset]] = []
    if tree.nodes <= region:
        candidates.append((len(tree.nodes), tuple(sorted(tree.nodes)),
                           frozenset(tree.edges)))
    for cut in tree.edges:
        for side in (0, 1):
            adj: dict[int, list[int]] = {}
            for u, v in tree.edges:
                if (u, v) == cut:
                    continue
                adj.setdefault(u, []).append(v)
                adj.setdefault(v, []).append(u)
            comp = {cut[side]}
            stack = [cut[side]]
            while stack:
                x = stack.pop()
                for y in adj.get(x, []):
                    if y not in comp:
                        comp.add(y)
                        stack.append(y)
            if comp <= region:
                comp_edges = frozenset(e for e in tree.edges
                                       if e[0] in comp and e[1] in comp)
                candidates.append((len(comp), tuple(sorted(comp)), comp_edges))
    for n in sorted(tree.nodes):
        if n in region:
            candidates.append((1, (n,), frozenset()))
    if not candidates:
        return frozenset()
    candidates.sort(key=lambda c: (-c[0], c[1]))
    return candidates[0][2]


def ea_crossover(p: Problem, a: SteinerTree, b: SteinerTree,
                 rng: np.random.Generator) -> tuple[SteinerTree, SteinerTree]:
    """Swap a random subtree of each parent for the largest fitting subtree
    of the other, then repair both children to validity."""
    def one_child(src: SteinerTree, donor: SteinerTree) -> SteinerTree:
        if not src.edges:
            return rebuild_tree(p, donor.edges)
        removed, _, kept = _random_subtree(src, rng)
        graft = _largest_fitting_subtree(donor, removed)
        return rebuild_tree(p, set(kept) | set(graft))

    return one_child(a, b), one_child(b, a)


def ea_mutate(p: Problem, x: SteinerTree, gamma: float,
              rng: np.random.Generator) -> SteinerTree:
    """Alter one individual: full random restart with probability gamma,
    otherwise add / remove a non-terminal or rebuild a random subtree."""
    if rng.random() < gamma:
        return random_tree(p, rng)
    available = _non_terminals(p)
    if not available:
        return x
    selection = sorted(n for n in x.nodes if n not in p.terminal_set)
    move = int(rng.integers(3))
    if move == 0:
        unused = [n for n in available if n not in x.nodes]
        if not unused:
            return x
        selection = selection + [unused[int(rng.integers(len(unused)))]]
    elif move == 1:
        if not selection:
            return x
        del selection[int(rng.integers(len(selection)))]
    else:
        if not x.edges:
            return x
        removed, _, _ = _random_subtree(x, rng)
        selection = [n for n in selection if n not in removed]
        pool = [n for n in available if n not in selection]
        selection += [n for n in pool if rng.random() < RANDOM_SELECTION_PROB]
    return build_tree_via_closure(p, list(p.terminals) + selection)


def solve_ea(p: Problem, params: EaParams = EaParams()) -> SteinerTree:
    """Generational EA over Steiner trees; returns the best-ever tree.

    With `seed_with_baseline` the initial population contains copies of the
    baseline solution, so elitism plus best-ever tracking guarantees the
    result never costs more than the baseline.
    """
    if not (0 <= params.elitism < params.population):
        raise ValueError("need 0 <= elitism < population")
    rng = np.random.default_rng(params.seed)
    pop: list[SteinerTree] = []
    if params.seed_with_baseline:
        seed_tree = solve_baseline(p)
        pop.extend([seed_tree] * max(1, params.population // 10))
    while len(pop) < params.population:
        pop.append(random_tree(p, rng))
    pop = pop[:params.population]

    def better(t: SteinerTree, s: SteinerTree) -> bool:
        return (t.cost, t.n_edges, t.edges) < (s.cost, s.n_edges, s.edges)

    best = min(pop, key=lambda t: (t.cost, t.n_edges, t.edges))
    for _ in range(params.generations):
        fitness = ea_fitness([t.cost for t in pop], [len(t.nodes) for t in pop],
                             params.alpha, params.beta)
        ranked = sorted(range(len(pop)),
                        key=lambda i: (-fitness[i], pop[i].cost, pop[i].edges))
        rank_pos = {i: r for r, i in enumerate(ranked)}

        def tournament() -> SteinerTree:
            picks = rng.integers(0, len(pop), size=params.tournament)
            return pop[min(picks, key=lambda i: rank_pos[int(i)])]

        offspring: list[SteinerTree] = []
        target = params.population - params.elitism
        while len(offspring) < target:
            c1, c2 = ea_crossover(p, tournament(), tournament(), rng)
            offspring.append(ea_mutate(p, c1, params.gamma, rng))
            if len(offspring) < target:
                offspring.append(ea_mutate(p, c2, params.gamma, rng))
        pop = offspring + [pop[i] for i in ranked[:params.elitism]]
        gen_best = min(pop, key=lambda t: (t.cost, t.n_edges, t.edges))
        if better(gen_best, best):
            best = gen_best
    return best


# ------------------------------------------------------------------------ SA

def flip_selection(selection: frozenset[int], flips: Iterable[int]) -> frozenset[int]:
    """Toggle membership of every node in `flips` (an involution)."""
    return selection.symmetric_difference(flips)


def sa_propose(p: Problem, state: SteinerTree, flip_count: int,
               rng: np.random.Generator) -> SteinerTree:
    """Flip `flip_count` uniformly chosen non-terminals in the state's
    selection and rebuild the tree. The kernel is symmetric on selections."""
    if flip_count == 0:
        return state
    available = _non_terminals(p)
    if not available:
        return state
    count = min(flip_count, len(available))
    picks = rng.choice(len(available), size=count, replace=False)
    flips = {available[int(i)] for i in picks}
    selection = frozenset(n for n in state.nodes if n not in p.terminal_set)
    new_selection = flip_selection(selection, flips)
    return build_tree_via_closure(p, list(p.terminals) + sorted(new_selection))


def sa_accept(cost_current: float, cost_proposal: float, beta: float,
              rng: np.random.Generator) -> bool:
    """Metropolis rule: accept with probability min(1, exp(-beta * delta)).

    This is the Gibbs ratio pi_proposal / pi_current with the normalizing
    constant cancelled; improving moves are always accepted.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    delta = cost_proposal - cost_current
    if delta <= 0:
        return True
    return bool(rng.random() < math.exp(-beta * delta))


def solve_sa(p: Problem, params: SaParams = SaParams()) -> SteinerTree:
    """Metropolis chain over non-terminal selections with a geometric
    annealing schedule; returns the best state ever visited."""
    rng = np.random.default_rng(params.seed)
    available = _non_terminals(p)
    selection = frozenset(n for n in available if rng.random() < RANDOM_SELECTION_PROB)
    current = build_tree_via_closure(p, list(p.terminals) + sorted(selection))
    best = current
    if not available:
        return best
    beta = params.beta_0
    for _ in range(params.levels):
        for _ in range(params.steps_per_level):
            count = min(params.proposal_flip_count, len(available))
            picks = rng.choice(len(available), size=count, replace=False)
            flips = {available[int(i)] for i in picks}
            proposal_sel = flip_selection(selection, flips)
            proposal = build_tree_via_closure(p, list(p.terminals) + sorted(proposal_sel))
            if sa_accept(current.cost, proposal.cost, beta, rng):
                selection, current = proposal_sel, proposal
            if (current.cost, current.n_edges, current.edges) < \
                    (best.cost, best.n_edges, best.edges):
                best = current
        beta *= params.beta_factor
    return best
