"""Slime-mold-inspired Steiner solver.

Edge conductivities grow with the flux they carry and decay otherwise;
starved edges are cut. Random source/sink splits of the terminal set are
re-drawn every iteration so flux reaches every terminal over time, and the
surviving subgraph is finalized with MST + prune.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from .core import Problem, SteinerTree, connected_components, rebuild_tree
from .seeds import derive_seed

__all__ = [
    "PhysarumParams",
    "PhysarumState",
    "PhysarumDisconnected",
    "select_sources_sinks",
    "physarum_pressures",
    "physarum_step",
    "run_dynamics",
    "solve_physarum",
]

DENSE_SOLVE_LIMIT = 2000
CG_TOL = 1e-10
MIN_COST = 1e-12
MIN_ALIVE_CONDUCTIVITY = 1e-12


class PhysarumDisconnected(RuntimeError):
    """The alive subgraph no longer connects sources to sinks."""


@dataclass(frozen=True)
class PhysarumParams:
    alpha: float = 0.15
    mu: float = 1.0
    epsilon: float = 0.001
    i0: float = 1.0
    iterations: int = 200
    initializations: int = 3
    seed: int = 0
    pressure_mode: str = "injection"  # or "dirichlet": clamp terminal pressures
    candidate_mode: str = "final"     # or "union": union of survivors per iteration
    cut_guard: bool = True            # never cut terminals apart

    def __post_init__(self):
        if self.alpha <= 0 or self.mu <= 0 or self.i0 <= 0:
            raise ValueError("alpha, mu and i0 must be positive")
        if self.epsilon < 0:
            raise ValueError("epsilon must be non-negative")
        if self.iterations < 1 or self.initializations < 1:
            raise ValueError("iterations and initializations must be >= 1")


@dataclass(frozen=True)
class PhysarumState:
    """Per-edge conductivity/alive flags plus the node pressures of the
    linear solve that produced them (edge order follows Problem.edges)."""

    conductivity: np.ndarray
    alive: np.ndarray
    pressures: np.ndarray


def select_sources_sinks(terminals: Sequence[int], rng: np.random.Generator
                         ) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Random proper bipartition of the terminals into sources and sinks."""
    terms = sorted(terminals)
    if len(terms) < 2:
        raise ValueError("need at least two terminals")
    while True:
        mask = rng.integers(0, 2, size=len(terms))
        if 0 < mask.sum() < len(terms):
            sources = tuple(t for t, m in zip(terms, mask) if m == 1)
            sinks = tuple(t for t, m in zip(terms, mask) if m == 0)
            return sources, sinks


def _terminal_component(p: Problem, alive: np.ndarray) -> set[int]:
    adj: dict[int, list[int]] = {}
    for flag, (u, v, _) in zip(alive, p.edges):
        if flag:
            adj.setdefault(u, []).append(v)
            adj.setdefault(v, []).append(u)
    start = p.terminals[0]
    comp = {start}
    stack = [start]
    while stack:
        x = stack.pop()
        for y in adj.get(x, []):
            if y not in comp:
                comp.add(y)
                stack.append(y)
    return comp


def _terminals_connected(p: Problem, alive: np.ndarray) -> bool:
    return p.terminal_set <= _terminal_component(p, alive)


def _solve_linear(lap: scipy.sparse.spmatrix, rhs: np.ndarray) -> np.ndarray:
    n = lap.shape[0]
    if n == 0:
        return np.zeros(0)
    if n <= DENSE_SOLVE_LIMIT:
        return np.linalg.solve(lap.toarray(), rhs)
    diag = lap.diagonal()
    precond = scipy.sparse.diags(np.where(diag > 0, 1.0 / diag, 1.0))
    sol, info = scipy.sparse.linalg.cg(lap.tocsr(), rhs, rtol=CG_TOL, atol=0.0,
                                       M=precond)
    if info != 0:
        raise PhysarumDisconnected(f"conjugate gradient failed (info={info})")
    return sol


def physarum_pressures(p: Problem, conductivity: np.ndarray,
                       costs: np.ndarray, sources: Sequence[int],
                       sinks: Sequence[int], i0: float,
                       alive: np.ndarray | None = None,
                       mode: str = "injection") -> np.ndarray:
    """Node pressures for the current conductivities.

    `injection` treats -i0/n at sources and +i0/m at sinks as net current
    injections and solves the Kirchhoff system with one sink grounded.
    `dirichlet` clamps those values as terminal pressures and solves only
    the interior nodes.
    """
    alive = np.ones(len(p.edges), dtype=bool) if alive is None else alive
    comp = _terminal_component(p, alive)
    for t in list(sources) + list(sinks):
        if t not in comp:
            raise PhysarumDisconnected(f"terminal {t} separated from the flow network")
    nodes = sorted(comp)
    index = {n: i for i, n in enumerate(nodes)}
    rows, cols, vals = [], [], []
    for flag, (u, v, _), g in zip(alive, p.edges, conductivity / costs):
        if not flag or u not in index or v not in index:
            continue
        iu, iv = index[u], index[v]
        rows += [iu, iv, iu, iv]
        cols += [iu, iv, iv, iu]
        vals += [g, g, -g, -g]
    lap = scipy.sparse.coo_matrix((vals, (rows, cols)),
                                  shape=(len(nodes), len(nodes))).tocsc()
    pressures = np.zeros(p.n_nodes)

    if mode == "injection":
        rhs = np.zeros(len(nodes))
        for s in sources:
            rhs[index[s]] = -i0 / len(sources)
        for s in sinks:
            rhs[index[s]] = i0 / len(sinks)
        ground = index[min(sinks)]
        keep = [i for i in range(len(nodes)) if i != ground]
        reduced = lap.tocsr()[keep, :].tocsc()[:, keep]
        try:
            sol = _solve_linear(reduced, rhs[keep])
        except np.linalg.LinAlgError as exc:
            raise PhysarumDisconnected(str(exc)) from exc
        for i, k in enumerate(keep):
            pressures[nodes[k]] = sol[i]
    elif mode == "dirichlet":
        boundary = {t: (-i0 / len(sources) if t in set(sources) else i0 / len(sinks))
                    for t in list(sources) + list(sinks)}
        interior = [i for i, n in enumerate(nodes) if n not in boundary]
        for n, val in boundary.items():
            pressures[n] = val
        if interior:
            lap_csr = lap.tocsr()
            rhs = np.zeros(len(interior))
            bound_idx = [i for i, n in enumerate(nodes) if n in boundary]
            bvals = np.array([boundary[nodes[i]] for i in bound_idx])
            rhs -= np.asarray(
                lap_csr[interior, :].tocsc()[:, bound_idx].dot(bvals)).ravel()
            try:
                sol = _solve_linear(lap_csr[interior, :].tocsc()[:, interior], rhs)
            except np.linalg.LinAlgError as exc:
                raise PhysarumDisconnected(str(exc)) from exc
            for i, k in enumerate(interior):
                pressures[nodes[k]] = sol[i]
    else:
        raise ValueError(f"unknown pressure mode {mode!r}")
    return pressures


def edge_fluxes(p: Problem, state: PhysarumState, costs: np.ndarray) -> np.ndarray:
    """Q_e = (D_e / C_e) * (P_u - P_v) on alive edges, 0 elsewhere."""
    q = np.zeros(len(p.edges))
    for idx, (u, v, _) in enumerate(p.edges):
        if state.alive[idx]:
            q[idx] = state.conductivity[idx] / costs[idx] * (
                state.pressures[u] - state.pressures[v])
    return q


def physarum_step(p: Problem, state: PhysarumState, params: PhysarumParams,
                  costs: np.ndarray | None = None) -> PhysarumState:
    """One conductivity update D += alpha|Q| - mu D plus threshold cutting.

    Starved edges (|Q| < epsilon) are cut unless that would separate a
    terminal from the alive subgraph (when the guard is on).
    """
    costs = _clamped_costs(p) if costs is None else costs
    q = edge_fluxes(p, state, costs)
    d = state.conductivity + params.alpha * np.abs(q) - params.mu * state.conductivity
    d = np.maximum(d, 0.0)
    alive = state.alive.copy()
    candidates = [i for i in range(len(p.edges))
                  if alive[i] and abs(q[i]) < params.epsilon]
    if candidates:
        if not params.cut_guard:
            alive[candidates] = False
        else:
            trial = alive.copy()
            trial[candidates] = False
            if _terminals_connected(p, trial):
                alive = trial
            else:
                for i in candidates:
                    alive[i] = False
                    if not _terminals_connected(p, alive):
                        alive[i] = True
    d[~alive] = 0.0
    d[alive] = np.maximum(d[alive], MIN_ALIVE_CONDUCTIVITY)
    return PhysarumState(conductivity=d, alive=alive, pressures=state.pressures)


def _clamped_costs(p: Problem) -> np.ndarray:
    return np.maximum(np.array([c for _, _, c in p.edges]), MIN_COST)


def run_dynamics(p: Problem, params: PhysarumParams, rng: np.random.Generator,
                 trace: list | None = None, init_index: int = 0
                 ) -> tuple[PhysarumState, np.ndarray]:
    """One initialization: k iterations of select/solve/update/cut.

    Returns (final state, candidate edge mask) where the candidate follows
    params.candidate_mode.
    """
    costs = _clamped_costs(p)
    n_edges = len(p.edges)
    state = PhysarumState(conductivity=np.ones(n_edges),
                          alive=np.ones(n_edges, dtype=bool),
                          pressures=np.zeros(p.n_nodes))
    union = np.zeros(n_edges, dtype=bool)
    for it in range(params.iterations):
        sources, sinks = select_sources_sinks(p.terminals, rng)
        pressures = physarum_pressures(p, state.conductivity, costs, sources,
                                       sinks, params.i0, state.alive,
                                       params.pressure_mode)
        state = replace(state, pressures=pressures)
        state = physarum_step(p, state, params, costs)
        union |= state.alive
        if trace is not None:
            trace.append({"initialization": init_index, "iteration": it,
                          "alive_edges": int(state.alive.sum()),
                          "total_conductivity": float(state.conductivity.sum())})
    candidate = state.alive if params.candidate_mode == "final" else union
    return state, candidate


def finalize_candidate(p: Problem, candidate: np.ndarray) -> SteinerTree:
    """Survivor edges -> valid tree: keep terminal components, MST, prune."""
    edges = [(u, v) for keep, (u, v, _) in zip(candidate, p.edges) if keep]
    node_set = {i for e in edges for i in e} | set(p.terminals)
    comps = connected_components(node_set, edges)
    with_terminals = [c for c in comps if c & p.terminal_set]
    keep_nodes = set().union(*with_terminals) if with_terminals else set(p.terminals)
    kept_edges = [(u, v) for u, v in edges if u in keep_nodes and v in keep_nodes]
    return rebuild_tree(p, kept_edges)


def solve_physarum(p: Problem, params: PhysarumParams = PhysarumParams(),
                   trace: list | None = None) -> SteinerTree:
    """Best finalized tree over `initializations` independent dynamics runs.

    Initialization i uses a child seed derived from (seed, i), so shorter
    and longer runs share a prefix of identical initializations.
    """
    if len(p.terminals) < 2:
        return SteinerTree.from_edges(p, [])
    best: SteinerTree | None = None
    for i in range(params.initializations):
        rng = np.random.default_rng(derive_seed(params.seed, "physarum-init", i))
        try:
            _, candidate = run_dynamics(p, params, rng, trace=trace, init_index=i)
        except PhysarumDisconnected:
            continue
        tree = finalize_candidate(p, candidate)
        if best is None or (tree.cost, tree.n_edges, tree.edges) < \
                (best.cost, best.n_edges, best.edges):
            best = tree
    if best is None:
        # all initializations failed (only possible without the guard)
        best = rebuild_tree(p, [])
    return best
