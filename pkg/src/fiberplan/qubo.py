"""Depth-indexed QUBO encoding of the Steiner tree problem.

Tree membership is encoded by one-hot depth slots per node, directed
depth-indexed edge variables, and per-edge usage variables; four penalty
families enforce the tree shape and the objective charges edge costs (see
docs/qubo-encoding.md for the exact term list). Sampling is classical:
an exhaustive minimizer for tiny instances and a single-bit-flip annealer
otherwise, with a component repair pass to guarantee a valid tree.
"""

from __future__ import annotations

import math
import warnings
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import Edge, Problem, SteinerTree, canonical_edge, rebuild_tree
from .partition import merge_sph
from .seeds import derive_seed

__all__ = [
    "Qubo",
    "QuboBuildParams",
    "QuboOutcome",
    "qubit_count",
    "build_stp_qubo",
    "encoding_var_count",
    "qubo_energy",
    "exhaustive_qubo_min",
    "sample_qubo_sa",
    "decode_assignment",
    "repair_components",
    "run_qubo",
    "solve_qubo",
    "export_qubo_coordinates",
    "parse_assignment_file",
]

EXHAUSTIVE_GUARD = 24
ABSENT = -1  # depth slot meaning "node not in the tree"


@dataclass(frozen=True)
class Qubo:
    """Binary quadratic objective with a semantic tag per variable.

    Tags: ('root', t), ('node_depth', v, d) with d = -1 for the absent slot,
    ('edge_depth', u, v, d) for the directed edge u(d-1) -> v(d), and
    ('edge_used', u, v). energy(x) includes the constant offset so valid
    tree encodings score exactly cost_b * tree cost.
    """

    n_vars: int
    linear: tuple[float, ...]
    quadratic: dict[tuple[int, int], float]
    offset: float
    var_map: tuple[tuple, ...]

    @property
    def index_of(self) -> dict[tuple, int]:
        return {tag: i for i, tag in enumerate(self.var_map)}


@dataclass(frozen=True)
class QuboBuildParams:
    max_depth: int | None = None
    penalty_a: float | None = None
    cost_b: float = 1.0


@dataclass(frozen=True)
class QuboOutcome:
    tree: SteinerTree
    energy: float
    violations: tuple[str, ...]
    n_vars: int
    raw_edges: tuple[Edge, ...]


def qubit_count(v: int, e: int) -> int:
    """Logical qubit demand of the reference depth-indexed formulation."""
    if v < 0 or e < 0:
        raise ValueError("counts must be non-negative")
    return v * (math.floor(v + 1) + 4 + 2 * e) // 2 + e


def _bfs_hops(p: Problem, start: int) -> dict[int, int]:
    dist = {start: 0}
    queue = deque([start])
    while queue:
        x = queue.popleft()
        for nbr, _ in p.adjacency[x]:
            if nbr not in dist:
                dist[nbr] = dist[x] + 1
                queue.append(nbr)
    return dist


def default_max_depth(p: Problem) -> int:
    """min(|V|-1, 2 * diameter estimate) via a double BFS sweep."""
    first = _bfs_hops(p, p.terminals[0])
    far = max(sorted(first), key=lambda n: (first[n], -n))
    ecc = max(_bfs_hops(p, far).values())
    return max(1, min(p.n_nodes - 1, 2 * ecc))


def _min_depths(p: Problem) -> list[int]:
    """Lower bound on any node's tree depth: hops to the nearest terminal."""
    best = [math.inf] * p.n_nodes
    for t in p.terminals:
        for n, d in _bfs_hops(p, t).items():
            best[n] = min(best[n], d)
    return [int(b) for b in best]


def required_depth(p: Problem) -> int:
    """Smallest depth bound with which every terminal can be reached."""
    return min(max(_bfs_hops(p, r)[t] for t in p.terminals) for r in p.terminals)


def _enumerate_variables(p: Problem, max_depth: int) -> list[tuple]:
    tags: list[tuple] = []
    dmin = _min_depths(p)
    for t in p.terminals:
        tags.append(("root", t))
    for v in range(p.n_nodes):
        lo = max(1, dmin[v])
        for d in range(lo, max_depth + 1):
            tags.append(("node_depth", v, d))
        if v not in p.terminal_set:
            tags.append(("node_depth", v, ABSENT))
    for u, v, _ in p.edges:
        for d in range(1, max_depth + 1):
            for a, b in ((u, v), (v, u)):
                if _slot_exists(p, dmin, a, d - 1, max_depth) and \
                        _slot_exists(p, dmin, b, d, max_depth):
                    tags.append(("edge_depth", a, b, d))
    for u, v, _ in p.edges:
        tags.append(("edge_used", u, v))
    return tags


def _slot_exists(p: Problem, dmin: list[int], node: int, depth: int,
                 max_depth: int) -> bool:
    if depth == 0:
        return node in p.terminal_set
    return max(1, dmin[node]) <= depth <= max_depth


def encoding_var_count(p: Problem, max_depth: int) -> int:
    """Closed-form size of the encoding (must match build_stp_qubo)."""
    dmin = _min_depths(p)
    count = len(p.terminals)
    for v in range(p.n_nodes):
        count += max(0, max_depth - max(1, dmin[v]) + 1)
        if v not in p.terminal_set:
            count += 1
    for u, v, _ in p.edges:
        for d in range(1, max_depth + 1):
            for a, b in ((u, v), (v, u)):
                if _slot_exists(p, dmin, a, d - 1, max_depth) and \
                        _slot_exists(p, dmin, b, d, max_depth):
                    count += 1
    count += len(p.edges)
    return count


class _Builder:
    def __init__(self, n_vars: int):
        self.linear = [0.0] * n_vars
        self.quadratic: dict[tuple[int, int], float] = {}
        self.offset = 0.0

    def add_quad(self, i: int, j: int, w: float) -> None:
        if i == j:
            self.linear[i] += w
            return
        key = (i, j) if i < j else (j, i)
        self.quadratic[key] = self.quadratic.get(key, 0.0) + w

    def add_square(self, terms: Sequence[tuple[int, float]], const: float,
                   weight: float) -> None:
        """weight * (sum coef*x + const)^2 expanded over binary variables."""
        for a, (i, ci) in enumerate(terms):
            self.linear[i] += weight * (ci * ci + 2.0 * const * ci)
            for j, cj in terms[a + 1:]:
                self.add_quad(i, j, weight * 2.0 * ci * cj)
        self.offset += weight * const * const


def build_stp_qubo(p: Problem, params: QuboBuildParams = QuboBuildParams()
                   ) -> Qubo:
    """Emit the penalty polynomial for the depth-indexed tree encoding.

    Constraints: exactly one root among the terminals; one-hot depth per
    node (terminals forced in, non-terminals get an absent slot); each used
    directed edge at depth d implies its tail at d-1 and head at d; every
    node at depth d >= 1 has exactly one incoming depth-d edge; edge-used
    variables tie to the directed choices and charge the edge costs.
    """
    max_depth = params.max_depth if params.max_depth is not None else default_max_depth(p)
    if max_depth < 1:
        raise ValueError("max_depth must be >= 1")
    need = required_depth(p)
    if max_depth < need:
        warnings.warn(f"max_depth={max_depth} cannot span the terminals "
                      f"(needs {need}); the ground state will violate constraints",
                      stacklevel=2)
    cost_b = params.cost_b
    max_edge = max(c for _, _, c in p.edges) if p.edges else 0.0
    penalty_a = (params.penalty_a if params.penalty_a is not None
                 else 2.0 * cost_b * sum(c for _, _, c in p.edges) + 1.0)
    if penalty_a <= cost_b * max_edge:
        raise ValueError("penalty_a must exceed cost_b * max edge cost")

    tags = _enumerate_variables(p, max_depth)
    index = {tag: i for i, tag in enumerate(tags)}
    b = _Builder(len(tags))

    # (1) exactly one root
    b.add_square([(index[("root", t)], 1.0) for t in p.terminals], -1.0, penalty_a)

    # (2) one-hot depth per node
    for v in range(p.n_nodes):
        slots = [(index[tag], 1.0) for tag in tags_for_node(tags, v)]
        b.add_square(slots, -1.0, penalty_a)

    # (3) directed edge at depth d implies endpoint depths
    for tag in tags:
        if tag[0] != "edge_depth":
            continue
        _, a, v, d = tag
        y = index[tag]
        tail = index[("root", a)] if d == 1 else index[("node_depth", a, d - 1)]
        head = index[("node_depth", v, d)]
        b.linear[y] += 2.0 * penalty_a
        b.add_quad(y, tail, -penalty_a)
        b.add_quad(y, head, -penalty_a)

    # (4) exactly one incoming lower-depth edge per included node
    incoming: dict[tuple[int, int], list[int]] = {}
    for tag in tags:
        if tag[0] == "edge_depth":
            _, _, v, d = tag
            incoming.setdefault((v, d), []).append(index[tag])
    for v in range(p.n_nodes):
        for d in range(1, max_depth + 1):
            node_tag = ("node_depth", v, d)
            if node_tag not in index:
                continue
            terms = [(y, 1.0) for y in incoming.get((v, d), [])]
            terms.append((index[node_tag], -1.0))
            b.add_square(terms, 0.0, penalty_a)

    # (5) edge-used linkage plus the cost objective
    for u, v, c in p.edges:
        z = index[("edge_used", u, v)]
        ys = [i for tag, i in index.items()
              if tag[0] == "edge_depth" and {tag[1], tag[2]} == {u, v}]
        b.add_square([(y, 1.0) for y in sorted(ys)] + [(z, -1.0)], 0.0, penalty_a)
        b.linear[z] += cost_b * c

    return Qubo(n_vars=len(tags), linear=tuple(b.linear),
                quadratic=dict(sorted(b.quadratic.items())), offset=b.offset,
                var_map=tuple(tags))


def tags_for_node(tags: Iterable[tuple], v: int) -> list[tuple]:
    """All one-hot slots of node v: root (terminals), depths, absent."""
    out = []
    for tag in tags:
        if tag[0] == "root" and tag[1] == v:
            out.append(tag)
        elif tag[0] == "node_depth" and tag[1] == v:
            out.append(tag)
    return out


def qubo_energy(q: Qubo, assignment: Sequence[int]) -> float:
    if len(assignment) != q.n_vars:
        raise ValueError("assignment length mismatch")
    x = np.asarray(assignment, dtype=float)
    total = q.offset + float(np.dot(q.linear, x))
    for (i, j), w in q.quadratic.items():
        total += w * x[i] * x[j]
    return total


# ------------------------------------------------------------------ samplers

def exhaustive_qubo_min(q: Qubo) -> tuple[tuple[int, ...], float]:
    """Global minimum by enumerating all 2^n assignments (n <= 24).

    Ties resolve to the lexicographically smallest assignment, reading
    variable 0 as the most significant position.
    """
    n = q.n_vars
    if n > EXHAUSTIVE_GUARD:
        raise ValueError(f"exhaustive guard: {n} variables > {EXHAUSTIVE_GUARD}")
    h = np.array(q.linear)
    jmat = np.zeros((n, n))
    for (i, j), w in q.quadratic.items():
        jmat[i, j] = w
    best_energy = math.inf
    best_k = -1
    chunk = 1 << 16
    shifts = np.arange(n - 1, -1, -1, dtype=np.uint64)
    for start in range(0, 1 << n, chunk):
        ks = np.arange(start, min(start + chunk, 1 << n), dtype=np.uint64)
        bits = ((ks[:, None] >> shifts[None, :]) & 1).astype(float)
        energies = bits @ h + np.einsum("ij,ij->i", bits @ jmat, bits)
        idx = int(np.argmin(energies))
        if energies[idx] < best_energy:
            best_energy = float(energies[idx])
            best_k = int(ks[idx])
    assignment = tuple((best_k >> (n - 1 - i)) & 1 for i in range(n))
    return assignment, best_energy + q.offset


def sample_qubo_sa(q: Qubo, sweeps: int = 2000, restarts: int = 10,
                   beta_schedule: tuple[float, float] = (0.1, 10.0),
                   seed: int = 0) -> tuple[tuple[int, ...], float]:
    """Single-bit-flip Metropolis annealing with incremental energy deltas.

    Runs `restarts` independent chains (seeds derived from `seed`) and
    returns the best assignment ever seen; the reported energy is re-derived
    from the assignment, so it matches qubo_energy exactly.
    """
    n = q.n_vars
    h = np.array(q.linear)
    neighbors: list[list[tuple[int, float]]] = [[] for _ in range(n)]
    for (i, j), w in q.quadratic.items():
        neighbors[i].append((j, w))
        neighbors[j].append((i, w))
    b0, b1 = beta_schedule
    betas = b0 * (b1 / b0) ** (np.arange(sweeps) / max(1, sweeps - 1))
    best_x: tuple[int, ...] | None = None
    best_energy = math.inf
    for r in range(restarts):
        rng = np.random.default_rng(derive_seed(seed, "qubo-restart", r))
        x = rng.integers(0, 2, size=n).astype(np.int8)
        field = h.copy()
        for i in range(n):
            if x[i]:
                for j, w in neighbors[i]:
                    field[j] += w
        energy = qubo_energy(q, x)
        if energy < best_energy:
            best_energy, best_x = energy, tuple(int(v) for v in x)
        for beta in betas:
            for i in range(n):
                delta = (1 - 2 * int(x[i])) * field[i]
                if delta <= 0 or rng.random() < math.exp(-beta * delta):
                    sign = 1 - 2 * int(x[i])
                    x[i] = 1 - x[i]
                    energy += delta
                    for j, w in neighbors[i]:
                        field[j] += sign * w
                    if energy < best_energy - 1e-12:
                        best_energy = qubo_energy(q, x)
                        best_x = tuple(int(v) for v in x)
    return best_x, best_energy


# ------------------------------------------------------------------- decoding

def decode_assignment(q: Qubo, assignment: Sequence[int], p: Problem
                      ) -> tuple[list[Edge], list[str]]:
    """Extract used edges and list every violated tree constraint."""
    if len(assignment) != q.n_vars:
        raise ValueError("assignment length mismatch")
    value = {tag: int(assignment[i]) for i, tag in enumerate(q.var_map)}
    violations: list[str] = []

    root_count = sum(v for tag, v in value.items() if tag[0] == "root")
    if root_count != 1:
        violations.append(f"root count {root_count}")

    depth_of: dict[int, int | None] = {}
    for v in range(p.n_nodes):
        slots = [(tag, val) for tag, val in value.items()
                 if (tag[0] == "root" and tag[1] == v)
                 or (tag[0] == "node_depth" and tag[1] == v)]
        active = [tag for tag, val in slots if val]
        if len(active) != 1:
            violations.append(f"depth one-hot violated at node {v}")
            depth_of[v] = None
        else:
            tag = active[0]
            depth_of[v] = 0 if tag[0] == "root" else (
                None if tag[2] == ABSENT else tag[2])

    for tag, val in value.items():
        if tag[0] != "edge_depth" or not val:
            continue
        _, a, bnode, d = tag
        if depth_of.get(a) != d - 1 or depth_of.get(bnode) != d:
            violations.append(f"edge-depth inconsistency on ({a},{bnode}) depth {d}")

    for u, v, _ in p.edges:
        z = value[("edge_used", u, v)]
        ys = sum(val for tag, val in value.items()
                 if tag[0] == "edge_depth" and {tag[1], tag[2]} == {u, v})
        if ys != z:
            violations.append(f"edge use mismatch on ({u},{v})")

    for v in range(p.n_nodes):
        d = depth_of.get(v)
        if d is None or d == 0:
            continue
        incoming = sum(val for tag, val in value.items()
                       if tag[0] == "edge_depth" and tag[2] == v and tag[3] == d)
        if incoming != 1:
            violations.append(f"missing incoming edge at node {v}" if incoming == 0
                              else f"{incoming} incoming edges at node {v}")

    edges = [(u, v) for u, v, _ in p.edges if value[("edge_used", u, v)]]
    return edges, violations


def repair_components(edges: Iterable[Edge], p: Problem) -> SteinerTree:
    """Merge decoded fragments and uncovered terminals into a valid tree."""
    edge_set = {canonical_edge(u, v) for u, v in edges}
    covered = {i for e in edge_set for i in e}
    pieces: list = [sorted(edge_set)] if edge_set else []
    for t in p.terminals:
        if t not in covered:
            pieces.append(SteinerTree(edges=(), nodes=frozenset({t}), cost=0.0))
    if not pieces:
        return SteinerTree.from_edges(p, [])
    merged = merge_sph(p, pieces)
    return rebuild_tree(p, merged.edges)


# ------------------------------------------------------------------ end to end

def run_qubo(p: Problem, build: QuboBuildParams = QuboBuildParams(),
             method: str = "sa", sweeps: int = 2000, restarts: int = 10,
             beta_schedule: tuple[float, float] = (0.1, 10.0),
             seed: int = 0) -> QuboOutcome:
    """build -> sample -> decode -> repair, keeping the raw diagnostics."""
    q = build_stp_qubo(p, build)
    if method == "exhaustive":
        assignment, energy = exhaustive_qubo_min(q)
    elif method == "sa":
        assignment, energy = sample_qubo_sa(q, sweeps=sweeps, restarts=restarts,
                                            beta_schedule=beta_schedule, seed=seed)
    else:
        raise ValueError(f"unknown sampling method {method!r}")
    raw_edges, violations = decode_assignment(q, assignment, p)
    tree = repair_components(raw_edges, p)
    return QuboOutcome(tree=tree, energy=energy, violations=tuple(violations),
                       n_vars=q.n_vars, raw_edges=tuple(sorted(raw_edges)))


def solve_qubo(p: Problem, build: QuboBuildParams = QuboBuildParams(),
               method: str = "sa", sweeps: int = 2000, restarts: int = 10,
               beta_schedule: tuple[float, float] = (0.1, 10.0),
               seed: int = 0) -> SteinerTree:
    return run_qubo(p, build, method=method, sweeps=sweeps, restarts=restarts,
                    beta_schedule=beta_schedule, seed=seed).tree


# ------------------------------------------------------------------- exchange

def export_qubo_coordinates(q: Qubo) -> bytes:
    """Plain-text coordinate list: `i j value` per line, linear as i == j."""
    lines = [f"# offset {q.offset!r}"]
    for i, w in enumerate(q.linear):
        if w != 0.0:
            lines.append(f"{i} {i} {w!r}")
    for (i, j), w in sorted(q.quadratic.items()):
        if w != 0.0:
            lines.append(f"{i} {j} {w!r}")
    return ("\n".join(lines) + "\n").encode("utf-8")


def parse_assignment_file(data: bytes) -> list[tuple[int, ...]]:
    """One assignment bitstring per line, e.g. `0110100`."""
    out = []
    for ln, line in enumerate(data.decode("utf-8").splitlines()):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if set(line) - {"0", "1"}:
            raise ValueError(f"line {ln + 1}: not a bitstring")
        out.append(tuple(int(c) for c in line))
    return out
