"""Synthetic benchmark instances.

Three families mirror the structure of typical planning inputs: `clustered`
(dense blobs joined by sparse bridges, easy to partition), `meshed` (highly
connected random geometric graphs) and `grid` (pixel-style lattices with a
weight field).
"""

from __future__ import annotations

import math

import numpy as np

from .core import (
    KIND_DISTRIBUTOR,
    KIND_TERMINAL,
    KIND_WAYPOINT,
    NodeRecord,
    Problem,
    canonical_edge,
    connected_components,
    validate_problem,
)
from .simplify import _triangulation_edges

__all__ = ["generate_synthetic_instance", "bridge_edges"]


def _weight_field(rng: np.random.Generator, points: np.ndarray) -> np.ndarray:
    """Smooth weights in [0.05, 1]: a few random Gaussian bumps."""
    lo = points.min(axis=0)
    hi = points.max(axis=0)
    span = np.maximum(hi - lo, 1e-9)
    centers = lo + rng.random((3, 2)) * span
    scale = float(span.max()) / 3.0
    w = np.zeros(len(points))
    for c in centers:
        d2 = ((points - c) ** 2).sum(axis=1)
        w += np.exp(-d2 / (2.0 * scale ** 2))
    w = w / w.max() if w.max() > 0 else np.full(len(points), 0.5)
    return 0.05 + 0.95 * w


def _records(points, weights, terminals, distributors):
    term = set(terminals)
    dist = set(distributors)
    recs = []
    for i, (x, y) in enumerate(points):
        kind = (KIND_DISTRIBUTOR if i in dist
                else KIND_TERMINAL if i in term else KIND_WAYPOINT)
        w = 0.0 if i in term else float(weights[i])
        recs.append(NodeRecord(float(x), float(y), w, kind))
    return recs


def _pick_terminals(rng, groups, fraction):
    """At least one terminal per node group."""
    terminals = []
    for members in groups:
        count = max(1, round(fraction * len(members)))
        picks = rng.choice(len(members), size=min(count, len(members)),
                           replace=False)
        terminals.extend(members[int(i)] for i in picks)
    return sorted(set(terminals))


def _clustered(rng, n_nodes, clusters, terminal_fraction):
    sizes = [n_nodes // clusters] * clusters
    for i in range(n_nodes - sum(sizes)):
        sizes[i] += 1
    points = []
    groups = []
    for ci, size in enumerate(sizes):
        center = np.array([12.0 * ci, 4.0 * (ci % 2)])
        start = len(points)
        pts = center + rng.normal(0.0, 1.5, size=(size, 2))
        points.extend(pts)
        groups.append(list(range(start, start + size)))
    points = np.array(points)
    edges: set[tuple[int, int]] = set()
    for members in groups:
        local = _triangulation_edges(points[members])
        edges.update(canonical_edge(members[a], members[b]) for a, b in local)
    # exactly one bridge between consecutive blobs
    for ci in range(clusters - 1):
        a_nodes, b_nodes = groups[ci], groups[ci + 1]
        d = np.linalg.norm(points[a_nodes][:, None, :]
                           - points[b_nodes][None, :, :], axis=2)
        ai, bi = np.unravel_index(int(np.argmin(d)), d.shape)
        edges.add(canonical_edge(a_nodes[int(ai)], b_nodes[int(bi)]))
    terminals = _pick_terminals(rng, groups, terminal_fraction)
    return points, edges, terminals


def _meshed(rng, n_nodes, terminal_fraction):
    side = math.sqrt(n_nodes)
    points = rng.random((n_nodes, 2)) * side
    radius = 1.6
    edges: set[tuple[int, int]] = set()
    for i in range(n_nodes):
        d = np.linalg.norm(points - points[i], axis=1)
        for j in np.nonzero((d <= radius) & (np.arange(n_nodes) > i))[0]:
            edges.add((i, int(j)))
    comps = connected_components(range(n_nodes), edges)
    while len(comps) > 1:
        comps.sort(key=min)
        base = sorted(comps[0])
        rest = sorted(set(range(n_nodes)) - set(base))
        d = np.linalg.norm(points[base][:, None, :] - points[rest][None, :, :],
                           axis=2)
        ai, bi = np.unravel_index(int(np.argmin(d)), d.shape)
        edges.add(canonical_edge(base[int(ai)], rest[int(bi)]))
        comps = connected_components(range(n_nodes), edges)
    terminals = _pick_terminals(rng, [list(range(n_nodes))], terminal_fraction)
    if len(terminals) < 2:
        terminals = [0, n_nodes - 1]
    return points, edges, terminals


def _grid(rng, width, height, terminal_fraction):
    points = np.array([(x, y) for y in range(height) for x in range(width)],
                      dtype=float)
    n = width * height
    weights = _weight_field(rng, points)
    corners = [0, width - 1, (height - 1) * width, n - 1]
    terminals = sorted(set(corners))
    extra = max(0, round(terminal_fraction * n) - len(terminals))
    if extra > 0:
        pool = [i for i in range(n) if i not in terminals]
        picks = rng.choice(len(pool), size=min(extra, len(pool)), replace=False)
        terminals = sorted(set(terminals) | {pool[int(i)] for i in picks})
    term = set(terminals)
    node_w = np.array([0.0 if i in term else weights[i] for i in range(n)])
    edges = set()
    for y in range(height):
        for x in range(width):
            i = y * width + x
            if x < width - 1:
                edges.add((i, i + 1))
            if y < height - 1:
                edges.add((i, i + width))
    weighted = [(u, v, (node_w[u] + node_w[v]) / 2.0) for u, v in sorted(edges)]
    recs = _records(points, weights, terminals, [terminals[0]])
    p = Problem.build(recs, weighted, terminals, [terminals[0]],
                      name=f"grid-{width}x{height}")
    assert validate_problem(p) == []
    return p


def generate_synthetic_instance(kind: str, *, seed: int = 0, n_nodes: int = 120,
                                clusters: int = 3, width: int = 8, height: int = 8,
                                terminal_fraction: float = 0.15) -> Problem:
    """Deterministic synthetic Problem of the requested family."""
    rng = np.random.default_rng(seed)
    if kind == "grid":
        return _grid(rng, width, height, terminal_fraction)
    if kind == "clustered":
        points, edges, terminals = _clustered(rng, n_nodes, clusters,
                                              terminal_fraction)
        name = f"clustered-{clusters}x{n_nodes}"
    elif kind == "meshed":
        points, edges, terminals = _meshed(rng, n_nodes, terminal_fraction)
        name = f"meshed-{n_nodes}"
    else:
        raise ValueError(f"unknown instance kind {kind!r}")
    weights = _weight_field(rng, points)
    weighted = [(u, v, float(np.linalg.norm(points[u] - points[v])))
                for u, v in sorted(edges)]
    recs = _records(points, weights, terminals, [terminals[0]])
    p = Problem.build(recs, weighted, terminals, [terminals[0]],
                      name=f"{name}-s{seed}")
    problems = validate_problem(p)
    assert problems == [], problems
    return p


def bridge_edges(p: Problem, clusters: int, n_nodes: int) -> list[tuple[int, int]]:
    """The inter-blob edges of a `clustered` instance (blob = index range)."""
    sizes = [n_nodes // clusters] * clusters
    for i in range(n_nodes - sum(sizes)):
        sizes[i] += 1
    bounds = np.cumsum([0] + sizes)

    def blob(n):
        return int(np.searchsorted(bounds, n, side="right") - 1)

    return [(u, v) for u, v, _ in p.edges if blob(u) != blob(v)]
