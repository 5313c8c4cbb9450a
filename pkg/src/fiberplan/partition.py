"""Graph partitioning and per-part solution merging.

Partitioners split a Problem into connected, terminal-covering clusters
(Greedy Modularity, Spectral Clustering, Voronoi regions); mergers join the
per-cluster Steiner trees back into one tree on the full graph.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg

from .core import (
    Edge,
    Problem,
    SteinerTree,
    canonical_edge,
    connected_components,
    minimum_spanning_tree,
    prune_tree,
    single_source_distances,
    single_source_paths,
    validate_problem,
)

__all__ = [
    "Partition",
    "Subproblem",
    "modularity",
    "greedy_modularity_partition",
    "spectral_partition",
    "eigengap_k",
    "educated_guess_k",
    "voronoi_partition",
    "split_subproblems",
    "merge_sph",
    "merge_center_of_mass",
]

EIGENGAP_CAP = 32


@dataclass(frozen=True)
class Partition:
    """Assignment of every node to one of k clusters (ids 0..k-1)."""

    assignment: tuple[int, ...]
    k: int

    def cluster_nodes(self, cluster: int) -> list[int]:
        return [i for i, c in enumerate(self.assignment) if c == cluster]

    def clusters(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in range(self.k)]
        for i, c in enumerate(self.assignment):
            out[c].append(i)
        return out


@dataclass(frozen=True)
class Subproblem:
    """Induced subgraph of one cluster, reindexed locally."""

    problem: Problem
    back_map: tuple[int, ...]


def _relabel_dense(labels: Sequence[int]) -> tuple[tuple[int, ...], int]:
    """Renumber cluster ids to 0..k-1 ordered by smallest member node."""
    first_seen: dict[int, int] = {}
    for node, lab in enumerate(labels):
        first_seen.setdefault(lab, node)
    order = sorted(first_seen, key=lambda lab: first_seen[lab])
    remap = {lab: i for i, lab in enumerate(order)}
    return tuple(remap[lab] for lab in labels), len(order)


def repair_partition(p: Problem, labels: Sequence[int]) -> Partition:
    """Enforce the cluster invariants: connected and terminal-covering.

    Disconnected clusters are split into their components; clusters without
    a terminal are merged into the neighboring cluster with the largest
    edge-cut to them.
    """
    labels = list(labels)
    # split disconnected clusters
    next_label = max(labels) + 1
    for lab in sorted(set(labels)):
        members = [i for i, x in enumerate(labels) if x == lab]
        sub_edges = [(u, v) for u, v, _ in p.edges
                     if labels[u] == lab and labels[v] == lab]
        comps = connected_components(members, sub_edges)
        for comp in comps[1:]:
            for n in comp:
                labels[n] = next_label
            next_label += 1
    # merge terminal-free clusters into the neighbor with the largest cut
    while True:
        with_terminal = {labels[t] for t in p.terminals}
        orphans = sorted(set(labels) - with_terminal)
        if not orphans:
            break
        lab = orphans[0]
        cut: dict[int, int] = {}
        for u, v, _ in p.edges:
            lu, lv = labels[u], labels[v]
            if lu == lab and lv != lab:
                cut[lv] = cut.get(lv, 0) + 1
            elif lv == lab and lu != lab:
                cut[lu] = cut.get(lu, 0) + 1
        target = max(sorted(cut), key=lambda other: (cut[other], -other))
        for i, x in enumerate(labels):
            if x == lab:
                labels[i] = target
    dense, k = _relabel_dense(labels)
    return Partition(assignment=dense, k=k)


# ----------------------------------------------------------------- modularity

def modularity(p: Problem, partition: Partition | Sequence[int]) -> float:
    """Group-fraction modularity M = sum_i (e_ii - (sum_j e_ij)^2).

    e_ij is the fraction of edges joining cluster i to cluster j; an
    intra-cluster edge counts once toward e_ii, an inter-cluster edge
    contributes half to e_ij and half to e_ji. Edge weights are ignored.
    """
    labels = partition.assignment if isinstance(partition, Partition) else tuple(partition)
    m = len(p.edges)
    clusters = sorted(set(labels))
    intra = {c: 0.0 for c in clusters}
    total = {c: 0.0 for c in clusters}
    for u, v, _ in p.edges:
        lu, lv = labels[u], labels[v]
        if lu == lv:
            intra[lu] += 1.0 / m
            total[lu] += 1.0 / m
        else:
            total[lu] += 0.5 / m
            total[lv] += 0.5 / m
    return float(sum(intra[c] - total[c] ** 2 for c in clusters))


def greedy_modularity_partition(p: Problem) -> Partition:
    """Agglomerative modularity maximization from singleton communities.

    Repeatedly joins the connected community pair with the largest modularity
    gain until one community remains, then returns the trajectory state with
    the highest modularity (clusters repaired afterwards).
    """
    m = len(p.edges)
    # community id = smallest member node; e holds symmetric half-fractions
    e: dict[int, dict[int, float]] = {i: {} for i in range(p.n_nodes)}
    a: dict[int, float] = {i: 0.0 for i in range(p.n_nodes)}
    for u, v, _ in p.edges:
        e[u][v] = e[u].get(v, 0.0) + 0.5 / m
        e[v][u] = e[v].get(u, 0.0) + 0.5 / m
        a[u] += 0.5 / m
        a[v] += 0.5 / m

    current_m = float(-sum(x * x for x in a.values()))
    best_m, best_step = current_m, 0
    merges: list[tuple[int, int]] = []
    while len(e) > 1:
        best_gain, best_pair = -math.inf, None
        for i in sorted(e):
            for j in sorted(e[i]):
                if i < j:
                    gain = 2.0 * (e[i][j] - a[i] * a[j])
                    if gain > best_gain:
                        best_gain, best_pair = gain, (i, j)
        assert best_pair is not None  # connected problem always has a joinable pair
        i, j = best_pair
        merges.append((i, j))
        # fold community j into i
        e[i].pop(j)
        e[j].pop(i)
        for k, w in sorted(e[j].items()):
            e[i][k] = e[i].get(k, 0.0) + w
            e[k][i] = e[k].get(i, 0.0) + w
            del e[k][j]
        del e[j]
        a[i] += a.pop(j)
        current_m += best_gain
        if current_m > best_m + 1e-15:
            best_m, best_step = current_m, len(merges)

    labels = list(range(p.n_nodes))
    union = {i: i for i in range(p.n_nodes)}
    for i, j in merges[:best_step]:
        for n in range(p.n_nodes):
            if union[n] == j:
                union[n] = i
    labels = [union[n] for n in range(p.n_nodes)]
    return repair_partition(p, labels)


# ------------------------------------------------------------------- spectral

def educated_guess_k(m: int) -> int:
    """Cluster-count rule of thumb from the terminal count: ceil(m/7) + 1."""
    if m < 1:
        raise ValueError("terminal count must be >= 1")
    return math.ceil(m / 7) + 1


def eigengap_k(spectrum: Sequence[float]) -> int:
    """k at the largest jump in the ascending eigenvalue sequence.

    Considers positions 1..min(n-1, 32); ties resolve to the smaller k.
    """
    vals = list(spectrum)
    if len(vals) < 2:
        raise ValueError("need at least two eigenvalues")
    cap = min(len(vals) - 1, EIGENGAP_CAP)
    best_k, best_gap = 1, -math.inf
    for i in range(1, cap + 1):
        gap = vals[i] - vals[i - 1]
        if gap > best_gap + 1e-12:
            best_k, best_gap = i, gap
    return best_k


def _affinity(p: Problem) -> np.ndarray:
    """Edge costs mapped to similarities: w = exp(-cost / mean cost)."""
    n = p.n_nodes
    costs = [c for _, _, c in p.edges]
    mean = sum(costs) / len(costs) if costs else 1.0
    w = np.zeros((n, n))
    for u, v, c in p.edges:
        val = 1.0 if mean <= 0 else math.exp(-c / mean)
        w[u, v] = w[v, u] = val
    return w


def random_walk_laplacian_spectrum(p: Problem) -> tuple[np.ndarray, np.ndarray]:
    """Eigenpairs of L_rw = D^-1 (D - W), ascending.

    Solved as the generalized symmetric problem (D - W) v = lambda D v, which
    has the same eigenpairs but is numerically stable.
    """
    w = _affinity(p)
    d = w.sum(axis=1)
    lap = np.diag(d) - w
    vals, vecs = scipy.linalg.eigh(lap, np.diag(d))
    # canonical eigenvector signs so runs are reproducible
    for col in range(vecs.shape[1]):
        pivot = int(np.argmax(np.abs(vecs[:, col])))
        if vecs[pivot, col] < 0:
            vecs[:, col] = -vecs[:, col]
    return vals, vecs


def _kmeans(x: np.ndarray, k: int, rng: np.random.Generator,
            restarts: int = 10, max_iter: int = 100) -> np.ndarray:
    """Plain Lloyd k-means with restarts; returns best-inertia labels."""
    n = x.shape[0]
    best_labels, best_inertia = None, math.inf
    for _ in range(restarts):
        perm = rng.permutation(n)
        centers: list[np.ndarray] = []
        for idx in perm:
            if len(centers) == k:
                break
            if not any(np.array_equal(x[idx], c) for c in centers):
                centers.append(x[idx].copy())
        for idx in perm:  # pad with duplicates if fewer than k distinct rows
            if len(centers) == k:
                break
            centers.append(x[idx].copy())
        centers = np.array(centers)
        labels = np.zeros(n, dtype=int)
        for _ in range(max_iter):
            dist = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
            new_labels = np.argmin(dist, axis=1)
            taken = dist[np.arange(n), new_labels].copy()
            for c in range(k):  # keep every cluster non-empty
                if not np.any(new_labels == c):
                    victim = int(np.argmax(taken))
                    new_labels[victim] = c
                    taken[victim] = -math.inf
            if np.array_equal(new_labels, labels):
                labels = new_labels
                break
            labels = new_labels
            for c in range(k):
                members = x[labels == c]
                if len(members):
                    centers[c] = members.mean(axis=0)
        inertia = float(((x - centers[labels]) ** 2).sum())
        if inertia < best_inertia - 1e-12:
            best_inertia, best_labels = inertia, labels.copy()
    return best_labels


def spectral_partition(p: Problem, k: int | str, *, eig_mode: str = "smallest",
                       seed: int = 0) -> Partition:
    """Normalized spectral clustering on the random-walk Laplacian.

    `k` is an explicit count, "eigengap" or "guess". Embedded rows are
    clustered with seeded k-means (10 restarts, best inertia); the result is
    repaired to connected, terminal-covering clusters.
    """
    vals, vecs = random_walk_laplacian_spectrum(p)
    if k == "eigengap":
        k = eigengap_k(vals)
    elif k in ("guess", "educated_guess"):
        k = min(max(educated_guess_k(len(p.terminals)), 1), p.n_nodes)
    if not isinstance(k, int):
        raise ValueError(f"unsupported k mode {k!r}")
    if not (1 <= k <= p.n_nodes):
        raise ValueError(f"k={k} out of range [1, {p.n_nodes}]")
    if k == 1:
        return repair_partition(p, [0] * p.n_nodes)
    if eig_mode == "smallest":
        embed = vecs[:, :k]
    elif eig_mode == "largest":
        embed = vecs[:, -k:]
    else:
        raise ValueError(f"eig_mode must be smallest or largest, got {eig_mode!r}")
    labels = _kmeans(embed, k, np.random.default_rng(seed))
    return repair_partition(p, labels.tolist())


# -------------------------------------------------------------------- voronoi

def voronoi_partition(p: Problem, k_target: int,
                      node_limit: int | None = None) -> Partition:
    """Voronoi regions around terminals, merged down to k_target clusters.

    Every node is assigned to its nearest terminal by shortest-path distance
    (ties to the lowest terminal index); then the smallest region is
    repeatedly merged with its nearest admissible neighbor while the merged
    size stays within node_limit.
    """
    terminals = list(p.terminals)
    if not (1 <= k_target <= len(terminals)):
        raise ValueError(f"k_target={k_target} must be in [1, {len(terminals)}]")
    limit = node_limit if node_limit is not None else p.n_nodes

    best = [(math.inf, -1)] * p.n_nodes
    for t in terminals:
        dist = single_source_distances(p, t)
        for n, d in dist.items():
            if (d, t) < best[n]:
                best[n] = (d, t)
    labels = [t for _, t in best]

    def region_sizes():
        sizes: dict[int, int] = {}
        for lab in labels:
            sizes[lab] = sizes.get(lab, 0) + 1
        return sizes

    while True:
        sizes = region_sizes()
        if len(sizes) <= k_target:
            break
        # cheapest cut edge between each adjacent region pair
        nearest: dict[tuple[int, int], float] = {}
        for u, v, c in p.edges:
            lu, lv = labels[u], labels[v]
            if lu != lv:
                key = (min(lu, lv), max(lu, lv))
                if c < nearest.get(key, math.inf):
                    nearest[key] = c
        merged = False
        for lab in sorted(sizes, key=lambda x: (sizes[x], x)):
            candidates = []
            for (i, j), c in nearest.items():
                other = j if i == lab else i if j == lab else None
                if other is not None and sizes[lab] + sizes[other] <= limit:
                    candidates.append((c, other))
            if candidates:
                _, other = min(candidates)
                keep, drop = min(lab, other), max(lab, other)
                for n, x in enumerate(labels):
                    if x == drop:
                        labels[n] = keep
                merged = True
                break
        if not merged:
            break
    return repair_partition(p, labels)


# ---------------------------------------------------------------- subproblems

def split_subproblems(p: Problem, partition: Partition) -> list[Subproblem]:
    """One induced, locally reindexed Problem per cluster."""
    subs: list[Subproblem] = []
    for members in partition.clusters():
        members = sorted(members)
        local = {g: i for i, g in enumerate(members)}
        nodes = [p.nodes[g] for g in members]
        edges = [(local[u], local[v], c) for u, v, c in p.edges
                 if u in local and v in local]
        terminals = [local[t] for t in p.terminals if t in local]
        distributors = [local[d] for d in p.distributors if d in local]
        sub = Problem.build(nodes, edges, terminals, distributors,
                            name=f"{p.name}/cluster{len(subs)}")
        violations = validate_problem(sub)
        if violations:
            raise ValueError(f"split produced invalid subproblem: {violations}")
        subs.append(Subproblem(problem=sub, back_map=tuple(members)))
    return subs


# ------------------------------------------------------------------- merging

class _Component:
    __slots__ = ("nodes", "edges")

    def __init__(self, nodes: set[int], edges: set[Edge]):
        self.nodes = nodes
        self.edges = edges

    @property
    def key(self) -> tuple[int, int]:
        return (len(self.nodes), min(self.nodes))


def _initial_components(p: Problem, trees: Iterable) -> list[_Component]:
    comps: list[_Component] = []
    for t in trees:
        edges = {canonical_edge(u, v) for u, v in
                 (t.edges if isinstance(t, SteinerTree) else t)}
        nodes = {i for e in edges for i in e}
        if not nodes and isinstance(t, SteinerTree):
            nodes = set(t.nodes)
        if nodes:
            comps.append(_Component(nodes, edges))
    # fuse any components that already share nodes
    merged = True
    while merged:
        merged = False
        for i in range(len(comps)):
            for j in range(i + 1, len(comps)):
                if comps[i].nodes & comps[j].nodes:
                    comps[i].nodes |= comps[j].nodes
                    comps[i].edges |= comps[j].edges
                    del comps[j]
                    merged = True
                    break
            if merged:
                break
    return comps


def _absorb_path(p: Problem, comps: list[_Component], src: _Component,
                 path: Sequence[int]) -> None:
    """Extend `src` along `path` and fuse every component the path touches."""
    src.nodes.update(path)
    src.edges.update(canonical_edge(a, b) for a, b in zip(path, path[1:]))
    for other in list(comps):
        if other is not src and other.nodes & src.nodes:
            src.nodes |= other.nodes
            src.edges |= other.edges
            comps.remove(other)


def _finalize(p: Problem, comps: list[_Component]) -> SteinerTree:
    edges = set()
    for c in comps:
        edges |= c.edges
    if not edges:
        return SteinerTree.from_edges(p, [])
    nodes = {i for e in edges for i in e}
    mst = minimum_spanning_tree(nodes, [(u, v, p.edge_cost[(u, v)]) for u, v in edges])
    return prune_tree(p, mst)


def merge_sph(p: Problem, trees: Sequence, n_partitions: int = 3,
              n_nodes: int = 10) -> SteinerTree:
    """Shortest-path merging with Manhattan preselection.

    The smallest component ranks other components by minimal Manhattan
    distance (keeping n_partitions), ranks node pairs the same way (keeping
    n_nodes), and connects along the cheapest true shortest path among the
    kept pairs. Finishes with MST + prune over the union.
    """
    pos = p.positions
    comps = _initial_components(p, trees)
    if not comps:
        return SteinerTree.from_edges(p, [])
    while len(comps) > 1:
        comps.sort(key=lambda c: c.key)
        base = comps[0]
        base_nodes = sorted(base.nodes)
        base_pos = pos[base_nodes]

        def manhattan(other: _Component) -> tuple[float, int]:
            onodes = sorted(other.nodes)
            d = np.abs(base_pos[:, None, :] - pos[onodes][None, :, :]).sum(axis=2)
            return float(d.min()), min(onodes)

        ranked = sorted(((manhattan(c), ci) for ci, c in enumerate(comps[1:], 1)))
        kept_comps = [comps[ci] for _, ci in ranked[:max(1, n_partitions)]]

        pairs: list[tuple[float, int, int]] = []
        for other in kept_comps:
            onodes = sorted(other.nodes)
            d = np.abs(base_pos[:, None, :] - pos[onodes][None, :, :]).sum(axis=2)
            for bi, u in enumerate(base_nodes):
                for oi, v in enumerate(onodes):
                    pairs.append((float(d[bi, oi]), u, v))
        pairs.sort()
        kept_pairs = pairs[:max(1, n_nodes)]

        best: tuple[float, tuple[int, ...]] | None = None
        for _, u, v in kept_pairs:
            dist, paths = single_source_paths(p, u)
            cand = (dist[v], paths[v])
            if best is None or cand < best:
                best = cand
        assert best is not None
        _absorb_path(p, comps, base, best[1])
    return _finalize(p, comps)


def merge_center_of_mass(p: Problem, trees: Sequence) -> SteinerTree:
    """Merge components greedily by ascending centroid distance.

    The two components whose position centroids are closest are joined along
    the shortest path between their centroid-nearest member nodes.
    """
    pos = p.positions
    comps = _initial_components(p, trees)
    if not comps:
        return SteinerTree.from_edges(p, [])

    def centroid(c: _Component) -> np.ndarray:
        return pos[sorted(c.nodes)].mean(axis=0)

    def central_node(c: _Component) -> int:
        nodes = sorted(c.nodes)
        d = np.linalg.norm(pos[nodes] - centroid(c), axis=1)
        return nodes[int(np.argmin(d))]

    while len(comps) > 1:
        comps.sort(key=lambda c: c.key)
        best = None
        for i in range(len(comps)):
            for j in range(i + 1, len(comps)):
                d = float(np.linalg.norm(centroid(comps[i]) - centroid(comps[j])))
                if best is None or d < best[0] - 1e-12:
                    best = (d, i, j)
        _, i, j = best
        u, v = central_node(comps[i]), central_node(comps[j])
        dist, paths = single_source_paths(p, u)
        _absorb_path(p, comps, comps[i], paths[v])
    return _finalize(p, comps)
