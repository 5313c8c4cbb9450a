"""fiberplan: Steiner-tree optimization toolkit for fiber network planning."""

from .core import (
    NodeRecord,
    Problem,
    SteinerTree,
    build_tree_via_closure,
    is_steiner_tree,
    metric_closure,
    minimum_spanning_tree,
    prune_tree,
    rebuild_tree,
    shortest_path,
    tree_cost,
    validate_problem,
)

__version__ = "0.1.0"
