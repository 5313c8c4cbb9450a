"""Problem import/export: pixel rasters, problem files, SVG drawings, CSV.

Raster input is binary portable pixmap (P6, 8-bit). Problem files are UTF-8
JSON with a fixed schema (see docs/problem-format.md); saving is
byte-stable so golden files can be compared directly.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from io import StringIO
from typing import Iterable, Mapping

import numpy as np

from .core import (
    KIND_DISTRIBUTOR,
    KIND_TERMINAL,
    KIND_WAYPOINT,
    NodeRecord,
    Problem,
    connected_components,
    validate_problem,
)

__all__ = [
    "PixelImportRules",
    "ProblemFormatError",
    "decode_ppm",
    "encode_ppm",
    "import_pixel_image",
    "load_problem",
    "save_problem",
    "export_svg",
    "export_report",
    "REPORT_HEADER",
]

SCHEMA_VERSION = 1
REPORT_HEADER = ["problem", "simplifier", "partitioner", "solver", "merger",
                 "cost", "valid", "wall_ms", "seed"]


class ProblemFormatError(ValueError):
    """Raised for malformed rasters or problem files."""


@dataclass(frozen=True)
class PixelImportRules:
    """Color classification and connectivity for pixel imports.

    Classification order per pixel: background, distributor (yellow),
    terminal (green), waypoint — first match wins, so the classes are
    mutually exclusive even where thresholds overlap.
    """

    green_min: int = 128
    yellow_min: int = 128
    yellow_blue_max: int = 96
    connectivity: int = 4

    def classify(self, r: int, g: int, b: int) -> str | None:
        if r == 255 and g == 255 and b == 255:
            return None  # background
        if r >= self.yellow_min and g >= self.yellow_min and b < self.yellow_blue_max:
            return KIND_DISTRIBUTOR
        if g > r and g > b and g >= self.green_min:
            return KIND_TERMINAL
        return KIND_WAYPOINT


def decode_ppm(data: bytes) -> np.ndarray:
    """Parse a binary P6 pixmap into an (H, W, 3) uint8 array."""
    if not data.startswith(b"P6"):
        raise ProblemFormatError("raster is not a binary P6 pixmap")
    pos = 2
    fields: list[int] = []
    while len(fields) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        token = data[start:pos]
        if not token.isdigit():
            raise ProblemFormatError(f"bad P6 header token {token!r}")
        fields.append(int(token))
    width, height, maxval = fields
    if maxval != 255:
        raise ProblemFormatError(f"unsupported maxval {maxval}, need 8-bit channels")
    pos += 1  # single whitespace byte after maxval
    expected = width * height * 3
    raw = data[pos:pos + expected]
    if len(raw) != expected:
        raise ProblemFormatError(
            f"truncated pixel data: expected {expected} bytes, got {len(raw)}")
    return np.frombuffer(raw, dtype=np.uint8).reshape(height, width, 3)


def encode_ppm(pixels: np.ndarray) -> bytes:
    """Serialize an (H, W, 3) uint8 array as binary P6."""
    arr = np.asarray(pixels, dtype=np.uint8)
    h, w, _ = arr.shape
    return b"P6\n%d %d\n255\n" % (w, h) + arr.tobytes()


def import_pixel_image(data: bytes | np.ndarray,
                       rules: PixelImportRules | None = None,
                       name: str = "") -> Problem:
    """Turn a raster into a Problem: one node per non-background pixel.

    Node weight is the normalized pixel brightness in [0, 1] (terminals and
    distributors get weight 0); neighbors are joined with cost
    (w_u + w_v) / 2 * length, where length is 1 for axis neighbors and
    sqrt(2) for diagonal ones under 8-connectivity.
    """
    rules = rules or PixelImportRules()
    pixels = data if isinstance(data, np.ndarray) else decode_ppm(data)
    height, width = pixels.shape[:2]
    if height == 0 or width == 0:
        raise ProblemFormatError("empty raster")

    index: dict[tuple[int, int], int] = {}
    records: list[NodeRecord] = []
    terminals: list[int] = []
    distributors: list[int] = []
    for y in range(height):
        for x in range(width):
            r, g, b = (int(c) for c in pixels[y, x])
            kind = rules.classify(r, g, b)
            if kind is None:
                continue
            idx = len(records)
            index[(x, y)] = idx
            if kind == KIND_WAYPOINT:
                weight = (r + g + b) / 765.0
            else:
                weight = 0.0
                terminals.append(idx)
                if kind == KIND_DISTRIBUTOR:
                    distributors.append(idx)
            records.append(NodeRecord(float(x), float(y), weight, kind))
    if not terminals:
        raise ProblemFormatError("raster contains no terminal pixels")

    if rules.connectivity == 4:
        steps = [(1, 0, 1.0), (0, 1, 1.0)]
    elif rules.connectivity == 8:
        steps = [(1, 0, 1.0), (0, 1, 1.0), (1, 1, math.sqrt(2.0)), (1, -1, math.sqrt(2.0))]
    else:
        raise ProblemFormatError(f"connectivity must be 4 or 8, got {rules.connectivity}")

    edges: list[tuple[int, int, float]] = []
    for (x, y), u in index.items():
        for dx, dy, length in steps:
            v = index.get((x + dx, y + dy))
            if v is not None:
                cost = (records[u].weight + records[v].weight) / 2.0 * length
                edges.append((u, v, cost))

    if len(connected_components(range(len(records)), [(u, v) for u, v, _ in edges])) > 1:
        raise ProblemFormatError("foreground pixels are disconnected")
    return Problem.build(records, edges, terminals, distributors, name=name)


# ------------------------------------------------------------- problem files

def save_problem(p: Problem, source: str = "") -> bytes:
    doc = {
        "schema": SCHEMA_VERSION,
        "name": p.name,
        "source": source,
        "nodes": [{"id": i, "x": rec.x, "y": rec.y, "weight": rec.weight,
                   "kind": rec.kind} for i, rec in enumerate(p.nodes)],
        "edges": [{"u": u, "v": v, "cost": c} for u, v, c in p.edges],
    }
    return (json.dumps(doc, sort_keys=True, separators=(",", ": "), indent=1)
            + "\n").encode("utf-8")


def _require(mapping, key, where):
    if key not in mapping:
        raise ProblemFormatError(f"{where}: missing field {key!r}")
    return mapping[key]


def load_problem(data: bytes) -> Problem:
    try:
        doc = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProblemFormatError(f"problem file is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ProblemFormatError("problem file top level must be an object")
    if _require(doc, "schema", "top level") != SCHEMA_VERSION:
        raise ProblemFormatError(f"unsupported schema version {doc['schema']!r}")

    raw_nodes = _require(doc, "nodes", "top level")
    records: list[NodeRecord] = []
    terminals: list[int] = []
    distributors: list[int] = []
    for i, entry in enumerate(raw_nodes):
        where = f"nodes[{i}]"
        nid = _require(entry, "id", where)
        if nid != i:
            raise ProblemFormatError(f"{where}: ids must be dense, expected {i} got {nid}")
        kind = _require(entry, "kind", where)
        if kind not in (KIND_WAYPOINT, KIND_TERMINAL, KIND_DISTRIBUTOR):
            raise ProblemFormatError(f"{where}: unknown kind {kind!r}")
        records.append(NodeRecord(float(_require(entry, "x", where)),
                                  float(_require(entry, "y", where)),
                                  float(_require(entry, "weight", where)),
                                  kind))
        if kind != KIND_WAYPOINT:
            terminals.append(i)
        if kind == KIND_DISTRIBUTOR:
            distributors.append(i)

    edges: list[tuple[int, int, float]] = []
    for j, entry in enumerate(_require(doc, "edges", "top level")):
        where = f"edges[{j}]"
        u, v = _require(entry, "u", where), _require(entry, "v", where)
        for end in (u, v):
            if not isinstance(end, int) or not (0 <= end < len(records)):
                raise ProblemFormatError(f"{where}: edge endpoint {end!r} is not a node id")
        edges.append((u, v, float(_require(entry, "cost", where))))

    p = Problem.build(records, edges, terminals, distributors,
                      name=doc.get("name", ""))
    violations = validate_problem(p)
    if violations:
        raise ProblemFormatError("invalid problem: " + "; ".join(violations))
    return p


# ---------------------------------------------------------------- SVG export

PALETTE = ["#e6194b", "#3cb44b", "#4363d8", "#f58231", "#911eb4", "#46f0f0",
           "#f032e6", "#bcf60c", "#fabebe", "#008080", "#e6beff", "#9a6324",
           "#fffac8", "#800000", "#aaffc3", "#808000", "#ffd8b1", "#000075"]


def export_svg(p: Problem, tree=None, partition=None, simplified=None) -> bytes:
    """Standalone SVG 1.1 drawing of the problem with optional overlays.

    `tree` is a SteinerTree (or edge iterable) on p, `partition` an object
    with an `assignment` sequence, `simplified` a SimplifiedProblem whose
    node_map refers back to p.
    """
    pos = p.positions
    xmin, ymin = pos.min(axis=0) - 1.0
    xmax, ymax = pos.max(axis=0) + 1.0
    span = max(xmax - xmin, ymax - ymin)
    node_r = max(span / 200.0, 0.12)
    stroke = node_r / 3.0

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'viewBox="{xmin:.3f} {ymin:.3f} {xmax - xmin:.3f} {ymax - ymin:.3f}">',
    ]
    for u, v, _ in p.edges:
        out.append(f'<line class="edge" x1="{pos[u, 0]:.3f}" y1="{pos[u, 1]:.3f}" '
                   f'x2="{pos[v, 0]:.3f}" y2="{pos[v, 1]:.3f}" '
                   f'stroke="#c8c8c8" stroke-width="{stroke:.4f}"/>')

    if simplified is not None:
        sp = simplified.problem
        spos = sp.positions
        for u, v, _ in sp.edges:
            out.append(f'<line class="simplified-edge" x1="{spos[u, 0]:.3f}" '
                       f'y1="{spos[u, 1]:.3f}" x2="{spos[v, 0]:.3f}" y2="{spos[v, 1]:.3f}" '
                       f'stroke="#7f7fff" stroke-width="{stroke * 1.5:.4f}" '
                       f'stroke-dasharray="{4 * stroke:.4f}"/>')

    if tree is not None:
        tree_edges = tree.edges if hasattr(tree, "edges") else tree
        for u, v in tree_edges:
            out.append(f'<line class="tree-edge" x1="{pos[u, 0]:.3f}" y1="{pos[u, 1]:.3f}" '
                       f'x2="{pos[v, 0]:.3f}" y2="{pos[v, 1]:.3f}" '
                       f'stroke="#d62728" stroke-width="{stroke * 2.5:.4f}"/>')

    assignment = getattr(partition, "assignment", partition)
    for i, rec in enumerate(p.nodes):
        if assignment is not None:
            fill = PALETTE[assignment[i] % len(PALETTE)]
            cls = f"cluster-{assignment[i]}"
        elif rec.kind == KIND_DISTRIBUTOR:
            fill, cls = "#ffcc00", "distributor"
        elif rec.kind == KIND_TERMINAL:
            fill, cls = "#2ca02c", "terminal"
        else:
            fill, cls = "#888888", "waypoint"
        r = node_r * (1.6 if rec.kind != KIND_WAYPOINT else 1.0)
        out.append(f'<circle class="{cls}" cx="{rec.x:.3f}" cy="{rec.y:.3f}" '
                   f'r="{r:.4f}" fill="{fill}"/>')
    out.append("</svg>")
    return ("\n".join(out) + "\n").encode("utf-8")


# ---------------------------------------------------------------- CSV report

def export_report(rows: Iterable) -> bytes:
    """RFC-4180 CSV of pipeline reports; costs printed with 6 decimals."""
    buf = StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_HEADER)
    for row in rows:
        get = row.get if isinstance(row, Mapping) else lambda k, r=row: getattr(r, k)
        writer.writerow([
            get("problem"), get("simplifier"), get("partitioner"),
            get("solver"), get("merger"),
            f"{get('cost'):.6f}",
            "true" if get("valid") else "false",
            f"{get('wall_ms'):.3f}",
            get("seed"),
        ])
    return buf.getvalue().encode("utf-8")
