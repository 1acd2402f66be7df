"""Control/data-flow graph model for pragma-annotated kernels.

A kernel is described structurally (loops, per-iteration operation counts,
arrays) plus a source template with pragma slots. ``build_cdfg`` lowers the
structural description to a directed graph: one block node per loop and per
array, one instruction node per body operation. Active pragma directives are
inserted afterwards as dedicated pragma nodes attached to their target block.

Graphs are immutable after construction and all operations here are pure.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .docio import SchemaError, dump_document

FLOW_KINDS = ("control", "data", "call", "pragma")
NODE_TYPES = ("block", "instruction", "pragma")
INSTRUCTION_TYPES = ("none", "add", "mul", "load", "store",
                     "pipeline", "unroll", "array_partition", "tile")
FUNCTION_TYPES = ("kernel",)
BLOCK_TYPES = ("none", "loop", "array")

# Canonical emission order of body operations inside a loop.
OP_ORDER = ("load", "add", "mul", "store")

# Per-node numeric features by op class: (latency_cycles, lut, dsp, ff).
OP_NODE_COSTS = {
    "add": (1, 16, 0, 8),
    "mul": (3, 8, 1, 12),
    "load": (2, 4, 0, 6),
    "store": (2, 4, 0, 6),
}


class CdfgError(ValueError):
    pass


@dataclass(frozen=True)
class NodeFeatures:
    node_type: int
    instruction_type: int
    function_type: int
    block_type: int
    latency_cycles: int = 0
    lut: int = 0
    dsp: int = 0
    ff: int = 0


@dataclass(frozen=True)
class Edge:
    src: int
    dst: int
    flow: str
    position: int = 0


@dataclass(frozen=True)
class Cdfg:
    kernel_id: str
    nodes: tuple[NodeFeatures, ...]
    edges: tuple[Edge, ...]
    vocab_sizes: tuple[int, int, int, int]
    # directive target id -> block node index; carried in memory only,
    # not part of the interchange format.
    targets: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)


@dataclass(frozen=True)
class LoopSpec:
    loop_id: str
    trip_count: int
    body_op_counts: dict
    parent_loop_id: str | None = None


@dataclass(frozen=True)
class ArraySpec:
    name: str
    size: int


@dataclass(frozen=True)
class KernelDescription:
    kernel_id: str
    source_template: str
    loops: tuple[LoopSpec, ...]
    arrays: tuple[ArraySpec, ...] = ()


# ---------------------------------------------------------------------------
# description validation and graph construction
# ---------------------------------------------------------------------------

def _slot_names(template: str) -> list[str]:
    import re
    return re.findall(r"__PRAGMA\(([^)]*)\)__", template)


def validate_description(desc: KernelDescription) -> None:
    if not desc.loops:
        raise CdfgError(f"{desc.kernel_id}: no loops")
    ids = [lp.loop_id for lp in desc.loops]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise CdfgError(f"{desc.kernel_id}: duplicate loop ids {dupes}")
    by_id = {lp.loop_id: lp for lp in desc.loops}
    for lp in desc.loops:
        if lp.trip_count < 1:
            raise CdfgError(f"{desc.kernel_id}: loop {lp.loop_id} has trip_count < 1")
        if lp.parent_loop_id is not None and lp.parent_loop_id not in by_id:
            raise CdfgError(
                f"{desc.kernel_id}: loop {lp.loop_id} references missing parent "
                f"{lp.parent_loop_id}")
        for op in lp.body_op_counts:
            if op not in OP_ORDER:
                raise CdfgError(f"{desc.kernel_id}: loop {lp.loop_id} has unknown op {op!r}")
    # nesting must be a forest: walk each parent chain looking for a cycle
    for lp in desc.loops:
        seen = {lp.loop_id}
        cur = lp.parent_loop_id
        while cur is not None:
            if cur in seen:
                raise CdfgError(f"{desc.kernel_id}: cyclic loop nesting at {sorted(seen)}")
            seen.add(cur)
            cur = by_id[cur].parent_loop_id
    # each slot names a directive "kind@target"; the target must exist
    known = set(ids) | {a.name for a in desc.arrays}
    dangling = [s for s in _slot_names(desc.source_template)
                if s.rsplit("@", 1)[-1] not in known]
    if dangling:
        raise CdfgError(f"{desc.kernel_id}: dangling pragma slots {sorted(dangling)}")


def build_cdfg(desc: KernelDescription) -> Cdfg:
    """Deterministically lower a kernel description to a CDFG.

    Construction rule:
      * one block node per loop (loop-id order), then one block node per array
        (declaration order), then instruction nodes (owning loop in loop-id
        order, body ops in OP_ORDER);
      * control edges: parent block -> child block, previous sibling block ->
        next sibling block (declaration order), block -> each body instruction;
      * data edges: dependence chain between consecutive body instructions of
        a loop, and array block -> every loop block with load/store ops.
    """
    validate_description(desc)
    loops = sorted(desc.loops, key=lambda lp: lp.loop_id)
    block_of: dict[str, int] = {lp.loop_id: i for i, lp in enumerate(loops)}
    nodes: list[NodeFeatures] = []
    for _ in loops:
        nodes.append(NodeFeatures(
            node_type=NODE_TYPES.index("block"),
            instruction_type=0,
            function_type=0,
            block_type=BLOCK_TYPES.index("loop")))
    array_of: dict[str, int] = {}
    for arr in desc.arrays:
        array_of[arr.name] = len(nodes)
        nodes.append(NodeFeatures(
            node_type=NODE_TYPES.index("block"),
            instruction_type=0,
            function_type=0,
            block_type=BLOCK_TYPES.index("array")))

    edges: list[Edge] = []
    by_id = {lp.loop_id: lp for lp in desc.loops}
    children: dict[str | None, list[str]] = {}
    for lp in desc.loops:  # declaration order defines program order of siblings
        children.setdefault(lp.parent_loop_id, []).append(lp.loop_id)
    for parent, kids in children.items():
        for pos, kid in enumerate(kids):
            if parent is not None:
                edges.append(Edge(block_of[parent], block_of[kid], "control", pos))
            if pos > 0:
                edges.append(Edge(block_of[kids[pos - 1]], block_of[kid], "control", 0))

    instr_edges: list[Edge] = []
    data_edges: list[Edge] = []
    for lp in loops:
        body: list[int] = []
        for op in OP_ORDER:
            for _ in range(int(lp.body_op_counts.get(op, 0))):
                idx = len(nodes)
                lat, lut, dsp, ff = OP_NODE_COSTS[op]
                nodes.append(NodeFeatures(
                    node_type=NODE_TYPES.index("instruction"),
                    instruction_type=INSTRUCTION_TYPES.index(op),
                    function_type=0,
                    block_type=0,
                    latency_cycles=lat, lut=lut, dsp=dsp, ff=ff))
                body.append(idx)
        for pos, idx in enumerate(body):
            instr_edges.append(Edge(block_of[lp.loop_id], idx, "control", pos))
        for a, b in zip(body, body[1:]):
            data_edges.append(Edge(a, b, "data", 0))
    edges.extend(instr_edges)
    edges.extend(data_edges)

    if desc.arrays:
        mem_loops = [lp.loop_id for lp in loops
                     if lp.body_op_counts.get("load", 0) or lp.body_op_counts.get("store", 0)]
        # keep arrays connected even when no loop touches memory
        attach_to = mem_loops or [min(children[None], key=lambda i: block_of[i])]
        for ai, arr in enumerate(desc.arrays):
            for loop_id in attach_to:
                edges.append(Edge(array_of[arr.name], block_of[loop_id], "data", ai))

    targets = dict(block_of)
    targets.update(array_of)
    g = Cdfg(kernel_id=desc.kernel_id,
             nodes=tuple(nodes),
             edges=tuple(edges),
             vocab_sizes=(len(NODE_TYPES), len(INSTRUCTION_TYPES),
                          len(FUNCTION_TYPES), len(BLOCK_TYPES)),
             targets=targets)
    validate_cdfg(g)
    return g


def validate_cdfg(g: Cdfg) -> None:
    n = g.num_nodes
    if n == 0:
        raise CdfgError(f"{g.kernel_id}: empty graph")
    if len(g.vocab_sizes) != 4 or any(v < 1 for v in g.vocab_sizes):
        raise CdfgError(f"{g.kernel_id}: vocab_sizes must be 4 positive integers")
    for i, node in enumerate(g.nodes):
        cats = (node.node_type, node.instruction_type, node.function_type, node.block_type)
        for value, vocab, name in zip(cats, g.vocab_sizes,
                                      ("node_type", "instruction_type",
                                       "function_type", "block_type")):
            if not 0 <= value < vocab:
                raise CdfgError(f"{g.kernel_id}: node {i} field {name}={value} "
                                f"outside vocabulary of size {vocab}")
        for name in ("latency_cycles", "lut", "dsp", "ff"):
            if getattr(node, name) < 0:
                raise CdfgError(f"{g.kernel_id}: node {i} field {name} is negative")
    for j, e in enumerate(g.edges):
        if not (0 <= e.src < n and 0 <= e.dst < n):
            raise CdfgError(f"{g.kernel_id}: edge {j} endpoint out of range")
        if e.src == e.dst:
            raise CdfgError(f"{g.kernel_id}: edge {j} is a self-loop")
        if e.flow not in FLOW_KINDS:
            raise CdfgError(f"{g.kernel_id}: edge {j} has unknown flow {e.flow!r}")
        if e.position < 0:
            raise CdfgError(f"{g.kernel_id}: edge {j} has negative position")
    if n > 1 and not _weakly_connected(g):
        raise CdfgError(f"{g.kernel_id}: graph is not weakly connected")


def _weakly_connected(g: Cdfg) -> bool:
    adj: dict[int, list[int]] = {i: [] for i in range(g.num_nodes)}
    for e in g.edges:
        adj[e.src].append(e.dst)
        adj[e.dst].append(e.src)
    seen = {0}
    stack = [0]
    while stack:
        for nb in adj[stack.pop()]:
            if nb not in seen:
                seen.add(nb)
                stack.append(nb)
    return len(seen) == g.num_nodes


# ---------------------------------------------------------------------------
# pragma insertion
# ---------------------------------------------------------------------------

def insert_pragma_nodes(g: Cdfg, space, config) -> Cdfg:
    """Return a new graph with one pragma node per active directive.

    The pragma node's instruction_type encodes the directive kind and its
    edge to the target block carries the value index as position. The input
    graph is left untouched; a configuration with no active directives
    yields a graph equal to the input.
    """
    nodes = list(g.nodes)
    edges = list(g.edges)
    pragma_nt = NODE_TYPES.index("pragma")
    for directive in space.directives:
        value_index = config.assignment[directive.name]
        if not directive.is_active(value_index):
            continue
        if directive.target not in g.targets:
            raise CdfgError(f"directive {directive.name} targets unknown block "
                            f"{directive.target!r}")
        idx = len(nodes)
        nodes.append(NodeFeatures(
            node_type=pragma_nt,
            instruction_type=INSTRUCTION_TYPES.index(directive.kind),
            function_type=0,
            block_type=0))
        edges.append(Edge(idx, g.targets[directive.target], "pragma", value_index))
    return Cdfg(kernel_id=g.kernel_id, nodes=tuple(nodes), edges=tuple(edges),
                vocab_sizes=g.vocab_sizes, targets=dict(g.targets))


# ---------------------------------------------------------------------------
# feature encoding and edge views
# ---------------------------------------------------------------------------

def feature_dim(vocab_sizes) -> int:
    return int(sum(vocab_sizes)) + 4


def encode_node_features(g: Cdfg, numeric_maxima=None) -> np.ndarray:
    """One-hot the four categorical fields and min-max scale the numeric ones.

    ``numeric_maxima`` holds dataset-level maxima for (latency, lut, dsp, ff);
    when omitted the per-graph maxima are used.
    """
    validate_cdfg(g)
    n = g.num_nodes
    numeric = np.array([[nd.latency_cycles, nd.lut, nd.dsp, nd.ff] for nd in g.nodes],
                       dtype=np.float64)
    if numeric_maxima is None:
        maxima = numeric.max(axis=0)
    else:
        maxima = np.asarray(numeric_maxima, dtype=np.float64)
    scale = np.where(maxima > 0, maxima, 1.0)

    out = np.zeros((n, feature_dim(g.vocab_sizes)))
    offsets = np.cumsum([0] + list(g.vocab_sizes))
    for i, nd in enumerate(g.nodes):
        cats = (nd.node_type, nd.instruction_type, nd.function_type, nd.block_type)
        for k, value in enumerate(cats):
            out[i, offsets[k] + value] = 1.0
    out[:, offsets[-1]:] = np.clip(numeric / scale, 0.0, 1.0)
    return out


def split_edges_by_direction(g: Cdfg) -> tuple[list[list[Edge]], list[list[Edge]]]:
    """Per-node edge views: incoming(v) has dst == v, outgoing(v) has src == v."""
    incoming: list[list[Edge]] = [[] for _ in range(g.num_nodes)]
    outgoing: list[list[Edge]] = [[] for _ in range(g.num_nodes)]
    for e in g.edges:
        incoming[e.dst].append(e)
        outgoing[e.src].append(e)
    return incoming, outgoing


# ---------------------------------------------------------------------------
# interchange format
# ---------------------------------------------------------------------------

_NODE_KEYS = ("nt", "it", "ft", "bt", "lat", "lut", "dsp", "ff")
_EDGE_KEYS = ("src", "dst", "flow", "pos")


def export_graph(g: Cdfg) -> str:
    validate_cdfg(g)
    doc = {
        "kernel_id": g.kernel_id,
        "vocab_sizes": list(g.vocab_sizes),
        "nodes": [
            {"nt": nd.node_type, "it": nd.instruction_type, "ft": nd.function_type,
             "bt": nd.block_type, "lat": nd.latency_cycles, "lut": nd.lut,
             "dsp": nd.dsp, "ff": nd.ff}
            for nd in g.nodes
        ],
        "edges": [
            {"src": e.src, "dst": e.dst, "flow": e.flow, "pos": e.position}
            for e in g.edges
        ],
    }
    return dump_document(doc)


def import_graph(text: str) -> Cdfg:
    import json
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError("graph", f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaError("graph", "top-level value must be an object")

    def _int(obj, key, path):
        if key not in obj:
            raise SchemaError(f"{path}.{key}", "missing required field")
        v = obj[key]
        if not isinstance(v, int) or isinstance(v, bool):
            raise SchemaError(f"{path}.{key}", f"expected integer, got {type(v).__name__}")
        return v

    if "kernel_id" not in doc or not isinstance(doc["kernel_id"], str):
        raise SchemaError("kernel_id", "missing or not a string")
    vocab = doc.get("vocab_sizes")
    if not isinstance(vocab, list) or len(vocab) != 4 \
            or not all(isinstance(v, int) and not isinstance(v, bool) for v in vocab):
        raise SchemaError("vocab_sizes", "expected a list of 4 integers")
    if not isinstance(doc.get("nodes"), list):
        raise SchemaError("nodes", "expected a list")
    if not isinstance(doc.get("edges"), list):
        raise SchemaError("edges", "expected a list")

    nodes = []
    for i, nd in enumerate(doc["nodes"]):
        if not isinstance(nd, dict):
            raise SchemaError(f"nodes[{i}]", "expected an object")
        extra = sorted(set(nd) - set(_NODE_KEYS))
        if extra:
            raise SchemaError(f"nodes[{i}].{extra[0]}", "unknown key")
        nodes.append(NodeFeatures(
            node_type=_int(nd, "nt", f"nodes[{i}]"),
            instruction_type=_int(nd, "it", f"nodes[{i}]"),
            function_type=_int(nd, "ft", f"nodes[{i}]"),
            block_type=_int(nd, "bt", f"nodes[{i}]"),
            latency_cycles=_int(nd, "lat", f"nodes[{i}]"),
            lut=_int(nd, "lut", f"nodes[{i}]"),
            dsp=_int(nd, "dsp", f"nodes[{i}]"),
            ff=_int(nd, "ff", f"nodes[{i}]")))
    edges = []
    for j, ed in enumerate(doc["edges"]):
        if not isinstance(ed, dict):
            raise SchemaError(f"edges[{j}]", "expected an object")
        extra = sorted(set(ed) - set(_EDGE_KEYS))
        if extra:
            raise SchemaError(f"edges[{j}].{extra[0]}", "unknown key")
        flow = ed.get("flow")
        if flow not in FLOW_KINDS:
            raise SchemaError(f"edges[{j}].flow", f"expected one of {FLOW_KINDS}, got {flow!r}")
        edges.append(Edge(src=_int(ed, "src", f"edges[{j}]"),
                          dst=_int(ed, "dst", f"edges[{j}]"),
                          flow=flow,
                          position=_int(ed, "pos", f"edges[{j}]")))

    g = Cdfg(kernel_id=doc["kernel_id"], nodes=tuple(nodes), edges=tuple(edges),
             vocab_sizes=tuple(vocab))
    try:
        validate_cdfg(g)
    except CdfgError as exc:
        raise SchemaError("graph", str(exc)) from exc
    return g


def write_graph(path: str | Path, g: Cdfg) -> None:
    Path(path).write_text(export_graph(g), encoding="utf-8")


def read_graph(path: str | Path) -> Cdfg:
    return import_graph(Path(path).read_text(encoding="utf-8"))
