"""Task-oriented flowchart structure and structural validation.

A flowchart is a directed, possibly cyclic graph of typed nodes. Cycles model
re-prompting and error recovery, so they are legal only when they pass through
a node that hands control back to the customer (output, reflection, or end).
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .errors import InvalidFlowchartError


class NodeType(str, enum.Enum):
    START = "start"
    ACTION = "action"
    DECISION = "decision"
    OUTPUT = "output"
    REFLECTION = "reflection"
    END = "end"


#: Node types a legal cycle must pass through.
LOOP_SAFE_TYPES = frozenset({NodeType.OUTPUT, NodeType.REFLECTION, NodeType.END})


@dataclass(frozen=True)
class FlowNode:
    id: str
    node_type: NodeType
    label: str
    intent: str | None = None
    domain: str | None = None
    schema_ref: str | None = None


@dataclass(frozen=True)
class FlowEdge:
    src: str
    dst: str
    condition: str | None = None

    def key(self) -> tuple[str, str, str]:
        return (self.src, self.dst, self.condition or "")


@dataclass(frozen=True)
class Flowchart:
    name: str
    nodes: Mapping[str, FlowNode]
    edges: tuple[FlowEdge, ...]
    subgraphs: Mapping[str, frozenset[str]] = field(default_factory=dict)

    def node(self, node_id: str) -> FlowNode:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise KeyError(f"unknown node {node_id!r}") from None

    def nodes_of_type(self, node_type: NodeType) -> list[FlowNode]:
        return [n for n in self.nodes.values() if n.node_type == node_type]

    @property
    def start_ids(self) -> list[str]:
        return sorted(n.id for n in self.nodes_of_type(NodeType.START))

    @property
    def end_ids(self) -> list[str]:
        return sorted(n.id for n in self.nodes_of_type(NodeType.END))

    def adjacency(self) -> dict[str, list[str]]:
        adj: dict[str, list[str]] = {nid: [] for nid in self.nodes}
        for e in self.edges:
            if e.dst not in adj[e.src]:
                adj[e.src].append(e.dst)
        return adj

    def has_edge(self, src: str, dst: str) -> bool:
        return any(e.src == src and e.dst == dst for e in self.edges)


def make_flowchart(
    name: str,
    nodes: Iterable[FlowNode],
    edges: Iterable[FlowEdge],
    subgraphs: Mapping[str, Iterable[str]] | None = None,
) -> Flowchart:
    """Assemble a flowchart, rejecting duplicate node ids and duplicate
    (src, dst, condition) triples."""
    node_map: dict[str, FlowNode] = {}
    for n in nodes:
        if n.id in node_map:
            raise InvalidFlowchartError([f"duplicate-node-id: {n.id}"])
        node_map[n.id] = n
    edge_list: list[FlowEdge] = []
    seen = set()
    for e in edges:
        if e.key() in seen:
            raise InvalidFlowchartError([f"duplicate-edge: {e.src}->{e.dst}[{e.condition or ''}]"])
        seen.add(e.key())
        edge_list.append(e)
    sub = {d: frozenset(ids) for d, ids in (subgraphs or {}).items()}
    return Flowchart(name=name, nodes=node_map, edges=tuple(edge_list), subgraphs=sub)


def canonical_ids() -> Iterable[str]:
    """A, B, ..., Z, AA, AB, ... in creation order."""
    letters = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"
    for size in itertools.count(1):
        for combo in itertools.product(letters, repeat=size):
            yield "".join(combo)


def _reachable(adjacency: dict[str, list[str]], roots: Iterable[str]) -> set[str]:
    seen: set[str] = set()
    stack = list(roots)
    while stack:
        cur = stack.pop()
        if cur in seen:
            continue
        seen.add(cur)
        stack.extend(adjacency.get(cur, ()))
    return seen


def _has_cycle(adjacency: dict[str, list[str]], allowed: set[str]) -> list[str]:
    """Return a node list witnessing a cycle inside ``allowed``, or []."""
    WHITE, GRAY, BLACK = 0, 1, 2
    color = {n: WHITE for n in allowed}
    parent: dict[str, str] = {}
    for root in sorted(allowed):
        if color[root] != WHITE:
            continue
        stack: list[tuple[str, int]] = [(root, 0)]
        color[root] = GRAY
        while stack:
            node, idx = stack[-1]
            succs = [s for s in adjacency.get(node, ()) if s in allowed]
            if idx < len(succs):
                stack[-1] = (node, idx + 1)
                nxt = succs[idx]
                if color[nxt] == GRAY:
                    # unwind the gray chain to report the cycle
                    cyc = [nxt]
                    cur = node
                    while cur != nxt:
                        cyc.append(cur)
                        cur = parent[cur]
                    cyc.reverse()
                    return cyc
                if color[nxt] == WHITE:
                    color[nxt] = GRAY
                    parent[nxt] = node
                    stack.append((nxt, 0))
            else:
                color[node] = BLACK
                stack.pop()
    return []


def validate(f: Flowchart) -> list[str]:
    """Check the structural invariants; returns a list of violations
    (empty iff the chart is valid). Each violation names the node/edge ids
    involved.
    """
    violations: list[str] = []

    for n in f.nodes.values():
        if not n.label.strip():
            violations.append(f"empty-label: {n.id}")
    for e in f.edges:
        if e.src not in f.nodes:
            violations.append(f"dangling-edge-source: {e.src}->{e.dst}")
        if e.dst not in f.nodes:
            violations.append(f"dangling-edge-target: {e.src}->{e.dst}")
    if any(v.startswith("dangling") for v in violations):
        return violations

    starts = f.start_ids
    ends = f.end_ids
    if not starts:
        violations.append("no-start-node")
    if not ends:
        violations.append("no-end-node")
    if violations:
        return violations

    adj = f.adjacency()
    reachable = _reachable(adj, starts)
    for nid in sorted(f.nodes):
        if nid not in reachable:
            violations.append(f"unreachable: {nid}")

    # every node must be able to complete some task: reverse-reach from ends
    radj: dict[str, list[str]] = {nid: [] for nid in f.nodes}
    for e in f.edges:
        radj[e.dst].append(e.src)
    completing = _reachable(radj, ends)
    for nid in sorted(f.nodes):
        if nid not in completing:
            violations.append(f"dead-end: {nid}")

    # cycles must pass through an output/reflection/end node; equivalently the
    # subgraph induced by the remaining types must be acyclic
    tight = {nid for nid, n in f.nodes.items() if n.node_type not in LOOP_SAFE_TYPES}
    cycle = _has_cycle(adj, tight)
    if cycle:
        violations.append("cycle-without-exit: " + "->".join(cycle))

    # starts accept incoming edges only from reflection or end nodes
    start_set = set(starts)
    for e in f.edges:
        if e.dst in start_set:
            src_type = f.nodes[e.src].node_type
            if src_type not in (NodeType.REFLECTION, NodeType.END):
                violations.append(f"start-incoming: {e.src}->{e.dst}")

    return violations


def successors(f: Flowchart, node_id: str) -> list[tuple[FlowEdge, FlowNode]]:
    """Outgoing edges of ``node_id`` with their target nodes, in a total,
    stable order (target id, then condition)."""
    if node_id not in f.nodes:
        raise KeyError(f"unknown node {node_id!r}")
    out = [e for e in f.edges if e.src == node_id]
    out.sort(key=lambda e: (e.dst, e.condition or ""))
    return [(e, f.nodes[e.dst]) for e in out]


def normalize_label(label: str) -> str:
    return " ".join(label.lower().split())


def canonical_form(f: Flowchart) -> tuple:
    """Id-free canonical form: node class multiset plus edge multiset over
    (type, normalized label) classes. Charts with equal forms are treated as
    isomorphic."""

    def node_key(n: FlowNode) -> tuple[str, str]:
        return (n.node_type.value, normalize_label(n.label))

    node_classes = sorted(node_key(n) for n in f.nodes.values())
    edge_classes = sorted(
        (node_key(f.nodes[e.src]), node_key(f.nodes[e.dst]), (e.condition or "").strip())
        for e in f.edges
    )
    return (tuple(node_classes), tuple(edge_classes))


def isomorphic(f1: Flowchart, f2: Flowchart) -> bool:
    """Structural equality up to node renaming: node types, normalized labels,
    and conditioned edge structure must all correspond."""
    return canonical_form(f1) == canonical_form(f2)
