"""Mermaid flowchart dialect: parsing and canonical serialization.

Supported subset: a ``flowchart TD`` header, rectangle ``ID["label"]`` and
diamond ``ID{"label"}`` node shapes, plain ``-->`` edges and labeled
``-- condition -->`` edges. No subgraph blocks, styling, or click handlers.

Node types are inferred from label prefixes (``Start:``, ``Action/Decision:``,
``Output:``, ``Reflection:``, ``End:``). The combined ``Action/Decision:``
prefix resolves by shape: diamond means decision, rectangle means action.
A JSON sidecar may override inferred types and attach intent/domain/schema
attributes.
"""

from __future__ import annotations

import json
import re
from pathlib import Path

from .errors import InvalidFlowchartError, MermaidError, UnsupportedDirectionError
from .flowchart import Flowchart, FlowEdge, FlowNode, NodeType, make_flowchart, validate

HEADER = "flowchart TD"

_ID = r"[A-Za-z][A-Za-z0-9_]*"

_EDGE_RE = re.compile(
    rf'^(?P<lid>{_ID})\s*(?:\["(?P<lrect>[^"]*)"\]|\{{"(?P<ldiam>[^"]*)"\}})?'
    rf"\s*(?:--\s+(?P<cond>.+?)\s+-->|-->)\s*"
    rf'(?P<rid>{_ID})\s*(?:\["(?P<rrect>[^"]*)"\]|\{{"(?P<rdiam>[^"]*)"\}})?\s*$'
)

_DECL_RE = re.compile(rf'^(?P<id>{_ID})\s*(?:\["(?P<rect>[^"]*)"\]|\{{"(?P<diam>[^"]*)"\}})\s*$')

_HEADER_RE = re.compile(r"^flowchart\s+(\S+)\s*$")

_PREFIX_TYPES = {
    "Start": NodeType.START,
    "Output": NodeType.OUTPUT,
    "Reflection": NodeType.REFLECTION,
    "End": NodeType.END,
}

_SERIALIZE_PREFIX = {
    NodeType.START: "Start: ",
    NodeType.ACTION: "Action/Decision: ",
    NodeType.DECISION: "Action/Decision: ",
    NodeType.OUTPUT: "Output: ",
    NodeType.REFLECTION: "Reflection: ",
    NodeType.END: "End: ",
}


class _Decl:
    __slots__ = ("shape", "raw_label", "line")

    def __init__(self, shape: str, raw_label: str, line: int):
        self.shape = shape  # "rect" | "diamond"
        self.raw_label = raw_label
        self.line = line


def _infer_type(decl: _Decl) -> tuple[NodeType, str]:
    """Split an inferred node type and the prefix-free label out of a
    declaration."""
    raw = decl.raw_label
    for prefix, ntype in _PREFIX_TYPES.items():
        if raw.startswith(prefix + ":"):
            return ntype, raw[len(prefix) + 1 :].strip()
    if raw.startswith("Action/Decision:"):
        label = raw[len("Action/Decision:") :].strip()
    else:
        label = raw.strip()
    ntype = NodeType.DECISION if decl.shape == "diamond" else NodeType.ACTION
    return ntype, label


def _record_decl(
    decls: dict[str, _Decl], node_id: str, shape: str, raw_label: str, line_no: int
) -> None:
    prev = decls.get(node_id)
    if prev is None:
        decls[node_id] = _Decl(shape, raw_label, line_no)
    elif prev.shape != shape or prev.raw_label != raw_label:
        raise MermaidError(
            f"conflicting redeclaration of node {node_id!r} (first declared on line {prev.line})",
            line=line_no,
        )


def _parse_statements(text: str, name: str) -> Flowchart:
    """Parse statements into an unvalidated flowchart; raises MermaidError
    for syntax problems only."""
    decls: dict[str, _Decl] = {}
    referenced: dict[str, int] = {}
    edges: list[FlowEdge] = []
    edge_keys: set[tuple[str, str, str]] = set()
    header_seen = False

    for line_no, raw_line in enumerate(text.split("\n"), start=1):
        line = raw_line.strip()
        if not line:
            continue
        if not header_seen:
            m = _HEADER_RE.match(line)
            if not m:
                raise MermaidError(f"expected {HEADER!r} header, got {line!r}", line=line_no)
            if m.group(1) != "TD":
                raise UnsupportedDirectionError(
                    f"unsupported direction {m.group(1)!r} (only TD)", line=line_no
                )
            header_seen = True
            continue

        m = _EDGE_RE.match(line)
        if m:
            for gid, grect, gdiam in (("lid", "lrect", "ldiam"), ("rid", "rrect", "rdiam")):
                nid = m.group(gid)
                if m.group(grect) is not None:
                    _record_decl(decls, nid, "rect", m.group(grect), line_no)
                elif m.group(gdiam) is not None:
                    _record_decl(decls, nid, "diamond", m.group(gdiam), line_no)
                referenced.setdefault(nid, line_no)
            cond = m.group("cond")
            cond = cond.strip() if cond is not None else None
            edge = FlowEdge(src=m.group("lid"), dst=m.group("rid"), condition=cond or None)
            if edge.key() in edge_keys:
                raise MermaidError(
                    f"duplicate edge {edge.src} --> {edge.dst} [{cond or ''}]", line=line_no
                )
            edge_keys.add(edge.key())
            edges.append(edge)
            continue

        m = _DECL_RE.match(line)
        if m:
            nid = m.group("id")
            if m.group("rect") is not None:
                _record_decl(decls, nid, "rect", m.group("rect"), line_no)
            else:
                _record_decl(decls, nid, "diamond", m.group("diam"), line_no)
            referenced.setdefault(nid, line_no)
            continue

        raise MermaidError(f"unrecognized statement: {line!r}", line=line_no, column=1)

    if not header_seen:
        raise MermaidError(f"missing {HEADER!r} header", line=1)
    for node_id, line_no in referenced.items():
        if node_id not in decls:
            raise MermaidError(f"node {node_id!r} referenced but never declared", line=line_no)

    nodes = []
    for node_id, decl in decls.items():
        ntype, label = _infer_type(decl)
        nodes.append(FlowNode(id=node_id, node_type=ntype, label=label))
    return make_flowchart(name=name, nodes=nodes, edges=edges)


def parse(text: str, name: str = "flowchart") -> Flowchart:
    """Parse Mermaid text into a validated flowchart.

    Raises :class:`MermaidError` (with line number) on syntax problems,
    :class:`UnsupportedDirectionError` for directions other than TD, and
    :class:`InvalidFlowchartError` naming the violated invariant when the
    parsed graph is structurally illegal.
    """
    chart = _parse_statements(text, name)
    violations = validate(chart)
    if violations:
        raise InvalidFlowchartError(violations)
    return chart


def _check_serializable(f: Flowchart) -> None:
    problems = []
    id_re = re.compile(rf"^{_ID}$")
    for n in f.nodes.values():
        if not id_re.match(n.id):
            problems.append(f"unserializable-id: {n.id!r}")
        if any(c in n.label for c in '"\n\r'):
            problems.append(f"label-quote-or-newline: {n.id}")
    for e in f.edges:
        cond = (e.condition or "").strip()
        if cond and ("-->" in cond or any(c in cond for c in '"\n\r')):
            problems.append(f"unserializable-condition: {e.src}->{e.dst}")
    if problems:
        raise InvalidFlowchartError(problems)


def serialize(f: Flowchart) -> str:
    """Render the canonical Mermaid form: statements sorted by
    (source, target, condition), nodes declared on first use, 4-space
    indentation, diamond shape for decision nodes.

    Deterministic: equal charts produce byte-identical output. Raises
    :class:`InvalidFlowchartError` when the chart fails validation.
    """
    violations = validate(f)
    if violations:
        raise InvalidFlowchartError(violations)
    _check_serializable(f)

    def render_node(node_id: str, declared: set[str]) -> str:
        if node_id in declared:
            return node_id
        declared.add(node_id)
        node = f.nodes[node_id]
        label = _SERIALIZE_PREFIX[node.node_type] + node.label
        if node.node_type == NodeType.DECISION:
            return f'{node_id}{{"{label}"}}'
        return f'{node_id}["{label}"]'

    lines = [HEADER]
    declared: set[str] = set()
    for edge in sorted(f.edges, key=lambda e: e.key()):
        lhs = render_node(edge.src, declared)
        rhs = render_node(edge.dst, declared)
        cond = (edge.condition or "").strip()
        arrow = f"-- {cond} -->" if cond else "-->"
        lines.append(f"    {lhs} {arrow} {rhs}")
    return "\n".join(lines) + "\n"


def sidecar_obj(f: Flowchart) -> dict:
    return {
        "nodes": {
            nid: {
                "type": n.node_type.value,
                "intent": n.intent,
                "domain": n.domain,
                "schemaRef": n.schema_ref,
            }
            for nid, n in sorted(f.nodes.items())
        }
    }


def apply_sidecar(f: Flowchart, sidecar: dict) -> Flowchart:
    """Override node attributes from a sidecar object; the sidecar's type
    wins over anything inferred from label prefixes."""
    entries = sidecar.get("nodes", {})
    nodes = []
    for nid, node in f.nodes.items():
        entry = entries.get(nid)
        if entry:
            node = FlowNode(
                id=nid,
                node_type=NodeType(entry.get("type", node.node_type.value)),
                label=node.label,
                intent=entry.get("intent", node.intent),
                domain=entry.get("domain", node.domain),
                schema_ref=entry.get("schemaRef", node.schema_ref),
            )
        nodes.append(node)
    subgraphs: dict[str, set[str]] = {}
    for n in nodes:
        if n.domain:
            subgraphs.setdefault(n.domain, set()).add(n.id)
    return make_flowchart(name=f.name, nodes=nodes, edges=f.edges, subgraphs=subgraphs)


def load_flowchart(mmd_path: str | Path, sidecar_path: str | Path | None = None) -> Flowchart:
    """Read a chart from a .mmd file plus optional sidecar (defaults to the
    adjacent ``<name>.sidecar.json`` when present). Validation runs after
    sidecar overrides are applied."""
    mmd_path = Path(mmd_path)
    text = mmd_path.read_text(encoding="utf-8")
    if sidecar_path is None:
        candidate = mmd_path.with_suffix(".sidecar.json")
        sidecar_path = candidate if candidate.exists() else None
    chart = _parse_statements(text, name=mmd_path.stem)
    if sidecar_path is not None:
        sidecar = json.loads(Path(sidecar_path).read_text(encoding="utf-8"))
        chart = apply_sidecar(chart, sidecar)
    violations = validate(chart)
    if violations:
        raise InvalidFlowchartError(violations)
    return chart


def save_flowchart(f: Flowchart, mmd_path: str | Path, sidecar_path: str | Path | None = None) -> None:
    mmd_path = Path(mmd_path)
    mmd_path.write_text(serialize(f), encoding="utf-8", newline="\n")
    if sidecar_path is None:
        sidecar_path = mmd_path.with_suffix(".sidecar.json")
    Path(sidecar_path).write_text(
        json.dumps(sidecar_obj(f), indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8",
        newline="\n",
    )
