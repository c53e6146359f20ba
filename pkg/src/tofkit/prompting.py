"""Flowchart-augmented prompt assembly and tracked-reply parsing.

The composed prompt is a deterministic layout: the global task description,
each chart as a fenced Mermaid block followed by the parameter schemas its
action nodes reference, and (optionally) the procedure-tracking instruction
that asks the agent to announce its active node as a ``[node: X]`` prefix on
every reply. That prefix replaces conventional dialogue-state tracking: the
agent's position in the task flow is part of the generated text itself.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .errors import DataError
from .flowchart import Flowchart
from .mermaid import serialize

TRACKING_INSTRUCTION = (
    "Procedure tracking: before every reply, state the flowchart node you are "
    "acting from as a leading tag of the form [node: X], then continue with "
    "the reply text."
)

_TRACKED_RE = re.compile(r"^\s*\[node:\s*(?P<id>[^\]]+?)\s*\]\s?(?P<rest>.*)$", re.DOTALL)


@dataclass(frozen=True)
class SchemaParameter:
    name: str
    semantic_type: str
    required: bool = True


@dataclass(frozen=True)
class NodeSchema:
    schema_ref: str
    description: str
    parameters: tuple[SchemaParameter, ...] = ()

    def __post_init__(self):
        names = [p.name for p in self.parameters]
        if len(names) != len(set(names)):
            raise DataError(f"schema {self.schema_ref!r} has duplicate parameter names")


def load_schemas(path: str | Path) -> dict[str, NodeSchema]:
    """Read a schema registry: {ref: {"description", "parameters":
    [{"name","type","required"}]}}."""
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    schemas: dict[str, NodeSchema] = {}
    for ref, entry in obj.items():
        params = tuple(
            SchemaParameter(
                name=p["name"],
                semantic_type=p.get("type", "string"),
                required=bool(p.get("required", True)),
            )
            for p in entry.get("parameters", [])
        )
        schemas[ref] = NodeSchema(
            schema_ref=ref, description=entry.get("description", ""), parameters=params
        )
    return schemas


@dataclass(frozen=True)
class PromptBundle:
    global_description: str
    charts: tuple[Flowchart, ...]
    schemas: Mapping[str, NodeSchema]
    tracking: bool
    rendered: str


def _schema_table(schema: NodeSchema) -> str:
    lines = []
    for p in schema.parameters:
        flag = "required" if p.required else "optional"
        lines.append(f"    {p.name:<24}{p.semantic_type} ({flag})")
    return "\n".join(lines)


def compose_prompt(
    nl: str,
    charts: Sequence[Flowchart],
    schemas: Mapping[str, NodeSchema] | None = None,
    tracking_on: bool = True,
) -> PromptBundle:
    """Assemble the composite prompt. Every schema reference carried by any
    chart node must resolve; a dangling reference is an error."""
    schemas = schemas or {}
    sections = [nl.strip(), ""]
    for i, chart in enumerate(charts, start=1):
        for nid in sorted(chart.nodes):
            ref = chart.nodes[nid].schema_ref
            if ref is not None and ref not in schemas:
                raise DataError(
                    f"node {nid!r} in chart {chart.name!r} references unknown schema {ref!r}"
                )
        sections.append(f"## Task flowchart {i}: {chart.name}")
        sections.append("```mermaid")
        sections.append(serialize(chart).rstrip("\n"))
        sections.append("```")
        schema_lines = []
        for nid in sorted(chart.nodes):
            node = chart.nodes[nid]
            if node.schema_ref is None:
                continue
            schema = schemas[node.schema_ref]
            schema_lines.append(f"{nid} ({node.label}) -> {schema.schema_ref}: {schema.description}")
            table = _schema_table(schema)
            if table:
                schema_lines.append(table)
        if schema_lines:
            sections.append("Parameter schemas:")
            sections.extend(schema_lines)
        sections.append("")
    if tracking_on:
        sections.append(TRACKING_INSTRUCTION)
    rendered = "\n".join(sections).rstrip("\n") + "\n"
    return PromptBundle(
        global_description=nl,
        charts=tuple(charts),
        schemas=dict(schemas),
        tracking=tracking_on,
        rendered=rendered,
    )


@dataclass(frozen=True)
class TrackedReply:
    node_id: str | None
    reply: str
    unknown_node: bool = False


def format_tracked_reply(node_id: str, reply: str) -> str:
    return f"[node: {node_id}] {reply}"


def parse_tracked_reply(text: str, chart: Flowchart | None = None) -> TrackedReply:
    """Split a leading ``[node: X]`` tag off a reply.

    Untagged text comes back with ``node_id=None``. When a chart is supplied
    and the tag names a node the chart does not contain, the tag is still
    returned but flagged via ``unknown_node``.
    """
    m = _TRACKED_RE.match(text)
    if not m:
        return TrackedReply(node_id=None, reply=text)
    node_id = m.group("id")
    reply = m.group("rest")
    unknown = chart is not None and node_id not in chart.nodes
    return TrackedReply(node_id=node_id, reply=reply, unknown_node=unknown)
