"""Aggregate locally built flowcharts into one global chart.

Nodes from all input charts are pooled, clustered by token similarity, and
each cluster is judged for semantic coherence (rule-based by default, or by
a backend). Coherent clusters collapse to their medoid, inheriting the union
of predecessor and successor edges; incoherent clusters keep their original
nodes with endpoints remapped. The result carries only procedural structure,
never dialogue content, which is what makes shipping charts between sites
privacy-preserving; :func:`privacy_scan` is the final release gate.

Input charts are canonically ordered before pooling, so merging is invariant
to the order in which charts arrive, and two nodes from the same input chart
never share a cluster, which keeps merging a single chart an identity.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .errors import InvalidFlowchartError
from .flowchart import (
    Flowchart,
    FlowEdge,
    FlowNode,
    canonical_ids,
    make_flowchart,
    validate,
)
from .mermaid import serialize

_WORD_RE = re.compile(r"\w+")


def node_tokens(node: FlowNode) -> frozenset[str]:
    """Token set used for similarity: the normalized intent when present,
    otherwise the label."""
    basis = node.intent if node.intent else node.label
    return frozenset(t.lower() for t in _WORD_RE.findall(basis))


def jaccard(a: frozenset[str], b: frozenset[str]) -> float:
    if not a and not b:
        return 1.0
    union = a | b
    return len(a & b) / len(union) if union else 1.0


@dataclass(frozen=True)
class PoolEntry:
    origin: int  # position in the canonically ordered chart list
    node: FlowNode


@dataclass(frozen=True)
class NodePool:
    entries: tuple[PoolEntry, ...]


@dataclass
class NodeCluster:
    members: tuple[PoolEntry, ...]
    coherent: bool | None = None
    representative: FlowNode | None = None


def build_pool(charts: Sequence[Flowchart]) -> NodePool:
    entries = []
    for origin, chart in enumerate(charts):
        for nid in sorted(chart.nodes):
            entries.append(PoolEntry(origin=origin, node=chart.nodes[nid]))
    return NodePool(entries=tuple(entries))


def cluster_nodes(pool: NodePool, threshold: float) -> list[NodeCluster]:
    """Average-linkage agglomerative clustering over pairwise token Jaccard,
    cut at ``threshold``. Two nodes from the same origin chart are never
    placed in one cluster."""
    if not pool.entries:
        return []
    tokens = [node_tokens(e.node) for e in pool.entries]
    clusters: list[list[int]] = [[i] for i in range(len(pool.entries))]

    def origins(cluster: list[int]) -> set[int]:
        return {pool.entries[i].origin for i in cluster}

    def avg_sim(a: list[int], b: list[int]) -> float:
        total = sum(jaccard(tokens[i], tokens[j]) for i in a for j in b)
        return total / (len(a) * len(b))

    while True:
        best: tuple[float, int, int] | None = None
        for i in range(len(clusters)):
            for j in range(i + 1, len(clusters)):
                if origins(clusters[i]) & origins(clusters[j]):
                    continue
                sim = avg_sim(clusters[i], clusters[j])
                if sim < threshold:
                    continue
                if best is None or sim > best[0] + 1e-12:
                    best = (sim, i, j)
        if best is None:
            break
        _, i, j = best
        clusters[i] = clusters[i] + clusters[j]
        del clusters[j]

    clusters.sort(key=lambda c: min(c))
    return [
        NodeCluster(members=tuple(pool.entries[i] for i in sorted(c))) for c in clusters
    ]


def rule_judge(cluster: NodeCluster, coherence_threshold: float = 0.6) -> bool:
    """Default coherence rule: one node type throughout and every member pair
    at least ``coherence_threshold`` similar. Singletons are vacuously
    coherent."""
    members = cluster.members
    if len(members) <= 1:
        return True
    if len({e.node.node_type for e in members}) > 1:
        return False
    toks = [node_tokens(e.node) for e in members]
    min_sim = min(
        jaccard(toks[i], toks[j]) for i in range(len(toks)) for j in range(i + 1, len(toks))
    )
    return min_sim >= coherence_threshold


def oracle_judge(backend) -> Callable[[NodeCluster], bool]:
    """Coherence judge that asks a ``complete()`` backend for a yes/no
    verdict."""
    from .oracles import OracleRequest

    def judge(cluster: NodeCluster) -> bool:
        listing = "\n".join(
            f"{e.node.id}: [{e.node.node_type.value}] {e.node.label}" for e in cluster.members
        )
        verdict = backend.complete(
            OracleRequest(kind="coherence", payload={"nodes": listing})
        )
        return verdict.strip().lower().startswith("y")

    return judge


def judge_coherence(
    cluster: NodeCluster,
    judge: Callable[[NodeCluster], bool] | None = None,
    coherence_threshold: float = 0.6,
) -> bool:
    if judge is not None:
        return judge(cluster)
    return rule_judge(cluster, coherence_threshold)


def _medoid(cluster: NodeCluster) -> FlowNode:
    members = cluster.members
    if len(members) == 1:
        return members[0].node
    toks = [node_tokens(e.node) for e in members]

    def avg_sim(k: int) -> float:
        return sum(jaccard(toks[k], toks[j]) for j in range(len(members)) if j != k) / (
            len(members) - 1
        )

    # medoid = max average similarity; ties resolved by (label, id, origin)
    best_score = max(avg_sim(k) for k in range(len(members)))
    tied = [k for k in range(len(members)) if abs(avg_sim(k) - best_score) <= 1e-12]
    tied.sort(key=lambda k: (members[k].node.label, members[k].node.id, members[k].origin))
    return members[tied[0]].node


@dataclass
class MergeConfig:
    cluster_threshold: float = 0.5
    coherence_threshold: float = 0.6
    judge: Callable[[NodeCluster], bool] | None = None
    name: str = "global"


@dataclass
class MergeResult:
    chart: Flowchart
    clusters: list[NodeCluster]
    chart_order: list[int]  # original index of each canonically ordered chart
    node_map: dict[tuple[int, str], str]  # (ordered chart pos, node id) -> merged id

    def report_obj(self) -> dict:
        cluster_objs = []
        for cluster in self.clusters:
            members = [
                {
                    "chart": self.chart_order[e.origin],
                    "nodeId": e.node.id,
                    "label": e.node.label,
                    "type": e.node.node_type.value,
                }
                for e in cluster.members
            ]
            rep_id = self.node_map[(cluster.members[0].origin, cluster.members[0].node.id)]
            cluster_objs.append(
                {
                    "members": members,
                    "coherent": bool(cluster.coherent),
                    "representative": {
                        "mergedId": rep_id,
                        "label": cluster.representative.label,
                    }
                    if cluster.coherent and cluster.representative
                    else None,
                }
            )
        return {
            "charts": len(self.chart_order),
            "mergedNodes": len(self.chart.nodes),
            "clusters": cluster_objs,
        }

    def write_report(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.report_obj(), indent=2, ensure_ascii=False) + "\n",
            encoding="utf-8",
            newline="\n",
        )


def merge_global(charts: Sequence[Flowchart], config: MergeConfig | None = None) -> MergeResult:
    """Run the pool/cluster/judge/merge pipeline over local charts."""
    config = config or MergeConfig()
    if not charts:
        raise ValueError("no charts to merge")
    for chart in charts:
        violations = validate(chart)
        if violations:
            raise InvalidFlowchartError([f"{chart.name}: {v}" for v in violations])

    order = sorted(range(len(charts)), key=lambda i: (serialize(charts[i]), i))
    ordered = [charts[i] for i in order]

    pool = build_pool(ordered)
    clusters = cluster_nodes(pool, config.cluster_threshold)
    for cluster in clusters:
        cluster.coherent = judge_coherence(cluster, config.judge, config.coherence_threshold)
        if cluster.coherent:
            cluster.representative = _medoid(cluster)

    ids = canonical_ids()
    merged_nodes: list[FlowNode] = []
    node_map: dict[tuple[int, str], str] = {}
    for cluster in clusters:
        if cluster.coherent:
            rep = cluster.representative
            new_id = next(ids)
            merged_nodes.append(
                FlowNode(
                    id=new_id,
                    node_type=rep.node_type,
                    label=rep.label,
                    intent=rep.intent,
                    domain=rep.domain,
                    schema_ref=rep.schema_ref,
                )
            )
            for entry in cluster.members:
                node_map[(entry.origin, entry.node.id)] = new_id
        else:
            for entry in cluster.members:
                new_id = next(ids)
                node = entry.node
                merged_nodes.append(
                    FlowNode(
                        id=new_id,
                        node_type=node.node_type,
                        label=node.label,
                        intent=node.intent,
                        domain=node.domain,
                        schema_ref=node.schema_ref,
                    )
                )
                node_map[(entry.origin, entry.node.id)] = new_id

    edges: list[FlowEdge] = []
    seen: set[tuple[str, str, str]] = set()
    for origin, chart in enumerate(ordered):
        for e in chart.edges:
            src = node_map[(origin, e.src)]
            dst = node_map[(origin, e.dst)]
            if src == dst:
                continue  # collapsed pre/post unions can fold an edge onto one node
            edge = FlowEdge(src=src, dst=dst, condition=e.condition)
            if edge.key() in seen:
                continue
            seen.add(edge.key())
            edges.append(edge)

    subgraphs: dict[str, set[str]] = {}
    for node in merged_nodes:
        if node.domain:
            subgraphs.setdefault(node.domain, set()).add(node.id)

    merged = make_flowchart(
        name=config.name, nodes=merged_nodes, edges=edges, subgraphs=subgraphs
    )
    violations = validate(merged)
    if violations:
        raise InvalidFlowchartError(violations)
    return MergeResult(chart=merged, clusters=clusters, chart_order=order, node_map=node_map)


DEFAULT_PRIVACY_PATTERNS: tuple[tuple[str, str], ...] = (
    ("digit-run", r"\d{6,}"),
    ("email", r"[A-Za-z0-9_.+-]+@[A-Za-z0-9-]+\.[A-Za-z0-9.-]+"),
)


@dataclass(frozen=True)
class PrivacyFinding:
    kind: str
    location: str  # "node:X" or "edge:X->Y"
    excerpt: str


def privacy_scan(
    chart: Flowchart,
    patterns: Iterable[tuple[str, str]] = DEFAULT_PRIVACY_PATTERNS,
    names: Iterable[str] = (),
) -> list[PrivacyFinding]:
    """Scan node labels and edge conditions for likely personal data: long
    digit runs, email-like tokens, and any supplied name list. An empty
    result is the release gate for shipping a chart off-site."""
    compiled = [(kind, re.compile(pat)) for kind, pat in patterns]
    for name in names:
        compiled.append(("name", re.compile(rf"\b{re.escape(name)}\b", re.IGNORECASE)))
    findings: list[PrivacyFinding] = []

    def scan(text: str, location: str) -> None:
        for kind, regex in compiled:
            m = regex.search(text)
            if m:
                findings.append(PrivacyFinding(kind=kind, location=location, excerpt=m.group(0)))

    for nid in sorted(chart.nodes):
        node = chart.nodes[nid]
        scan(node.label, f"node:{nid}")
        if node.intent:
            scan(node.intent, f"node:{nid}")
    for e in chart.edges:
        if e.condition:
            scan(e.condition, f"edge:{e.src}->{e.dst}")
    return findings
