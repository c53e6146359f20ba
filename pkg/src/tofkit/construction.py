"""Iterative flowchart construction from selected dialogues.

Dialogues are consumed as customer/agent utterance pairs. Three pluggable
oracles drive the build: a domain oracle routes each pair to a per-domain
subgraph, an intent oracle produces a verb-initial intent descriptor, and a
node-type oracle types newly created nodes. Nodes are reused whenever an
equal normalized intent already exists in the target subgraph, so repeated
dialogues integrate without duplication and new requirements only ever add
nodes.

Every build yields a structurally valid chart: edges that would close a loop
not passing through an output/reflection/end node are skipped (recorded in
the trace), and nodes left without a continuation are wired to their domain's
end node during finalization.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .corpus import AGENT, CUSTOMER, Dialogue, Utterance, normalize_intent
from .errors import DataError, InvalidFlowchartError, OracleFailureError
from .flowchart import (
    Flowchart,
    FlowEdge,
    FlowNode,
    LOOP_SAFE_TYPES,
    NodeType,
    canonical_ids,
    make_flowchart,
    validate,
)

ROOT_LABEL = "Begin customer service session"


@dataclass(frozen=True)
class UtterancePair:
    customer: Utterance
    agent: Utterance
    pair_index: int  # 1-based


@dataclass(frozen=True)
class OracleSuite:
    """The three construction oracles.

    ``domain_oracle(pair)`` names the pair's service domain(s); when several
    are returned the first is used for routing and the rest are recorded as
    alternates. ``intent_oracle(pair, domain)`` produces the intent
    descriptor. ``node_type_oracle(intent, domain)`` types a newly created
    node; it must never return start or end (those are structural).
    """

    domain_oracle: Callable[[UtterancePair], str | Sequence[str]]
    intent_oracle: Callable[[UtterancePair, str], str]
    node_type_oracle: Callable[[str, str], NodeType | str]


@dataclass
class PairTrace:
    dialogue_id: str
    pair_index: int
    domain: str
    alternates: tuple[str, ...]
    intent: str
    decision: str  # "created" | "reused"
    node_id: str
    edges_added: list[tuple[str, str]] = field(default_factory=list)
    edges_skipped: list[tuple[str, str]] = field(default_factory=list)

    def to_obj(self) -> dict:
        return {
            "dialogueId": self.dialogue_id,
            "pairIndex": self.pair_index,
            "domain": self.domain,
            "alternates": list(self.alternates),
            "intent": self.intent,
            "decision": f"{self.decision}:{self.node_id}",
            "edgesAdded": [list(e) for e in self.edges_added],
            "edgesSkipped": [list(e) for e in self.edges_skipped],
        }


@dataclass
class BuildTrace:
    per_pair: list[PairTrace] = field(default_factory=list)
    domain_calls: int = 0
    intent_calls: int = 0
    node_type_calls: int = 0

    @property
    def oracle_calls(self) -> int:
        return self.domain_calls + self.intent_calls + self.node_type_calls


def write_trace_jsonl(trace: BuildTrace, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for entry in trace.per_pair:
            fh.write(json.dumps(entry.to_obj(), ensure_ascii=False) + "\n")


def _coalesce(utterances: Sequence[Utterance]) -> list[Utterance]:
    """Concatenate consecutive same-speaker turns with a space."""
    merged: list[Utterance] = []
    for utt in utterances:
        if merged and merged[-1].speaker == utt.speaker:
            prev = merged[-1]
            merged[-1] = Utterance(
                index=prev.index,
                speaker=prev.speaker,
                text=prev.text + " " + utt.text,
                intents=prev.intents | utt.intents,
            )
        else:
            merged.append(utt)
    return merged


def pair_up(d: Dialogue) -> list[UtterancePair]:
    """Split a dialogue into (customer, agent) pairs.

    Same-speaker runs are coalesced first; a leading agent turn (no customer
    to answer) and a trailing customer turn (no agent reply) are dropped.
    """
    turns = _coalesce(d.utterances)
    if turns and turns[0].speaker == AGENT:
        turns = turns[1:]
    pairs: list[UtterancePair] = []
    for i in range(0, len(turns) - 1, 2):
        pairs.append(
            UtterancePair(customer=turns[i], agent=turns[i + 1], pair_index=len(pairs) + 1)
        )
    return pairs


@dataclass(frozen=True)
class CostEstimate:
    pair_count: int
    calls_min: int  # node type oracle skipped on every pair (full reuse)
    calls_max: int  # node type oracle consulted on every pair
    time_min_s: float
    time_max_s: float


def estimate_cost(dialogues: Iterable[Dialogue], oracle_latency_s: float = 1.0) -> CostEstimate:
    pairs = sum(len(pair_up(d)) for d in dialogues)
    calls_min, calls_max = 2 * pairs, 3 * pairs
    return CostEstimate(
        pair_count=pairs,
        calls_min=calls_min,
        calls_max=calls_max,
        time_min_s=calls_min * oracle_latency_s,
        time_max_s=calls_max * oracle_latency_s,
    )


class _Builder:
    def __init__(self, name: str):
        self._ids = canonical_ids()
        self.name = name
        self.nodes: dict[str, FlowNode] = {}
        self.edges: list[FlowEdge] = []
        self._edge_pairs: set[tuple[str, str]] = set()
        self.subgraphs: dict[str, set[str]] = {}
        self._intent_index: dict[tuple[str, str], str] = {}
        self._entry: dict[str, str] = {}
        self._end: dict[str, str] = {}
        self.root = self._new_node(NodeType.START, ROOT_LABEL, intent=None, domain=None)

    def _new_node(
        self, node_type: NodeType, label: str, intent: str | None, domain: str | None
    ) -> str:
        node_id = next(self._ids)
        self.nodes[node_id] = FlowNode(
            id=node_id, node_type=node_type, label=label, intent=intent, domain=domain
        )
        if domain:
            self.subgraphs.setdefault(domain, set()).add(node_id)
        if intent and domain:
            self._intent_index[(domain, intent)] = node_id
        return node_id

    def _tight(self, node_id: str) -> bool:
        return self.nodes[node_id].node_type not in LOOP_SAFE_TYPES

    def _closes_illegal_cycle(self, src: str, dst: str) -> bool:
        # a new cycle through src->dst is illegal only when every node on it
        # is start/action/decision typed; that requires a dst->src path inside
        # that induced subgraph
        if not (self._tight(src) and self._tight(dst)):
            return False
        stack = [dst]
        seen = set()
        while stack:
            cur = stack.pop()
            if cur == src:
                return True
            if cur in seen:
                continue
            seen.add(cur)
            for e in self.edges:
                if e.src == cur and self._tight(e.dst) and e.dst not in seen:
                    stack.append(e.dst)
        return False

    def try_add_edge(self, src: str, dst: str) -> tuple[bool, bool]:
        """Returns (added, skipped): exists/self-loop/illegal-cycle edges are
        skipped."""
        if src == dst:
            return False, True
        if (src, dst) in self._edge_pairs:
            return False, False
        if self._closes_illegal_cycle(src, dst):
            return False, True
        self.edges.append(FlowEdge(src=src, dst=dst))
        self._edge_pairs.add((src, dst))
        return True, False

    def entry_node(self, domain: str) -> tuple[str, bool]:
        if domain in self._entry:
            return self._entry[domain], False
        node_id = self._new_node(
            NodeType.ACTION,
            f"Open {domain} request",
            intent=normalize_intent(f"open {domain} request"),
            domain=domain,
        )
        self._entry[domain] = node_id
        self.try_add_edge(self.root, node_id)
        return node_id, True

    def end_node(self, domain: str) -> str:
        if domain not in self._end:
            self._end[domain] = self._new_node(
                NodeType.END, f"Complete {domain} task", intent=None, domain=domain
            )
        return self._end[domain]

    def lookup_intent(self, domain: str, intent: str) -> str | None:
        return self._intent_index.get((domain, intent))

    def finalize(self) -> Flowchart:
        # nodes with no continuation get wired to their domain's end node so
        # every position in the chart can complete a task
        for node_id in list(self.nodes):
            node = self.nodes[node_id]
            if node.node_type == NodeType.END:
                continue
            if any(e.src == node_id for e in self.edges):
                continue
            domain = node.domain or next(iter(self._entry), None)
            if domain is None:
                continue
            self.try_add_edge(node_id, self.end_node(domain))
        chart = make_flowchart(
            name=self.name, nodes=self.nodes.values(), edges=self.edges, subgraphs=self.subgraphs
        )
        violations = validate(chart)
        if violations:  # construction guarantees validity; reaching this is a bug
            raise InvalidFlowchartError(violations)
        return chart


def build_flowchart(
    dialogues: Sequence[Dialogue], oracles: OracleSuite, name: str = "flowchart"
) -> tuple[Flowchart, BuildTrace]:
    """Run the iterative construction over ``dialogues`` in order.

    Returns the validated chart and a per-pair build trace (routing decisions,
    node reuse/creation, edges added or skipped, oracle call counts).
    """
    if not dialogues:
        raise DataError("no dialogues to build from")
    builder = _Builder(name)
    trace = BuildTrace()
    total_pairs = 0

    for dialogue in dialogues:
        prev_node: str | None = None
        visited_domains: set[str] = set()
        last_domain: str | None = None
        for pair in pair_up(dialogue):
            total_pairs += 1
            try:
                raw_domains = oracles.domain_oracle(pair)
            except Exception as exc:
                raise OracleFailureError(dialogue.id, pair.pair_index, exc) from exc
            trace.domain_calls += 1
            domains = [raw_domains] if isinstance(raw_domains, str) else list(raw_domains)
            domains = [d.strip().lower() for d in domains if d and d.strip()]
            if not domains:
                raise OracleFailureError(
                    dialogue.id, pair.pair_index, ValueError("domain oracle returned nothing")
                )
            domain, alternates = domains[0], tuple(domains[1:])
            builder.entry_node(domain)

            try:
                descriptor = oracles.intent_oracle(pair, domain)
            except Exception as exc:
                raise OracleFailureError(dialogue.id, pair.pair_index, exc) from exc
            trace.intent_calls += 1
            descriptor = (descriptor or "").strip()
            intent = normalize_intent(descriptor)
            if not intent:
                raise OracleFailureError(
                    dialogue.id, pair.pair_index, ValueError("intent oracle returned nothing")
                )

            node_id = builder.lookup_intent(domain, intent)
            if node_id is not None:
                decision = "reused"
            else:
                try:
                    raw_type = oracles.node_type_oracle(descriptor, domain)
                except Exception as exc:
                    raise OracleFailureError(dialogue.id, pair.pair_index, exc) from exc
                trace.node_type_calls += 1
                try:
                    node_type = NodeType(raw_type)
                except ValueError as exc:
                    raise OracleFailureError(dialogue.id, pair.pair_index, exc) from exc
                if node_type in (NodeType.START, NodeType.END):
                    raise OracleFailureError(
                        dialogue.id,
                        pair.pair_index,
                        ValueError(f"node type oracle returned structural type {node_type.value}"),
                    )
                node_id = builder._new_node(node_type, descriptor, intent=intent, domain=domain)
                decision = "created"

            entry = PairTrace(
                dialogue_id=dialogue.id,
                pair_index=pair.pair_index,
                domain=domain,
                alternates=alternates,
                intent=intent,
                decision=decision,
                node_id=node_id,
            )

            sources = []
            if domain not in visited_domains:
                sources.append(builder._entry[domain])
                if prev_node is not None and prev_node not in sources:
                    sources.append(prev_node)
            elif prev_node is not None:
                sources.append(prev_node)
            for src in sources:
                added, skipped = builder.try_add_edge(src, node_id)
                if added:
                    entry.edges_added.append((src, node_id))
                elif skipped:
                    entry.edges_skipped.append((src, node_id))

            trace.per_pair.append(entry)
            visited_domains.add(domain)
            prev_node = node_id
            last_domain = domain

        if prev_node is not None and last_domain is not None:
            end_id = builder.end_node(last_domain)
            added, skipped = builder.try_add_edge(prev_node, end_id)
            if trace.per_pair:
                if added:
                    trace.per_pair[-1].edges_added.append((prev_node, end_id))
                elif skipped:
                    trace.per_pair[-1].edges_skipped.append((prev_node, end_id))

    if total_pairs == 0:
        raise DataError("no customer/agent pairs could be formed from the dialogues")
    return builder.finalize(), trace
