"""Coverage metrics: utterance matching ratio and complete path coverage.

Utterances are mapped to flowchart nodes (or to no-match) by a pluggable
classifier. UMR is the matched fraction per dialogue. CPC counts dialogues
whose mapped node sequence — after collapsing consecutive duplicates — walks
edge-adjacent from a start node to an end node with no unmatched gap in
between; the relaxed variant accepts any contiguous such sub-walk, the strict
variant anchors at the first start occurrence.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .corpus import Dialogue
from .errors import DataError
from .flowchart import Flowchart, NodeType
from .oracles import OracleRequest

NO_MATCH = None

_TOKEN_RE = re.compile(r"\w+")

SPEAKER_CHOICES = ("both", "customer", "agent")


@dataclass
class NodeAssignment:
    """One (utterance index, node id or None) entry per utterance, in order."""

    per_utterance: list[tuple[int, str | None]]
    warnings: list[str] = field(default_factory=list)

    @classmethod
    def from_nodes(cls, nodes: Sequence[str | None]) -> "NodeAssignment":
        return cls(per_utterance=[(i, n) for i, n in enumerate(nodes)])

    def nodes(self) -> list[str | None]:
        return [n for _, n in self.per_utterance]


@dataclass
class CoverageReport:
    umr_per_dialogue: list[tuple[str, float]]
    umr_avg: float
    cpc: float
    relaxed: bool
    covered_ids: list[str] = field(default_factory=list)

    def to_json_obj(self) -> dict:
        return {
            "umrPerDialogue": [{"dialogueId": d, "umr": v} for d, v in self.umr_per_dialogue],
            "umrAvg": self.umr_avg,
            "cpc": self.cpc,
            "relaxed": self.relaxed,
            "covered": sorted(self.covered_ids),
        }


def write_report_json(report: CoverageReport, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(report.to_json_obj(), indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8",
        newline="\n",
    )


def _speaker_indices(d: Dialogue, speakers: str) -> list[int]:
    if speakers not in SPEAKER_CHOICES:
        raise ValueError(f"speakers must be one of {SPEAKER_CHOICES}")
    if speakers == "both":
        return list(range(len(d.utterances)))
    return [u.index for u in d.utterances if u.speaker == speakers]


def umr(d: Dialogue, assignment: NodeAssignment, speakers: str = "both") -> float:
    """Fraction of (selected-speaker) utterances mapped to some node."""
    if len(assignment.per_utterance) != len(d.utterances):
        raise DataError(
            f"assignment length {len(assignment.per_utterance)} != utterance count {len(d.utterances)}"
        )
    indices = set(_speaker_indices(d, speakers))
    if not indices:
        raise DataError(f"dialogue {d.id!r} has no {speakers!r} utterances")
    matched = sum(
        1 for idx, node in assignment.per_utterance if idx in indices and node is not None
    )
    return matched / len(indices)


def _collapse(seq: list[str | None]) -> list[str | None]:
    out: list[str | None] = []
    for item in seq:
        if not out or out[-1] != item:
            out.append(item)
    return out


def _adjacent(f: Flowchart, pairs: set[tuple[str, str]], u: str, v: str) -> bool:
    return (u, v) in pairs


def _edge_pairs(f: Flowchart) -> set[tuple[str, str]]:
    return {(e.src, e.dst) for e in f.edges}


def dialogue_covered(
    f: Flowchart, mapped: Sequence[str | None], relaxed: bool = False
) -> bool:
    """Decide coverage for one dialogue's mapped node sequence.

    Strict: the window from the first start-typed node to the next end-typed
    node must contain no unmatched entries and each consecutive node pair
    must be an edge. Relaxed: any contiguous sub-walk from a start to an end
    qualifies.
    """
    seq = _collapse(list(mapped))
    pairs = _edge_pairs(f)

    def is_type(node_id: str | None, t: NodeType) -> bool:
        return node_id is not None and node_id in f.nodes and f.nodes[node_id].node_type == t

    if relaxed:
        for i, nid in enumerate(seq):
            if not is_type(nid, NodeType.START):
                continue
            j = i
            while True:
                if is_type(seq[j], NodeType.END):
                    return True
                if j + 1 >= len(seq):
                    break
                nxt = seq[j + 1]
                if nxt is None or seq[j] is None or not _adjacent(f, pairs, seq[j], nxt):
                    break
                j += 1
        return False

    start_idx = next((i for i, n in enumerate(seq) if is_type(n, NodeType.START)), None)
    if start_idx is None:
        return False
    end_idx = next(
        (j for j in range(start_idx + 1, len(seq)) if is_type(seq[j], NodeType.END)), None
    )
    if end_idx is None:
        return False
    window = seq[start_idx : end_idx + 1]
    if any(n is None for n in window):
        return False
    return all(_adjacent(f, pairs, window[k], window[k + 1]) for k in range(len(window) - 1))


def coverage(
    f: Flowchart,
    dialogues: Sequence[Dialogue],
    assignments: Sequence[NodeAssignment],
    relaxed: bool = False,
    speakers: str = "both",
) -> CoverageReport:
    """Dataset-level UMR and CPC against one flowchart."""
    if not dialogues:
        raise DataError("cannot evaluate coverage over an empty dataset")
    if len(dialogues) != len(assignments):
        raise DataError(
            f"{len(dialogues)} dialogues but {len(assignments)} assignments"
        )
    umr_values: list[tuple[str, float]] = []
    covered_ids: list[str] = []
    for d, a in zip(dialogues, assignments):
        umr_values.append((d.id, umr(d, a, speakers)))
        indices = set(_speaker_indices(d, speakers))
        mapped = [node for idx, node in a.per_utterance if idx in indices]
        if dialogue_covered(f, mapped, relaxed):
            covered_ids.append(d.id)
    return CoverageReport(
        umr_per_dialogue=umr_values,
        umr_avg=sum(v for _, v in umr_values) / len(umr_values),
        cpc=len(covered_ids) / len(dialogues),
        relaxed=relaxed,
        covered_ids=covered_ids,
    )


def per_domain_coverage(
    f: Flowchart,
    dialogues: Sequence[Dialogue],
    assignments: Sequence[NodeAssignment],
    relaxed: bool = False,
    speakers: str = "both",
) -> dict[str, CoverageReport]:
    """Group dialogues by their first domain hint and report per group."""
    groups: dict[str, tuple[list[Dialogue], list[NodeAssignment]]] = {}
    for d, a in zip(dialogues, assignments):
        domain = sorted(d.domain_hints)[0] if d.domain_hints else "all"
        groups.setdefault(domain, ([], []))
        groups[domain][0].append(d)
        groups[domain][1].append(a)
    return {
        domain: coverage(f, ds, asg, relaxed, speakers)
        for domain, (ds, asg) in sorted(groups.items())
    }


def tokenize(text: str) -> set[str]:
    return {t.lower() for t in _TOKEN_RE.findall(text)}


def classify_by_rules(
    f: Flowchart, d: Dialogue, lexicon: Mapping[str, str], speakers: str = "both"
) -> NodeAssignment:
    """Deterministic keyword classifier: each utterance goes to the node
    whose lexicon keywords overlap its tokens the most (ties to the lowest
    node id); zero overlap maps to no-match. Utterances outside the selected
    speaker side are left unmatched.
    """
    for keyword, node_id in lexicon.items():
        if node_id not in f.nodes:
            raise DataError(f"lexicon keyword {keyword!r} names unknown node {node_id!r}")
    node_keywords: dict[str, set[str]] = {}
    for keyword, node_id in lexicon.items():
        node_keywords.setdefault(node_id, set()).add(keyword.lower())
    indices = set(_speaker_indices(d, speakers))

    entries: list[tuple[int, str | None]] = []
    for utt in d.utterances:
        if utt.index not in indices:
            entries.append((utt.index, NO_MATCH))
            continue
        tokens = tokenize(utt.text)
        best_node: str | None = None
        best_score = 0
        for node_id in sorted(node_keywords):
            score = len(node_keywords[node_id] & tokens)
            if score > best_score:
                best_score = score
                best_node = node_id
        entries.append((utt.index, best_node))
    return NodeAssignment(per_utterance=entries)


def node_listing(f: Flowchart) -> str:
    return "\n".join(
        f"{nid}: [{f.nodes[nid].node_type.value}] {f.nodes[nid].label}" for nid in sorted(f.nodes)
    )


def classify_by_oracle(
    f: Flowchart, d: Dialogue, backend, speakers: str = "both"
) -> NodeAssignment:
    """Classify utterances through a chat-completion backend.

    The backend answers with a node id or "None"; anything else maps to
    no-match and is kept as a warning on the assignment.
    """
    nodes_text = node_listing(f)
    indices = set(_speaker_indices(d, speakers))
    entries: list[tuple[int, str | None]] = []
    warnings: list[str] = []
    for utt in d.utterances:
        if utt.index not in indices:
            entries.append((utt.index, NO_MATCH))
            continue
        req = OracleRequest(
            kind="utteranceMatch",
            payload={"utterance": utt.text, "nodes": nodes_text},
        )
        response = backend.complete(req).strip()
        cleaned = response.strip().strip('"').strip("'").rstrip(".").strip()
        if cleaned in f.nodes:
            entries.append((utt.index, cleaned))
        elif cleaned.lower() == "none":
            entries.append((utt.index, NO_MATCH))
        else:
            warnings.append(
                f"dialogue {d.id!r} utterance {utt.index}: unparseable response {response!r}"
            )
            entries.append((utt.index, NO_MATCH))
    return NodeAssignment(per_utterance=entries, warnings=warnings)
