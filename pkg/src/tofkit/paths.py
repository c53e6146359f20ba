"""Valid-path enumeration and sampling, plus synthetic-data packaging.

A valid path is a start-to-end walk whose per-node revisit count stays within
a budget (budget 0 means simple paths; the default of 1 allows one loop
traversal, enough for a single re-prompt). Enumerated paths seed dialogue
generation jobs for a backend, and generated dialogues are packaged into
structure-aware training samples that embed the serialized global chart next
to each context/target pair.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .construction import _coalesce
from .corpus import AGENT, Dialogue
from .errors import DataError, InvalidFlowchartError, PathExplosionError
from .flowchart import Flowchart, NodeType, validate
from .mermaid import serialize
from .oracles import OracleRequest, render_request
from .rng import SplitMix64

DEFAULT_PATH_CAP = 100_000
DEFAULT_REVISIT_BUDGET = 1


@dataclass(frozen=True)
class PathSample:
    nodes: tuple[str, ...]
    edge_conditions: tuple[str | None, ...]

    def __post_init__(self):
        if len(self.edge_conditions) != max(len(self.nodes) - 1, 0):
            raise ValueError("edge_conditions must have one entry per step")

    @property
    def length(self) -> int:
        return len(self.nodes)

    def sort_key(self) -> tuple:
        return (self.nodes, tuple(c or "" for c in self.edge_conditions))


def validate_path(
    f: Flowchart, path: PathSample, revisit_budget: int = DEFAULT_REVISIT_BUDGET
) -> list[str]:
    """Independent re-check of the path invariants; returns violations."""
    problems: list[str] = []
    if not path.nodes:
        return ["empty-path"]
    for nid in path.nodes:
        if nid not in f.nodes:
            problems.append(f"unknown-node: {nid}")
    if problems:
        return problems
    if f.nodes[path.nodes[0]].node_type != NodeType.START:
        problems.append(f"not-start: {path.nodes[0]}")
    if f.nodes[path.nodes[-1]].node_type != NodeType.END:
        problems.append(f"not-end: {path.nodes[-1]}")
    edge_keys = {(e.src, e.dst, e.condition or "") for e in f.edges}
    for i in range(len(path.nodes) - 1):
        key = (path.nodes[i], path.nodes[i + 1], path.edge_conditions[i] or "")
        if key not in edge_keys:
            problems.append(f"not-adjacent: {path.nodes[i]}->{path.nodes[i + 1]}")
    counts: dict[str, int] = {}
    for nid in path.nodes:
        counts[nid] = counts.get(nid, 0) + 1
    for nid, n in sorted(counts.items()):
        if n - 1 > revisit_budget:
            problems.append(f"revisit-budget-exceeded: {nid}")
    return problems


def enumerate_paths(
    f: Flowchart,
    max_len: int | None = None,
    revisit_budget: int = DEFAULT_REVISIT_BUDGET,
    path_cap: int = DEFAULT_PATH_CAP,
) -> list[PathSample]:
    """Depth-first enumeration of every start-to-end walk within the bounds,
    returned in lexicographic node-id order.

    Raises :class:`PathExplosionError` once more than ``path_cap`` walks have
    been emitted.
    """
    violations = validate(f)
    if violations:
        raise InvalidFlowchartError(violations)
    out_edges: dict[str, list] = {nid: [] for nid in f.nodes}
    for e in f.edges:
        out_edges[e.src].append(e)
    for nid in out_edges:
        out_edges[nid].sort(key=lambda e: (e.dst, e.condition or ""))

    limit = max_len if max_len is not None else (revisit_budget + 1) * len(f.nodes)
    results: list[PathSample] = []
    counts: dict[str, int] = {nid: 0 for nid in f.nodes}

    def walk(node: str, nodes: list[str], conds: list[str | None]) -> None:
        if f.nodes[node].node_type == NodeType.END:
            results.append(PathSample(nodes=tuple(nodes), edge_conditions=tuple(conds)))
            if len(results) > path_cap:
                raise PathExplosionError(
                    f"more than {path_cap} paths; tighten max_len or the revisit budget"
                )
        if len(nodes) >= limit:
            return
        for e in out_edges[node]:
            if counts[e.dst] >= revisit_budget + 1:
                continue
            counts[e.dst] += 1
            nodes.append(e.dst)
            conds.append(e.condition)
            walk(e.dst, nodes, conds)
            conds.pop()
            nodes.pop()
            counts[e.dst] -= 1

    for start in f.start_ids:
        counts[start] += 1
        walk(start, [start], [])
        counts[start] -= 1

    results.sort(key=PathSample.sort_key)
    return results


SamplingPolicy = Callable[[list[PathSample], int, SplitMix64], list[PathSample]]


def tercile_policy(paths: list[PathSample], count: int, rng: SplitMix64) -> list[PathSample]:
    """Stratify by length into terciles, then draw round-robin across strata,
    uniformly without replacement inside each; all strata refill together once
    exhausted, so ``count == len(paths)`` yields each path exactly once."""
    ordered = sorted(paths, key=lambda p: (p.length, p.sort_key()))
    n = len(ordered)
    base, rem = divmod(n, 3)
    sizes = [base + (1 if i < rem else 0) for i in range(3)]
    strata: list[list[PathSample]] = []
    pos = 0
    for size in sizes:
        strata.append(ordered[pos : pos + size])
        pos += size
    strata = [s for s in strata if s]

    bags: list[list[PathSample]] = [[] for _ in strata]

    def refill() -> None:
        for i, stratum in enumerate(strata):
            bag = list(stratum)
            rng.shuffle(bag)
            bags[i] = bag

    refill()
    picked: list[PathSample] = []
    idx = 0
    while len(picked) < count:
        if all(not bag for bag in bags):
            refill()
        if bags[idx % len(bags)]:
            picked.append(bags[idx % len(bags)].pop())
        idx += 1
    return picked


def sample_paths(
    f: Flowchart,
    count: int,
    seed: int,
    policy: SamplingPolicy | None = None,
    max_len: int | None = None,
    revisit_budget: int = DEFAULT_REVISIT_BUDGET,
) -> list[PathSample]:
    """Sample ``count`` paths reproducibly for ``seed``; the default policy
    balances short, medium, and long walks."""
    paths = enumerate_paths(f, max_len=max_len, revisit_budget=revisit_budget)
    if not paths:
        raise DataError("no valid paths under the given bounds")
    rng = SplitMix64(seed)
    chosen = (policy or tercile_policy)(paths, count, rng)
    return chosen


_STEP_TEMPLATES: Mapping[str, str] = {
    "start": "{index}. Open the session: {label}",
    "action": "{index}. Perform: {label}",
    "decision": "{index}. Decide: {label}",
    "output": "{index}. Inform: {label}",
    "reflection": "{index}. Reflect: {label}",
    "end": "{index}. Close the session: {label}",
}


@dataclass(frozen=True)
class GenerationJob:
    path_id: str
    node_sequence: tuple[str, ...]
    prompt: str

    def to_json_obj(self) -> dict:
        return {
            "pathId": self.path_id,
            "nodeSequence": list(self.node_sequence),
            "prompt": self.prompt,
        }


def render_steps(
    f: Flowchart, path: PathSample, template: Mapping[str, str] = _STEP_TEMPLATES
) -> str:
    lines = []
    for i, nid in enumerate(path.nodes):
        node = f.nodes[nid]
        if node.node_type.value not in template:
            raise DataError(f"step template missing node type {node.node_type.value!r}")
        line = template[node.node_type.value].format(index=i + 1, label=node.label)
        if i > 0 and path.edge_conditions[i - 1]:
            line += f" (when: {path.edge_conditions[i - 1]})"
        lines.append(line)
    return "\n".join(lines)


def emit_generation_jobs(
    paths: Sequence[PathSample],
    f: Flowchart,
    template: Mapping[str, str] = _STEP_TEMPLATES,
) -> list[GenerationJob]:
    """Render one dialogue-generation request per path. Jobs are serialized
    for a backend to execute; nothing here calls out."""
    for node_type in NodeType:
        if node_type.value not in template:
            raise DataError(f"step template missing node type {node_type.value!r}")
    jobs = []
    for i, path in enumerate(paths):
        steps = render_steps(f, path, template)
        prompt = render_request(OracleRequest(kind="dialogueGen", payload={"steps": steps}))
        jobs.append(
            GenerationJob(path_id=f"path-{i:04d}", node_sequence=path.nodes, prompt=prompt)
        )
    return jobs


@dataclass(frozen=True)
class TrainingSample:
    flowchart_text: str
    context: str
    target: str

    def to_json_obj(self) -> dict:
        return {"flowchart": self.flowchart_text, "context": self.context, "target": self.target}


def package_training_samples(
    dialogues: Sequence[Dialogue], f: Flowchart
) -> list[TrainingSample]:
    """One sample per agent turn: the context is every prior turn, the target
    is the agent turn itself, and the canonical chart text rides along."""
    chart_text = serialize(f)
    samples: list[TrainingSample] = []
    for d in dialogues:
        turns = _coalesce(d.utterances)
        if not turns:
            raise DataError(f"dialogue {d.id!r} has no turns after coalescing")
        for i, turn in enumerate(turns):
            if turn.speaker != AGENT:
                continue
            context = "\n".join(
                f"{'Customer' if t.speaker != AGENT else 'Agent'}: {t.text}" for t in turns[:i]
            )
            samples.append(
                TrainingSample(flowchart_text=chart_text, context=context, target=turn.text)
            )
    return samples


def write_paths_jsonl(paths: Sequence[PathSample], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for p in paths:
            fh.write(
                json.dumps(
                    {"nodes": list(p.nodes), "conditions": list(p.edge_conditions)},
                    ensure_ascii=False,
                )
                + "\n"
            )


def read_paths_jsonl(path: str | Path) -> list[PathSample]:
    out = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                obj = json.loads(line)
                out.append(
                    PathSample(
                        nodes=tuple(obj["nodes"]),
                        edge_conditions=tuple(obj["conditions"]),
                    )
                )
    return out


def write_jobs_jsonl(jobs: Sequence[GenerationJob], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for job in jobs:
            fh.write(json.dumps(job.to_json_obj(), ensure_ascii=False) + "\n")


def write_training_jsonl(samples: Sequence[TrainingSample], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for s in samples:
            fh.write(json.dumps(s.to_json_obj(), ensure_ascii=False) + "\n")
