"""Shared fixtures: the banking reference chart, random generators, and
independent oracles (exhaustive DP cover optimum, networkx path counts,
brute-force isomorphism)."""

from __future__ import annotations

import itertools
import random

import pytest

from tofkit.corpus import Dialogue, Utterance
from tofkit.cover import CoverInstance
from tofkit.flowchart import Flowchart, FlowEdge, FlowNode, NodeType, make_flowchart, validate
from tofkit.mermaid import parse

# 12 nodes, 17 edges: one start, one end, one reflection; loops via R
BANKING_MMD = """flowchart TD
    A["Start: Begin Customer Account Inquiry"] --> B{"Action/Decision: Determine Type of Enquiry"}
    B -- Account Balance/Credit Limit --> C{"Action/Decision: Is customer an active online banking/Connect App user?"}
    C -- No --> D["Output: Provide Assistance"]
    D --> E["Output: Display Balance/Limit Information"]
    C -- Yes --> F["Output: Would you like me to guide you through the app/online banking or do it for you?"]
    F -- Assistance --> D
    F -- Guidance --> G{"Action/Decision: App or Online Banking?"}
    G -- App --> H["Output: Provide App Guidance"]
    G -- Online Banking --> I["Output: Provide Online Banking Guidance"]
    B -- Transaction --> G
    B -- Unrecognized Charges --> N["Action/Decision: Perform Charge Check"]
    E --> R["Reflection: Confirm User Satisfaction"]
    H --> R
    I --> R
    N --> R
    R -- Satisfied --> J["End: Execute Closing Script"]
    R -- Not Satisfied --> B
"""


@pytest.fixture(scope="session")
def banking_chart() -> Flowchart:
    return parse(BANKING_MMD, name="account-inquiry")


def make_dialogue(did: str, turns: list[tuple[str, str]], intents=None, domains=()) -> Dialogue:
    """turns: list of (speaker, text); intents: optional list of intent lists."""
    utterances = []
    for i, (speaker, text) in enumerate(turns):
        utt_intents = frozenset(intents[i]) if intents else frozenset()
        utterances.append(Utterance(index=i, speaker=speaker, text=text, intents=utt_intents))
    return Dialogue(id=did, utterances=tuple(utterances), domain_hints=frozenset(domains))


# ---------------------------------------------------------------------------
# random valid chart generation

_WORDS = (
    "account inquiry balance transfer card loan deposit statement limit branch "
    "ticket seat refund route luggage billing invoice rate plan upgrade outage "
    "repair claim policy quote renewal address contact schedule visit"
).split()

_CONDITIONS = ("valid input", "invalid input", "user confirmed", "declined", "retry", "escalate")

_MID_TYPES = (NodeType.ACTION, NodeType.DECISION, NodeType.OUTPUT, NodeType.REFLECTION)


def make_random_chart(rng: random.Random, max_nodes: int = 8, name: str = "random") -> Flowchart:
    """A random structurally valid chart: a start-to-end spine plus random
    forward edges, loop edges out of output/reflection nodes, and occasional
    end-to-start restart edges."""
    n_mid = rng.randint(1, max(1, max_nodes - 2))
    labels = rng.sample(_WORDS, n_mid + 2)
    ids = [chr(ord("A") + i) for i in range(n_mid + 2)]

    nodes = [FlowNode(id=ids[0], node_type=NodeType.START, label=f"open {labels[0]} request")]
    for k in range(1, n_mid + 1):
        nodes.append(
            FlowNode(id=ids[k], node_type=rng.choice(_MID_TYPES), label=f"handle {labels[k]} step")
        )
    nodes.append(FlowNode(id=ids[-1], node_type=NodeType.END, label=f"finish {labels[-1]} task"))
    by_id = {n.id: n for n in nodes}

    edges: dict[tuple[str, str, str], FlowEdge] = {}

    def add(src: str, dst: str, condition: str | None) -> None:
        e = FlowEdge(src=src, dst=dst, condition=condition)
        edges.setdefault(e.key(), e)

    for k in range(len(ids) - 1):
        cond = rng.choice(_CONDITIONS) if rng.random() < 0.4 else None
        add(ids[k], ids[k + 1], cond)

    for _ in range(rng.randint(0, 2 * n_mid)):
        i, j = sorted(rng.sample(range(len(ids)), 2))
        if ids[i] == ids[-1]:
            continue
        cond = rng.choice(_CONDITIONS) if rng.random() < 0.5 else None
        add(ids[i], ids[j], cond)

    # loop edges must originate from output/reflection (cycles stay legal);
    # targets exclude the start node unless the source is a reflection
    for _ in range(rng.randint(0, n_mid)):
        srcs = [n.id for n in nodes if n.node_type in (NodeType.OUTPUT, NodeType.REFLECTION)]
        if not srcs:
            break
        src = rng.choice(srcs)
        candidates = [
            n.id
            for n in nodes
            if n.id != src
            and (n.node_type != NodeType.START or by_id[src].node_type == NodeType.REFLECTION)
        ]
        add(src, rng.choice(candidates), rng.choice(_CONDITIONS))

    if rng.random() < 0.3:
        add(ids[-1], ids[0], "new request")

    chart = make_flowchart(name=name, nodes=nodes, edges=edges.values())
    problems = validate(chart)
    assert not problems, f"generator produced invalid chart: {problems}"
    return chart


# ---------------------------------------------------------------------------
# independent oracles

def dp_optimal_cost(inst: CoverInstance) -> float:
    """Exhaustive dynamic program over intent subsets; independent of the
    package's search-based solvers."""
    labels = inst.labels
    bit = {label: 1 << i for i, label in enumerate(labels)}
    full = (1 << len(labels)) - 1
    masks = []
    costs = []
    for s in inst.sets:
        m = 0
        for intent in s.intents:
            m |= bit[intent]
        masks.append(m)
        costs.append(s.cost)
    inf = float("inf")
    dp = [inf] * (full + 1)
    dp[0] = 0.0
    for mask in range(full + 1):
        base = dp[mask]
        if base == inf:
            continue
        for m, c in zip(masks, costs):
            new = mask | m
            if base + c < dp[new]:
                dp[new] = base + c
    return dp[full]


def make_random_instance(rng: random.Random, max_universe: int = 12, max_sets: int = 20) -> CoverInstance:
    m = rng.randint(3, max_universe)
    k = rng.randint(3, max_sets)
    universe = [f"i{x}" for x in range(m)]
    items = []
    for idx in range(k):
        subset = {u for u in universe if rng.random() < 0.35}
        if not subset:
            subset = {rng.choice(universe)}
        items.append((f"d{idx}", subset, float(rng.randint(1, 10))))
    covered = set().union(*(s for _, s, _ in items))
    leftovers = [u for u in universe if u not in covered]
    for u in leftovers:  # patch feasibility by assigning strays to random sets
        did, subset, cost = items[rng.randrange(k)]
        items[items.index((did, subset, cost))] = (did, subset | {u}, cost)
    return CoverInstance.from_sets(items)


def count_simple_paths_networkx(chart: Flowchart) -> int:
    """Start-to-end simple path count via networkx, parallel edges included."""
    import networkx as nx

    g = nx.MultiDiGraph()
    g.add_nodes_from(chart.nodes)
    for e in chart.edges:
        g.add_edge(e.src, e.dst, condition=e.condition)
    total = 0
    for s in chart.start_ids:
        for t in chart.end_ids:
            total += sum(1 for _ in nx.all_simple_edge_paths(g, s, t))
    return total


def brute_force_isomorphic(f1: Flowchart, f2: Flowchart) -> bool:
    """Bijection search restricted to matching (type, normalized label)
    classes; exact for the small charts used in tests."""
    if len(f1.nodes) != len(f2.nodes) or len(f1.edges) != len(f2.edges):
        return False

    def key(node: FlowNode) -> tuple[str, str]:
        return (node.node_type.value, " ".join(node.label.lower().split()))

    groups1: dict[tuple[str, str], list[str]] = {}
    groups2: dict[tuple[str, str], list[str]] = {}
    for nid, n in f1.nodes.items():
        groups1.setdefault(key(n), []).append(nid)
    for nid, n in f2.nodes.items():
        groups2.setdefault(key(n), []).append(nid)
    if set(groups1) != set(groups2):
        return False
    if any(len(groups1[k]) != len(groups2[k]) for k in groups1):
        return False

    edges1 = sorted((e.src, e.dst, (e.condition or "").strip()) for e in f1.edges)

    keys = sorted(groups1)
    perm_sets = [itertools.permutations(groups2[k]) for k in keys]
    for combo in itertools.product(*perm_sets):
        mapping: dict[str, str] = {}
        for k, perm in zip(keys, combo):
            for a, b in zip(sorted(groups1[k]), perm):
                mapping[a] = b
        mapped = sorted(
            (mapping[s], mapping[d], c) for s, d, c in edges1
        )
        edges2 = sorted((e.src, e.dst, (e.condition or "").strip()) for e in f2.edges)
        if mapped == edges2:
            return True
    return False
