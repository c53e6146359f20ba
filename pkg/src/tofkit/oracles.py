"""Oracle backends: a deterministic rule oracle and a remote chat client.

Both implement ``complete(OracleRequest) -> str`` so labeling, judging, and
generation pipelines can swap between offline tests and production calls.
The remote client speaks the generic chat-completion wire shape (model,
messages, temperature, max_tokens), retries transient failures with
exponential backoff, and supports record/replay transcripts so every
oracle-dependent pipeline can run deterministically without network access.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import requests

from .construction import OracleSuite, UtterancePair
from .corpus import normalize_intent
from .errors import AuthError, MalformedResponseError, TransportError

KINDS = ("domain", "intent", "nodeType", "utteranceMatch", "coherence", "dialogueGen")

DEFAULT_TEMPLATE_FOR_KIND = {
    "domain": "domain-detection",
    "intent": "intent-identification",
    "nodeType": "node-type-selection",
    "utteranceMatch": "utterance-to-node",
    "coherence": "coherence-judgment",
    "dialogueGen": "dialogue-generation",
}

TEMPLATES: dict[str, str] = {
    "domain-detection": (
        'Given customer utterance: "{customer}" and agent utterance: "{agent}", '
        "identify the primary service domain. Output only the domain name(s), "
        "comma-separated.\n\nExamples:\n{examples}"
    ),
    "intent-identification": (
        'Given customer utterance: "{customer}" and agent utterance: "{agent}" in '
        "the {domain} domain, identify the abstract intent. Output only the intent "
        "description, concise and starting with a capitalized verb.\n\n"
        "Examples:\n{examples}"
    ),
    "node-type-selection": (
        'Given intent: "{intent}" in the {domain} domain, select a node type for a '
        "task-oriented flowchart: start (opens the session), action (system "
        "operation), decision (conditional branch), output (delivers information), "
        "reflection (evaluates progress), end (concludes the task). Output only the "
        "type (lowercase).\n\nExamples:\n{examples}"
    ),
    "utterance-to-node": (
        "Given the following utterance and flowchart node descriptions, identify "
        "which node the utterance corresponds to based on its meaning. Output only "
        "the Node ID or 'None'.\n\nUtterance: {utterance}\n\nNodes:\n{nodes}\n\n"
        "Examples:\n{examples}"
    ),
    "coherence-judgment": (
        "Decide whether the following flowchart nodes all describe the same "
        "procedural step. Output only 'yes' or 'no'.\n\nNodes:\n{nodes}\n\n"
        "Examples:\n{examples}"
    ),
    "dialogue-generation": (
        "Write a customer service dialogue that follows these flowchart steps in "
        "order. Alternate turns, prefixing each line with 'Customer:' or 'Agent:'.\n\n"
        "Steps:\n{steps}\n\nExamples:\n{examples}"
    ),
}

# Few-shot pairs below are illustrative and authored for this project.
FEW_SHOT: dict[str, list[tuple[str, str]]] = {
    "domain-detection": [
        ("Customer asks for a table for two tonight.", "restaurant"),
        ("Customer wants a double room for the weekend.", "hotel"),
        ("Customer asks when the next train to the airport leaves.", "train"),
        ("Customer asks a cab to pick them up at 9.", "taxi"),
        ("Customer asks about their card balance.", "banking"),
    ],
    "intent-identification": [
        ("How much is the chef menu?", "Inquire price"),
        ("Can you book that room for me?", "Book reservation"),
        ("I need to cancel my order from yesterday.", "Cancel booking"),
        ("What time do you open on Sunday?", "Inquire hours"),
        ("Is my account number still valid?", "Verify identity"),
    ],
    "node-type-selection": [
        ("Inquire price", "output"),
        ("Verify identity", "decision"),
        ("Book reservation", "action"),
        ("Confirm satisfaction", "reflection"),
        ("Check charges", "action"),
    ],
    "utterance-to-node": [
        ("What is my balance? / E: [output] Display balance", "E"),
        ("Hello there! / E: [output] Display balance", "None"),
        ("Please verify my card. / C: [decision] Verify card validity", "C"),
        ("Thanks, goodbye. / J: [end] Execute closing script", "J"),
        ("Random chatter. / B: [action] Look up account", "None"),
    ],
    "coherence-judgment": [
        ("A: [output] Display balance\nB: [output] Show balance", "yes"),
        ("A: [output] Display balance\nB: [action] Verify card", "no"),
        ("A: [action] Book table\nB: [action] Reserve table", "yes"),
        ("A: [end] Close session\nB: [start] Open session", "no"),
        ("A: [reflection] Confirm satisfaction", "yes"),
    ],
    "dialogue-generation": [
        ("1. [start] Begin inquiry", "Customer: Hi, I have a question.\nAgent: Happy to help."),
        ("1. [output] Display balance", "Customer: What's my balance?\nAgent: It is 120 dollars."),
        ("1. [action] Book table", "Customer: Book me a table.\nAgent: Done, table for two."),
        ("1. [reflection] Confirm satisfaction", "Customer: That's all.\nAgent: Did that resolve it?"),
        ("1. [end] Close session", "Customer: Yes, thanks.\nAgent: Goodbye!"),
    ],
}


@dataclass(frozen=True)
class OracleRequest:
    kind: str
    payload: Mapping[str, str]
    template_id: str | None = None

    def resolved_template(self) -> str:
        tid = self.template_id or DEFAULT_TEMPLATE_FOR_KIND.get(self.kind)
        if tid is None or tid not in TEMPLATES:
            raise ValueError(f"no registered template for request kind {self.kind!r} / id {tid!r}")
        return tid


def render_request(req: OracleRequest) -> str:
    tid = req.resolved_template()
    examples = "\n".join(f"Input: {i}\nOutput: {o}" for i, o in FEW_SHOT.get(tid, []))
    try:
        return TEMPLATES[tid].format(examples=examples, **req.payload)
    except KeyError as exc:
        raise ValueError(f"template {tid!r} is missing payload field {exc}") from exc


# ---------------------------------------------------------------------------
# rule oracle


@dataclass(frozen=True)
class Lexicons:
    keyword_to_domain: Mapping[str, str]
    keyword_to_intent: Mapping[str, str]
    intent_to_node_type: Mapping[str, str]
    verbs: frozenset[str]


DEMO_LEXICONS = Lexicons(
    keyword_to_domain={
        "account": "banking", "balance": "banking", "card": "banking",
        "transfer": "banking", "loan": "banking", "charge": "banking",
        "table": "restaurant", "menu": "restaurant", "food": "restaurant",
        "book": "restaurant", "restaurant": "restaurant",
        "room": "hotel", "hotel": "hotel", "stay": "hotel", "night": "hotel",
        "train": "train", "ticket": "train", "depart": "train", "platform": "train",
        "taxi": "taxi", "cab": "taxi", "ride": "taxi", "pickup": "taxi",
    },
    keyword_to_intent={
        "balance": "inquire-balance",
        "cost": "inquire-price", "price": "inquire-price", "much": "inquire-price",
        "book": "book-reservation", "reserve": "book-reservation", "reservation": "book-reservation",
        "cancel": "cancel-booking",
        "hours": "inquire-hours", "when": "inquire-hours",
        "help": "request-assistance", "assist": "request-assistance",
        "satisfied": "confirm-satisfaction", "else": "confirm-satisfaction",
        "verify": "verify-identity", "valid": "verify-identity", "identity": "verify-identity",
        "charge": "check-charges", "unrecognized": "check-charges",
        "app": "provide-guidance", "online": "provide-guidance", "guide": "provide-guidance",
        "goodbye": "close-request", "thanks": "close-request", "bye": "close-request",
    },
    intent_to_node_type={
        "inquire-balance": "output",
        "inquire-price": "output",
        "inquire-hours": "output",
        "provide-guidance": "output",
        "request-assistance": "output",
        "book-reservation": "action",
        "cancel-booking": "action",
        "check-charges": "action",
        "verify-identity": "decision",
        "confirm-satisfaction": "reflection",
        "close-request": "output",
        "assist-general": "action",
    },
    verbs=frozenset({
        "inquire", "book", "cancel", "request", "confirm", "verify", "check",
        "provide", "close", "open", "assist", "handle", "display", "collect",
        "update", "schedule", "transfer",
    }),
)

FALLBACKS = {
    "domain": "other",
    "intent": "assist-general",
    "nodeType": "action",
    "utteranceMatch": "None",
    "coherence": "no",
    "dialogueGen": "",
}

_WORD_RE = re.compile(r"\w+")
_NODE_LINE_RE = re.compile(r"^(?P<id>\w+):\s*\[(?P<type>\w+)\]\s*(?P<label>.*)$")


def _tokens(text: str) -> set[str]:
    return {t.lower() for t in _WORD_RE.findall(text)}


def _best_by_keywords(tokens: set[str], table: Mapping[str, str], fallback: str) -> str:
    scores: dict[str, int] = {}
    for keyword, target in table.items():
        if keyword.lower() in tokens:
            scores[target] = scores.get(target, 0) + 1
    if not scores:
        return fallback
    best = max(scores.values())
    return sorted(t for t, s in scores.items() if s == best)[0]


def _jaccard(a: set[str], b: set[str]) -> float:
    if not a and not b:
        return 1.0
    union = a | b
    return len(a & b) / len(union) if union else 1.0


class RuleOracle:
    """Pure function of (request, lexicons); the offline stand-in for the
    remote backend. No match yields the kind's designated fallback token."""

    def __init__(self, lexicons: Lexicons = DEMO_LEXICONS):
        self.lexicons = lexicons

    def complete(self, req: OracleRequest) -> str:
        kind = req.kind
        payload = req.payload
        if kind == "domain":
            tokens = _tokens(payload.get("customer", "") + " " + payload.get("agent", ""))
            return _best_by_keywords(tokens, self.lexicons.keyword_to_domain, FALLBACKS["domain"])
        if kind == "intent":
            tokens = _tokens(payload.get("customer", "") + " " + payload.get("agent", ""))
            return _best_by_keywords(tokens, self.lexicons.keyword_to_intent, FALLBACKS["intent"])
        if kind == "nodeType":
            intent = normalize_intent(payload.get("intent", ""))
            return self.lexicons.intent_to_node_type.get(intent, FALLBACKS["nodeType"])
        if kind == "utteranceMatch":
            return self._match_node(payload.get("utterance", ""), payload.get("nodes", ""))
        if kind == "coherence":
            return self._judge(payload.get("nodes", ""))
        if kind == "dialogueGen":
            return self._generate(payload.get("steps", ""))
        raise ValueError(f"unknown oracle request kind {kind!r}")

    def _match_node(self, utterance: str, nodes_text: str) -> str:
        tokens = _tokens(utterance)
        best_id, best_score = None, 0
        for line in nodes_text.splitlines():
            m = _NODE_LINE_RE.match(line.strip())
            if not m:
                continue
            score = len(_tokens(m.group("label")) & tokens)
            if score > best_score:
                best_score, best_id = score, m.group("id")
        return best_id if best_id is not None else FALLBACKS["utteranceMatch"]

    def _judge(self, nodes_text: str) -> str:
        parsed = []
        for line in nodes_text.splitlines():
            m = _NODE_LINE_RE.match(line.strip())
            if m:
                parsed.append((m.group("type"), _tokens(m.group("label"))))
        if len(parsed) <= 1:
            return "yes"
        if len({t for t, _ in parsed}) > 1:
            return "no"
        min_sim = min(
            _jaccard(parsed[i][1], parsed[j][1])
            for i in range(len(parsed))
            for j in range(i + 1, len(parsed))
        )
        return "yes" if min_sim >= 0.6 else "no"

    def _generate(self, steps_text: str) -> str:
        lines = []
        for raw in steps_text.splitlines():
            step = raw.strip()
            if not step:
                continue
            step = re.sub(r"^\d+\.\s*", "", step)
            step = re.sub(r"^\[\w+\]\s*", "", step)
            lines.append(f"Customer: I need to {step.lower()}.")
            lines.append(f"Agent: Certainly, handling: {step.lower()}.")
        return "\n".join(lines)


def rule_suite(lexicons: Lexicons = DEMO_LEXICONS) -> OracleSuite:
    """Construction oracle suite backed by the rule oracle."""
    oracle = RuleOracle(lexicons)

    def domain_oracle(pair: UtterancePair) -> str:
        return oracle.complete(
            OracleRequest(
                kind="domain",
                payload={"customer": pair.customer.text, "agent": pair.agent.text},
            )
        )

    def intent_oracle(pair: UtterancePair, domain: str) -> str:
        return oracle.complete(
            OracleRequest(
                kind="intent",
                payload={
                    "customer": pair.customer.text,
                    "agent": pair.agent.text,
                    "domain": domain,
                },
            )
        )

    def node_type_oracle(intent: str, domain: str) -> str:
        return oracle.complete(
            OracleRequest(kind="nodeType", payload={"intent": intent, "domain": domain})
        )

    return OracleSuite(
        domain_oracle=domain_oracle,
        intent_oracle=intent_oracle,
        node_type_oracle=node_type_oracle,
    )


def backend_suite(backend) -> OracleSuite:
    """Construction oracle suite backed by any ``complete()`` backend."""

    def domain_oracle(pair: UtterancePair):
        raw = backend.complete(
            OracleRequest(
                kind="domain",
                payload={"customer": pair.customer.text, "agent": pair.agent.text},
            )
        )
        return [d.strip() for d in raw.split(",") if d.strip()]

    def intent_oracle(pair: UtterancePair, domain: str) -> str:
        return backend.complete(
            OracleRequest(
                kind="intent",
                payload={
                    "customer": pair.customer.text,
                    "agent": pair.agent.text,
                    "domain": domain,
                },
            )
        )

    def node_type_oracle(intent: str, domain: str) -> str:
        return backend.complete(
            OracleRequest(kind="nodeType", payload={"intent": intent, "domain": domain})
        ).strip().lower()

    return OracleSuite(
        domain_oracle=domain_oracle,
        intent_oracle=intent_oracle,
        node_type_oracle=node_type_oracle,
    )


# ---------------------------------------------------------------------------
# remote chat-completion backend


@dataclass
class BackendConfig:
    base_url: str
    model: str
    api_key_env: str = "TOFKIT_API_KEY"
    temperature: float = 0.0
    max_tokens: int = 512
    retries: int = 3
    timeout_s: float = 30.0
    backoff_base_s: float = 1.0
    max_in_flight: int = 4

    @classmethod
    def from_json_file(cls, path: str | Path) -> "BackendConfig":
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(**obj)


def request_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


def _requests_post(url: str, headers: dict, body: dict, timeout: float) -> tuple[int, str]:
    resp = requests.post(url, headers=headers, json=body, timeout=timeout)
    return resp.status_code, resp.text


class RemoteBackend:
    """Chat-completion client with retry/backoff and record/replay.

    ``post``, ``sleep``, and ``jitter`` are injectable for tests. With
    ``replay_path`` set, responses come from the transcript and the network
    is never touched; with ``record_path`` set, every live response is
    appended to the transcript.
    """

    def __init__(
        self,
        cfg: BackendConfig,
        *,
        post: Callable[[str, dict, dict, float], tuple[int, str]] = _requests_post,
        sleep: Callable[[float], None] = time.sleep,
        jitter: Callable[[], float] | None = None,
        record_path: str | Path | None = None,
        replay_path: str | Path | None = None,
    ):
        self.cfg = cfg
        self._post = post
        self._sleep = sleep
        self._jitter = jitter if jitter is not None else lambda: random.uniform(-0.1, 0.1)
        self._record_path = Path(record_path) if record_path else None
        self._replay: dict[str, str] | None = None
        self._gate = threading.Semaphore(cfg.max_in_flight)
        self._record_lock = threading.Lock()
        if replay_path is not None:
            self._replay = {}
            with Path(replay_path).open(encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        obj = json.loads(line)
                        self._replay[obj["hash"]] = obj["response"]

    def complete(self, req: OracleRequest) -> str:
        prompt = render_request(req)
        h = request_hash(prompt)
        if self._replay is not None:
            if h not in self._replay:
                raise TransportError(f"replay transcript has no entry for request {h[:12]}")
            return self._replay[h]

        api_key = os.environ.get(self.cfg.api_key_env)
        if not api_key:
            raise AuthError(f"environment variable {self.cfg.api_key_env} is not set")
        url = self.cfg.base_url.rstrip("/") + "/chat/completions"
        headers = {"Authorization": f"Bearer {api_key}", "Content-Type": "application/json"}
        body = {
            "model": self.cfg.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.cfg.temperature,
            "max_tokens": self.cfg.max_tokens,
        }

        last_error: Exception | None = None
        for attempt in range(self.cfg.retries + 1):
            try:
                with self._gate:
                    status, text = self._post(url, headers, body, self.cfg.timeout_s)
            except Exception as exc:
                last_error = exc
                status = None
            else:
                if status in (401, 403):
                    raise AuthError(f"backend rejected credentials (HTTP {status})")
                if status == 200:
                    response = self._parse(text)
                    self._record(h, prompt, response)
                    return response
                if status < 500:
                    raise TransportError(f"backend returned HTTP {status}: {text[:200]}")
                last_error = TransportError(f"backend returned HTTP {status}")
            if attempt < self.cfg.retries:
                delay = self.cfg.backoff_base_s * (2**attempt) * (1.0 + self._jitter())
                self._sleep(max(0.0, delay))
        raise TransportError(f"backend unreachable after {self.cfg.retries} retries: {last_error}")

    def _parse(self, text: str) -> str:
        try:
            obj = json.loads(text)
            return obj["choices"][0]["message"]["content"].strip()
        except (json.JSONDecodeError, KeyError, IndexError, TypeError) as exc:
            raise MalformedResponseError(f"unexpected completion payload: {text[:200]}") from exc

    def _record(self, h: str, prompt: str, response: str) -> None:
        if self._record_path is None:
            return
        with self._record_lock:
            with self._record_path.open("a", encoding="utf-8") as fh:
                fh.write(
                    json.dumps(
                        {"hash": h, "prompt": prompt, "response": response}, ensure_ascii=False
                    )
                    + "\n"
                )


def remote_complete(req: OracleRequest, cfg: BackendConfig) -> str:
    return RemoteBackend(cfg).complete(req)
