"""Dialogue corpus ingestion, intent normalization, and intent universes.

The on-disk format is JSONL, one dialogue object per line:

    {"id": "d1",
     "turns": [{"speaker": "customer", "text": "...", "intents": ["..."]}],
     "domains": ["banking"]}

``speaker`` is ``customer`` or ``agent``; ``intents`` and ``domains`` are
optional. Files are UTF-8 with LF line endings.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Iterator, Mapping

from .errors import CorpusError, LabelerError

CUSTOMER = "customer"
AGENT = "agent"

_NORM_RE = re.compile(r"[^a-z0-9]+")


def normalize_intent(label: str) -> str:
    """Lowercase, trim, and hyphen-join an intent label, e.g. "Inquire Price"
    -> "inquire-price". Idempotent."""
    return _NORM_RE.sub("-", label.strip().lower()).strip("-")


def act_label(domain: str, act: str, slot: str | None = None) -> str:
    """Form a dialogue-act intent key as "domain-act" or "domain-act-slot"."""
    parts = [domain, act] + ([slot] if slot else [])
    return normalize_intent("-".join(parts))


@dataclass(frozen=True)
class Utterance:
    index: int
    speaker: str
    text: str
    intents: frozenset[str] = frozenset()

    def __post_init__(self):
        if self.speaker not in (CUSTOMER, AGENT):
            raise CorpusError(f"unknown speaker {self.speaker!r}")
        if not self.text.strip():
            raise CorpusError("utterance text is empty")


@dataclass(frozen=True)
class Dialogue:
    id: str
    utterances: tuple[Utterance, ...]
    domain_hints: frozenset[str] = frozenset()

    def __post_init__(self):
        if not self.utterances:
            raise CorpusError(f"dialogue {self.id!r} has no utterances")
        for pos, utt in enumerate(self.utterances):
            if utt.index != pos:
                raise CorpusError(
                    f"dialogue {self.id!r}: utterance index {utt.index} at position {pos}"
                )

    def __len__(self) -> int:
        return len(self.utterances)


@dataclass(frozen=True)
class Corpus:
    dialogues: tuple[Dialogue, ...]

    def __post_init__(self):
        seen = set()
        for d in self.dialogues:
            if d.id in seen:
                raise CorpusError(f"duplicate dialogue id {d.id!r}")
            seen.add(d.id)

    def __len__(self) -> int:
        return len(self.dialogues)

    def __iter__(self) -> Iterator[Dialogue]:
        return iter(self.dialogues)

    def __getitem__(self, dialogue_id: str) -> Dialogue:
        for d in self.dialogues:
            if d.id == dialogue_id:
                return d
        raise KeyError(dialogue_id)

    @property
    def utterance_count(self) -> int:
        return sum(len(d) for d in self.dialogues)


@dataclass(frozen=True)
class IntentUniverse:
    """All distinct normalized intents of a corpus plus the per-dialogue
    covered subsets. Dialogues whose subset is empty are kept but flagged."""

    labels: frozenset[str]
    per_dialogue: Mapping[str, frozenset[str]]
    unlabeled: frozenset[str] = frozenset()

    def __post_init__(self):
        union: set[str] = set()
        for did, subset in self.per_dialogue.items():
            if not subset <= self.labels:
                raise CorpusError(f"dialogue {did!r} carries intents outside the universe")
            union |= subset
        if union != set(self.labels):
            raise CorpusError("universe labels do not equal the union of dialogue subsets")

    def __len__(self) -> int:
        return len(self.labels)


IntentLabeler = Callable[[Utterance], Iterable[str]]


def annotation_labeler(utterance: Utterance) -> Iterable[str]:
    """Default labeler: trust the intent annotations carried by the corpus."""
    return utterance.intents


def _utterance_from_obj(obj: dict, index: int, line_no: int) -> Utterance:
    for key in ("speaker", "text"):
        if key not in obj:
            raise CorpusError(f"line {line_no}: turn {index} missing {key!r}")
    intents = obj.get("intents", [])
    if not isinstance(intents, list):
        raise CorpusError(f"line {line_no}: turn {index} 'intents' must be a list")
    try:
        return Utterance(
            index=index,
            speaker=obj["speaker"],
            text=obj["text"],
            intents=frozenset(normalize_intent(i) for i in intents if normalize_intent(i)),
        )
    except CorpusError as exc:
        raise CorpusError(f"line {line_no}: {exc}") from exc


def _dialogue_from_obj(obj: dict, line_no: int) -> Dialogue:
    if not isinstance(obj, dict):
        raise CorpusError(f"line {line_no}: expected a JSON object")
    if "id" not in obj:
        raise CorpusError(f"line {line_no}: missing 'id'")
    if "turns" not in obj:
        raise CorpusError(f"line {line_no}: missing 'turns'")
    turns = obj["turns"]
    if not isinstance(turns, list) or not turns:
        raise CorpusError(f"line {line_no}: 'turns' must be a non-empty list")
    utterances = tuple(
        _utterance_from_obj(t, i, line_no) for i, t in enumerate(turns)
    )
    try:
        return Dialogue(
            id=str(obj["id"]),
            utterances=utterances,
            domain_hints=frozenset(obj.get("domains", [])),
        )
    except CorpusError as exc:
        raise CorpusError(f"line {line_no}: {exc}") from exc


def ingest_jsonl(path: str | Path) -> Corpus:
    """Read a dialogue corpus from a JSONL file.

    Raises :class:`CorpusError` naming the offending line on malformed
    records, duplicate ids, or an empty corpus.
    """
    path = Path(path)
    dialogues: list[Dialogue] = []
    seen: set[str] = set()
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"line {line_no}: invalid JSON ({exc.msg})") from exc
            d = _dialogue_from_obj(obj, line_no)
            if d.id in seen:
                raise CorpusError(f"line {line_no}: duplicate dialogue id {d.id!r}")
            seen.add(d.id)
            dialogues.append(d)
    if not dialogues:
        raise CorpusError(f"{path}: empty corpus")
    return Corpus(tuple(dialogues))


def dialogue_to_obj(d: Dialogue) -> dict:
    obj: dict = {
        "id": d.id,
        "turns": [
            {
                "speaker": u.speaker,
                "text": u.text,
                **({"intents": sorted(u.intents)} if u.intents else {}),
            }
            for u in d.utterances
        ],
    }
    if d.domain_hints:
        obj["domains"] = sorted(d.domain_hints)
    return obj


def write_jsonl(corpus: Corpus, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for d in corpus:
            fh.write(json.dumps(dialogue_to_obj(d), ensure_ascii=False) + "\n")


def build_intent_universe(corpus: Corpus, labeler: IntentLabeler = annotation_labeler) -> IntentUniverse:
    """Label every utterance and aggregate per-dialogue intent subsets.

    The per-dialogue subset is the union of its utterances' labels after
    normalization. Labeler exceptions are re-raised as :class:`LabelerError`
    carrying the dialogue id.
    """
    per_dialogue: dict[str, frozenset[str]] = {}
    unlabeled: set[str] = set()
    labels: set[str] = set()
    for d in corpus:
        subset: set[str] = set()
        for utt in d.utterances:
            try:
                raw = labeler(utt)
            except Exception as exc:
                raise LabelerError(d.id, exc) from exc
            for label in raw:
                norm = normalize_intent(label)
                if norm:
                    subset.add(norm)
        per_dialogue[d.id] = frozenset(subset)
        labels |= subset
        if not subset:
            unlabeled.add(d.id)
    return IntentUniverse(
        labels=frozenset(labels),
        per_dialogue=per_dialogue,
        unlabeled=frozenset(unlabeled),
    )
