"""Symbolic dialogue model: corpus schema, vocabulary, and state encoding.

A turn is encoded into a fixed-width binary dialogue state: a multi-hot vector
over dialogue-act labels followed by one filled-flag per belief slot. Literal
slot values never reach the encoding.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Mapping, NamedTuple, Sequence

import numpy as np

from .errors import AlternationViolation, DataError, EmptyCorpus, UnknownLabel


class Speaker(str, Enum):
    USER = "user"
    AGENT = "agent"


class Split(str, Enum):
    TRAIN = "train"
    DEV = "dev"
    TEST = "test"


@dataclass(frozen=True)
class Act:
    """One dialogue act: an intent with (slot, value) pairs."""

    intent: str
    slots: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "slots", tuple((str(s), str(v)) for s, v in self.slots))

    def labels(self) -> list[str]:
        return [self.intent] + [act_label(self.intent, s) for s, _ in self.slots]


def act_label(intent: str, slot: str) -> str:
    return f"{intent}.{slot}"


@dataclass(frozen=True)
class Turn:
    speaker: Speaker
    acts: tuple[Act, ...]
    belief: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "speaker", Speaker(self.speaker))
        object.__setattr__(self, "acts", tuple(self.acts))
        belief = self.belief
        if isinstance(belief, Mapping):
            belief = belief.items()
        object.__setattr__(self, "belief", tuple(sorted((str(k), str(v)) for k, v in belief)))
        if not self.acts:
            raise DataError("turn has no dialogue acts")

    @property
    def belief_dict(self) -> dict[str, str]:
        return dict(self.belief)

    def filled_slots(self) -> set[str]:
        # empty-string values count as unfilled
        return {s for s, v in self.belief if v != ""}


@dataclass(frozen=True)
class Dialogue:
    """An ordered list of turns.

    ``resets`` lists turn indices where a fresh dialogue segment begins
    (produced by concatenating dialogues). Alternation is checked per segment.
    """

    id: str
    turns: tuple[Turn, ...]
    resets: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "turns", tuple(self.turns))
        object.__setattr__(self, "resets", tuple(sorted(set(self.resets))))
        if not self.turns:
            raise DataError(f"dialogue {self.id!r} has no turns")
        for r in self.resets:
            if not 0 < r < len(self.turns):
                raise DataError(f"dialogue {self.id!r}: reset index {r} out of range")
        check_alternation(self)


def check_alternation(dialogue: Dialogue) -> None:
    starts = {0, *dialogue.resets}
    expected = Speaker.USER
    for i, turn in enumerate(dialogue.turns):
        if i in starts:
            expected = Speaker.USER
        if turn.speaker is not expected:
            raise AlternationViolation(dialogue.id, i)
        expected = Speaker.AGENT if expected is Speaker.USER else Speaker.USER


@dataclass(frozen=True)
class Corpus:
    dialogues: tuple[Dialogue, ...]
    split: Split = Split.TRAIN

    def __post_init__(self):
        object.__setattr__(self, "dialogues", tuple(self.dialogues))
        object.__setattr__(self, "split", Split(self.split))
        seen = set()
        for d in self.dialogues:
            if d.id in seen:
                raise DataError(f"duplicate dialogue id {d.id!r}")
            seen.add(d.id)

    def __len__(self):
        return len(self.dialogues)

    def __iter__(self):
        return iter(self.dialogues)

    def n_turns(self, speaker: Speaker | None = None) -> int:
        return sum(
            1 for d in self.dialogues for t in d.turns if speaker is None or t.speaker is speaker
        )


@dataclass(frozen=True)
class Vocabulary:
    intents: tuple[str, ...]
    slots: tuple[str, ...]
    act_labels: tuple[str, ...]
    belief_slots: tuple[str, ...]
    _act_index: dict = field(init=False, repr=False, compare=False)
    _belief_index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for name in ("intents", "slots", "act_labels", "belief_slots"):
            values = tuple(getattr(self, name))
            if list(values) != sorted(set(values)):
                raise DataError(f"vocabulary {name} must be sorted and duplicate-free")
            object.__setattr__(self, name, values)
        object.__setattr__(self, "_act_index", {a: i for i, a in enumerate(self.act_labels)})
        object.__setattr__(self, "_belief_index", {s: i for i, s in enumerate(self.belief_slots)})

    @property
    def n_act(self) -> int:
        return len(self.act_labels)

    @property
    def n_belief(self) -> int:
        return len(self.belief_slots)

    @property
    def width(self) -> int:
        return self.n_act + self.n_belief

    def to_dict(self) -> dict:
        return {
            "intents": list(self.intents),
            "slots": list(self.slots),
            "act_labels": list(self.act_labels),
            "belief_slots": list(self.belief_slots),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    @classmethod
    def from_dict(cls, obj: Mapping) -> "Vocabulary":
        try:
            return cls(*(tuple(obj[k]) for k in ("intents", "slots", "act_labels", "belief_slots")))
        except KeyError as exc:
            raise DataError(f"vocabulary missing field {exc}") from None

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]

    def save(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def act_names(self, bits) -> list[str]:
        """Labels of the set bits in an act segment."""
        bits = as_bits(bits)
        return [self.act_labels[i] for i in np.flatnonzero(bits[: self.n_act])]


def build_vocabulary(corpora: Corpus | Iterable[Corpus]) -> Vocabulary:
    if isinstance(corpora, Corpus):
        corpora = [corpora]
    intents, slots, labels, belief = set(), set(), set(), set()
    n_turns = 0
    for corpus in corpora:
        for d in corpus:
            for turn in d.turns:
                n_turns += 1
                for act in turn.acts:
                    intents.add(act.intent)
                    labels.update(act.labels())
                    slots.update(s for s, _ in act.slots)
                for s, _ in turn.belief:
                    slots.add(s)
                    belief.add(s)
    if n_turns == 0:
        raise EmptyCorpus("no turns to build a vocabulary from")
    return Vocabulary(*(tuple(sorted(x)) for x in (intents, slots, labels, belief)))


# -- encoding ---------------------------------------------------------------


def encode_act(acts: Sequence[Act], vocab: Vocabulary) -> np.ndarray:
    bits = np.zeros(vocab.n_act, dtype=np.uint8)
    for act in acts:
        for label in act.labels():
            try:
                bits[vocab._act_index[label]] = 1
            except KeyError:
                raise UnknownLabel(label) from None
    return bits


def encode_belief(turn: Turn, vocab: Vocabulary) -> np.ndarray:
    bits = np.zeros(vocab.n_belief, dtype=np.uint8)
    for s, v in turn.belief:
        try:
            j = vocab._belief_index[s]
        except KeyError:
            raise UnknownLabel(s) from None
        if v != "":
            bits[j] = 1
    return bits


def encode_state(turn: Turn, vocab: Vocabulary) -> np.ndarray:
    """Act multi-hot followed by belief filled-flags, width ``vocab.width``."""
    return np.concatenate([encode_act(turn.acts, vocab), encode_belief(turn, vocab)])


def bits_to_str(bits) -> str:
    return "".join("1" if b else "0" for b in np.asarray(bits).ravel())


def str_to_bits(s: str) -> np.ndarray:
    if s.strip("01"):
        raise DataError(f"not a bitstring: {s!r}")
    return np.frombuffer(s.encode("ascii"), dtype=np.uint8) - ord("0")


def as_bits(x) -> np.ndarray:
    """Accept a bitstring or any 0/1 array-like."""
    if isinstance(x, str):
        return str_to_bits(x)
    return np.asarray(x, dtype=np.uint8)


def act_bits(acts: Sequence[Act], vocab: Vocabulary) -> str:
    return bits_to_str(encode_act(acts, vocab))


def state_bits(turn: Turn, vocab: Vocabulary) -> str:
    return bits_to_str(encode_state(turn, vocab))


# -- JSONL corpus files -----------------------------------------------------


def turn_to_dict(turn: Turn) -> dict:
    return {
        "speaker": turn.speaker.value,
        "acts": [
            {"intent": a.intent, "slots": [{"slot": s, "value": v} for s, v in a.slots]}
            for a in turn.acts
        ],
        "belief": dict(turn.belief),
    }


def dialogue_to_dict(d: Dialogue) -> dict:
    obj = {"id": d.id, "turns": [turn_to_dict(t) for t in d.turns]}
    if d.resets:
        obj["resets"] = list(d.resets)
    return obj


def _require(obj, key, kind, where):
    if not isinstance(obj, dict) or key not in obj:
        raise DataError(f"{where}: missing field {key!r}")
    value = obj[key]
    if not isinstance(value, kind):
        raise DataError(f"{where}: field {key!r} has wrong type {type(value).__name__}")
    return value


def dialogue_from_dict(obj) -> Dialogue:
    did = _require(obj, "id", str, "dialogue")
    turns = []
    for i, t in enumerate(_require(obj, "turns", list, f"dialogue {did!r}")):
        where = f"dialogue {did!r} turn {i}"
        speaker = _require(t, "speaker", str, where)
        if speaker not in ("user", "agent"):
            raise DataError(f"{where}: unknown speaker {speaker!r}")
        acts = []
        for a in _require(t, "acts", list, where):
            intent = _require(a, "intent", str, where)
            slots = [
                (_require(s, "slot", str, where), _require(s, "value", str, where))
                for s in a.get("slots", [])
            ]
            acts.append(Act(intent, tuple(slots)))
        if not acts:
            raise DataError(f"{where}: empty acts")
        belief = t.get("belief", {})
        if not isinstance(belief, dict):
            raise DataError(f"{where}: belief must be an object")
        turns.append(Turn(Speaker(speaker), tuple(acts), belief))
    return Dialogue(did, tuple(turns), tuple(obj.get("resets", ())))


def dumps_corpus(corpus: Corpus) -> str:
    return "".join(
        json.dumps(dialogue_to_dict(d), ensure_ascii=False) + "\n" for d in corpus.dialogues
    )


def save_corpus(corpus: Corpus, path) -> None:
    Path(path).write_text(dumps_corpus(corpus), encoding="utf-8")


def loads_corpus(text: str, split: Split | str = Split.TRAIN) -> Corpus:
    dialogues = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            dialogues.append(dialogue_from_dict(json.loads(line)))
        except json.JSONDecodeError as exc:
            raise DataError(f"line {lineno}: invalid JSON: {exc.msg}") from None
        except DataError as exc:
            exc.args = (f"line {lineno}: {exc}",)
            raise
    return Corpus(tuple(dialogues), Split(split))


def load_corpus(path, split: Split | str = Split.TRAIN) -> Corpus:
    return loads_corpus(Path(path).read_text(encoding="utf-8"), split)


class Diagnostic(NamedTuple):
    line: int
    kind: str
    message: str

    def __str__(self):
        return f"line {self.line}: {self.kind}: {self.message}"


def validate_lines(lines: Iterable[str]) -> Iterator[Diagnostic]:
    """Yield one diagnostic per problem found; clean input yields nothing."""
    seen: dict[str, int] = {}
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            yield Diagnostic(lineno, "parse", exc.msg)
            continue
        try:
            d = dialogue_from_dict(obj)
        except AlternationViolation as exc:
            yield Diagnostic(lineno, "alternation", str(exc))
            continue
        except DataError as exc:
            kind = "empty-acts" if ("empty acts" in str(exc) or "no dialogue acts" in str(exc)) else "schema"
            yield Diagnostic(lineno, kind, str(exc))
            continue
        if d.id in seen:
            yield Diagnostic(lineno, "duplicate-id", f"id {d.id!r} already used on line {seen[d.id]}")
        else:
            seen[d.id] = lineno
