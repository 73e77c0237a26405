"""Supervised (history -> agent act) instances and their JSONL format."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

from .dialogue import Corpus, Speaker, Vocabulary, act_bits, state_bits, str_to_bits
from .errors import ConfigMismatch, DataError

MAX_HISTORY = 8
DEFAULT_HISTORY = 4


class Instance(NamedTuple):
    """``history`` is most-recent-first; all entries are bitstrings."""

    history: tuple[str, ...]
    target: str


@dataclass
class InstanceSet:
    instances: list[Instance]
    n: int
    vocab_hash: str = ""
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.instances)

    def __iter__(self):
        return iter(self.instances)

    def __eq__(self, other):
        if not isinstance(other, InstanceSet):
            return NotImplemented
        return (
            self.n == other.n
            and self.vocab_hash == other.vocab_hash
            and self.meta == other.meta
            and self.instances == other.instances
        )

    def replace(self, instances: Iterable[Instance], **meta) -> "InstanceSet":
        return InstanceSet(list(instances), self.n, self.vocab_hash, {**self.meta, **meta})

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """(inputs, targets) as float arrays; inputs are concatenated histories."""
        if not self.instances:
            return np.zeros((0, 0)), np.zeros((0, 0))
        x = np.stack([str_to_bits("".join(inst.history)) for inst in self.instances])
        y = np.stack([str_to_bits(inst.target) for inst in self.instances])
        return x.astype(np.float64), y.astype(np.float64)

    # -- io -----------------------------------------------------------------

    def dumps(self) -> str:
        header = {"n": self.n, "vocab_hash": self.vocab_hash, **self.meta}
        lines = [json.dumps(header, sort_keys=True)]
        lines += [
            json.dumps({"history": list(i.history), "target": i.target}) for i in self.instances
        ]
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def loads(cls, text: str) -> "InstanceSet":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise DataError("instance file is empty (missing header)")
        try:
            header = json.loads(lines[0])
            n = header.pop("n")
            vocab_hash = header.pop("vocab_hash")
            instances = []
            for lineno, line in enumerate(lines[1:], start=2):
                obj = json.loads(line)
                history = tuple(obj["history"])
                if len(history) != n:
                    raise DataError(f"line {lineno}: history length {len(history)} != {n}")
                instances.append(Instance(history, obj["target"]))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise DataError(f"malformed instance file: {exc}") from None
        return cls(instances, n, vocab_hash, header)

    @classmethod
    def load(cls, path) -> "InstanceSet":
        return cls.loads(Path(path).read_text(encoding="utf-8"))


def extract_instances(corpus: Corpus, vocab: Vocabulary, n: int = DEFAULT_HISTORY) -> InstanceSet:
    """One instance per agent turn, history zero-padded at the dialogue start."""
    if not 1 <= n <= MAX_HISTORY:
        raise ConfigMismatch(f"history length must be in 1..{MAX_HISTORY}, got {n}")
    zero = "0" * vocab.width
    out = []
    for dialogue in corpus:
        states = [zero]
        for turn in dialogue.turns:
            if turn.speaker is Speaker.AGENT:
                window = states[::-1][:n]
                window += [zero] * (n - len(window))
                out.append(Instance(tuple(window), act_bits(turn.acts, vocab)))
            states.append(state_bits(turn, vocab))
    return InstanceSet(out, n, vocab.hash)


def dedupe(s: InstanceSet) -> InstanceSet:
    """Keep the first occurrence of every (history, target) pair."""
    return s.replace(dict.fromkeys(s.instances))


def unique_count(s: InstanceSet) -> int:
    return len(set(s.instances))


def check_compatible(*sets: InstanceSet) -> None:
    first = sets[0]
    for s in sets[1:]:
        if s.n != first.n:
            raise ConfigMismatch(f"history lengths differ: {s.n} vs {first.n}")
        if s.vocab_hash and first.vocab_hash and s.vocab_hash != first.vocab_hash:
            raise ConfigMismatch("instance sets were built from different vocabularies")
