"""Small synthetic corpora for demos and tests."""
from __future__ import annotations

import numpy as np

from .dialogue import Act, Corpus, Dialogue, Speaker, Split, Turn

U, A = Speaker.USER, Speaker.AGENT


def _turn(speaker, acts, belief):
    return Turn(speaker, tuple(Act(i, tuple((s, "x") for s in slots)) for i, slots in acts),
                {s: v for s, v in belief.items()})


def f1_dialogue(did: str, fourth_slots=("date", "time")) -> Dialogue:
    """Five-turn date/time booking; ``fourth_slots`` are confirmed on turn 4."""
    d = {"date": "friday"}
    dt = {"date": "friday", "time": "7pm"}
    return Dialogue(did, (
        _turn(U, [("inform", ["date"])], d),
        _turn(A, [("request", ["time"])], d),
        _turn(U, [("inform", ["time"])], dt),
        _turn(A, [("confirm", list(fourth_slots))], dt),
        _turn(U, [("affirm", [])], dt),
    ))


def fixture_f1() -> Corpus:
    """D1, an identical D2, and D3 which confirms only the time on turn 4."""
    return Corpus((f1_dialogue("D1"), f1_dialogue("D2"), f1_dialogue("D3", ("time",))))


USER_INTENTS = ("inform", "request", "affirm", "negate")
AGENT_INTENTS = ("request", "confirm", "offer", "inform", "bye")
SLOTS = ("date", "time", "party", "food")
VALUES = ("a", "b", "c")


def random_dialogue(rng: np.random.Generator, did: str, max_turns: int = 12) -> Dialogue:
    """A dialogue drawn from a tiny stochastic automaton.

    The label space is kept small so that random corpora revisit states.
    """
    n_turns = int(rng.integers(1, max_turns + 1))
    belief: dict[str, str] = {}
    turns = []
    for t in range(n_turns):
        speaker = U if t % 2 == 0 else A
        intents = USER_INTENTS if speaker is U else AGENT_INTENTS
        n_acts = 1 if rng.random() < 0.8 else 2
        chosen = rng.choice(len(intents), size=n_acts, replace=False)
        acts = []
        for k in sorted(chosen):
            intent = intents[k]
            n_slots = int(rng.integers(0, 3)) if intent not in ("affirm", "negate", "bye") else 0
            slots = [SLOTS[j] for j in sorted(rng.choice(len(SLOTS), size=n_slots, replace=False))]
            if speaker is U and intent == "inform":
                for s in slots:
                    belief[s] = VALUES[int(rng.integers(len(VALUES)))]
            acts.append(Act(intent, tuple((s, VALUES[int(rng.integers(len(VALUES)))]) for s in slots)))
        turns.append(Turn(speaker, tuple(acts), dict(belief)))
    return Dialogue(did, tuple(turns))


def random_corpus(seed: int, max_dialogues: int = 50, max_turns: int = 12,
                  split: Split | str = Split.TRAIN) -> Corpus:
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, max_dialogues + 1))
    return Corpus(tuple(random_dialogue(rng, f"s{seed}-d{i}", max_turns) for i in range(n)), split)


def conflict_corpus(n_pairs: int = 8) -> Corpus:
    """One agent decision node with two equally frequent valid actions.

    Every dialogue is ``user: inform(date)`` followed by the agent requesting
    either the time or the party size, in equal proportion.
    """
    dialogues = []
    for i in range(n_pairs):
        for slot in ("time", "party"):
            belief = {"date": "friday"}
            dialogues.append(Dialogue(f"c{i}-{slot}", (
                _turn(U, [("inform", ["date"])], belief),
                _turn(A, [("request", [slot])], belief),
            )))
    return Corpus(tuple(dialogues))
