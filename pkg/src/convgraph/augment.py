"""Training-data manipulation strategies built on the conversation graph.

* ``mfs_augment``: pair the most frequent action of every agent decision node
  with the most probable histories leading into that node.
* ``oracle_augment``: keep only generated instances that also appear in the
  held-out splits (a theoretical upper baseline).
* ``downsample``: drop duplicate instances.
* ``duplicate_dialogues``: concatenate pairs of dialogues with a state reset.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .dialogue import Corpus, Dialogue
from .errors import ConfigMismatch, NoAgentNodes
from .graph import ConvGraph
from .instances import DEFAULT_HISTORY, Instance, InstanceSet, check_compatible, dedupe

DEFAULT_CAP = 64
ORACLE_NOTE = "oracle: theoretical baseline only"


@dataclass(frozen=True)
class MfsConfig:
    n: int = DEFAULT_HISTORY
    max_histories_per_node: int = DEFAULT_CAP
    combine_with_base: bool = False

    def __post_init__(self):
        if self.max_histories_per_node < 1:
            raise ConfigMismatch("max_histories_per_node must be >= 1")
        if self.n < 1:
            raise ConfigMismatch("history length must be >= 1")


def backward_histories(g: ConvGraph, node: str, n: int, cap: int) -> list[tuple[str, ...]]:
    """Up to ``cap`` most probable backward paths of ``n`` states ending at ``node``.

    A path's score is the product of backward transition probabilities
    ``freq(pred -> cur) / in_freq(cur)``. Scores never increase as a path grows,
    so popping from a max-heap yields complete paths in descending probability.
    Ties fall back to the node-id tuple. Paths that reach the start state are
    zero-padded.
    """
    zero = "0" * g.width
    heap: list[tuple[float, tuple[str, ...]]] = [(-1.0, (node,))]
    found: list[tuple[str, ...]] = []
    seen: set[tuple[str, ...]] = set()
    while heap and len(found) < cap:
        neg_p, path = heapq.heappop(heap)
        last = path[-1]
        preds = g.predecessors(last)
        if len(path) == n or not preds:
            states = tuple(g.nodes[nid].state for nid in path)
            states += (zero,) * (n - len(states))
            if states not in seen:
                seen.add(states)
                found.append(states)
            continue
        total = sum(preds.values())
        for pred, freq in preds.items():
            heapq.heappush(heap, (neg_p * freq / total, path + (pred,)))
    return found


def mfs_augment(g: ConvGraph, cfg: MfsConfig = MfsConfig(), base: InstanceSet | None = None) -> InstanceSet:
    agent_nodes = g.agent_nodes()
    if not agent_nodes:
        raise NoAgentNodes("graph has no agent decision nodes")
    out = []
    for a in agent_nodes:
        target = g.valid_actions(a)[0][0]
        for history in backward_histories(g, a, cfg.n, cfg.max_histories_per_node):
            out.append(Instance(history, target))
    meta = {"strategy": "mfs", "cap": cfg.max_histories_per_node}
    result = dedupe(InstanceSet(out, cfg.n, g.vocab_hash, meta))
    if cfg.combine_with_base:
        if base is None:
            raise ConfigMismatch("combine_with_base requires base instances")
        check_compatible(base, result)
        combined = InstanceSet(base.instances + result.instances, cfg.n, g.vocab_hash,
                               {**meta, "combine_base": True})
        result = dedupe(combined)
    return result


def oracle_augment(
    mfs: InstanceSet,
    dev: InstanceSet,
    test: InstanceSet,
    base: InstanceSet | None = None,
) -> InstanceSet:
    """Generated instances that occur in dev or test and are new w.r.t. ``base``."""
    sets = [mfs, dev, test] + ([base] if base is not None else [])
    check_compatible(*sets)
    held_out = set(dev.instances) | set(test.instances)
    known = set(base.instances) if base is not None else set()
    keep = [i for i in dict.fromkeys(mfs.instances) if i in held_out and i not in known]
    return InstanceSet(keep, mfs.n, mfs.vocab_hash or dev.vocab_hash,
                       {"strategy": "oracle", "note": ORACLE_NOTE})


def downsample(s: InstanceSet) -> InstanceSet:
    out = dedupe(s)
    out.meta["strategy"] = "downsample"
    return out


def duplicate_dialogues(corpus: Corpus, factor: int = 2, seed: int = 13) -> Corpus:
    """Originals plus ``(factor - 1) * len(corpus)`` concatenated pairs.

    The second dialogue of a pair keeps its own belief states, and its first
    turn is recorded as a reset point, so nothing leaks across the junction.
    """
    if factor < 1:
        raise ConfigMismatch("duplication factor must be >= 1")
    originals = list(corpus.dialogues)
    if factor == 1 or not originals:
        return corpus
    rng = np.random.default_rng(seed)
    m = len(originals)
    extra = []
    for k in range((factor - 1) * m):
        i = int(rng.integers(m))
        if m > 1:
            j = int(rng.integers(m - 1))
            j += j >= i
        else:
            j = i
        a, b = originals[i], originals[j]
        offset = len(a.turns)
        resets = a.resets + (offset,) + tuple(r + offset for r in b.resets)
        extra.append(Dialogue(f"{a.id}+{b.id}~{k}", a.turns + b.turns, resets))
    return Corpus(tuple(originals + extra), corpus.split)
