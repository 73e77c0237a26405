"""Conversation graph construction, statistics, and serialization.

Every dialogue is walked from an all-zeros start state; turns with identical
encoded states (and speaker level) collapse onto one node, and each observed
transition increments the frequency of its edge.
"""
from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator

from .dialogue import Corpus, Speaker, Vocabulary, state_bits
from .errors import DataError, NodeNotFound, VocabMismatch


class Level(str, Enum):
    START = "START"
    USER = "USER"
    AGENT = "AGENT"
    FINAL = "FINAL"


def node_id(level: Level | str, bits: str) -> str:
    return f"{Level(level).value}:{bits}"


def split_node_id(nid: str) -> tuple[Level, str]:
    level, _, bits = nid.partition(":")
    return Level(level), bits


@dataclass(frozen=True)
class Node:
    id: str
    level: Level
    state: str


class ConvGraph:
    """Directed graph of dialogue states with frequency-weighted edges.

    Edges are keyed by ``(from, to)``; the act labelling an edge is the act
    segment of the destination state, so it is derived rather than stored.
    Treat instances as read-only once built.
    """

    def __init__(self, width: int, n_act: int, vocab_hash: str = ""):
        if not 0 <= n_act <= width:
            raise DataError(f"act width {n_act} incompatible with state width {width}")
        self.width = width
        self.n_act = n_act
        self.vocab_hash = vocab_hash
        self.nodes: dict[str, Node] = {}
        self._out: dict[str, dict[str, int]] = defaultdict(dict)
        self._in: dict[str, dict[str, int]] = defaultdict(dict)
        self.start = self._add_node(Level.START, "0" * width)

    @classmethod
    def for_vocab(cls, vocab: Vocabulary) -> "ConvGraph":
        return cls(vocab.width, vocab.n_act, vocab.hash)

    def _add_node(self, level: Level, bits: str) -> str:
        if len(bits) != self.width:
            raise DataError(f"state width {len(bits)} != graph width {self.width}")
        nid = node_id(level, bits)
        if nid not in self.nodes:
            self.nodes[nid] = Node(nid, Level(level), bits)
        return nid

    def _add_edge(self, src: str, dst: str, count: int = 1) -> None:
        out = self._out[src]
        out[dst] = out.get(dst, 0) + count
        inc = self._in[dst]
        inc[src] = inc.get(src, 0) + count

    # -- queries ------------------------------------------------------------

    def __contains__(self, nid) -> bool:
        return nid in self.nodes

    def node(self, nid: str) -> Node:
        try:
            return self.nodes[nid]
        except KeyError:
            raise NodeNotFound(nid) from None

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return sum(len(v) for v in self._out.values())

    def edges(self) -> Iterator[tuple[str, str, int]]:
        """All edges in canonical order."""
        for src in sorted(self._out):
            for dst in sorted(self._out[src]):
                yield src, dst, self._out[src][dst]

    def frequency(self, src: str, dst: str) -> int:
        return self._out.get(src, {}).get(dst, 0)

    def successors(self, nid: str) -> dict[str, int]:
        self.node(nid)
        return dict(self._out.get(nid, {}))

    def predecessors(self, nid: str) -> dict[str, int]:
        self.node(nid)
        return dict(self._in.get(nid, {}))

    def act_of(self, nid: str) -> str:
        """Act segment of a node's state (the act on every edge into it)."""
        return self.node(nid).state[: self.n_act]

    def valid_actions(self, nid: str) -> list[tuple[str, int]]:
        """Acts taken by the next speaker at ``nid``, with summed frequencies.

        Only edges into the opposite speaker's level count: transitions into
        the final state and junctions between concatenated dialogues are not
        actions. Sorted by frequency descending, then act bitstring ascending.
        """
        want = Level.AGENT if self.node(nid).level is Level.USER else Level.USER
        totals: dict[str, int] = {}
        for dst, freq in self.successors(nid).items():
            if self.nodes[dst].level is not want:
                continue
            act = self.act_of(dst)
            totals[act] = totals.get(act, 0) + freq
        return sorted(totals.items(), key=lambda kv: (-kv[1], kv[0]))

    def agent_nodes(self) -> list[str]:
        """Nodes where the agent acts next: at least one edge into an AGENT node."""
        return sorted(
            src
            for src, out in self._out.items()
            if self.nodes[src].level is Level.USER
            and any(self.nodes[dst].level is Level.AGENT for dst in out)
        )

    def agent_node_for(self, last_state: str) -> str:
        """Resolve the decision node from the most recent history state."""
        return node_id(Level.USER, last_state)

    # -- comparison / io ----------------------------------------------------

    def edge_dict(self) -> dict[tuple[str, str], int]:
        return {(s, d): f for s, d, f in self.edges()}

    def __eq__(self, other) -> bool:
        if not isinstance(other, ConvGraph):
            return NotImplemented
        return (
            self.width == other.width
            and self.n_act == other.n_act
            and self.vocab_hash == other.vocab_hash
            and self.nodes == other.nodes
            and self.edge_dict() == other.edge_dict()
        )

    def __repr__(self):
        return f"ConvGraph(nodes={self.n_nodes}, edges={self.n_edges}, width={self.width})"

    def to_dict(self) -> dict:
        return {
            "vocab_hash": self.vocab_hash,
            "width": self.width,
            "act_width": self.n_act,
            "start": self.start,
            "nodes": [
                {"id": n.id, "level": n.level.value, "state": n.state}
                for n in (self.nodes[k] for k in sorted(self.nodes))
            ],
            "edges": [{"from": s, "to": d, "freq": f} for s, d, f in self.edges()],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict()) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def from_dict(cls, obj: dict) -> "ConvGraph":
        try:
            g = cls(obj["width"], obj["act_width"], obj.get("vocab_hash", ""))
            for n in obj["nodes"]:
                nid = g._add_node(Level(n["level"]), n["state"])
                if nid != n["id"]:
                    raise DataError(f"node id {n['id']!r} does not match level/state")
            if obj["start"] != g.start:
                raise DataError("start node does not match the all-zeros START state")
            for e in obj["edges"]:
                if e["from"] not in g.nodes or e["to"] not in g.nodes:
                    raise DataError(f"edge references unknown node: {e}")
                if not isinstance(e["freq"], int) or e["freq"] < 1:
                    raise DataError(f"edge frequency must be a positive integer: {e}")
                g._add_edge(e["from"], e["to"], e["freq"])
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed graph file: {exc}") from None
        return g

    @classmethod
    def load(cls, path) -> "ConvGraph":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def build_graph(
    corpora: Corpus | Iterable[Corpus], vocab: Vocabulary, append_final: bool = True
) -> ConvGraph:
    """Unify every dialogue of ``corpora`` into one graph."""
    if isinstance(corpora, Corpus):
        corpora = [corpora]
    g = ConvGraph.for_vocab(vocab)
    final = g._add_node(Level.FINAL, "0" * vocab.width) if append_final else None
    for corpus in corpora:
        for dialogue in corpus:
            last = g.start
            for turn in dialogue.turns:
                level = Level.USER if turn.speaker is Speaker.USER else Level.AGENT
                cur = g._add_node(level, state_bits(turn, vocab))
                g._add_edge(last, cur)
                last = cur
            if final is not None:
                g._add_edge(last, final)
    return g


def merge_graphs(graphs: Iterable[ConvGraph]) -> ConvGraph:
    graphs = list(graphs)
    if not graphs:
        raise DataError("nothing to merge")
    first = graphs[0]
    out = ConvGraph(first.width, first.n_act, first.vocab_hash)
    for g in graphs:
        if (g.width, g.n_act) != (first.width, first.n_act):
            raise VocabMismatch(
                f"graph widths differ: {(g.width, g.n_act)} vs {(first.width, first.n_act)}"
            )
        if g.vocab_hash and first.vocab_hash and g.vocab_hash != first.vocab_hash:
            raise VocabMismatch("graphs were built from different vocabularies")
        for n in g.nodes.values():
            out._add_node(n.level, n.state)
        for s, d, f in g.edges():
            out._add_edge(s, d, f)
    return out


@dataclass(frozen=True)
class GraphStats:
    edges: int
    repetition: float
    nodes: int
    mnd: float
    n_dialogues: int

    def row(self, name: str = "", instances: int | None = None, unique: int | None = None) -> str:
        cells = [
            name,
            f"{self.edges:,}",
            f"{self.repetition:.1f}%",
            f"{self.nodes:,}",
            f"{self.mnd:.2f}",
            f"{self.n_dialogues:,}",
        ]
        if instances is not None:
            cells += [f"{instances:,}", f"{unique:,}" if unique is not None else ""]
        return "\t".join(cells)


STATS_HEADER = "\t".join(
    ["dataset", "edges", "repetition", "nodes", "MND", "# dial", "# instances", "# unique"]
)


def graph_stats(g: ConvGraph, corpora: Corpus | Iterable[Corpus] | None = None) -> GraphStats:
    """Table-style statistics; MND is outgoing edges per node over all nodes."""
    freqs = [f for _, _, f in g.edges()]
    n_edges = len(freqs)
    repetition = 100.0 * sum(f > 1 for f in freqs) / n_edges if n_edges else 0.0
    mnd = n_edges / g.n_nodes if g.n_nodes else 0.0
    if corpora is None:
        n_dialogues = sum(g.successors(g.start).values())
    else:
        if isinstance(corpora, Corpus):
            corpora = [corpora]
        n_dialogues = sum(len(c) for c in corpora)
    return GraphStats(n_edges, repetition, g.n_nodes, mnd, n_dialogues)


def to_dot(g: ConvGraph, vocab: Vocabulary | None = None) -> str:
    """Plain DOT export, edges labelled with act names and frequencies."""
    short = {nid: f"n{i}" for i, nid in enumerate(sorted(g.nodes))}
    lines = ["digraph convgraph {"]
    for nid in sorted(g.nodes):
        level = g.nodes[nid].level.value
        lines.append(f'  {short[nid]} [label="{level}"];')
    for s, d, f in g.edges():
        if g.nodes[d].level is Level.FINAL:
            label = "<end>"
        elif vocab is not None:
            label = ", ".join(vocab.act_names(g.act_of(d)))
        else:
            label = g.act_of(d)
        lines.append(f'  {short[s]} -> {short[d]} [label="{label} ({f})"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
