"""Network, message and channel primitives for synchronous radio networks.

A node either transmits, listens or idles in every round.  A listener
receives a message only when exactly one of its in-neighbours transmits;
two or more transmitters look like silence unless the channel offers
collision detection.
"""

from __future__ import annotations

import enum
import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence


class TopologyError(ValueError):
    pass


class ChannelMode(str, enum.Enum):
    NO_CD = "nocd"
    CD = "cd"


class NodeClass(str, enum.Enum):
    SMALL = "small"
    MEDIUM = "medium"
    BIG = "big"


@dataclass(frozen=True)
class Message:
    """An authenticated transmission.

    ``kind`` is a control tag (RUMOR, LABELS, FAILURE, NACK, TOKEN, ...),
    ``payload`` is arbitrary structured data and ``rumors`` is the set of
    rumor identifiers the message carries.  The harness derives delivery
    from ``rumors`` alone, so protocols cannot self-report knowledge.
    """

    sender: int
    kind: str
    payload: Any = None
    rumors: frozenset = frozenset()
    phase: int | None = None


class Listen:
    __slots__ = ()

    def __repr__(self):
        return "Listen"


class Idle:
    __slots__ = ()

    def __repr__(self):
        return "Idle"


LISTEN = Listen()
IDLE = Idle()


@dataclass(frozen=True)
class Transmit:
    message: Message


RoundAction = Transmit | Listen | Idle


class Silence:
    __slots__ = ()

    def __repr__(self):
        return "Silence"


class Collision:
    __slots__ = ()

    def __repr__(self):
        return "Collision"


SILENCE = Silence()
COLLISION = Collision()


@dataclass(frozen=True)
class Received:
    message: Message


Reception = Received | Silence | Collision


def deliver(mode: ChannelMode, transmitters: Sequence[Message], action: RoundAction = LISTEN) -> Reception:
    """Reception of a node whose in-neighbours sent ``transmitters`` this round."""
    if not isinstance(action, Listen):
        return SILENCE
    if len(transmitters) == 1:
        return Received(transmitters[0])
    if len(transmitters) >= 2 and ChannelMode(mode) is ChannelMode.CD:
        return COLLISION
    return SILENCE


def classify_node(label: int, phase: int, c: int) -> NodeClass:
    if phase < 1 or c < 1:
        raise ValueError("phase and c must be >= 1")
    if label <= 2**phase:
        return NodeClass.SMALL
    if label <= 2 ** (phase * c):
        return NodeClass.MEDIUM
    return NodeClass.BIG


@dataclass
class Topology:
    """Labelled network.  ``out_edges[u]`` holds the nodes that hear ``u``."""

    nodes: frozenset[int]
    out_edges: Mapping[int, frozenset[int]]
    kind: str = "directed"
    c: int = 2
    in_edges: dict[int, frozenset[int]] = field(init=False, repr=False)

    def __post_init__(self):
        if self.kind not in ("directed", "bidirectional"):
            raise TopologyError(f"unknown topology kind {self.kind!r}")
        self.nodes = frozenset(self.nodes)
        out = {u: frozenset(self.out_edges.get(u, ())) for u in self.nodes}
        incoming: dict[int, set[int]] = {u: set() for u in self.nodes}
        for u, vs in out.items():
            if u < 1:
                raise TopologyError(f"label {u} is not positive")
            for v in vs:
                if v == u:
                    raise TopologyError(f"self-loop at {u}")
                if v not in self.nodes:
                    raise TopologyError(f"edge {u}->{v} leaves the node set")
                incoming[v].add(u)
        for u in self.nodes:
            if u < 1:
                raise TopologyError(f"label {u} is not positive")
        if self.kind == "bidirectional":
            for u, vs in out.items():
                for v in vs:
                    if u not in out[v]:
                        raise TopologyError(f"bidirectional topology missing {v}->{u}")
        self.out_edges = out
        self.in_edges = {u: frozenset(vs) for u, vs in incoming.items()}

    @classmethod
    def from_edges(cls, nodes: Iterable[int], edges: Iterable[tuple[int, int]], kind: str = "directed", c: int = 2):
        nodes = list(nodes)
        if len(set(nodes)) != len(nodes):
            raise TopologyError("labels must be distinct")
        out: dict[int, set[int]] = {u: set() for u in nodes}
        for u, v in edges:
            if u not in out or v not in out:
                raise TopologyError(f"edge ({u}, {v}) uses an unknown label")
            out[u].add(v)
            if kind == "bidirectional":
                out[v].add(u)
        return cls(frozenset(nodes), {u: frozenset(vs) for u, vs in out.items()}, kind=kind, c=c)

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def max_label(self) -> int:
        return max(self.nodes)

    def edges(self) -> list[tuple[int, int]]:
        return sorted((u, v) for u, vs in self.out_edges.items() for v in vs)

    def neighbors(self, u: int) -> frozenset[int]:
        return self.out_edges[u]

    def labels_within_bound(self) -> bool:
        """Whether every label lies in [1, n^c]."""
        return self.max_label <= self.n**self.c

    def _reach(self, start: int, adj: Mapping[int, frozenset[int]]) -> set[int]:
        seen = {start}
        queue = deque([start])
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    queue.append(v)
        return seen

    def is_strongly_connected(self) -> bool:
        if not self.nodes:
            return False
        start = min(self.nodes)
        return len(self._reach(start, self.out_edges)) == self.n and len(self._reach(start, self.in_edges)) == self.n

    def is_connected(self) -> bool:
        """Weak connectivity (equals strong connectivity for bidirectional graphs)."""
        if not self.nodes:
            return False
        undirected = {u: self.out_edges[u] | self.in_edges[u] for u in self.nodes}
        return len(self._reach(min(self.nodes), undirected)) == self.n

    def to_json(self) -> dict:
        if self.kind == "bidirectional":
            edges = sorted({(min(u, v), max(u, v)) for u, v in self.edges()})
        else:
            edges = self.edges()
        return {"kind": self.kind, "c": self.c, "nodes": sorted(self.nodes), "edges": [list(e) for e in edges]}

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "Topology":
        try:
            kind = data["kind"]
            return cls.from_edges(data["nodes"], [tuple(e) for e in data["edges"]], kind=kind, c=int(data["c"]))
        except KeyError as exc:
            raise TopologyError(f"topology file lacks field {exc}") from None

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1))

    @classmethod
    def load(cls, path: str | Path) -> "Topology":
        return cls.from_json(json.loads(Path(path).read_text()))
