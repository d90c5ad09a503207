"""Round-synchronous simulation loop.

Nodes are opaque state machines.  Each one only ever sees its own label,
the global round number and the receptions the engine hands it, so a
protocol cannot peek at the topology.

Two execution modes produce the same behaviour:

* dense: every node is polled every round and every listener is told
  about silence explicitly;
* sparse (default): the engine jumps between rounds in which somebody
  asked to be polled (``next_round``).  Listeners are only told about
  Received/Collision; any round a node did not hear about was silent.
  Protocols must therefore treat a missing reception as silence.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping

from .model import (
    COLLISION,
    IDLE,
    LISTEN,
    SILENCE,
    ChannelMode,
    Collision,
    Idle,
    Listen,
    Message,
    Received,
    Reception,
    RoundAction,
    Silence,
    Topology,
    Transmit,
    deliver,
)


class SimulationError(RuntimeError):
    pass


class MaxRoundsExceeded(SimulationError):
    pass


class PreconditionViolated(SimulationError):
    pass


class ProtocolNode:
    """Base class for per-node protocol state machines."""

    def __init__(self, label: int):
        self.label = label
        self.done = False
        self.done_phase: int | None = None
        # last round of the execution in which the node decided to stop
        self.done_round: int | None = None
        self.rumors: set = set()
        self.initial_rumors: frozenset = frozenset()
        # (round, tag) pairs for rule firings and other notable local events
        self.events: list[tuple[int, str]] = []

    def next_round(self, r: int) -> int | None:
        """Earliest round >= r at which the node wants to be polled."""
        return r

    def act(self, r: int) -> RoundAction:
        return LISTEN

    def receive(self, r: int, reception: Reception) -> None:
        pass

    def steady_until(self, r: int) -> int | None:
        """Called right after ``act(r)`` returned a transmission.

        Returning ``e > r`` promises that the node sends the very same
        message in every round up to ``e`` and ignores whatever happens
        meanwhile, so the sparse engine need not poll it.
        """
        return None

    def snapshot(self) -> dict:
        return {"done": self.done, "done_phase": self.done_phase, "rumors": sorted(self.rumors, key=repr)}


@dataclass
class RoundRecord:
    round: int
    transmissions: list[tuple[int, Message]]
    receptions: list[tuple[int, Reception]]


@dataclass
class RunTrace:
    records: list[RoundRecord] = field(default_factory=list)
    dense: bool = False

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def to_jsonl(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            for rec in self.records:
                fh.write(json.dumps(record_to_json(rec), sort_keys=True) + "\n")


@dataclass
class RunMetrics:
    rounds: int
    active_rounds: int
    transmissions: int
    collisions: int
    max_payload: int

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class RunOutcome:
    terminated: bool
    termination_round: int | None
    termination_phase: int | None
    nodes: dict[int, ProtocolNode]
    heard_rumors: dict[int, frozenset]
    metrics: RunMetrics

    def snapshot(self) -> dict[int, dict]:
        return {u: node.snapshot() for u, node in sorted(self.nodes.items())}

    def events(self, tag: str | None = None) -> list[tuple[int, int, str]]:
        out = [(r, u, t) for u, node in self.nodes.items() for r, t in node.events]
        out.sort()
        if tag is not None:
            out = [e for e in out if e[2] == tag]
        return out


def to_jsonable(value: Any) -> Any:
    if isinstance(value, (frozenset, set)):
        return sorted((to_jsonable(v) for v in value), key=lambda v: json.dumps(v, sort_keys=True))
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in sorted(value.items(), key=lambda kv: repr(kv[0]))}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, Message):
        return {
            "sender": value.sender,
            "kind": value.kind,
            "payload": to_jsonable(value.payload),
            "rumors": to_jsonable(value.rumors),
            "phase": value.phase,
        }
    if hasattr(value, "item"):
        return value.item()
    return value


def reception_to_json(rec: Reception) -> Any:
    if isinstance(rec, Received):
        return {"received": to_jsonable(rec.message)}
    return "collision" if isinstance(rec, Collision) else "silence"


def record_to_json(rec: RoundRecord) -> dict:
    return {
        "round": rec.round,
        "transmissions": [[u, to_jsonable(m)] for u, m in rec.transmissions],
        "receptions": [[u, reception_to_json(x)] for u, x in rec.receptions],
    }


def _payload_size(message: Message) -> int:
    p = message.payload
    try:
        return len(p) + len(message.rumors)
    except TypeError:
        return len(message.rumors) + (p is not None)


def run(
    topology: Topology,
    channel: ChannelMode | str,
    protocol_factory: Callable[[int], ProtocolNode],
    max_rounds: int,
    *,
    dense: bool = False,
    record: bool = True,
    until: int | None = None,
) -> tuple[RunOutcome, RunTrace]:
    """Run ``protocol_factory(label)`` on every node until all report done.

    ``until`` truncates the run after that round without raising; the
    outcome then reports ``terminated=False`` unless everyone finished.
    """
    channel = ChannelMode(channel)
    if topology.n < 2:
        raise PreconditionViolated("acknowledged protocols need n >= 2")
    if max_rounds < 1:
        raise PreconditionViolated("max_rounds must be positive")

    labels = sorted(topology.nodes)
    nodes = {u: protocol_factory(u) for u in labels}
    for u, node in nodes.items():
        if node.label != u:
            raise PreconditionViolated(f"factory built node {node.label} for label {u}")
    in_edges = topology.in_edges
    out_edges = topology.out_edges
    heard: dict[int, set] = {u: set() for u in labels}
    trace = RunTrace(dense=dense)
    transmissions_total = collisions = active = max_payload = 0
    termination_round = None
    undone = {u for u in labels if not nodes[u].done}

    heap: list[tuple[int, int]] = []
    scheduled: dict[int, int | None] = {}

    def reschedule(u: int, r: int) -> None:
        node = nodes[u]
        t = None if node.done else node.next_round(r)
        scheduled[u] = t
        if t is not None:
            if t < r:
                raise SimulationError(f"node {u} asked for past round {t} at {r}")
            heapq.heappush(heap, (t, u))

    if not dense:
        for u in labels:
            reschedule(u, 0)

    # sparse mode only: u -> (last round, message) for steady transmitters
    steady: dict[int, tuple[int, Message]] = {}

    def valid_top() -> int | None:
        while heap and scheduled.get(heap[0][1]) != heap[0][0]:
            heapq.heappop(heap)
        return heap[0][0] if heap else None

    r = 0
    last_round = -1
    while undone:
        if dense:
            t = r
            due = [u for u in labels if not nodes[u].done]
        else:
            top = valid_top()
            if steady and undone <= steady.keys():
                # nobody listens: replay the window in bulk
                w_end = min(e for e, _ in steady.values())
                if until is not None:
                    w_end = min(w_end, until)
                if w_end >= max_rounds:
                    raise MaxRoundsExceeded(f"no termination within {max_rounds} rounds")
                senders = sorted((u, m) for u, (_, m) in steady.items())
                span = w_end - r + 1
                active += span
                transmissions_total += span * len(senders)
                max_payload = max(max_payload, max(_payload_size(m) for _, m in senders))
                if record:
                    for t in range(r, w_end + 1):
                        trace.records.append(RoundRecord(t, list(senders), []))
                last_round = w_end
                r = w_end + 1
                if until is not None and w_end >= until:
                    break
                for u in sorted(u for u, (e, _) in steady.items() if e == w_end):
                    del steady[u]
                    reschedule(u, r)
                continue
            if steady:
                t = r
            elif top is None:
                break
            else:
                t = top
            due = []
            while heap and heap[0][0] == t:
                _, u = heapq.heappop(heap)
                if scheduled.get(u) == t:
                    due.append(u)
                    scheduled[u] = None
            due.sort()
        if until is not None and t > until:
            break
        if t >= max_rounds:
            raise MaxRoundsExceeded(f"no termination within {max_rounds} rounds")

        actions: dict[int, RoundAction] = {}
        for u in due:
            actions[u] = nodes[u].act(t)
        senders = [(u, a.message) for u, a in actions.items() if isinstance(a, Transmit)]
        for u, m in senders:
            if m.sender != u:
                raise SimulationError(f"node {u} forged sender {m.sender}")
        busy = {u for u, a in actions.items() if not isinstance(a, Listen)}
        if steady:
            senders = sorted(senders + [(u, m) for u, (_, m) in steady.items()])
            busy.update(steady)

        if dense:
            listeners = [u for u in labels if u not in busy and not nodes[u].done]
        else:
            cand = set()
            for u, _ in senders:
                cand.update(out_edges[u])
            listeners = sorted(v for v in cand if v not in busy and not nodes[v].done)

        by_label = dict(senders)
        receptions: list[tuple[int, Reception]] = []
        for v in listeners:
            msgs = [by_label[w] for w in sorted(in_edges[v]) if w in by_label]
            rec = deliver(channel, msgs, LISTEN)
            if len(msgs) >= 2:
                collisions += 1
            if dense or msgs:
                receptions.append((v, rec))

        touched = set(due)
        for v, rec in receptions:
            if isinstance(rec, Silence) and not dense:
                continue
            nodes[v].receive(t, rec)
            touched.add(v)
            if isinstance(rec, Received):
                heard[v].update(rec.message.rumors)

        if senders:
            active += 1
            transmissions_total += len(senders)
            max_payload = max(max_payload, max(_payload_size(m) for _, m in senders))
        if record and (senders or dense):
            trace.records.append(RoundRecord(t, senders, receptions))

        if not dense:
            for u in [u for u, (e, _) in steady.items() if e == t]:
                del steady[u]
                touched.add(u)
            for u in sorted(touched):
                a = actions.get(u)
                if isinstance(a, Transmit) and not nodes[u].done:
                    e = nodes[u].steady_until(t)
                    if e is not None and e > t:
                        steady[u] = (e, a.message)
                        scheduled[u] = None
                        continue
                reschedule(u, t + 1)
        for u in sorted(touched):
            node = nodes[u]
            if node.done and u in undone:
                undone.discard(u)
                end = node.done_round if node.done_round is not None else t
                termination_round = end if termination_round is None else max(termination_round, end)
        last_round = t
        r = t + 1

    terminated = not undone
    phases = [nodes[u].done_phase for u in labels if nodes[u].done_phase is not None]
    metrics = RunMetrics(
        rounds=(termination_round + 1) if terminated and termination_round is not None else last_round + 1,
        active_rounds=active,
        transmissions=transmissions_total,
        collisions=collisions,
        max_payload=max_payload,
    )
    outcome = RunOutcome(
        terminated=terminated,
        termination_round=termination_round if terminated else None,
        termination_phase=max(phases) if terminated and phases else None,
        nodes=nodes,
        heard_rumors={u: frozenset(heard[u]) for u in labels},
        metrics=metrics,
    )
    return outcome, trace


def replay_receptions(topology: Topology, channel: ChannelMode | str, record: RoundRecord) -> list[tuple[int, Reception]]:
    """Recompute the receptions of one trace record from its transmissions."""
    by_label = dict(record.transmissions)
    out = []
    for v, _ in record.receptions:
        msgs = [by_label[w] for w in sorted(topology.in_edges[v]) if w in by_label]
        out.append((v, deliver(ChannelMode(channel), msgs, LISTEN)))
    return out


def check_broadcast_complete(outcome: RunOutcome, source: int, rumor: Any) -> bool:
    """Every node heard the rumor over the channel, everyone is done and the source is acknowledged."""
    for u, node in outcome.nodes.items():
        if u != source and rumor not in outcome.heard_rumors[u]:
            return False
        if not node.done:
            return False
    return bool(getattr(outcome.nodes[source], "acknowledged", outcome.nodes[source].done))


def check_gossip_complete(outcome: RunOutcome) -> bool:
    """Every node holds every node's rumor (own rumor plus channel deliveries) and is done."""
    everything = set()
    for node in outcome.nodes.values():
        if not node.initial_rumors:
            return False
        everything |= node.initial_rumors
    for u, node in outcome.nodes.items():
        if not node.done:
            return False
        if not everything <= (outcome.heard_rumors[u] | node.initial_rumors):
            return False
    return True


def metrics_json(outcome: RunOutcome) -> dict:
    return {
        "terminated": outcome.terminated,
        "termination_round": outcome.termination_round,
        "termination_phase": outcome.termination_phase,
        **outcome.metrics.as_dict(),
    }


def write_metrics(outcome: RunOutcome, path: str | Path) -> None:
    Path(path).write_text(json.dumps(metrics_json(outcome), sort_keys=True, indent=1) + "\n")
