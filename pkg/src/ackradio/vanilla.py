"""Known-size broadcast and gossip building blocks.

Both baselines are round robin: ``N`` sweeps of ``L`` slots, the node
labelled ``l <= L`` owning slot ``l - 1`` of every sweep.  Exactly one
label owns each slot, so these schedules never collide, and each sweep
pushes every frontier forward by at least one hop.

A second broadcast schedule built from a selective family is provided
behind the same interface.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .engine import ProtocolNode
from .families import SetFamily, build_selective
from .model import IDLE, LISTEN, Message, Transmit


class Schedule:
    """Which labels transmit at which offset of a fixed-length block."""

    kind: str = "gossip"
    length: int = 0

    def transmits_at(self, label: int, offset: int) -> bool:
        raise NotImplementedError

    def next_slot(self, label: int, offset: int) -> int | None:
        """Smallest offset >= ``offset`` owned by ``label``, if any."""
        raise NotImplementedError

    def scheduled(self, labels, offset: int) -> list[int]:
        return [u for u in labels if self.transmits_at(u, offset)]


@dataclass(frozen=True)
class RoundRobin(Schedule):
    N: int
    L: int
    kind: str = "gossip"

    def __post_init__(self):
        if self.N < 1 or self.L < 1:
            raise ValueError("N and L must be >= 1")

    @property
    def length(self) -> int:
        return self.N * self.L

    def rounds(self) -> int:
        return self.length

    def transmits_at(self, label: int, offset: int) -> bool:
        return 1 <= label <= self.L and 0 <= offset < self.length and offset % self.L == label - 1

    def next_slot(self, label: int, offset: int) -> int | None:
        if not 1 <= label <= self.L:
            return None
        offset = max(offset, 0)
        sweep, pos = divmod(offset, self.L)
        if pos > label - 1:
            sweep += 1
        slot = sweep * self.L + label - 1
        return slot if slot < self.length else None


def round_robin_gossip(N: int, L: int) -> RoundRobin:
    return RoundRobin(N, L, "gossip")


def round_robin_broadcast(N: int, L: int) -> RoundRobin:
    return RoundRobin(N, L, "broadcast")


def nrg(N: int, L: int) -> int:
    return round_robin_gossip(N, L).length


def nb(N: int, L: int) -> int:
    return round_robin_broadcast(N, L).length


@dataclass(frozen=True)
class FamilySchedule(Schedule):
    """``repeats`` back-to-back copies of a set family."""

    family: SetFamily
    repeats: int = 1
    kind: str = "broadcast"

    @property
    def length(self) -> int:
        return len(self.family) * self.repeats

    def transmits_at(self, label: int, offset: int) -> bool:
        if not 0 <= offset < self.length or not 1 <= label <= self.family.universe_max:
            return False
        j = offset % len(self.family)
        rows = self.family.rounds_of(label)
        k = np.searchsorted(rows, j)
        return k < len(rows) and rows[k] == j

    def next_slot(self, label: int, offset: int) -> int | None:
        rows = self.family.rounds_of(label)
        if not len(rows):
            return None
        offset = max(offset, 0)
        size = len(self.family)
        rep, j = divmod(offset, size)
        k = int(np.searchsorted(rows, j))
        if k == len(rows):
            rep, k = rep + 1, 0
        slot = rep * size + int(rows[k])
        return slot if slot < self.length else None


def selective_broadcast(N: int, L: int, strategy: str = "singleton", seed: int = 0) -> FamilySchedule:
    """N passes of an (N, L)-selective family.

    Nodes informed during a pass wait for the next pass, so the informed
    in-neighbourhood of a frontier node is fixed within a pass and gets
    hit exactly once.
    """
    fam = build_selective(min(N, L), L, strategy, seed)
    return FamilySchedule(fam, N)


# ---------------------------------------------------------------------------
# standalone nodes exercising a single execution


class GossipNode(ProtocolNode):
    """One execution of a gossip schedule; the rumor id is the label."""

    def __init__(self, label: int, schedule: Schedule, start: int = 0, participate: bool = True):
        super().__init__(label)
        self.schedule = schedule
        self.start = start
        self.participate = participate
        self.initial_rumors = frozenset({label}) if participate else frozenset()
        self.rumors = set(self.initial_rumors)

    def _end(self) -> int:
        return self.start + self.schedule.length

    def next_round(self, r):
        if r >= self._end():
            return r
        slot = self.schedule.next_slot(self.label, r - self.start) if self.participate else None
        return self.start + slot if slot is not None else self._end()

    def act(self, r):
        if r >= self._end():
            self.done = True
            self.done_round = self._end() - 1
            return IDLE
        if self.participate and self.schedule.transmits_at(self.label, r - self.start):
            known = frozenset(self.rumors)
            return Transmit(Message(self.label, "GOSSIP", known, known))
        return LISTEN

    def receive(self, r, reception):
        msg = getattr(reception, "message", None)
        if msg is not None and self.participate:
            self.rumors |= msg.rumors


class BroadcastNode(ProtocolNode):
    """One execution of a broadcast schedule started by ``initiators``."""

    def __init__(self, label: int, schedule: Schedule, informed: bool, rumor="R", start: int = 0, deferred: bool = False):
        super().__init__(label)
        self.schedule = schedule
        self.start = start
        self.rumor = rumor
        self.informed = informed
        self.informed_pass = -1 if informed else None
        self.deferred = deferred
        if informed:
            self.initial_rumors = frozenset({rumor})
            self.rumors = {rumor}

    def _end(self):
        return self.start + self.schedule.length

    def _may_send(self, offset: int) -> bool:
        if not self.informed:
            return False
        if self.deferred and isinstance(self.schedule, FamilySchedule):
            return offset // len(self.schedule.family) > self.informed_pass
        return True

    def next_round(self, r):
        if r >= self._end():
            return r
        if not self.informed:
            return self._end()
        slot = self.schedule.next_slot(self.label, r - self.start)
        while slot is not None and not self._may_send(slot):
            slot = self.schedule.next_slot(self.label, slot + 1)
        return self.start + slot if slot is not None else self._end()

    def act(self, r):
        if r >= self._end():
            self.done = True
            self.done_round = self._end() - 1
            return IDLE
        off = r - self.start
        if self._may_send(off) and self.schedule.transmits_at(self.label, off):
            return Transmit(Message(self.label, "RUMOR", None, frozenset({self.rumor})))
        return LISTEN

    def receive(self, r, reception):
        msg = getattr(reception, "message", None)
        if msg is not None and self.rumor in msg.rumors and not self.informed:
            self.informed = True
            self.rumors.add(self.rumor)
            if isinstance(self.schedule, FamilySchedule):
                self.informed_pass = (r - self.start) // len(self.schedule.family)


class MutualReachNode(ProtocolNode):
    """Two gossip executions: labels first, then the label sets received.

    Afterwards ``mutual`` is the set of participants w with v in K1(w) and w
    in K1(v), i.e. the strongly connected component of v in the subnetwork
    induced by the participants.
    """

    def __init__(self, label: int, schedule: Schedule, participate: bool = True):
        super().__init__(label)
        self.schedule = schedule
        self.participate = participate
        self.k1: set[int] = {label} if participate else set()
        self.k2: dict[int, frozenset] = {}
        self.mutual: set[int] | None = None

    def _end(self):
        return 2 * self.schedule.length

    def next_round(self, r):
        if r >= self._end() or not self.participate:
            return max(r, self._end())
        g = self.schedule.length
        ex, off = divmod(r, g)
        slot = self.schedule.next_slot(self.label, off)
        if slot is None:
            if ex == 1:
                return self._end()
            slot = self.schedule.next_slot(self.label, 0)
            ex = 1
            if slot is None:
                return self._end()
        return ex * g + slot

    def act(self, r):
        if r >= self._end():
            if self.participate:
                self.k2.setdefault(self.label, frozenset(self.k1))
                self.mutual = {w for w, ks in self.k2.items() if self.label in ks}
            self.done = True
            self.done_round = self._end() - 1
            return IDLE
        g = self.schedule.length
        if not self.participate or not self.schedule.transmits_at(self.label, r % g):
            return LISTEN
        if r < g:
            return Transmit(Message(self.label, "LABELS", frozenset(self.k1)))
        self.k2.setdefault(self.label, frozenset(self.k1))
        return Transmit(Message(self.label, "LABELSETS", dict(self.k2)))

    def receive(self, r, reception):
        msg = getattr(reception, "message", None)
        if msg is None or not self.participate:
            return
        if r < self.schedule.length and msg.kind == "LABELS":
            self.k1 |= msg.payload
        elif msg.kind == "LABELSETS":
            self.k2.setdefault(self.label, frozenset(self.k1))
            for w, ks in msg.payload.items():
                self.k2.setdefault(w, ks)
