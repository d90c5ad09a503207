"""Acknowledged broadcast on bidirectional networks by token DFS.

Phase i (N = 2^i, label cap L = 2^(ic)) has two stages.

Stage A, 1 + 2|SF(N, L)| rounds: the source announces the rumor, its
neighbours answer with their labels along a selective family (odd
rounds) and the source echoes the first label it hears (even rounds).
That neighbour becomes the source's helper h.

Stage B, 7 N ic rounds: a token walks the network depth first.  The
holder looks for an undiscovered neighbour with ``estimate``, a three
round probe whose outcome (zero, one, two or more) is decoded from what
the holder hears:

    R1  holder sends (h, X, Y) and the rumor
    R2  neighbours with labels in (Y - X) - {h} send their label
    R3  the same neighbours send again, together with the helper h

``binary_select`` drives ``estimate`` to either a label or "nothing
left".  The token goes to a found neighbour (whose helper is the node it
came from) or back to the parent.  If the token is back at a fully
explored source within the first 4/7 of the stage, the last 3/7 carry an
ACK wave, one node per round in discovery order.  Otherwise nobody stops
and phase i + 1 starts.

Nodes with labels above the cap cannot be addressed, so they jam R2 and R3
of every estimate they overhear; a holder next to one can never conclude
"nothing left" and the phase fails.
"""

from __future__ import annotations

from bisect import bisect_left
from dataclasses import dataclass
from functools import lru_cache
from typing import Generator

from .engine import ProtocolNode
from .families import SetFamily, build_selective
from .model import IDLE, LISTEN, Message, NodeClass, Received, Transmit
from .staged import StagedNode


class ProtocolViolation(RuntimeError):
    pass


ZERO = "zero"
TWO_PLUS = "two+"
JAMMER = "jammer"


@dataclass(frozen=True)
class One:
    label: int


@dataclass(frozen=True)
class Found:
    label: int


NONE_LEFT = "none-left"


def decode_estimate(r2: Message | None, r3: Message | None, h: int, lo: int, hi: int):
    """Outcome of one estimate from the messages received in R2 and R3."""
    if r2 is not None and r3 is not None:
        if r3.kind == "HELPER" and r3.sender == h and r2.kind == "RESP" and lo <= r2.sender <= hi:
            raise ProtocolViolation(f"R2 and R3 both received (from {r2.sender} and {r3.sender})")
        return JAMMER
    if r2 is not None:
        if r2.kind == "RESP" and lo <= r2.sender <= hi and r2.sender != h:
            return One(r2.sender)
        return JAMMER
    if r3 is not None:
        return ZERO if (r3.kind == "HELPER" and r3.sender == h) else JAMMER
    return TWO_PLUS


def oracle_estimate(neighbors, h: int, X, lo: int, hi: int):
    """Set-count reference for ``estimate``."""
    cand = sorted(v for v in neighbors if lo <= v <= hi and v not in X and v != h)
    if not cand:
        return ZERO
    if len(cand) == 1:
        return One(cand[0])
    return TWO_PLUS


def binary_select(X, cap: int) -> Generator[tuple[int, int], object, object]:
    """Yield (lo, hi) ranges to estimate, receive outcomes, return Found/NONE_LEFT/JAMMER."""
    out = yield (1, cap)
    if out == JAMMER:
        return JAMMER
    if out == ZERO:
        return NONE_LEFT
    if isinstance(out, One):
        return Found(out.label)
    top = max(X) if X else 1
    j = max(0, (top - 1).bit_length())
    while True:
        hi = min(2**j, cap)
        out = yield (1, hi)
        if out == JAMMER:
            return JAMMER
        if isinstance(out, One):
            return Found(out.label)
        if out == TWO_PLUS:
            break
        if hi >= cap:
            return NONE_LEFT
        j += 1
    lo = 1
    while True:
        # [lo, hi] holds at least two undiscovered neighbours
        if lo == hi:
            return JAMMER
        mid = (lo + hi) // 2
        out = yield (lo, mid)
        if out == JAMMER:
            return JAMMER
        if isinstance(out, One):
            return Found(out.label)
        if out == ZERO:
            lo = mid + 1
        else:
            hi = mid


def respond(label: int, big: bool, msg: Message, r: int) -> dict[int, Message]:
    """Responses a listener schedules after overhearing an EST announcement at round r."""
    if msg.kind != "EST":
        return {}
    h, X, (lo, hi) = msg.payload
    if big:
        jam = Message(label, "JAM", msg.sender)
        return {r + 1: jam, r + 2: jam}
    out: dict[int, Message] = {}
    if lo <= label <= hi and label not in X and label != h:
        resp = Message(label, "RESP", msg.sender)
        out[r + 1] = resp
        out[r + 2] = resp
    if label == h:
        out[r + 2] = Message(label, "HELPER", msg.sender)
    return out


# ---------------------------------------------------------------------------
# protocol


@lru_cache(maxsize=None)
def discovery_family(i: int, c: int, strategy: str = "singleton", seed: int = 0) -> SetFamily:
    L = 2 ** (i * c)
    return build_selective(min(2**i, L), L, strategy, seed, trials=500)


def stage_b_length(i: int, c: int) -> int:
    return 7 * 2**i * i * c


STAGE_A, STAGE_B = 0, 1


class BidirNode(StagedNode):
    def __init__(self, label: int, source: int, c: int = 2, min_phase: int = 4, strategy: str = "singleton", seed: int = 0, rumor="rumor"):
        self.source = source
        self.is_source = label == source
        self.strategy = strategy
        self.family_seed = seed
        self.rumor = rumor
        self.acknowledged = False
        super().__init__(label, c, min_phase)
        if self.is_source:
            self.initial_rumors = frozenset({rumor})
            self.rumors = {rumor}

    def stage_lengths(self, i):
        fam = discovery_family(i, self.c, self.strategy, self.family_seed)
        return [1 + 2 * len(fam), stage_b_length(i, self.c)]

    @property
    def big(self) -> bool:
        return self.cls is NodeClass.BIG

    def begin_phase(self, i):
        self.family = discovery_family(i, self.c, self.strategy, self.family_seed)
        self.ic = i * self.c
        self.trav_end = 4 * self.N * self.ic
        self.heard_announce = False
        self.h: int | None = None
        self.echo_due = False
        self.echoed = False
        self.helper: int | None = None
        self.parent: int | None = None
        self.holder = False
        self.order: list[int] = []
        self.parents: dict[int, int | None] = {}
        self.gen = None
        self.next_action: int | None = None
        self.pending_est: tuple[int, int, int] | None = None
        self.r2: Message | None = None
        self.r3: Message | None = None
        self.first_found: int | None = None
        self.responses: dict[int, Message] = {}
        self.ack_ready = False
        self.ack_order: list[int] | None = None
        self.ack_slot: int | None = None
        self.dfs_order: list[int] | None = None
        self.dfs_parent: dict[int, int | None] | None = None

    def begin_stage(self, k):
        if k == STAGE_B and self.is_source and self.h is not None and not self.big:
            self.holder = True
            self.order = [self.label]
            self.parents = {self.label: None}
            self.helper = self.h
            self.first_found = self.h
            self.next_action = 0

    # -- stage A ----------------------------------------------------------

    def _stage_a_plan(self, off: int) -> int | None:
        if self.big:
            return None
        if self.is_source:
            if off == 0:
                return 0
            if self.echo_due:
                return off + (off % 2)  # next even offset
            return None
        if not self.heard_announce or self.echoed:
            return None
        # family member j is played at stage offset 1 + 2j
        rows = self.family.rounds_list(self.label)
        k = bisect_left(rows, off // 2)
        return 1 + 2 * rows[k] if k < len(rows) else None

    def _stage_a_message(self, off: int) -> Message | None:
        if self.big:
            return None
        if self.is_source:
            if off == 0:
                return Message(self.label, "RUMOR", None, frozenset({self.rumor}), self.phase)
            if self.echo_due and off % 2 == 0:
                self.echo_due = False
                self.echoed = True
                self.log("helper")
                return Message(self.label, "ECHO", self.h, phase=self.phase)
            return None
        if self.heard_announce and not self.echoed and off % 2 == 1 and self.family.contains((off - 1) // 2, self.label):
            return Message(self.label, "LABEL", self.label, phase=self.phase)
        return None

    def _stage_a_receive(self, off: int, msg: Message) -> None:
        if msg.kind == "RUMOR" and msg.sender == self.source and off == 0:
            self.heard_announce = True
            self.rumors.add(self.rumor)
        elif msg.kind == "LABEL" and self.is_source and self.h is None:
            self.h = msg.sender
            self.echo_due = True
        elif msg.kind == "ECHO":
            self.echoed = True

    # -- stage B ----------------------------------------------------------

    def _holder_plan(self) -> int | None:
        return self.next_action if self.holder else None

    def _take_token(self, off: int, msg: Message, returned: bool) -> None:
        order, parents = msg.payload[1], msg.payload[2]
        self.order = list(order)
        self.parents = dict(parents)
        if not returned:
            self.order.append(self.label)
            self.parents[self.label] = msg.sender
            self.parent = msg.sender
            self.helper = msg.sender
        self.holder = True
        self.gen = None
        self.next_action = off + 1

    def _abandon(self, tag: str) -> None:
        self.holder = False
        self.gen = None
        self.next_action = None
        self.log(tag)

    def _holder_act(self, off: int) -> Message | None:
        found = None
        if self.first_found is not None:
            found, self.first_found = Found(self.first_found), None
        else:
            if self.pending_est is not None:
                lo, hi = self.pending_est[1], self.pending_est[2]
                outcome = decode_estimate(self.r2, self.r3, self.helper, lo, hi)
                self.pending_est = None
                if outcome == JAMMER:
                    self._abandon("jammer")
                    return None
                step = self._send_gen(outcome)
            else:
                step = self._send_gen(None)
            if isinstance(step, tuple):
                lo, hi = step
                if off + 2 >= self.trav_end:
                    self._abandon("budget")
                    return None
                self.pending_est = (off, lo, hi)
                self.r2 = self.r3 = None
                self.next_action = off + 3
                payload = (self.helper, frozenset(self.order), (lo, hi))
                return Message(self.label, "EST", payload, frozenset(self.rumors), self.phase)
            found = step
        if found == JAMMER:
            self._abandon("jammer")
            return None
        if found == NONE_LEFT:
            self.holder = False
            self.gen = None
            if self.is_source:
                if off <= self.trav_end:
                    self.ack_ready = True
                    self.dfs_order = list(self.order)
                    self.dfs_parent = dict(self.parents)
                    self.log("explored")
                    return self._ack_message(off) if off == self.trav_end else None
                self._abandon("budget")
                return None
            if off >= self.trav_end:
                self._abandon("budget")
                return None
            return Message(self.label, "RETURN", (self.parent, tuple(self.order), dict(self.parents)), frozenset(self.rumors), self.phase)
        # Found
        if len(self.order) + 1 > self.N:
            self._abandon("overflow")
            return None
        if off >= self.trav_end:
            self._abandon("budget")
            return None
        self.holder = False
        self.gen = None
        return Message(self.label, "TOKEN", (found.label, tuple(self.order), dict(self.parents)), frozenset(self.rumors), self.phase)

    def _send_gen(self, outcome):
        try:
            if self.gen is None:
                self.gen = binary_select(set(self.order), self.L)
                return next(self.gen)
            return self.gen.send(outcome)
        except StopIteration as stop:
            self.gen = None
            return stop.value

    def _ack_message(self, off: int) -> Message:
        self.ack_order = list(self.dfs_order)
        self.acknowledged = True
        self._finish_at(off)
        return Message(self.label, "ACK", tuple(self.ack_order), frozenset(self.rumors), self.phase)

    def _finish_at(self, off: int) -> None:
        self.done = True
        self.done_phase = self.phase
        self.done_round = self.stage_start + off
        self.log("done")

    # -- hooks ------------------------------------------------------------

    def plan(self, off):
        if self.stage == STAGE_A:
            return self._stage_a_plan(off)
        cands = [r for r in self.responses if r >= off]
        if self.holder and self.next_action is not None:
            cands.append(max(self.next_action, off))
        if self.ack_ready and self.is_source:
            cands.append(max(self.trav_end, off))
        if self.ack_slot is not None and self.ack_slot >= off:
            cands.append(self.ack_slot)
        return min(cands) if cands else None

    def message(self, off):
        if self.stage == STAGE_A:
            return self._stage_a_message(off)
        if off in self.responses:
            return self.responses.pop(off)
        if self.holder and self.next_action == off:
            return self._holder_act(off)
        if self.is_source and self.ack_ready and off == self.trav_end:
            return self._ack_message(off)
        if self.ack_slot == off and self.ack_order is not None:
            self._finish_at(off)
            return Message(self.label, "ACK", tuple(self.ack_order), frozenset(self.rumors), self.phase)
        return None

    def on_receive(self, off, reception):
        if not isinstance(reception, Received):
            return
        msg = reception.message
        self.rumors |= msg.rumors & {self.rumor}
        if self.stage == STAGE_A:
            self._stage_a_receive(off, msg)
            return
        if self.pending_est is not None:
            start = self.pending_est[0]
            if off == start + 1:
                self.r2 = msg
            elif off == start + 2:
                self.r3 = msg
            return
        kind = msg.kind
        if kind == "EST":
            self.responses.update(respond(self.label, self.big, msg, off))
        elif kind == "TOKEN" and msg.payload[0] == self.label and not self.big:
            self._take_token(off, msg, returned=False)
        elif kind == "RETURN" and msg.payload[0] == self.label:
            self._take_token(off, msg, returned=True)
        elif kind == "ACK" and off >= self.trav_end and self.ack_order is None:
            order = list(msg.payload)
            if self.label in order:
                k = order.index(self.label)
                if self.trav_end + k > off:
                    self.ack_order = order
                    self.ack_slot = self.trav_end + k

    def end_phase(self, i):
        pass


def bidir_factory(source: int, c: int = 2, min_phase: int = 4, strategy: str = "singleton", seed: int = 0, rumor="rumor"):
    return lambda u: BidirNode(u, source, c, min_phase, strategy, seed, rumor)


# ---------------------------------------------------------------------------
# estimate in isolation


class EstimateProbeNode(ProtocolNode):
    """Runs a list of estimates back to back (3 rounds each) from one holder.

    Non-holders use the same response rule as the protocol.  ``results``
    collects the decoded outcome of every task at the holder.
    """

    def __init__(self, label: int, tasks=None, helper: int | None = None, big: bool = False):
        super().__init__(label)
        self.tasks = list(tasks or [])
        self.helper = helper
        self.big = big
        self.is_holder = tasks is not None
        self.results: list = []
        self.responses: dict[int, Message] = {}
        self.r2 = self.r3 = None
        self.end = 3 * len(self.tasks)

    def next_round(self, r):
        if self.is_holder:
            if r % 3 == 0 and r // 3 <= len(self.tasks):
                return r
            return r + (3 - r % 3) % 3 if r < self.end else self.end
        later = [x for x in self.responses if x >= r]
        return min(later) if later else None

    def act(self, r):
        if self.is_holder:
            if r % 3 == 0 and r > 0 and len(self.results) < r // 3:
                lo, hi = self.tasks[r // 3 - 1][1]
                self.results.append(decode_estimate(self.r2, self.r3, self.helper, lo, hi))
                self.r2 = self.r3 = None
            if r >= self.end:
                self.done = True
                self.done_round = r - 1
                return IDLE
            if r % 3 == 0:
                X, (lo, hi) = self.tasks[r // 3]
                return Transmit(Message(self.label, "EST", (self.helper, frozenset(X), (lo, hi))))
            return LISTEN
        msg = self.responses.pop(r, None)
        return Transmit(msg) if msg is not None else LISTEN

    def receive(self, r, reception):
        if not isinstance(reception, Received):
            return
        if self.is_holder:
            if r % 3 == 1:
                self.r2 = reception.message
            elif r % 3 == 2:
                self.r3 = reception.message
            return
        self.responses.update(respond(self.label, self.big, reception.message, r))


def run_estimates(topology, holder: int, helper: int, tasks, big: frozenset = frozenset()) -> list:
    """Simulate ``tasks`` = [(X, (lo, hi)), ...] as estimates from ``holder``; one outcome per task."""
    from .engine import run

    def factory(u):
        if u == holder:
            return EstimateProbeNode(u, tasks, helper)
        return EstimateProbeNode(u, big=u in big)

    out, _ = run(topology, "nocd", factory, 3 * len(tasks) + 2, record=False)
    return out.nodes[holder].results
