"""Acknowledged broadcast and gossip for strongly connected networks.

The network size is unknown, so the protocols run in phases i = min_phase,
min_phase + 1, ...  Phase i guesses N = 2^i nodes and label bound
L = 2^(ic); nodes with labels above L ("big") cannot take part in the
round-robin subroutines and instead jam the verification stage so that
their neighbours notice the phase went wrong.  A phase ends with every
node deciding locally, from its own receptions only, whether the task is
complete.

``AckBroadcastNode``   broadcast with acknowledgement at the source.
``AckGossipNode``      gossip; ``variant="cd"`` observes collisions,
                       ``variant="nocd"`` infers them from a
                       selecting-colliding schedule.
"""

from __future__ import annotations

from bisect import bisect_left
from functools import lru_cache

import numpy as np

from .families import SetFamily, build_scf, build_strongly_selective
from .model import ChannelMode, Collision, Message, Received
from .staged import StagedNode
from .vanilla import RoundRobin, nb, nrg


class ChannelMismatch(ValueError):
    pass


# ---------------------------------------------------------------------------
# acknowledged broadcast

BROADCAST, LABELS, LABELSETS, VERIFY, STATUS, NACK = range(6)


@lru_cache(maxsize=None)
def broadcast_stage_lengths(i: int, c: int) -> tuple[int, ...]:
    N, L = 2**i, 2 ** (i * c)
    g, b = nrg(N, L), nb(N, L)
    return (b, g, g, g, g, b)


class AckBroadcastNode(StagedNode):
    """Per-node state machine of the acknowledged broadcast protocol.

    Stages of phase i, all round robin over (N, L):
      0  informed small/medium nodes forward the rumor;
      1  informed small/medium nodes gossip their labels (K1);
      2  the same nodes gossip the collected sets K1 (K2);
         v is in M iff the source's K1 contains v, i.e. v and the source
         reach each other;
      3  nodes outside M send FAILURE in every round while M replays the
         slots of stage 2; an M node hearing FAILURE or nothing fails;
      4  stage-2 participants gossip a failure flag;
      5  the source (failed, or told of a failure) floods NACK.
    An M node that is not failed and heard neither a failure flag nor a
    NACK stops; otherwise everyone moves on to phase i + 1.
    """

    def __init__(self, label: int, source: int, c: int = 2, min_phase: int = 4, rumor="rumor"):
        self.source = source
        self.rumor = rumor
        self.is_source = label == source
        self.informed = self.is_source
        self.acknowledged = False
        super().__init__(label, c, min_phase)
        if self.is_source:
            self.initial_rumors = frozenset({rumor})
            self.rumors = {rumor}

    def stage_lengths(self, i):
        return list(broadcast_stage_lengths(i, self.c))

    def begin_phase(self, i):
        self.rr = RoundRobin(self.N, self.L)
        self.participant = False
        self.k1: set[int] = set()
        self.k2: dict[int, frozenset] = {}
        self.in_m = False
        self.m_view: set[int] = set()
        self.failed = False
        self.failure_known = False
        self.heard_any = False
        self.heard_failure = False
        self.nack = False
        self.exec2_heard: list[tuple[int, int]] = []
        self.replay_heard: list[tuple[int, int]] = []

    def begin_stage(self, k):
        if k == LABELS:
            self.participant = self.informed and self.small_or_medium
            if self.participant:
                self.k1 = {self.label}
        elif k == VERIFY and not self.in_m:
            self.log("jam")
        elif k == NACK and self.is_source and self.participant and (self.failed or self.failure_known):
            self.nack = True
            self.log("nack")

    def end_stage(self, k):
        if k == LABELSETS and self.participant:
            self.k2.setdefault(self.label, frozenset(self.k1))
            self.m_view = {w for w, ks in self.k2.items() if self.label in ks}
            self.in_m = self.source in self.k2 and self.label in self.k2[self.source]
            if self.in_m and len(self.m_view) > self.N:
                self.failed = True
                self.log("guard_size")
            elif self.in_m and len(self.m_view) == 1:
                self.failed = True
                self.log("guard_singleton")
        elif k == VERIFY and self.in_m and not self.failed:
            if self.heard_failure:
                self.failed = True
                self.log("heard_failure")
            elif not self.heard_any:
                self.failed = True
                self.log("silent_stage3")

    def end_phase(self, i):
        if self.in_m and not (self.failed or self.failure_known or self.nack):
            if self.is_source:
                self.acknowledged = True
            self.log("done")
            self.finish()

    def _sends(self, k: int) -> bool:
        if k == BROADCAST:
            return self.informed and self.small_or_medium
        if k in (LABELS, LABELSETS, STATUS):
            return self.participant
        if k == NACK:
            return self.participant and self.nack
        return False

    def plan(self, off):
        k = self.stage
        if k == VERIFY:
            return off if not self.in_m else self.rr.next_slot(self.label, off)
        return self.rr.next_slot(self.label, off) if self._sends(k) else None

    def steady(self, off):
        if self.stage == VERIFY and not self.in_m:
            return self.lengths[VERIFY] - 1
        return None

    def message(self, off):
        k = self.stage
        if k == VERIFY and not self.in_m:
            return Message(self.label, "FAILURE", self.label, phase=self.phase)
        if not self.rr.transmits_at(self.label, off):
            return None
        if k == VERIFY:
            return Message(self.label, "REPLAY", phase=self.phase)
        if not self._sends(k):
            return None
        if k == BROADCAST:
            return Message(self.label, "RUMOR", self.source, frozenset({self.rumor}), self.phase)
        if k == LABELS:
            return Message(self.label, "LABELS", frozenset(self.k1), phase=self.phase)
        if k == LABELSETS:
            self.k2.setdefault(self.label, frozenset(self.k1))
            return Message(self.label, "LABELSETS", dict(self.k2), phase=self.phase)
        if k == STATUS:
            return Message(self.label, "STATUS", self.failed or self.failure_known, phase=self.phase)
        return Message(self.label, "NACK", phase=self.phase)

    def on_receive(self, off, reception):
        if not isinstance(reception, Received):
            return
        msg = reception.message
        k = self.stage
        if k == BROADCAST and msg.kind == "RUMOR" and self.rumor in msg.rumors:
            if not self.informed:
                self.informed = True
                self.rumors.add(self.rumor)
        elif k == LABELS and self.participant and msg.kind == "LABELS":
            self.k1 |= msg.payload
        elif k == LABELSETS and self.participant and msg.kind == "LABELSETS":
            self.exec2_heard.append((off, msg.sender))
            for w, ks in msg.payload.items():
                self.k2.setdefault(w, ks)
        elif k == VERIFY and self.in_m:
            self.heard_any = True
            self.replay_heard.append((off, msg.sender))
            if msg.kind == "FAILURE":
                self.heard_failure = True
        elif k == STATUS and self.participant and msg.kind == "STATUS" and msg.payload:
            self.failure_known = True
        elif k == NACK and msg.kind == "NACK":
            self.nack = True


# ---------------------------------------------------------------------------
# acknowledged gossip

G_LABELS, G_LABELSETS, G_CHECK, G_STATUS, G_RUMORS = range(5)


@lru_cache(maxsize=None)
def stage3_family(variant: str, i: int, c: int, strategy: str = "singleton", seed: int = 0, d: float = 4) -> SetFamily:
    """Schedule of the third stage: SSF(2^i + 1, 2^(ic)) with CD, SCF(2^i, 2^(ic)) without."""
    L = 2 ** (i * c)
    if variant == "cd":
        return build_strongly_selective(min(2**i + 1, L), L, strategy, seed)
    if variant == "nocd":
        return build_scf(2**i, c, d, seed, ssf_strategy=strategy, trials=500)
    raise ValueError(f"unknown variant {variant!r}")


@lru_cache(maxsize=None)
def gossip_stage_lengths(variant: str, i: int, c: int, strategy: str, seed: int, d: float) -> tuple[int, ...]:
    N, L = 2**i, 2 ** (i * c)
    g = nrg(N, L)
    return (g, g, len(stage3_family(variant, i, c, strategy, seed, d)), g, g)


class AckGossipNode(StagedNode):
    """Per-node state machine of acknowledged gossip (both channel variants).

    First segment of phase i:
      0  small/medium nodes gossip labels; L = labels received;
      1  they gossip the sets from stage 0; M = nodes mutually reachable;
         fail if big (a), L != M (b), |M| > 2^i (c) or M = {self};
      2  failed nodes send FAILURE every round; the others send their label
         in the rounds the stage-3 family assigns them; afterwards fail on
         a FAILURE (A), an unexplained collision (B) or a label from
         outside M (C);
      3  small/medium nodes gossip a failure flag.
    Second segment: nodes that saw no failure gossip rumors and stop.
    """

    def __init__(
        self,
        label: int,
        c: int = 2,
        min_phase: int = 4,
        variant: str = "cd",
        strategy: str = "singleton",
        seed: int = 0,
        d: float = 4,
    ):
        if variant not in ("cd", "nocd"):
            raise ValueError(f"unknown variant {variant!r}")
        self.variant = variant
        self.strategy = strategy
        self.family_seed = seed
        self.d = d
        super().__init__(label, c, min_phase)
        self.initial_rumors = frozenset({label})
        self.rumors = {label}

    def stage_lengths(self, i):
        return list(gossip_stage_lengths(self.variant, i, self.c, self.strategy, self.family_seed, self.d))

    def begin_phase(self, i):
        self.rr = RoundRobin(self.N, self.L)
        self.family = stage3_family(self.variant, i, self.c, self.strategy, self.family_seed, self.d)
        self.participant = self.small_or_medium
        self.k1 = {self.label} if self.participant else set()
        self.k2: dict[int, frozenset] = {}
        self.direct: set[int] = set()
        self.m: set[int] = set()
        self.failed = False
        self.pending: list[str] = []
        self.heard_offsets: list[int] = []
        self.flag_heard = False
        self.active = False
        if not self.participant:
            self.failed = True
            self.log("a")

    def begin_stage(self, k):
        if k == G_RUMORS:
            self.active = self.participant and not self.failed and not self.flag_heard

    def end_stage(self, k):
        if k == G_LABELSETS and self.participant:
            self.k2.setdefault(self.label, frozenset(self.k1))
            self.m = {w for w, ks in self.k2.items() if self.label in ks}
            if self.k1 != self.m:
                self._fail("b")
            if len(self.m) > self.N:
                self._fail("c")
            if len(self.m) == 1:
                self._fail("singleton")
        elif k == G_CHECK and self.participant and not self.failed:
            if self.variant == "nocd":
                self._infer_collisions()
            for tag in dict.fromkeys(self.pending):
                self._fail(tag)

    def end_phase(self, i):
        if self.active and self.m <= self.rumors:
            self.log("done")
            self.finish()

    def _fail(self, tag: str, r: int | None = None) -> None:
        self.failed = True
        self.log(tag, r)

    def _scheduled(self, labels, off: int) -> int:
        return sum(self.family.contains(off, u) for u in labels)

    def _infer_collisions(self) -> None:
        """Without CD: a silent round in which exactly one known in-neighbour was due."""
        if not self.direct:
            return
        rows = np.concatenate([self.family.rounds_of(u) for u in sorted(self.direct)])
        uniq, counts = np.unique(rows, return_counts=True)
        lone = uniq[counts == 1]
        lone = np.setdiff1d(lone, self.family.rounds_of(self.label), assume_unique=True)
        lone = np.setdiff1d(lone, np.asarray(self.heard_offsets, dtype=lone.dtype))
        if len(lone):
            self.pending.append("B")

    def _stage_sends(self, k: int) -> bool:
        if k in (G_LABELS, G_LABELSETS, G_STATUS):
            return self.participant
        if k == G_RUMORS:
            return self.active
        return False

    def plan(self, off):
        k = self.stage
        if k == G_CHECK:
            if self.failed:
                return off
            if not self.participant:
                return None
            rows = self.family.rounds_list(self.label)
            j = bisect_left(rows, off)
            return rows[j] if j < len(rows) else None
        return self.rr.next_slot(self.label, off) if self._stage_sends(k) else None

    def steady(self, off):
        if self.stage == G_CHECK and self.failed:
            return self.lengths[G_CHECK] - 1
        return None

    def message(self, off):
        k = self.stage
        if k == G_CHECK:
            if self.failed:
                return Message(self.label, "FAILURE", self.label, phase=self.phase)
            if self.participant and self._scheduled((self.label,), off):
                return Message(self.label, "LABEL", self.label, phase=self.phase)
            return None
        if not self._stage_sends(k) or not self.rr.transmits_at(self.label, off):
            return None
        if k == G_LABELS:
            return Message(self.label, "LABELS", frozenset(self.k1), phase=self.phase)
        if k == G_LABELSETS:
            self.k2.setdefault(self.label, frozenset(self.k1))
            return Message(self.label, "LABELSETS", dict(self.k2), phase=self.phase)
        if k == G_STATUS:
            return Message(self.label, "STATUS", self.failed or self.flag_heard, phase=self.phase)
        known = frozenset(self.rumors)
        return Message(self.label, "GOSSIP", None, known, self.phase)

    def on_receive(self, off, reception):
        k = self.stage
        if k == G_CHECK:
            if not self.participant or self.failed:
                return
            if isinstance(reception, Collision):
                if self.variant == "cd" and self._scheduled(self.direct & self.m, off) <= 1:
                    self.pending.append("B")
                return
            if isinstance(reception, Received):
                msg = reception.message
                self.heard_offsets.append(off)
                if msg.kind == "FAILURE":
                    self.pending.append("A")
                if msg.sender not in self.m:
                    self.pending.append("C")
            return
        if not isinstance(reception, Received):
            return
        msg = reception.message
        if k == G_LABELS and self.participant and msg.kind == "LABELS":
            self.direct.add(msg.sender)
            self.k1 |= msg.payload
        elif k == G_LABELSETS and self.participant and msg.kind == "LABELSETS":
            self.direct.add(msg.sender)
            for w, ks in msg.payload.items():
                self.k2.setdefault(w, ks)
        elif k == G_STATUS and msg.kind == "STATUS" and msg.payload:
            self.flag_heard = True
        elif k == G_RUMORS and msg.kind == "GOSSIP":
            self.rumors |= msg.rumors


def broadcast_factory(source: int, c: int = 2, min_phase: int = 4, rumor="rumor"):
    return lambda u: AckBroadcastNode(u, source, c, min_phase, rumor)


def gossip_factory(channel: ChannelMode | str, variant: str, c: int = 2, min_phase: int = 4, strategy: str = "singleton", seed: int = 0, d: float = 4):
    """Node factory that refuses a protocol/channel mismatch."""
    channel = ChannelMode(channel)
    wanted = ChannelMode.CD if variant == "cd" else ChannelMode.NO_CD
    if channel is not wanted:
        raise ChannelMismatch(f"gossip variant {variant!r} needs channel {wanted.value!r}, got {channel.value!r}")
    return lambda u: AckGossipNode(u, c, min_phase, variant, strategy, seed, d)
