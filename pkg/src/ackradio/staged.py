"""Phase/stage bookkeeping shared by the phased protocols.

Every node derives the same stage boundaries from the global round
counter.  Subclasses describe one stage at a time through a few hooks and
the base class advances lazily, so it works with both the dense and the
sparse engine: a stage is closed only once the engine has moved past its
last round, by which time every reception of that stage was delivered.
"""

from __future__ import annotations

from .engine import ProtocolNode
from .model import IDLE, LISTEN, Message, NodeClass, Reception, Transmit, classify_node


class StagedNode(ProtocolNode):
    """Node whose life is a sequence of phases min_phase, min_phase+1, ..."""

    def __init__(self, label: int, c: int = 2, min_phase: int = 4):
        super().__init__(label)
        if min_phase < 1:
            raise ValueError("min_phase must be >= 1")
        self.c = c
        self.min_phase = min_phase
        self.phase = min_phase
        self.stage = 0
        self.stage_start = 0
        # phase -> tags of the rules/events that fired in it
        self.fired: dict[int, set[str]] = {}
        self._enter_phase(min_phase)

    # -- hooks -------------------------------------------------------------

    def stage_lengths(self, i: int) -> list[int]:
        raise NotImplementedError

    def begin_phase(self, i: int) -> None:
        pass

    def begin_stage(self, k: int) -> None:
        pass

    def end_stage(self, k: int) -> None:
        pass

    def end_phase(self, i: int) -> None:
        pass

    def plan(self, off: int) -> int | None:
        """Next offset >= off of the current stage at which the node transmits."""
        return None

    def message(self, off: int) -> Message | None:
        return None

    def on_receive(self, off: int, reception: Reception) -> None:
        pass

    def steady(self, off: int) -> int | None:
        """Last offset through which the message sent at ``off`` repeats unchanged."""
        return None

    # -- machinery ---------------------------------------------------------

    @property
    def stage_end(self) -> int:
        return self.stage_start + self.lengths[self.stage]

    def _enter_phase(self, i: int) -> None:
        self.phase = i
        self.N = 2**i
        self.L = 2 ** (i * self.c)
        self.cls = classify_node(self.label, i, self.c)
        self.lengths = self.stage_lengths(i)
        self.stage = 0
        self.begin_phase(i)
        self.begin_stage(0)

    def finish(self) -> None:
        """Declare termination at the end of the current phase."""
        self.done = True
        self.done_phase = self.phase
        self.done_round = self.stage_start - 1

    def _advance(self, r: int) -> None:
        while not self.done and r >= self.stage_end:
            end = self.stage_end
            self.end_stage(self.stage)
            self.stage += 1
            self.stage_start = end
            if self.stage < len(self.lengths):
                self.begin_stage(self.stage)
                continue
            self.end_phase(self.phase)
            if self.done:
                return
            self._enter_phase(self.phase + 1)

    def next_round(self, r):
        self._advance(r)
        if self.done:
            return None
        off = self.plan(r - self.stage_start)
        if off is None or off >= self.lengths[self.stage]:
            return self.stage_end
        return self.stage_start + off

    def act(self, r):
        self._advance(r)
        if self.done:
            return IDLE
        msg = self.message(r - self.stage_start)
        return Transmit(msg) if msg is not None else LISTEN

    def receive(self, r, reception):
        self._advance(r)
        if not self.done:
            self.on_receive(r - self.stage_start, reception)

    def steady_until(self, r):
        e = self.steady(r - self.stage_start)
        return None if e is None else self.stage_start + e

    def log(self, tag: str, r: int | None = None) -> None:
        self.events.append((self.stage_start if r is None else r, tag))
        self.fired.setdefault(self.phase, set()).add(tag)

    @property
    def small_or_medium(self) -> bool:
        return self.cls is not NodeClass.BIG
