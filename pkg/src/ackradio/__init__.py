"""Round-synchronous simulator for acknowledged broadcast and gossip in ad-hoc radio networks."""

from .ack import AckBroadcastNode, AckGossipNode, ChannelMismatch, broadcast_factory, gossip_factory
from .bidir import BidirNode, ProtocolViolation, bidir_factory
from .engine import (
    MaxRoundsExceeded,
    PreconditionViolated,
    ProtocolNode,
    RunOutcome,
    RunTrace,
    SimulationError,
    check_broadcast_complete,
    check_gossip_complete,
    run,
)
from .families import SetFamily, build_scf, build_selective, build_strongly_selective
from .model import ChannelMode, Message, NodeClass, Topology, classify_node, deliver

__version__ = "0.1.0"
