import random

import networkx as nx
import pytest

from ackradio.engine import run
from ackradio.harness.generators import gen_topology, max_extra
from ackradio.model import Topology
from ackradio.vanilla import (
    BroadcastNode,
    GossipNode,
    MutualReachNode,
    RoundRobin,
    nb,
    nrg,
    round_robin_broadcast,
    round_robin_gossip,
    selective_broadcast,
)


def cycle(n):
    return Topology.from_edges(range(1, n + 1), [(i, i % n + 1) for i in range(1, n + 1)])


def test_lengths():
    assert nrg(16, 256) == 4096
    assert nb(1, 1) == 1
    assert round_robin_gossip(2**4, 2**8).length == 4096


def test_next_slot():
    rr = RoundRobin(3, 4)
    assert [o for o in range(12) if rr.transmits_at(2, o)] == [1, 5, 9]
    assert rr.next_slot(2, 2) == 5
    assert rr.next_slot(2, 10) is None
    assert rr.next_slot(5, 0) is None


def test_gossip_two_cycle():
    sched = round_robin_gossip(2, 2)
    out, _ = run(cycle(2), "nocd", lambda u: GossipNode(u, sched), 10)
    assert out.termination_round == 3
    assert all(node.rumors == {1, 2} for node in out.nodes.values())


def test_gossip_single_participant():
    sched = round_robin_gossip(1, 1)
    assert sched.length == 1
    t = Topology.from_edges([1, 2], [(1, 2), (2, 1)])
    out, _ = run(t, "nocd", lambda u: GossipNode(u, sched, participate=(u == 1)), 10)
    assert out.nodes[1].rumors == {1}
    assert out.nodes[2].rumors == set()


def test_gossip_three_cycle():
    sched = round_robin_gossip(3, 3)
    out, _ = run(cycle(3), "nocd", lambda u: GossipNode(u, sched), 20)
    assert out.termination_round <= 8
    assert all(node.rumors == {1, 2, 3} for node in out.nodes.values())


def test_broadcast_line():
    t = Topology.from_edges([1, 2, 3], [(1, 2), (2, 3)])
    sched = round_robin_broadcast(3, 3)
    out, _ = run(t, "nocd", lambda u: BroadcastNode(u, sched, u == 1), 20)
    assert out.nodes[3].informed


def test_broadcast_two_initiators():
    sched = round_robin_broadcast(4, 4)
    out, _ = run(cycle(4), "nocd", lambda u: BroadcastNode(u, sched, u in (1, 3)), 40)
    assert all(node.informed for node in out.nodes.values())


def test_broadcast_no_initiator_is_silent():
    sched = round_robin_broadcast(4, 4)
    out, _ = run(cycle(4), "nocd", lambda u: BroadcastNode(u, sched, False), 40)
    assert out.metrics.transmissions == 0


@pytest.mark.parametrize("seed", range(10))
def test_round_robin_never_collides(seed):
    g = gen_topology("random_sc_digraph(8,10)", seed, "random")
    t = g.topology
    sched = round_robin_gossip(8, t.max_label)
    out, trace = run(t, "cd", lambda u: GossipNode(u, sched), 10**5)
    assert out.metrics.collisions == 0
    assert all(len(rec.transmissions) <= 1 for rec in trace)
    assert all(node.rumors == set(t.nodes) for node in out.nodes.values())


@pytest.mark.parametrize("seed", range(5))
def test_selective_broadcast_informs_everyone(seed):
    g = gen_topology("random_sc_digraph(8,6)", seed, "identity")
    sched = selective_broadcast(8, 8, "randomized", seed)
    out, _ = run(g.topology, "nocd", lambda u: BroadcastNode(u, sched, u == g.source, deferred=True), 10**5)
    assert all(node.informed for node in out.nodes.values())


def mutual_oracle(t, parts):
    G = nx.DiGraph()
    G.add_nodes_from(parts)
    G.add_edges_from((u, v) for u, v in t.edges() if u in parts and v in parts)
    comp = {}
    for scc in nx.strongly_connected_components(G):
        for u in scc:
            comp[u] = set(scc)
    return comp


@pytest.mark.parametrize("seed", range(25))
def test_mutual_reach_matches_scc(seed):
    rng = random.Random(seed)
    n = rng.randint(2, 10)
    g = gen_topology(f"random_sc_digraph({n},{min(rng.randint(0, n), max_extra('random_sc_digraph', n))})", seed, "random")
    t = g.topology
    parts = {u for u in t.nodes if rng.random() < 0.7}
    sched = round_robin_gossip(n, t.max_label)
    out, _ = run(t, "nocd", lambda u: MutualReachNode(u, sched, u in parts), 10**6)
    expect = mutual_oracle(t, parts)
    for u in t.nodes:
        assert out.nodes[u].mutual == (expect[u] if u in parts else None)
