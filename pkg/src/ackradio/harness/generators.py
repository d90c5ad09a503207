"""Seeded topology and label generators.

Generators build a structure over positions 0..n-1 and then map positions
to labels.  Position 0 is the default source.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass

from ..model import Topology


class InvalidSpec(ValueError):
    pass


DIRECTED = ("directed_cycle", "random_sc_digraph", "hub_digraph")
BIDIRECTIONAL = ("bidir_path", "bidir_tree", "bidir_random_connected", "clique")
LABEL_MODES = ("identity", "random", "benign", "adversarial")


@dataclass
class GeneratedTopology:
    topology: Topology
    source: int
    spec: str
    seed: int
    label_mode: str


def parse_spec(spec: str) -> tuple[str, list[int]]:
    m = re.fullmatch(r"\s*([a-z_]+)\s*(?:\(([^)]*)\))?\s*", spec)
    if not m:
        raise InvalidSpec(f"cannot parse topology spec {spec!r}")
    name, args = m.group(1), m.group(2)
    try:
        values = [int(a) for a in args.split(",") if a.strip()] if args else []
    except ValueError:
        raise InvalidSpec(f"non-integer argument in {spec!r}") from None
    if name not in DIRECTED + BIDIRECTIONAL:
        raise InvalidSpec(f"unknown generator {name!r}")
    if not values:
        raise InvalidSpec(f"{name} needs n")
    return name, values


def max_extra(name: str, n: int) -> int:
    """How many extra edges/arcs the random generators can add at size n."""
    if name == "random_sc_digraph":
        return n * (n - 1) - n if n > 1 else 0
    if name == "bidir_random_connected":
        return n * (n - 1) // 2 - (n - 1) if n > 1 else 0
    return 0


def _structure(name: str, args: list[int], rng: random.Random) -> tuple[list[tuple[int, int]], str]:
    n = args[0]
    extra = args[1] if len(args) > 1 else 0
    if n < 1 or extra < 0:
        raise InvalidSpec("n must be >= 1 and extra_edges >= 0")
    if name == "directed_cycle":
        return ([(i, (i + 1) % n) for i in range(n)] if n > 1 else []), "directed"
    if name == "random_sc_digraph":
        order = list(range(n))
        rest = order[1:]
        rng.shuffle(rest)
        order = [0] + rest
        arcs = {(order[i], order[(i + 1) % n]) for i in range(n)} if n > 1 else set()
        free = [(u, v) for u in range(n) for v in range(n) if u != v and (u, v) not in arcs]
        if extra > len(free):
            raise InvalidSpec(f"only {len(free)} extra arcs available, asked for {extra}")
        arcs.update(rng.sample(free, extra))
        return sorted(arcs), "directed"
    if name == "hub_digraph":
        arcs = {(i, (i + 1) % n) for i in range(n)} if n > 1 else set()
        arcs.update((i, 0) for i in range(1, n))
        return sorted(arcs), "directed"
    if name == "bidir_path":
        return [(i, i + 1) for i in range(n - 1)], "bidirectional"
    if name in ("bidir_tree", "bidir_random_connected"):
        edges = {(rng.randrange(i), i) for i in range(1, n)}
        if name == "bidir_random_connected" and extra:
            free = [(u, v) for u in range(n) for v in range(u + 1, n) if (u, v) not in edges]
            if extra > len(free):
                raise InvalidSpec(f"only {len(free)} extra edges available, asked for {extra}")
            edges.update(rng.sample(free, extra))
        return sorted(edges), "bidirectional"
    if name == "clique":
        return [(u, v) for u in range(n) for v in range(u + 1, n)], "bidirectional"
    raise InvalidSpec(name)


def _cut_positions(n: int, edges: list[tuple[int, int]], kind: str) -> list[int]:
    """Positions whose removal disconnects the rest (strongly, for digraphs)."""
    cuts = []
    for x in range(n):
        keep = [u for u in range(n) if u != x]
        if len(keep) < 2:
            continue
        out = {u: set() for u in keep}
        inn = {u: set() for u in keep}
        for u, v in edges:
            if x in (u, v):
                continue
            out[u].add(v)
            inn[v].add(u)
            if kind == "bidirectional":
                out[v].add(u)
                inn[u].add(v)
        for adj in (out, inn):
            seen, stack = {keep[0]}, [keep[0]]
            while stack:
                for w in adj[stack.pop()]:
                    if w not in seen:
                        seen.add(w)
                        stack.append(w)
            if len(seen) < len(keep):
                cuts.append(x)
                break
    return cuts


def assign_labels(n: int, mode: str, c: int, rng: random.Random, min_phase: int = 4, cuts: list[int] | None = None) -> list[int]:
    if mode == "identity":
        return list(range(1, n + 1))
    if mode not in LABEL_MODES:
        raise InvalidSpec(f"unknown label mode {mode!r}")
    bound = n**c
    labels = rng.sample(range(1, bound + 1), n)
    if mode == "benign":
        small = min(2**min_phase, bound)
        if labels[0] > small:
            pool = [x for x in range(1, small + 1) if x not in labels[1:]]
            if pool:
                labels[0] = rng.choice(pool)
    elif mode == "adversarial":
        big_first = sorted(labels, reverse=True)
        cuts = [p for p in (cuts or []) if p != 0]
        rest = [p for p in range(n) if p not in cuts]
        order = cuts + rest
        tail = big_first[len(cuts):]
        rng.shuffle(tail)
        labels = [0] * n
        for p, lab in zip(order, big_first[:len(cuts)] + tail):
            labels[p] = lab
    return labels


def gen_topology(spec: str, seed: int = 0, labels: str = "identity", c: int = 2, min_phase: int = 4) -> GeneratedTopology:
    name, args = parse_spec(spec)
    rng = random.Random(f"{spec}|{seed}|{labels}|{c}")
    edges, kind = _structure(name, args, rng)
    n = args[0]
    cuts = _cut_positions(n, edges, kind) if labels == "adversarial" else None
    lab = assign_labels(n, labels, c, rng, min_phase, cuts)
    topo = Topology.from_edges(lab, [(lab[u], lab[v]) for u, v in edges], kind=kind, c=c)
    if n > 1 and not topo.is_strongly_connected():
        raise InvalidSpec(f"{spec} produced a network that is not strongly connected")
    return GeneratedTopology(topo, lab[0], spec, seed, labels)
