"""Experiment configs, sweeps and result export."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from ..ack import AckBroadcastNode, broadcast_stage_lengths, gossip_factory, gossip_stage_lengths
from ..bidir import BidirNode, bidir_factory, discovery_family, stage_b_length
from ..engine import (
    MaxRoundsExceeded,
    SimulationError,
    check_broadcast_complete,
    check_gossip_complete,
    run,
)
from ..model import ChannelMode, Topology
from .generators import BIDIRECTIONAL, InvalidSpec, gen_topology, max_extra, parse_spec

log = logging.getLogger(__name__)

PROTOCOLS = ("ack-broadcast", "ack-gossip-cd", "ack-gossip-nocd", "bidir-broadcast")
DEFAULT_CHANNEL = {
    "ack-broadcast": "nocd",
    "ack-gossip-cd": "cd",
    "ack-gossip-nocd": "nocd",
    "bidir-broadcast": "nocd",
}

# documented CSV column order
COLUMNS = (
    "protocol",
    "topology",
    "kind",
    "n",
    "seed",
    "labels",
    "source",
    "channel",
    "c",
    "min_phase",
    "strategy",
    "terminated",
    "termination_phase",
    "rounds",
    "transmissions",
    "collisions",
    "correct",
    "error",
)


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    protocol: str
    generator: str | None = None
    sizes: list[int] = field(default_factory=list)
    extra_edges: int = 0
    topology_file: str | None = None
    source: int | None = None
    labels: str = "identity"
    c: int = 2
    min_phase: int = 4
    family_strategy: str = "singleton"
    family_seed: int = 0
    scf_d: float = 4
    seeds: list[int] = field(default_factory=lambda: [0])
    channel: str | None = None
    max_rounds: int | None = None
    trace_dir: str | None = None

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            cfg = cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(data)

    @property
    def channel_mode(self) -> ChannelMode:
        return ChannelMode(self.channel or DEFAULT_CHANNEL[self.protocol])

    def validate(self) -> None:
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"unknown protocol {self.protocol!r}")
        try:
            mode = self.channel_mode
        except ValueError:
            raise ConfigError(f"unknown channel {self.channel!r}") from None
        if self.protocol == "ack-gossip-cd" and mode is not ChannelMode.CD:
            raise ConfigError("ack-gossip-cd needs the cd channel")
        if self.protocol == "ack-gossip-nocd" and mode is not ChannelMode.NO_CD:
            raise ConfigError("ack-gossip-nocd needs the nocd channel")
        if (self.generator is None) == (self.topology_file is None):
            raise ConfigError("give exactly one of generator / topology_file")
        if self.generator is not None:
            if not self.sizes:
                raise ConfigError("generator sweeps need sizes")
            try:
                parse_spec(f"{self.generator}(2)")
            except InvalidSpec as exc:
                raise ConfigError(str(exc)) from None
            if self.protocol == "bidir-broadcast" and self.generator not in BIDIRECTIONAL:
                raise ConfigError("bidir-broadcast needs a bidirectional generator")
        if self.c < 1 or self.min_phase < 1:
            raise ConfigError("c and min_phase must be >= 1")
        if not self.seeds:
            raise ConfigError("no seeds")


@dataclass
class Row:
    protocol: str
    topology: str
    kind: str
    n: int
    seed: int
    labels: str
    source: int | None
    channel: str
    c: int
    min_phase: int
    strategy: str
    terminated: bool
    termination_phase: int | None
    rounds: int | None
    transmissions: int | None
    collisions: int | None
    correct: bool
    error: str = ""


@dataclass
class SweepResult:
    config: dict
    rows: list[Row] = field(default_factory=list)

    @property
    def all_correct(self) -> bool:
        return all(r.correct for r in self.rows)

    def to_json(self) -> str:
        return json.dumps({"config": self.config, "rows": [asdict(r) for r in self.rows]}, sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "SweepResult":
        data = json.loads(text)
        return cls(data["config"], [Row(**r) for r in data["rows"]])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in self.rows:
            d = asdict(r)
            w.writerow(["" if d[k] is None else d[k] for k in COLUMNS])
        return buf.getvalue()


def export(result: SweepResult, fmt: str, path: str | Path) -> None:
    if fmt == "json":
        Path(path).write_text(result.to_json())
    elif fmt == "csv":
        Path(path).write_text(result.to_csv())
    else:
        raise ConfigError(f"unknown export format {fmt!r}")


def phase_length(cfg: ExperimentConfig, i: int) -> int:
    if cfg.protocol == "ack-broadcast":
        return sum(broadcast_stage_lengths(i, cfg.c))
    if cfg.protocol == "bidir-broadcast":
        fam = discovery_family(i, cfg.c, cfg.family_strategy, cfg.family_seed)
        return 1 + 2 * len(fam) + stage_b_length(i, cfg.c)
    variant = "cd" if cfg.protocol == "ack-gossip-cd" else "nocd"
    return sum(gossip_stage_lengths(variant, i, cfg.c, cfg.family_strategy, cfg.family_seed, cfg.scf_d))


def round_budget(cfg: ExperimentConfig, topo: Topology, factor: int = 4) -> int:
    """``factor`` times the rounds through the phase after the first one whose guesses cover the network."""
    need = max(math.ceil(math.log2(topo.n)), math.ceil(math.log2(topo.max_label) / cfg.c), cfg.min_phase)
    return factor * sum(phase_length(cfg, i) for i in range(cfg.min_phase, need + 2))


def make_factory(cfg: ExperimentConfig, source: int):
    if cfg.protocol == "ack-broadcast":
        return lambda u: AckBroadcastNode(u, source, cfg.c, cfg.min_phase)
    if cfg.protocol == "bidir-broadcast":
        return bidir_factory(source, cfg.c, cfg.min_phase, cfg.family_strategy, cfg.family_seed)
    variant = "cd" if cfg.protocol == "ack-gossip-cd" else "nocd"
    return gossip_factory(cfg.channel_mode, variant, cfg.c, cfg.min_phase, cfg.family_strategy, cfg.family_seed, cfg.scf_d)


def run_one(cfg: ExperimentConfig, topo: Topology, source: int, spec: str, seed: int):
    """One run; returns (row, outcome, trace) with outcome/trace None on error."""
    base = dict(
        protocol=cfg.protocol,
        topology=spec,
        kind=topo.kind,
        n=topo.n,
        seed=seed,
        labels=cfg.labels,
        source=source,
        channel=cfg.channel_mode.value,
        c=cfg.c,
        min_phase=cfg.min_phase,
        strategy=cfg.family_strategy,
    )
    if cfg.protocol == "bidir-broadcast" and topo.kind != "bidirectional":
        return Row(**base, terminated=False, termination_phase=None, rounds=None, transmissions=None, collisions=None, correct=False, error="needs a bidirectional topology"), None, None
    budget = cfg.max_rounds or round_budget(cfg, topo)
    try:
        outcome, trace = run(topo, cfg.channel_mode, make_factory(cfg, source), budget, record=cfg.trace_dir is not None)
    except (MaxRoundsExceeded, SimulationError) as exc:
        return Row(**base, terminated=False, termination_phase=None, rounds=None, transmissions=None, collisions=None, correct=False, error=f"{type(exc).__name__}: {exc}"), None, None
    if cfg.protocol in ("ack-broadcast", "bidir-broadcast"):
        correct = check_broadcast_complete(outcome, source, "rumor")
    else:
        correct = check_gossip_complete(outcome)
    m = outcome.metrics
    row = Row(
        **base,
        terminated=outcome.terminated,
        termination_phase=outcome.termination_phase,
        rounds=m.rounds,
        transmissions=m.transmissions,
        collisions=m.collisions,
        correct=correct,
    )
    return row, outcome, trace


def iter_inputs(cfg: ExperimentConfig):
    if cfg.topology_file is not None:
        topo = Topology.load(cfg.topology_file)
        source = cfg.source if cfg.source is not None else min(topo.nodes)
        if source not in topo.nodes:
            raise ConfigError(f"source {source} is not in the topology")
        for seed in cfg.seeds:
            yield topo, source, Path(cfg.topology_file).name, seed
        return
    for n in cfg.sizes:
        # sweeps cap the request at what small sizes can hold
        extra = min(cfg.extra_edges, max_extra(cfg.generator, n))
        spec = f"{cfg.generator}({n},{extra})" if extra else f"{cfg.generator}({n})"
        for seed in cfg.seeds:
            try:
                g = gen_topology(spec, seed, cfg.labels, cfg.c, cfg.min_phase)
            except InvalidSpec as exc:
                raise ConfigError(str(exc)) from None
            yield g.topology, (cfg.source if cfg.source is not None else g.source), spec, seed


def run_experiment(cfg: ExperimentConfig) -> SweepResult:
    cfg.validate()
    result = SweepResult(asdict(cfg))
    for topo, source, spec, seed in iter_inputs(cfg):
        row, outcome, trace = run_one(cfg, topo, source, spec, seed)
        if not row.correct:
            log.warning("incorrect row: %s n=%d seed=%d %s", spec, topo.n, seed, row.error)
        if trace is not None and cfg.trace_dir:
            Path(cfg.trace_dir).mkdir(parents=True, exist_ok=True)
            trace.to_jsonl(Path(cfg.trace_dir) / f"{cfg.protocol}-{spec}-s{seed}.jsonl".replace("(", "_").replace(")", "").replace(",", "_"))
        result.rows.append(row)
    result.rows.sort(key=lambda r: (r.n, r.seed, r.topology))
    return result
