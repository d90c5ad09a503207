import json

import pytest

from ackradio.harness.cli import main, parse_sizes
from ackradio.harness.experiment import COLUMNS, ConfigError, ExperimentConfig, SweepResult, export, run_experiment
from ackradio.harness.generators import InvalidSpec, gen_topology, parse_spec
from ackradio.model import Topology


def test_directed_cycle_identity():
    g = gen_topology("directed_cycle(3)", 0, "identity")
    assert g.topology.edges() == [(1, 2), (2, 3), (3, 1)]


def test_random_sc_digraph_arc_count():
    g = gen_topology("random_sc_digraph(8,5)", 9)
    assert g.topology.is_strongly_connected()
    assert len(g.topology.edges()) == 13


def test_bidir_tree_random_labels():
    g = gen_topology("bidir_tree(6)", 2, "random", c=2)
    t = g.topology
    assert t.is_connected() and t.kind == "bidirectional"
    assert t.n == 6 and t.max_label <= 36
    assert len(t.edges()) == 2 * 5


@pytest.mark.parametrize("spec", ["hub_digraph(7)", "clique(5)", "bidir_path(9)", "bidir_random_connected(9,4)"])
def test_generators_connected(spec):
    for seed in range(5):
        t = gen_topology(spec, seed, "random").topology
        assert t.is_strongly_connected()


def test_generation_is_deterministic():
    a = gen_topology("random_sc_digraph(10,7)", 4, "random")
    b = gen_topology("random_sc_digraph(10,7)", 4, "random")
    assert a.topology == b.topology and a.source == b.source


@pytest.mark.parametrize("spec", ["nosuch(3)", "directed_cycle", "random_sc_digraph(3,9)", "directed_cycle(x)"])
def test_invalid_specs(spec):
    with pytest.raises(InvalidSpec):
        gen_topology(spec, 0)


def test_parse_spec():
    assert parse_spec("random_sc_digraph(8, 5)") == ("random_sc_digraph", [8, 5])


def test_parse_sizes():
    assert parse_sizes("2..5") == [2, 3, 4, 5]
    assert parse_sizes("4,8,16") == [4, 8, 16]


def test_sweep_directed_cycles():
    res = run_experiment(ExperimentConfig(protocol="ack-broadcast", generator="directed_cycle", sizes=list(range(2, 11))))
    assert len(res.rows) == 9
    assert all(r.correct and r.termination_phase == 4 for r in res.rows)


def test_sweep_bidir_paths_monotone():
    res = run_experiment(ExperimentConfig(protocol="bidir-broadcast", generator="bidir_path", sizes=[4, 8, 16, 32, 64]))
    assert res.all_correct
    rounds = [r.rounds for r in res.rows]
    assert rounds == sorted(rounds)


@pytest.mark.parametrize(
    "cfg",
    [
        {"protocol": "ack-gossip-cd", "generator": "directed_cycle", "sizes": [3], "channel": "nocd"},
        {"protocol": "ack-gossip-nocd", "generator": "directed_cycle", "sizes": [3], "channel": "cd"},
        {"protocol": "bidir-broadcast", "generator": "directed_cycle", "sizes": [3]},
        {"protocol": "nope", "generator": "directed_cycle", "sizes": [3]},
        {"protocol": "ack-broadcast", "sizes": [3]},
        {"protocol": "ack-broadcast", "generator": "directed_cycle", "sizes": []},
        {"protocol": "ack-broadcast", "generator": "directed_cycle", "sizes": [3], "bogus": 1},
    ],
)
def test_config_errors(cfg):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(cfg)


def test_export_roundtrip_and_header(tmp_path):
    res = run_experiment(ExperimentConfig(protocol="ack-gossip-cd", generator="random_sc_digraph", sizes=[3, 4], seeds=[0, 1]))
    export(res, "json", tmp_path / "r.json")
    back = SweepResult.from_json((tmp_path / "r.json").read_text())
    assert back == res
    export(res, "csv", tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0].split(",") == list(COLUMNS)
    assert len(lines) == 5


def test_empty_sweep_csv_is_header_only():
    assert SweepResult({}, []).to_csv() == ",".join(COLUMNS) + "\n"


def test_topology_file_config(tmp_path):
    t = Topology.from_edges([1, 2, 3], [(1, 2), (2, 3), (3, 1)])
    t.save(tmp_path / "t.json")
    cfg = ExperimentConfig.from_dict({"protocol": "ack-broadcast", "topology_file": str(tmp_path / "t.json"), "source": 2})
    res = run_experiment(cfg)
    assert res.all_correct and res.rows[0].source == 2


def test_budget_exhaustion_is_a_flagged_row():
    cfg = ExperimentConfig(protocol="ack-broadcast", generator="directed_cycle", sizes=[3], max_rounds=10)
    row = run_experiment(cfg).rows[0]
    assert not row.correct and "MaxRoundsExceeded" in row.error


def test_cli_exit_codes(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"protocol": "ack-broadcast", "generator": "directed_cycle", "sizes": [2, 3]}))
    out = tmp_path / "out.json"
    assert main(["run", "--config", str(cfg), "--json", str(out)]) == 0
    assert main(["export", "--input", str(out), "--format", "csv", "--out", str(tmp_path / "o.csv")]) == 0
    assert (tmp_path / "o.csv").read_text().startswith("protocol,")
    assert main(["sweep", "--protocol", "ack-gossip-cd", "--channel", "nocd"]) == 2
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"protocol": "ack-broadcast", "generator": "directed_cycle", "sizes": [3], "max_rounds": 5}))
    assert main(["run", "--config", str(bad)]) == 1


def test_cli_gen_topology_and_family(tmp_path):
    out = tmp_path / "t.json"
    assert main(["gen-topology", "--spec", "bidir_tree(5)", "--seed", "1", "--out", str(out)]) == 0
    assert Topology.load(out).is_connected()
    assert main(["gen-topology", "--spec", "bogus(3)"]) == 2
    assert main(["family", "--kind", "scf", "--l", "2", "--verify", "--cache-dir", str(tmp_path / "fc")]) == 0
    assert main(["family", "--kind", "selective", "--cache-dir", str(tmp_path / "fc")]) == 2
