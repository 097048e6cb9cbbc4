"""Scenario file parsing."""

import pytest

from celltrace.config import ConfigError, load_config, parse_config
from celltrace.simnet import World

GOOD = """
[world]
seed = 9
duration_slots = 5
region = 0, 0, 100, 100
sigma_gps = 2.5
envelope = transparent
rsa_bits = 512
obstacles =
    10, 0, 10, 50
    0, 80, 100, 80

[agent walker]
start = 5, 5
mobility = waypoint
waypoints = 5, 50; 50, 50
speed = 2.0
infected = true
report_slot = 3

[agent still]
start = 20, 20
leaky_beacons = true

[swarm crowd]
count = 4
box = 0, 0, 100, 100
mobility = random_walk
step_sigma = 1.5
"""


def test_parse_full_example():
    cfg = parse_config(GOOD)
    assert cfg.seed == 9
    assert cfg.duration_slots == 5
    assert cfg.region == (0.0, 0.0, 100.0, 100.0)
    assert cfg.sigma_gps == 2.5
    assert cfg.envelope == "transparent"
    assert cfg.obstacles == ((10.0, 0.0, 10.0, 50.0), (0.0, 80.0, 100.0, 80.0))
    assert len(cfg.agents) == 6

    walker = cfg.agents[0]
    assert walker.label == "walker"
    assert walker.start == (5.0, 5.0)
    assert walker.mobility.kind == "waypoint"
    assert walker.mobility.waypoints == ((5.0, 50.0), (50.0, 50.0))
    assert walker.mobility.speed == 2.0
    assert walker.infected and walker.report_slot == 3

    still = cfg.agents[1]
    assert still.leaky_beacons and not still.infected and still.report_slot is None

    crowd = cfg.agents[2:]
    assert [a.label for a in crowd] == [f"crowd_{i:02d}" for i in range(4)]
    assert all(a.mobility.kind == "random_walk" for a in crowd)
    assert all(0.0 <= a.start[0] <= 100.0 and 0.0 <= a.start[1] <= 100.0 for a in crowd)


def test_defaults():
    cfg = parse_config("[world]\n[agent a]\nstart = 1, 2\n")
    assert cfg.seed == 1
    assert cfg.duration_slots == 10
    assert cfg.tau == 60.0
    assert cfg.d == 10.0
    assert cfg.ble_range == 10.0
    assert cfg.sigma_gps == 5.0
    assert cfg.sigma_bl == 0.1
    assert cfg.d_risk == 2.0
    assert cfg.rotation_slots == 15
    assert cfg.risk_threshold == 0.5
    assert cfg.envelope == "hybrid"
    assert cfg.salt_rotation_slots == 5
    assert cfg.salt_bits == 128
    assert cfg.area_pitch is None and cfg.lock_ttl is None
    assert cfg.agents[0].mobility.kind == "stationary"
    assert cfg.agents[0].consent is True


def test_swarm_placement_is_deterministic_per_seed():
    text = "[world]\nseed = {s}\n[swarm s]\ncount = 3\nbox = 0, 0, 10, 10\n"
    once = parse_config(text.format(s=5))
    again = parse_config(text.format(s=5))
    moved = parse_config(text.format(s=6))
    assert [a.start for a in once.agents] == [a.start for a in again.agents]
    assert [a.start for a in once.agents] != [a.start for a in moved.agents]


def test_parsed_config_drives_a_world():
    log = World(parse_config(GOOD)).run()
    assert len(log.events("positive")) == 1


def test_load_config_reads_files(tmp_path):
    path = tmp_path / "scenario.ini"
    path.write_text(GOOD)
    assert load_config(path).seed == 9
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.ini")


@pytest.mark.parametrize(
    "text",
    [
        "[agent a]\nstart = 1, 2\n",  # no [world]
        "[world]\n",  # no agents
        "[world]\n[agent a]\nstart = 1, 2\n[agent a]\nstart = 3, 4\n",  # configparser dup
        "[world]\n[agent a]\nstart = 1, 2\n[agent  a]\nstart = 3, 4\n",  # label collision
        "[world]\n[agent a]\nmobility = stationary\n",  # missing start
        "[world]\n[agent a]\nstart = 1\n",  # wrong arity
        "[world]\n[agent a]\nstart = one, two\n",  # not numbers
        "[world]\n[agent a]\nstart = 1, 2\nmobility = levitate\n",  # unknown kind
        "[world]\nenvelope = rot13\n[agent a]\nstart = 1, 2\n",  # unknown envelope
        "[world]\n[sidecar x]\nfoo = 1\n",  # unknown section
        "[world]\n[swarm s]\nbox = 0, 0, 1, 1\n",  # swarm without count
        "[world]\n[swarm s]\ncount = 3\n",  # swarm without box
        "[world]\nduration_slots = soon\n[agent a]\nstart = 1, 2\n",  # bad int
        "not ini at all [",  # syntax error
    ],
)
def test_bad_configs_raise_config_error(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_bundled_configs_parse():
    import pathlib

    config_dir = pathlib.Path(__file__).resolve().parents[1] / "configs"
    ini_files = sorted(config_dir.glob("*.ini"))
    assert len(ini_files) >= 4
    for path in ini_files:
        cfg = load_config(path)
        assert cfg.agents
