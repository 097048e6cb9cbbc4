"""Scenario configuration files.

INI format via configparser. One [world] section for global parameters,
one [agent NAME] section per hand-placed agent, and optional [swarm NAME]
sections that stamp out many agents with a shared mobility spec inside a
placement box. Number lists are comma-separated; obstacle and waypoint
lists take one entry per line or semicolon-separated pairs.

Example:

    [world]
    seed = 7
    duration_slots = 20
    region = 0, 0, 200, 200
    obstacles =
        50, 0, 50, 40

    [agent victim]
    start = 10, 10
    mobility = stationary
    infected = false

    [swarm crowd]
    count = 30
    box = 0, 0, 200, 200
    mobility = random_walk
    step_sigma = 2.0

Swarm members are placed uniformly in the box by a generator seeded from
the world seed and the swarm name, so placement is part of the scenario's
deterministic identity.
"""

from __future__ import annotations

import configparser
import hashlib

import numpy as np

from .crypto import ENVELOPE_SCHEMES
from .simnet import AgentSpec, MobilitySpec, WorldConfig


class ConfigError(Exception):
    pass


def _floats(raw: str, n: int, what: str) -> tuple[float, ...]:
    parts = [p for p in raw.replace(";", ",").split(",") if p.strip()]
    if len(parts) != n:
        raise ConfigError(f"{what}: expected {n} numbers, got {len(parts)} in {raw!r}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError as exc:
        raise ConfigError(f"{what}: {exc}") from exc


def _point_list(raw: str, what: str) -> tuple[tuple[float, float], ...]:
    out = []
    for chunk in raw.replace("\n", ";").split(";"):
        if not chunk.strip():
            continue
        out.append(_floats(chunk, 2, what))
    return tuple(out)


def _segment_list(raw: str, what: str) -> tuple[tuple[float, float, float, float], ...]:
    out = []
    for chunk in raw.replace("\n", ";").split(";"):
        if not chunk.strip():
            continue
        out.append(_floats(chunk, 4, what))
    return tuple(out)


def _mobility(section, where: str) -> MobilitySpec:
    kind = section.get("mobility", "stationary").strip()
    try:
        return MobilitySpec(
            kind=kind,
            speed=section.getfloat("speed", 1.4),
            waypoints=_point_list(section.get("waypoints", ""), f"{where} waypoints"),
            step_sigma=section.getfloat("step_sigma", 1.0),
        )
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _agent(name: str, section) -> AgentSpec:
    if "start" not in section:
        raise ConfigError(f"agent {name!r}: missing start")
    report_slot = section.get("report_slot", "").strip()
    return AgentSpec(
        label=name,
        start=_floats(section["start"], 2, f"agent {name!r} start"),
        mobility=_mobility(section, f"agent {name!r}"),
        infected=section.getboolean("infected", False),
        consent=section.getboolean("consent", True),
        report_slot=int(report_slot) if report_slot else None,
        leaky_beacons=section.getboolean("leaky_beacons", False),
    )


def _swarm(name: str, section, seed: int) -> list[AgentSpec]:
    count = section.getint("count", 0)
    if count < 1:
        raise ConfigError(f"swarm {name!r}: count must be positive")
    if "box" not in section:
        raise ConfigError(f"swarm {name!r}: missing box")
    xmin, ymin, xmax, ymax = _floats(section["box"], 4, f"swarm {name!r} box")
    mobility = _mobility(section, f"swarm {name!r}")
    digest = hashlib.sha256(f"swarm placement:{seed}:{name}".encode()).digest()
    rng = np.random.Generator(np.random.PCG64(int.from_bytes(digest[:8], "big")))
    width = max(len(str(count - 1)), 2)
    out = []
    for idx in range(count):
        x = xmin + float(rng.random()) * (xmax - xmin)
        y = ymin + float(rng.random()) * (ymax - ymin)
        out.append(
            AgentSpec(
                label=f"{name}_{idx:0{width}d}",
                start=(x, y),
                mobility=mobility,
                infected=section.getboolean("infected", False),
                consent=section.getboolean("consent", True),
            )
        )
    return out


def parse_config(text: str) -> WorldConfig:
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"bad config syntax: {exc}") from exc
    if "world" not in parser:
        raise ConfigError("missing [world] section")
    w = parser["world"]
    try:
        seed = w.getint("seed", 1)
        envelope = w.get("envelope", "hybrid").strip()
        if envelope not in ENVELOPE_SCHEMES:
            raise ConfigError(
                f"unknown envelope {envelope!r}; known: {', '.join(sorted(ENVELOPE_SCHEMES))}"
            )
        area_pitch = w.get("area_pitch", "").strip()
        lock_ttl = w.get("lock_ttl", "").strip()
        agents: list[AgentSpec] = []
        for section_name in parser.sections():
            if section_name.startswith("agent "):
                agents.append(_agent(section_name[len("agent "):].strip(), parser[section_name]))
            elif section_name.startswith("swarm "):
                agents.extend(
                    _swarm(section_name[len("swarm "):].strip(), parser[section_name], seed)
                )
            elif section_name != "world":
                raise ConfigError(f"unknown section [{section_name}]")
        config = WorldConfig(
            seed=seed,
            duration_slots=w.getint("duration_slots", 10),
            tau=w.getfloat("tau", 60.0),
            region=_floats(w.get("region", "0, 0, 1000, 1000"), 4, "region"),
            d=w.getfloat("d", 10.0),
            ble_range=w.getfloat("ble_range", 10.0),
            sigma_gps=w.getfloat("sigma_gps", 5.0),
            sigma_bl=w.getfloat("sigma_bl", 0.1),
            d_risk=w.getfloat("d_risk", 2.0),
            rotation_slots=w.getint("rotation_slots", 15),
            retention_slots=w.getint("retention_slots", 14 * 24 * 60),
            risk_threshold=w.getfloat("risk_threshold", 0.5),
            move_limit=w.getfloat("move_limit", 1.0),
            lock_ttl=float(lock_ttl) if lock_ttl else None,
            area_pitch=float(area_pitch) if area_pitch else None,
            salt_rotation_slots=w.getint("salt_rotation_slots", 5),
            salt_bits=w.getint("salt_bits", 128),
            envelope=envelope,
            rsa_bits=w.getint("rsa_bits", 1024),
            obstacles=_segment_list(w.get("obstacles", ""), "obstacles"),
            agents=tuple(agents),
        )
    except ValueError as exc:
        raise ConfigError(f"[world]: {exc}") from exc
    if not config.agents:
        raise ConfigError("scenario has no agents")
    labels = [a.label for a in config.agents]
    if len(set(labels)) != len(labels):
        raise ConfigError("duplicate agent labels")
    return config


def load_config(path) -> WorldConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)
