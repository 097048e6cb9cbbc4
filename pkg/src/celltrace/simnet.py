"""Deterministic slot-synchronous world simulator.

One tick is one reporting slot. Every slot each agent rotates its pseudonym
if due, moves, samples GPS, refreshes its negotiation lock, exchanges
beacons with radio neighbors, negotiates positions, and sends two sealed
location reports. The back-end then matches the closed slot, updates
contact bursts, handles any scheduled positive reports, and broadcasts
alerts.

Reproducibility contract: everything that ends up in the scenario log is
drawn from seeded generators with a fixed draw order, so identical configs
produce byte-identical logs. Key generation, envelope ephemerals, and
blind-signature randomness come from the OS pool instead and are therefore
kept out of the log.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels
from .client import ClientConfig, UserAgent
from .crypto import ENVELOPE_SCHEMES, generate_signing_keypair
from .geometry import LatticeConfig, Point, cell_of, centroid, euclid, to_polar, Lattice
from .issuers import CoverageError, HealthFacility, TelephoneProvider
from .pnp import Beacon, PeerSample, lock_peer, maybe_unlock, negotiate
from .server import BackendServer, ServerConfig

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class MobilitySpec:
    """How an agent moves: stationary, waypoint chasing, or a random walk."""

    kind: str = "stationary"
    speed: float = 1.4  # m/s, waypoint kind
    waypoints: tuple[tuple[float, float], ...] = ()
    step_sigma: float = 1.0  # m per slot per axis, random_walk kind

    def __post_init__(self):
        if self.kind not in ("stationary", "waypoint", "random_walk"):
            raise ValueError(f"unknown mobility kind {self.kind!r}")
        if self.kind == "waypoint" and not self.waypoints:
            raise ValueError("waypoint mobility needs at least one waypoint")


@dataclass(frozen=True)
class AgentSpec:
    label: str
    start: tuple[float, float]
    mobility: MobilitySpec = MobilitySpec()
    infected: bool = False
    consent: bool = True
    report_slot: Optional[int] = None  # infected agents submit at this slot
    leaky_beacons: bool = False  # broken client for detector self-tests


@dataclass(frozen=True)
class WorldConfig:
    seed: int = 1
    duration_slots: int = 10
    tau: float = 60.0
    region: tuple[float, float, float, float] = (0.0, 0.0, 1000.0, 1000.0)
    d: float = 10.0
    ble_range: float = 10.0
    sigma_gps: float = 5.0
    sigma_bl: float = 0.1
    d_risk: float = 2.0
    rotation_slots: int = 15
    retention_slots: int = 14 * 24 * 60
    risk_threshold: float = 0.5
    move_limit: float = 1.0  # lock drift allowance, meters
    lock_ttl: Optional[float] = None  # seconds; None means one slot
    area_pitch: Optional[float] = None  # None: one area spans the region
    salt_rotation_slots: int = 5
    salt_bits: int = 128
    envelope: str = "hybrid"
    rsa_bits: int = 1024
    obstacles: tuple[tuple[float, float, float, float], ...] = ()
    agents: tuple[AgentSpec, ...] = ()

    def resolved_area_pitch(self) -> float:
        if self.area_pitch is not None:
            return self.area_pitch
        xmin, ymin, xmax, ymax = self.region
        side = 2.0 * self.d
        extent = max(xmax - xmin, ymax - ymin)
        return math.ceil(extent / side) * side

    def resolved_lock_ttl(self) -> float:
        return self.tau if self.lock_ttl is None else self.lock_ttl

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "duration_slots": self.duration_slots,
            "tau": self.tau,
            "region": list(self.region),
            "d": self.d,
            "ble_range": self.ble_range,
            "sigma_gps": self.sigma_gps,
            "sigma_bl": self.sigma_bl,
            "d_risk": self.d_risk,
            "rotation_slots": self.rotation_slots,
            "retention_slots": self.retention_slots,
            "risk_threshold": self.risk_threshold,
            "move_limit": self.move_limit,
            "lock_ttl": self.resolved_lock_ttl(),
            "area_pitch": self.resolved_area_pitch(),
            "salt_rotation_slots": self.salt_rotation_slots,
            "salt_bits": self.salt_bits,
            "envelope": self.envelope,
            "rsa_bits": self.rsa_bits,
            "obstacles": [list(o) for o in self.obstacles],
            "agents": [
                {
                    "label": a.label,
                    "start": list(a.start),
                    "mobility": {
                        "kind": a.mobility.kind,
                        "speed": a.mobility.speed,
                        "waypoints": [list(w) for w in a.mobility.waypoints],
                        "step_sigma": a.mobility.step_sigma,
                    },
                    "infected": a.infected,
                    "consent": a.consent,
                    "report_slot": a.report_slot,
                    "leaky_beacons": a.leaky_beacons,
                }
                for a in self.agents
            ],
        }


class ScenarioLog:
    """Append-only event log; one JSON object per line when dumped."""

    def __init__(self, config_dict: dict):
        self.records: list[dict] = [
            {"schema_version": SCHEMA_VERSION, "kind": "scenario", "config": config_dict}
        ]

    def append(self, record: dict):
        self.records.append(record)

    def events(self, kind: Optional[str] = None) -> list[dict]:
        body = self.records[1:]
        if kind is None:
            return body
        return [r for r in body if r.get("e") == kind]

    def dumps(self) -> str:
        return "\n".join(
            json.dumps(r, sort_keys=True, separators=(",", ":")) for r in self.records
        ) + "\n"

    def dump(self, path):
        with open(path, "w") as fh:
            fh.write(self.dumps())

    @classmethod
    def load(cls, path) -> "ScenarioLog":
        with open(path) as fh:
            records = [json.loads(line) for line in fh if line.strip()]
        if not records or "schema_version" not in records[0]:
            raise ValueError("not a scenario log: missing header record")
        log = cls.__new__(cls)
        log.records = records
        return log

    @property
    def config(self) -> dict:
        return self.records[0]["config"]


class _SimAgent:
    """Simulator-side wrapper: ground truth plus the protocol agent."""

    def __init__(self, spec: AgentSpec, agent: UserAgent, rng):
        self.spec = spec
        self.agent = agent
        self.rng = rng
        self.position = Point(*spec.start)
        self.raw_gps = self.position
        self.waypoint_index = 0

    def move(self, region, tau: float):
        kind = self.spec.mobility.kind
        if kind == "stationary":
            return
        if kind == "waypoint":
            budget = self.spec.mobility.speed * tau
            pts = self.spec.mobility.waypoints
            while budget > 0 and self.waypoint_index < len(pts):
                target = Point(*pts[self.waypoint_index])
                gap = euclid(self.position, target)
                if gap <= budget:
                    self.position = target
                    self.waypoint_index += 1
                    budget -= gap
                else:
                    frac = budget / gap
                    self.position = Point(
                        self.position.x + (target.x - self.position.x) * frac,
                        self.position.y + (target.y - self.position.y) * frac,
                    )
                    budget = 0.0
            return
        # random_walk: Gaussian step, clamped into the region
        dx, dy = self.rng.normal(0.0, self.spec.mobility.step_sigma, 2)
        xmin, ymin, xmax, ymax = region
        self.position = Point(
            min(max(self.position.x + dx, xmin), xmax),
            min(max(self.position.y + dy, ymin), ymax),
        )

    def sample_gps(self, sigma: float):
        if sigma == 0.0:
            self.raw_gps = self.position
        else:
            nx, ny = self.rng.normal(0.0, sigma, 2)
            self.raw_gps = Point(self.position.x + nx, self.position.y + ny)

    def estimate(self) -> Point:
        return self.agent.position_estimate(self.raw_gps)


class World:
    """Builds all parties from a config and drives the tick loop."""

    def __init__(self, config: WorldConfig):
        if len({a.label for a in config.agents}) != len(config.agents):
            raise ValueError("agent labels must be unique")
        self.config = config
        self.lattice = LatticeConfig(config.d)
        self.provider = TelephoneProvider(
            config.region,
            config.resolved_area_pitch(),
            self.lattice,
            config.seed,
            config.salt_rotation_slots,
            config.salt_bits,
        )
        self.provider.validate_tiling()
        self.hf = HealthFacility(generate_signing_keypair(config.rsa_bits))
        self.envelope = ENVELOPE_SCHEMES[config.envelope]
        self.server_public, server_private = self.envelope.keypair()
        self.server = BackendServer(
            ServerConfig(
                tau=config.tau,
                cell_d=config.d,
                d_risk=config.d_risk,
                retention_slots=config.retention_slots,
            ),
            self.envelope,
            server_private,
            self.hf.public,
        )
        client_cfg = ClientConfig(
            lattice=self.lattice,
            rotation_slots=config.rotation_slots,
            retention_slots=config.retention_slots,
            risk_threshold=config.risk_threshold,
        )
        root = np.random.SeedSequence(config.seed)
        channel_ss, misc_ss, agents_ss = root.spawn(3)
        self.channel_rng = np.random.Generator(np.random.PCG64(channel_ss))
        self.misc_rng = np.random.Generator(np.random.PCG64(misc_ss))
        agent_seeds = agents_ss.spawn(len(config.agents))
        self.agents: list[_SimAgent] = []
        for spec, ss in zip(config.agents, agent_seeds):
            rng = np.random.Generator(np.random.PCG64(ss))
            self.agents.append(_SimAgent(spec, UserAgent(spec.label, client_cfg, rng), rng))
            if spec.infected:
                self.hf.register_positive(spec.label)
        self._by_label = {sim.spec.label: sim for sim in self.agents}
        self._obstacles = np.asarray(config.obstacles, dtype=np.float64).reshape(-1, 4)
        self.log = ScenarioLog(config.to_dict())
        self.slot = 0
        self.sniffed: list[tuple[int, bytes]] = []
        self.broadcast_pseudonyms: set[bytes] = set()
        self.bundles: list = []
        self.emitted_reports = 0
        self.guard_drops = 0
        self._beacon_injections: dict[int, list[tuple[str, bytes, float]]] = {}
        self.timings: dict[str, float] = {}

    # -- attack hooks -------------------------------------------------

    def inject_beacon(self, slot: int, target_label: str, payload: bytes, d_bl: float):
        """Queue a forged short-range frame for one agent at one slot."""
        if target_label not in self._by_label:
            raise KeyError(f"no agent {target_label!r}")
        self._beacon_injections.setdefault(slot, []).append((target_label, payload, d_bl))

    def agent_by_label(self, label: str) -> UserAgent:
        return self._by_label[label].agent

    def true_position(self, label: str) -> Point:
        return self._by_label[label].position

    # -- helpers ------------------------------------------------------

    def _salt_for_cell(self, cell, slot):
        try:
            return self.provider.salt_for_cell(cell, slot)
        except CoverageError:
            return None

    def _timed(self, phase: str, t0: float):
        self.timings[phase] = self.timings.get(phase, 0.0) + (time.perf_counter() - t0)

    def _live_beacon(self, sim: _SimAgent) -> Beacon:
        est = sim.estimate()
        anchor = cell_of(est, self.lattice, Lattice.A)
        pole = centroid(anchor, self.lattice).position
        return Beacon(sim.agent.pnp.locked, anchor, to_polar(est, pole))

    # -- tick loop ----------------------------------------------------

    def step(self):
        cfg = self.config
        k = self.slot
        now = k * cfg.tau

        t0 = time.perf_counter()
        for sim in self.agents:
            sim.agent.rotate_pseudonym(k)
            sim.move(cfg.region, cfg.tau)
            sim.sample_gps(cfg.sigma_gps)
            sim.agent.pnp = maybe_unlock(
                sim.agent.pnp, sim.raw_gps, now, cfg.move_limit, cfg.resolved_lock_ttl()
            )
        self._timed("agents", t0)

        t0 = time.perf_counter()
        n = len(self.agents)
        neighbors: list[list[tuple[int, float]]] = [[] for _ in range(n)]
        if n > 1:
            pos = np.array([[s.position.x, s.position.y] for s in self.agents])
            dist, linked = _kernels.link_matrix(pos, self._obstacles, cfg.ble_range)
            # one channel draw per linked pair, fixed (i, j) order, i < j
            ii, jj = np.nonzero(np.triu(linked, 1))
            for i, j in zip(ii.tolist(), jj.tolist()):
                true_d = float(dist[i, j])
                if cfg.sigma_bl == 0.0:
                    d_bl = max(true_d, 0.05)
                else:
                    eps = self.channel_rng.normal(0.0, cfg.sigma_bl)
                    d_bl = max(true_d * math.exp(eps), 0.05)
                neighbors[i].append((j, d_bl))
                neighbors[j].append((i, d_bl))
                self.log.append({"e": "dbl", "k": k, "i": i, "j": j, "d": d_bl})
        self._timed("channel", t0)

        # B1: what actually goes over the air this slot, sniffer-visible
        t0 = time.perf_counter()
        for sim in self.agents:
            frame = self._live_beacon(sim).to_bytes()
            if sim.spec.leaky_beacons:
                frame += sim.agent.current_pseudonym
            self.sniffed.append((k, frame))
            self.log.append({"e": "beacon", "k": k, "a": sim.spec.label, "bytes": frame.hex()})
        injections = self._beacon_injections.get(k, [])
        for target, payload, d_bl in injections:
            self.sniffed.append((k, payload))
            self.log.append(
                {"e": "inject", "k": k, "target": target, "bytes": payload.hex(), "d": d_bl}
            )

        # B2: sequential negotiation sweep over live state
        for idx, sim in enumerate(self.agents):
            if sim.agent.pnp.locked:
                continue
            samples: list[PeerSample] = []
            peer_idx: list[Optional[int]] = []
            for other_idx, d_bl in neighbors[idx]:
                other = self.agents[other_idx]
                frame = self._live_beacon(other).to_bytes()
                samples.append(PeerSample(Beacon.from_bytes(frame), d_bl))
                peer_idx.append(other_idx)
            for target, payload, d_bl in injections:
                if target == sim.spec.label:
                    samples.append(PeerSample(Beacon.from_bytes(payload), d_bl))
                    peer_idx.append(None)
            if not samples:
                continue
            result = negotiate(sim.raw_gps, now, samples, self.lattice, cfg.ble_range)
            self.guard_drops += result.guard_drops
            sim.agent.pnp = result.state
            if result.peer_position is not None and result.peer_index is not None:
                chosen = peer_idx[result.peer_index]
                if chosen is not None:
                    peer_sim = self.agents[chosen]
                    peer_sim.agent.pnp = lock_peer(
                        peer_sim.raw_gps, result.peer_position, now
                    )
        self._timed("pnp", t0)

        t0 = time.perf_counter()
        for sim in self.agents:
            est = sim.estimate()
            self.log.append(
                {
                    "e": "agent",
                    "k": k,
                    "a": sim.spec.label,
                    "pos": [sim.position.x, sim.position.y],
                    "gps": [sim.raw_gps.x, sim.raw_gps.y],
                    "est": [est.x, est.y],
                    "locked": sim.agent.pnp.locked,
                    "pseud": sim.agent.current_pseudonym.hex(),
                }
            )
            emitted = sim.agent.emit_reports(
                est, self._salt_for_cell, k, self.envelope, self.server_public
            )
            for cell, report, sealed in emitted:
                arrival = now + float(self.misc_rng.random()) * cfg.tau
                self.emitted_reports += 1
                self.server.ingest(sealed, arrival)
                self.log.append(
                    {
                        "e": "report",
                        "k": k,
                        "a": sim.spec.label,
                        "cell": [int(cell.lattice), cell.i, cell.j],
                        "tag": report.tag.hex(),
                        "pseud": report.pseudonym.hex(),
                        "rho": report.coord.rho,
                        "theta": report.coord.theta,
                        "arrival": arrival,
                    }
                )
        self._timed("reports", t0)

        t0 = time.perf_counter()
        for obs in self.server.close_slot(k):
            self.log.append(
                {
                    "e": "obs",
                    "k": k,
                    "p1": obs.first.hex(),
                    "p2": obs.second.hex(),
                    "d": obs.distance,
                }
            )
        self._timed("match", t0)

        t0 = time.perf_counter()
        for sim in self.agents:
            spec = sim.spec
            due = spec.report_slot if spec.report_slot is not None else cfg.duration_slots - 1
            if not (spec.infected and spec.consent and due == k):
                continue
            bundle = sim.agent.report_positive(self.hf, self.server, now)
            accepted = bundle is not None
            self.log.append(
                {
                    "e": "positive",
                    "k": k,
                    "a": spec.label,
                    "pseuds": [p.hex() for p in sim.agent.known_pseudonyms()],
                    "accepted": accepted,
                }
            )
            if not accepted:
                continue
            self.bundles.append(bundle)
            self.log.append(
                {
                    "e": "bundle",
                    "k": k,
                    "pairs": [[p.pseudonym.hex(), p.partial_risk] for p in bundle.pairs],
                }
            )
            for pair in bundle.pairs:
                self.broadcast_pseudonyms.add(pair.pseudonym)
            for other in self.agents:
                total, alerted = other.agent.process_alerts(bundle.pairs)
                self.log.append(
                    {
                        "e": "alert",
                        "k": k,
                        "a": other.spec.label,
                        "total": total,
                        "alerted": alerted,
                    }
                )
        self.server.purge(k)
        self._timed("broadcast", t0)

        self.slot += 1

    def run(self) -> "ScenarioLog":
        while self.slot < self.config.duration_slots:
            self.step()
        self.log.append(
            {
                "e": "end",
                "emitted": self.emitted_reports,
                "received": self.server.received,
                "dropped": self.server.dropped,
                "guard_drops": self.guard_drops,
                "bursts": len(self.server.bursts),
            }
        )
        return self.log


def true_contact_slots(log: ScenarioLog, label_a: str, label_b: str, threshold: float) -> list[int]:
    """Slots where two agents' ground-truth distance was below threshold."""
    by_slot: dict[int, dict[str, tuple[float, float]]] = {}
    for rec in log.events("agent"):
        by_slot.setdefault(rec["k"], {})[rec["a"]] = tuple(rec["pos"])
    out = []
    for k in sorted(by_slot):
        slot_pos = by_slot[k]
        if label_a in slot_pos and label_b in slot_pos:
            ax, ay = slot_pos[label_a]
            bx, by = slot_pos[label_b]
            if math.hypot(ax - bx, ay - by) < threshold:
                out.append(k)
    return out
