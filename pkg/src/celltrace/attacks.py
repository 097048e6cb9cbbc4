"""Adversary scenarios against the deployed protocol.

Eight named attacks, each run as a concrete experiment over simulated
worlds or captured state, each with a decision rule that derives the
outcome from measurements, and each with a positive control: a broken
variant its detector must flag, so a "resists" verdict is never vacuous.

The attacks:
  Paparazzi   passive sniffers try to link broadcast alert pseudonyms to
              short-range traffic.
  Orwell      the back-end colludes with the salt provider for some areas
              and dictionary-attacks the cell tags.
  Brutus      signer and back-end collude to link a positive-report
              credential to the identity that requested the signature.
  Gossip      an eavesdropping participant archives received frames and
              tries to prove an encounter with an infected user.
  Matteotti   a malicious back-end fabricates an alert for a victim.
  Missile     a distant infected attacker amplifies forged beacons at a
              victim, then reports positive.
  Fregoli     an adversary replays captured beacons as its own.
  Battleship  the back-end brute-forces cell tags by enumerating cells,
              with and without knowledge of the area salt.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .client import AlertPair
from .crypto import blind, cell_tag, gen_report_message, generate_signing_keypair, unblind
from .geometry import CellId, Lattice, Point, cell_id_to_bytes, cell_of, centroid, to_polar
from .issuers import HealthFacility, QId
from .pnp import Beacon
from .simnet import AgentSpec, ScenarioLog, World, WorldConfig

ATTACK_ORDER = (
    "Paparazzi",
    "Orwell",
    "Brutus",
    "Gossip",
    "Matteotti",
    "Missile",
    "Fregoli",
    "Battleship",
)

# the protocol's claimed resistance profile: everything but Matteotti
EXPECTED_OUTCOMES = {name: "resists" for name in ATTACK_ORDER}
EXPECTED_OUTCOMES["Matteotti"] = "vulnerable"


@dataclass
class AttackReport:
    attack: str
    outcome: str  # "resists" | "vulnerable"
    control_ok: bool
    evidence: dict = field(default_factory=dict)

    @property
    def expected(self) -> str:
        return EXPECTED_OUTCOMES[self.attack]

    @property
    def matches_expected(self) -> bool:
        return self.outcome == self.expected

    def to_dict(self) -> dict:
        return {
            "attack": self.attack,
            "outcome": self.outcome,
            "expected": self.expected,
            "control_ok": self.control_ok,
            "evidence": self.evidence,
        }


def _crypto_overrides(fast: bool) -> dict:
    if fast:
        return {"envelope": "transparent", "rsa_bits": 512}
    return {}


def _pseudonyms_by_label(log: ScenarioLog) -> dict[str, set[str]]:
    out: dict[str, set[str]] = {}
    for rec in log.events("agent"):
        out.setdefault(rec["a"], set()).add(rec["pseud"])
    return out


# -- Paparazzi / Gossip ----------------------------------------------------


def _contact_world(seed: int, fast: bool, leaky_contact: bool = False, extra: Sequence[AgentSpec] = ()) -> World:
    """Infected agent in sustained 0.8 m contact, bystander far away."""
    agents = [
        AgentSpec("infected", (5.0, 5.0), infected=True, report_slot=4),
        AgentSpec("contact", (5.8, 5.0), leaky_beacons=leaky_contact),
        AgentSpec("far", (100.0, 100.0)),
    ]
    agents.extend(extra)
    config = WorldConfig(
        seed=seed,
        duration_slots=6,
        region=(0.0, 0.0, 200.0, 200.0),
        sigma_gps=3.0,
        agents=tuple(agents),
        **_crypto_overrides(fast),
    )
    world = World(config)
    world.run()
    return world


def _leaked_pseudonyms(frames: Iterable[bytes], broadcast: Iterable[bytes]) -> list[str]:
    frames = list(frames)
    return sorted(p.hex() for p in broadcast if any(p in f for f in frames))


def run_paparazzi(seed: int = 1101, fast: bool = False) -> AttackReport:
    """Sniff every frame everywhere; try to match alert pseudonyms."""
    world = _contact_world(seed, fast)
    frames = [f for _, f in world.sniffed]
    leaked = _leaked_pseudonyms(frames, world.broadcast_pseudonyms)

    control = _contact_world(seed + 1, fast, leaky_contact=True)
    control_frames = [f for _, f in control.sniffed]
    control_leaked = _leaked_pseudonyms(control_frames, control.broadcast_pseudonyms)

    return AttackReport(
        attack="Paparazzi",
        outcome="resists" if not leaked else "vulnerable",
        control_ok=bool(control_leaked),
        evidence={
            "sniffed_frames": len(frames),
            "broadcast_pseudonyms": len(world.broadcast_pseudonyms),
            "leaked": leaked,
            "control_leaked_count": len(control_leaked),
        },
    )


def _received_frames(world: World, adversary: str) -> list[bytes]:
    """Frames the adversary's radio actually heard, per the link log."""
    labels = [a.label for a in world.config.agents]
    adv_idx = labels.index(adversary)
    heard_from: dict[int, set[int]] = {}
    for rec in world.log.events("dbl"):
        if rec["i"] == adv_idx:
            heard_from.setdefault(rec["k"], set()).add(rec["j"])
        elif rec["j"] == adv_idx:
            heard_from.setdefault(rec["k"], set()).add(rec["i"])
    frames = []
    for rec in world.log.events("beacon"):
        if rec["a"] == adversary:
            continue
        sender_idx = labels.index(rec["a"])
        if sender_idx in heard_from.get(rec["k"], ()):
            frames.append(bytes.fromhex(rec["bytes"]))
    return frames


def run_gossip(seed: int = 1201, fast: bool = False) -> AttackReport:
    """A participating eavesdropper archives everything it receives."""
    adv = AgentSpec("gossip_adv", (5.0, 6.0))
    world = _contact_world(seed, fast, extra=[adv])
    archive = _received_frames(world, "gossip_adv")
    leaked = _leaked_pseudonyms(archive, world.broadcast_pseudonyms)

    control = _contact_world(seed + 1, fast, leaky_contact=True, extra=[adv])
    control_archive = _received_frames(control, "gossip_adv")
    control_leaked = _leaked_pseudonyms(control_archive, control.broadcast_pseudonyms)

    return AttackReport(
        attack="Gossip",
        outcome="resists" if not leaked else "vulnerable",
        control_ok=bool(control_leaked),
        evidence={
            "archived_frames": len(archive),
            "leaked": leaked,
            "control_leaked_count": len(control_leaked),
        },
    )


# -- Orwell ----------------------------------------------------------------


def _coverage_cells(provider) -> list[CellId]:
    """Every cell of both lattices whose centroid lies in provider coverage."""
    xmin, ymin, xmax, ymax = provider.coverage
    side = 2.0 * provider.lattice.d
    cells = []
    for lattice in (Lattice.A, Lattice.B):
        shift = 0.0 if lattice is Lattice.A else provider.lattice.d
        i_lo = math.floor((xmin - shift) / side) - 1
        i_hi = math.floor((xmax - shift) / side) + 1
        j_lo = math.floor((ymin - shift) / side) - 1
        j_hi = math.floor((ymax - shift) / side) + 1
        for i in range(i_lo, i_hi + 1):
            for j in range(j_lo, j_hi + 1):
                cell = CellId(lattice, i, j)
                cx, cy = centroid(cell, provider.lattice).position
                if xmin <= cx < xmax and ymin <= cy < ymax:
                    cells.append(cell)
    return cells


def _orwell_world(seed: int, fast: bool) -> World:
    # nine 200 m areas in a 600 m region, one stationary agent per area
    agents = []
    for qi, x in enumerate((100.0, 300.0, 500.0)):
        for qj, y in enumerate((100.0, 300.0, 500.0)):
            agents.append(AgentSpec(f"resident_{qi}{qj}", (x, y)))
    config = WorldConfig(
        seed=seed,
        duration_slots=6,
        region=(0.0, 0.0, 600.0, 600.0),
        area_pitch=200.0,
        agents=tuple(agents),
        **_crypto_overrides(fast),
    )
    world = World(config)
    world.run()
    return world


def _orwell_recovery(world: World, colluded: set[QId]) -> dict:
    """Dictionary attack per report, scored by the report cell's own area."""
    provider = world.provider
    cells = _coverage_cells(provider)
    colluded_cells = [
        c for c in cells if provider.area_of(centroid(c, provider.lattice).position) in colluded
    ]
    reports = world.log.events("report")
    epochs = {provider.salt_epoch(rec["k"]) for rec in reports}
    dictionary: dict[tuple[int, str], list] = {}
    for epoch in epochs:
        slot = epoch * provider.salt_rotation_slots
        for cell in colluded_cells:
            tag = cell_tag(cell, provider.salt_for_cell(cell, slot))
            dictionary[(epoch, tag.hex())] = [int(cell.lattice), cell.i, cell.j]
    counts = {"inside": 0, "outside": 0, "inside_recovered": 0, "outside_recovered": 0}
    for rec in reports:
        cell = CellId(Lattice(rec["cell"][0]), rec["cell"][1], rec["cell"][2])
        area = provider.area_of(centroid(cell, provider.lattice).position)
        inside = area in colluded
        recovered = dictionary.get((provider.salt_epoch(rec["k"]), rec["tag"]))
        correct = recovered == rec["cell"]
        if inside:
            counts["inside"] += 1
            counts["inside_recovered"] += int(correct)
        else:
            counts["outside"] += 1
            counts["outside_recovered"] += int(correct)
    counts["inside_rate"] = (
        counts["inside_recovered"] / counts["inside"] if counts["inside"] else 0.0
    )
    counts["outside_rate"] = (
        counts["outside_recovered"] / counts["outside"] if counts["outside"] else 0.0
    )
    return counts


def run_orwell(seed: int = 1301, fast: bool = False, colluded_areas: Optional[set] = None) -> AttackReport:
    """Collude with the salt provider for one area; attack all tags."""
    world = _orwell_world(seed, fast)
    colluded = colluded_areas if colluded_areas is not None else {QId(1, 1)}
    scores = _orwell_recovery(world, colluded)

    none_scores = _orwell_recovery(world, set())
    all_areas = {
        world.provider.area_of(Point(x, y))
        for x in (100.0, 300.0, 500.0)
        for y in (100.0, 300.0, 500.0)
    }
    all_scores = _orwell_recovery(world, all_areas)

    local_compromise = scores["inside_rate"] == 1.0 and scores["outside_rate"] == 0.0
    control_ok = (
        none_scores["inside"] == 0
        and none_scores["outside_recovered"] == 0
        and all_scores["inside_rate"] == 1.0
        and all_scores["outside"] == 0
    )
    return AttackReport(
        attack="Orwell",
        outcome="resists" if local_compromise else "vulnerable",
        control_ok=control_ok,
        evidence={
            "colluded": sorted((q[0], q[1]) for q in colluded),
            **scores,
            "no_collusion_recovered": none_scores["outside_recovered"],
            "full_collusion_rate": all_scores["inside_rate"],
        },
    )


# -- Brutus ----------------------------------------------------------------


def _brutus_game(keypair, trials: int, rng, forced_r: Optional[int] = None) -> float:
    """Distinguishing game between two signature requesters.

    Each trial both requesters obtain a blind signature; the adversary sees
    the signer log plus one unblinded credential and must name its owner.
    The adversary's best move: exact-match the credential against logged
    blinded values (wins instantly under broken blinding), else guess.
    """
    hf = HealthFacility(keypair, registry=("alice", "bob"))
    e, n = hf.public
    requesters = ("alice", "bob")
    correct = 0
    for trial in range(trials):
        creds = []
        log_start = len(hf.sign_log)
        for label in requesters:
            msg = gen_report_message(n)
            blinded, unblinder = blind(msg.m, (e, n), r=forced_r)
            signed = hf.hf_sign(blinded, label, float(trial))
            creds.append((msg.m, unblind(signed, unblinder, n)))
        entries = hf.sign_log[log_start:]
        secret = int(rng.integers(2))
        m_seen, _sigma = creds[secret]
        guess = None
        for which, entry in enumerate(entries):
            if entry.blinded == m_seen:
                guess = which
                break
        if guess is None:
            guess = int(rng.integers(2))
        correct += int(guess == secret)
    return correct / trials


def run_brutus(seed: int = 1401, fast: bool = False, trials: int = 1000) -> AttackReport:
    bits = 512 if fast else 1024
    keypair = generate_signing_keypair(bits)
    rng = np.random.Generator(np.random.PCG64(seed))
    accuracy = _brutus_game(keypair, trials, rng)

    control_rng = np.random.Generator(np.random.PCG64(seed + 1))
    control_accuracy = _brutus_game(keypair, min(200, trials), control_rng, forced_r=1)

    return AttackReport(
        attack="Brutus",
        outcome="resists" if 0.45 <= accuracy <= 0.55 else "vulnerable",
        control_ok=control_accuracy == 1.0,
        evidence={
            "trials": trials,
            "accuracy": accuracy,
            "control_accuracy": control_accuracy,
            "rsa_bits": bits,
        },
    )


# -- Matteotti ---------------------------------------------------------------


def run_matteotti(seed: int = 1501, fast: bool = False) -> AttackReport:
    """Malicious back-end invents an alert pair for the victim."""
    config = WorldConfig(
        seed=seed,
        duration_slots=3,
        region=(0.0, 0.0, 100.0, 100.0),
        agents=(AgentSpec("victim", (10.0, 10.0)),),
        **_crypto_overrides(fast),
    )
    world = World(config)
    world.run()
    victim = world.agent_by_label("victim")
    baseline_alerted = victim.alerted

    below_total, below_alerted = victim.process_alerts(
        [AlertPair(victim.current_pseudonym, 0.3)]
    )
    above_total, above_alerted = victim.process_alerts(
        [AlertPair(victim.current_pseudonym, 0.9)]
    )
    return AttackReport(
        attack="Matteotti",
        outcome="vulnerable" if above_alerted else "resists",
        control_ok=(not baseline_alerted) and (not below_alerted),
        evidence={
            "baseline_alerted": baseline_alerted,
            "below_threshold_total": below_total,
            "below_threshold_alerted": below_alerted,
            "forged_total": above_total,
            "forged_alerted": above_alerted,
        },
    )


# -- Missile -----------------------------------------------------------------


def _beacon_bytes_at(pos: Point, lattice, locked: bool = True) -> bytes:
    anchor = cell_of(pos, lattice, Lattice.A)
    coord = to_polar(pos, centroid(anchor, lattice).position)
    return Beacon(locked, anchor, coord).to_bytes()


def run_missile(seed: int = 1601, fast: bool = False) -> AttackReport:
    """Distant infected attacker beams amplified forged beacons at a victim."""
    config = WorldConfig(
        seed=seed,
        duration_slots=6,
        region=(0.0, 0.0, 600.0, 600.0),
        sigma_gps=3.0,
        agents=(
            AgentSpec("victim", (0.0, 0.0)),
            AgentSpec("attacker", (500.0, 0.0), infected=True, report_slot=4),
            AgentSpec("companion", (500.8, 0.0)),
        ),
        **_crypto_overrides(fast),
    )
    world = World(config)
    fake_near = _beacon_bytes_at(Point(1.0, 0.0), world.lattice)
    fake_far = _beacon_bytes_at(Point(500.0, 0.0), world.lattice)
    for slot in range(1, 5):
        world.inject_beacon(slot, "victim", fake_near, 1.0)
        world.inject_beacon(slot, "victim", fake_far, 1.0)
    world.run()
    victim = world.agent_by_label("victim")

    control_config = WorldConfig(
        seed=seed + 1,
        duration_slots=6,
        region=(0.0, 0.0, 600.0, 600.0),
        sigma_gps=3.0,
        agents=(
            AgentSpec("victim", (0.0, 0.0)),
            AgentSpec("attacker", (0.8, 0.0), infected=True, report_slot=4),
        ),
        **_crypto_overrides(fast),
    )
    control_world = World(control_config)
    control_world.run()
    control_victim = control_world.agent_by_label("victim")

    return AttackReport(
        attack="Missile",
        outcome="resists" if not victim.alerted else "vulnerable",
        control_ok=control_victim.alerted,
        evidence={
            "victim_total_risk": victim.total_risk,
            "victim_alerted": victim.alerted,
            "guard_drops": world.guard_drops,
            "injected_frames": 8,
            "control_victim_alerted": control_victim.alerted,
        },
    )


# -- Fregoli -----------------------------------------------------------------


def _fregoli_config(seed: int, fast: bool) -> WorldConfig:
    return WorldConfig(
        seed=seed,
        duration_slots=7,
        region=(0.0, 0.0, 200.0, 200.0),
        sigma_gps=3.0,
        agents=(
            AgentSpec("victim", (0.0, 0.0)),
            AgentSpec("adversary", (1.0, 0.0)),
            AgentSpec("infected", (100.0, 100.0), infected=True, report_slot=5),
            AgentSpec("companion", (100.8, 100.0)),
        ),
        **_crypto_overrides(fast),
    )


def _victim_alert_trace(log: ScenarioLog, label: str) -> list[tuple]:
    return [
        (rec["k"], rec["total"], rec["alerted"])
        for rec in log.events("alert")
        if rec["a"] == label
    ]


def run_fregoli(seed: int = 1701, fast: bool = False) -> AttackReport:
    """Replay captured beacons; check nobody's alert outcome moves."""
    baseline = World(_fregoli_config(seed, fast))
    baseline.run()
    captured = {
        rec["a"]: bytes.fromhex(rec["bytes"])
        for rec in baseline.log.events("beacon")
        if rec["k"] == 0
    }

    attack = World(_fregoli_config(seed, fast))
    for slot in range(1, 5):
        # adversary replays the infected user's frames at the victim and
        # the victim's frames back at the infected user
        attack.inject_beacon(slot, "victim", captured["infected"], 1.0)
        attack.inject_beacon(slot, "infected", captured["victim"], 1.0)
    attack.run()

    diffs = []
    for label in ("victim", "adversary"):
        base_trace = _victim_alert_trace(baseline.log, label)
        attack_trace = _victim_alert_trace(attack.log, label)
        if base_trace != attack_trace:
            diffs.append(label)

    # control: real proximity (victim & adversary stand 1 m apart) does
    # produce a server-side contact pair in the same scenario
    pseuds = _pseudonyms_by_label(baseline.log)
    pair_found = False
    for a, b in baseline.server.bursts:
        owners = set()
        for label, values in pseuds.items():
            if a.hex() in values or b.hex() in values:
                owners.add(label)
        if owners == {"victim", "adversary"}:
            pair_found = True
            break

    return AttackReport(
        attack="Fregoli",
        outcome="resists" if not diffs else "vulnerable",
        control_ok=pair_found,
        evidence={
            "replayed_frames": 8,
            "alert_trace_diffs": diffs,
            "baseline_bursts": len(baseline.server.bursts),
            "attack_bursts": len(attack.server.bursts),
        },
    )


# -- Battleship --------------------------------------------------------------


def _battleship_world(seed: int, fast: bool, salt_bits: int = 128, region_side: float = 1000.0) -> World:
    agents = (
        AgentSpec("w1", (200.0, 200.0)),
        AgentSpec("w2", (201.0, 200.0)),
        AgentSpec("w3", (600.0, 450.0)),
        AgentSpec("w4", (333.0, 777.0)),
    )
    scale = region_side / 1000.0
    scaled = tuple(
        AgentSpec(a.label, (a.start[0] * scale, a.start[1] * scale)) for a in agents
    )
    config = WorldConfig(
        seed=seed,
        duration_slots=4,
        region=(0.0, 0.0, region_side, region_side),
        salt_bits=salt_bits,
        agents=scaled,
        **_crypto_overrides(fast),
    )
    world = World(config)
    world.run()
    return world


def _recovery_with_dictionary(world: World, dictionary_tags) -> float:
    reports = world.log.events("report")
    if not reports:
        return 0.0
    hits = sum(1 for rec in reports if (world.provider.salt_epoch(rec["k"]), rec["tag"]) in dictionary_tags)
    return hits / len(reports)


def run_battleship(seed: int = 1801, fast: bool = False, guess_budget: int = 10**6) -> AttackReport:
    world = _battleship_world(seed, fast)
    provider = world.provider
    cells = _coverage_cells(provider)
    reports = world.log.events("report")
    epochs = {provider.salt_epoch(rec["k"]) for rec in reports}

    # colluding provider: full dictionary per epoch
    known = set()
    for epoch in epochs:
        slot = epoch * provider.salt_rotation_slots
        for cell in cells:
            known.add((epoch, cell_tag(cell, provider.salt_for_cell(cell, slot)).hex()))
    known_rate = _recovery_with_dictionary(world, known)

    # honest provider: random (salt, cell) guesses against the tag set
    tag_set = {rec["tag"] for rec in reports}
    rng = np.random.Generator(np.random.PCG64(seed))
    side = 2.0 * provider.lattice.d
    span = int(world.config.region[2] / side) + 2
    cell_choices = rng.integers(-1, span, size=(guess_budget, 2))
    lattice_bits = rng.integers(0, 2, size=guess_budget)
    salt_blob = rng.bytes(16 * guess_budget)
    hits = 0
    for g in range(guess_budget):
        cell = CellId(Lattice(int(lattice_bits[g])), int(cell_choices[g, 0]), int(cell_choices[g, 1]))
        salt = salt_blob[16 * g : 16 * g + 16]
        tag = hashlib.sha256(cell_id_to_bytes(cell) + salt).hexdigest()
        if tag in tag_set:
            hits += 1
    unknown_rate = hits / len(reports) if reports else 0.0

    # weakened 8-bit salt: enumerating all 256 values must start working
    weak_world = _battleship_world(seed + 1, fast, salt_bits=8, region_side=200.0)
    weak_cells = _coverage_cells(weak_world.provider)
    weak_reports = weak_world.log.events("report")
    weak_dictionary = set()
    for value in range(256):
        salt = value.to_bytes(16, "big")
        for cell in weak_cells:
            weak_dictionary.add(cell_tag(cell, salt).hex())
    weak_hits = sum(1 for rec in weak_reports if rec["tag"] in weak_dictionary)
    weak_rate = weak_hits / len(weak_reports) if weak_reports else 0.0

    return AttackReport(
        attack="Battleship",
        outcome="resists" if unknown_rate == 0.0 else "vulnerable",
        control_ok=known_rate == 1.0 and weak_rate > 0.0,
        evidence={
            "candidate_cells": len(cells),
            "known_salt_recovery": known_rate,
            "guesses": guess_budget,
            "unknown_salt_recovery": unknown_rate,
            "weak_salt_bits": 8,
            "weak_salt_recovery": weak_rate,
        },
    )


# -- driver ------------------------------------------------------------------

_RUNNERS = {
    "Paparazzi": run_paparazzi,
    "Orwell": run_orwell,
    "Brutus": run_brutus,
    "Gossip": run_gossip,
    "Matteotti": run_matteotti,
    "Missile": run_missile,
    "Fregoli": run_fregoli,
    "Battleship": run_battleship,
}


def run_attacks(names: Sequence[str], seed: int = 1000, fast: bool = False) -> list[AttackReport]:
    reports = []
    for offset, name in enumerate(names):
        runner = _RUNNERS.get(name)
        if runner is None:
            raise KeyError(f"unknown attack {name!r}; known: {', '.join(ATTACK_ORDER)}")
        reports.append(runner(seed=seed + 100 * (offset + 1), fast=fast))
    return reports


def run_all(seed: int = 1000, fast: bool = False) -> list[AttackReport]:
    return run_attacks(ATTACK_ORDER, seed=seed, fast=fast)


def render_table(reports: Sequence[AttackReport]) -> str:
    rows = [("attack", "outcome", "expected", "match", "control")]
    for rep in reports:
        rows.append(
            (
                rep.attack,
                rep.outcome,
                rep.expected,
                "yes" if rep.matches_expected else "NO",
                "ok" if rep.control_ok else "FAILED",
            )
        )
    widths = [max(len(r[c]) for r in rows) for c in range(5)]
    lines = []
    for idx, row in enumerate(rows):
        lines.append("  ".join(cell.ljust(widths[c]) for c, cell in enumerate(row)).rstrip())
        if idx == 0:
            lines.append("  ".join("-" * widths[c] for c in range(5)))
    return "\n".join(lines)
