"""Acceptance gate: every headline guarantee, one pass/fail line each.

Run with ``pytest tests/test_acceptance.py -s`` to see the summary lines.
Each test exercises one shipped guarantee end to end at its stated
tolerance; together they are the release checklist for this package.
"""

import json
import math
import pathlib
import time

import numpy as np
import pytest

from celltrace.attacks import ATTACK_ORDER, run_battleship, run_brutus
from celltrace.cli import main as cli_main
from celltrace.config import load_config
from celltrace.crypto import (
    blind,
    gen_report_message,
    generate_signing_keypair,
    sign_blinded,
    unblind,
    verify_report,
    ReplayLedger,
    ReportCredential,
)
from celltrace.geometry import (
    LatticeConfig,
    Point,
    cells_of,
    euclid,
    shared_cells,
)
from celltrace.oracle import replay
from celltrace.pnp import Beacon, PeerSample, negotiate
from celltrace.simnet import AgentSpec, MobilitySpec, ScenarioLog, World, WorldConfig

ROOT = pathlib.Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"


def report(line: str):
    print(f"\n[acceptance] {line}")


# -- 1. security table ----------------------------------------------------------------


def test_criterion_1_security_table(tmp_path):
    t0 = time.perf_counter()
    out = tmp_path / "out"
    code = cli_main(
        [
            "run",
            "--config",
            str(CONFIGS / "security_table.ini"),
            "--out",
            str(out),
            "--attacks",
            "all",
        ]
    )
    elapsed = time.perf_counter() - t0
    assert code == 0
    rows = json.loads((out / "summary.json").read_text())["attacks"]["table"]
    outcomes = {r["attack"]: r["outcome"] for r in rows}
    assert set(outcomes) == set(ATTACK_ORDER)
    assert outcomes["Matteotti"] == "vulnerable"
    resists = [a for a, o in outcomes.items() if o == "resists"]
    assert len(resists) == 7
    assert all(r["outcome"] == r["expected"] for r in rows)
    assert all(r["control_ok"] for r in rows), "a detector failed its positive control"
    assert elapsed < 300.0
    report(
        f"criterion 1 PASS: 7 resists + Matteotti vulnerable, all 8 controls ok, "
        f"{elapsed:.1f}s (< 300s)"
    )


# -- 2. negotiated distances ------------------------------------------------------


def test_criterion_2_negotiated_distances():
    lattice = LatticeConfig(d=10.0)
    rng = np.random.Generator(np.random.PCG64(20250201))
    worst_rel = 0.0
    pnp_errors = []
    gps_errors = []
    for trial in range(1000):
        a = Point(*rng.uniform(100.0, 140.0, 2))
        r = float(rng.uniform(0.1, 8.0))
        phi = float(rng.uniform(-math.pi, math.pi))
        b = Point(a.x + r * math.cos(phi), a.y + r * math.sin(phi))
        gps_a = Point(*(np.array([a.x, a.y]) + rng.normal(0.0, 5.0, 2)))
        gps_b = Point(*(np.array([b.x, b.y]) + rng.normal(0.0, 5.0, 2)))
        d_bl = max(r * math.exp(float(rng.normal(0.0, 0.1))), 0.05)

        peer_locked = bool(rng.integers(0, 2))
        cell = cells_of(gps_b, lattice)[int(rng.integers(0, 2))]
        from celltrace.geometry import centroid, to_polar

        beacon = Beacon(peer_locked, cell, to_polar(gps_b, centroid(cell, lattice).position))
        result = negotiate(gps_a, 0.0, [PeerSample(beacon, d_bl)], lattice, ble_range=10.0)
        if result.peer_index is None:
            continue  # GPS noise pushed the pair past the plausibility guard
        other = gps_b if result.peer_position is None else result.peer_position
        negotiated = euclid(result.state.position, other)
        worst_rel = max(worst_rel, abs(negotiated - d_bl) / d_bl)
        pnp_errors.append(abs(d_bl - r))
        gps_errors.append(abs(euclid(gps_a, gps_b) - r))

    assert len(pnp_errors) > 900  # the guard may drop a few extreme draws
    assert worst_rel < 1e-9
    reduction = 1.0 - (sum(pnp_errors) / len(pnp_errors)) / (sum(gps_errors) / len(gps_errors))
    assert reduction >= 0.5
    report(
        f"criterion 2 PASS: {len(pnp_errors)} encounters, worst relative gap "
        f"{worst_rel:.2e} (< 1e-9), distance-error reduction {reduction:.1%} (>= 50%)"
    )


# -- 3. replay equivalence ----------------------------------------------------------


def random_scenario(rng) -> WorldConfig:
    n = int(rng.integers(5, 51))
    slots = int(rng.integers(10, 61))
    side = float(rng.uniform(80.0, 400.0))
    agents = []
    cluster = rng.uniform(0.3 * side, 0.7 * side, 2)
    for i in range(n):
        if rng.random() < 0.5:
            start = cluster + rng.normal(0.0, 4.0, 2)
        else:
            start = rng.uniform(0.0, side, 2)
        kind = ("stationary", "random_walk", "waypoint")[int(rng.integers(0, 3))]
        if kind == "waypoint":
            mobility = MobilitySpec(
                kind="waypoint",
                speed=float(rng.uniform(0.5, 2.0)),
                waypoints=(tuple(rng.uniform(0.0, side, 2)),),
            )
        elif kind == "random_walk":
            mobility = MobilitySpec(kind="random_walk", step_sigma=float(rng.uniform(0.5, 3.0)))
        else:
            mobility = MobilitySpec()
        infected = rng.random() < 0.15
        agents.append(
            AgentSpec(
                label=f"a{i:02d}",
                start=(float(start[0]), float(start[1])),
                mobility=mobility,
                infected=infected,
                report_slot=int(rng.integers(slots // 2, slots)) if infected else None,
            )
        )
    obstacles = ()
    if rng.random() < 0.4:
        x = float(rng.uniform(0.2 * side, 0.8 * side))
        obstacles = ((x, 0.0, x, side),)
    return WorldConfig(
        seed=int(rng.integers(0, 2**31)),
        duration_slots=slots,
        region=(0.0, 0.0, side, side),
        sigma_gps=float(rng.uniform(0.0, 6.0)),
        sigma_bl=float(rng.uniform(0.0, 0.2)),
        rotation_slots=int(rng.integers(2, 20)),
        obstacles=obstacles,
        agents=tuple(agents),
        envelope="transparent",
        rsa_bits=512,
    )


def test_criterion_3_oracle_equivalence():
    rng = np.random.Generator(np.random.PCG64(777))
    t0 = time.perf_counter()
    totals = {"scenarios": 0, "bursts": 0, "alerts": 0, "reports": 0}
    for _ in range(20):
        world = World(random_scenario(rng))
        log = world.run()
        result = replay(log)
        assert result.ok, result.diffs[:5]
        (end,) = log.events("end")
        assert result.counts["bursts"] == end["bursts"]
        totals["scenarios"] += 1
        totals["bursts"] += result.counts["bursts"]
        totals["alerts"] += result.counts["alerts"]
        totals["reports"] += result.counts["reports"]
    elapsed = time.perf_counter() - t0
    assert elapsed < 120.0
    report(
        f"criterion 3 PASS: 20/20 scenarios replayed with zero divergence "
        f"({totals['reports']} reports, {totals['bursts']} bursts, "
        f"{totals['alerts']} alert decisions), {elapsed:.1f}s (< 120s)"
    )


# -- 4. lattice guarantees ---------------------------------------------------------


def test_criterion_4_cell_coverage_and_sharing():
    lattice = LatticeConfig(d=10.0)
    rng = np.random.Generator(np.random.PCG64(40))
    pts = rng.uniform(-1000.0, 1000.0, size=(100_000, 2))
    for x, y in pts:
        a, b = cells_of(Point(float(x), float(y)), lattice)
        assert a.lattice != b.lattice

    def shared_rate(max_dist: float, n: int) -> float:
        hits = 0
        for _ in range(n):
            p = Point(*rng.uniform(-500.0, 500.0, 2))
            r = float(rng.uniform(0.0, max_dist))
            if max_dist == 2.0 and r == 0.0:
                r = 2.0  # keep the band at (0, 2]
            phi = float(rng.uniform(-math.pi, math.pi))
            q = Point(p.x + r * math.cos(phi), p.y + r * math.sin(phi))
            if shared_cells(p, q, lattice):
                hits += 1
        return hits / n

    risk_band = shared_rate(2.0, 50_000)
    full_range = shared_rate(10.0, 50_000)
    assert risk_band >= 0.99
    assert 0.90 <= full_range < 1.0  # the corner-case gap, documented not hidden
    report(
        "criterion 4 PASS: 100000/100000 points in exactly one cell per lattice; "
        f"shared-cell rate {risk_band:.4f} (>= 0.99) at risk-band separations (<= 2 m), "
        f"measured {full_range:.4f} across the full radio range (corner-case gap)"
    )


# -- 5. anonymous credentials -----------------------------------------------------


def test_criterion_5_blind_signature_suite():
    ok = 0
    for i in range(100):
        kp = generate_signing_keypair(512)
        msg = gen_report_message(kp.modulus)
        blinded, unblinder = blind(msg.m, kp.public)
        sigma = unblind(sign_blinded(blinded, kp), unblinder, kp.modulus)
        verdict = verify_report(ReportCredential(msg.m, sigma), kp.public, ReplayLedger())
        ok += verdict.accepted
    assert ok == 100

    brutus = run_brutus(seed=5200, trials=1000, fast=True)
    acc = brutus.evidence["accuracy"]
    assert 0.45 <= acc <= 0.55

    kp = generate_signing_keypair(512)
    ledger = ReplayLedger()
    rejected = 0
    for _ in range(50):
        msg = gen_report_message(kp.modulus)
        blinded, unblinder = blind(msg.m, kp.public)
        cred = ReportCredential(msg.m, unblind(sign_blinded(blinded, kp), unblinder, kp.modulus))
        assert verify_report(cred, kp.public, ledger).accepted
        second = verify_report(cred, kp.public, ledger)
        rejected += (not second.accepted) and second.reason == "replay"
    assert rejected == 50
    report(
        f"criterion 5 PASS: 100/100 keypairs verify the honest flow, signer's "
        f"distinguisher accuracy {acc:.3f} (within 0.50 +/- 0.05), 50/50 replays rejected"
    )


# -- 6. salted-tag dictionary resistance --------------------------------------------


def test_criterion_6_battleship_rates():
    rep = run_battleship(seed=6100, guess_budget=10**6, fast=True)
    ev = rep.evidence
    assert ev["known_salt_recovery"] == 1.0
    assert ev["unknown_salt_recovery"] == 0.0
    assert ev["guesses"] == 10**6
    assert ev["weak_salt_recovery"] > 0.0
    assert rep.outcome == "resists" and rep.control_ok
    report(
        "criterion 6 PASS: known-salt recovery 100%, unknown-salt recovery 0% "
        f"after 10^6 guesses, weakened 8-bit salt recovery "
        f"{ev['weak_salt_recovery']:.0%} (> 0)"
    )


# -- 7. desk-scale determinism -----------------------------------------------------


def test_criterion_7_desk_scale_determinism():
    config = load_config(CONFIGS / "desk_scale.ini")
    assert len(config.agents) == 200 and config.duration_slots == 120

    runs = []
    seconds = []
    last_log = None
    for _ in range(2):
        t0 = time.perf_counter()
        last_log = World(config).run()
        seconds.append(time.perf_counter() - t0)
        runs.append(last_log.dumps())
    assert runs[0] == runs[1]
    assert max(seconds) < 60.0
    positives = [rec for rec in last_log.events("positive") if rec["accepted"]]
    assert len(positives) == 1
    report(
        f"criterion 7 PASS: 200 agents x 120 slots in {seconds[0]:.1f}s and "
        f"{seconds[1]:.1f}s (< 60s each), logs byte-identical, one positive broadcast"
    )


# -- 8. planted end-to-end alert ----------------------------------------------------


def oracle_total_risk(log: ScenarioLog, label: str, d_risk: float) -> float:
    """Recompute one agent's alerted risk from raw log records only."""
    my_pseudonyms = {
        rec["pseud"] for rec in log.events("agent") if rec["a"] == label
    }
    (positive,) = log.events("positive")
    infected_pseudonyms = set(positive["pseuds"])
    report_slot = positive["k"]
    per_pair: dict[tuple[str, str], float] = {}
    for rec in log.events("obs"):
        if rec["k"] > report_slot:
            continue
        pair = (rec["p1"], rec["p2"])
        contribution = max(0.0, 1.0 - rec["d"] / d_risk) ** 2
        per_pair[pair] = per_pair.get(pair, 0.0) + contribution
    total = 0.0
    for (p1, p2), risk in per_pair.items():
        if p1 in infected_pseudonyms and p2 in my_pseudonyms:
            total += risk
        elif p2 in infected_pseudonyms and p1 in my_pseudonyms:
            total += risk
    return total


def test_criterion_8_planted_alert():
    world = World(load_config(CONFIGS / "planted_alert.ini"))
    log = world.run()
    victim = world.agent_by_label("victim")
    bystander = world.agent_by_label("bystander")

    expected = oracle_total_risk(log, "victim", world.config.d_risk)
    assert victim.alerted
    assert expected > 0.0
    assert math.isclose(victim.total_risk, expected, rel_tol=1e-9, abs_tol=1e-12)
    assert bystander.total_risk == 0.0
    assert not bystander.alerted
    assert replay(log).ok
    report(
        f"criterion 8 PASS: victim alerted with risk {victim.total_risk:.6f} == "
        f"independent recomputation within 1e-9, bystander risk exactly 0"
    )
