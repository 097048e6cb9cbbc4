"""Device-side behavior: rotation, reports, alerts, positive flow."""

import math
import struct

import numpy as np
import pytest

from celltrace.client import (
    AlertPair,
    ClientConfig,
    LocationReport,
    REPORT_PAYLOAD_BYTES,
    UserAgent,
    report_from_bytes,
    report_to_bytes,
    total_risk_sum,
)
from celltrace.crypto import cell_tag, generate_signing_keypair
from celltrace.geometry import (
    LatticeConfig,
    Lattice,
    Point,
    PolarCoord,
    cells_of,
    centroid,
    to_polar,
)
from celltrace.issuers import HealthFacility
from celltrace.pnp import PnpState

LATTICE = LatticeConfig(d=10.0)


def make_agent(label="dev", **cfg):
    config = ClientConfig(lattice=LATTICE, **cfg)
    return UserAgent(label, config, np.random.Generator(np.random.PCG64(5)))


# -- wire format ---------------------------------------------------------------


def test_report_payload_layout():
    rep = LocationReport(b"\xaa" * 32, b"\xbb" * 16, PolarCoord(3.5, -1.25))
    raw = report_to_bytes(rep)
    assert len(raw) == REPORT_PAYLOAD_BYTES == 64
    assert raw[:32] == rep.tag
    assert raw[32:48] == rep.pseudonym
    assert raw[48:56] == struct.pack("<d", 3.5)
    assert raw[56:64] == struct.pack("<d", -1.25)
    assert report_from_bytes(raw) == rep


def test_report_payload_strict_length():
    raw = report_to_bytes(LocationReport(b"\x00" * 32, b"\x00" * 16, PolarCoord(0, 0)))
    with pytest.raises(ValueError):
        report_from_bytes(raw[:-1])
    with pytest.raises(ValueError):
        report_from_bytes(raw + b"\x00")


# -- pseudonym rotation -----------------------------------------------------------


def test_first_rotation_issues_pseudonym():
    agent = make_agent()
    assert agent.current_pseudonym is None
    agent.rotate_pseudonym(0)
    first = agent.current_pseudonym
    assert first is not None and len(first) == 16
    assert agent.known_pseudonyms() == [first]


def test_rotation_schedule():
    agent = make_agent(rotation_slots=3)
    seen = []
    for slot in range(9):
        agent.rotate_pseudonym(slot)
        seen.append(agent.current_pseudonym)
    # fresh value on slots 0, 3, 6; stable in between
    assert seen[0] == seen[1] == seen[2]
    assert seen[3] == seen[4] == seen[5] != seen[0]
    assert seen[6] != seen[3]
    spans = agent.pseudonym_history
    assert [(s.first_slot, s.last_slot) for s in spans] == [(0, 2), (3, 5)]
    assert agent.known_pseudonyms() == [seen[0], seen[3], seen[6]]


def test_retention_purges_old_spans():
    agent = make_agent(rotation_slots=1, retention_slots=3)
    for slot in range(8):
        agent.rotate_pseudonym(slot)
    # spans with last_slot < 7 - 3 are gone
    assert all(s.last_slot >= 4 for s in agent.pseudonym_history)
    assert len(agent.known_pseudonyms()) == 4


def test_seeded_agents_draw_identical_pseudonyms():
    a, b = make_agent("a"), make_agent("b")
    a.rotate_pseudonym(0)
    b.rotate_pseudonym(0)
    assert a.current_pseudonym == b.current_pseudonym  # same seeded stream


# -- reports ------------------------------------------------------------------------


class StaticSalts:
    def __init__(self, value=b"\x11" * 16, missing=False):
        self.value = value
        self.missing = missing

    def __call__(self, cell, slot):
        return None if self.missing else self.value


def test_build_reports_covers_both_cells():
    agent = make_agent()
    agent.rotate_pseudonym(0)
    estimate = Point(33.0, 47.0)
    salts = StaticSalts()
    out = agent.build_reports(estimate, salts, 0)
    assert [cell for cell, _ in out] == list(cells_of(estimate, LATTICE))
    for cell, report in out:
        assert report.tag == cell_tag(cell, salts.value)
        assert report.pseudonym == agent.current_pseudonym
        pole = centroid(cell, LATTICE).position
        expected = to_polar(estimate, pole)
        assert math.isclose(report.coord.rho, expected.rho, abs_tol=1e-12)
        assert math.isclose(report.coord.theta, expected.theta, abs_tol=1e-12)


def test_no_salt_no_reports():
    agent = make_agent()
    agent.rotate_pseudonym(0)
    assert agent.build_reports(Point(5.0, 5.0), StaticSalts(missing=True), 0) == []


def test_reports_require_pseudonym():
    agent = make_agent()
    with pytest.raises(RuntimeError):
        agent.build_reports(Point(0.0, 0.0), StaticSalts(), 0)


def test_position_estimate_prefers_lock():
    agent = make_agent()
    raw = Point(10.0, 10.0)
    assert agent.position_estimate(raw) == raw
    agent.pnp = PnpState(True, Point(11.0, 10.0), 0.0, raw)
    assert agent.position_estimate(raw) == Point(11.0, 10.0)


# -- alerts -------------------------------------------------------------------------


def test_alerts_match_only_own_pseudonyms():
    agent = make_agent()
    agent.rotate_pseudonym(0)
    mine = agent.current_pseudonym
    pairs = [AlertPair(b"\x99" * 16, 0.9), AlertPair(mine, 0.3)]
    total, alerted = agent.process_alerts(pairs)
    assert total == pytest.approx(0.3)
    assert not alerted  # 0.3 < 0.5 threshold
    assert not agent.alerted


def test_alert_threshold_inclusive_and_sticky():
    agent = make_agent()
    agent.rotate_pseudonym(0)
    mine = agent.current_pseudonym
    total, alerted = agent.process_alerts([AlertPair(mine, 0.5)])
    assert alerted and agent.alerted  # >= threshold fires
    # a later quiet broadcast does not clear the flag
    total, alerted = agent.process_alerts([])
    assert total == 0.0 and not alerted
    assert agent.alerted


def test_alert_matches_archived_pseudonyms():
    agent = make_agent(rotation_slots=1)
    agent.rotate_pseudonym(0)
    old = agent.current_pseudonym
    agent.rotate_pseudonym(1)
    assert old != agent.current_pseudonym
    total, alerted = agent.process_alerts([AlertPair(old, 0.7)])
    assert alerted


def test_total_risk_sum_default():
    assert total_risk_sum([0.25, 0.5]) == pytest.approx(0.75)
    assert total_risk_sum([]) == 0.0


# -- positive flow -------------------------------------------------------------------


class RecordingServer:
    def __init__(self):
        self.calls = []

    def process_positive(self, cred, pseudonyms):
        self.calls.append((cred, list(pseudonyms)))
        return "bundle"


def test_report_positive_flow():
    keypair = generate_signing_keypair(512)
    hf = HealthFacility(keypair, registry=("dev",))
    agent = make_agent("dev", rotation_slots=1)
    agent.rotate_pseudonym(0)
    agent.rotate_pseudonym(1)
    server = RecordingServer()
    out = agent.report_positive(hf, server, now=9.0)
    assert out == "bundle"
    (cred, pseudonyms), = server.calls
    # the submitted credential verifies and covers the full retention window
    from celltrace.crypto import verify_report

    assert verify_report(cred, keypair.public).accepted
    assert pseudonyms == agent.known_pseudonyms()
    # the signer saw one blinded request from this device, not the credential
    assert len(hf.sign_log) == 1
    assert hf.sign_log[0].requester == "dev"
    assert hf.sign_log[0].blinded != cred.m


def test_report_positive_requires_registration():
    from celltrace.issuers import AuthorizationError

    hf = HealthFacility(generate_signing_keypair(512))
    agent = make_agent("stranger")
    agent.rotate_pseudonym(0)
    with pytest.raises(AuthorizationError):
        agent.report_positive(hf, RecordingServer())
